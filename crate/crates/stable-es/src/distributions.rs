//! Sampling-distribution family for the policy search: Wishart distributions
//! over SPD matrix (and positive scalar) parameters with a reward-driven
//! degrees-of-freedom update, and a multivariate Gaussian over the stacked
//! attractor points updated by MLE.

use crate::spd::{
    multivariate_digamma, multivariate_gamma_ln, symmetrize, MatrixError, SpdMatrix,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Degrees of freedom are capped here; past the recommended terminal range
/// further growth only risks overflow in the multivariate gamma.
pub const NU_CAP: f64 = 1e6;

/// Floor for the reward denominator in the nu update.
pub const REWARD_DENOM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DistError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("degrees of freedom {nu} must exceed D - 1 = {bound}")]
    InvalidDof { nu: f64, bound: f64 },
    #[error("empty elite set")]
    EmptyElites,
    #[error("elite {index} has dimension {got}, expected {expected}")]
    EliteDimMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("elite mean reward {r_elite} is below the population mean {r_all}")]
    EliteBelowMean { r_elite: f64, r_all: f64 },
    #[error("proportionality constants must be positive: gamma = {gamma}, beta = {beta}")]
    NonPositiveGain { gamma: f64, beta: f64 },
    #[error("need at least 2 samples for MLE, got {got}")]
    TooFewSamples { got: usize },
    #[error("sample {index} has length {got}, expected {expected}")]
    SampleDimMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("mean vector has a non-finite entry")]
    NonFiniteMean,
    #[error("covariance is not positive definite; increase the jitter")]
    DegenerateCovariance(#[source] MatrixError),
    #[error("degenerate nu grid: need at least 2 points strictly inside (D+1, nu_max]")]
    DegenerateGrid,
}

/// How the relative reward gain `(R_e - R_b) / denom` is normalized in the
/// nu update. The literal form divides by `R_b` itself, which flips sign for
/// cost-style (negative) rewards; the magnitude form keeps the gain
/// nonnegative whenever `R_e >= R_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardDenom {
    /// `max(|R_b|, 1e-8)` — sign-safe for negative rewards.
    #[default]
    Magnitude,
    /// `R_b` exactly as written.
    Literal,
}

impl RewardDenom {
    pub fn gain(self, r_all: f64, r_elite: f64) -> f64 {
        match self {
            RewardDenom::Magnitude => (r_elite - r_all) / r_all.abs().max(REWARD_DENOM_EPS),
            RewardDenom::Literal => (r_elite - r_all) / r_all,
        }
    }
}

/// Wishart distribution over SPD matrices, scale `W` and degrees of
/// freedom `nu`; the mean is `nu * W`. The 1x1 case doubles as the Gamma
/// distribution used for positive scalar parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WishartDist {
    scale: SpdMatrix,
    nu: f64,
}

impl WishartDist {
    pub fn new(scale: SpdMatrix, nu: f64) -> Result<Self, DistError> {
        let bound = scale.dim() as f64 - 1.0;
        if !(nu > bound) || !nu.is_finite() {
            return Err(DistError::InvalidDof { nu, bound });
        }
        Ok(Self { scale, nu })
    }

    /// 1-dimensional case over positive scalars.
    pub fn scalar(w: f64, nu: f64) -> Result<Self, DistError> {
        Self::new(SpdMatrix::scalar(w)?, nu)
    }

    pub fn dim(&self) -> usize {
        self.scale.dim()
    }

    pub fn scale(&self) -> &SpdMatrix {
        &self.scale
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn mean(&self) -> DMatrix<f64> {
        self.scale.matrix() * self.nu
    }

    /// Draws one SPD matrix by the Bartlett decomposition: a lower-triangular
    /// factor with chi-distributed diagonal and standard-normal subdiagonal,
    /// conjugated by the Cholesky factor of the scale. Exact for real
    /// `nu > D - 1`.
    ///
    /// Draws are strictly SPD with probability 1, and the result is
    /// re-validated. As `nu` approaches the `D - 1` boundary the smallest
    /// chi-square degree of freedom vanishes and draws become numerically
    /// rank-deficient, so validation can reject them; the initializers keep
    /// `nu >= D + 1`, where this has negligible probability.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SpdMatrix, DistError> {
        let d = self.dim();
        let l_scale = self.scale.cholesky()?;
        let mut a = DMatrix::zeros(d, d);
        for i in 0..d {
            let dof = self.nu - i as f64;
            let chi2 = ChiSquared::new(dof).expect("dof > 0 by construction");
            a[(i, i)] = chi2.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = StandardNormal.sample(rng);
            }
        }
        let f = &l_scale * a;
        let sample = &f * f.transpose();
        Ok(SpdMatrix::new(symmetrize(&sample))?)
    }

    /// Closed-form differential entropy.
    pub fn entropy(&self) -> f64 {
        let d = self.dim() as f64;
        let dim = self.dim();
        let ln_det_w = self.scale.ln_det().expect("validated SPD");
        let half_nu = self.nu / 2.0;
        let ln_gamma_d = multivariate_gamma_ln(half_nu, dim).expect("nu > D - 1");
        let digamma_d = multivariate_digamma(half_nu, dim).expect("nu > D - 1");
        (d + 1.0) / 2.0 * ln_det_w + d * (d + 1.0) / 2.0 * std::f64::consts::LN_2 + ln_gamma_d
            - (self.nu - d - 1.0) / 2.0 * digamma_d
            + self.nu * d / 2.0
    }

    /// One search-iteration update: `nu` grows with the relative reward gain
    /// of the elites over the population, and the scale becomes the elite
    /// average scaled by `1/nu`, so the distribution mean tracks the elite
    /// average exactly. `nu` never decreases while `R_e >= R_b` and is
    /// capped at [`NU_CAP`].
    pub fn update(
        &self,
        elites: &[SpdMatrix],
        r_all: f64,
        r_elite: f64,
        gamma: f64,
        beta: f64,
        denom: RewardDenom,
    ) -> Result<WishartDist, DistError> {
        if elites.is_empty() {
            return Err(DistError::EmptyElites);
        }
        if !(gamma > 0.0 && beta > 0.0) {
            return Err(DistError::NonPositiveGain { gamma, beta });
        }
        let d = self.dim();
        for (index, e) in elites.iter().enumerate() {
            if e.dim() != d {
                return Err(DistError::EliteDimMismatch {
                    index,
                    got: e.dim(),
                    expected: d,
                });
            }
        }
        // Sub-ulp inversions happen when every return is identical; treat
        // those as the exact convergence boundary.
        let tol = 1e-9 * r_all.abs().max(1.0);
        let (r_all, r_elite) = if r_elite < r_all {
            if r_all - r_elite <= tol {
                (r_all, r_all)
            } else {
                return Err(DistError::EliteBelowMean { r_elite, r_all });
            }
        } else {
            (r_all, r_elite)
        };

        let gain = denom.gain(r_all, r_elite);
        let bound = d as f64 - 1.0;
        let nu_raw = self.nu * (gamma * beta * gain).exp();
        let nu = match denom {
            // Monotone by construction; the max guards the cap boundary.
            RewardDenom::Magnitude => nu_raw.min(NU_CAP).max(self.nu),
            // The literal form may shrink nu for negative rewards; keep the
            // distribution valid.
            RewardDenom::Literal => nu_raw.min(NU_CAP).max(bound + 1e-6),
        };

        // Scaling the elite average by the updated nu keeps the refit mean
        // (nu * W) exactly at the elite average; scaling by the old nu would
        // inflate the mean by exp(gamma*beta*gain) every iteration.
        let mut acc = DMatrix::zeros(d, d);
        for e in elites {
            acc += e.matrix();
        }
        acc /= elites.len() as f64 * nu;
        let scale = SpdMatrix::new(symmetrize(&acc))?;
        WishartDist::new(scale, nu)
    }
}

impl Serialize for WishartDist {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        WishartRepr {
            scale: self.scale.clone(),
            nu: self.nu,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WishartDist {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = WishartRepr::deserialize(deserializer)?;
        WishartDist::new(repr.scale, repr.nu).map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct WishartRepr {
    scale: SpdMatrix,
    nu: f64,
}

/// Multivariate Gaussian over the stacked attractor coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: SpdMatrix,
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self, DistError> {
        if mean.len() != cov.dim() {
            return Err(DistError::SampleDimMismatch {
                index: 0,
                got: mean.len(),
                expected: cov.dim(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(DistError::NonFiniteMean);
        }
        Ok(Self { mean, cov })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            cov: SpdMatrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>, DistError> {
        let l = self.cov.cholesky()?;
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        Ok(&self.mean + l * z)
    }

    /// Maximum-likelihood fit: sample mean and biased (1/N) covariance plus
    /// `jitter * I`. A few elites make the unbiased estimator degenerate, so
    /// the jitter is what keeps the result SPD.
    pub fn mle(samples: &[DVector<f64>], jitter: f64) -> Result<GaussianDist, DistError> {
        if samples.len() < 2 {
            return Err(DistError::TooFewSamples { got: samples.len() });
        }
        let dim = samples[0].len();
        for (index, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(DistError::SampleDimMismatch {
                    index,
                    got: s.len(),
                    expected: dim,
                });
            }
        }
        let n = samples.len() as f64;
        let mut mean = DVector::zeros(dim);
        for s in samples {
            mean += s;
        }
        mean /= n;
        let mut cov = DMatrix::zeros(dim, dim);
        for s in samples {
            let d = s - &mean;
            cov += &d * d.transpose();
        }
        cov /= n;
        cov += DMatrix::identity(dim, dim) * jitter;
        let cov = SpdMatrix::new(symmetrize(&cov)).map_err(DistError::DegenerateCovariance)?;
        GaussianDist::new(mean, cov)
    }
}

impl Serialize for GaussianDist {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        GaussianRepr {
            mean: self.mean.iter().copied().collect(),
            cov: self.cov.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GaussianDist {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = GaussianRepr::deserialize(deserializer)?;
        GaussianDist::new(DVector::from_vec(repr.mean), repr.cov).map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct GaussianRepr {
    mean: Vec<f64>,
    cov: SpdMatrix,
}

/// One point of the entropy-vs-nu scan at fixed mean.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EntropyScanPoint {
    pub nu: f64,
    pub ln_nu: f64,
    pub entropy: f64,
}

/// Least-squares fit of `ln nu = a * H + b`; `gamma = -a`.
#[derive(Debug, Clone, Copy)]
pub struct GammaFit {
    pub gamma: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub const GAMMA_GRID_POINTS: usize = 40;
pub const GAMMA_NU_MAX: f64 = 1e4;

/// Entropy of `Wishart(mean / nu, nu)` over a log-spaced nu grid in
/// `(D+1, nu_max]`, holding the distribution mean fixed.
pub fn entropy_scan(
    mean: &SpdMatrix,
    points: usize,
    nu_max: f64,
) -> Result<Vec<EntropyScanPoint>, DistError> {
    let d = mean.dim() as f64;
    let nu_min = (d + 1.0) * 1.05;
    if points < 2 || !(nu_max > nu_min) {
        return Err(DistError::DegenerateGrid);
    }
    let (ln_min, ln_max) = (nu_min.ln(), nu_max.ln());
    let mut out = Vec::with_capacity(points);
    for i in 0..points {
        let ln_nu = ln_min + (ln_max - ln_min) * i as f64 / (points - 1) as f64;
        let nu = ln_nu.exp();
        let scale = SpdMatrix::new(mean.matrix() / nu)?;
        let entropy = WishartDist::new(scale, nu)?.entropy();
        out.push(EntropyScanPoint { nu, ln_nu, entropy });
    }
    Ok(out)
}

pub fn fit_gamma(scan: &[EntropyScanPoint]) -> Result<GammaFit, DistError> {
    if scan.len() < 2 {
        return Err(DistError::DegenerateGrid);
    }
    let n = scan.len() as f64;
    let mean_h = scan.iter().map(|p| p.entropy).sum::<f64>() / n;
    let mean_y = scan.iter().map(|p| p.ln_nu).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for p in scan {
        let dx = p.entropy - mean_h;
        let dy = p.ln_nu - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(DistError::DegenerateGrid);
    }
    let a = sxy / sxx;
    let intercept = mean_y - a * mean_h;
    let r_squared = (sxy * sxy) / (sxx * syy);
    Ok(GammaFit {
        gamma: -a,
        intercept,
        r_squared,
    })
}

/// Estimates the proportionality constant between `ln nu` and entropy for
/// dimension `dim`, using the identity-scaled default mean. The slope only
/// depends on `dim`, so this is deterministic.
pub fn estimate_gamma(dim: usize) -> Result<GammaFit, DistError> {
    estimate_gamma_with_mean(&SpdMatrix::identity(dim))
}

pub fn estimate_gamma_with_mean(mean: &SpdMatrix) -> Result<GammaFit, DistError> {
    let scan = entropy_scan(mean, GAMMA_GRID_POINTS, GAMMA_NU_MAX)?;
    fit_gamma(&scan)
}
