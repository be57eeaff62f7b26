//! The CEM-inspired evolution-strategy loop: sample a population of policies,
//! evaluate them, select elites, refit the attractor Gaussian by MLE and every
//! Wishart factor by the reward-driven update, and iterate to convergence.

use crate::distributions::{
    estimate_gamma, DistError, GaussianDist, RewardDenom, WishartDist,
};
use crate::policy::{ComponentDistribution, PolicyDistribution, PolicyError, PolicyParams};
use crate::spd::SpdMatrix;
use crate::streams::{derive_rng, DOMAIN_ROLLOUT};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("cannot select {requested} elites from a population of {population}")]
    TooManyElites {
        requested: usize,
        population: usize,
    },
    #[error("sample {sample} of iteration {iteration} failed: {message}")]
    Rollout {
        iteration: usize,
        sample: usize,
        message: String,
    },
    #[error("sample {sample} of iteration {iteration} returned a non-finite objective")]
    NonFiniteReturn { iteration: usize, sample: usize },
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Search hyperparameters. Defaults follow the 2D experiments:
/// 15 samples, 3 elites, learning rate 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Samples per iteration (N_s).
    pub population: usize,
    /// Elites per iteration (N_e).
    pub elites: usize,
    /// Learning rate for the degrees-of-freedom update.
    pub beta: f64,
    pub max_iters: usize,
    /// Stop once every Wishart factor's nu reaches this value.
    pub nu_stop: f64,
    /// Stop once the per-iteration success rate reaches this fraction and
    /// the mean return has plateaued.
    pub success_stop: f64,
    /// Plateau means the relative mean-return change over this many
    /// iterations stays below `plateau_rel_tol`.
    pub plateau_window: usize,
    pub plateau_rel_tol: f64,
    /// Diagonal jitter added to the MLE covariance of the attractors.
    pub jitter: f64,
    pub seed: u64,
    pub reward_denom: RewardDenom,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            population: 15,
            elites: 3,
            beta: 1.0,
            max_iters: 100,
            nu_stop: 1e4,
            success_stop: 10.0 / 15.0,
            plateau_window: 5,
            plateau_rel_tol: 0.01,
            jitter: 1e-8,
            seed: 0,
            reward_denom: RewardDenom::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.elites < 1 || self.elites >= self.population {
            return Err(OptimizerError::InvalidConfig(format!(
                "need 1 <= elites < population, got {} / {}",
                self.elites, self.population
            )));
        }
        if !(self.beta > 0.0) {
            return Err(OptimizerError::InvalidConfig(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.jitter >= 0.0) {
            return Err(OptimizerError::InvalidConfig(format!(
                "jitter must be nonnegative, got {}",
                self.jitter
            )));
        }
        Ok(())
    }
}

/// One proportionality constant per distinct parameter dimension: the matrix
/// factors share dim(s), the scalar sharpness factors are one-dimensional.
#[derive(Debug, Clone, Copy)]
pub struct GammaTable {
    pub matrix: f64,
    pub scalar: f64,
}

impl GammaTable {
    pub fn for_dim(dim: usize) -> Result<Self, DistError> {
        Ok(Self {
            matrix: estimate_gamma(dim)?.gamma,
            scalar: estimate_gamma(1)?.gamma,
        })
    }
}

/// Objective value (and task success flag) of one evaluated policy.
pub trait Outcome: Send {
    fn total_return(&self) -> f64;
    fn success(&self) -> bool {
        false
    }
}

impl Outcome for f64 {
    fn total_return(&self) -> f64 {
        *self
    }
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct EvalError(pub String);

/// Anything that can score a sampled policy. Rollout-based environments and
/// synthetic objectives both implement this.
pub trait Objective: Sync {
    type Out: Outcome;
    fn evaluate(&self, policy: &PolicyParams) -> Result<Self::Out, EvalError>;
}

impl<F, O: Outcome> Objective for F
where
    F: Fn(&PolicyParams) -> Result<O, EvalError> + Sync,
{
    type Out = O;
    fn evaluate(&self, policy: &PolicyParams) -> Result<O, EvalError> {
        self(policy)
    }
}

/// Per-iteration statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Mean return of all samples (R_b).
    pub mean_return: f64,
    /// Mean return of the elites (R_e).
    pub elite_mean_return: f64,
    /// Degrees of freedom per parameter after the update, in a stable order.
    pub nu_by_param: Vec<(String, f64)>,
    pub success_rate: f64,
    pub elite_returns: Vec<f64>,
    pub wall_time: f64,
}

pub struct SampleEval<O> {
    pub policy: PolicyParams,
    pub outcome: O,
}

pub struct IterationOutput<O> {
    pub next: PolicyDistribution,
    pub record: IterationRecord,
    pub samples: Vec<SampleEval<O>>,
    pub elite_indices: Vec<usize>,
}

/// Indices of the `ne` largest returns, best first; ties break toward the
/// lower sample index.
pub fn select_elites(returns: &[f64], ne: usize) -> Result<Vec<usize>, OptimizerError> {
    if ne > returns.len() {
        return Err(OptimizerError::TooManyElites {
            requested: ne,
            population: returns.len(),
        });
    }
    let mut order: Vec<usize> = (0..returns.len()).collect();
    order.sort_by(|&a, &b| {
        returns[b]
            .total_cmp(&returns[a])
            .then_with(|| a.cmp(&b))
    });
    order.truncate(ne);
    Ok(order)
}

/// One search iteration: exactly `population` rollouts with independently
/// sampled policies, elite selection, and the distribution updates.
///
/// Rollouts run in parallel; each sample draws from a stream derived from
/// `(seed, iteration, sample-index)`, so the result is identical regardless
/// of scheduling.
pub fn iterate<Obj: Objective>(
    phi: &PolicyDistribution,
    objective: &Obj,
    cfg: &OptimizerConfig,
    gammas: &GammaTable,
    iteration: usize,
) -> Result<IterationOutput<Obj::Out>, OptimizerError> {
    cfg.validate()?;
    let started = Instant::now();

    let samples: Vec<SampleEval<Obj::Out>> = (0..cfg.population)
        .into_par_iter()
        .map(|n| {
            let mut rng = derive_rng(cfg.seed, DOMAIN_ROLLOUT, iteration as u64, n as u64);
            let policy = phi.sample(&mut rng).map_err(|e| OptimizerError::Rollout {
                iteration,
                sample: n,
                message: e.to_string(),
            })?;
            let outcome = objective
                .evaluate(&policy)
                .map_err(|e| OptimizerError::Rollout {
                    iteration,
                    sample: n,
                    message: e.0,
                })?;
            Ok(SampleEval { policy, outcome })
        })
        .collect::<Result<_, OptimizerError>>()?;

    let returns: Vec<f64> = samples.iter().map(|s| s.outcome.total_return()).collect();
    if let Some(bad) = returns.iter().position(|r| !r.is_finite()) {
        return Err(OptimizerError::NonFiniteReturn {
            iteration,
            sample: bad,
        });
    }
    let elite_indices = select_elites(&returns, cfg.elites)?;
    let mean_return = returns.iter().sum::<f64>() / returns.len() as f64;
    let elite_returns: Vec<f64> = elite_indices.iter().map(|&i| returns[i]).collect();
    let elite_mean_return = elite_returns.iter().sum::<f64>() / elite_returns.len() as f64;
    let success_rate = samples.iter().filter(|s| s.outcome.success()).count() as f64
        / samples.len() as f64;

    let elite_policies: Vec<&PolicyParams> =
        elite_indices.iter().map(|&i| &samples[i].policy).collect();
    let next = update_distribution(
        phi,
        &elite_policies,
        mean_return,
        elite_mean_return,
        gammas,
        cfg,
    )?;

    let record = IterationRecord {
        iter: iteration,
        mean_return,
        elite_mean_return,
        nu_by_param: next.parameter_nus(),
        success_rate,
        elite_returns,
        wall_time: started.elapsed().as_secs_f64(),
    };

    Ok(IterationOutput {
        next,
        record,
        samples,
        elite_indices,
    })
}

fn update_distribution(
    phi: &PolicyDistribution,
    elites: &[&PolicyParams],
    r_all: f64,
    r_elite: f64,
    gammas: &GammaTable,
    cfg: &OptimizerConfig,
) -> Result<PolicyDistribution, OptimizerError> {
    let dim = phi.dim();
    let k = phi.num_components();

    let update_matrix = |dist: &WishartDist, mats: Vec<SpdMatrix>, gamma: f64| {
        dist.update(&mats, r_all, r_elite, gamma, cfg.beta, cfg.reward_denom)
    };

    let base_stiffness = update_matrix(
        phi.base_stiffness(),
        elites.iter().map(|p| p.base_stiffness().clone()).collect(),
        gammas.matrix,
    )?;
    let base_damping = update_matrix(
        phi.base_damping(),
        elites.iter().map(|p| p.base_damping().clone()).collect(),
        gammas.matrix,
    )?;

    let mut components = Vec::with_capacity(k);
    for (ki, cd) in phi.component_dists().iter().enumerate() {
        let stiffness = update_matrix(
            &cd.stiffness,
            elites
                .iter()
                .map(|p| p.components()[ki].stiffness.clone())
                .collect(),
            gammas.matrix,
        )?;
        let damping = update_matrix(
            &cd.damping,
            elites
                .iter()
                .map(|p| p.components()[ki].damping.clone())
                .collect(),
            gammas.matrix,
        )?;
        let sharpness_elites = elites
            .iter()
            .map(|p| SpdMatrix::scalar(p.components()[ki].sharpness))
            .collect::<Result<Vec<_>, _>>()
            .map_err(DistError::from)?;
        let sharpness = update_matrix(&cd.sharpness, sharpness_elites, gammas.scalar)?;
        components.push(ComponentDistribution {
            stiffness,
            damping,
            sharpness,
        });
    }

    let attractors = if k > 0 {
        let stacked: Vec<DVector<f64>> = elites
            .iter()
            .map(|p| {
                let mut v = DVector::zeros(k * dim);
                for (ki, c) in p.components().iter().enumerate() {
                    v.rows_mut(ki * dim, dim).copy_from(&c.attractor);
                }
                v
            })
            .collect();
        Some(GaussianDist::mle(&stacked, cfg.jitter)?)
    } else {
        None
    };

    Ok(PolicyDistribution::new(
        base_stiffness,
        base_damping,
        components,
        attractors,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    NuThreshold,
    SuccessPlateau,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestSample {
    pub policy: PolicyParams,
    pub total_return: f64,
    pub iteration: usize,
    pub sample_index: usize,
}

pub struct RunOutput {
    pub distribution: PolicyDistribution,
    pub records: Vec<IterationRecord>,
    pub best: Option<BestSample>,
    pub stop_reason: StopReason,
}

/// Runs [`iterate`] until a stop condition fires and returns the best
/// policy seen (by total return, earliest on ties).
pub fn run<Obj: Objective>(
    phi0: PolicyDistribution,
    objective: &Obj,
    cfg: &OptimizerConfig,
    gammas: &GammaTable,
) -> Result<RunOutput, OptimizerError> {
    cfg.validate()?;
    let mut phi = phi0;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut best: Option<BestSample> = None;
    let mut stop_reason = StopReason::MaxIters;

    for iteration in 0..cfg.max_iters {
        let out = iterate(&phi, objective, cfg, gammas, iteration)?;
        for (sample_index, s) in out.samples.iter().enumerate() {
            let ret = s.outcome.total_return();
            if best.as_ref().is_none_or(|b| ret > b.total_return) {
                best = Some(BestSample {
                    policy: s.policy.clone(),
                    total_return: ret,
                    iteration,
                    sample_index,
                });
            }
        }
        phi = out.next;
        records.push(out.record);

        let min_nu = phi
            .parameter_nus()
            .iter()
            .map(|(_, nu)| *nu)
            .fold(f64::INFINITY, f64::min);
        if min_nu >= cfg.nu_stop {
            stop_reason = StopReason::NuThreshold;
            break;
        }
        let rec = records.last().expect("just pushed");
        if rec.success_rate >= cfg.success_stop && plateaued(&records, cfg) {
            stop_reason = StopReason::SuccessPlateau;
            break;
        }
    }

    Ok(RunOutput {
        distribution: phi,
        records,
        best,
        stop_reason,
    })
}

fn plateaued(records: &[IterationRecord], cfg: &OptimizerConfig) -> bool {
    if records.len() <= cfg.plateau_window {
        return false;
    }
    let now = records[records.len() - 1].mean_return;
    let then = records[records.len() - 1 - cfg.plateau_window].mean_return;
    (now - then).abs() < cfg.plateau_rel_tol * then.abs().max(1e-12)
}

/// All Wishart scales at identity (1 for scalars) with the minimum
/// degrees of freedom D+1, and a standard-normal attractor Gaussian.
pub fn init_uninformative(dim: usize, k: usize) -> PolicyDistribution {
    let matrix = || {
        WishartDist::new(SpdMatrix::identity(dim), dim as f64 + 1.0)
            .expect("D+1 > D-1")
    };
    let components = (0..k)
        .map(|_| ComponentDistribution {
            stiffness: matrix(),
            damping: matrix(),
            sharpness: WishartDist::scalar(1.0, 2.0).expect("valid scalar factor"),
        })
        .collect();
    let attractors = (k > 0).then(|| GaussianDist::standard(k * dim));
    PolicyDistribution::new(matrix(), matrix(), components, attractors)
        .expect("consistent dimensions by construction")
}

/// 2% settling time of a critically damped second-order system is about
/// `5.83 / omega_n`.
pub const SETTLING_COEFF: f64 = 5.83;

/// Covariance floor for axes where the initial offset is zero.
pub const ATTRACTOR_COV_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InformativeInit {
    pub mass: f64,
    pub horizon: f64,
    /// Initial position relative to the goal; its length fixes dim(s).
    pub init_pos: Vec<f64>,
    /// Confidence in the base pair.
    pub nu0: f64,
    /// Per-axis stiffness for the base scale; defaults to the critically
    /// damped settling rule `mass * (5.83 / horizon)^2`.
    pub stiffness: Option<f64>,
}

/// Informative initialization: the base pair is diagonal and critically
/// damped *in distribution mean* (`E[S0] = k I`, `E[D0] = 2 sqrt(m k) I`
/// with k from the settling rule), so typical sampled policies settle near
/// the goal
/// within the horizon and remain stable under 100 Hz zero-order-hold
/// control. Component stiffness scales are a quarter of the base with
/// critically damped partners, and the attractor Gaussian puts the initial
/// position at one unit of Mahalanobis distance per axis.
pub fn init_informative(k: usize, init: &InformativeInit) -> Result<PolicyDistribution, OptimizerError> {
    if !(init.mass > 0.0) {
        return Err(OptimizerError::InvalidConfig(format!(
            "mass must be positive, got {}",
            init.mass
        )));
    }
    if !(init.horizon > 0.0) {
        return Err(OptimizerError::InvalidConfig(format!(
            "horizon must be positive, got {}",
            init.horizon
        )));
    }
    let dim = init.init_pos.len();
    if dim == 0 {
        return Err(OptimizerError::InvalidConfig(
            "init_pos must be non-empty".into(),
        ));
    }
    let stiffness = init
        .stiffness
        .unwrap_or_else(|| init.mass * (SETTLING_COEFF / init.horizon).powi(2));
    if !(stiffness > 0.0) {
        return Err(OptimizerError::InvalidConfig(format!(
            "stiffness must be positive, got {stiffness}"
        )));
    }
    let damping = 2.0 * (init.mass * stiffness).sqrt();
    let diag = |v: f64| SpdMatrix::from_diagonal(&vec![v; dim]).map_err(DistError::from);

    let base_stiffness = WishartDist::new(diag(stiffness / init.nu0)?, init.nu0)?;
    let base_damping = WishartDist::new(diag(damping / init.nu0)?, init.nu0)?;

    let matrix_nu = dim as f64 + 1.0;
    let comp_stiffness = stiffness / init.nu0 / 4.0;
    let comp_damping = 2.0 * (init.mass * comp_stiffness).sqrt();
    let components = (0..k)
        .map(|_| {
            Ok(ComponentDistribution {
                stiffness: WishartDist::new(diag(comp_stiffness)?, matrix_nu)?,
                damping: WishartDist::new(diag(comp_damping)?, matrix_nu)?,
                sharpness: WishartDist::scalar(1.0, 2.0)?,
            })
        })
        .collect::<Result<Vec<_>, DistError>>()?;

    let attractors = if k > 0 {
        let mut cov_diag = Vec::with_capacity(k * dim);
        for _ in 0..k {
            for p in &init.init_pos {
                cov_diag.push((p * p).max(ATTRACTOR_COV_FLOOR));
            }
        }
        let cov = SpdMatrix::from_diagonal(&cov_diag).map_err(DistError::from)?;
        Some(GaussianDist::new(DVector::zeros(k * dim), cov)?)
    } else {
        None
    };

    Ok(PolicyDistribution::new(
        base_stiffness,
        base_damping,
        components,
        attractors,
    )?)
}
