//! Mixture-of-spring-dampers variable-impedance policy: control-force
//! evaluation, mixing weights, the equivalent combined impedance, the shared
//! Lyapunov energy, and sampling from the per-parameter distribution record.
//!
//! Every constructible [`PolicyParams`] satisfies the stability constraints
//! (all stiffness/damping matrices SPD, all kernel sharpness values positive)
//! and [`PolicyDistribution::sample`] can only produce such values.

use crate::distributions::{DistError, GaussianDist, WishartDist};
use crate::spd::{symmetrize, SpdMatrix};
use nalgebra::DVector;
use rand::Rng;
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("kernel sharpness must be positive, got {value}")]
    NonPositiveSharpness { value: f64 },
    #[error("mass must be positive, got {value}")]
    NonPositiveMass { value: f64 },
    #[error("attractor Gaussian has dimension {got}, expected K*D = {expected}")]
    AttractorDimMismatch { expected: usize, got: usize },
    #[error("attractor Gaussian missing for K = {k} components")]
    MissingAttractors { k: usize },
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Matrix(#[from] crate::spd::MatrixError),
}

/// One spring-damper mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub stiffness: SpdMatrix,
    pub damping: SpdMatrix,
    #[serde(with = "serde_vector")]
    pub attractor: DVector<f64>,
    /// Kernel sharpness (inverse energy); larger values localize the
    /// component around its attractor.
    pub sharpness: f64,
}

impl Component {
    /// Quadratic kernel energy `1/2 (s - s_k)^T S_k (s - s_k)`.
    pub fn kernel_energy(&self, s: &DVector<f64>) -> f64 {
        let d = s - &self.attractor;
        0.5 * (self.stiffness.matrix() * &d).dot(&d)
    }

    /// Mixing weight `exp(-l_k * V_k(s))`, in (0, 1] with its peak at the
    /// attractor.
    pub fn weight(&self, s: &DVector<f64>) -> f64 {
        (-self.sharpness * self.kernel_energy(s)).exp()
    }

    /// Potential `(1/l_k)(1 - exp(-l_k V_k))`: nonnegative, zero at the
    /// attractor, and with gradient `w_k S_k (s - s_k)`.
    pub fn potential(&self, s: &DVector<f64>) -> f64 {
        -(-self.sharpness * self.kernel_energy(s)).exp_m1() / self.sharpness
    }
}

/// A concrete stable-by-construction parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    base_stiffness: SpdMatrix,
    base_damping: SpdMatrix,
    components: Vec<Component>,
}

impl PolicyParams {
    pub fn new(
        base_stiffness: SpdMatrix,
        base_damping: SpdMatrix,
        components: Vec<Component>,
    ) -> Result<Self, PolicyError> {
        let dim = base_stiffness.dim();
        check_dim("base damping", dim, base_damping.dim())?;
        for c in &components {
            check_dim("component stiffness", dim, c.stiffness.dim())?;
            check_dim("component damping", dim, c.damping.dim())?;
            check_dim("component attractor", dim, c.attractor.len())?;
            if !(c.sharpness > 0.0) || !c.sharpness.is_finite() {
                return Err(PolicyError::NonPositiveSharpness { value: c.sharpness });
            }
        }
        Ok(Self {
            base_stiffness,
            base_damping,
            components,
        })
    }

    pub fn dim(&self) -> usize {
        self.base_stiffness.dim()
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn base_stiffness(&self) -> &SpdMatrix {
        &self.base_stiffness
    }

    pub fn base_damping(&self) -> &SpdMatrix {
        &self.base_damping
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Mixing weights of all components at state `s`.
    pub fn mixing_weights(&self, s: &DVector<f64>) -> Result<Vec<f64>, PolicyError> {
        check_dim("state", self.dim(), s.len())?;
        Ok(self.components.iter().map(|c| c.weight(s)).collect())
    }

    /// Control force
    /// `u = -S0 s - D0 sdot - sum_k w_k(s) [S_k (s - s_k) + D_k sdot]`.
    pub fn control(
        &self,
        s: &DVector<f64>,
        sdot: &DVector<f64>,
    ) -> Result<DVector<f64>, PolicyError> {
        check_dim("state", self.dim(), s.len())?;
        check_dim("velocity", self.dim(), sdot.len())?;
        let mut u = -(self.base_stiffness.matrix() * s) - self.base_damping.matrix() * sdot;
        for c in &self.components {
            let w = c.weight(s);
            let spring = c.stiffness.matrix() * (s - &c.attractor);
            let damper = c.damping.matrix() * sdot;
            u -= (spring + damper) * w;
        }
        Ok(u)
    }

    /// The equivalent variable-impedance form at the query state:
    /// `u = -S_bar (s - s_bar) - D_bar sdot`.
    pub fn combined_impedance(
        &self,
        s: &DVector<f64>,
        sdot: &DVector<f64>,
    ) -> Result<CombinedImpedance, PolicyError> {
        check_dim("state", self.dim(), s.len())?;
        check_dim("velocity", self.dim(), sdot.len())?;
        let dim = self.dim();
        let mut stiffness = self.base_stiffness.matrix().clone();
        let mut damping = self.base_damping.matrix().clone();
        let mut weighted_targets = DVector::zeros(dim);
        let mut weights = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let w = c.weight(s);
            stiffness += c.stiffness.matrix() * w;
            damping += c.damping.matrix() * w;
            weighted_targets += c.stiffness.matrix() * &c.attractor * w;
            weights.push(w);
        }
        let stiffness = SpdMatrix::new(symmetrize(&stiffness))?;
        let damping = SpdMatrix::new(symmetrize(&damping))?;
        let reference = stiffness.solve(&weighted_targets)?;
        Ok(CombinedImpedance {
            stiffness,
            damping,
            reference,
            weights,
        })
    }

    /// Lyapunov energy shared with the policy:
    /// `V = 1/2 m |sdot|^2 + 1/2 s^T S0 s + sum_k (1/l_k)(1 - exp(-l_k V_k))`.
    ///
    /// Along free motion under [`PolicyParams::control`] its time derivative
    /// is `-sdot^T D_bar(s) sdot`.
    pub fn lyapunov(
        &self,
        mass: f64,
        s: &DVector<f64>,
        sdot: &DVector<f64>,
    ) -> Result<f64, PolicyError> {
        if !(mass > 0.0) {
            return Err(PolicyError::NonPositiveMass { value: mass });
        }
        check_dim("state", self.dim(), s.len())?;
        check_dim("velocity", self.dim(), sdot.len())?;
        let kinetic = 0.5 * mass * sdot.norm_squared();
        let base = 0.5 * (self.base_stiffness.matrix() * s).dot(s);
        let mixture: f64 = self.components.iter().map(|c| c.potential(s)).sum();
        Ok(kinetic + base + mixture)
    }
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), PolicyError> {
    if expected != got {
        return Err(PolicyError::DimMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

impl Serialize for PolicyParams {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PolicyRepr {
            base_stiffness: self.base_stiffness.clone(),
            base_damping: self.base_damping.clone(),
            components: self.components.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PolicyParams {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = PolicyRepr::deserialize(deserializer)?;
        PolicyParams::new(repr.base_stiffness, repr.base_damping, repr.components)
            .map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyRepr {
    base_stiffness: SpdMatrix,
    base_damping: SpdMatrix,
    components: Vec<Component>,
}

/// State-dependent stiffness, damping, and reference reproducing the mixture
/// control at the query state.
#[derive(Debug, Clone)]
pub struct CombinedImpedance {
    pub stiffness: SpdMatrix,
    pub damping: SpdMatrix,
    pub reference: DVector<f64>,
    pub weights: Vec<f64>,
}

impl CombinedImpedance {
    pub fn force(&self, s: &DVector<f64>, sdot: &DVector<f64>) -> DVector<f64> {
        -(self.stiffness.matrix() * (s - &self.reference)) - self.damping.matrix() * sdot
    }
}

/// The full per-parameter sampling-distribution record: one Wishart per
/// matrix/scalar parameter and one Gaussian over the stacked attractors.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDistribution {
    base_stiffness: WishartDist,
    base_damping: WishartDist,
    components: Vec<ComponentDistribution>,
    attractors: Option<GaussianDist>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDistribution {
    pub stiffness: WishartDist,
    pub damping: WishartDist,
    /// 1-dimensional Wishart over the positive kernel sharpness.
    pub sharpness: WishartDist,
}

impl PolicyDistribution {
    pub fn new(
        base_stiffness: WishartDist,
        base_damping: WishartDist,
        components: Vec<ComponentDistribution>,
        attractors: Option<GaussianDist>,
    ) -> Result<Self, PolicyError> {
        let dim = base_stiffness.dim();
        check_dim("base damping scale", dim, base_damping.dim())?;
        for c in &components {
            check_dim("component stiffness scale", dim, c.stiffness.dim())?;
            check_dim("component damping scale", dim, c.damping.dim())?;
            check_dim("sharpness scale", 1, c.sharpness.dim())?;
        }
        let k = components.len();
        match &attractors {
            Some(g) if g.dim() != k * dim => {
                return Err(PolicyError::AttractorDimMismatch {
                    expected: k * dim,
                    got: g.dim(),
                })
            }
            None if k > 0 => return Err(PolicyError::MissingAttractors { k }),
            _ => {}
        }
        Ok(Self {
            base_stiffness,
            base_damping,
            components,
            attractors,
        })
    }

    pub fn dim(&self) -> usize {
        self.base_stiffness.dim()
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn base_stiffness(&self) -> &WishartDist {
        &self.base_stiffness
    }

    pub fn base_damping(&self) -> &WishartDist {
        &self.base_damping
    }

    pub fn component_dists(&self) -> &[ComponentDistribution] {
        &self.components
    }

    pub fn attractors(&self) -> Option<&GaussianDist> {
        self.attractors.as_ref()
    }

    /// Draws one parameter set. The result satisfies the stability
    /// constraints unconditionally: Wishart draws are SPD and the sharpness
    /// draw is positive with probability 1.
    ///
    /// Sampling order is fixed (base pair, then per-component stiffness,
    /// damping, sharpness, then the stacked attractor vector) so a given
    /// random stream always yields the same policy.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PolicyParams, PolicyError> {
        let dim = self.dim();
        let base_stiffness = self.base_stiffness.sample(rng)?;
        let base_damping = self.base_damping.sample(rng)?;
        let mut drawn = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let stiffness = c.stiffness.sample(rng)?;
            let damping = c.damping.sample(rng)?;
            let sharpness = c.sharpness.sample(rng)?.matrix()[(0, 0)];
            drawn.push((stiffness, damping, sharpness));
        }
        let stacked = match &self.attractors {
            Some(g) => g.sample(rng)?,
            None => DVector::zeros(0),
        };
        let components = drawn
            .into_iter()
            .enumerate()
            .map(|(k, (stiffness, damping, sharpness))| Component {
                stiffness,
                damping,
                attractor: stacked.rows(k * dim, dim).into_owned(),
                sharpness,
            })
            .collect();
        PolicyParams::new(base_stiffness, base_damping, components)
    }

    /// Per-parameter degrees of freedom, in a stable order
    /// (`S0, D0, S1, D1, l1, S2, ...`).
    pub fn parameter_nus(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("S0".to_string(), self.base_stiffness.nu()),
            ("D0".to_string(), self.base_damping.nu()),
        ];
        for (k, c) in self.components.iter().enumerate() {
            out.push((format!("S{}", k + 1), c.stiffness.nu()));
            out.push((format!("D{}", k + 1), c.damping.nu()));
            out.push((format!("l{}", k + 1), c.sharpness.nu()));
        }
        out
    }

    /// Entropy of every Wishart factor, same order as [`parameter_nus`].
    ///
    /// [`parameter_nus`]: PolicyDistribution::parameter_nus
    pub fn parameter_entropies(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("S0".to_string(), self.base_stiffness.entropy()),
            ("D0".to_string(), self.base_damping.entropy()),
        ];
        for (k, c) in self.components.iter().enumerate() {
            out.push((format!("S{}", k + 1), c.stiffness.entropy()));
            out.push((format!("D{}", k + 1), c.damping.entropy()));
            out.push((format!("l{}", k + 1), c.sharpness.entropy()));
        }
        out
    }
}

impl Serialize for PolicyDistribution {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        DistributionRepr {
            base_stiffness: self.base_stiffness.clone(),
            base_damping: self.base_damping.clone(),
            components: self.components.clone(),
            attractors: self.attractors.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PolicyDistribution {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = DistributionRepr::deserialize(deserializer)?;
        PolicyDistribution::new(
            repr.base_stiffness,
            repr.base_damping,
            repr.components,
            repr.attractors,
        )
        .map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct DistributionRepr {
    base_stiffness: WishartDist,
    base_damping: WishartDist,
    components: Vec<ComponentDistribution>,
    attractors: Option<GaussianDist>,
}

pub(crate) mod serde_vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}
