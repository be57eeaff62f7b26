//! Python bindings for the stability-guaranteed policy search: the Wishart
//! and Gaussian sampling distributions, the mixture-of-spring-dampers policy,
//! its Lyapunov energy, and the 2D block-insertion environment.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use stable_es::distributions;
use stable_es::optimizer::{self, InformativeInit};
use stable_es::policy;
use stable_es::sim2d;
use stable_es::spd::{matrix_from_rows, matrix_rows, SpdMatrix};

type Matrix = Vec<Vec<f64>>;

fn to_py_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn spd_from_rows(rows: &[Vec<f64>]) -> PyResult<SpdMatrix> {
    let m = matrix_from_rows(rows).map_err(to_py_err)?;
    SpdMatrix::new(m).map_err(to_py_err)
}

fn rng_from_seed(seed: u64) -> rand_chacha::ChaCha12Rng {
    rand_chacha::ChaCha12Rng::seed_from_u64(seed)
}

#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct WishartDist {
    inner: distributions::WishartDist,
}

#[pymethods]
impl WishartDist {
    #[new]
    fn new(scale: Matrix, nu: f64) -> PyResult<Self> {
        let inner =
            distributions::WishartDist::new(spd_from_rows(&scale)?, nu).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn scale(&self) -> Matrix {
        matrix_rows(self.inner.scale().matrix())
    }

    fn mean(&self) -> Matrix {
        matrix_rows(&self.inner.mean())
    }

    fn entropy(&self) -> f64 {
        self.inner.entropy()
    }

    /// Draws one SPD matrix (Bartlett decomposition).
    fn sample(&self, seed: u64) -> PyResult<Matrix> {
        let mut rng = rng_from_seed(seed);
        let s = self.inner.sample(&mut rng).map_err(to_py_err)?;
        Ok(matrix_rows(s.matrix()))
    }

    /// Reward-driven update from elite samples.
    fn update(
        &self,
        elites: Vec<Matrix>,
        r_all: f64,
        r_elite: f64,
        gamma: f64,
        beta: f64,
    ) -> PyResult<Self> {
        let elites = elites
            .iter()
            .map(|m| spd_from_rows(m))
            .collect::<PyResult<Vec<_>>>()?;
        let inner = self
            .inner
            .update(
                &elites,
                r_all,
                r_elite,
                gamma,
                beta,
                distributions::RewardDenom::Magnitude,
            )
            .map_err(to_py_err)?;
        Ok(Self { inner })
    }
}

#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct GaussianDist {
    inner: distributions::GaussianDist,
}

#[pymethods]
impl GaussianDist {
    #[new]
    fn new(mean: Vec<f64>, cov: Matrix) -> PyResult<Self> {
        let inner = distributions::GaussianDist::new(
            nalgebra::DVector::from_vec(mean),
            spd_from_rows(&cov)?,
        )
        .map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean().iter().copied().collect()
    }

    #[getter]
    fn cov(&self) -> Matrix {
        matrix_rows(self.inner.cov().matrix())
    }

    fn sample(&self, seed: u64) -> PyResult<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        let s = self.inner.sample(&mut rng).map_err(to_py_err)?;
        Ok(s.iter().copied().collect())
    }

    /// Maximum-likelihood fit (biased covariance plus jitter * I).
    #[staticmethod]
    fn mle(samples: Vec<Vec<f64>>, jitter: f64) -> PyResult<Self> {
        let samples: Vec<_> = samples
            .into_iter()
            .map(nalgebra::DVector::from_vec)
            .collect();
        let inner = distributions::GaussianDist::mle(&samples, jitter).map_err(to_py_err)?;
        Ok(Self { inner })
    }
}

#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct PolicyParams {
    inner: policy::PolicyParams,
}

#[pymethods]
impl PolicyParams {
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_components(&self) -> usize {
        self.inner.num_components()
    }

    #[getter]
    fn base_stiffness(&self) -> Matrix {
        matrix_rows(self.inner.base_stiffness().matrix())
    }

    #[getter]
    fn base_damping(&self) -> Matrix {
        matrix_rows(self.inner.base_damping().matrix())
    }

    /// Control force at (s, sdot).
    fn control(&self, s: Vec<f64>, sdot: Vec<f64>) -> PyResult<Vec<f64>> {
        let u = self
            .inner
            .control(
                &nalgebra::DVector::from_vec(s),
                &nalgebra::DVector::from_vec(sdot),
            )
            .map_err(to_py_err)?;
        Ok(u.iter().copied().collect())
    }

    fn mixing_weights(&self, s: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner
            .mixing_weights(&nalgebra::DVector::from_vec(s))
            .map_err(to_py_err)
    }

    /// Lyapunov energy at (s, sdot) for a given mass.
    fn lyapunov(&self, mass: f64, s: Vec<f64>, sdot: Vec<f64>) -> PyResult<f64> {
        self.inner
            .lyapunov(
                mass,
                &nalgebra::DVector::from_vec(s),
                &nalgebra::DVector::from_vec(sdot),
            )
            .map_err(to_py_err)
    }

    /// Equivalent (stiffness, damping, reference, weights) at the query state.
    fn combined_impedance(
        &self,
        s: Vec<f64>,
        sdot: Vec<f64>,
    ) -> PyResult<(Matrix, Matrix, Vec<f64>, Vec<f64>)> {
        let imp = self
            .inner
            .combined_impedance(
                &nalgebra::DVector::from_vec(s),
                &nalgebra::DVector::from_vec(sdot),
            )
            .map_err(to_py_err)?;
        Ok((
            matrix_rows(imp.stiffness.matrix()),
            matrix_rows(imp.damping.matrix()),
            imp.reference.iter().copied().collect(),
            imp.weights,
        ))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(to_py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(to_py_err)?,
        })
    }
}

#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct PolicyDistribution {
    inner: policy::PolicyDistribution,
}

#[pymethods]
impl PolicyDistribution {
    /// All scales at identity with minimum degrees of freedom D+1.
    #[staticmethod]
    fn uninformative(dim: usize, k: usize) -> Self {
        Self {
            inner: optimizer::init_uninformative(dim, k),
        }
    }

    /// Critically damped base pair sized by the settling rule.
    #[staticmethod]
    #[pyo3(signature = (k, mass, horizon, init_pos, nu0=30.0, stiffness=None))]
    fn informative(
        k: usize,
        mass: f64,
        horizon: f64,
        init_pos: Vec<f64>,
        nu0: f64,
        stiffness: Option<f64>,
    ) -> PyResult<Self> {
        let inner = optimizer::init_informative(
            k,
            &InformativeInit {
                mass,
                horizon,
                init_pos,
                nu0,
                stiffness,
            },
        )
        .map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_components(&self) -> usize {
        self.inner.num_components()
    }

    /// Draws one stable-by-construction parameter set.
    fn sample(&self, seed: u64) -> PyResult<PolicyParams> {
        let mut rng = rng_from_seed(seed);
        let inner = self.inner.sample(&mut rng).map_err(to_py_err)?;
        Ok(PolicyParams { inner })
    }

    fn parameter_nus(&self) -> Vec<(String, f64)> {
        self.inner.parameter_nus()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(to_py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(to_py_err)?,
        })
    }
}

#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct EnvConfig {
    inner: sim2d::EnvConfig,
}

#[pymethods]
impl EnvConfig {
    #[getter]
    fn clearance(&self) -> f64 {
        self.inner.clearance
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.inner.mass
    }

    #[getter]
    fn init_pos(&self) -> (f64, f64) {
        (self.inner.init_pos[0], self.inner.init_pos[1])
    }

    fn with_init_pos(&self, x: f64, y: f64) -> Self {
        let mut inner = self.inner.clone();
        inner.init_pos = [x, y];
        Self { inner }
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(to_py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(to_py_err)?,
        })
    }
}

#[pyclass(frozen, skip_from_py_object)]
struct Rollout {
    inner: sim2d::Rollout,
}

#[pymethods]
impl Rollout {
    #[getter]
    fn total_return(&self) -> f64 {
        self.inner.total_return
    }

    #[getter]
    fn success(&self) -> bool {
        self.inner.success
    }

    #[getter]
    fn lyapunov(&self) -> Vec<f64> {
        self.inner.lyapunov.clone()
    }

    #[getter]
    fn rewards(&self) -> Vec<f64> {
        self.inner.rewards.clone()
    }

    #[getter]
    fn positions(&self) -> Vec<(f64, f64)> {
        self.inner.states.iter().map(|s| (s.s.x, s.s.y)).collect()
    }

    #[getter]
    fn final_state(&self) -> (f64, f64, f64, f64) {
        let f = &self.inner.final_state;
        (f.s.x, f.s.y, f.sdot.x, f.sdot.y)
    }

    #[getter]
    fn contact_work(&self) -> f64 {
        self.inner.contact_work
    }

    #[getter]
    fn max_penetration(&self) -> f64 {
        self.inner.max_penetration
    }
}

/// Task preset by name: task1, task2, or task3.
#[pyfunction]
fn make_task(name: &str) -> PyResult<EnvConfig> {
    let task: sim2d::Task = name.parse().map_err(to_py_err)?;
    Ok(EnvConfig {
        inner: sim2d::make_task(task),
    })
}

/// Deterministic rollout of a policy in an environment.
#[pyfunction]
fn rollout(policy: &PolicyParams, env: &EnvConfig) -> PyResult<Rollout> {
    let inner = sim2d::rollout(&policy.inner, &env.inner).map_err(to_py_err)?;
    Ok(Rollout { inner })
}

/// Fitted (gamma, r_squared) of the ln-nu/entropy regression for a dimension.
#[pyfunction]
fn estimate_gamma(dim: usize) -> PyResult<(f64, f64)> {
    let fit = distributions::estimate_gamma(dim).map_err(to_py_err)?;
    Ok((fit.gamma, fit.r_squared))
}

#[pymodule]
fn stable_es_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<WishartDist>()?;
    m.add_class::<GaussianDist>()?;
    m.add_class::<PolicyParams>()?;
    m.add_class::<PolicyDistribution>()?;
    m.add_class::<EnvConfig>()?;
    m.add_class::<Rollout>()?;
    m.add_function(wrap_pyfunction!(make_task, m)?)?;
    m.add_function(wrap_pyfunction!(rollout, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_gamma, m)?)?;
    Ok(())
}
