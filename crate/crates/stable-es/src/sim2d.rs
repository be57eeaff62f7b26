//! Deterministic 2D block-insertion environment: a point-mass block driven by
//! the policy force, penalty-based passive contact against axis-aligned slot
//! geometry, the distance+action-cost reward, and rollout execution.
//!
//! Positions are kept relative to the goal (the slot-bottom center), matching
//! the policy convention that the global attractor is the origin.

use crate::optimizer::{EvalError, Objective, Outcome};
use crate::policy::{PolicyError, PolicyParams};
use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("simulation diverged: non-finite state at substep {substep}")]
    Diverged { substep: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl From<SimError> for EvalError {
    fn from(e: SimError) -> Self {
        EvalError(e.to_string())
    }
}

/// Axis-aligned environment rectangle, in goal-frame coordinates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Rect {
    pub center: [f64; 2],
    pub half: [f64; 2],
}

/// Runaway trajectories beyond this distance from the goal become scored
/// failures; stable policies cannot reach it, so hitting the guard doubles
/// as a stability regression alarm.
pub const WORKSPACE_GUARD: f64 = 2.0;

pub const BLOCK_HALF_WIDTH: f64 = 0.025;
pub const BLOCK_MASS: f64 = 2.0;
pub const SLOT_DEPTH: f64 = 0.05;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub block_half_width: f64,
    pub mass: f64,
    /// Free space between the block and each slot wall.
    pub clearance: f64,
    pub slot_depth: f64,
    pub horizon: f64,
    pub control_rate: f64,
    pub physics_substeps: u32,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction_coeff: f64,
    pub action_cost_weight: f64,
    /// World coordinates of the slot-bottom center.
    pub goal: [f64; 2],
    /// World coordinates of the block center at t = 0.
    pub init_pos: [f64; 2],
    /// Per-axis force clamp.
    pub force_limit: f64,
    /// Static geometry in goal-frame coordinates.
    pub obstacles: Vec<Rect>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        make_task(Task::Task2)
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let mut problems = Vec::new();
        if !(self.clearance > 0.0) {
            problems.push("clearance must be positive");
        }
        if !(self.horizon > 0.0) {
            problems.push("horizon must be positive");
        }
        if !(self.control_rate > 0.0) {
            problems.push("control_rate must be positive");
        }
        if self.physics_substeps == 0 {
            problems.push("physics_substeps must be at least 1");
        }
        if !(self.mass > 0.0) {
            problems.push("mass must be positive");
        }
        if !(self.block_half_width > 0.0) {
            problems.push("block_half_width must be positive");
        }
        if !(self.force_limit > 0.0) {
            problems.push("force_limit must be positive");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SimError::InvalidConfig(problems.join("; ")))
        }
    }

    pub fn control_steps(&self) -> usize {
        (self.horizon * self.control_rate).round() as usize
    }

    pub fn substep_dt(&self) -> f64 {
        1.0 / (self.control_rate * self.physics_substeps as f64)
    }

    /// Block-center position at t = 0, relative to the goal.
    pub fn initial_offset(&self) -> Vector2<f64> {
        Vector2::new(
            self.init_pos[0] - self.goal[0],
            self.init_pos[1] - self.goal[1],
        )
    }

    /// Success: the block center sits inside the slot with at least 80% of
    /// the slot depth inserted and lateral error within the clearance.
    pub fn is_success(&self, s: &Vector2<f64>) -> bool {
        s.x.abs() <= self.clearance && s.y <= 0.2 * self.slot_depth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Task1,
    Task2,
    Task3,
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "task1" => Ok(Task::Task1),
            "task2" => Ok(Task::Task2),
            "task3" => Ok(Task::Task3),
            other => Err(format!("unknown task '{other}' (expected task1|task2|task3)")),
        }
    }
}

/// Slot geometry shared by all tasks: two floor slabs whose inner faces form
/// the slot walls, and a bottom slab closing the slot. The goal frame puts
/// the slot-bottom center (block center at full insertion) at the origin.
fn slot_geometry(clearance: f64) -> Vec<Rect> {
    let h = BLOCK_HALF_WIDTH;
    let wall = h + clearance;
    let y_top = SLOT_DEPTH - h;
    let extent = 1.0;
    let thick = 0.2;
    vec![
        Rect {
            center: [-(extent + wall) / 2.0, y_top - thick / 2.0],
            half: [(extent - wall) / 2.0, thick / 2.0],
        },
        Rect {
            center: [(extent + wall) / 2.0, y_top - thick / 2.0],
            half: [(extent - wall) / 2.0, thick / 2.0],
        },
        Rect {
            center: [0.0, -h - thick / 2.0],
            half: [wall, thick / 2.0],
        },
    ]
}

/// Task presets. Clearances, execution times, block size, and mass follow
/// the benchmark description; slot depth, wall layout, and initial offsets
/// are this artifact's reconstruction.
pub fn make_task(task: Task) -> EnvConfig {
    let (clearance, horizon, init_pos) = match task {
        // directly above the slot
        Task::Task1 => (5e-4, 1.0, [0.0, 0.15]),
        // resting on the surface, laterally offset
        Task::Task2 => (2e-3, 2.0, [-0.15, SLOT_DEPTH]),
        // behind an intervening wall: reaching the slot needs a multi-leg path
        Task::Task3 => (2e-3, 2.0, [-0.20, SLOT_DEPTH]),
    };
    let mut obstacles = slot_geometry(clearance);
    if task == Task::Task3 {
        let y_top = SLOT_DEPTH - BLOCK_HALF_WIDTH;
        obstacles.push(Rect {
            center: [-0.12, y_top + 0.05],
            half: [0.01, 0.05],
        });
    }
    EnvConfig {
        block_half_width: BLOCK_HALF_WIDTH,
        mass: BLOCK_MASS,
        clearance,
        slot_depth: SLOT_DEPTH,
        horizon,
        control_rate: 100.0,
        physics_substeps: 10,
        contact_stiffness: 1e5,
        contact_damping: 1e3,
        friction_coeff: 0.3,
        action_cost_weight: 1e-6,
        goal: [0.0, 0.0],
        init_pos,
        force_limit: 500.0,
        obstacles,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// Block-center position relative to the goal (m).
    pub s: Vector2<f64>,
    pub sdot: Vector2<f64>,
    pub t: f64,
    pub in_contact: bool,
    pub contact_force: Vector2<f64>,
}

impl SimState {
    pub fn initial(cfg: &EnvConfig) -> Self {
        let s = cfg.initial_offset();
        let in_contact = !detect_contacts(&s, cfg).is_empty();
        Self {
            s,
            sdot: Vector2::zeros(),
            t: 0.0,
            in_contact,
            contact_force: Vector2::zeros(),
        }
    }
}

struct Contact {
    /// 0 = x, 1 = y.
    axis: usize,
    /// +1 or -1: direction pushing the block out of the obstacle.
    sign: f64,
    penetration: f64,
    /// Penetration closing rate (positive while approaching).
    rate: f64,
}

fn detect_contacts(s: &Vector2<f64>, cfg: &EnvConfig) -> Vec<Contact> {
    let h = cfg.block_half_width;
    let mut contacts = Vec::new();
    for rect in &cfg.obstacles {
        let dx = s.x - rect.center[0];
        let dy = s.y - rect.center[1];
        let overlap_x = h + rect.half[0] - dx.abs();
        let overlap_y = h + rect.half[1] - dy.abs();
        if overlap_x > 0.0 && overlap_y > 0.0 {
            let (axis, sign, penetration) = if overlap_x < overlap_y {
                (0, if dx >= 0.0 { 1.0 } else { -1.0 }, overlap_x)
            } else {
                (1, if dy >= 0.0 { 1.0 } else { -1.0 }, overlap_y)
            };
            contacts.push(Contact {
                axis,
                sign,
                penetration,
                rate: 0.0,
            });
        }
    }
    contacts
}

#[derive(Debug)]
pub struct StepOutput {
    pub state: SimState,
    /// Work done by contact forces on the block during the step (J).
    pub contact_work: f64,
    /// Work done by the applied action during the step (J).
    pub action_work: f64,
    pub max_penetration: f64,
}

/// Advances one control period with semi-implicit Euler over
/// `physics_substeps`. Gravity is exactly compensated (net zero). The
/// contact model is a repulsive-only penalty spring-damper per contacting
/// face plus Coulomb friction clamped to never reverse sliding.
pub fn step(state: &SimState, u: Vector2<f64>, cfg: &EnvConfig) -> Result<StepOutput, SimError> {
    let u = clamp_force(u, cfg.force_limit);
    let dt = cfg.substep_dt();
    let mut s = state.s;
    let mut v = state.sdot;
    let mut contact_work = 0.0;
    let mut action_work = 0.0;
    let mut max_penetration: f64 = 0.0;
    let mut in_contact = false;
    let mut contact_force = Vector2::zeros();

    for substep in 0..cfg.physics_substeps as usize {
        let mut contacts = detect_contacts(&s, cfg);
        let mut normal_force = Vector2::zeros();
        let mut normal_mags = Vec::with_capacity(contacts.len());
        for c in &mut contacts {
            let normal_vel = v[c.axis] * c.sign;
            c.rate = -normal_vel;
            let mag = (cfg.contact_stiffness * c.penetration + cfg.contact_damping * c.rate)
                .max(0.0);
            normal_force[c.axis] += mag * c.sign;
            normal_mags.push(mag);
            max_penetration = max_penetration.max(c.penetration);
        }

        let accel = (u + normal_force) / cfg.mass;
        let v_mid = v + accel * dt;
        // exact energy split of the force phase (midpoint velocity)
        let v_avg = (v + v_mid) * 0.5;
        contact_work += normal_force.dot(&v_avg) * dt;
        action_work += u.dot(&v_avg) * dt;

        // friction impulses, clamped so sliding never reverses
        let mut v_new = v_mid;
        for (c, mag) in contacts.iter().zip(&normal_mags) {
            let t_axis = 1 - c.axis;
            let vt = v_new[t_axis];
            if vt != 0.0 && *mag > 0.0 {
                let impulse = (cfg.friction_coeff * mag * dt).min(cfg.mass * vt.abs());
                let before = vt;
                v_new[t_axis] -= vt.signum() * impulse / cfg.mass;
                contact_work +=
                    0.5 * cfg.mass * (v_new[t_axis] * v_new[t_axis] - before * before);
            }
        }

        s += v_new * dt;
        v = v_new;

        if !(s.x.is_finite() && s.y.is_finite() && v.x.is_finite() && v.y.is_finite()) {
            return Err(SimError::Diverged { substep });
        }
        if substep + 1 == cfg.physics_substeps as usize {
            let friction = (v - v_mid) * (cfg.mass / dt);
            contact_force = normal_force + friction;
        }
        in_contact = !contacts.is_empty();
    }

    Ok(StepOutput {
        state: SimState {
            s,
            sdot: v,
            t: state.t + 1.0 / cfg.control_rate,
            in_contact,
            contact_force,
        },
        contact_work,
        action_work,
        max_penetration,
    })
}

fn clamp_force(u: Vector2<f64>, limit: f64) -> Vector2<f64> {
    Vector2::new(u.x.clamp(-limit, limit), u.y.clamp(-limit, limit))
}

/// Per-step reward: negative Euclidean distance to the goal plus a quadratic
/// action cost.
pub fn reward(state: &SimState, u: &Vector2<f64>, cfg: &EnvConfig) -> f64 {
    -state.s.norm() - cfg.action_cost_weight * u.norm_squared()
}

#[derive(Debug, Clone)]
pub struct Rollout {
    /// Pre-step state samples, one per control step.
    pub states: Vec<SimState>,
    pub actions: Vec<Vector2<f64>>,
    pub rewards: Vec<f64>,
    pub total_return: f64,
    pub success: bool,
    /// The workspace guard fired and the rollout was scored as a failure.
    pub diverged: bool,
    pub lyapunov: Vec<f64>,
    /// Combined-impedance eigenvalues per step, ascending.
    pub stiffness_eigs: Vec<[f64; 2]>,
    pub damping_eigs: Vec<[f64; 2]>,
    /// Mixing weights per step (K columns).
    pub weights: Vec<Vec<f64>>,
    pub final_state: SimState,
    pub contact_work: f64,
    pub max_penetration: f64,
}

impl Outcome for Rollout {
    fn total_return(&self) -> f64 {
        self.total_return
    }
    fn success(&self) -> bool {
        self.success
    }
}

/// Executes one episode: the action is recomputed from the current state at
/// the control rate, rewards and the stability traces are recorded per step,
/// and success is judged at the final state. Fully deterministic in
/// `(policy, cfg)`.
pub fn rollout(policy: &PolicyParams, cfg: &EnvConfig) -> Result<Rollout, SimError> {
    cfg.validate()?;
    let n_steps = cfg.control_steps();
    let mut state = SimState::initial(cfg);
    let mut out = Rollout {
        states: Vec::with_capacity(n_steps),
        actions: Vec::with_capacity(n_steps),
        rewards: Vec::with_capacity(n_steps),
        total_return: 0.0,
        success: false,
        diverged: false,
        lyapunov: Vec::with_capacity(n_steps),
        stiffness_eigs: Vec::with_capacity(n_steps),
        damping_eigs: Vec::with_capacity(n_steps),
        weights: Vec::with_capacity(n_steps),
        final_state: state.clone(),
        contact_work: 0.0,
        max_penetration: 0.0,
    };

    for step_index in 0..n_steps {
        let s = DVector::from_column_slice(state.s.as_slice());
        let sdot = DVector::from_column_slice(state.sdot.as_slice());
        let u_raw = policy.control(&s, &sdot)?;
        let u = clamp_force(Vector2::new(u_raw[0], u_raw[1]), cfg.force_limit);

        let imp = policy.combined_impedance(&s, &sdot)?;
        let s_eigs = imp.stiffness.eigenvalues();
        let d_eigs = imp.damping.eigenvalues();
        let r = reward(&state, &u, cfg);
        out.states.push(state.clone());
        out.actions.push(u);
        out.rewards.push(r);
        out.total_return += r;
        out.lyapunov
            .push(policy.lyapunov(cfg.mass, &s, &sdot)?);
        out.stiffness_eigs.push([s_eigs[0], s_eigs[1]]);
        out.damping_eigs.push([d_eigs[0], d_eigs[1]]);
        out.weights.push(imp.weights);

        let stepped = step(&state, u, cfg).map_err(|e| match e {
            SimError::Diverged { substep } => SimError::Diverged {
                substep: step_index * cfg.physics_substeps as usize + substep,
            },
            other => other,
        })?;
        state = stepped.state;
        out.contact_work += stepped.contact_work;
        out.max_penetration = out.max_penetration.max(stepped.max_penetration);

        if state.s.norm() > WORKSPACE_GUARD {
            out.diverged = true;
            out.total_return = -(n_steps as f64) * WORKSPACE_GUARD;
            break;
        }
    }

    out.final_state = state;
    out.success = !out.diverged && cfg.is_success(&out.final_state.s);
    Ok(out)
}

/// Adapter scoring sampled policies by simulated rollout.
pub struct SimObjective {
    pub cfg: EnvConfig,
}

impl Objective for SimObjective {
    type Out = Rollout;
    fn evaluate(&self, policy: &PolicyParams) -> Result<Rollout, EvalError> {
        rollout(policy, &self.cfg).map_err(EvalError::from)
    }
}

/// Variant averaging the return over several initial positions (world
/// coordinates). Success requires every rollout to succeed.
pub struct MultiInitObjective {
    pub cfg: EnvConfig,
    pub init_positions: Vec<[f64; 2]>,
}

pub struct MultiRollout {
    pub rollouts: Vec<Rollout>,
    pub mean_return: f64,
    pub all_succeeded: bool,
}

impl Outcome for MultiRollout {
    fn total_return(&self) -> f64 {
        self.mean_return
    }
    fn success(&self) -> bool {
        self.all_succeeded
    }
}

impl Objective for MultiInitObjective {
    type Out = MultiRollout;
    fn evaluate(&self, policy: &PolicyParams) -> Result<MultiRollout, EvalError> {
        if self.init_positions.is_empty() {
            return Err(EvalError("no initial positions configured".into()));
        }
        let mut rollouts = Vec::with_capacity(self.init_positions.len());
        for init in &self.init_positions {
            let mut cfg = self.cfg.clone();
            cfg.init_pos = *init;
            rollouts.push(rollout(policy, &cfg).map_err(EvalError::from)?);
        }
        let mean_return =
            rollouts.iter().map(|r| r.total_return).sum::<f64>() / rollouts.len() as f64;
        let all_succeeded = rollouts.iter().all(|r| r.success);
        Ok(MultiRollout {
            rollouts,
            mean_return,
            all_succeeded,
        })
    }
}
