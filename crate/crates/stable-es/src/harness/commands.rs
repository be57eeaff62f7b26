//! The command implementations behind the CLI: training runs with
//! per-iteration curves and checkpoints, policy evaluation from random
//! initial positions, entropy scans, and excursion statistics.

use crate::distributions::{entropy_scan, fit_gamma, GammaFit};
use crate::harness::config::{HarnessError, RunConfig};
use crate::optimizer::{
    iterate, run, BestSample, GammaTable, IterationRecord, StopReason,
};
use crate::policy::PolicyDistribution;
use crate::sim2d::{rollout, EnvConfig, Rollout, SimObjective};
use crate::spd::SpdMatrix;
use crate::streams::{derive_rng, DOMAIN_EVAL};
use nalgebra::Vector2;
use rand::Rng;
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents)
        .map_err(|e| HarnessError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path)
        .map_err(|e| HarnessError::Runtime(format!("cannot create {}: {e}", path.display())))
}

/// Stable CSV header for the learning curve given the parameter order.
fn curve_header(nu_names: &[String]) -> String {
    let mut header = String::from("iter,R_b,R_e,success_rate");
    for name in nu_names {
        let _ = write!(header, ",nu_{name}");
    }
    header.push('\n');
    header
}

pub fn curve_csv(records: &[IterationRecord], nu_names: &[String]) -> String {
    let mut out = curve_header(nu_names);
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{}",
            r.iter, r.mean_return, r.elite_mean_return, r.success_rate
        );
        for (name, nu) in &r.nu_by_param {
            debug_assert!(nu_names.contains(name));
            let _ = write!(out, ",{nu}");
        }
        out.push('\n');
    }
    out
}

/// Parses a curve CSV back into (header, numeric rows); the harness must be
/// able to re-read every table it emits.
pub fn parse_curve_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), HarnessError> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| HarnessError::Runtime("empty curve CSV".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|cell| {
                cell.parse::<f64>().map_err(|e| {
                    HarnessError::Runtime(format!("row {}: bad number '{cell}': {e}", i + 1))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if row.len() != header.len() {
            return Err(HarnessError::Runtime(format!(
                "row {} has {} cells, header has {}",
                i + 1,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Rollout trace with one row per control step: state, action, reward, the
/// Lyapunov value, contact flag, combined-impedance eigenvalues (ascending),
/// and the mixing weights.
pub fn trace_csv(roll: &Rollout) -> String {
    let k = roll.weights.first().map_or(0, Vec::len);
    let mut out = String::from(
        "t,s_x,s_y,sdot_x,sdot_y,u_x,u_y,reward,V,in_contact,sbar_eig1,sbar_eig2,dbar_eig1,dbar_eig2",
    );
    for i in 1..=k {
        let _ = write!(out, ",w_{i}");
    }
    out.push('\n');
    for i in 0..roll.states.len() {
        let st = &roll.states[i];
        let u = &roll.actions[i];
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            st.t,
            st.s.x,
            st.s.y,
            st.sdot.x,
            st.sdot.y,
            u.x,
            u.y,
            roll.rewards[i],
            roll.lyapunov[i],
            u8::from(st.in_contact)
        );
        let _ = write!(
            out,
            ",{},{},{},{}",
            roll.stiffness_eigs[i][0],
            roll.stiffness_eigs[i][1],
            roll.damping_eigs[i][0],
            roll.damping_eigs[i][1]
        );
        for w in &roll.weights[i] {
            let _ = write!(out, ",{w}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub best_return: Option<f64>,
    pub best_iteration: Option<usize>,
    pub final_success_rate: Option<f64>,
    pub wall_time: f64,
}

/// Trains one seed of one config into `cfg.run_dir(seed)`. Refuses to
/// overwrite an existing run directory.
pub fn train_one_seed(cfg: &RunConfig, seed: u64) -> Result<PathBuf, HarnessError> {
    let started = std::time::Instant::now();
    let env = cfg.task.resolve()?;
    let phi0 = cfg.init.resolve(&env, cfg.k)?;
    let nu_names: Vec<String> = phi0.parameter_nus().into_iter().map(|(n, _)| n).collect();

    let run_dir = cfg.run_dir(seed);
    if run_dir.exists() {
        return Err(HarnessError::Runtime(format!(
            "refusing to overwrite existing run directory {}",
            run_dir.display()
        )));
    }
    create_dir(&run_dir)?;

    let mut opt_cfg = cfg.optimizer.clone();
    opt_cfg.seed = seed;
    let gammas = GammaTable::for_dim(2).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let objective = SimObjective { cfg: env.clone() };
    let out = run(phi0, &objective, &opt_cfg, &gammas)
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;

    write_file(&run_dir.join("curve.csv"), &curve_csv(&out.records, &nu_names))?;
    write_file(
        &run_dir.join("final_phi.json"),
        &serde_json::to_string_pretty(&out.distribution)
            .map_err(|e| HarnessError::Runtime(e.to_string()))?,
    )?;
    if let Some(best) = &out.best {
        write_file(
            &run_dir.join("best_policy.json"),
            &serde_json::to_string_pretty(best)
                .map_err(|e| HarnessError::Runtime(e.to_string()))?,
        )?;
        let final_roll =
            rollout(&best.policy, &env).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        write_file(&run_dir.join("trace.csv"), &trace_csv(&final_roll))?;
    }
    let summary = RunSummary {
        schema_version: crate::harness::config::SCHEMA_VERSION,
        config_hash: cfg.content_hash(),
        seed,
        iterations: out.records.len(),
        stop_reason: out.stop_reason,
        best_return: out.best.as_ref().map(|b| b.total_return),
        best_iteration: out.best.as_ref().map(|b| b.iteration),
        final_success_rate: out.records.last().map(|r| r.success_rate),
        wall_time: started.elapsed().as_secs_f64(),
    };
    write_file(
        &run_dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary)
            .map_err(|e| HarnessError::Runtime(e.to_string()))?,
    )?;
    Ok(run_dir)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<PathBuf>, HarnessError> {
    if cfg.seeds.is_empty() {
        return Err(HarnessError::Config("config has no seeds".into()));
    }
    let mut dirs = Vec::new();
    for &seed in &cfg.seeds {
        let dir = train_one_seed(cfg, seed)?;
        println!(
            "seed {seed}: wrote {} ({} iterations)",
            dir.display(),
            parse_curve_csv(
                &fs::read_to_string(dir.join("curve.csv"))
                    .map_err(|e| HarnessError::Runtime(e.to_string()))?
            )?
            .1
            .len()
        );
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Entropy-vs-nu table at fixed mean plus the fitted gamma.
pub fn cmd_entropy_scan(
    dim: usize,
    points: usize,
    nu_max: f64,
    out: Option<&Path>,
) -> Result<GammaFit, HarnessError> {
    let mean = SpdMatrix::identity(dim);
    let scan = entropy_scan(&mean, points, nu_max)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let fit = fit_gamma(&scan).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    if let Some(path) = out {
        let mut csv = String::from("nu,ln_nu,entropy\n");
        for p in &scan {
            let _ = writeln!(csv, "{},{},{}", p.nu, p.ln_nu, p.entropy);
        }
        write_file(path, &csv)?;
    }
    println!(
        "dim={dim} gamma={:.6} r_squared={:.6}",
        fit.gamma, fit.r_squared
    );
    Ok(fit)
}

pub fn cmd_gamma(dim: usize) -> Result<GammaFit, HarnessError> {
    let fit = crate::distributions::estimate_gamma(dim)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    println!(
        "dim={dim} gamma={:.6} intercept={:.6} r_squared={:.6}",
        fit.gamma, fit.intercept, fit.r_squared
    );
    Ok(fit)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Default for EvalBox {
    fn default() -> Self {
        // goal-frame box above the surface, spanning both sides of the slot
        Self {
            min: [-0.2, 0.05],
            max: [0.2, 0.25],
        }
    }
}

#[derive(Debug, Serialize)]
pub struct EvalResult {
    pub initial: [f64; 2],
    pub final_distance: f64,
    pub success: bool,
    pub min_lyapunov: f64,
    pub max_lyapunov: f64,
}

/// Rolls out a checkpointed policy from `n` initial positions drawn
/// uniformly from `bounds`, writing one trace per initial plus a convergence
/// summary.
pub fn cmd_eval(
    checkpoint: &Path,
    env: &EnvConfig,
    n_initials: usize,
    seed: u64,
    bounds: EvalBox,
    out_dir: &Path,
) -> Result<Vec<EvalResult>, HarnessError> {
    let text = fs::read_to_string(checkpoint).map_err(|e| {
        HarnessError::Config(format!("cannot read checkpoint {}: {e}", checkpoint.display()))
    })?;
    let best: BestSample = serde_json::from_str(&text).map_err(|e| {
        HarnessError::Config(format!("bad checkpoint {}: {e}", checkpoint.display()))
    })?;
    create_dir(out_dir)?;

    let mut results = Vec::with_capacity(n_initials);
    let mut summary = String::from("index,init_x,init_y,final_dist,success,min_V,max_V\n");
    for i in 0..n_initials {
        let mut rng = derive_rng(seed, DOMAIN_EVAL, i as u64, 0);
        let offset = Vector2::new(
            rng.random_range(bounds.min[0]..=bounds.max[0]),
            rng.random_range(bounds.min[1]..=bounds.max[1]),
        );
        let mut env_i = env.clone();
        env_i.init_pos = [env.goal[0] + offset.x, env.goal[1] + offset.y];
        let roll = rollout(&best.policy, &env_i)
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        write_file(&out_dir.join(format!("trace_{i}.csv")), &trace_csv(&roll))?;
        let min_v = roll.lyapunov.iter().copied().fold(f64::INFINITY, f64::min);
        let max_v = roll.lyapunov.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let result = EvalResult {
            initial: [offset.x, offset.y],
            final_distance: roll.final_state.s.norm(),
            success: roll.success,
            min_lyapunov: min_v,
            max_lyapunov: max_v,
        };
        let _ = writeln!(
            summary,
            "{i},{},{},{},{},{},{}",
            offset.x,
            offset.y,
            result.final_distance,
            u8::from(result.success),
            min_v,
            max_v
        );
        results.push(result);
    }
    write_file(&out_dir.join("eval_summary.csv"), &summary)?;
    Ok(results)
}

/// Linear-interpolated quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Runs the first `iters` training iterations and aggregates per-step
/// distance to the goal over all rollouts of each iteration (box-plot data).
pub fn cmd_excursion_stats(
    cfg: &RunConfig,
    iters: usize,
    out: &Path,
) -> Result<String, HarnessError> {
    let env = cfg.task.resolve()?;
    let mut phi: PolicyDistribution = cfg.init.resolve(&env, cfg.k)?;
    let mut opt_cfg = cfg.optimizer.clone();
    opt_cfg.seed = *cfg.seeds.first().unwrap_or(&0);
    let gammas = GammaTable::for_dim(2).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let objective = SimObjective { cfg: env };

    let mut csv = String::from("iter,min,q25,median,q75,max,n_samples\n");
    for iteration in 0..iters {
        let out_i = iterate(&phi, &objective, &opt_cfg, &gammas, iteration)
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        let mut distances: Vec<f64> = out_i
            .samples
            .iter()
            .flat_map(|s| s.outcome.states.iter().map(|st| st.s.norm()))
            .collect();
        distances.sort_by(f64::total_cmp);
        let _ = writeln!(
            csv,
            "{iteration},{},{},{},{},{},{}",
            quantile(&distances, 0.0),
            quantile(&distances, 0.25),
            quantile(&distances, 0.5),
            quantile(&distances, 0.75),
            quantile(&distances, 1.0),
            distances.len()
        );
        phi = out_i.next;
    }
    write_file(out, &csv)?;
    Ok(csv)
}
