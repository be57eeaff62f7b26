use clap::{Parser, Subcommand};
use stable_es::harness::{
    apply_override, cmd_entropy_scan, cmd_eval, cmd_excursion_stats, cmd_gamma, cmd_train,
    EvalBox, HarnessError, RunConfig,
};
use stable_es::sim2d::{make_task, Task};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "stable-es",
    about = "Stability-guaranteed evolution-strategy policy search on 2D block insertion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run training per seed, writing learning curves and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the config's seed list (repeatable).
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Replaces the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted-path config override, e.g. optimizer.beta=2 (repeatable).
        #[arg(long = "override")]
        overrides: Vec<String>,
    },
    /// Roll out a checkpointed policy from random initial positions.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 5)]
        n_initials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "eval-out")]
        out: PathBuf,
        /// Sampling box as min_x,min_y,max_x,max_y (goal frame).
        #[arg(long, value_name = "X0,Y0,X1,Y1")]
        r#box: Option<String>,
    },
    /// Emit the entropy-vs-nu table at fixed mean and the fitted gamma.
    EntropyScan {
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 40)]
        points: usize,
        #[arg(long, default_value_t = 1e4)]
        nu_max: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate per-step goal distances over the first training iterations.
    ExcursionStats {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, default_value = "excursions.csv")]
        out: PathBuf,
        #[arg(long = "override")]
        overrides: Vec<String>,
        #[arg(long = "seed")]
        seeds: Vec<u64>,
    },
    /// Print the fitted ln-nu/entropy proportionality constant for a dimension.
    Gamma {
        #[arg(long)]
        dim: usize,
    },
}

fn parse_box(spec: &str) -> Result<EvalBox, HarnessError> {
    let parts: Vec<f64> = spec
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| HarnessError::Config(format!("bad box value '{p}': {e}")))
        })
        .collect::<Result<_, _>>()?;
    if parts.len() != 4 {
        return Err(HarnessError::Config(
            "box needs four values: min_x,min_y,max_x,max_y".into(),
        ));
    }
    Ok(EvalBox {
        min: [parts[0], parts[1]],
        max: [parts[2], parts[3]],
    })
}

fn load_config(
    path: &PathBuf,
    overrides: &[String],
    seeds: &[u64],
    out: Option<&PathBuf>,
) -> Result<RunConfig, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| HarnessError::Config(format!("cannot parse config {}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let mut cfg = RunConfig::from_value(value)?;
    if !seeds.is_empty() {
        cfg.seeds = seeds.to_vec();
    }
    if let Some(out) = out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train {
            config,
            seeds,
            out,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides, &seeds, out.as_ref())?;
            cmd_train(&cfg)?;
            Ok(())
        }
        Command::Eval {
            checkpoint,
            task,
            n_initials,
            seed,
            out,
            r#box,
        } => {
            let task: Task = task.parse().map_err(HarnessError::Config)?;
            let env = make_task(task);
            let bounds = match r#box {
                Some(spec) => parse_box(&spec)?,
                None => EvalBox::default(),
            };
            let results = cmd_eval(&checkpoint, &env, n_initials, seed, bounds, &out)?;
            for (i, r) in results.iter().enumerate() {
                println!(
                    "initial {i} ({:.3}, {:.3}): final distance {:.4} success {}",
                    r.initial[0], r.initial[1], r.final_distance, r.success
                );
            }
            Ok(())
        }
        Command::EntropyScan {
            dim,
            points,
            nu_max,
            out,
        } => {
            cmd_entropy_scan(dim, points, nu_max, out.as_deref())?;
            Ok(())
        }
        Command::ExcursionStats {
            config,
            iters,
            out,
            overrides,
            seeds,
        } => {
            let cfg = load_config(&config, &overrides, &seeds, None)?;
            cmd_excursion_stats(&cfg, iters, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Gamma { dim } => {
            cmd_gamma(dim)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("STABLE_ES_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                eprintln!("config error: STABLE_ES_THREADS must be a positive integer");
                return ExitCode::from(1);
            }
        }
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
