use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use grails::dims::{haystack_dimension, minimax_best_arm, upsilon_best, upsilon_class, upsilon_loss, DimResult};
use grails_bench::experiment::{
    read_traces, run_experiment, run_sweep, write_csv, write_outputs, ExperimentConfig, Settings, SweepKind,
    DEFAULT_CONSTRAINT_COUNTS, DEFAULT_EPSILONS, DEFAULT_SIGMAS,
};
use grails_bench::instances::{generate, Instance, InstanceSpec, Tag};
use grails_bench::verify::verify_run;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "grails-bench", version, about = "Instance generation, experiments and dimension oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Mixture draws per round (and per confidence-bound estimate).
    #[arg(long)]
    budget_samples: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    grid_cells: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Output file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn apply(&self, s: &mut Settings) {
        if let Some(v) = self.budget_samples {
            s.batch = v;
        }
        if let Some(v) = self.burn_in {
            s.burn_in = v;
        }
        if let Some(v) = self.grid_cells {
            s.grid_cells = v;
        }
        if let Some(v) = self.epsilon {
            s.epsilon = v;
        }
    }
}

#[derive(Args)]
struct InstanceArgs {
    #[arg(long, value_enum)]
    tag: Tag,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    truth: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    constraints: usize,
}

impl InstanceArgs {
    fn spec(&self, seed: u64) -> InstanceSpec {
        InstanceSpec {
            tag: self.tag,
            size: self.size.unwrap_or(self.tag.default_size()),
            seed,
            truth: self.truth,
            sigma: self.sigma,
            constraints: self.constraints,
            gap: None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Emit an instance as JSON.
    Gen {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Execute an experiment described by a TOML or JSON file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Brute-force dimensions of a finite instance, printed as JSON.
    Dims {
        /// Instance JSON produced by `gen`; overrides the tag options.
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, value_enum)]
        tag: Option<Tag>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        minimax: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Check traces against an instance.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Desk-scale sweeps emitting plot data.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
        /// Sweep values; defaults depend on the kind.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

type AnyResult<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> AnyResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn load_instance(path: &Path) -> AnyResult<Instance> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn load_config(path: &Path) -> AnyResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    Ok(match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text)?,
        _ => toml::from_str(&text)?,
    })
}

#[derive(Serialize)]
struct DimsReport {
    instance: String,
    functions: usize,
    arms: usize,
    epsilon: f64,
    upsilon_best: Option<DimResult>,
    upsilon_loss: Option<DimResult>,
    upsilon_class: Option<DimResult>,
    haystack: Option<DimResult>,
    minimax_best_arm: Option<usize>,
    errors: Vec<String>,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> AnyResult<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Gen { instance, common } => {
            let inst = generate(&instance.spec(common.seed.unwrap_or(0)))?;
            if !inst.realizability_check()? {
                return Err("generated instance failed its realizability check".into());
            }
            emit(&inst, common.out.as_deref())
        }
        Command::Run { config, common } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            if let Some(t) = common.trials {
                cfg.trials = t;
            }
            common.apply(&mut cfg.settings);
            let out = run_experiment(&cfg)?;
            let dir = common.out.unwrap_or_else(|| PathBuf::from("results"));
            let agg = write_outputs(&dir, &out)?;
            for row in out.rows.iter().filter(|r| r.skipped.is_some()) {
                eprintln!("warning: skipped {} on {}: {}", row.algorithm, row.instance, row.skipped.as_deref().unwrap_or(""));
            }
            for a in agg {
                println!("{}\t{}\tmean_queries={:.3}\tse={:.3}\tcorrect={:.3}", a.instance, a.algorithm, a.mean_queries, a.se_queries, a.correct_rate);
            }
            Ok(())
        }
        Command::Dims { instance, tag, size, minimax, common } => {
            let inst = match (instance, tag) {
                (Some(p), _) => load_instance(&p)?,
                (None, Some(t)) => generate(&InstanceSpec::new(t, size.unwrap_or(t.default_size()), common.seed.unwrap_or(0)))?,
                (None, None) => return Err("pass --instance or --tag".into()),
            };
            let fc = inst.finite_class()?.ok_or("dimensions need a finite instance")?;
            let grid = inst.output_grid().ok_or("dimensions need a discrete grid")?;
            let eps = common.epsilon.unwrap_or(0.0);
            let mut errors = vec![];
            let mut keep = |r: grails::Result<DimResult>| r.map_err(|e| errors.push(e.to_string())).ok();
            let shifted = fc.shifted_nonnegative();
            let report = DimsReport {
                instance: inst.spec.tag.name().into(),
                functions: fc.len(),
                arms: fc.n(),
                epsilon: eps,
                upsilon_best: keep(upsilon_best(&fc, &grid, eps)),
                upsilon_loss: keep(upsilon_loss(&shifted, &shifted.grid())),
                upsilon_class: keep(upsilon_class(&fc, &grid)),
                haystack: keep(haystack_dimension(&fc, &grid, eps)),
                minimax_best_arm: if minimax {
                    minimax_best_arm(&fc, &grid, eps).map_err(|e| errors.push(e.to_string())).ok()
                } else {
                    None
                },
                errors,
            };
            emit(&report, common.out.as_deref())
        }
        Command::Verify { instance, traces, common } => {
            let inst = load_instance(&instance)?;
            let eps = common.epsilon.unwrap_or(0.0);
            let mut failures = 0;
            for t in read_traces(&traces)? {
                let r = verify_run(&inst, &t.record, eps);
                failures += usize::from(!r.pass);
                println!("{}", serde_json::to_string(&serde_json::json!({
                    "algorithm": t.record.algorithm, "trial": t.trial, "report": r
                }))?);
            }
            if failures > 0 {
                return Err(format!("{failures} trace(s) failed verification").into());
            }
            Ok(())
        }
        Command::Sweep { kind, values, common } => {
            let values = if values.is_empty() {
                match kind {
                    SweepKind::Sigma => DEFAULT_SIGMAS.to_vec(),
                    SweepKind::Constraints => DEFAULT_CONSTRAINT_COUNTS.iter().map(|&c| c as f64).collect(),
                    SweepKind::Epsilon => DEFAULT_EPSILONS.to_vec(),
                }
            } else {
                values
            };
            let mut settings = Settings::default();
            common.apply(&mut settings);
            let (plot, out) = run_sweep(kind, &values, common.trials.unwrap_or(10), common.seed.unwrap_or(0), &settings)?;
            let dir = common.out.unwrap_or_else(|| PathBuf::from("results"));
            write_outputs(&dir, &out)?;
            let name = match kind {
                SweepKind::Sigma => "plot_sigma.csv",
                SweepKind::Constraints => "plot_constraints.csv",
                SweepKind::Epsilon => "plot_epsilon.csv",
            };
            write_csv(&dir.join(name), &plot)?;
            for p in plot {
                println!("x={}\t{}\tmean_queries={:.3}\tse={:.3}", p.x, p.algorithm, p.mean_queries, p.se_queries);
            }
            Ok(())
        }
    }
}
