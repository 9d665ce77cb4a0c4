//! Experiment driver: runs algorithm × instance × seed grids and aggregates the results.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use grails::baselines::{run_gp_ucb, run_oful_style, run_unif, BaselineConfig, BaselineStop};
use grails::grails::{
    run_active_classification, run_best_arm, run_best_arm_estimated, run_continuous, run_enum_best_arm, run_enum_loss_min,
    run_loss_min, Estimation, RunConfig, RunRecord, TargetStop,
};
use grails::sampler::{derive_seed, ChainConfig, DEFAULT_BATCH, DEFAULT_BURN_IN, DEFAULT_THINNING};
use grails::version_space::{ContinuousGrid, VersionSpace};
use grails::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::instances::{generate, ClassSpec, Instance, InstanceSpec, Tag, CONVEX_SCALE, RKHS_BOUND};
use crate::verify::verify_run;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Algorithm {
    Grails,
    GrailsExact,
    GrailsEstimated,
    GrailsLoss,
    EnumBestArm,
    EnumLoss,
    Classification,
    Unif,
    GpUcb,
    Oful,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Grails => "grails",
            Algorithm::GrailsExact => "grails_exact",
            Algorithm::GrailsEstimated => "grails_estimated",
            Algorithm::GrailsLoss => "grails_loss",
            Algorithm::EnumBestArm => "enum_best_arm",
            Algorithm::EnumLoss => "enum_loss",
            Algorithm::Classification => "classification",
            Algorithm::Unif => "unif",
            Algorithm::GpUcb => "gp_ucb",
            Algorithm::Oful => "oful",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Each algorithm's own stopping rule.
    Native,
    /// Stop once the best observed label is within `epsilon` of the true minimum.
    SimpleRegret,
    Identification,
    Budget(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub epsilon: f64,
    pub batch: usize,
    pub burn_in: usize,
    pub thinning: usize,
    /// Cells of the continuous output grid.
    pub grid_cells: usize,
    pub delta: f64,
    pub stop: StopRule,
    pub audit: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            epsilon: 0.0,
            batch: DEFAULT_BATCH,
            burn_in: DEFAULT_BURN_IN,
            thinning: DEFAULT_THINNING,
            grid_cells: 200,
            delta: 0.05,
            stop: StopRule::Native,
            audit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    pub instances: Vec<InstanceSpec>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub settings: Settings,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.algorithms.is_empty() || self.instances.is_empty() {
            return Err(Error::InvalidArgument("need at least one algorithm and one instance".into()));
        }
        Ok(())
    }
}

/// Output range of the continuous grid for kernel and convex instances.
pub fn output_range(inst: &Instance) -> (f64, f64) {
    match &inst.class {
        ClassSpec::Kernel { bound, .. } => (-bound, *bound),
        ClassSpec::Convex { .. } => (0.0, CONVEX_SCALE),
        _ => (-RKHS_BOUND, RKHS_BOUND),
    }
}

fn version_space(inst: &Instance, settings: &Settings, eps: f64) -> Result<VersionSpace> {
    let model = inst.model()?;
    match inst.output_grid() {
        Some(g) => VersionSpace::discrete(model, g, eps),
        None => {
            let (lo, hi) = output_range(inst);
            VersionSpace::continuous(model, ContinuousGrid::new(lo, hi, settings.grid_cells)?, eps)
        }
    }
}

fn run_config(inst: &Instance, settings: &Settings, seed: u64) -> RunConfig {
    RunConfig {
        chain: ChainConfig {
            burn_in: settings.burn_in,
            thinning: settings.thinning,
            seed: derive_seed(seed, 0xC4A1),
            ..ChainConfig::default()
        },
        estimation: Estimation::Batch { samples: settings.batch },
        target: match settings.stop {
            StopRule::SimpleRegret => Some(TargetStop::SimpleRegret(settings.epsilon)),
            StopRule::Budget(b) => Some(TargetStop::Budget(b)),
            _ => None,
        },
        audit: settings.audit.then(|| inst.truth.clone()),
        seed,
        record_objectives: false,
        ..RunConfig::default()
    }
}

fn baseline_stop(settings: &Settings) -> BaselineStop {
    match settings.stop {
        StopRule::SimpleRegret | StopRule::Native => BaselineStop::SimpleRegret(settings.epsilon),
        StopRule::Identification => BaselineStop::Identification,
        StopRule::Budget(b) => BaselineStop::Budget(b),
    }
}

fn need<T>(x: Option<T>, what: &str) -> Result<T> {
    x.ok_or_else(|| Error::InvalidArgument(format!("instance does not support {what}")))
}

/// One run of `alg` on `inst`.
pub fn run_algorithm(alg: Algorithm, inst: &Instance, settings: &Settings, seed: u64) -> Result<RunRecord> {
    let oracle = inst.oracle()?;
    let eps = settings.epsilon;
    let cfg = run_config(inst, settings, seed);
    match alg {
        Algorithm::Grails => {
            let vs = version_space(inst, settings, eps)?;
            if inst.is_discrete() {
                run_best_arm(vs, &oracle, &cfg)
            } else {
                run_continuous(vs, &oracle, &cfg)
            }
        }
        Algorithm::GrailsExact => {
            run_best_arm(version_space(inst, settings, eps)?, &oracle, &RunConfig { estimation: Estimation::Exact, ..cfg })
        }
        Algorithm::GrailsEstimated => run_best_arm_estimated(version_space(inst, settings, eps)?, &oracle, settings.delta, &cfg),
        Algorithm::GrailsLoss => run_loss_min(version_space(inst, settings, 0.0)?, &oracle, &cfg),
        Algorithm::EnumBestArm => run_enum_best_arm(&need(inst.finite_class()?, "enumeration")?, &oracle, eps),
        Algorithm::EnumLoss => run_enum_loss_min(&need(inst.finite_class()?, "enumeration")?, &oracle),
        Algorithm::Classification => {
            let vs = VersionSpace::classification(inst.model()?, need(inst.output_grid(), "classification")?)?;
            run_active_classification(vs, &oracle, &cfg)
        }
        Algorithm::Unif => Ok(run_unif(&oracle, baseline_stop(settings), seed)),
        Algorithm::GpUcb => run_gp_ucb(&need(inst.gram(), "a kernel")?, &oracle, baseline_stop(settings)),
        Algorithm::Oful => {
            let bc = BaselineConfig {
                seed,
                samples: settings.batch,
                chain: cfg.chain,
                eps,
                stop: match settings.stop {
                    StopRule::Native => None,
                    _ => Some(baseline_stop(settings)),
                },
            };
            run_oful_style(version_space(inst, settings, eps)?, &oracle, &bc)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub instance: String,
    pub algorithm: String,
    pub trial: usize,
    pub seed: u64,
    pub queries: usize,
    pub loss: f64,
    pub returned_arm: Option<usize>,
    pub correct: Option<bool>,
    pub first_good_round: Option<usize>,
    pub stop_reason: String,
    pub audit_violations: usize,
    pub verified: bool,
    pub elapsed_ms: u128,
    /// Error text when the pairing was skipped.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub instance: String,
    pub algorithm: String,
    pub trials: usize,
    pub mean_queries: f64,
    pub se_queries: f64,
    pub mean_loss: f64,
    pub correct_rate: f64,
    pub verified_rate: f64,
    pub audit_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub instance: String,
    pub trial: usize,
    pub record: RunRecord,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<TrialRow>,
    pub traces: Vec<TraceLine>,
}

/// Stable key naming an instance family and its parameters (not its seed).
pub fn instance_key(spec: &InstanceSpec) -> String {
    let mut k = format!("{}[n={}", spec.tag.name(), spec.size);
    if let Some(s) = spec.sigma {
        k += &format!(",sigma={s}");
    }
    if spec.constraints > 0 || spec.tag == Tag::RkhsPriorKnowledge {
        k += &format!(",constraints={}", spec.constraints);
    }
    if let Some(t) = spec.truth {
        k += &format!(",truth={t}");
    }
    k + "]"
}

/// Runs every (instance, trial, algorithm) triple. Trial `t` reseeds each instance with a
/// seed derived from the config seed, so random tags draw a fresh truth per trial.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..config.instances.len()).flat_map(|i| (0..config.trials).map(move |t| (i, t))).collect();
    let results: Vec<Vec<(TrialRow, Option<TraceLine>)>> = jobs
        .par_iter()
        .map(|&(i, t)| {
            let trial_seed = derive_seed(config.seed, (i as u64) << 32 | t as u64);
            let spec = InstanceSpec { seed: derive_seed(config.instances[i].seed, t as u64), ..config.instances[i].clone() };
            let key = instance_key(&config.instances[i]);
            let inst = generate(&spec);
            config
                .algorithms
                .iter()
                .map(|&alg| {
                    let start = Instant::now();
                    let outcome = inst.clone().and_then(|inst| run_algorithm(alg, &inst, &config.settings, trial_seed).map(|r| (inst, r)));
                    let elapsed_ms = start.elapsed().as_millis();
                    match outcome {
                        Ok((inst, record)) => {
                            let report = verify_run(&inst, &record, config.settings.epsilon);
                            let row = TrialRow {
                                instance: key.clone(),
                                algorithm: alg.name().into(),
                                trial: t,
                                seed: trial_seed,
                                queries: record.total_queries,
                                loss: record.total_loss,
                                returned_arm: record.returned_arm,
                                correct: report.returned_good,
                                first_good_round: record.first_good_round,
                                stop_reason: format!("{:?}", record.stop_reason),
                                audit_violations: record.audit_violations,
                                verified: report.pass,
                                elapsed_ms,
                                skipped: None,
                            };
                            (row, Some(TraceLine { instance: key.clone(), trial: t, record }))
                        }
                        Err(e) => (
                            TrialRow {
                                instance: key.clone(),
                                algorithm: alg.name().into(),
                                trial: t,
                                seed: trial_seed,
                                queries: 0,
                                loss: 0.0,
                                returned_arm: None,
                                correct: None,
                                first_good_round: None,
                                stop_reason: "skipped".into(),
                                audit_violations: 0,
                                verified: false,
                                elapsed_ms,
                                skipped: Some(e.to_string()),
                            },
                            None,
                        ),
                    }
                })
                .collect()
        })
        .collect();
    let mut out = ExperimentOutput::default();
    for (row, trace) in results.into_iter().flatten() {
        out.rows.push(row);
        out.traces.extend(trace);
    }
    Ok(out)
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Aggregates over non-skipped rows, keyed by (instance, algorithm) in first-seen order.
pub fn aggregate(rows: &[TrialRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, String)> = vec![];
    for r in rows {
        let k = (r.instance.clone(), r.algorithm.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .filter_map(|(instance, algorithm)| {
            let group: Vec<&TrialRow> =
                rows.iter().filter(|r| r.instance == instance && r.algorithm == algorithm && r.skipped.is_none()).collect();
            if group.is_empty() {
                return None;
            }
            let q: Vec<f64> = group.iter().map(|r| r.queries as f64).collect();
            let (mean_queries, se_queries) = mean_se(&q);
            let nt = group.len() as f64;
            Some(AggregateRow {
                trials: group.len(),
                mean_queries,
                se_queries,
                mean_loss: group.iter().map(|r| r.loss).sum::<f64>() / nt,
                correct_rate: group.iter().filter(|r| r.correct != Some(false)).count() as f64 / nt,
                verified_rate: group.iter().filter(|r| r.verified).count() as f64 / nt,
                audit_violations: group.iter().map(|r| r.audit_violations).sum(),
                instance,
                algorithm,
            })
        })
        .collect()
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("output error: {e}"))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    for r in rows {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Writes `traces.jsonl`, `results.csv` and `aggregate.csv` under `dir`.
pub fn write_outputs(dir: &Path, out: &ExperimentOutput) -> Result<Vec<AggregateRow>> {
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let mut traces = BufWriter::new(File::create(dir.join("traces.jsonl")).map_err(io_err)?);
    for t in &out.traces {
        serde_json::to_writer(&mut traces, t).map_err(io_err)?;
        writeln!(traces).map_err(io_err)?;
    }
    traces.flush().map_err(io_err)?;
    let rows: Vec<TrialRow> = out.rows.iter().cloned().map(|mut r| {
        // Flatten the optional text column for CSV.
        r.skipped = r.skipped.map(|s| s.replace('\n', " "));
        r
    }).collect();
    write_csv(&dir.join("results.csv"), &rows)?;
    let agg = aggregate(&out.rows);
    write_csv(&dir.join("aggregate.csv"), &agg)?;
    Ok(agg)
}

/// Re-reads `traces.jsonl`.
pub fn read_traces(path: &Path) -> Result<Vec<TraceLine>> {
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).map_err(io_err)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepKind {
    Sigma,
    Constraints,
    Epsilon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub x: f64,
    pub algorithm: String,
    pub mean_queries: f64,
    pub se_queries: f64,
    pub trials: usize,
}

pub const DEFAULT_SIGMAS: [f64; 3] = [0.05, 0.1, 0.2];
pub const DEFAULT_CONSTRAINT_COUNTS: [usize; 3] = [0, 25, 50];
pub const DEFAULT_EPSILONS: [f64; 3] = [0.1, 0.03, 0.01];

/// Desk-scale sweeps producing one plot row per (x, algorithm).
pub fn run_sweep(kind: SweepKind, values: &[f64], trials: usize, seed: u64, settings: &Settings) -> Result<(Vec<PlotRow>, ExperimentOutput)> {
    let mut plot = vec![];
    let mut all = ExperimentOutput::default();
    for &x in values {
        let (spec, algorithms, s) = match kind {
            SweepKind::Sigma => (
                InstanceSpec::new(Tag::RkhsRandom, 10, seed).with_sigma(x),
                vec![Algorithm::Grails, Algorithm::GpUcb, Algorithm::Oful, Algorithm::Unif],
                Settings { stop: StopRule::SimpleRegret, epsilon: 0.01, ..settings.clone() },
            ),
            SweepKind::Constraints => (
                InstanceSpec::new(Tag::RkhsPriorKnowledge, 100, seed).with_constraints(x as usize),
                vec![Algorithm::Grails, Algorithm::Oful, Algorithm::Unif],
                Settings { stop: StopRule::SimpleRegret, epsilon: 0.005, ..settings.clone() },
            ),
            SweepKind::Epsilon => (
                InstanceSpec::new(Tag::ConvexQuadratic, 300, seed),
                vec![Algorithm::Grails, Algorithm::Oful, Algorithm::Unif],
                Settings { stop: StopRule::SimpleRegret, epsilon: x, ..settings.clone() },
            ),
        };
        let out = run_experiment(&ExperimentConfig { algorithms, instances: vec![spec], trials, seed, settings: s })?;
        for a in aggregate(&out.rows) {
            plot.push(PlotRow { x, algorithm: a.algorithm, mean_queries: a.mean_queries, se_queries: a.se_queries, trials: a.trials });
        }
        all.rows.extend(out.rows);
        all.traces.extend(out.traces);
    }
    Ok((plot, all))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_seeds_one_aggregate() {
        let cfg = ExperimentConfig {
            algorithms: vec![Algorithm::EnumBestArm],
            instances: vec![InstanceSpec::new(Tag::RegretGap, 6, 1)],
            trials: 3,
            seed: 9,
            settings: Settings::default(),
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.traces.len(), 3);
        let agg = aggregate(&out.rows);
        assert_eq!(agg.len(), 1);
        let q: Vec<f64> = out.rows.iter().map(|r| r.queries as f64).collect();
        assert_eq!(agg[0].mean_queries, q.iter().sum::<f64>() / 3.0);
    }

    #[test]
    fn incompatible_pairing_is_skipped() {
        let cfg = ExperimentConfig {
            algorithms: vec![Algorithm::GpUcb],
            instances: vec![InstanceSpec::new(Tag::Thresholds, 6, 1)],
            trials: 1,
            seed: 0,
            settings: Settings::default(),
        };
        let out = run_experiment(&cfg).unwrap();
        assert!(out.rows[0].skipped.is_some());
        assert!(aggregate(&out.rows).is_empty());
    }

    #[test]
    fn outputs_round_trip() {
        let cfg = ExperimentConfig {
            algorithms: vec![Algorithm::GrailsExact, Algorithm::Unif],
            instances: vec![InstanceSpec::new(Tag::Prop6Linear, 8, 0)],
            trials: 2,
            seed: 4,
            settings: Settings::default(),
        };
        let out = run_experiment(&cfg).unwrap();
        let dir = std::env::temp_dir().join(format!("grails-bench-test-{}", std::process::id()));
        write_outputs(&dir, &out).unwrap();
        let back = read_traces(&dir.join("traces.jsonl")).unwrap();
        assert_eq!(back, out.traces);
        std::fs::remove_dir_all(&dir).ok();
    }
}
