//! Query-selection algorithms driven by version-space probabilities.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::function_classes::{FiniteModel, Model, Truth};
use crate::geometry::PROJECTION_RESTARTS;
use crate::sampler::{
    derive_seed, estimate_event_mult_stream, estimate_event_stream, BernoulliEvent, ChainConfig, EventStream, SampledEvent,
    DEFAULT_BATCH,
};
use crate::version_space::{
    stop_check, truth_in_some_component, Cells, ContinuousGrid, Mode, OutputGrid, PhaseMixture, Realized, Realizer, SampleView,
    StopReason, VersionSpace,
};

/// Noiseless label table `arm ↦ f*(x_arm)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    values: Vec<f64>,
}

impl Oracle {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return invalid("oracle needs at least one finite value");
        }
        Ok(Oracle { values })
    }

    pub fn query(&self, arm: usize) -> f64 {
        self.values[arm]
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_good(&self, arm: usize, eps: f64) -> bool {
        self.values[arm] <= self.min() + eps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimation {
    /// One shared batch of mixture draws per round.
    Batch { samples: usize },
    /// Exact probabilities (finite families only).
    Exact,
    /// The explicit accuracy schedules with failure probability `delta`.
    Hardened { delta: f64 },
}

/// Harness-level stopping on top of the algorithm's own STOP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetStop {
    /// Stop once the best observed value is within `target` of the true minimum.
    SimpleRegret(f64),
    Budget(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub chain: ChainConfig,
    pub estimation: Estimation,
    pub feasibility_attempts: usize,
    /// Round cap; `None` means `n`.
    pub max_rounds: Option<usize>,
    pub target: Option<TargetStop>,
    pub audit: Option<Truth>,
    pub seed: u64,
    /// Keep per-arm objective values in the trace.
    pub record_objectives: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            chain: ChainConfig::default(),
            estimation: Estimation::Batch { samples: DEFAULT_BATCH },
            feasibility_attempts: PROJECTION_RESTARTS,
            max_rounds: None,
            target: None,
            audit: None,
            seed: 0,
            record_objectives: true,
        }
    }
}

impl RunConfig {
    pub fn seeded(seed: u64) -> Self {
        RunConfig { seed, chain: ChainConfig::with_seed(derive_seed(seed, 0xC4A1)), ..Default::default() }
    }

    pub fn exact(seed: u64) -> Self {
        RunConfig { estimation: Estimation::Exact, ..Self::seeded(seed) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEntry {
    pub round: usize,
    pub phase: usize,
    pub arm: usize,
    pub label: f64,
    pub objective: Vec<Option<f64>>,
    pub loss_so_far: f64,
    /// Mass of the surviving version space under the phase mixture after this round.
    pub survival: Option<f64>,
    /// Enumeration variants: |F_t| before the query and the number of functions removed.
    pub version_space_size: Option<usize>,
    pub removed: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: String,
    pub rounds: Vec<RoundEntry>,
    pub returned_arm: Option<usize>,
    pub total_queries: usize,
    pub total_loss: f64,
    pub stop_reason: StopReason,
    /// First round whose query was good under the oracle (`eps`-good, or `≤ γ` for thresholds).
    pub first_good_round: Option<usize>,
    pub phases: usize,
    pub uncertified_eliminations: usize,
    pub audit_violations: usize,
    pub estimator_samples: u64,
    pub classifier: Option<Vec<f64>>,
}

impl RunRecord {
    pub(crate) fn new(algorithm: &str) -> Self {
        RunRecord {
            algorithm: algorithm.to_string(),
            rounds: vec![],
            returned_arm: None,
            total_queries: 0,
            total_loss: 0.0,
            stop_reason: StopReason::Budget,
            first_good_round: None,
            phases: 1,
            uncertified_eliminations: 0,
            audit_violations: 0,
            estimator_samples: 0,
            classifier: None,
        }
    }

    pub fn queried_arms(&self) -> Vec<usize> {
        self.rounds.iter().map(|r| r.arm).collect()
    }

    pub(crate) fn push(&mut self, entry: RoundEntry, good: bool) {
        self.total_queries += 1;
        self.total_loss = entry.loss_so_far;
        if good && self.first_good_round.is_none() {
            self.first_good_round = Some(entry.round);
        }
        self.rounds.push(entry);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Objective {
    BestArm,
    Loss,
    Classification,
    Threshold,
}

impl Objective {
    fn uses_phases(self) -> bool {
        matches!(self, Objective::BestArm | Objective::Loss)
    }
}

/// Weighted views of the phase distribution: either batch draws (weight 1/S each) or atoms.
struct WeightedViews {
    views: Vec<(SampleView, f64, Vec<f64>)>,
}

impl WeightedViews {
    fn build<R: rand::Rng + ?Sized>(
        vs: &VersionSpace,
        mixture: &mut PhaseMixture,
        estimation: Estimation,
        rng: &mut R,
    ) -> Result<(Self, u64)> {
        let model = vs.model().clone();
        match estimation {
            Estimation::Batch { samples } => {
                let s = samples.max(1);
                let preds = mixture.sample_predictions(&model, s, rng);
                let w = 1.0 / s as f64;
                Ok((WeightedViews { views: preds.into_iter().map(|p| (vs.view(&p), w, p)).collect() }, s as u64))
            }
            Estimation::Exact | Estimation::Hardened { .. } => {
                let Model::Finite(m) = &*model else {
                    return Ok((WeightedViews { views: vec![] }, 0));
                };
                let masses = mixture.atom_masses().expect("finite mixture");
                Ok((
                    WeightedViews {
                        views: masses
                            .into_iter()
                            .map(|(a, w)| (vs.view(m.predictions(a)), w, m.predictions(a).to_vec()))
                            .collect(),
                    },
                    0,
                ))
            }
        }
    }

    /// Mass of `R_t` and, for arm `i`, the mass of `R_t` that survives label `c` at `i`.
    fn keep_masses(&self, vs: &VersionSpace, i: usize, ncells: usize) -> (f64, Vec<f64>) {
        let mut alive = 0.0;
        let mut keep = vec![0.0; ncells];
        for (v, w, _) in &self.views {
            if vs.contains_view(v) {
                alive += w;
                if !v.good[i] {
                    keep[v.cells[i]] += w;
                }
            }
        }
        (alive, keep)
    }

    fn survival(&self, vs: &VersionSpace) -> f64 {
        self.views.iter().filter(|(v, _, _)| vs.contains_view(v)).map(|(_, w, _)| w).sum()
    }

    fn spread(&self, i: usize) -> f64 {
        let (lo, hi) = self
            .views
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, _, p)| (lo.min(p[i]), hi.max(p[i])));
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }
}

/// Removal probabilities `P(R_{t,ε}(x_i) ∪ R_t(x_i, c))` for every cell `c` at arm `i`.
fn removal_probabilities(
    vs: &VersionSpace,
    views: &WeightedViews,
    mixture: &mut PhaseMixture,
    estimation: Estimation,
    objective: Objective,
    i: usize,
    t: usize,
    rng: &mut ChaCha8Rng,
    samples: &mut u64,
) -> Result<Vec<f64>> {
    let ncells = vs.cells().len();
    let n = vs.n();
    let exact = |views: &WeightedViews| {
        let (alive, keep) = views.keep_masses(vs, i, ncells);
        keep.iter().map(|k| (alive - k).max(0.0)).collect::<Vec<f64>>()
    };
    match estimation {
        Estimation::Batch { .. } | Estimation::Exact => Ok(exact(views)),
        Estimation::Hardened { delta } => {
            let delta_t = delta / (2.0 * (t * t) as f64 * ncells as f64 * n as f64);
            let floor = 1.0 / (2.0 * (n * n) as f64 * max_label(vs));
            let model = vs.model().clone();
            let mut out = Vec::with_capacity(ncells);
            let truth_p = if matches!(&*model, Model::Finite(_)) { Some(exact(views)) } else { None };
            for c in 0..ncells {
                let est = match (&truth_p, &mut *mixture) {
                    (Some(ps), _) => {
                        let mut stream = BernoulliEvent { p: ps[c], rng: &mut *rng };
                        run_estimator(&mut stream, objective, n, delta_t, floor)?
                    }
                    (None, PhaseMixture::Convex(mix)) => {
                        let Model::Convex(cm) = &*model else { unreachable!() };
                        let event = |z: &[f64]| {
                            let p = cm.predict(z);
                            let v = vs.view(&p);
                            vs.contains_view(&v) && (v.cells[i] != c || v.good[i])
                        };
                        let mut stream = SampledEvent { mixture: mix, event, rng: &mut *rng };
                        run_estimator(&mut stream, objective, n, delta_t, floor)?
                    }
                    (None, PhaseMixture::Finite(_)) => unreachable!(),
                };
                *samples += est.samples;
                out.push(est.value);
            }
            Ok(out)
        }
    }
}

fn run_estimator<S: EventStream + ?Sized>(
    stream: &mut S,
    objective: Objective,
    n: usize,
    delta_t: f64,
    floor: f64,
) -> Result<crate::sampler::Estimate> {
    match objective {
        Objective::Loss => estimate_event_mult_stream(stream, 0.5, delta_t, floor),
        _ => estimate_event_stream(stream, 1.0 / (32.0 * (n * n) as f64), delta_t),
    }
}

fn max_label(vs: &VersionSpace) -> f64 {
    match vs.cells() {
        Cells::Grid(g) => g.max().max(1.0),
        Cells::Intervals(c) => c.range().1.abs().max(1.0),
    }
}

/// Phase-change test on `R_{t+1}` under `P_k`; returns the survival value used.
fn phase_survival(
    vs: &VersionSpace,
    views: &WeightedViews,
    mixture: &mut PhaseMixture,
    estimation: Estimation,
    t: usize,
    rng: &mut ChaCha8Rng,
    samples: &mut u64,
) -> Result<(f64, bool)> {
    let n = vs.n() as f64;
    match estimation {
        Estimation::Batch { .. } | Estimation::Exact => {
            let s = views.survival(vs);
            Ok((s, s <= 1.0 / (2.0 * n)))
        }
        Estimation::Hardened { delta } => {
            let delta_t = delta / (2.0 * (t * t) as f64 * vs.cells().len() as f64 * n);
            let model = vs.model().clone();
            let est = match (&*model, mixture) {
                (Model::Finite(_), _) => {
                    let p = views.survival(vs);
                    estimate_event_stream(&mut BernoulliEvent { p, rng }, 1.0 / (8.0 * n), delta_t)?
                }
                (Model::Convex(cm), PhaseMixture::Convex(mix)) => {
                    let event = |z: &[f64]| vs.contains(&cm.predict(z));
                    estimate_event_stream(&mut SampledEvent { mixture: mix, event, rng }, 1.0 / (8.0 * n), delta_t)?
                }
                _ => unreachable!(),
            };
            *samples += est.samples;
            Ok((est.value, est.value <= 1.0 / (4.0 * n)))
        }
    }
}

fn select_arm(
    vs: &VersionSpace,
    objective: Objective,
    probs: &[(usize, Vec<f64>)],
    views: &WeightedViews,
) -> (usize, Vec<Option<f64>>) {
    let n = vs.n();
    let mut scores = vec![None; n];
    let mut best: Option<(usize, f64)> = None;
    let all_zero = probs.iter().all(|(_, p)| p.iter().all(|&v| v == 0.0));
    for (i, p) in probs {
        let score = match objective {
            Objective::Loss => (0..p.len())
                .map(|c| {
                    let y = vs.cells().value(c);
                    if y == 0.0 {
                        0.0
                    } else if p[c] == 0.0 {
                        f64::INFINITY
                    } else {
                        y / p[c]
                    }
                })
                .fold(0.0, f64::max),
            _ => p.iter().copied().fold(f64::INFINITY, f64::min),
        };
        scores[*i] = Some(score);
        let better = match (best, objective) {
            (None, _) => true,
            (Some((_, b)), Objective::Loss) => score < b,
            (Some((_, b)), _) => score > b,
        };
        if better {
            best = Some((*i, score));
        }
    }
    let stalled = match objective {
        Objective::Loss => best.is_some_and(|(_, s)| s.is_infinite()),
        _ => all_zero,
    };
    if stalled {
        // Sampling failure: fall back to the widest prediction spread.
        let mut pick = probs[0].0;
        let mut widest = -1.0;
        for (i, _) in probs {
            let s = views.spread(*i);
            if s > widest {
                widest = s;
                pick = *i;
            }
        }
        return (pick, scores);
    }
    (best.map(|b| b.0).unwrap_or(probs[0].0), scores)
}

fn good_eps(vs: &VersionSpace, objective: Objective) -> f64 {
    match objective {
        Objective::Loss => 0.0,
        _ => vs.eps(),
    }
}

fn is_good(vs: &VersionSpace, objective: Objective, oracle: &Oracle, arm: usize) -> bool {
    match objective {
        Objective::Threshold => oracle.query(arm) <= vs.gamma(),
        Objective::Classification => false,
        _ => oracle.is_good(arm, good_eps(vs, objective)),
    }
}

fn run_generic(mut vs: VersionSpace, oracle: &Oracle, objective: Objective, config: &RunConfig, name: &str) -> Result<RunRecord> {
    let n = vs.n();
    if oracle.n() != n {
        return invalid("oracle and model disagree on the number of arms");
    }
    if matches!(config.estimation, Estimation::Exact) && !matches!(&**vs.model(), Model::Finite(_)) {
        return invalid("exact estimation requires a finite family");
    }
    if let Estimation::Hardened { delta } = config.estimation {
        if !(delta > 0.0 && delta < 1.0) {
            return invalid("delta must lie in (0, 1)");
        }
        if objective == Objective::Loss && vs.cells().value(0) < 1.0 {
            return invalid("multiplicative estimation requires every label to be at least 1");
        }
    }
    if objective == Objective::Loss && vs.cells().value(0) < 0.0 {
        return invalid("loss minimization requires nonnegative labels");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut record = RunRecord::new(name);
    let mut realizer = Realizer::new(n).with_attempts(config.feasibility_attempts);
    let max_rounds = config.max_rounds.unwrap_or(n).min(n);
    let model = vs.model().clone();
    let chain_for = |phase: usize| ChainConfig { seed: derive_seed(config.chain.seed, phase as u64), ..config.chain };

    let mut live = realizer.realize(&vs, &mut rng);
    let mut stop = stop_check(&vs, &live, &mut realizer, &mut rng)?;
    let mut phase = 1;
    let mut mixture = if stop.is_none() { Some(PhaseMixture::build(&model, live.clone(), chain_for(phase))?) } else { None };
    let mut good_seen = false;
    let mut t = 0;
    while stop.is_none() {
        if t >= max_rounds {
            stop = Some(StopReason::Budget);
            break;
        }
        t += 1;
        if let Some(truth) = &config.audit {
            if !good_seen && !truth_in_some_component(&vs, truth) {
                record.audit_violations += 1;
            }
        }
        let mix = mixture.as_mut().ok_or_else(|| Error::InternalInconsistency("no phase mixture".into()))?;
        let (views, drawn) = WeightedViews::build(&vs, mix, config.estimation, &mut rng)?;
        record.estimator_samples += drawn;
        let mut probs = Vec::new();
        for i in vs.unqueried() {
            let p = removal_probabilities(&vs, &views, mix, config.estimation, objective, i, t, &mut rng, &mut record.estimator_samples)?;
            probs.push((i, p));
        }
        let (arm, scores) = select_arm(&vs, objective, &probs, &views);
        let y = oracle.query(arm);
        vs.observe(arm, y)?;
        let good = is_good(&vs, objective, oracle, arm);
        good_seen |= good;
        let loss = record.total_loss + y;
        let mut entry = RoundEntry {
            round: t,
            phase,
            arm,
            label: y,
            objective: if config.record_objectives { scores } else { vec![] },
            loss_so_far: loss,
            survival: None,
            version_space_size: None,
            removed: None,
        };

        if let Some(target) = config.target {
            let hit = match target {
                TargetStop::SimpleRegret(eps) => vs.log().min_label().unwrap() <= oracle.min() + eps,
                TargetStop::Budget(b) => t >= b,
            };
            if hit {
                record.push(entry, good);
                stop = Some(StopReason::TargetReached);
                break;
            }
        }

        live = realizer.realize(&vs, &mut rng);
        stop = stop_check(&vs, &live, &mut realizer, &mut rng)?;
        if stop.is_none() {
            if objective.uses_phases() {
                let (s, change) = phase_survival(&vs, &views, mix, config.estimation, t, &mut rng, &mut record.estimator_samples)?;
                entry.survival = Some(s);
                if change {
                    phase += 1;
                    mixture = Some(PhaseMixture::build(&model, live.clone(), chain_for(phase))?);
                }
            } else {
                phase += 1;
                mixture = Some(PhaseMixture::build(&model, live.clone(), chain_for(phase))?);
            }
        }
        record.push(entry, good);
    }
    record.stop_reason = stop.unwrap_or(StopReason::Budget);
    record.phases = phase;
    record.uncertified_eliminations = realizer.uncertified_eliminations;
    record.returned_arm = match objective {
        Objective::Threshold => vs.log().entries().iter().find(|e| e.1 <= vs.gamma()).map(|e| e.0),
        Objective::Classification => None,
        _ => vs.log().argmin(),
    };
    if objective == Objective::Classification {
        record.classifier = Some(complete_labels(&vs, &live)?);
    }
    if record.total_queries == 0 && n > 0 && objective != Objective::Classification {
        return Err(Error::InternalInconsistency("run stopped before any query".into()));
    }
    Ok(record)
}

/// Observed labels, completed by the unique feasible label elsewhere.
fn complete_labels(vs: &VersionSpace, live: &[(Option<usize>, Realized)]) -> Result<Vec<f64>> {
    let Cells::Grid(g) = vs.cells() else { unreachable!() };
    let preds = match (live.first(), &**vs.model()) {
        (Some((_, Realized::Atoms(a))), Model::Finite(m)) => m.predictions(a[0].0).to_vec(),
        (Some((_, Realized::Body { witness, .. })), Model::Convex(m)) => m.predict(witness),
        _ => return Err(Error::InternalInconsistency("version space empty at classification stop".into())),
    };
    let mut out: Vec<f64> = preds.iter().map(|&p| g.round(p)).collect();
    for &(i, y) in vs.log().entries() {
        out[i] = y;
    }
    Ok(out)
}

/// Best / ε-good arm identification with phase mixtures.
pub fn run_best_arm(vs: VersionSpace, oracle: &Oracle, config: &RunConfig) -> Result<RunRecord> {
    if vs.mode() != Mode::Discrete {
        return invalid("run_best_arm needs a discrete version space");
    }
    run_generic(vs, oracle, Objective::BestArm, config, "grails")
}

/// `run_best_arm` with the explicit estimation schedule.
pub fn run_best_arm_estimated(vs: VersionSpace, oracle: &Oracle, delta: f64, config: &RunConfig) -> Result<RunRecord> {
    let cfg = RunConfig { estimation: Estimation::Hardened { delta }, ..config.clone() };
    if vs.mode() != Mode::Discrete {
        return invalid("run_best_arm_estimated needs a discrete version space");
    }
    run_generic(vs, oracle, Objective::BestArm, &cfg, "grails_estimated")
}

/// Cumulative loss minimization; removal uses ε = 0.
pub fn run_loss_min(vs: VersionSpace, oracle: &Oracle, config: &RunConfig) -> Result<RunRecord> {
    if vs.mode() != Mode::Discrete || vs.eps() != 0.0 {
        return invalid("run_loss_min needs a discrete version space with eps = 0");
    }
    run_generic(vs, oracle, Objective::Loss, config, "grails_loss")
}

pub fn run_loss_min_estimated(vs: VersionSpace, oracle: &Oracle, delta: f64, config: &RunConfig) -> Result<RunRecord> {
    let cfg = RunConfig { estimation: Estimation::Hardened { delta }, ..config.clone() };
    if vs.mode() != Mode::Discrete || vs.eps() != 0.0 {
        return invalid("run_loss_min_estimated needs a discrete version space with eps = 0");
    }
    run_generic(vs, oracle, Objective::Loss, &cfg, "grails_loss_estimated")
}

/// Continuous outputs over equal-width cells.
pub fn run_continuous(vs: VersionSpace, oracle: &Oracle, config: &RunConfig) -> Result<RunRecord> {
    let Cells::Intervals(grid) = vs.cells() else {
        return invalid("run_continuous needs a continuous version space");
    };
    let (lo, hi) = grid.range();
    if oracle.values().iter().any(|v| !(lo..=hi).contains(v)) {
        return invalid(format!("oracle values must lie in [{lo}, {hi}]"));
    }
    run_generic(vs, oracle, Objective::BestArm, config, "grails_continuous")
}

/// Exact recovery of a binary labeling.
pub fn run_active_classification(vs: VersionSpace, oracle: &Oracle, config: &RunConfig) -> Result<RunRecord> {
    if vs.mode() != Mode::Classification {
        return invalid("run_active_classification needs a classification version space");
    }
    run_generic(vs, oracle, Objective::Classification, config, "grails_classification")
}

/// First arm with label `≤ γ`.
pub fn run_threshold(vs: VersionSpace, oracle: &Oracle, config: &RunConfig) -> Result<RunRecord> {
    if vs.mode() != Mode::Threshold {
        return invalid("run_threshold needs a threshold version space");
    }
    run_generic(vs, oracle, Objective::Threshold, config, "grails_threshold")
}

/// Explicit finite class of label vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteClass {
    functions: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl FiniteClass {
    pub fn new(functions: Vec<Vec<f64>>) -> Result<Self> {
        let m = functions.len();
        Self::weighted(functions, vec![1.0; m])
    }

    pub fn weighted(functions: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let Some(first) = functions.first() else { return invalid("finite class is empty") };
        let n = first.len();
        if n == 0 || functions.iter().any(|f| f.len() != n) {
            return invalid("label vectors must share a positive length");
        }
        if functions.iter().flatten().any(|v| !v.is_finite()) {
            return invalid("labels must be finite");
        }
        for a in 0..functions.len() {
            if functions[a + 1..].contains(&functions[a]) {
                return invalid("finite class contains duplicate functions");
            }
        }
        if weights.len() != functions.len() || weights.iter().any(|w| !(*w > 0.0)) {
            return invalid("weights must be positive, one per function");
        }
        Ok(FiniteClass { functions, weights })
    }

    pub fn n(&self) -> usize {
        self.functions[0].len()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[Vec<f64>] {
        &self.functions
    }

    pub fn function(&self, f: usize) -> &[f64] {
        &self.functions[f]
    }

    /// Sorted distinct label values.
    pub fn label_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.functions.iter().flatten().copied().collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// The class's labels as a grid; a single-valued class gets a dummy value above.
    pub fn grid(&self) -> OutputGrid {
        let mut v = self.label_values();
        if v.len() == 1 {
            v.push(v[0] + 1.0);
        }
        OutputGrid::new(v).expect("sorted distinct labels")
    }

    pub fn max_label(&self) -> f64 {
        *self.label_values().last().unwrap()
    }

    pub fn is_good(&self, f: usize, arm: usize, eps: f64) -> bool {
        let row = &self.functions[f];
        let m = row.iter().copied().fold(f64::INFINITY, f64::min);
        row[arm] <= m + eps
    }

    pub fn to_model(&self) -> Model {
        Model::Finite(
            FiniteModel::new(self.functions.clone(), self.functions.clone(), Some(self.weights.clone())).expect("valid class"),
        )
    }

    /// Adds a constant so that the smallest label is zero.
    pub fn shifted_nonnegative(&self) -> FiniteClass {
        let m = self.label_values()[0].min(0.0);
        FiniteClass {
            functions: self.functions.iter().map(|f| f.iter().map(|v| v - m).collect()).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// An arm that is `eps`-good for every function in `set`, preferring `prefer`.
fn common_good_arm(fc: &FiniteClass, set: &[usize], eps: f64, prefer: Option<usize>) -> Option<usize> {
    let ok = |j: usize| set.iter().all(|&f| fc.is_good(f, j, eps));
    if let Some(p) = prefer {
        if ok(p) {
            return Some(p);
        }
    }
    (0..fc.n()).find(|&j| ok(j))
}

fn enum_run(fc: &FiniteClass, oracle: &Oracle, eps: f64, loss: bool) -> Result<RunRecord> {
    let n = fc.n();
    if oracle.n() != n {
        return invalid("oracle and class disagree on the number of arms");
    }
    if !(0..fc.len()).any(|f| fc.function(f) == oracle.values()) {
        return invalid("oracle is not a member of the class");
    }
    if loss && fc.label_values()[0] < 0.0 {
        return invalid("loss minimization requires nonnegative labels");
    }
    let mut record = RunRecord::new(if loss { "enum_loss" } else { "enum_best_arm" });
    let mut queried = vec![false; n];
    let mut log: Vec<(usize, f64)> = vec![];
    let mut ft: Vec<usize> = (0..fc.len()).collect();
    let mut t = 0;
    loop {
        let consistent: Vec<usize> = (0..fc.len()).filter(|&f| log.iter().all(|&(i, y)| fc.function(f)[i] == y)).collect();
        if consistent.is_empty() {
            return Err(Error::InternalInconsistency("no consistent function left".into()));
        }
        let prefer = log.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|e| e.0);
        if let Some(j) = common_good_arm(fc, &consistent, eps, prefer) {
            record.returned_arm = Some(j);
            record.stop_reason = StopReason::Identified;
            break;
        }
        if ft.is_empty() {
            return Err(Error::InternalInconsistency("version space emptied without identification".into()));
        }
        t += 1;
        let mut scores = vec![None; n];
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !queried[i]) {
            let removal = |y: f64| ft.iter().filter(|&&f| fc.is_good(f, i, eps) || fc.function(f)[i] != y).count();
            let score = if loss {
                let mut worst: f64 = 0.0;
                for &f in &ft {
                    let y = fc.function(f)[i];
                    let r = removal(y);
                    let ratio = if y == 0.0 { 0.0 } else if r == 0 { f64::INFINITY } else { y / r as f64 };
                    worst = worst.max(ratio);
                }
                worst
            } else {
                fc.label_values().iter().map(|&y| removal(y)).min().unwrap_or(0) as f64
            };
            scores[i] = Some(score);
            let better = match best {
                None => true,
                Some((_, b)) => if loss { score < b } else { score > b },
            };
            if better {
                best = Some((i, score));
            }
        }
        let Some((arm, _)) = best else {
            return Err(Error::InternalInconsistency("no unqueried arm left".into()));
        };
        let y = oracle.query(arm);
        queried[arm] = true;
        log.push((arm, y));
        let before = ft.len();
        ft.retain(|&f| !(fc.is_good(f, arm, eps) || fc.function(f)[arm] != y));
        let entry = RoundEntry {
            round: t,
            phase: 1,
            arm,
            label: y,
            objective: scores,
            loss_so_far: record.total_loss + y,
            survival: None,
            version_space_size: Some(before),
            removed: Some(before - ft.len()),
        };
        record.push(entry, oracle.is_good(arm, eps));
    }
    Ok(record)
}

/// Greedy set-cover style best-arm identification over an explicit class.
pub fn run_enum_best_arm(fc: &FiniteClass, oracle: &Oracle, eps: f64) -> Result<RunRecord> {
    enum_run(fc, oracle, eps, false)
}

/// Loss-to-removal greedy over an explicit class.
pub fn run_enum_loss_min(fc: &FiniteClass, oracle: &Oracle) -> Result<RunRecord> {
    enum_run(fc, oracle, 0.0, true)
}

/// Convenience: discrete version space over a finite class.
pub fn finite_version_space(fc: &FiniteClass, eps: f64) -> Result<VersionSpace> {
    VersionSpace::discrete(Arc::new(fc.to_model()), fc.grid(), eps)
}

/// Convenience: continuous version space over `[-1, 1]` with the given cell width.
pub fn unit_continuous(model: Arc<Model>, width: f64, eps: f64) -> Result<VersionSpace> {
    VersionSpace::continuous(model, ContinuousGrid::unit(width)?, eps)
}
