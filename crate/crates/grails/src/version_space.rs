//! Discretized prediction layer: output grids, the query log, components `C_l(O_t)`,
//! removal events, phase mixtures and the STOP test.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::function_classes::{FiniteModel, Model, OutputConstraint, Truth};
use crate::geometry::{find_interior_point, locate_interior_point, ParamBody, Probe, PROJECTION_RESTARTS};
use crate::sampler::{hit_and_run_sample, ChainConfig, FiniteMixture, MixtureDistribution};

/// Left cell boundaries are strict; encoded as closed with this offset.
pub const CELL_TOL: f64 = 1e-9;

/// Finite ordered label set with round-half-down rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputGrid {
    values: Vec<f64>,
}

impl OutputGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return invalid("output grid needs at least two values");
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("output grid values must be finite and strictly increasing");
        }
        Ok(OutputGrid { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    /// Index of the nearest value, ties to the lower one.
    pub fn index_of(&self, z: f64) -> usize {
        self.values.windows(2).take_while(|w| z > 0.5 * (w[0] + w[1])).count()
    }

    pub fn round(&self, z: f64) -> f64 {
        self.values[self.index_of(z)]
    }

    /// `(lo, hi]` for value `j`, with infinite outer ends.
    pub fn cell(&self, j: usize) -> (f64, f64) {
        let lo = if j == 0 { f64::NEG_INFINITY } else { 0.5 * (self.values[j - 1] + self.values[j]) };
        let hi = if j + 1 == self.values.len() { f64::INFINITY } else { 0.5 * (self.values[j] + self.values[j + 1]) };
        (lo, hi)
    }

    pub fn label_index(&self, y: f64) -> Option<usize> {
        let j = self.index_of(y);
        ((self.values[j] - y).abs() <= 1e-12 * self.values[j].abs().max(1.0)).then_some(j)
    }

    /// Largest value strictly below `min_observed − eps`.
    pub fn better_threshold(&self, min_observed: f64, eps: f64) -> Option<usize> {
        let bar = min_observed - eps;
        self.values.iter().rposition(|&v| v < bar)
    }
}

/// Equal-width cells `[lo + (j−1)δ, lo + jδ)` over `[lo, hi]`, the last one closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousGrid {
    lo: f64,
    hi: f64,
    cells: usize,
}

impl ContinuousGrid {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || cells == 0 {
            return invalid("continuous grid needs a finite range lo < hi and at least one cell");
        }
        Ok(ContinuousGrid { lo, hi, cells })
    }

    /// Grid on `[−1, 1]` with cell width `width`.
    pub fn unit(width: f64) -> Result<Self> {
        if !(width > 0.0 && width <= 2.0) {
            return invalid("cell width must lie in (0, 2]");
        }
        Self::new(-1.0, 1.0, (2.0 / width).round().max(1.0) as usize)
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Values outside the range fall in the outermost cells.
    pub fn index_of(&self, z: f64) -> usize {
        let j = ((z - self.lo) / self.width()).floor();
        (j.max(0.0) as usize).min(self.cells - 1)
    }

    pub fn interval(&self, j: usize) -> (f64, f64) {
        let w = self.width();
        (self.lo + w * j as f64, if j + 1 == self.cells { self.hi } else { self.lo + w * (j + 1) as f64 })
    }

    pub fn midpoint(&self, j: usize) -> f64 {
        let (a, b) = self.interval(j);
        0.5 * (a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cells {
    Grid(OutputGrid),
    Intervals(ContinuousGrid),
}

impl Cells {
    pub fn len(&self) -> usize {
        match self {
            Cells::Grid(g) => g.len(),
            Cells::Intervals(c) => c.cells(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, z: f64) -> usize {
        match self {
            Cells::Grid(g) => g.index_of(z),
            Cells::Intervals(c) => c.index_of(z),
        }
    }

    /// Grid value, or cell midpoint.
    pub fn value(&self, j: usize) -> f64 {
        match self {
            Cells::Grid(g) => g.values()[j],
            Cells::Intervals(c) => c.midpoint(j),
        }
    }

    /// Constraints placing prediction `i` in cell `j`.
    pub fn constraints(&self, i: usize, j: usize) -> Vec<OutputConstraint> {
        let mut out = Vec::with_capacity(2);
        match self {
            Cells::Grid(g) => {
                let (lo, hi) = g.cell(j);
                if hi.is_finite() {
                    out.push(OutputConstraint::upper(i, hi));
                }
                if lo.is_finite() {
                    out.push(OutputConstraint::lower(i, lo + CELL_TOL));
                }
            }
            Cells::Intervals(c) => {
                let (lo, hi) = c.interval(j);
                if j + 1 < c.cells() {
                    out.push(OutputConstraint::upper(i, hi - CELL_TOL));
                }
                if j > 0 {
                    out.push(OutputConstraint::lower(i, lo));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryLog {
    entries: Vec<(usize, f64)>,
    cells: Vec<usize>,
}

impl QueryLog {
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, arm: usize) -> bool {
        self.entries.iter().any(|e| e.0 == arm)
    }

    pub fn min_label(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.1).reduce(f64::min)
    }

    /// First arm attaining the minimum observed label.
    pub fn argmin(&self) -> Option<usize> {
        let m = self.min_label()?;
        self.entries.iter().find(|e| e.1 == m).map(|e| e.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Discrete,
    Continuous,
    Classification,
    Threshold,
}

/// Query log over a model, with the mode-specific notion of a removed function.
#[derive(Debug, Clone)]
pub struct VersionSpace {
    model: Arc<Model>,
    cells: Cells,
    mode: Mode,
    eps: f64,
    gamma: f64,
    log: QueryLog,
}

/// Per-sample rounded view: cell index and removal-by-goodness flag for every arm.
#[derive(Debug, Clone)]
pub struct SampleView {
    pub cells: Vec<usize>,
    pub good: Vec<bool>,
}

impl VersionSpace {
    fn new(model: Arc<Model>, cells: Cells, mode: Mode, eps: f64, gamma: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return invalid("epsilon must be nonnegative");
        }
        Ok(VersionSpace { model, cells, mode, eps, gamma, log: QueryLog::default() })
    }

    pub fn discrete(model: Arc<Model>, grid: OutputGrid, eps: f64) -> Result<Self> {
        Self::new(model, Cells::Grid(grid), Mode::Discrete, eps, 0.0)
    }

    pub fn continuous(model: Arc<Model>, grid: ContinuousGrid, eps: f64) -> Result<Self> {
        Self::new(model, Cells::Intervals(grid), Mode::Continuous, eps, 0.0)
    }

    pub fn classification(model: Arc<Model>, grid: OutputGrid) -> Result<Self> {
        Self::new(model, Cells::Grid(grid), Mode::Classification, 0.0, 0.0)
    }

    pub fn threshold(model: Arc<Model>, grid: OutputGrid, gamma: f64) -> Result<Self> {
        Self::new(model, Cells::Grid(grid), Mode::Threshold, 0.0, gamma)
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn cells(&self) -> &Cells {
        &self.cells
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn log(&self) -> &QueryLog {
        &self.log
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn unqueried(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.log.contains(i)).collect()
    }

    pub fn observe(&mut self, arm: usize, y: f64) -> Result<()> {
        if arm >= self.n() {
            return invalid(format!("arm {arm} out of range"));
        }
        if self.log.contains(arm) {
            return invalid(format!("arm {arm} already queried"));
        }
        let cell = match &self.cells {
            Cells::Grid(g) => g.label_index(y).ok_or_else(|| Error::InvalidArgument(format!("label {y} is off the grid")))?,
            Cells::Intervals(c) => {
                let (lo, hi) = c.range();
                if !(lo..=hi).contains(&y) {
                    return invalid(format!("observation {y} outside [{lo}, {hi}]"));
                }
                c.index_of(y)
            }
        };
        self.log.entries.push((arm, y));
        self.log.cells.push(cell);
        Ok(())
    }

    /// Index of `better_ε`; `None` when nothing on the grid beats the incumbent or the log is empty.
    pub fn better_threshold(&self) -> Option<usize> {
        match &self.cells {
            Cells::Grid(g) => g.better_threshold(self.log.min_label()?, self.eps),
            Cells::Intervals(_) => None,
        }
    }

    pub fn observation_constraints(&self) -> Vec<OutputConstraint> {
        self.log
            .entries
            .iter()
            .zip(&self.log.cells)
            .flat_map(|(&(i, _), &c)| self.cells.constraints(i, c))
            .collect()
    }

    /// Components keyed by the improving arm (`None` for the single-body modes). Empty when
    /// no arm can beat the incumbent.
    pub fn components(&self) -> Vec<(Option<usize>, Vec<OutputConstraint>)> {
        let obs = self.observation_constraints();
        match self.mode {
            Mode::Classification | Mode::Threshold => vec![(None, obs)],
            Mode::Discrete => {
                let Cells::Grid(g) = &self.cells else { unreachable!() };
                let bound = if self.log.is_empty() {
                    None
                } else {
                    match self.better_threshold() {
                        Some(b) => Some(g.cell(b).1),
                        None => return vec![],
                    }
                };
                self.unqueried()
                    .into_iter()
                    .map(|l| {
                        let mut cs = obs.clone();
                        if let Some(hi) = bound {
                            cs.push(OutputConstraint::upper(l, hi));
                        }
                        (Some(l), cs)
                    })
                    .collect()
            }
            Mode::Continuous => self
                .unqueried()
                .into_iter()
                .map(|l| {
                    let mut cs = obs.clone();
                    for &(i, _) in &self.log.entries {
                        cs.push(OutputConstraint { coeffs: vec![(l, 1.0), (i, -1.0)], bound: -self.eps });
                    }
                    (Some(l), cs)
                })
                .collect(),
        }
    }

    pub fn view(&self, preds: &[f64]) -> SampleView {
        let cells: Vec<usize> = preds.iter().map(|&p| self.cells.index_of(p)).collect();
        let good = match self.mode {
            Mode::Classification => vec![false; preds.len()],
            Mode::Threshold => cells.iter().map(|&c| self.cells.value(c) <= self.gamma).collect(),
            Mode::Discrete => {
                let vals: Vec<f64> = cells.iter().map(|&c| self.cells.value(c)).collect();
                let m = vals.iter().copied().fold(f64::INFINITY, f64::min);
                vals.iter().map(|&v| v <= m + self.eps).collect()
            }
            Mode::Continuous => {
                let m = preds.iter().copied().fold(f64::INFINITY, f64::min);
                preds.iter().map(|&v| v <= m + self.eps).collect()
            }
        };
        SampleView { cells, good }
    }

    /// Membership in `R_t`: consistent with the log and no queried arm removed by goodness.
    pub fn contains_view(&self, v: &SampleView) -> bool {
        self.log.entries.iter().zip(&self.log.cells).all(|(&(i, _), &c)| v.cells[i] == c && !v.good[i])
    }

    pub fn contains(&self, preds: &[f64]) -> bool {
        self.contains_view(&self.view(preds))
    }

    /// `r ∈ R_{t,ε}(x_i) ∪ R_t(x_i, y)` for a sample already known to lie in `R_t`.
    pub fn removal_event(&self, arm: usize, cell: usize, preds: &[f64]) -> bool {
        let v = self.view(preds);
        v.cells[arm] != cell || v.good[arm]
    }

    /// Cell index of a label or observation.
    pub fn cell_of(&self, y: f64) -> usize {
        self.cells.index_of(y)
    }
}

/// A component made concrete: a body with witness, or the atoms it retains.
#[derive(Debug, Clone)]
pub enum Realized {
    Body { body: ParamBody, witness: Vec<f64> },
    Atoms(Vec<(usize, f64)>),
}

/// Feasibility bookkeeping across rounds: warm-start witnesses and dead components.
#[derive(Debug, Clone)]
pub struct Realizer {
    attempts: usize,
    witnesses: Vec<Option<Vec<f64>>>,
    dead: Vec<bool>,
    single_witness: Option<Vec<f64>>,
    pub uncertified_eliminations: usize,
}

impl Realizer {
    pub fn new(n: usize) -> Self {
        Realizer {
            attempts: PROJECTION_RESTARTS,
            witnesses: vec![None; n],
            dead: vec![false; n],
            single_witness: None,
            uncertified_eliminations: 0,
        }
    }

    pub fn with_attempts(mut self, attempts: usize) -> Self {
        self.attempts = attempts;
        self
    }

    fn realize_one<R: Rng + ?Sized>(
        &mut self,
        model: &Model,
        constraints: &[OutputConstraint],
        warm: Option<Vec<f64>>,
        rng: &mut R,
    ) -> Option<Realized> {
        match model {
            Model::Finite(m) => {
                let atoms = m.support(constraints);
                (!atoms.is_empty()).then_some(Realized::Atoms(atoms))
            }
            Model::Convex(m) => {
                let body = m.constrained(constraints)?;
                match locate_interior_point(&body, rng, self.attempts, warm.as_deref()) {
                    Probe::Found(witness) => Some(Realized::Body { body, witness }),
                    Probe::Empty => None,
                    Probe::Unknown => {
                        self.uncertified_eliminations += 1;
                        None
                    }
                }
            }
        }
    }

    /// Live components of the current version space. Components found infeasible stay dead
    /// for the rest of the run (they only shrink as the log grows).
    pub fn realize<R: Rng + ?Sized>(&mut self, vs: &VersionSpace, rng: &mut R) -> Vec<(Option<usize>, Realized)> {
        let mut out = Vec::new();
        for (key, cs) in vs.components() {
            match key {
                Some(l) => {
                    if self.dead[l] {
                        continue;
                    }
                    match self.realize_one(&vs.model, &cs, self.witnesses[l].clone(), rng) {
                        Some(r) => {
                            if let Realized::Body { witness, .. } = &r {
                                self.witnesses[l] = Some(witness.clone());
                            }
                            out.push((key, r));
                        }
                        None => self.dead[l] = true,
                    }
                }
                None => {
                    if let Some(r) = self.realize_one(&vs.model, &cs, self.single_witness.clone(), rng) {
                        if let Realized::Body { witness, .. } = &r {
                            self.single_witness = Some(witness.clone());
                        }
                        out.push((key, r));
                    }
                }
            }
        }
        out
    }

    /// Feasibility of `constraints` without touching the caches.
    pub fn feasible<R: Rng + ?Sized>(&mut self, model: &Model, constraints: &[OutputConstraint], rng: &mut R) -> bool {
        let warm = self.single_witness.clone();
        match model {
            Model::Finite(m) => (0..m.len()).any(|a| m.satisfies(a, constraints)),
            Model::Convex(m) => m
                .constrained(constraints)
                .and_then(|b| find_interior_point(&b, rng, self.attempts, warm.as_deref()))
                .is_some(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    AllArmsQueried,
    NothingBetter,
    VersionSpaceEmpty,
    Identified,
    ThresholdMet,
    Budget,
    TargetReached,
}

/// STOP test given the live components of the current round.
pub fn stop_check<R: Rng + ?Sized>(
    vs: &VersionSpace,
    live: &[(Option<usize>, Realized)],
    realizer: &mut Realizer,
    rng: &mut R,
) -> Result<Option<StopReason>> {
    let open = vs.unqueried();
    if open.is_empty() {
        return Ok(Some(StopReason::AllArmsQueried));
    }
    match vs.mode {
        Mode::Discrete => {
            if !vs.log.is_empty() && vs.better_threshold().is_none() {
                return Ok(Some(StopReason::NothingBetter));
            }
            Ok(live.is_empty().then_some(StopReason::VersionSpaceEmpty))
        }
        Mode::Continuous => Ok(live.is_empty().then_some(StopReason::VersionSpaceEmpty)),
        Mode::Threshold => {
            if vs.log.min_label().is_some_and(|m| m <= vs.gamma) {
                return Ok(Some(StopReason::ThresholdMet));
            }
            Ok(live.is_empty().then_some(StopReason::VersionSpaceEmpty))
        }
        Mode::Classification => {
            let obs = vs.observation_constraints();
            for &j in &open {
                let feasible = match live.first() {
                    None => 0,
                    Some((_, Realized::Atoms(atoms))) => {
                        let Model::Finite(m) = &*vs.model else { unreachable!() };
                        let mut seen = vec![false; vs.cells.len()];
                        for &(a, _) in atoms {
                            seen[vs.cells.index_of(m.predictions(a)[j])] = true;
                        }
                        seen.iter().filter(|s| **s).count()
                    }
                    Some((_, Realized::Body { .. })) => {
                        let mut k = 0;
                        for c in 0..vs.cells.len() {
                            let mut cs = obs.clone();
                            cs.extend(vs.cells.constraints(j, c));
                            if realizer.feasible(&vs.model, &cs, rng) {
                                k += 1;
                            }
                        }
                        k
                    }
                };
                if feasible == 0 {
                    return Err(Error::InternalInconsistency(format!("no label is feasible at arm {j}")));
                }
                if feasible > 1 {
                    return Ok(None);
                }
            }
            Ok(Some(StopReason::Identified))
        }
    }
}

/// The phase distribution `P_k` over parameters.
#[derive(Debug, Clone)]
pub enum PhaseMixture {
    Convex(MixtureDistribution),
    Finite(FiniteMixture),
}

impl PhaseMixture {
    pub fn build(model: &Model, live: Vec<(Option<usize>, Realized)>, config: ChainConfig) -> Result<Self> {
        match model {
            Model::Finite(m) => {
                let comps = live
                    .into_iter()
                    .map(|(_, r)| match r {
                        Realized::Atoms(a) => Ok(a),
                        Realized::Body { .. } => Err(Error::InternalInconsistency("body component on a finite model".into())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(PhaseMixture::Finite(FiniteMixture::new(comps, m.len())?))
            }
            Model::Convex(_) => {
                let comps = live
                    .into_iter()
                    .map(|(_, r)| match r {
                        Realized::Body { body, witness } => Ok((body, witness)),
                        Realized::Atoms(_) => Err(Error::InternalInconsistency("atom component on a convex model".into())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(PhaseMixture::Convex(MixtureDistribution::new(comps, config)?))
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PhaseMixture::Convex(m) => m.len(),
            PhaseMixture::Finite(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Prediction vectors of `count` mixture draws.
    pub fn sample_predictions<R: Rng + ?Sized>(&mut self, model: &Model, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        match (self, model) {
            (PhaseMixture::Convex(mix), Model::Convex(m)) => {
                mix.sample(count, rng).into_iter().map(|(_, z)| m.predict(&z)).collect()
            }
            (PhaseMixture::Finite(mix), Model::Finite(m)) => {
                mix.sample(count, rng).into_iter().map(|(_, a)| m.predictions(a).to_vec()).collect()
            }
            _ => unreachable!("mixture built from a different model kind"),
        }
    }

    /// Exact probability of an event on predictions (finite families only).
    pub fn exact_probability(&self, model: &Model, event: impl Fn(&[f64]) -> bool) -> Option<f64> {
        match (self, model) {
            (PhaseMixture::Finite(mix), Model::Finite(m)) => Some(mix.probability(|a| event(m.predictions(a)))),
            _ => None,
        }
    }

    /// Atoms with positive mass and their mass (finite families only).
    pub fn atom_masses(&self) -> Option<Vec<(usize, f64)>> {
        match self {
            PhaseMixture::Finite(mix) => {
                Some(mix.atom_mass().iter().copied().enumerate().filter(|(_, w)| *w > 0.0).collect())
            }
            PhaseMixture::Convex(_) => None,
        }
    }
}

/// Whether the truth lies in some live component of the current version space.
pub fn truth_in_some_component(vs: &VersionSpace, truth: &Truth) -> bool {
    vs.components().iter().any(|(_, cs)| vs.model.truth_satisfies(truth, cs))
}

/// `P_π(S_f)`: exact for finite families, Monte Carlo over the base body otherwise.
pub fn partition_probability<R: Rng + ?Sized>(
    model: &Model,
    grid: &OutputGrid,
    labels: &[f64],
    budget: usize,
    config: &ChainConfig,
    rng: &mut R,
) -> Result<f64> {
    if labels.len() != model.n() {
        return invalid("label vector length must equal the number of arms");
    }
    let matches = |p: &[f64]| p.iter().zip(labels).all(|(&z, &y)| grid.round(z) == y);
    match model {
        Model::Finite(m) => Ok(finite_mass(m, |a| matches(m.predictions(a)))),
        Model::Convex(m) => {
            let start = find_interior_point(&m.body, rng, PROJECTION_RESTARTS, None)
                .ok_or_else(|| Error::NotFound("base body appears empty".into()))?;
            let s = hit_and_run_sample(&m.body, &start, config, budget.max(1))?;
            Ok(s.iter().filter(|z| matches(&m.predict(z))).count() as f64 / s.len() as f64)
        }
    }
}

fn finite_mass(m: &FiniteModel, event: impl Fn(usize) -> bool) -> f64 {
    let total: f64 = (0..m.len()).map(|a| m.weight(a)).sum();
    (0..m.len()).filter(|&a| event(a)).map(|a| m.weight(a)).sum::<f64>() / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_classes::{build_body, ArmPool, FunctionClass, LinearClass, PriorKnowledge};
    use crate::geometry::Norm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g010() -> OutputGrid {
        OutputGrid::new(vec![0.0, 1.0, 10.0]).unwrap()
    }

    #[test]
    fn rounding_examples() {
        let g = g010();
        assert_eq!(g.round(0.4), 0.0);
        assert_eq!(g.round(0.5), 0.0);
        assert_eq!(g.round(5.5), 1.0);
        assert_eq!(g.round(5.500001), 10.0);
        assert_eq!(g.round(-7.0), 0.0);
        assert_eq!(g.cell(1), (0.5, 5.5));
        assert!(OutputGrid::new(vec![1.0]).is_err());
        assert!(OutputGrid::new(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn better_threshold_examples() {
        let g = g010();
        assert_eq!(g.better_threshold(10.0, 0.0), Some(1));
        assert_eq!(g.better_threshold(0.0, 0.0), None);
        assert_eq!(g.better_threshold(10.0, 9.0), Some(0));
    }

    #[test]
    fn continuous_cells() {
        let c = ContinuousGrid::unit(0.5).unwrap();
        assert_eq!(c.cells(), 4);
        assert_eq!(c.index_of(-1.0), 0);
        assert_eq!(c.index_of(-0.5), 1);
        assert_eq!(c.index_of(1.0), 3);
        assert_eq!(c.interval(3), (0.5, 1.0));
    }

    fn prop6_like(n: usize) -> Arc<Model> {
        // f_j: 0 at j+1, 1 at i ≥ j, 10 below j.
        let labels = (1..=n)
            .map(|j| {
                (1..=n)
                    .map(|i| if i == j + 1 { 0.0 } else if i >= j { 1.0 } else { 10.0 })
                    .collect()
            })
            .collect();
        Arc::new(Model::Finite(FiniteModel::from_labels(labels).unwrap()))
    }

    #[test]
    fn empty_log_components_are_base() {
        let vs = VersionSpace::discrete(prop6_like(5), g010(), 0.0).unwrap();
        let comps = vs.components();
        assert_eq!(comps.len(), 5);
        assert!(comps.iter().all(|(_, cs)| cs.is_empty()));
        let cls = VersionSpace::classification(prop6_like(5), g010()).unwrap();
        assert_eq!(cls.components().len(), 1);
    }

    #[test]
    fn components_match_enumeration() {
        // C_l is nonempty iff some consistent function has round(f(x_l)) ≤ better.
        let n = 6;
        let model = prop6_like(n);
        let Model::Finite(fm) = &*model else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for star in 0..n {
            let truth = fm.predictions(star).to_vec();
            let mut vs = VersionSpace::discrete(model.clone(), g010(), 0.0).unwrap();
            for arm in [2usize, 4, 0] {
                vs.observe(arm, truth[arm]).unwrap();
                let mut realizer = Realizer::new(n);
                let live = realizer.realize(&vs, &mut rng);
                let min_obs = vs.log().min_label().unwrap();
                for l in vs.unqueried() {
                    let expect = (0..n).any(|a| {
                        let p = fm.predictions(a);
                        vs.log().entries().iter().all(|&(i, y)| p[i] == y) && p[l] < min_obs
                    });
                    assert_eq!(live.iter().any(|(k, _)| *k == Some(l)), expect, "star {star} l {l}");
                }
            }
        }
    }

    #[test]
    fn stop_after_needle_pair() {
        let n = 6;
        let model = prop6_like(n);
        let Model::Finite(fm) = &*model else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for j in 1..n {
            let f = fm.predictions(j - 1).to_vec();
            let mut vs = VersionSpace::discrete(model.clone(), g010(), 0.0).unwrap();
            // Arm j (1-based) and its neighbour j+1, i.e. the needle.
            vs.observe(j - 1, f[j - 1]).unwrap();
            vs.observe(j, f[j]).unwrap();
            let mut realizer = Realizer::new(n);
            let live = realizer.realize(&vs, &mut rng);
            assert!(stop_check(&vs, &live, &mut realizer, &mut rng).unwrap().is_some());
        }
    }

    #[test]
    fn stop_examples() {
        let model = Arc::new(Model::Finite(FiniteModel::from_labels(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()));
        let g = OutputGrid::new(vec![0.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut vs = VersionSpace::discrete(model.clone(), g.clone(), 0.0).unwrap();
        vs.observe(0, 0.0).unwrap();
        let mut r = Realizer::new(2);
        let live = r.realize(&vs, &mut rng);
        assert_eq!(stop_check(&vs, &live, &mut r, &mut rng).unwrap(), Some(StopReason::NothingBetter));
        vs.observe(1, 1.0).unwrap();
        assert_eq!(stop_check(&vs, &[], &mut r, &mut rng).unwrap(), Some(StopReason::AllArmsQueried));
        assert!(vs.observe(1, 1.0).is_err());
        let mut off = VersionSpace::discrete(model, g, 0.0).unwrap();
        assert!(off.observe(0, 0.5).is_err());
    }

    #[test]
    fn removal_event_examples() {
        let model = prop6_like(3);
        let vs = VersionSpace::discrete(model.clone(), g010(), 0.0).unwrap();
        assert!(vs.removal_event(0, 0, &[0.0, 1.0, 10.0]));
        assert!(!vs.removal_event(1, 1, &[0.0, 1.0, 10.0]));
        let cls = VersionSpace::classification(model, g010()).unwrap();
        assert!(cls.removal_event(0, 1, &[0.0, 1.0, 10.0]));
        assert!(!cls.removal_event(0, 0, &[0.0, 1.0, 10.0]));
    }

    fn linear_line() -> (Arc<Model>, crate::function_classes::ConvexModel) {
        let arms = ArmPool::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8]]).unwrap();
        let m = build_body(&FunctionClass::Linear(LinearClass { norm: Norm::L2, radius: 1.0, arms }), &PriorKnowledge::default()).unwrap();
        (Arc::new(Model::Convex(m.clone())), m)
    }

    #[test]
    fn component_monotonicity_and_coverage() {
        let (model, cm) = linear_line();
        let g = OutputGrid::new(vec![-1.0, -0.5, 0.0, 0.5, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut small = VersionSpace::discrete(model.clone(), g.clone(), 0.0).unwrap();
        small.observe(0, 0.5).unwrap();
        let mut big = small.clone();
        big.observe(1, 0.0).unwrap();
        let mut r = Realizer::new(3);
        for (key, real) in r.realize(&big, &mut rng) {
            let Realized::Body { body, witness } = real else { unreachable!() };
            let s = hit_and_run_sample(&body, &witness, &ChainConfig::with_seed(3), 200).unwrap();
            let (_, small_cs) = small.components().into_iter().find(|(k, _)| *k == key).unwrap();
            for z in &s {
                let p = cm.predict(z);
                assert!(small_cs.iter().all(|c| c.holds(&p, 1e-8)));
                assert!(big.observation_constraints().iter().all(|c| c.holds(&p, 1e-8)));
            }
        }
    }

    #[test]
    fn partition_probability_examples() {
        let arms = ArmPool::new(vec![vec![1.0]]).unwrap();
        let model = Model::Convex(
            build_body(&FunctionClass::Linear(LinearClass { norm: Norm::L2, radius: 1.0, arms }), &PriorKnowledge::default()).unwrap(),
        );
        let g = OutputGrid::new(vec![0.0, 5.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = ChainConfig::with_seed(2);
        assert_eq!(partition_probability(&model, &g, &[0.0], 200, &cfg, &mut rng).unwrap(), 1.0);
        assert_eq!(partition_probability(&model, &g, &[5.0], 200, &cfg, &mut rng).unwrap(), 0.0);
        let fin = prop6_like(8);
        let Model::Finite(fm) = &*fin else { unreachable!() };
        let p = partition_probability(&fin, &g010(), fm.predictions(3), 1, &cfg, &mut rng).unwrap();
        assert!((p - 1.0 / 8.0).abs() < 1e-12);
    }
}
