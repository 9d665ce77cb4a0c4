//! Brute-force combinatorial dimensions of small finite classes.
//!
//! Every scan is exponential; guards turn oversized inputs into `ResourceLimit` errors.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::function_classes::Model;
use crate::geometry::{find_interior_point, PROJECTION_RESTARTS};
use crate::grails::FiniteClass;
use crate::sampler::{hit_and_run_sample, ChainConfig};
use crate::version_space::{Cells, OutputGrid};

pub const MAX_ADVERSARIES: f64 = 1e6;
pub const MAX_ARMS: usize = 14;
pub const MAX_HAYSTACK_FUNCTIONS: usize = 16;
pub const MAX_MINIMAX_FUNCTIONS: usize = 16;
pub const MAX_MINIMAX_ARMS: usize = 12;
/// Cap on `|Y|^n · 2^n` for the full-subset loss scan.
pub const MAX_LOSS_WORK: f64 = 4e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimResult {
    pub value: f64,
    /// Maximizing adversary labeling, as grid values.
    pub witness_g: Option<Vec<f64>>,
    /// Minimizing arm set for `witness_g` (or function indices for the haystack dimension).
    pub witness_set: Option<Vec<usize>>,
    /// The same maximum restricted to adversaries that equal some member of the class.
    pub realizable_value: Option<f64>,
    pub work: u64,
}

/// Label-index table plus consistency masks `agree[i][y]`.
struct Table {
    n: usize,
    m: usize,
    labels: Vec<Vec<usize>>,
    agree: Vec<Vec<u64>>,
    all: u64,
}

impl Table {
    fn new(fc: &FiniteClass, grid: &OutputGrid) -> Result<Self> {
        let (n, m) = (fc.n(), fc.len());
        if m > 64 {
            return Err(Error::ResourceLimit(format!("{m} functions exceed the 64-function mask")));
        }
        let labels: Vec<Vec<usize>> =
            fc.functions().iter().map(|f| f.iter().map(|&v| grid.index_of(v)).collect()).collect();
        let mut agree = vec![vec![0u64; grid.len()]; n];
        for (k, row) in labels.iter().enumerate() {
            for (i, &y) in row.iter().enumerate() {
                agree[i][y] |= 1 << k;
            }
        }
        let all = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
        Ok(Table { n, m, labels, agree, all })
    }

    /// `good[j]`: functions whose rounded value at `j` is within `eps` of their rounded minimum.
    fn good(&self, grid: &OutputGrid, eps: f64) -> Vec<u64> {
        let mut good = vec![0u64; self.n];
        for (k, row) in self.labels.iter().enumerate() {
            let vals: Vec<f64> = row.iter().map(|&y| grid.values()[y]).collect();
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            for (j, &v) in vals.iter().enumerate() {
                if v <= min + eps {
                    good[j] |= 1 << k;
                }
            }
        }
        good
    }

    fn consistent(&self, g: &[usize], set: u64) -> u64 {
        let mut cons = self.all;
        let mut s = set;
        while s != 0 {
            let i = s.trailing_zeros() as usize;
            cons &= self.agree[i][g[i]];
            s &= s - 1;
        }
        cons
    }
}

fn guard_adversaries(n: usize, ny: usize) -> Result<()> {
    if n > MAX_ARMS {
        return Err(Error::ResourceLimit(format!("{n} arms exceed the subset-scan limit {MAX_ARMS}")));
    }
    if (ny as f64).powi(n as i32) > MAX_ADVERSARIES {
        return Err(Error::ResourceLimit(format!("{ny}^{n} adversaries exceed {MAX_ADVERSARIES}")));
    }
    Ok(())
}

/// Subsets of `[n]` ordered by size, then numerically.
fn subsets_by_size(n: usize) -> Vec<u64> {
    let mut v: Vec<u64> = (0..1u64 << n).collect();
    v.sort_by_key(|s| (s.count_ones(), *s));
    v
}

fn mask_to_vec(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask >> i & 1 == 1).collect()
}

/// Odometer over `Y^n`.
fn next_labeling(g: &mut [usize], ny: usize) -> bool {
    for v in g.iter_mut() {
        *v += 1;
        if *v < ny {
            return true;
        }
        *v = 0;
    }
    false
}

/// Max over adversaries of the smallest certifying set, where `certified(cons)` judges the
/// set of functions consistent with the adversary on the chosen arms.
fn teaching_scan(fc: &FiniteClass, grid: &OutputGrid, certified: impl Fn(u64) -> bool) -> Result<DimResult> {
    let t = Table::new(fc, grid)?;
    guard_adversaries(t.n, grid.len())?;
    let order = subsets_by_size(t.n);
    let realizable: Vec<&[usize]> = t.labels.iter().map(|r| r.as_slice()).collect();
    let mut g = vec![0usize; t.n];
    let mut best: Option<(usize, Vec<usize>, u64)> = None;
    let mut best_real: Option<usize> = None;
    let mut work = 0u64;
    loop {
        let mut found = None;
        for &s in &order {
            work += 1;
            if certified(t.consistent(&g, s)) {
                found = Some(s);
                break;
            }
        }
        let s = found.ok_or_else(|| Error::InternalInconsistency("full arm set failed to certify".into()))?;
        let size = s.count_ones() as usize;
        if best.as_ref().is_none_or(|b| size > b.0) {
            best = Some((size, g.clone(), s));
        }
        if realizable.contains(&g.as_slice()) && best_real.is_none_or(|b| size > b) {
            best_real = Some(size);
        }
        if !next_labeling(&mut g, grid.len()) {
            break;
        }
    }
    let (size, g, s) = best.expect("at least one adversary");
    Ok(DimResult {
        value: size as f64,
        witness_g: Some(g.iter().map(|&y| grid.values()[y]).collect()),
        witness_set: Some(mask_to_vec(s)),
        realizable_value: best_real.map(|v| v as f64),
        work,
    })
}

/// Smallest query set that, against any adversary, certifies an `eps`-good arm.
pub fn upsilon_best(fc: &FiniteClass, grid: &OutputGrid, eps: f64) -> Result<DimResult> {
    let t = Table::new(fc, grid)?;
    let good = t.good(grid, eps);
    teaching_scan(fc, grid, |cons| cons == 0 || good.iter().any(|&gj| cons & !gj == 0))
}

/// Extended teaching dimension: shrink the consistent set to at most one function.
pub fn upsilon_class(fc: &FiniteClass, grid: &OutputGrid) -> Result<DimResult> {
    teaching_scan(fc, grid, |cons| cons.count_ones() <= 1)
}

/// Loss paid up to the penultimate query of the cheapest certifying set.
pub fn upsilon_loss(fc: &FiniteClass, grid: &OutputGrid) -> Result<DimResult> {
    if grid.min() < 0.0 {
        return invalid("loss dimension requires nonnegative labels");
    }
    let t = Table::new(fc, grid)?;
    guard_adversaries(t.n, grid.len())?;
    let ny = grid.len();
    if (ny as f64).powi(t.n as i32) * (1u64 << t.n) as f64 > MAX_LOSS_WORK {
        return Err(Error::ResourceLimit("loss scan exceeds the work limit".into()));
    }
    let good = t.good(grid, 0.0);
    let y = grid.values();
    let full = 1usize << t.n;
    let mut cons = vec![0u64; full];
    let mut g = vec![0usize; t.n];
    let mut best: Option<(f64, Vec<usize>, usize)> = None;
    let mut best_real: Option<f64> = None;
    let mut work = 0u64;
    loop {
        cons[0] = t.all;
        let mut cheapest = (f64::INFINITY, 0usize);
        for s in 0..full {
            if s > 0 {
                let i = s.trailing_zeros() as usize;
                cons[s] = cons[s & (s - 1)] & t.agree[i][g[i]];
            }
            work += 1;
            let c = cons[s];
            if c == 0 || good.iter().any(|&gj| c & !gj == 0) {
                let (mut sum, mut max) = (0.0, 0.0f64);
                for i in mask_to_vec(s as u64) {
                    sum += y[g[i]];
                    max = max.max(y[g[i]]);
                }
                let cost = sum - max;
                if cost < cheapest.0 {
                    cheapest = (cost, s);
                }
            }
        }
        if best.as_ref().is_none_or(|b| cheapest.0 > b.0) {
            best = Some((cheapest.0, g.clone(), cheapest.1));
        }
        if t.labels.iter().any(|r| *r == g) && best_real.is_none_or(|b| cheapest.0 > b) {
            best_real = Some(cheapest.0);
        }
        if !next_labeling(&mut g, ny) {
            break;
        }
    }
    let (value, g, s) = best.expect("at least one adversary");
    Ok(DimResult {
        value,
        witness_g: Some(g.iter().map(|&v| y[v]).collect()),
        witness_set: Some(mask_to_vec(s as u64)),
        realizable_value: best_real,
        work,
    })
}

/// `1 / min_{F′} max_i min_y |F′(x_i) ∪ F′((x_i, y))| / |F′|`, removal sets inside `F′`.
pub fn haystack_dimension(fc: &FiniteClass, grid: &OutputGrid, eps: f64) -> Result<DimResult> {
    let t = Table::new(fc, grid)?;
    if t.m > MAX_HAYSTACK_FUNCTIONS {
        return Err(Error::ResourceLimit(format!("{} functions exceed {MAX_HAYSTACK_FUNCTIONS}", t.m)));
    }
    let good = t.good(grid, eps);
    let mut worst = (f64::INFINITY, 0u64);
    let mut work = 0u64;
    for sub in 1..=t.all {
        let size = sub.count_ones() as f64;
        let mut gamma: f64 = 0.0;
        for i in 0..t.n {
            let removed_good = sub & good[i];
            let mut least = u32::MAX;
            for y in 0..grid.len() {
                work += 1;
                let removed = removed_good | (sub & !t.agree[i][y]);
                least = least.min(removed.count_ones());
            }
            gamma = gamma.max(least as f64 / size);
        }
        if gamma < worst.0 {
            worst = (gamma, sub);
        }
    }
    if worst.0 <= 0.0 {
        return Err(Error::InternalInconsistency("a subclass admits no removing query".into()));
    }
    Ok(DimResult {
        value: 1.0 / worst.0,
        witness_g: None,
        witness_set: Some(mask_to_vec(worst.1)),
        realizable_value: None,
        work,
    })
}

/// Exact worst-case number of queries of the best adaptive strategy.
pub fn minimax_best_arm(fc: &FiniteClass, grid: &OutputGrid, eps: f64) -> Result<usize> {
    let t = Table::new(fc, grid)?;
    if t.m > MAX_MINIMAX_FUNCTIONS || t.n > MAX_MINIMAX_ARMS {
        return Err(Error::ResourceLimit(format!(
            "minimax search limited to {MAX_MINIMAX_FUNCTIONS} functions and {MAX_MINIMAX_ARMS} arms"
        )));
    }
    let good = t.good(grid, eps);
    let mut memo = HashMap::new();
    game_value(&t, &good, t.all, &mut memo)
}

fn game_value(t: &Table, good: &[u64], alive: u64, memo: &mut HashMap<u64, usize>) -> Result<usize> {
    if alive == 0 || good.iter().any(|&gj| alive & !gj == 0) {
        return Ok(0);
    }
    if let Some(&v) = memo.get(&alive) {
        return Ok(v);
    }
    let mut best: Option<usize> = None;
    for i in 0..t.n {
        let parts: Vec<u64> = t.agree[i].iter().map(|&a| a & alive).filter(|&p| p != 0).collect();
        if parts.len() < 2 {
            // Every survivor answers alike; the query carries no information.
            continue;
        }
        let mut worst = 0;
        for p in parts {
            worst = worst.max(game_value(t, good, p, memo)?);
            if best.is_some_and(|b| worst + 1 >= b) {
                break;
            }
        }
        if best.is_none_or(|b| worst + 1 < b) {
            best = Some(worst + 1);
        }
    }
    let v = best.ok_or_else(|| Error::InternalInconsistency("indistinguishable functions without a common good arm".into()))?;
    memo.insert(alive, v);
    Ok(v)
}

/// `min_i min_{y ≠ y_i} (|r_i − y| − |r_i − y_i|)` for predictions `r` and labels `y_i`.
pub fn margin_of(predictions: &[f64], grid: &OutputGrid, labels: &[f64]) -> f64 {
    let mut m = f64::INFINITY;
    for (&r, &yi) in predictions.iter().zip(labels) {
        for &y in grid.values() {
            if y != yi {
                m = m.min((r - y).abs() - (r - yi).abs());
            }
        }
    }
    m
}

/// Lower estimate of the minimum margin: the best margin over consistent parameters seen.
///
/// Finite families are scanned exactly. Convex bodies use `budget` hit-and-run draws from the
/// label-consistent body; draws are prefixes of one chain, so larger budgets never decrease the value.
pub fn minimum_margin<R: Rng + ?Sized>(
    model: &Model,
    grid: &OutputGrid,
    labels: &[f64],
    budget: usize,
    chain: &ChainConfig,
    rng: &mut R,
) -> Result<f64> {
    if labels.len() != model.n() {
        return invalid("label vector length differs from the number of arms");
    }
    let mut idx = Vec::with_capacity(labels.len());
    for &y in labels {
        idx.push(grid.label_index(y).ok_or_else(|| Error::InvalidArgument(format!("label {y} is off the grid")))?);
    }
    let consistent = |p: &[f64]| p.iter().zip(&idx).all(|(&r, &j)| grid.index_of(r) == j);
    match model {
        Model::Finite(m) => (0..m.len())
            .map(|a| m.predictions(a))
            .filter(|p| consistent(p))
            .map(|p| margin_of(p, grid, labels))
            .reduce(f64::max)
            .ok_or_else(|| Error::NotFound("no consistent parameter".into())),
        Model::Convex(m) => {
            let cells = Cells::Grid(grid.clone());
            let cs: Vec<_> = idx.iter().enumerate().flat_map(|(i, &j)| cells.constraints(i, j)).collect();
            let not_found = || Error::NotFound("no consistent parameter".into());
            let body = m.constrained(&cs).ok_or_else(not_found)?;
            let start = find_interior_point(&body, rng, PROJECTION_RESTARTS, None).ok_or_else(not_found)?;
            let draws = hit_and_run_sample(&body, &start, chain, budget.max(1))?;
            Ok(draws
                .iter()
                .map(|z| m.predict(z))
                .filter(|p| consistent(p))
                .map(|p| margin_of(&p, grid, labels))
                .fold(margin_of(&m.predict(&start), grid, labels), f64::max))
        }
    }
}

/// Replays a witness: the size of the smallest certifying set for `g` under `eps`.
pub fn certifying_size(fc: &FiniteClass, grid: &OutputGrid, eps: f64, g: &[f64]) -> Result<usize> {
    let t = Table::new(fc, grid)?;
    let good = t.good(grid, eps);
    let gi: Vec<usize> = g.iter().map(|&v| grid.index_of(v)).collect();
    subsets_by_size(t.n)
        .into_iter()
        .find(|&s| {
            let c = t.consistent(&gi, s);
            c == 0 || good.iter().any(|&gj| c & !gj == 0)
        })
        .map(|s| s.count_ones() as usize)
        .ok_or_else(|| Error::InternalInconsistency("no certifying set".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thresholds(n: usize) -> FiniteClass {
        FiniteClass::new((0..n).map(|i| (0..n).map(|j| if j <= i { 1.0 } else { 0.0 }).collect()).collect()).unwrap()
    }

    #[test]
    fn singleton_class() {
        let fc = FiniteClass::new(vec![vec![0.0, 1.0, 1.0]]).unwrap();
        let g = fc.grid();
        assert_eq!(upsilon_best(&fc, &g, 0.0).unwrap().value, 0.0);
        assert_eq!(upsilon_loss(&fc, &g).unwrap().value, 0.0);
        assert_eq!(upsilon_class(&fc, &g).unwrap().value, 0.0);
        assert_eq!(haystack_dimension(&fc, &g, 0.0).unwrap().value, 1.0);
        assert_eq!(minimax_best_arm(&fc, &g, 0.0).unwrap(), 0);
    }

    #[test]
    fn two_functions() {
        let fc = FiniteClass::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let g = fc.grid();
        assert_eq!(minimax_best_arm(&fc, &g, 0.0).unwrap(), 1);
        let one_diff = FiniteClass::new(vec![vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(upsilon_class(&one_diff, &one_diff.grid()).unwrap().value, 1.0);
    }

    #[test]
    fn witness_replays() {
        let fc = thresholds(6);
        let g = fc.grid();
        let r = upsilon_best(&fc, &g, 0.0).unwrap();
        let w = r.witness_g.unwrap();
        assert_eq!(certifying_size(&fc, &g, 0.0, &w).unwrap() as f64, r.value);
    }

    #[test]
    fn guard_fires() {
        let fc = FiniteClass::new(vec![vec![0.0; 15], vec![1.0; 15]]).unwrap();
        assert!(matches!(upsilon_best(&fc, &fc.grid(), 0.0), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn margin_examples() {
        let grid = OutputGrid::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(margin_of(&[0.0, 0.0, 0.0], &grid, &[0.0, 0.0, 0.0]), 1.0);
        let m = Model::Finite(crate::function_classes::FiniteModel::from_labels(vec![vec![0.0, 0.0]]).unwrap());
        let mut rng = rand::rng();
        assert!(matches!(
            minimum_margin(&m, &grid, &[1.0, 1.0], 10, &ChainConfig::default(), &mut rng),
            Err(Error::NotFound(_))
        ));
    }
}
