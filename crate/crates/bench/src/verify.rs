//! Post-hoc checks of a run against the instance's known truth.

use grails::grails::RunRecord;
use serde::{Deserialize, Serialize};

use crate::instances::Instance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    /// `None` when the run returned no arm.
    pub returned_good: Option<bool>,
    pub loss_matches: bool,
    pub requeried: Vec<usize>,
    /// Rounds whose recorded label differs from the truth at that arm.
    pub wrong_labels: Vec<usize>,
    /// Rounds whose label is not a grid value (discrete instances only).
    pub off_grid: Vec<usize>,
    pub pass: bool,
}

pub fn verify_run(instance: &Instance, record: &RunRecord, eps: f64) -> VerifyReport {
    let n = instance.n();
    let min = instance.labels.iter().copied().fold(f64::INFINITY, f64::min);
    let returned_good = record.returned_arm.map(|a| a < n && instance.labels[a] <= min + eps);
    let mut seen = vec![false; n];
    let mut requeried = vec![];
    let mut wrong_labels = vec![];
    let mut off_grid = vec![];
    let mut sum = 0.0;
    for e in &record.rounds {
        if e.arm >= n {
            wrong_labels.push(e.round);
            continue;
        }
        if std::mem::replace(&mut seen[e.arm], true) {
            requeried.push(e.round);
        }
        if e.label != instance.labels[e.arm] {
            wrong_labels.push(e.round);
        }
        if let Some(g) = &instance.grid {
            if !g.contains(&e.label) {
                off_grid.push(e.round);
            }
        }
        sum += e.label;
    }
    let loss_matches = (sum - record.total_loss).abs() <= 1e-9 * sum.abs().max(1.0) && record.total_queries == record.rounds.len();
    let pass = returned_good != Some(false) && loss_matches && requeried.is_empty() && wrong_labels.is_empty() && off_grid.is_empty();
    VerifyReport { returned_good, loss_matches, requeried, wrong_labels, off_grid, pass }
}
