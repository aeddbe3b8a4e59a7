//! Selective sampling drivers: SAGE, its epoch variant for i.i.d. contexts,
//! the multi-expert driver SAGE-M and the `que` disagreement test.
//!
//! Labels come from the `Labels` substream at address `(t, 0, m)`; the
//! comparator label of a multi-expert round reuses expert 0's uniform, so a
//! single expert and a one-expert random mix draw identical labels.

pub(crate) mod multi;
mod que;
pub(crate) mod sage;

pub use multi::{sagem_run, t_epsilon};
pub use que::{que, Aggregator, AggregatorKind, DEFAULT_QUE_RESOLUTION};
pub use sage::{dis_run, epoch_starts, sage_run};

use serde::{Deserialize, Serialize};

use crate::classes::WidthMode;
use crate::link::ActionLabel;

/// How a driver decides `Z_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum QueryRule {
    /// `margin(f_t(x)) ≤ 2γΔ_t(x)`.
    MarginWidth,
    /// `que(f_t(x), Δ⃗_t(x))` at the given grid resolution.
    Que { resolution: f64 },
    /// Query every round (passive baseline).
    Always,
    /// Never query (widths forced to zero).
    Never,
}

/// Knobs shared by the selective-sampling drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageOptions {
    pub rule: QueryRule,
    pub width_mode: WidthMode,
    /// Oracle learning rate; `None` uses the default `λ/(2(1+B)²)`.
    pub learning_rate: Option<f64>,
    /// Margin grid for the `T_ε` counters.
    pub eps_grid: Vec<f64>,
}

impl Default for SageOptions {
    fn default() -> Self {
        Self {
            rule: QueryRule::MarginWidth,
            width_mode: WidthMode::Cached,
            learning_rate: None,
            eps_grid: vec![0.05, 0.1, 0.2, 0.4],
        }
    }
}

/// Extra per-round fields of the bandit drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditInfo {
    /// Width `w_t` of the candidate set.
    pub width_w: f64,
    /// `|𝒜_t|`.
    pub candidates: usize,
    /// Switch `ξ_t`.
    pub xi: bool,
}

/// One round of telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Round index, starting at 1.
    pub t: usize,
    pub context: usize,
    /// Played action `ŷ_t`.
    pub action: ActionLabel,
    /// `Z_t`.
    pub queried: bool,
    /// Revealed labels (one per expert), empty unless queried.
    pub labels: Vec<ActionLabel>,
    /// `Δ_t` (or one entry per expert); infinite when no member was feasible.
    pub widths: Vec<f64>,
    /// Margin of the comparator distribution at `x_t`.
    pub truth_margin: f64,
    /// Comparator action `π*(x_t)`.
    pub comparator: ActionLabel,
    /// `1{ŷ_t ≠ y_t} − 1{π*(x_t) ≠ y_t}` against the drawn label.
    pub inst_regret: f64,
    /// Expected counterpart: comparator probability of `π*` minus that of `ŷ_t`.
    pub expected_regret: f64,
    /// `‖f_t(x_t) − f̆(x_t)‖` per expert (diagnostic).
    pub truth_deviation: Vec<f64>,
    /// Whether every truth satisfied its width constraint before this round (finite classes).
    pub truth_feasible: Option<bool>,
    pub bandit: Option<BanditInfo>,
}

/// Completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<StepRecord>,
    /// `Reg_T = Σ_t inst_regret`.
    pub regret: f64,
    /// Sum of expected regret.
    pub expected_regret: f64,
    /// `N_T = Σ_t Z_t`.
    pub queries: usize,
    pub eps_grid: Vec<f64>,
    /// `T_ε` for each entry of `eps_grid`.
    pub t_eps: Vec<usize>,
    /// Budget Ψ per expert.
    pub psi: Vec<f64>,
    /// Fail-open events (empty feasible sets, version-space resets).
    pub anomalies: Vec<String>,
}

impl RunLog {
    pub(crate) fn assemble(
        records: Vec<StepRecord>,
        eps_grid: Vec<f64>,
        t_eps: Vec<usize>,
        psi: Vec<f64>,
        anomalies: Vec<String>,
    ) -> Self {
        let regret = records.iter().map(|r| r.inst_regret).sum();
        let expected_regret = records.iter().map(|r| r.expected_regret).sum();
        let queries = records.iter().filter(|r| r.queried).count();
        Self { records, regret, expected_regret, queries, eps_grid, t_eps, psi, anomalies }
    }

    /// Totals agree with the records.
    pub fn is_consistent(&self) -> bool {
        let regret: f64 = self.records.iter().map(|r| r.inst_regret).sum();
        let queries = self.records.iter().filter(|r| r.queried).count();
        regret == self.regret
            && queries == self.queries
            && self.records.iter().all(|r| r.queried == !r.labels.is_empty() && r.widths.iter().all(|w| *w >= 0.0))
    }

    /// Number of queries in rounds `from..to` (1-based, half open).
    pub fn queries_between(&self, from: usize, to: usize) -> usize {
        self.records.iter().filter(|r| r.t >= from && r.t < to && r.queried).count()
    }
}

pub(crate) fn count_margins(margins: impl Iterator<Item = f64> + Clone, eps_grid: &[f64]) -> Vec<usize> {
    eps_grid.iter().map(|&e| margins.clone().filter(|&m| m <= e).count()).collect()
}
