//! Fit diagnostics shared by the CP and coupled drivers.

use serde::Serialize;

use crate::kruskal::CongruenceCheck;
use crate::optimizer::Termination;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartSummary {
    pub index: usize,
    pub final_objective: f64,
    pub final_grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Converged and produced a model that could be normalized.
    pub converged: bool,
    pub steepest_descent_resets: usize,
    #[serde(skip)]
    pub f_trace: Vec<f64>,
}

/// Agreement between the best start and the other starts that reached
/// nearly the same objective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessCheck {
    pub fms_threshold: f64,
    /// Objective ceiling defining the near-best cluster.
    pub objective_cutoff: f64,
    /// Start indices in the cluster, best start included.
    pub cluster: Vec<usize>,
    /// `(start, fms)` between the best model and each other cluster member.
    pub fms_to_best: Vec<(usize, f64)>,
    /// Minimum of `fms_to_best`, 1 when the cluster holds only the best start.
    pub min_fms: f64,
    pub unique: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightRow {
    pub component: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub model: String,
    pub rank: usize,
    pub seed: u64,
    pub starts: Vec<StartSummary>,
    pub best_start: Option<usize>,
    /// Objective evaluated at the returned, normalized model.
    pub model_objective: Option<f64>,
    pub uniqueness: Option<UniquenessCheck>,
    pub congruence: Option<CongruenceCheck>,
    /// Per-component weights and share labels (coupled fits only).
    pub weights: Vec<WeightRow>,
}

/// Fraction of the best objective defining the near-best cluster.
pub const CLUSTER_REL_TOL: f64 = 0.01;
/// Absolute floor for the cluster cutoff, relative to the squared data
/// norm, so that exact fits with objectives at roundoff still cluster.
pub const CLUSTER_ABS_FLOOR: f64 = 1e-10;

pub(crate) fn cluster_cutoff(best: f64, data_sq_norm: f64) -> f64 {
    best + CLUSTER_REL_TOL * best.abs() + CLUSTER_ABS_FLOOR * data_sq_norm
}
