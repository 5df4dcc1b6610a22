use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::kruskal::{factor_match_score, FactorModel};
use crate::optimizer::{minimize, OptimizerConfig};
use crate::parallel::{map_indexed, Execution};
use crate::report::{cluster_cutoff, StartSummary, UniquenessCheck};

pub(crate) struct StartRun<M> {
    pub summary: StartSummary,
    pub model: Option<M>,
}

/// Generator for start `index`; streams are independent per index and do
/// not depend on how many starts are run.
pub(crate) fn start_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `rows x rank` standard-normal matrix with unit-norm columns, column-major.
pub(crate) fn random_unit_columns(rng: &mut ChaCha8Rng, rows: usize, rank: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..rows * rank)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    for col in out.chunks_mut(rows) {
        let n = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            col.iter_mut().for_each(|x| *x /= n);
        }
    }
    out
}

pub(crate) fn run_starts<M, I, F, B>(
    n_starts: usize,
    exec: Execution,
    optimizer: &OptimizerConfig,
    init: I,
    fg: F,
    build: B,
) -> Result<Vec<StartRun<M>>>
where
    M: Send,
    I: Fn(usize) -> Vec<f64> + Sync + Send,
    F: Fn(&[f64], &mut [f64]) -> f64 + Sync + Send,
    B: Fn(Vec<f64>) -> Result<M> + Sync + Send,
{
    optimizer.validate()?;
    let runs = map_indexed(n_starts, exec, |index| {
        let x0 = init(index);
        let out = minimize(&fg, x0, optimizer).expect("validated config");
        let mut converged = out.termination.converged() && out.final_f.is_finite();
        let model = if converged {
            match build(out.final_point) {
                Ok(m) => Some(m),
                Err(e) => {
                    log::warn!("start {index}: {e}");
                    converged = false;
                    None
                }
            }
        } else {
            None
        };
        log::debug!(
            "start {index}: f = {:.6e} after {} iterations ({:?})",
            out.final_f,
            out.iterations,
            out.termination
        );
        StartRun {
            summary: StartSummary {
                index,
                final_objective: out.final_f,
                final_grad_norm: out.final_grad_norm,
                iterations: out.iterations,
                evaluations: out.evaluations,
                termination: out.termination,
                converged,
                steepest_descent_resets: out.steepest_descent_resets,
                f_trace: out.f_trace,
            },
            model,
        }
    });
    Ok(runs)
}

/// Picks the converged start with the lowest objective and checks that the
/// near-best cluster agrees with it.
pub(crate) fn select_best<M: FactorModel>(
    runs: &[StartRun<M>],
    data_sq_norm: f64,
    fms_threshold: f64,
) -> Option<(usize, UniquenessCheck)> {
    let best = runs.iter().filter(|r| r.model.is_some()).min_by(|a, b| {
        a.summary
            .final_objective
            .total_cmp(&b.summary.final_objective)
    })?;
    let best_idx = best.summary.index;
    let best_model = best.model.as_ref()?;
    let cutoff = cluster_cutoff(best.summary.final_objective, data_sq_norm);
    let cluster: Vec<usize> = runs
        .iter()
        .filter(|r| r.model.is_some() && r.summary.final_objective <= cutoff)
        .map(|r| r.summary.index)
        .collect();
    let fms_to_best: Vec<(usize, f64)> = cluster
        .iter()
        .filter(|&&i| i != best_idx)
        .map(|&i| {
            let m = runs[i].model.as_ref().expect("cluster members have models");
            let score = factor_match_score(best_model, m).map_or(0.0, |fm| fm.score);
            (i, score)
        })
        .collect();
    let min_fms = fms_to_best.iter().map(|p| p.1).fold(1.0, f64::min);
    let unique = min_fms >= fms_threshold;
    if !unique {
        log::warn!("near-best starts disagree: min FMS {min_fms:.4} < {fms_threshold}");
    }
    Some((
        best_idx,
        UniquenessCheck {
            fms_threshold,
            objective_cutoff: cutoff,
            cluster,
            fms_to_best,
            min_fms,
            unique,
        },
    ))
}
