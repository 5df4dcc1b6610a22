//! CP least-squares fitting: objective, gradient, and the multi-start
//! driver. Optimization runs over unnormalized factors; weights are only
//! extracted when the result is normalized for reporting.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kruskal::{congruence_check, KruskalModel};
use crate::multistart::{random_unit_columns, run_starts, select_best, start_rng};
use crate::optimizer::OptimizerConfig;
use crate::parallel::Execution;
use crate::report::FitReport;
use crate::tensor::{axpy, dot, sq_dist, DenseMatrix, DenseTensor3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpConfig {
    pub rank: usize,
    pub n_starts: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub uniqueness_fms_threshold: f64,
    pub execution: Execution,
}

impl CpConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            n_starts: 10,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            uniqueness_fms_threshold: 0.95,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.n_starts == 0 {
            return domain("rank and n_starts must be at least 1");
        }
        if !(self.uniqueness_fms_threshold > 0.0 && self.uniqueness_fms_threshold <= 1.0) {
            return domain("uniqueness_fms_threshold must lie in (0, 1]");
        }
        self.optimizer.validate()
    }
}

/// Residual sum of squares of a (weighted) Kruskal model against `x`, plus
/// the unweighted MTTKRPs of the residual `E = x - ⟦w; A, B, C⟧`:
/// `g[0] = E_(1)(C⊙B)`, `g[1] = E_(2)(C⊙A)`, `g[2] = E_(3)(B⊙A)`.
pub(crate) struct TensorResidual {
    pub ss: f64,
    pub g: [Vec<f64>; 3],
}

/// Single pass over the mode-1 fibers; factor slices are column-major.
pub(crate) fn tensor_residual(
    x: &DenseTensor3,
    weights: Option<&[f64]>,
    a: &[f64],
    b: &[f64],
    c: &[f64],
    rank: usize,
    with_grad: bool,
) -> TensorResidual {
    let [ni, nj, nk] = x.dims();
    let mut g = if with_grad {
        [
            vec![0.0; ni * rank],
            vec![0.0; nj * rank],
            vec![0.0; nk * rank],
        ]
    } else {
        [Vec::new(), Vec::new(), Vec::new()]
    };
    let mut e = vec![0.0; ni];
    let mut bc = vec![0.0; rank];
    let mut ss = 0.0;
    for k in 0..nk {
        for j in 0..nj {
            e.copy_from_slice(x.fiber1(j, k));
            for r in 0..rank {
                bc[r] = b[j + nj * r] * c[k + nk * r];
                let w = weights.map_or(1.0, |w| w[r]) * bc[r];
                axpy(-w, &a[ni * r..ni * (r + 1)], &mut e);
            }
            ss += dot(&e, &e);
            if with_grad {
                let [g1, g2, g3] = &mut g;
                for r in 0..rank {
                    axpy(bc[r], &e, &mut g1[ni * r..ni * (r + 1)]);
                    let d = dot(&e, &a[ni * r..ni * (r + 1)]);
                    g2[j + nj * r] += d * c[k + nk * r];
                    g3[k + nk * r] += d * b[j + nj * r];
                }
            }
        }
    }
    TensorResidual { ss, g }
}

struct Layout {
    dims: [usize; 3],
    rank: usize,
}

impl Layout {
    fn split<'a>(&self, p: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let [ni, nj, _] = self.dims;
        let (a, rest) = p.split_at(ni * self.rank);
        let (b, c) = rest.split_at(nj * self.rank);
        (a, b, c)
    }

    fn len(&self) -> usize {
        self.dims.iter().sum::<usize>() * self.rank
    }
}

fn value_grad(x: &DenseTensor3, layout: &Layout, p: &[f64], grad: &mut [f64]) -> f64 {
    let (a, b, c) = layout.split(p);
    let res = tensor_residual(x, None, a, b, c, layout.rank, true);
    for (dst, src) in grad.iter_mut().zip(res.g.iter().flatten()) {
        *dst = -2.0 * src;
    }
    res.ss
}

fn check_factors(x: &DenseTensor3, factors: &[DenseMatrix; 3]) -> Result<usize> {
    let rank = factors[0].cols();
    for (m, f) in factors.iter().enumerate() {
        if f.rows() != x.dims()[m] || f.cols() != rank {
            return domain(format!(
                "factor {} is {}x{}, expected {}x{rank}",
                m + 1,
                f.rows(),
                f.cols(),
                x.dims()[m]
            ));
        }
    }
    Ok(rank)
}

/// `‖X − ⟦A, B, C⟧‖²`.
pub fn cp_objective(x: &DenseTensor3, factors: &[DenseMatrix; 3]) -> Result<f64> {
    let rank = check_factors(x, factors)?;
    let [a, b, c] = factors.each_ref().map(DenseMatrix::as_slice);
    Ok(tensor_residual(x, None, a, b, c, rank, false).ss)
}

/// Gradient of [`cp_objective`] with respect to `A`, `B`, `C`, e.g.
/// `∂f/∂A = 2(A((BᵀB)∗(CᵀC)) − X_(1)(C⊙B))`.
pub fn cp_gradient(x: &DenseTensor3, factors: &[DenseMatrix; 3]) -> Result<[DenseMatrix; 3]> {
    let rank = check_factors(x, factors)?;
    let [a, b, c] = factors.each_ref().map(DenseMatrix::as_slice);
    let res = tensor_residual(x, None, a, b, c, rank, true);
    let dims = x.dims();
    let [g1, g2, g3] = res.g;
    let to_mat = |m: usize, g: Vec<f64>| {
        DenseMatrix::from_raw(dims[m], rank, g.into_iter().map(|v| -2.0 * v).collect())
    };
    Ok([to_mat(0, g1), to_mat(1, g2), to_mat(2, g3)])
}

/// Outcome of [`fit_cp`].
#[derive(Debug, Clone)]
pub struct CpFit {
    pub model: KruskalModel,
    pub report: FitReport,
    /// Normalized model of every start, `None` where the start failed.
    pub candidates: Vec<Option<KruskalModel>>,
}

/// Multi-start CP fit; returns the normalized model with the lowest final
/// objective among converged starts.
pub fn fit_cp(x: &DenseTensor3, cfg: &CpConfig) -> Result<CpFit> {
    cfg.validate()?;
    let dims = x.dims();
    let bound = (0..3)
        .map(|m| dims.iter().product::<usize>() / dims[m])
        .min()
        .unwrap_or(0);
    if cfg.rank > bound {
        return domain(format!(
            "rank {} exceeds the sanity bound {bound} for dims {dims:?}",
            cfg.rank
        ));
    }
    let layout = Layout {
        dims,
        rank: cfg.rank,
    };
    debug_assert_eq!(layout.len(), dims.iter().sum::<usize>() * cfg.rank);

    let init = |index: usize| {
        let mut rng = start_rng(cfg.seed, index);
        let mut p = Vec::with_capacity(layout.len());
        for &n in &dims {
            p.extend(random_unit_columns(&mut rng, n, cfg.rank));
        }
        p
    };
    let build = |p: Vec<f64>| {
        let (a, b, c) = layout.split(&p);
        let mk = |m: usize, s: &[f64]| DenseMatrix::from_raw(dims[m], cfg.rank, s.to_vec());
        KruskalModel::from_factors([mk(0, a), mk(1, b), mk(2, c)])?.normalize()
    };
    let runs = run_starts(
        cfg.n_starts,
        cfg.execution,
        &cfg.optimizer,
        init,
        |p: &[f64], g: &mut [f64]| value_grad(x, &layout, p, g),
        build,
    )?;

    let x_sq = x.frobenius_norm().powi(2);
    let selection = select_best(&runs, x_sq, cfg.uniqueness_fms_threshold);
    let mut report = FitReport {
        model: "cp".into(),
        rank: cfg.rank,
        seed: cfg.seed,
        starts: runs.iter().map(|r| r.summary.clone()).collect(),
        best_start: None,
        model_objective: None,
        uniqueness: None,
        congruence: None,
        weights: Vec::new(),
    };
    let Some((best, uniqueness)) = selection else {
        return Err(Error::FitFailure(Box::new(report)));
    };
    let model = runs[best].model.clone().expect("best start has a model");
    let congruence = congruence_check(&model);
    if congruence.degenerate {
        log::warn!(
            "possible degenerate CP model: max cross-component congruence {:.4}",
            congruence.max_congruence
        );
    }
    report.best_start = Some(best);
    report.model_objective = Some(sq_dist(x.as_slice(), model.reconstruct().as_slice()));
    report.uniqueness = Some(uniqueness);
    report.congruence = Some(congruence);
    Ok(CpFit {
        model,
        report,
        candidates: runs.into_iter().map(|r| r.model).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_factors_give_squared_norm_and_zero_gradient() {
        let x = DenseTensor3::from_fn([2, 3, 2], |i, j, k| {
            (i as f64) - (j as f64) * 0.5 + k as f64
        })
        .unwrap();
        let z = [
            DenseMatrix::zeros(2, 2),
            DenseMatrix::zeros(3, 2),
            DenseMatrix::zeros(2, 2),
        ];
        let f = cp_objective(&x, &z).unwrap();
        assert!((f - x.frobenius_norm().powi(2)).abs() < 1e-12);
        let g = cp_gradient(&x, &z).unwrap();
        assert!(g.iter().all(|m| m.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn exact_factors_give_zero() {
        let a = DenseMatrix::from_col_major(2, 1, vec![1.0, 2.0]).unwrap();
        let b = DenseMatrix::from_col_major(2, 1, vec![0.5, -1.0]).unwrap();
        let c = DenseMatrix::from_col_major(3, 1, vec![1.0, 0.0, 3.0]).unwrap();
        let x = KruskalModel::from_factors([a.clone(), b.clone(), c.clone()])
            .unwrap()
            .reconstruct();
        assert_eq!(cp_objective(&x, &[a, b, c]).unwrap(), 0.0);
    }

    #[test]
    fn objective_rejects_mismatched_factor() {
        let x = DenseTensor3::zeros([2, 2, 2]).unwrap();
        let f = [
            DenseMatrix::zeros(2, 1),
            DenseMatrix::zeros(3, 1),
            DenseMatrix::zeros(2, 1),
        ];
        assert!(matches!(cp_objective(&x, &f), Err(Error::Domain(_))));
    }

    #[test]
    fn config_validation() {
        let x = DenseTensor3::zeros([2, 2, 2]).unwrap();
        assert!(fit_cp(&x, &CpConfig::new(0)).is_err());
        assert!(fit_cp(&x, &CpConfig::new(5)).is_err());
    }
}
