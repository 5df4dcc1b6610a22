//! Structure-revealing coupled matrix-tensor factorization.
//!
//! The tensor `X` (I×J×K) and matrix `Y` (I×M) share the subjects factor
//! `A`. The fitted objective is
//!
//! ```text
//! ‖X − ⟦λ; A, B, C⟧‖² + ‖Y − A diag(σ) Vᵀ‖²
//!     + β Σ_r √(λ_r² + ε) + β Σ_r √(σ_r² + ε)
//!     + γ Σ_{F ∈ {A,B,C,V}} Σ_r (‖f_r‖ − 1)²
//! ```
//!
//! The smoothed 1-norm pushes the weight of a component that is absent from
//! one dataset towards zero; the quadratic term keeps factor columns near
//! unit norm so that the weights carry all the scale.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cp::tensor_residual;
use crate::error::{domain, Error, Result};
use crate::kruskal::CoupledModel;
use crate::multistart::{random_unit_columns, run_starts, select_best, start_rng};
use crate::optimizer::OptimizerConfig;
use crate::parallel::Execution;
use crate::report::{FitReport, WeightRow};
use crate::tensor::{axpy, dot, norm2, DenseMatrix, DenseTensor3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcmtfConfig {
    pub rank: usize,
    /// Weight of the 1-norm penalties on λ and σ.
    pub beta: f64,
    /// Weight of the unit-norm column penalties.
    pub gamma: f64,
    /// Smoothing constant of the 1-norm.
    pub l1_epsilon: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// Relative weight below which a component counts as absent.
    pub share_threshold: f64,
    pub uniqueness_fms_threshold: f64,
    pub execution: Execution,
}

impl AcmtfConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            beta: 1e-3,
            gamma: 1.0,
            l1_epsilon: 1e-8,
            n_starts: 32,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            share_threshold: 0.05,
            uniqueness_fms_threshold: 0.95,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.n_starts == 0 {
            return domain("rank and n_starts must be at least 1");
        }
        if !(self.beta >= 0.0) || !(self.gamma > 0.0) || !(self.l1_epsilon > 0.0) {
            return domain(format!(
                "need beta >= 0, gamma > 0, l1_epsilon > 0 (got {}, {}, {})",
                self.beta, self.gamma, self.l1_epsilon
            ));
        }
        if !(self.share_threshold > 0.0 && self.share_threshold < 1.0) {
            return domain("share_threshold must lie in (0, 1)");
        }
        if !(self.uniqueness_fms_threshold > 0.0 && self.uniqueness_fms_threshold <= 1.0) {
            return domain("uniqueness_fms_threshold must lie in (0, 1]");
        }
        self.optimizer.validate()
    }
}

/// Penalty constants of the objective.
#[derive(Debug, Clone, Copy)]
struct Penalties {
    beta: f64,
    gamma: f64,
    eps: f64,
}

impl From<&AcmtfConfig> for Penalties {
    fn from(c: &AcmtfConfig) -> Self {
        Self {
            beta: c.beta,
            gamma: c.gamma,
            eps: c.l1_epsilon,
        }
    }
}

/// Flat parameter layout `[λ, σ, A, B, C, V]`, factors column-major.
#[derive(Debug, Clone, Copy)]
struct Layout {
    dims: [usize; 4],
    rank: usize,
}

struct Blocks<T> {
    lambda: T,
    sigma: T,
    a: T,
    b: T,
    c: T,
    v: T,
}

impl Layout {
    fn len(&self) -> usize {
        self.rank * (2 + self.dims.iter().sum::<usize>())
    }

    fn offsets(&self) -> [usize; 7] {
        let r = self.rank;
        let [i, j, k, m] = self.dims;
        let mut o = [0, r, 2 * r, 0, 0, 0, 0];
        o[3] = o[2] + i * r;
        o[4] = o[3] + j * r;
        o[5] = o[4] + k * r;
        o[6] = o[5] + m * r;
        o
    }

    fn split<'a>(&self, p: &'a [f64]) -> Blocks<&'a [f64]> {
        let o = self.offsets();
        Blocks {
            lambda: &p[o[0]..o[1]],
            sigma: &p[o[1]..o[2]],
            a: &p[o[2]..o[3]],
            b: &p[o[3]..o[4]],
            c: &p[o[4]..o[5]],
            v: &p[o[5]..o[6]],
        }
    }

    fn split_mut<'a>(&self, p: &'a mut [f64]) -> Blocks<&'a mut [f64]> {
        let o = self.offsets();
        let (lambda, rest) = p.split_at_mut(o[1]);
        let (sigma, rest) = rest.split_at_mut(o[2] - o[1]);
        let (a, rest) = rest.split_at_mut(o[3] - o[2]);
        let (b, rest) = rest.split_at_mut(o[4] - o[3]);
        let (c, v) = rest.split_at_mut(o[5] - o[4]);
        Blocks {
            lambda,
            sigma,
            a,
            b,
            c,
            v,
        }
    }

    fn pack(&self, m: &CoupledModel) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.len());
        p.extend_from_slice(m.tensor_weights());
        p.extend_from_slice(m.matrix_weights());
        for f in m.factors() {
            p.extend_from_slice(f.as_slice());
        }
        p
    }

    fn unpack(&self, p: &[f64]) -> CoupledModel {
        let s = self.split(p);
        let [i, j, k, m] = self.dims;
        let r = self.rank;
        let factors = [
            DenseMatrix::from_raw(i, r, s.a.to_vec()),
            DenseMatrix::from_raw(j, r, s.b.to_vec()),
            DenseMatrix::from_raw(k, r, s.c.to_vec()),
            DenseMatrix::from_raw(m, r, s.v.to_vec()),
        ];
        CoupledModel::new(s.lambda.to_vec(), s.sigma.to_vec(), factors)
            .expect("layout is consistent")
    }
}

/// Residual of `Y ≈ A diag(σ) Vᵀ` with `EV = E V` (I×R) and `EtA = Eᵀ A` (M×R).
struct MatrixResidual {
    ss: f64,
    ev: Vec<f64>,
    eta: Vec<f64>,
}

fn matrix_residual(
    y: &DenseMatrix,
    sigma: &[f64],
    a: &[f64],
    v: &[f64],
    with_grad: bool,
) -> MatrixResidual {
    let (ni, nm) = y.dims();
    let rank = sigma.len();
    let mut e = vec![0.0; ni];
    let mut ss = 0.0;
    let (mut ev, mut eta) = if with_grad {
        (vec![0.0; ni * rank], vec![0.0; nm * rank])
    } else {
        (Vec::new(), Vec::new())
    };
    for m in 0..nm {
        e.copy_from_slice(y.col(m));
        for r in 0..rank {
            axpy(-sigma[r] * v[m + nm * r], &a[ni * r..ni * (r + 1)], &mut e);
        }
        ss += dot(&e, &e);
        if with_grad {
            for r in 0..rank {
                axpy(v[m + nm * r], &e, &mut ev[ni * r..ni * (r + 1)]);
                eta[m + nm * r] = dot(&e, &a[ni * r..ni * (r + 1)]);
            }
        }
    }
    MatrixResidual { ss, ev, eta }
}

fn smooth_abs(x: f64, eps: f64) -> f64 {
    (x * x + eps).sqrt()
}

/// Adds `γ Σ_r (‖f_r‖ − 1)²` for one factor block and, when requested, its
/// gradient `2γ (‖f_r‖ − 1) f_r / ‖f_r‖`.
fn norm_penalty(f: &[f64], rows: usize, gamma: f64, grad: Option<&mut [f64]>) -> f64 {
    let mut total = 0.0;
    let norms: Vec<f64> = f.chunks(rows).map(norm2).collect();
    for &n in &norms {
        total += (n - 1.0) * (n - 1.0);
    }
    if let Some(g) = grad {
        for ((gc, fc), &n) in g.chunks_mut(rows).zip(f.chunks(rows)).zip(&norms) {
            if n > 0.0 {
                axpy(2.0 * gamma * (n - 1.0) / n, fc, gc);
            }
        }
    }
    gamma * total
}

fn value_grad(
    x: &DenseTensor3,
    y: &DenseMatrix,
    layout: &Layout,
    pen: Penalties,
    p: &[f64],
    grad: Option<&mut [f64]>,
) -> f64 {
    let s = layout.split(p);
    let [ni, nj, nk, nm] = layout.dims;
    let rank = layout.rank;
    let with_grad = grad.is_some();
    let tx = tensor_residual(x, Some(s.lambda), s.a, s.b, s.c, rank, with_grad);
    let my = matrix_residual(y, s.sigma, s.a, s.v, with_grad);

    let l1: f64 = s
        .lambda
        .iter()
        .chain(s.sigma)
        .map(|&w| smooth_abs(w, pen.eps))
        .sum();
    let mut f = tx.ss + my.ss + pen.beta * l1;

    let Some(grad) = grad else {
        for (block, rows) in [(s.a, ni), (s.b, nj), (s.c, nk), (s.v, nm)] {
            f += norm_penalty(block, rows, pen.gamma, None);
        }
        return f;
    };

    let g = layout.split_mut(grad);
    let [g1, g2, g3] = &tx.g;
    for r in 0..rank {
        let lam = s.lambda[r];
        let sig = s.sigma[r];
        let a_r = &s.a[ni * r..ni * (r + 1)];
        g.lambda[r] =
            -2.0 * dot(a_r, &g1[ni * r..ni * (r + 1)]) + pen.beta * lam / smooth_abs(lam, pen.eps);
        g.sigma[r] = -2.0 * dot(&my.eta[nm * r..nm * (r + 1)], &s.v[nm * r..nm * (r + 1)])
            + pen.beta * sig / smooth_abs(sig, pen.eps);
        for i in 0..ni {
            g.a[i + ni * r] = -2.0 * (lam * g1[i + ni * r] + sig * my.ev[i + ni * r]);
        }
        for j in 0..nj {
            g.b[j + nj * r] = -2.0 * lam * g2[j + nj * r];
        }
        for k in 0..nk {
            g.c[k + nk * r] = -2.0 * lam * g3[k + nk * r];
        }
        for m in 0..nm {
            g.v[m + nm * r] = -2.0 * sig * my.eta[m + nm * r];
        }
    }
    f += norm_penalty(s.a, ni, pen.gamma, Some(g.a));
    f += norm_penalty(s.b, nj, pen.gamma, Some(g.b));
    f += norm_penalty(s.c, nk, pen.gamma, Some(g.c));
    f += norm_penalty(s.v, nm, pen.gamma, Some(g.v));
    f
}

fn layout_for(x: &DenseTensor3, y: &DenseMatrix, rank: usize) -> Result<Layout> {
    let [i, j, k] = x.dims();
    if y.rows() != i {
        return domain(format!(
            "coupled mode mismatch: tensor has {i} subjects, matrix has {} rows",
            y.rows()
        ));
    }
    Ok(Layout {
        dims: [i, j, k, y.cols()],
        rank,
    })
}

fn layout_for_model(x: &DenseTensor3, y: &DenseMatrix, m: &CoupledModel) -> Result<Layout> {
    let layout = layout_for(x, y, m.tensor_weights().len())?;
    if m.dims() != layout.dims {
        return domain(format!(
            "model dims {:?} do not match data dims {:?}",
            m.dims(),
            layout.dims
        ));
    }
    Ok(layout)
}

/// Value of the smoothed, penalized coupled objective at `m` (which need
/// not be normalized).
pub fn acmtf_objective(
    x: &DenseTensor3,
    y: &DenseMatrix,
    m: &CoupledModel,
    cfg: &AcmtfConfig,
) -> Result<f64> {
    let layout = layout_for_model(x, y, m)?;
    Ok(value_grad(x, y, &layout, cfg.into(), &layout.pack(m), None))
}

/// Gradient blocks of [`acmtf_objective`].
#[derive(Debug, Clone, PartialEq)]
pub struct AcmtfGradient {
    pub tensor_weights: Vec<f64>,
    pub matrix_weights: Vec<f64>,
    /// `[∂A, ∂B, ∂C, ∂V]`.
    pub factors: [DenseMatrix; 4],
}

impl AcmtfGradient {
    /// All blocks flattened in `[λ, σ, A, B, C, V]` order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.tensor_weights.clone();
        v.extend_from_slice(&self.matrix_weights);
        for f in &self.factors {
            v.extend_from_slice(f.as_slice());
        }
        v
    }
}

pub fn acmtf_gradient(
    x: &DenseTensor3,
    y: &DenseMatrix,
    m: &CoupledModel,
    cfg: &AcmtfConfig,
) -> Result<AcmtfGradient> {
    let layout = layout_for_model(x, y, m)?;
    let mut g = vec![0.0; layout.len()];
    value_grad(x, y, &layout, cfg.into(), &layout.pack(m), Some(&mut g));
    let gm = layout.unpack(&g);
    Ok(AcmtfGradient {
        tensor_weights: gm.tensor_weights().to_vec(),
        matrix_weights: gm.matrix_weights().to_vec(),
        factors: gm.factors().clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentLabel {
    Shared,
    TensorOnly,
    MatrixOnly,
    /// Negligible in both datasets.
    Degenerate,
}

impl fmt::Display for ComponentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComponentLabel::Shared => "shared",
            ComponentLabel::TensorOnly => "tensor_only",
            ComponentLabel::MatrixOnly => "matrix_only",
            ComponentLabel::Degenerate => "degenerate",
        })
    }
}

/// Labels component `r` by comparing `|λ_r|` and `|σ_r|` with the largest
/// weight of the same dataset.
pub fn classify_components(m: &CoupledModel, threshold: f64) -> Result<Vec<ComponentLabel>> {
    let max_abs = |w: &[f64]| w.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let (lmax, smax) = (max_abs(m.tensor_weights()), max_abs(m.matrix_weights()));
    if lmax == 0.0 {
        return Err(Error::DegenerateModel("all tensor weights are zero".into()));
    }
    if smax == 0.0 {
        return Err(Error::DegenerateModel("all matrix weights are zero".into()));
    }
    let labels = m
        .tensor_weights()
        .iter()
        .zip(m.matrix_weights())
        .enumerate()
        .map(|(r, (l, s))| {
            let in_tensor = l.abs() / lmax >= threshold;
            let in_matrix = s.abs() / smax >= threshold;
            match (in_tensor, in_matrix) {
                (true, true) => ComponentLabel::Shared,
                (true, false) => ComponentLabel::TensorOnly,
                (false, true) => ComponentLabel::MatrixOnly,
                (false, false) => {
                    log::warn!("component {r} is negligible in both datasets");
                    ComponentLabel::Degenerate
                }
            }
        })
        .collect();
    Ok(labels)
}

/// Outcome of [`fit_acmtf`].
#[derive(Debug, Clone)]
pub struct AcmtfFit {
    pub model: CoupledModel,
    pub labels: Vec<ComponentLabel>,
    pub report: FitReport,
    pub candidates: Vec<Option<CoupledModel>>,
}

/// Multi-start coupled fit. Starts from unit-norm Gaussian factors with
/// weights `‖X‖/√R` and `‖Y‖/√R`.
pub fn fit_acmtf(x: &DenseTensor3, y: &DenseMatrix, cfg: &AcmtfConfig) -> Result<AcmtfFit> {
    cfg.validate()?;
    let layout = layout_for(x, y, cfg.rank)?;
    let pen = Penalties::from(cfg);
    let rank = cfg.rank;
    let (xn, yn) = (x.frobenius_norm(), y.frobenius_norm());
    let lambda0 = if xn > 0.0 {
        xn / (rank as f64).sqrt()
    } else {
        1.0
    };
    let sigma0 = if yn > 0.0 {
        yn / (rank as f64).sqrt()
    } else {
        1.0
    };

    let init = |index: usize| {
        let mut rng = start_rng(cfg.seed, index);
        let mut p = Vec::with_capacity(layout.len());
        p.extend(std::iter::repeat_n(lambda0, rank));
        p.extend(std::iter::repeat_n(sigma0, rank));
        for &n in &layout.dims {
            p.extend(random_unit_columns(&mut rng, n, rank));
        }
        p
    };
    let build = |p: Vec<f64>| layout.unpack(&p).normalize();
    let runs = run_starts(
        cfg.n_starts,
        cfg.execution,
        &cfg.optimizer,
        init,
        |p: &[f64], g: &mut [f64]| value_grad(x, y, &layout, pen, p, Some(g)),
        build,
    )?;

    let data_sq = xn * xn + yn * yn;
    let selection = select_best(&runs, data_sq, cfg.uniqueness_fms_threshold);
    let mut report = FitReport {
        model: "acmtf".into(),
        rank,
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
    let labels = classify_components(&model, cfg.share_threshold)?;
    report.best_start = Some(best);
    report.model_objective = Some(value_grad(x, y, &layout, pen, &layout.pack(&model), None));
    report.uniqueness = Some(uniqueness);
    report.congruence = Some(crate::kruskal::congruence_check(&model.tensor_part()));
    report.weights = labels
        .iter()
        .enumerate()
        .map(|(r, label)| WeightRow {
            component: r,
            lambda: model.tensor_weights()[r],
            sigma: model.matrix_weights()[r],
            label: label.to_string(),
        })
        .collect();
    Ok(AcmtfFit {
        model,
        labels,
        report,
        candidates: runs.into_iter().map(|r| r.model).collect(),
    })
}
