//! Kruskal-form containers for CP and coupled models, plus the similarity
//! measures used to compare fitted models.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::tensor::{dot, norm2, DenseMatrix, DenseTensor3};

/// Congruence above which a CP model is reported as possibly degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 0.97;

/// Common view over models made of factor matrices sharing a column count.
pub trait FactorModel {
    fn rank(&self) -> usize;

    /// Factor matrices in mode order; the first is the subjects mode.
    fn factor_matrices(&self) -> Vec<&DenseMatrix>;

    fn subject_factor(&self) -> &DenseMatrix {
        self.factor_matrices()[0]
    }
}

/// `⟦λ; A, B, C⟧`.
#[derive(Debug, Clone, PartialEq)]
pub struct KruskalModel {
    weights: Vec<f64>,
    factors: [DenseMatrix; 3],
}

impl KruskalModel {
    pub fn new(weights: Vec<f64>, factors: [DenseMatrix; 3]) -> Result<Self> {
        let r = weights.len();
        if let Some(f) = factors.iter().find(|f| f.cols() != r) {
            return domain(format!(
                "factor has {} columns but {r} weights were given",
                f.cols()
            ));
        }
        Ok(Self { weights, factors })
    }

    /// Model with unit weights, as produced by the unnormalized optimizer.
    pub fn from_factors(factors: [DenseMatrix; 3]) -> Result<Self> {
        Self::new(vec![1.0; factors[0].cols()], factors)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn factors(&self) -> &[DenseMatrix; 3] {
        &self.factors
    }

    pub fn dims(&self) -> [usize; 3] {
        [
            self.factors[0].rows(),
            self.factors[1].rows(),
            self.factors[2].rows(),
        ]
    }

    /// Entry `(i,j,k)` is `Σ_r λ_r A[i,r] B[j,r] C[k,r]`.
    pub fn reconstruct(&self) -> DenseTensor3 {
        let [a, b, c] = &self.factors;
        reconstruct_kruskal(&self.weights, a, b, c)
    }

    /// Scales every column to unit norm, folding the scales into λ, then
    /// applies the sign convention: the largest-magnitude entry of each
    /// column of A and B is positive and λ is nonnegative, with the
    /// compensating flips landing in C.
    pub fn normalize(&self) -> Result<Self> {
        let mut out = self.clone();
        for r in 0..self.rank() {
            for (mode, f) in out.factors.iter_mut().enumerate() {
                let n = norm2(f.col(r));
                if n == 0.0 {
                    return Err(Error::DegenerateComponent {
                        mode: mode + 1,
                        index: r,
                    });
                }
                f.col_mut(r).iter_mut().for_each(|x| *x /= n);
                out.weights[r] *= n;
            }
            for mode in 0..2 {
                if leading_sign(out.factors[mode].col(r)) < 0.0 {
                    flip(out.factors[mode].col_mut(r));
                    flip(out.factors[2].col_mut(r));
                }
            }
            if out.weights[r] < 0.0 {
                out.weights[r] = -out.weights[r];
                flip(out.factors[2].col_mut(r));
            }
        }
        Ok(out)
    }

    /// Reorders components so that new component `c` is old `perm[c]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            weights: perm.iter().map(|&p| self.weights[p]).collect(),
            factors: [0, 1, 2].map(|m| self.factors[m].permute_cols(perm)),
        }
    }
}

impl FactorModel for KruskalModel {
    fn rank(&self) -> usize {
        self.weights.len()
    }

    fn factor_matrices(&self) -> Vec<&DenseMatrix> {
        self.factors.iter().collect()
    }
}

/// Coupled model: `⟦λ; A, B, C⟧` for the tensor and `A diag(σ) Vᵀ` for the
/// matrix, sharing the subjects factor `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledModel {
    tensor_weights: Vec<f64>,
    matrix_weights: Vec<f64>,
    factors: [DenseMatrix; 4],
}

impl CoupledModel {
    /// `factors` is `[A, B, C, V]`.
    pub fn new(
        tensor_weights: Vec<f64>,
        matrix_weights: Vec<f64>,
        factors: [DenseMatrix; 4],
    ) -> Result<Self> {
        let r = tensor_weights.len();
        if matrix_weights.len() != r {
            return domain(format!(
                "{} tensor weights but {} matrix weights",
                r,
                matrix_weights.len()
            ));
        }
        if let Some(f) = factors.iter().find(|f| f.cols() != r) {
            return domain(format!("factor has {} columns but rank is {r}", f.cols()));
        }
        Ok(Self {
            tensor_weights,
            matrix_weights,
            factors,
        })
    }

    pub fn tensor_weights(&self) -> &[f64] {
        &self.tensor_weights
    }

    pub fn matrix_weights(&self) -> &[f64] {
        &self.matrix_weights
    }

    /// `[A, B, C, V]`.
    pub fn factors(&self) -> &[DenseMatrix; 4] {
        &self.factors
    }

    /// `(I, J, K, M)`.
    pub fn dims(&self) -> [usize; 4] {
        [0, 1, 2, 3].map(|m| self.factors[m].rows())
    }

    pub fn reconstruct_tensor(&self) -> DenseTensor3 {
        let [a, b, c, _] = &self.factors;
        reconstruct_kruskal(&self.tensor_weights, a, b, c)
    }

    /// `A diag(σ) Vᵀ`.
    pub fn reconstruct_matrix(&self) -> DenseMatrix {
        let [a, _, _, v] = &self.factors;
        let (ni, nm) = (a.rows(), v.rows());
        let mut out = vec![0.0; ni * nm];
        for r in 0..self.rank() {
            let s = self.matrix_weights[r];
            if s == 0.0 {
                continue;
            }
            let ac = a.col(r);
            for (m, &vm) in v.col(r).iter().enumerate() {
                let w = s * vm;
                for (o, &ai) in out[m * ni..(m + 1) * ni].iter_mut().zip(ac) {
                    *o += w * ai;
                }
            }
        }
        DenseMatrix::from_raw(ni, nm, out)
    }

    /// The tensor half of the model.
    pub fn tensor_part(&self) -> KruskalModel {
        KruskalModel {
            weights: self.tensor_weights.clone(),
            factors: [0, 1, 2].map(|m| self.factors[m].clone()),
        }
    }

    /// Unit-norm columns with scales folded into λ (A, B, C) and σ (A, V).
    /// Signs: A and B columns have a positive largest entry, λ and σ are
    /// nonnegative; flips are absorbed by C (tensor side) and V (matrix side).
    pub fn normalize(&self) -> Result<Self> {
        let mut out = self.clone();
        for r in 0..self.rank() {
            let mut norms = [0.0; 4];
            for (mode, f) in out.factors.iter_mut().enumerate() {
                let n = norm2(f.col(r));
                if n == 0.0 {
                    return Err(Error::DegenerateComponent {
                        mode: mode + 1,
                        index: r,
                    });
                }
                f.col_mut(r).iter_mut().for_each(|x| *x /= n);
                norms[mode] = n;
            }
            out.tensor_weights[r] *= norms[0] * norms[1] * norms[2];
            out.matrix_weights[r] *= norms[0] * norms[3];

            if leading_sign(out.factors[0].col(r)) < 0.0 {
                flip(out.factors[0].col_mut(r));
                flip(out.factors[2].col_mut(r));
                flip(out.factors[3].col_mut(r));
            }
            if leading_sign(out.factors[1].col(r)) < 0.0 {
                flip(out.factors[1].col_mut(r));
                flip(out.factors[2].col_mut(r));
            }
            if out.tensor_weights[r] < 0.0 {
                out.tensor_weights[r] = -out.tensor_weights[r];
                flip(out.factors[2].col_mut(r));
            }
            if out.matrix_weights[r] < 0.0 {
                out.matrix_weights[r] = -out.matrix_weights[r];
                flip(out.factors[3].col_mut(r));
            }
        }
        Ok(out)
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            tensor_weights: perm.iter().map(|&p| self.tensor_weights[p]).collect(),
            matrix_weights: perm.iter().map(|&p| self.matrix_weights[p]).collect(),
            factors: [0, 1, 2, 3].map(|m| self.factors[m].permute_cols(perm)),
        }
    }
}

impl FactorModel for CoupledModel {
    fn rank(&self) -> usize {
        self.tensor_weights.len()
    }

    fn factor_matrices(&self) -> Vec<&DenseMatrix> {
        self.factors.iter().collect()
    }
}

pub(crate) fn reconstruct_kruskal(
    weights: &[f64],
    a: &DenseMatrix,
    b: &DenseMatrix,
    c: &DenseMatrix,
) -> DenseTensor3 {
    let dims = [a.rows(), b.rows(), c.rows()];
    let ni = dims[0];
    let mut out = vec![0.0; dims.iter().product()];
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            let fiber = &mut out[ni * (j + dims[1] * k)..][..ni];
            for (r, &w) in weights.iter().enumerate() {
                let s = w * b.get(j, r) * c.get(k, r);
                if s != 0.0 {
                    for (o, &ai) in fiber.iter_mut().zip(a.col(r)) {
                        *o += s * ai;
                    }
                }
            }
        }
    }
    DenseTensor3::from_raw(dims, out)
}

fn leading_sign(col: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for &x in col {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn flip(col: &mut [f64]) {
    col.iter_mut().for_each(|x| *x = -*x);
}

fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let d = norm2(x) * norm2(y);
    if d == 0.0 {
        0.0
    } else {
        dot(x, y) / d
    }
}

/// Result of matching the components of two models.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorMatch {
    /// Minimum over matched components of the product of absolute cosines.
    pub score: f64,
    /// Component `r` of the first model matches `permutation[r]` of the second.
    pub permutation: Vec<usize>,
    /// Per-component congruence of the matched pairs, indexed like the first model.
    pub congruences: Vec<f64>,
    /// `signs[mode][r]` is the sign of the cosine between matched columns.
    pub signs: Vec<Vec<f64>>,
}

/// Pairwise congruence table: entry `[r][s]` is the product over modes of
/// `|cos(m1 col r, m2 col s)|`.
pub fn congruence_table<M: FactorModel>(m1: &M, m2: &M) -> Result<Vec<Vec<f64>>> {
    let (f1, f2) = (m1.factor_matrices(), m2.factor_matrices());
    if m1.rank() != m2.rank() {
        return domain(format!("ranks differ: {} vs {}", m1.rank(), m2.rank()));
    }
    if f1.len() != f2.len() || f1.iter().zip(&f2).any(|(a, b)| a.rows() != b.rows()) {
        return domain("models have different mode extents");
    }
    let r = m1.rank();
    let mut table = vec![vec![1.0; r]; r];
    for (a, b) in f1.iter().zip(&f2) {
        for (p, row) in table.iter_mut().enumerate() {
            for (q, t) in row.iter_mut().enumerate() {
                *t *= cosine(a.col(p), b.col(q)).abs();
            }
        }
    }
    Ok(table)
}

/// Factor match score with greedy matching, largest congruence first.
pub fn factor_match_score<M: FactorModel>(m1: &M, m2: &M) -> Result<FactorMatch> {
    let table = congruence_table(m1, m2)?;
    let r = m1.rank();
    let mut permutation = vec![usize::MAX; r];
    let mut taken = vec![false; r];
    for _ in 0..r {
        let mut best: Option<(usize, usize, f64)> = None;
        for (p, row) in table.iter().enumerate() {
            if permutation[p] != usize::MAX {
                continue;
            }
            for (q, &v) in row.iter().enumerate() {
                if !taken[q] && best.is_none_or(|(_, _, bv)| v > bv) {
                    best = Some((p, q, v));
                }
            }
        }
        let (p, q, _) = best.expect("an unmatched pair remains");
        permutation[p] = q;
        taken[q] = true;
    }
    let congruences: Vec<f64> = (0..r).map(|p| table[p][permutation[p]]).collect();
    let score = congruences
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .min(1.0);
    let signs = m1
        .factor_matrices()
        .iter()
        .zip(m2.factor_matrices())
        .map(|(a, b)| {
            (0..r)
                .map(|p| {
                    if dot(a.col(p), b.col(permutation[p])) < 0.0 {
                        -1.0
                    } else {
                        1.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(FactorMatch {
        score: if r == 0 { 1.0 } else { score },
        permutation,
        congruences,
        signs,
    })
}

/// Cross-component congruence of a CP model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CongruenceCheck {
    /// `max_{r≠s} |cos(a_r,a_s) cos(b_r,b_s) cos(c_r,c_s)|`, 0 for R = 1.
    pub max_congruence: f64,
    /// Set when `max_congruence` reaches [`DEGENERACY_THRESHOLD`].
    pub degenerate: bool,
}

pub fn congruence_check(m: &KruskalModel) -> CongruenceCheck {
    let r = m.rank();
    let mut max = 0.0f64;
    for p in 0..r {
        for q in p + 1..r {
            let v: f64 = m
                .factors
                .iter()
                .map(|f| cosine(f.col(p), f.col(q)))
                .product();
            max = max.max(v.abs());
        }
    }
    CongruenceCheck {
        max_congruence: max,
        degenerate: max >= DEGENERACY_THRESHOLD,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> DenseMatrix {
        DenseMatrix::from_col_major(v.len(), 1, v.to_vec()).unwrap()
    }

    fn e(n: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    #[test]
    fn rank_one_unit_basis() {
        let m =
            KruskalModel::new(vec![2.0], [col(&e(2, 0)), col(&e(3, 0)), col(&e(2, 0))]).unwrap();
        let t = m.reconstruct();
        assert_eq!(t.get(0, 0, 0), 2.0);
        assert_eq!(t.as_slice().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn zero_weights_reconstruct_zero() {
        let f = DenseMatrix::from_col_major(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = KruskalModel::new(vec![0.0, 0.0], [f.clone(), f.clone(), f.clone()]).unwrap();
        assert!(m.reconstruct().as_slice().iter().all(|&v| v == 0.0));
        let cm = CoupledModel::new(
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            [f.clone(), f.clone(), f.clone(), f],
        )
        .unwrap();
        assert!(cm.reconstruct_matrix().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coupled_matrix_single_entry() {
        let m = CoupledModel::new(
            vec![1.0],
            vec![3.0],
            [col(&e(2, 0)), col(&e(2, 0)), col(&e(2, 0)), col(&e(3, 1))],
        )
        .unwrap();
        let y = m.reconstruct_matrix();
        assert_eq!(y.get(0, 1), 3.0);
        assert_eq!(y.as_slice().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn normalize_forced_values() {
        let m = KruskalModel::new(
            vec![1.0],
            [col(&[3.0, 4.0, 0.0]), col(&[0.0, 2.0]), col(&[1.0, 0.0])],
        )
        .unwrap();
        let n = m.normalize().unwrap();
        assert_eq!(n.factors()[0].as_slice(), &[0.6, 0.8, 0.0]);
        assert_eq!(n.weights(), &[10.0]);
    }

    #[test]
    fn normalize_idempotent_on_exact_unit_columns() {
        let m = KruskalModel::new(
            vec![2.5],
            [col(&[0.6, 0.8]), col(&e(3, 2)), col(&[0.0, 1.0])],
        )
        .unwrap();
        assert_eq!(m.normalize().unwrap(), m);
    }

    #[test]
    fn normalize_zero_column_names_mode() {
        let m = KruskalModel::new(vec![1.0], [col(&[1.0]), col(&[0.0, 0.0]), col(&[1.0])]).unwrap();
        match m.normalize() {
            Err(Error::DegenerateComponent { mode, index }) => assert_eq!((mode, index), (2, 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sign_convention() {
        let m = KruskalModel::new(
            vec![-1.0],
            [col(&[-2.0, 1.0]), col(&[1.0, -3.0]), col(&[1.0, 1.0])],
        )
        .unwrap();
        let n = m.normalize().unwrap();
        assert!(n.weights()[0] > 0.0);
        assert!(n.factors()[0].get(0, 0) > 0.0);
        assert!(n.factors()[1].get(1, 0) > 0.0);
        let (t0, t1) = (m.reconstruct(), n.reconstruct());
        for (x, y) in t0.as_slice().iter().zip(t1.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn congruence_orthogonal_and_identical() {
        let eye = DenseMatrix::from_col_major(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = KruskalModel::new(vec![1.0, 1.0], [eye.clone(), eye.clone(), eye.clone()]).unwrap();
        assert_eq!(congruence_check(&m).max_congruence, 0.0);
        let same = DenseMatrix::from_col_major(2, 2, vec![0.6, 0.8, 0.6, 0.8]).unwrap();
        let m = KruskalModel::new(vec![1.0, -1.0], [same.clone(), same.clone(), same]).unwrap();
        let c = congruence_check(&m);
        assert!((c.max_congruence - 1.0).abs() < 1e-12);
        assert!(c.degenerate);
    }

    #[test]
    fn fms_rejects_extent_mismatch() {
        let m1 = KruskalModel::new(vec![1.0], [col(&[1.0]), col(&[1.0]), col(&[1.0])]).unwrap();
        let m2 =
            KruskalModel::new(vec![1.0], [col(&[1.0, 0.0]), col(&[1.0]), col(&[1.0])]).unwrap();
        assert!(factor_match_score(&m1, &m2).is_err());
    }
}
