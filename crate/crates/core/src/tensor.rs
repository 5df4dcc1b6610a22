//! Dense order-3 tensors, dense matrices, and the multilinear kernels the
//! models are built on.
//!
//! Storage is first-index-fastest for both containers: tensor entry
//! `(i, j, k)` lives at `i + I*j + I*J*k` and matrix entry `(r, c)` at
//! `r + rows*c`. Mode-n unfoldings follow the convention where the
//! surviving modes are laid out with the lower-numbered one varying
//! fastest, so the mode-1 unfolding of a tensor shares its buffer layout.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// One of the three tensor modes, numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    /// Zero-based position of the mode.
    pub fn index(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }

    /// One-based mode number.
    pub fn number(self) -> usize {
        self.index() + 1
    }

    /// The two other modes, in increasing order.
    pub fn others(self) -> (Mode, Mode) {
        match self {
            Mode::One => (Mode::Two, Mode::Three),
            Mode::Two => (Mode::One, Mode::Three),
            Mode::Three => (Mode::One, Mode::Two),
        }
    }
}

impl TryFrom<usize> for Mode {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            _ => domain(format!("mode must be 1, 2 or 3, got {n}")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(offset) => Err(Error::NonFinite { offset }),
        None => Ok(()),
    }
}

/// Dense real matrix in column-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from column-major values.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return domain(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            ));
        }
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return domain("ragged rows");
        }
        let mut data = vec![0.0; n * m];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[i + n * j] = v;
            }
        }
        Self::from_col_major(n, m, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Column-major values.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r + self.rows * c]
    }

    pub(crate) fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r + self.rows * c] = v;
    }

    pub fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub(crate) fn col_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        (0..self.cols).map(|c| self.get(r, c)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    /// Returns a copy with columns reordered so that output column `c` is
    /// input column `perm[c]`.
    pub fn permute_cols(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.col(p));
        }
        Self::from_raw(self.rows, perm.len(), data)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// Plain matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<Self> {
        if self.cols != rhs.rows {
            return domain(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for c in 0..rhs.cols {
            let dst = &mut out.data[c * self.rows..(c + 1) * self.rows];
            for k in 0..self.cols {
                let w = rhs.get(k, c);
                if w != 0.0 {
                    axpy(w, self.col(k), dst);
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ self`.
    pub fn gram(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.cols);
        for p in 0..self.cols {
            for q in p..self.cols {
                let v = dot(self.col(p), self.col(q));
                out.set(p, q, v);
                out.set(q, p, v);
            }
        }
        out
    }
}

/// Dense order-3 tensor, first index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
    mode_names: [String; 3],
}

impl DenseTensor3 {
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return domain(format!("tensor extents must be positive, got {dims:?}"));
        }
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return domain(format!(
                "tensor {dims:?} needs {n} values, got {}",
                data.len()
            ));
        }
        check_finite(&data)?;
        Ok(Self {
            dims,
            data,
            mode_names: default_mode_names(),
        })
    }

    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, vec![0.0; dims.iter().product()])
    }

    /// Fills a tensor from a function of the zero-based index.
    pub fn from_fn(
        dims: [usize; 3],
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::new(dims, data)
    }

    pub(crate) fn from_raw(dims: [usize; 3], data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.iter().product::<usize>());
        Self {
            dims,
            data,
            mode_names: default_mode_names(),
        }
    }

    pub fn with_mode_names(mut self, names: [String; 3]) -> Self {
        self.mode_names = names;
        self
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn extent(&self, mode: Mode) -> usize {
        self.dims[mode.index()]
    }

    pub fn mode_names(&self) -> &[String; 3] {
        &self.mode_names
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    /// Mode-1 fiber `X[:, j, k]`.
    pub(crate) fn fiber1(&self, j: usize, k: usize) -> &[f64] {
        let start = self.dims[0] * (j + self.dims[1] * k);
        &self.data[start..start + self.dims[0]]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

fn default_mode_names() -> [String; 3] {
    ["mode1".into(), "mode2".into(), "mode3".into()]
}

/// Mode-n unfolding. Result dims are `(I, J*K)`, `(J, I*K)` or `(K, I*J)`.
pub fn unfold(t: &DenseTensor3, mode: Mode) -> DenseMatrix {
    let [ni, nj, nk] = t.dims;
    match mode {
        Mode::One => DenseMatrix::from_raw(ni, nj * nk, t.data.clone()),
        Mode::Two => {
            let mut out = DenseMatrix::zeros(nj, ni * nk);
            for k in 0..nk {
                for j in 0..nj {
                    for (i, &v) in t.fiber1(j, k).iter().enumerate() {
                        out.set(j, i + ni * k, v);
                    }
                }
            }
            out
        }
        Mode::Three => {
            let mut out = DenseMatrix::zeros(nk, ni * nj);
            for k in 0..nk {
                for j in 0..nj {
                    for (i, &v) in t.fiber1(j, k).iter().enumerate() {
                        out.set(k, i + ni * j, v);
                    }
                }
            }
            out
        }
    }
}

/// Inverse of [`unfold`].
pub fn fold(m: &DenseMatrix, mode: Mode, dims: [usize; 3]) -> Result<DenseTensor3> {
    let [ni, nj, nk] = dims;
    if dims.contains(&0) {
        return domain(format!("tensor extents must be positive, got {dims:?}"));
    }
    let expected = match mode {
        Mode::One => (ni, nj * nk),
        Mode::Two => (nj, ni * nk),
        Mode::Three => (nk, ni * nj),
    };
    if m.dims() != expected {
        return domain(format!(
            "cannot fold {}x{} matrix into {dims:?} along mode {mode}",
            m.rows, m.cols
        ));
    }
    let mut out = DenseTensor3::from_raw(dims, vec![0.0; ni * nj * nk]);
    for k in 0..nk {
        for j in 0..nj {
            for i in 0..ni {
                let v = match mode {
                    Mode::One => m.get(i, j + nj * k),
                    Mode::Two => m.get(j, i + ni * k),
                    Mode::Three => m.get(k, i + ni * j),
                };
                let off = out.offset(i, j, k);
                out.data[off] = v;
            }
        }
    }
    Ok(out)
}

/// Column-wise Kronecker product. Row `p*rows_b + q` of column `r` holds
/// `a[p, r] * b[q, r]`, so the right operand varies fastest.
pub fn khatri_rao(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.cols {
        return domain(format!(
            "khatri-rao operands need equal column counts, got {} and {}",
            a.cols, b.cols
        ));
    }
    let mut data = Vec::with_capacity(a.rows * b.rows * a.cols);
    for r in 0..a.cols {
        for &av in a.col(r) {
            data.extend(b.col(r).iter().map(|&bv| av * bv));
        }
    }
    Ok(DenseMatrix::from_raw(a.rows * b.rows, a.cols, data))
}

/// Matricized tensor times Khatri-Rao product along `mode`.
///
/// `f1` and `f2` are the factors of the two remaining modes in increasing
/// mode order. The result equals `unfold(t, mode) * khatri_rao(f2, f1)`,
/// computed without forming the Khatri-Rao product.
pub fn mttkrp(
    t: &DenseTensor3,
    f1: &DenseMatrix,
    f2: &DenseMatrix,
    mode: Mode,
) -> Result<DenseMatrix> {
    let (m1, m2) = mode.others();
    if f1.rows != t.extent(m1) || f2.rows != t.extent(m2) {
        return domain(format!(
            "mttkrp mode {mode}: factor rows ({}, {}) do not match extents ({}, {})",
            f1.rows,
            f2.rows,
            t.extent(m1),
            t.extent(m2)
        ));
    }
    if f1.cols != f2.cols {
        return domain(format!(
            "mttkrp factors need equal column counts, got {} and {}",
            f1.cols, f2.cols
        ));
    }
    let rank = f1.cols;
    let [_, nj, nk] = t.dims;
    let mut out = DenseMatrix::zeros(t.extent(mode), rank);
    match mode {
        Mode::One => {
            // f1 = B (J x R), f2 = C (K x R)
            for k in 0..nk {
                for j in 0..nj {
                    let fiber = t.fiber1(j, k);
                    for r in 0..rank {
                        let w = f1.get(j, r) * f2.get(k, r);
                        axpy(w, fiber, out.col_mut(r));
                    }
                }
            }
        }
        Mode::Two => {
            // f1 = A (I x R), f2 = C (K x R)
            for k in 0..nk {
                for j in 0..nj {
                    let fiber = t.fiber1(j, k);
                    for r in 0..rank {
                        let d = dot(fiber, f1.col(r));
                        out.data[j + nj * r] += d * f2.get(k, r);
                    }
                }
            }
        }
        Mode::Three => {
            // f1 = A (I x R), f2 = B (J x R)
            for k in 0..nk {
                for j in 0..nj {
                    let fiber = t.fiber1(j, k);
                    for r in 0..rank {
                        let d = dot(fiber, f1.col(r));
                        out.data[k + nk * r] += d * f2.get(j, r);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
