//! Centering and scaling applied before fitting.
//!
//! The tensor protocol centers every time-mode fiber and then divides each
//! subject slice by its sample standard deviation; the matrix protocol
//! centers each row and then divides it by its sample standard deviation.
//! Every step is recorded so it can be audited and undone.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, DenseTensor3, Mode};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PreprocessStep {
    /// Mean of each fiber along `mode` was subtracted. Fibers are indexed
    /// by the two other modes, the lower-numbered one fastest.
    CenterTensor {
        mode: Mode,
        offsets: Vec<f64>,
    },
    /// Each slice orthogonal to `mode` was divided by `scales[index]`.
    ScaleTensor {
        mode: Mode,
        scales: Vec<f64>,
    },
    CenterRows {
        offsets: Vec<f64>,
    },
    ScaleRows {
        scales: Vec<f64>,
    },
    /// The whole dataset was divided by its Frobenius norm.
    UnitNorm {
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PreprocessRecord {
    pub steps: Vec<PreprocessStep>,
}

impl PreprocessRecord {
    fn single(step: PreprocessStep) -> Self {
        Self { steps: vec![step] }
    }

    /// Appends the steps of `later`, which were applied after these.
    pub fn then(mut self, later: PreprocessRecord) -> Self {
        self.steps.extend(later.steps);
        self
    }

    /// Reverts every recorded tensor step, last first.
    pub fn undo_tensor(&self, t: &DenseTensor3) -> Result<DenseTensor3> {
        let mut out = t.clone();
        for step in self.steps.iter().rev() {
            match step {
                PreprocessStep::CenterTensor { mode, offsets } => {
                    for_each_entry(&mut out, |idx, v| {
                        *v += offsets[fiber_index(idx, *mode, t.dims())]
                    });
                }
                PreprocessStep::ScaleTensor { mode, scales } => {
                    for_each_entry(&mut out, |idx, v| *v *= scales[idx[mode.index()]]);
                }
                PreprocessStep::UnitNorm { scale } => {
                    out.data_mut().iter_mut().for_each(|v| *v *= scale)
                }
                _ => return Err(Error::Domain("matrix step in a tensor record".into())),
            }
        }
        Ok(out)
    }

    pub fn undo_matrix(&self, y: &DenseMatrix) -> Result<DenseMatrix> {
        let (rows, cols) = y.dims();
        let mut data = y.as_slice().to_vec();
        for step in self.steps.iter().rev() {
            match step {
                PreprocessStep::CenterRows { offsets } => {
                    for c in 0..cols {
                        for r in 0..rows {
                            data[r + rows * c] += offsets[r];
                        }
                    }
                }
                PreprocessStep::ScaleRows { scales } => {
                    for c in 0..cols {
                        for r in 0..rows {
                            data[r + rows * c] *= scales[r];
                        }
                    }
                }
                PreprocessStep::UnitNorm { scale } => data.iter_mut().for_each(|v| *v *= scale),
                _ => return Err(Error::Domain("tensor step in a matrix record".into())),
            }
        }
        Ok(DenseMatrix::from_raw(rows, cols, data))
    }
}

fn for_each_entry(t: &mut DenseTensor3, mut f: impl FnMut([usize; 3], &mut f64)) {
    let [ni, nj, _] = t.dims();
    for (off, v) in t.data_mut().iter_mut().enumerate() {
        let idx = [off % ni, (off / ni) % nj, off / (ni * nj)];
        f(idx, v);
    }
}

fn fiber_index(idx: [usize; 3], mode: Mode, dims: [usize; 3]) -> usize {
    let (p, q) = mode.others();
    idx[p.index()] + dims[p.index()] * idx[q.index()]
}

fn sample_std(values: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let (n, sum) = values
        .clone()
        .fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n < 2 {
        return None;
    }
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    Some((ss / (n - 1) as f64).sqrt())
}

/// Subtracts the mean of every fiber along `mode`.
pub fn center_tensor_across_mode(
    t: &DenseTensor3,
    mode: Mode,
) -> Result<(DenseTensor3, PreprocessRecord)> {
    let dims = t.dims();
    let n = dims[mode.index()];
    if n < 2 {
        return Err(Error::DegenerateCentering {
            mode: mode.number(),
        });
    }
    let (p, q) = mode.others();
    let n_fibers = dims[p.index()] * dims[q.index()];
    let mut sums = vec![0.0; n_fibers];
    let mut out = t.clone();
    for_each_entry(&mut out, |idx, v| sums[fiber_index(idx, mode, dims)] += *v);
    let offsets: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    for_each_entry(&mut out, |idx, v| {
        *v -= offsets[fiber_index(idx, mode, dims)]
    });
    Ok((
        out,
        PreprocessRecord::single(PreprocessStep::CenterTensor { mode, offsets }),
    ))
}

/// Divides every slice orthogonal to `mode` by the sample standard
/// deviation of its entries.
pub fn scale_tensor_within_mode(
    t: &DenseTensor3,
    mode: Mode,
) -> Result<(DenseTensor3, PreprocessRecord)> {
    let dims = t.dims();
    let n = dims[mode.index()];
    let mut slices = vec![Vec::new(); n];
    let mut out = t.clone();
    for_each_entry(&mut out, |idx, v| slices[idx[mode.index()]].push(*v));
    let mut scales = Vec::with_capacity(n);
    for (index, s) in slices.iter().enumerate() {
        match sample_std(s.iter().copied()) {
            Some(sd) if sd > 0.0 => scales.push(sd),
            _ => {
                return Err(Error::ZeroVarianceSlice {
                    mode: mode.number(),
                    index,
                })
            }
        }
    }
    for_each_entry(&mut out, |idx, v| *v /= scales[idx[mode.index()]]);
    Ok((
        out,
        PreprocessRecord::single(PreprocessStep::ScaleTensor { mode, scales }),
    ))
}

/// Centers each row, then divides it by its sample standard deviation.
pub fn center_and_scale_matrix_rows(y: &DenseMatrix) -> Result<(DenseMatrix, PreprocessRecord)> {
    let (rows, cols) = y.dims();
    let mut data = y.as_slice().to_vec();
    let mut offsets = Vec::with_capacity(rows);
    let mut scales = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = (0..cols).map(|c| y.get(r, c));
        let sd = match sample_std(row.clone()) {
            Some(sd) if sd > 0.0 => sd,
            _ => return Err(Error::ConstantRow { row: r }),
        };
        offsets.push(row.sum::<f64>() / cols as f64);
        scales.push(sd);
    }
    for c in 0..cols {
        for r in 0..rows {
            let v = &mut data[r + rows * c];
            *v = (*v - offsets[r]) / scales[r];
        }
    }
    let record = PreprocessRecord {
        steps: vec![
            PreprocessStep::CenterRows { offsets },
            PreprocessStep::ScaleRows { scales },
        ],
    };
    Ok((DenseMatrix::from_raw(rows, cols, data), record))
}

/// Time-mode centering followed by subject-slice scaling.
pub fn tensor_protocol(t: &DenseTensor3) -> Result<(DenseTensor3, PreprocessRecord)> {
    let (centered, r1) = center_tensor_across_mode(t, Mode::Two)?;
    let (scaled, r2) = scale_tensor_within_mode(&centered, Mode::One)?;
    Ok((scaled, r1.then(r2)))
}

pub fn tensor_to_unit_norm(t: &DenseTensor3) -> Result<(DenseTensor3, PreprocessRecord)> {
    let n = t.frobenius_norm();
    if n == 0.0 {
        return Err(Error::Domain(
            "cannot scale an all-zero tensor to unit norm".into(),
        ));
    }
    let mut out = t.clone();
    out.data_mut().iter_mut().for_each(|v| *v /= n);
    Ok((
        out,
        PreprocessRecord::single(PreprocessStep::UnitNorm { scale: n }),
    ))
}

pub fn matrix_to_unit_norm(y: &DenseMatrix) -> Result<(DenseMatrix, PreprocessRecord)> {
    let n = y.frobenius_norm();
    if n == 0.0 {
        return Err(Error::Domain(
            "cannot scale an all-zero matrix to unit norm".into(),
        ));
    }
    let data = y.as_slice().iter().map(|v| v / n).collect();
    let (r, c) = y.dims();
    Ok((
        DenseMatrix::from_raw(r, c, data),
        PreprocessRecord::single(PreprocessStep::UnitNorm { scale: n }),
    ))
}

/// Centering/scaling of both datasets followed, unless disabled, by
/// division by their Frobenius norms.
pub fn prepare_coupled(
    x: &DenseTensor3,
    y: &DenseMatrix,
    preprocess: bool,
    unit_norm: bool,
) -> Result<(
    DenseTensor3,
    DenseMatrix,
    PreprocessRecord,
    PreprocessRecord,
)> {
    let (mut x, mut y) = (x.clone(), y.clone());
    let (mut rx, mut ry) = (PreprocessRecord::default(), PreprocessRecord::default());
    if preprocess {
        let (xt, r) = tensor_protocol(&x)?;
        x = xt;
        rx = rx.then(r);
        let (yt, r) = center_and_scale_matrix_rows(&y)?;
        y = yt;
        ry = ry.then(r);
    }
    if unit_norm {
        let (xt, r) = tensor_to_unit_norm(&x)?;
        x = xt;
        rx = rx.then(r);
        let (yt, r) = matrix_to_unit_norm(&y)?;
        y = yt;
        ry = ry.then(r);
    }
    Ok((x, y, rx, ry))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_tensor_centers_to_zero() {
        let t = DenseTensor3::new([2, 3, 2], vec![4.5; 12]).unwrap();
        let (c, _) = center_tensor_across_mode(&t, Mode::Two).unwrap();
        assert!(c.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centering_unit_extent_is_rejected() {
        let t = DenseTensor3::new([2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(matches!(
            center_tensor_across_mode(&t, Mode::Two),
            Err(Error::DegenerateCentering { mode: 2 })
        ));
    }

    #[test]
    fn two_point_slice_scales_to_unit_std() {
        // slice 0 holds {0, 2}, slice 1 holds {1, 5}
        let t = DenseTensor3::new([2, 2, 1], vec![0.0, 1.0, 2.0, 5.0]).unwrap();
        let (s, rec) = scale_tensor_within_mode(&t, Mode::One).unwrap();
        match &rec.steps[0] {
            PreprocessStep::ScaleTensor { scales, .. } => {
                assert_eq!(scales[0], 2f64.sqrt());
                assert_eq!(scales[1], 8f64.sqrt());
            }
            other => panic!("{other:?}"),
        }
        assert!(
            (sample_std([s.get(0, 0, 0), s.get(0, 1, 0)].into_iter()).unwrap() - 1.0).abs() < 1e-15
        );
    }

    #[test]
    fn zero_variance_slice_names_index() {
        let t = DenseTensor3::new([2, 2, 1], vec![0.0, 1.0, 0.0, 5.0]).unwrap();
        assert!(matches!(
            scale_tensor_within_mode(&t, Mode::One),
            Err(Error::ZeroVarianceSlice { mode: 1, index: 0 })
        ));
    }

    #[test]
    fn two_point_row() {
        let y = DenseMatrix::from_rows(&[vec![1.0, 3.0]]).unwrap();
        let (z, _) = center_and_scale_matrix_rows(&y).unwrap();
        let h = 2f64.sqrt() / 2.0;
        assert!((z.get(0, 0) + h).abs() < 1e-15);
        assert!((z.get(0, 1) - h).abs() < 1e-15);
    }

    #[test]
    fn constant_row_is_rejected() {
        let y = DenseMatrix::from_rows(&[vec![1.0, 3.0], vec![2.0, 2.0]]).unwrap();
        assert!(matches!(
            center_and_scale_matrix_rows(&y),
            Err(Error::ConstantRow { row: 1 })
        ));
        let y = DenseMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(
            center_and_scale_matrix_rows(&y),
            Err(Error::ConstantRow { row: 0 })
        ));
    }

    #[test]
    fn unit_norm_undo() {
        let t = DenseTensor3::new([1, 1, 2], vec![3.0, 4.0]).unwrap();
        let (u, rec) = tensor_to_unit_norm(&t).unwrap();
        assert_eq!(u.as_slice(), &[0.6, 0.8]);
        assert_eq!(rec.undo_tensor(&u).unwrap(), t);
    }
}
