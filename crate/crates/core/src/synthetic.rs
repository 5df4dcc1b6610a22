//! Planted coupled data with known shared/unshared structure and group
//! effects, used to validate fitting, classification and testing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kruskal::CoupledModel;
use crate::stats::GroupLabels;
use crate::tensor::{norm2, DenseMatrix, DenseTensor3};

/// Voxel count of the fMRI matrix the paper-shaped preset is scaled from.
pub const FULL_VOXEL_COUNT: usize = 60186;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// `(I, J, K, M)`.
    pub dims: [usize; 4],
    pub rank: usize,
    pub in_tensor: Vec<bool>,
    pub in_matrix: Vec<bool>,
    /// Planted weights before the column norms are folded in.
    pub lambda: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Noise norm relative to the signal norm.
    pub noise_tensor: f64,
    pub noise_matrix: f64,
    /// `(n0, n1)`: the first `n0` subjects form group 0.
    pub groups: (usize, usize),
    /// Shift added to group-1 loadings of each component.
    pub delta: Vec<f64>,
    /// Draw time-mode columns as smooth bump mixtures instead of white noise.
    pub smooth_time: bool,
    pub seed: u64,
}

impl SynthSpec {
    /// All-shared spec with unit weights, no noise and no group effect.
    pub fn shared(dims: [usize; 4], rank: usize, seed: u64) -> Self {
        let n1 = dims[0] / 2;
        Self {
            dims,
            rank,
            in_tensor: vec![true; rank],
            in_matrix: vec![true; rank],
            lambda: vec![1.0; rank],
            sigma: vec![1.0; rank],
            noise_tensor: 0.0,
            noise_matrix: 0.0,
            groups: (dims[0] - n1, n1),
            delta: vec![0.0; rank],
            smooth_time: false,
            seed,
        }
    }

    /// Removes component `r` from the matrix (σ_r = 0).
    pub fn tensor_only(mut self, r: usize) -> Self {
        self.in_matrix[r] = false;
        self.sigma[r] = 0.0;
        self
    }

    pub fn with_noise(mut self, tensor: f64, matrix: f64) -> Self {
        self.noise_tensor = tensor;
        self.noise_matrix = matrix;
        self
    }

    pub fn dims_tensor(&self) -> [usize; 3] {
        [self.dims[0], self.dims[1], self.dims[2]]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        let r = self.rank;
        if r == 0 {
            return bad("rank must be at least 1".into());
        }
        if self.dims.contains(&0) {
            return bad(format!("dims must be positive, got {:?}", self.dims));
        }
        for (name, len) in [
            ("in_tensor", self.in_tensor.len()),
            ("in_matrix", self.in_matrix.len()),
            ("lambda", self.lambda.len()),
            ("sigma", self.sigma.len()),
            ("delta", self.delta.len()),
        ] {
            if len != r {
                return bad(format!("{name} has {len} entries, rank is {r}"));
            }
        }
        for c in 0..r {
            if self.in_tensor[c] != (self.lambda[c] != 0.0) {
                return bad(format!(
                    "component {c}: in_tensor disagrees with lambda = {}",
                    self.lambda[c]
                ));
            }
            if self.in_matrix[c] != (self.sigma[c] != 0.0) {
                return bad(format!(
                    "component {c}: in_matrix disagrees with sigma = {}",
                    self.sigma[c]
                ));
            }
        }
        if !self.in_tensor.iter().any(|&b| b) || !self.in_matrix.iter().any(|&b| b) {
            return bad("each dataset needs at least one component".into());
        }
        let all_finite = self
            .lambda
            .iter()
            .chain(&self.sigma)
            .chain(&self.delta)
            .all(|v| v.is_finite());
        if !all_finite {
            return bad("weights and shifts must be finite".into());
        }
        for (name, eta) in [
            ("noise_tensor", self.noise_tensor),
            ("noise_matrix", self.noise_matrix),
        ] {
            if !(eta >= 0.0 && eta.is_finite()) {
                return bad(format!("{name} must be a nonnegative number, got {eta}"));
            }
        }
        let (n0, n1) = self.groups;
        if n0 == 0 || n1 == 0 || n0 + n1 != self.dims[0] {
            return bad(format!(
                "groups ({n0}, {n1}) must be nonempty and sum to I = {}",
                self.dims[0]
            ));
        }
        Ok(())
    }
}

/// Desk-scale version of the paper's data shape: 38 subjects (22 controls,
/// 16 patients) × 451 time samples × 11 electrodes, coupled with a 38 × 600
/// matrix (the real voxel count is [`FULL_VOXEL_COUNT`]). Three shared
/// components, the first carrying a group effect of 1.5, 20% noise.
pub fn paper_shaped_preset() -> SynthSpec {
    SynthSpec {
        dims: [38, 451, 11, 600],
        rank: 3,
        in_tensor: vec![true; 3],
        in_matrix: vec![true; 3],
        lambda: vec![1.0; 3],
        sigma: vec![1.0; 3],
        noise_tensor: 0.2,
        noise_matrix: 0.2,
        groups: (22, 16),
        delta: vec![1.5, 0.0, 0.0],
        smooth_time: true,
        seed: 0,
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub tensor: DenseTensor3,
    pub matrix: DenseMatrix,
    /// Normalized ground truth; the noiseless tensor and matrix are its
    /// reconstructions.
    pub truth: CoupledModel,
    pub labels: GroupLabels,
    /// Subjects-mode loadings after the group shift, before normalization.
    pub raw_subject_loadings: DenseMatrix,
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Unit-norm mixture of three Gaussian bumps.
fn smooth_curve(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let len = n as f64;
    let bumps: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let center = rng.random::<f64>() * len;
            let width = len * (0.05 + rng.random::<f64>() * 0.12);
            let amp: f64 = StandardNormal.sample(rng);
            (center, width.max(0.5), amp)
        })
        .collect();
    let curve: Vec<f64> = (0..n)
        .map(|t| {
            bumps
                .iter()
                .map(|&(c, w, a)| a * (-0.5 * ((t as f64 - c) / w).powi(2)).exp())
                .sum()
        })
        .collect();
    let norm = norm2(&curve);
    if norm > 0.0 {
        curve.iter().map(|v| v / norm).collect()
    } else {
        curve
    }
}

fn add_noise(signal: &[f64], eta: f64, noise: Vec<f64>) -> Vec<f64> {
    let sn = signal.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nn = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
    if eta == 0.0 || nn == 0.0 {
        return signal.to_vec();
    }
    let scale = eta * sn / nn;
    signal
        .iter()
        .zip(noise)
        .map(|(s, n)| s + scale * n)
        .collect()
}

/// Draws data for `spec`. The random stream is consumed in a fixed order
/// (A, B, C, V, tensor noise, matrix noise) regardless of shifts and noise
/// levels, so specs differing only in those share the same draws.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let [ni, nj, nk, nm] = spec.dims;
    let r = spec.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let labels = GroupLabels::from_counts(spec.groups.0, spec.groups.1)?;
    let mut a = normal_vec(&mut rng, ni * r);
    for c in 0..r {
        for i in spec.groups.0..ni {
            a[i + ni * c] += spec.delta[c];
        }
    }
    let b: Vec<f64> = if spec.smooth_time {
        (0..r).flat_map(|_| smooth_curve(&mut rng, nj)).collect()
    } else {
        normal_vec(&mut rng, nj * r)
    };
    let c = normal_vec(&mut rng, nk * r);
    let v = normal_vec(&mut rng, nm * r);
    let noise_x = normal_vec(&mut rng, ni * nj * nk);
    let noise_y = normal_vec(&mut rng, ni * nm);

    let raw = DenseMatrix::from_col_major(ni, r, a.clone())?;
    let truth = CoupledModel::new(
        spec.lambda.clone(),
        spec.sigma.clone(),
        [
            raw.clone(),
            DenseMatrix::from_col_major(nj, r, b)?,
            DenseMatrix::from_col_major(nk, r, c)?,
            DenseMatrix::from_col_major(nm, r, v)?,
        ],
    )?
    .normalize()?;

    let signal_x = truth.reconstruct_tensor();
    let signal_y = truth.reconstruct_matrix();
    let tensor = DenseTensor3::new(
        spec.dims_tensor(),
        add_noise(signal_x.as_slice(), spec.noise_tensor, noise_x),
    )?
    .with_mode_names(["subjects".into(), "time".into(), "electrodes".into()]);
    let matrix = DenseMatrix::from_col_major(
        ni,
        nm,
        add_noise(signal_y.as_slice(), spec.noise_matrix, noise_y),
    )?;
    Ok(SynthData {
        tensor,
        matrix,
        truth,
        labels,
        raw_subject_loadings: raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_is_valid_with_paper_extents() {
        let p = paper_shaped_preset();
        p.validate().unwrap();
        assert_eq!(p.dims_tensor(), [38, 451, 11]);
        assert_eq!((p.dims[0], p.dims[3]), (38, 600));
        assert_eq!(p.groups, (22, 16));
    }

    #[test]
    fn invalid_specs() {
        let base = SynthSpec::shared([6, 5, 4, 7], 2, 1);
        let mut s = base.clone();
        s.sigma[0] = 0.0;
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
        let s = base.clone().tensor_only(0).tensor_only(1);
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.groups = (6, 0);
        assert!(s.validate().is_err());
        let mut s = base;
        s.delta.pop();
        assert!(s.validate().is_err());
    }

    #[test]
    fn unshared_component_has_zero_matrix_weight() {
        let d = generate(&SynthSpec::shared([6, 5, 4, 7], 3, 2).tensor_only(2)).unwrap();
        assert_eq!(d.truth.matrix_weights()[2], 0.0);
        assert!(d.truth.tensor_weights()[2] > 0.0);
    }
}
