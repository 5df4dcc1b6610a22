//! Analytic gradients against central finite differences.

use cmtf_core::acmtf::{acmtf_gradient, acmtf_objective, AcmtfConfig};
use cmtf_core::cp::{cp_gradient, cp_objective};
use cmtf_core::kruskal::CoupledModel;
use cmtf_core::{DenseMatrix, DenseTensor3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_col_major(rows, cols, normal(rng, rows * cols)).unwrap()
}

/// Max over coordinates of `|g - fd| / max(|g|, |fd|, 1)`.
fn max_rel_error(analytic: &[f64], p: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut q = p.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let h = 1e-6 * (1.0 + p[i].abs());
        q[i] = p[i] + h;
        let fp = f(&q);
        q[i] = p[i] - h;
        let fm = f(&q);
        q[i] = p[i];
        let fd = (fp - fm) / (2.0 * h);
        let scale = analytic[i].abs().max(fd.abs()).max(1.0);
        worst = worst.max((analytic[i] - fd).abs() / scale);
    }
    worst
}

#[test]
fn cp_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let dims = [
            rng.random_range(2..=5),
            rng.random_range(2..=6),
            rng.random_range(2..=4),
        ];
        let r = rng.random_range(1..=3);
        let x = DenseTensor3::new(dims, normal(&mut rng, dims.iter().product())).unwrap();
        let factors = dims.map(|n| mat(&mut rng, n, r));
        let g = cp_gradient(&x, &factors).unwrap();
        let flat_g: Vec<f64> = g.iter().flat_map(|m| m.as_slice().to_vec()).collect();
        let p: Vec<f64> = factors.iter().flat_map(|m| m.as_slice().to_vec()).collect();
        let err = max_rel_error(&flat_g, &p, |q| {
            let (a, rest) = q.split_at(dims[0] * r);
            let (b, c) = rest.split_at(dims[1] * r);
            let f = [
                DenseMatrix::from_col_major(dims[0], r, a.to_vec()).unwrap(),
                DenseMatrix::from_col_major(dims[1], r, b.to_vec()).unwrap(),
                DenseMatrix::from_col_major(dims[2], r, c.to_vec()).unwrap(),
            ];
            cp_objective(&x, &f).unwrap()
        });
        assert!(err <= 1e-6, "dims {dims:?} rank {r}: {err:e}");
    }
}

fn coupled_from_flat(p: &[f64], dims: [usize; 4], r: usize) -> CoupledModel {
    let (l, rest) = p.split_at(r);
    let (s, mut rest) = rest.split_at(r);
    let factors = dims.map(|n| {
        let (head, tail) = rest.split_at(n * r);
        rest = tail;
        DenseMatrix::from_col_major(n, r, head.to_vec()).unwrap()
    });
    CoupledModel::new(l.to_vec(), s.to_vec(), factors).unwrap()
}

#[test]
fn acmtf_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..20 {
        let dims = [
            rng.random_range(2..=5),
            rng.random_range(2..=6),
            rng.random_range(2..=4),
            rng.random_range(2..=8),
        ];
        let r = rng.random_range(1..=3);
        let x = DenseTensor3::new(
            [dims[0], dims[1], dims[2]],
            normal(&mut rng, dims[0] * dims[1] * dims[2]),
        )
        .unwrap();
        let y = mat(&mut rng, dims[0], dims[3]);
        let mut lambda = normal(&mut rng, r);
        let mut sigma = normal(&mut rng, r);
        // near the kink of |.|: every other case has a weight below 1e-4
        if case % 2 == 0 {
            lambda[0] = 3e-5 * if case % 4 == 0 { 1.0 } else { -1.0 };
            sigma[r - 1] = -7e-5;
        }
        let m = CoupledModel::new(lambda, sigma, dims.map(|n| mat(&mut rng, n, r))).unwrap();
        let cfg = AcmtfConfig {
            beta: [1e-3, 1e-1, 0.0][case % 3],
            ..AcmtfConfig::new(r)
        };
        let g = acmtf_gradient(&x, &y, &m, &cfg).unwrap().flatten();
        let mut p = m.tensor_weights().to_vec();
        p.extend_from_slice(m.matrix_weights());
        for f in m.factors() {
            p.extend_from_slice(f.as_slice());
        }
        let err = max_rel_error(&g, &p, |q| {
            acmtf_objective(&x, &y, &coupled_from_flat(q, dims, r), &cfg).unwrap()
        });
        assert!(err <= 1e-6, "case {case} dims {dims:?} rank {r}: {err:e}");
    }
}
