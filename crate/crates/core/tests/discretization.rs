mod common;

use common::*;
use nalgebra::DMatrix;
use poroade::discretization::{build_grid, build_ops, DiscreteOps, FieldSpace};
use poroade::linalg::Sparse;
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Eigenvalues of an operator that is self-adjoint in the weighted product.
fn weighted_eigenvalues(op: &Sparse, space: &FieldSpace) -> Vec<f64> {
    let d = op.to_dense();
    let n = d.nrows();
    let sq: Vec<f64> = space.weights.iter().map(|w| w.sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| sq[i] * d[(i, j)] / sq[j]);
    let sym = (&s + s.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `(2/h sin(kπh/2L))²`, `k = 1..n`, for `n` modes on a length-`L` axis.
fn dirichlet_modes(n: usize, h: f64, l: f64) -> Vec<f64> {
    (1..=n)
        .map(|k| (2.0 / h * (k as f64 * std::f64::consts::PI * h / (2.0 * l)).sin()).powi(2))
        .collect()
}

fn neg_product(a: &Sparse, b: &Sparse) -> Sparse {
    let t: Vec<_> = a.matmul(b).triplets().into_iter().map(|(r, c, v)| (r, c, -v)).collect();
    Sparse::from_triplets(a.nrows(), b.ncols(), &t)
}

#[test]
fn pressure_laplacian_eigenvalues_1d() {
    for n in [4, 7, 16] {
        let ops = ops_1d(n);
        let h = 1.0 / n as f64;
        let ev = weighted_eigenvalues(&neg_product(&ops.dv, &ops.gp), &ops.pressure);
        let mut want = dirichlet_modes(n, h, 1.0);
        want.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12 * b.max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn elastic_laplacian_eigenvalues_1d() {
    let n = 10;
    let ops = ops_1d(n);
    let ev = weighted_eigenvalues(&neg_product(&ops.ds, &ops.gv), &ops.velocity);
    let want = dirichlet_modes(n - 1, 1.0 / n as f64, 1.0);
    assert_eq!(ev.len(), want.len());
    for (a, b) in ev.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-12 * b, "{a} vs {b}");
    }
}

#[test]
fn pressure_laplacian_eigenvalues_2d_are_sums() {
    let (nx, ny) = (4, 3);
    let g = build_grid(2, &[2.0, 1.5], &[nx, ny]).unwrap();
    let ops = build_ops(&g);
    let ev = weighted_eigenvalues(&neg_product(&ops.dv, &ops.gp), &ops.pressure);
    let lx = dirichlet_modes(nx, 0.5, 2.0);
    let ly = dirichlet_modes(ny, 0.5, 1.5);
    let mut want: Vec<f64> = lx.iter().flat_map(|a| ly.iter().map(move |b| a + b)).collect();
    want.sort_by(f64::total_cmp);
    for (a, b) in ev.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-12 * b, "{a} vs {b}");
    }
}

fn adjoint_gap(ops: &DiscreteOps, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random(&mut rng, ops.pressure.len());
    let psi = random(&mut rng, ops.flux.len());
    let v = random(&mut rng, ops.velocity.len());
    let s = random(&mut rng, ops.stress.len());
    let a = ops.flux.inner(&ops.gp.apply(&p), &psi) + ops.pressure.inner(&p, &ops.dv.apply(&psi));
    let b = ops.velocity.inner(&ops.gp_v.apply(&p), &v) + ops.pressure.inner(&p, &ops.dv_v.apply(&v));
    let c = ops.stress.inner(&ops.gv.apply(&v), &s) + ops.velocity.inner(&v, &ops.ds.apply(&s));
    a.abs().max(b.abs()).max(c.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn discrete_integration_by_parts(nx in 2usize..9, ny in 2usize..9, lx in 0.1f64..5.0, ly in 0.1f64..5.0, seed in any::<u64>()) {
        let o1 = build_ops(&build_grid(1, &[lx], &[nx]).unwrap());
        let o2 = build_ops(&build_grid(2, &[lx, ly], &[nx, ny]).unwrap());
        prop_assert!(adjoint_gap(&o1, seed) < 1e-11);
        prop_assert!(adjoint_gap(&o2, seed) < 1e-11);
    }
}

#[test]
fn affine_field_strain_is_exact_in_the_interior() {
    let a = [[0.7, -1.3], [2.1, 0.4]];
    let (nx, ny) = (5, 6);
    let g = build_grid(2, &[1.0, 2.0], &[nx, ny]).unwrap();
    let ops = build_ops(&g);
    let u = ops.velocity.sample(|x, c| a[c][0] * x[0] + a[c][1] * x[1]);
    let eps = ops.gv.apply(&u);
    let (hx, hy) = (g.spacing(0), g.spacing(1));
    let sym = 0.5 * (a[0][1] + a[1][0]) * std::f64::consts::SQRT_2;
    let mut checked = 0;
    for (k, x) in ops.stress.positions.iter().enumerate() {
        let m = ops.stress.component[k];
        let interior = match m {
            // cells whose both faces are interior
            0 => x[0] > hx && x[0] < 1.0 - hx,
            1 => x[1] > hy && x[1] < 2.0 - hy,
            _ => x[0] > 0.5 * hx && x[0] < 1.0 - 0.5 * hx && x[1] > 0.5 * hy && x[1] < 2.0 - 0.5 * hy,
        };
        if interior {
            let want = [a[0][0], a[1][1], sym][m];
            assert!((eps[k] - want).abs() < 1e-12, "component {m} at {x:?}: {} vs {want}", eps[k]);
            checked += 1;
        }
    }
    assert!(checked > 30);

    let o1 = ops_1d(6);
    let e1 = o1.gv.apply(&o1.velocity.sample(|x, _| 3.0 * x[0]));
    for e in &e1[1..5] {
        assert!((e - 3.0).abs() < 1e-12);
    }
}

#[test]
fn gradient_is_second_order() {
    let pi = std::f64::consts::PI;
    let err = |n: usize| {
        let ops = ops_1d(n);
        let p = ops.pressure.sample(|x, _| (pi * x[0]).sin());
        ops.gp
            .apply(&p)
            .iter()
            .zip(&ops.flux.positions)
            .map(|(g, x)| (g - pi * (pi * x[0]).cos()).abs())
            .fold(0.0, f64::max)
    };
    let e: Vec<f64> = [16, 32, 64].iter().map(|&n| err(n)).collect();
    for w in e.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order}");
    }
}

#[test]
fn block_operator_is_skew_in_the_weighted_product() {
    let s = series(&[(0.2, 0.5), (0.9, 0.3)]);
    for ops in [ops_1d(8), ops_2d(4, 5)] {
        let law = law(&s, ops.dim);
        let st = stepper(&law, &ops, 0.1, 1.0, 1.0);
        let a = st.operator();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let u = random(&mut rng, a.ncols());
            let v = random(&mut rng, a.ncols());
            let lhs = st.inner(&a.apply(&u), &v) + st.inner(&u, &a.apply(&v));
            let scale = st.inner(&u, &u).sqrt() * st.inner(&v, &v).sqrt();
            assert!(lhs.abs() <= 1e-12 * scale, "{lhs} vs {scale}");
        }
    }
}

#[test]
fn triplet_files_round_trip() {
    let ops = ops_2d(3, 3);
    let dir = tempfile::tempdir().unwrap();
    ops.export_triplets(dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("grad.txt")).unwrap();
    let mut lines = text.lines();
    let head: Vec<usize> = lines.next().unwrap().split(' ').map(|t| t.parse().unwrap()).collect();
    assert_eq!(head, vec![ops.flux.len(), ops.pressure.len(), ops.gp.nnz()]);
    let t: Vec<(usize, usize, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(' ').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    let back = Sparse::from_triplets(head[0], head[1], &t);
    assert_eq!(back.to_dense(), ops.gp.to_dense());
}
