use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinnet::checkpoint::{read_tensor, write_tensor, Checkpoint};
use spinnet::linalg::{
    dominant_eigenpair, hermitian_eig, truncated_svd, ArnoldiOptions, FnMap, LinearMap, Side, DEFAULT_REL_CUTOFF,
};
use spinnet::tensor::{contract, contract_labeled, kron};
use spinnet::{DenseTensor, Error, C64};

fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> DenseTensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    DenseTensor::new(shape, data).unwrap()
}

fn max_diff(a: &DenseTensor, b: &DenseTensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

// Contraction by explicit index loops, sharing nothing with the library path.
fn naive_contract_3x3(a: &DenseTensor, b: &DenseTensor) -> DenseTensor {
    // a[i, k, j] · b[j, l, k] summed over j and k → out[i, l]
    let (ni, nk, nj) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let nl = b.shape()[1];
    let mut out = DenseTensor::zeros(vec![ni, nl]);
    for i in 0..ni {
        for l in 0..nl {
            let mut s = C64::new(0.0, 0.0);
            for j in 0..nj {
                for k in 0..nk {
                    s += a.get(&[i, k, j]) * b.get(&[j, l, k]);
                }
            }
            out.set(&[i, l], s);
        }
    }
    out
}

#[test]
fn contraction_matches_explicit_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_tensor(vec![3, 4, 5], &mut rng);
    let b = random_tensor(vec![5, 6, 4], &mut rng);
    let c = contract(&a, &b, &[(2, 0), (1, 2)]).unwrap();
    assert!(max_diff(&c, &naive_contract_3x3(&a, &b)) < 1e-12);
}

#[test]
fn large_real_contraction_uses_same_answer_as_complex_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 40;
    let a = DenseTensor::from_real(vec![n, n], &(0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap();
    let b = random_tensor(vec![n, n], &mut rng);
    let real_b = DenseTensor::from_real(vec![n, n], &b.data().iter().map(|z| z.re).collect::<Vec<_>>()).unwrap();
    // Real·real goes through the f64 kernel; compare with an explicit sum.
    let c = a.matmul(&real_b).unwrap();
    for i in [0, 7, 39] {
        for j in [0, 13, 39] {
            let s: C64 = (0..n).map(|k| a.get(&[i, k]) * real_b.get(&[k, j])).sum();
            assert!((c.get(&[i, j]) - s).norm() < 1e-12);
        }
    }
    let cc = a.matmul(&b).unwrap();
    let s: C64 = (0..n).map(|k| a.get(&[3, k]) * b.get(&[k, 5])).sum();
    assert!((cc.get(&[3, 5]) - s).norm() < 1e-12);
}

#[test]
fn contracting_an_extent_mismatch_is_an_error() {
    let a = DenseTensor::zeros(vec![2, 3]);
    let b = DenseTensor::zeros(vec![4, 2]);
    assert!(matches!(contract(&a, &b, &[(1, 0)]), Err(Error::ShapeMismatch(_))));
    assert!(matches!(contract(&a, &b, &[(5, 0)]), Err(Error::AxisOutOfRange { .. })));
}

#[test]
fn labels_drive_contraction_and_follow_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_tensor(vec![2, 3], &mut rng).with_labels(&["i", "k"]).unwrap();
    let b = random_tensor(vec![3, 4], &mut rng).with_labels(&["k", "j"]).unwrap();
    let c = contract_labeled(&a, &b).unwrap();
    assert_eq!(c.labels().unwrap(), ["i", "j"]);
    assert!(max_diff(&c, &a.matmul(&b).unwrap()) < 1e-14);
    assert_eq!(a.permute(&[1, 0]).unwrap().labels().unwrap(), ["k", "i"]);
}

#[test]
fn kron_of_paulis() {
    let x = DenseTensor::from_real(vec![2, 2], &[0.0, 1.0, 1.0, 0.0]).unwrap();
    let z = DenseTensor::from_real(vec![2, 2], &[1.0, 0.0, 0.0, -1.0]).unwrap();
    let xz = kron(&x, &z).unwrap();
    // X⊗Z |00⟩ = |10⟩
    assert_eq!(xz.get(&[2, 0]), C64::new(1.0, 0.0));
    assert_eq!(xz.get(&[3, 1]), C64::new(-1.0, 0.0));
}

#[test]
fn svd_of_known_matrices() {
    let d = DenseTensor::diag(&[3.0, 1.0]);
    let r = truncated_svd(&d, None, DEFAULT_REL_CUTOFF).unwrap();
    assert!((r.s[0] - 3.0).abs() < 1e-14 && (r.s[1] - 1.0).abs() < 1e-14);
    assert_eq!(r.truncation_error, 0.0);

    let r = truncated_svd(&d, Some(1), DEFAULT_REL_CUTOFF).unwrap();
    assert_eq!(r.s.len(), 1);
    assert!((r.truncation_error - 0.1).abs() < 1e-14);

    let zero = DenseTensor::zeros(vec![3, 2]);
    let r = truncated_svd(&zero, None, DEFAULT_REL_CUTOFF).unwrap();
    assert!(r.degenerate_input && r.s.is_empty() && r.truncation_error == 0.0);
}

#[test]
fn svd_sign_convention_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = random_tensor(vec![6, 5], &mut rng);
    let r1 = truncated_svd(&m, None, DEFAULT_REL_CUTOFF).unwrap();
    let r2 = truncated_svd(&m.scale(C64::new(0.0, 1.0)).scale(C64::new(0.0, -1.0)), None, DEFAULT_REL_CUTOFF).unwrap();
    assert!(max_diff(&r1.u, &r2.u) < 1e-12);
    for c in 0..r1.s.len() {
        let col: Vec<C64> = (0..6).map(|i| r1.u.get(&[i, c])).collect();
        let big = col.iter().copied().max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap()).unwrap();
        assert!(big.im.abs() < 1e-12 && big.re > 0.0);
    }
}

#[test]
fn hermitian_eig_of_pauli_y() {
    let y = DenseTensor::new(vec![2, 2], vec![C64::new(0.0, 0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), C64::new(0.0, 0.0)]).unwrap();
    let (vals, vecs) = hermitian_eig(&y).unwrap();
    assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] + 1.0).abs() < 1e-14);
    // Y v = v for the first column.
    let v = vecs.permute(&[1, 0]).unwrap().truncate_to(&[1, 2]).unwrap().reshape(vec![2, 1]).unwrap();
    assert!(max_diff(&y.matmul(&v).unwrap(), &v) < 1e-12);
}

#[test]
fn dominant_eigenpair_examples() {
    let opts = ArnoldiOptions::default();
    let m = DenseTensor::diag(&[2.0, 1.0]);
    let e = dominant_eigenpair(&m, Side::Right, None, &opts).unwrap();
    assert!((e.value - C64::new(2.0, 0.0)).norm() < 1e-12);
    assert!((e.vector[0] - C64::new(1.0, 0.0)).norm() < 1e-12 && e.vector[1].norm() < 1e-12);

    let stoch = DenseTensor::from_real(vec![2, 2], &[0.5, 0.5, 0.5, 0.5]).unwrap();
    let e = dominant_eigenpair(&stoch, Side::Right, None, &opts).unwrap();
    assert!((e.value.re - 1.0).abs() < 1e-12);

    // Left and right eigenvectors of a non-symmetric matrix.
    let a = DenseTensor::from_real(vec![2, 2], &[2.0, 1.0, 0.0, 1.0]).unwrap();
    let r = dominant_eigenpair(&a, Side::Right, None, &opts).unwrap();
    let l = dominant_eigenpair(&a, Side::Left, None, &opts).unwrap();
    assert!((r.value.re - 2.0).abs() < 1e-12 && (l.value.re - 2.0).abs() < 1e-12);
    // right: (1, 0); left: (1, 1)/√2
    assert!((r.vector[0].re - 1.0).abs() < 1e-12);
    assert!((l.vector[0].re - l.vector[1].re).abs() < 1e-12);
}

#[test]
fn implicit_map_agrees_with_dense_and_accepts_warm_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 120;
    // A positive matrix has a simple real dominant eigenvalue.
    let d: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let m = DenseTensor::from_real(vec![n, n], &d).unwrap();
    let op = FnMap { dim: n, f: |x: &[C64]| m.apply(x) };
    let opts = ArnoldiOptions::default();
    let cold = dominant_eigenpair(&op, Side::Right, None, &opts).unwrap();
    let dense = dominant_eigenpair(&m, Side::Right, None, &opts).unwrap();
    assert!((cold.value - dense.value).norm() < 1e-10 * dense.value.norm());
    let warm = dominant_eigenpair(&op, Side::Right, Some(&cold.vector), &opts).unwrap();
    assert!(warm.matvecs <= cold.matvecs);
    let diff: f64 = warm.vector.iter().zip(&cold.vector).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(diff < 1e-8);
}

#[test]
fn iteration_limit_reports_best_residual() {
    // A rotation has two eigenvalues of equal modulus, so Arnoldi restarted
    // with a tiny Krylov space cannot settle on one.
    let n = 50;
    let m = DenseTensor::from_fn(vec![n, n], |i| {
        if i[0] == (i[1] + 1) % n {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let opts = ArnoldiOptions { tol: 1e-14, krylov_dim: 3, max_restarts: 5 };
    match dominant_eigenpair(&m, Side::Right, None, &opts) {
        Err(Error::IterationLimit { residual }) => assert!(residual.is_finite() && residual > 0.0),
        other => panic!("expected iteration limit, got {other:?}"),
    }
}

#[test]
fn tensor_binary_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let t = random_tensor(vec![2, 3, 4], &mut rng);
    let mut buf = Vec::new();
    write_tensor(&mut buf, &t).unwrap();
    assert_eq!(&buf[..4], b"TNS1");
    assert_eq!(buf.len(), 4 + 8 + 3 * 8 + 24 * 16);
    let back = read_tensor(&mut buf.as_slice()).unwrap();
    assert_eq!(back, t);

    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(read_tensor(&mut bad.as_slice()), Err(Error::Checkpoint(_))));
    assert!(read_tensor(&mut &buf[..20]).is_err());
}

#[test]
fn checkpoint_round_trip_with_metadata() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cp = Checkpoint {
        meta: serde_json::json!({"m": 20, "energy": -1.2732395447351628}),
        tensors: vec![random_tensor(vec![4, 4, 2], &mut rng), random_tensor(vec![3], &mut rng)],
    };
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("state.tncp");
    cp.save(&p).unwrap();
    let back = Checkpoint::load(&p).unwrap();
    assert_eq!(back.meta, cp.meta);
    assert_eq!(back.tensors, cp.tensors);
}

fn shape_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..4, 1..5)
}

proptest! {
    #[test]
    fn permute_then_inverse_is_identity(shape in shape_strategy(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tensor(shape.clone(), &mut rng);
        let mut perm: Vec<usize> = (0..shape.len()).collect();
        // Fisher–Yates with the test RNG.
        for i in (1..perm.len()).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let mut inv = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let p = t.permute(&perm).unwrap();
        for (i, &q) in perm.iter().enumerate() {
            prop_assert_eq!(p.shape()[i], shape[q]);
        }
        prop_assert_eq!(p.permute(&inv).unwrap(), t);
    }

    #[test]
    fn contraction_is_bilinear(seed in 0u64..1000, alpha in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = random_tensor(vec![2, 3, 4], &mut rng);
        let a2 = random_tensor(vec![2, 3, 4], &mut rng);
        let b = random_tensor(vec![4, 3], &mut rng);
        let s = C64::new(alpha, 0.5);
        let lhs = contract(&a1.add(&a2.scale(s)).unwrap(), &b, &[(2, 0), (1, 1)]).unwrap();
        let rhs = contract(&a1, &b, &[(2, 0), (1, 1)]).unwrap()
            .add(&contract(&a2, &b, &[(2, 0), (1, 1)]).unwrap().scale(s)).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn truncated_svd_error_is_the_reconstruction_error(seed in 0u64..1000, m in 2usize..9, n in 2usize..9, keep in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_tensor(vec![m, n], &mut rng);
        let r = truncated_svd(&a, Some(keep), DEFAULT_REL_CUTOFF).unwrap();
        let k = r.s.len();
        prop_assert!(k <= keep.min(m).min(n));
        for w in r.s.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        let us = r.u.scale_axis(1, &r.s).unwrap();
        let rec = us.matmul(&r.v_dag).unwrap();
        let err2 = rec.sub(&a).unwrap().norm().powi(2) / a.norm().powi(2);
        prop_assert!((err2 - r.truncation_error).abs() < 1e-10);
        // Isometries.
        let g = r.u.adjoint().unwrap().matmul(&r.u).unwrap();
        prop_assert!(max_diff(&g, &DenseTensor::identity(k)) < 1e-12);
    }
}
