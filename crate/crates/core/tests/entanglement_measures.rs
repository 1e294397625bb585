use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spinnet::entanglement::*;
use spinnet::models::{pauli_pair, Pauli};
use spinnet::{DenseTensor, C64};

mod common;
use common::oracle::{self, random_rho};

fn bell() -> DenseTensor {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    pure_state([C64::new(h, 0.0), z, z, C64::new(h, 0.0)])
}

fn product_up_up() -> DenseTensor {
    let z = C64::new(0.0, 0.0);
    pure_state([C64::new(1.0, 0.0), z, z, z])
}

#[test]
fn entropy_examples() {
    assert!(entropy(&DenseTensor::diag(&[1.0, 0.0])).unwrap().abs() < 1e-14);
    assert!((entropy(&DenseTensor::diag(&[0.5, 0.5])).unwrap() - 1.0).abs() < 1e-14);
    assert!((entropy(&DenseTensor::diag(&[0.9, 0.1])).unwrap() - 0.4690).abs() < 5e-5);
}

#[test]
fn one_tangle_examples() {
    assert!(one_tangle(&DenseTensor::diag(&[1.0, 0.0])).unwrap().abs() < 1e-14);
    assert!((one_tangle(&DenseTensor::diag(&[0.5, 0.5])).unwrap() - 1.0).abs() < 1e-14);
    assert!((one_tangle(&DenseTensor::diag(&[0.9, 0.1])).unwrap() - 0.36).abs() < 1e-14);
}

#[test]
fn concurrence_examples() {
    assert!((concurrence_f(&bell()).unwrap() - 1.0).abs() < 1e-7);
    assert!(concurrence_f(&product_up_up()).unwrap() < 1e-7);
    assert!((concurrence_f(&werner(0.8)).unwrap() - 0.7).abs() < 1e-12);
    assert!((concurrence_a(&bell()).unwrap() - 1.0).abs() < 1e-7);
    // λᵢ = 1/4 each, so Σλᵢ = 1: the maximally mixed state is an equal
    // mixture of Bell states and assistance can recover a full ebit.
    assert!((concurrence_a(&DenseTensor::identity(4).scale(C64::new(0.25, 0.0))).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn negativity_examples() {
    let (n, ln) = negativity(&product_up_up()).unwrap();
    assert!(n.abs() < 1e-14 && ln.abs() < 1e-14);
    let (n, ln) = negativity(&bell()).unwrap();
    assert!((n - 0.5).abs() < 1e-12 && (ln - 1.0).abs() < 1e-12);
}

#[test]
fn localizable_bounds_examples() {
    let (q, ca) = localizable_bounds(&product_up_up()).unwrap();
    assert!(q.abs() < 1e-14 && ca < 1e-7);
    let (q, ca) = localizable_bounds(&bell()).unwrap();
    assert!((q - 1.0).abs() < 1e-12 && (ca - 1.0).abs() < 1e-7);
}

#[test]
fn local_entanglement_and_bond_entropy_examples() {
    assert!(local_entanglement(&product_up_up()).unwrap().abs() < 1e-12);
    assert!(local_entanglement(&bell()).unwrap().abs() < 1e-12);
    assert_eq!(entanglement_per_bond(&[1.0, 0.0, 0.0, 0.0]), 0.0);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!((entanglement_per_bond(&[h, h]) - 1.0).abs() < 1e-14);
}

#[test]
fn symmetry_resolved_forms() {
    let c = symmetry_resolved_ca(SectorCorrelators::ZTwoKept { xx: 0.0, x: 0.0 }).unwrap();
    assert!((c - 1.0).abs() < 1e-15);
    // U(1) and Z₂ both intact: both closed forms give one.
    let c = symmetry_resolved_ca(SectorCorrelators::UOneKept { zz: -0.3, x_sum: 0.0, x_diff: 0.0 }).unwrap();
    assert!((c - 1.0).abs() < 1e-15);
    assert!(symmetry_resolved_ca(SectorCorrelators::ZTwoKept { xx: 0.0, x: 0.9 }).is_err());
    // With the one-site terms taken along the same axis as the two-site one,
    // a product state correctly gets zero.
    assert_eq!(kept_axis(&product_up_up(), 1e-12), Some(Pauli::Z));
    assert!(closed_form_ca(&product_up_up(), 1e-12).unwrap().unwrap().abs() < 1e-15);
}

#[test]
fn monogamy_of_a_product_state() {
    let r = monogamy_audit(0.0, &[(0.0, 0.0, 2)]);
    assert!(r.ckw_holds && r.delta_f == 0.0 && r.fraction == 0.0);
}

#[test]
fn invalid_density_matrices_are_rejected() {
    let bad = DenseTensor::diag(&[1.1, -0.1]);
    assert!(entropy(&bad).is_err());
    // Tiny negative noise is clipped silently.
    assert!(entropy(&DenseTensor::diag(&[1.0 + 1e-10, -1e-10])).is_ok());
}

#[test]
fn kernels_agree_with_reference_on_random_states() {
    // Full-rank states: with zero eigenvalues in ρρ̃ both routes take square
    // roots of rounding noise and agree only to ~1e-8 (checked below).
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = [0.0f64; 5];
    for _ in 0..1000 {
        let rho = random_rho(&mut rng, 4);
        let na = oracle::to_na(&rho);
        let diffs = [
            (concurrence_f(&rho).unwrap() - oracle::c_f(&na)).abs(),
            (concurrence_a(&rho).unwrap() - oracle::c_a(&na)).abs(),
            (negativity(&rho).unwrap().0 - oracle::negativity(&na)).abs(),
            (entropy(&rho).unwrap() - oracle::entropy(&na)).abs(),
            (localizable_bounds(&rho).unwrap().0 - oracle::correlator_max(&na)).abs(),
        ];
        for (w, d) in worst.iter_mut().zip(diffs) {
            *w = w.max(d);
        }
    }
    for (name, w) in ["C_F", "C_A", "N", "S", "Q_max"].iter().zip(worst) {
        assert!(w < 1e-9, "{name} differs from the reference by {w:e}");
    }
}

#[test]
fn rank_deficient_states_agree_to_square_root_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for k in 0..300 {
        let rho = random_rho(&mut rng, 1 + k % 3);
        let na = oracle::to_na(&rho);
        assert!((concurrence_f(&rho).unwrap() - oracle::c_f(&na)).abs() < 1e-6);
        assert!((concurrence_a(&rho).unwrap() - oracle::c_a(&na)).abs() < 1e-6);
        assert!((negativity(&rho).unwrap().0 - oracle::negativity(&na)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn closed_form_holds_in_every_sector(seed in 0u64..100_000, rank in 1usize..5, axis in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = [Pauli::X, Pauli::Y, Pauli::Z][axis];
        let p = pauli_pair(a);
        let rho = random_rho(&mut rng, rank);
        let sym = rho.add(&p.matmul(&rho).unwrap().matmul(&p).unwrap()).unwrap().scale(C64::new(0.5, 0.0));
        prop_assert!(kept_axis(&sym, 1e-12).is_some());
        let closed = closed_form_ca(&sym, 1e-12).unwrap().unwrap();
        // Rank-deficient states lose half their digits in the square roots.
        let tol = if rank == 4 { 1e-9 } else { 1e-6 };
        prop_assert!((closed - concurrence_a(&sym).unwrap()).abs() < tol);
    }

    #[test]
    fn bounds_and_ranges_hold(seed in 0u64..100_000, rank in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Rank one gives pure states, which sit on the boundary of every bound.
        let rho = random_rho(&mut rng, rank);
        let cf = concurrence_f(&rho).unwrap();
        let ca = concurrence_a(&rho).unwrap();
        let (n, ln) = negativity(&rho).unwrap();
        prop_assert!((0.0..=1.0).contains(&cf) && (0.0..=1.0).contains(&ca) && (0.0..=0.5).contains(&n));
        prop_assert!(cf <= ca + 1e-8);
        prop_assert!(ln >= 0.0);
        let (lo, hi) = negativity_bounds(cf);
        prop_assert!(lo - 1e-7 <= 2.0 * n && 2.0 * n <= hi + 1e-7, "lo {} 2N {} hi {}", lo, 2.0 * n, hi);
        let (q, ca2) = localizable_bounds(&rho).unwrap();
        prop_assert!(q <= ca2 + 1e-8);
        let rho1 = reduce_to_first(&rho);
        let tau = one_tangle(&rho1).unwrap();
        let s1 = entropy(&rho1).unwrap();
        prop_assert!((s1 - binary_entropy(0.5 + 0.5 * (1.0 - tau).max(0.0).sqrt())).abs() < 1e-10);
        prop_assert!(local_entanglement(&rho).unwrap() >= 0.0);
    }
}

