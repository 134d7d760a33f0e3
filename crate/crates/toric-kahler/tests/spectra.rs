use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;

use toric_kahler::kahler_state::{MetricState, Profile};
use toric_kahler::mesh::{Grid, QuadratureRule};
use toric_kahler::sector_ops::assemble_sector;
use toric_kahler::spectra::{
    eigensolve, kernel_of_l, matsushima_decomposition, spectral_gap, DecompositionOptions, KERNEL_THRESHOLD,
};
use toric_kahler::toric::LatticePolytope;

fn round_cp1() -> MetricState {
    let g = Arc::new(Grid::new(1, 8.0, 1025, QuadratureRule::Trapezoid).unwrap());
    MetricState::round_fixture(&LatticePolytope::fixture("cp1").unwrap(), g, 24).unwrap()
}

fn opts() -> DecompositionOptions {
    DecompositionOptions { degree: 16, threshold: KERNEL_THRESHOLD, certification: 1e-6, seed: 11 }
}

#[test]
fn eigensolve_basics() {
    let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 2.0, 0.1, 0.0, 0.1, 1.5]);
    let e = eigensolve(&m, &m, 3).unwrap();
    assert!(e.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
    let id = DMatrix::identity(3, 3);
    let e = eigensolve(&a, &id, 2).unwrap();
    assert_eq!(e.values.len(), 2);
    assert!((e.values[0] - 1.0).abs() < 1e-14 && (e.values[1] - 2.0).abs() < 1e-14);
    assert!(e.max_residual < 1e-12);
    assert!(eigensolve(&a, &id, 4).is_err());
}

#[test]
fn kernel_dimensions_of_the_round_segment() {
    let s = round_cp1();
    let gf = s.grad_f();
    let mut total = 0;
    for (m, expect) in [(0, 1), (1, 1), (-1, 1), (2, 0)] {
        let op = assemble_sector(&s, &gf, &[m], 16);
        let k = kernel_of_l(&s, &op, KERNEL_THRESHOLD).unwrap();
        assert_eq!(k.dim, expect, "m = {m} {:?}", k.low_eigenvalues);
        assert!(!k.ambiguous);
        assert_eq!(k.boundary_artifacts, 0);
        total += k.dim;
    }
    assert_eq!(total, 3);
}

#[test]
fn einstein_gap_is_one() {
    let s = round_cp1();
    let gf = s.grad_f();
    let g0 = spectral_gap(&assemble_sector(&s, &gf, &[0], 16), 1e-4).unwrap();
    assert!((g0.gap - 1.0).abs() < 1e-5, "{}", g0.gap);
    assert_eq!(g0.multiplicity_at_one, 1);
    let g1 = spectral_gap(&assemble_sector(&s, &gf, &[1], 16), 1e-4).unwrap();
    assert!((g1.gap - 1.0).abs() < 1e-5);
}

#[test]
fn round_segment_decomposes_into_sl2() {
    let s = round_cp1();
    let r = matsushima_decomposition(&s, &[vec![0], vec![1], vec![-1]], &opts()).unwrap();
    assert!(r.certified);
    assert_eq!(r.total_dim, 3);
    assert_eq!(r.predicted_dim, 3);
    assert_eq!(r.lambdas.iter().map(|l| l.1).sum::<usize>(), 3);
    assert!(r.lambdas.iter().all(|l| l.0.abs() < 1e-6), "{:?}", r.lambdas);
    assert!(r.max_lambda_error < 1e-6);
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert!(json["sectors"][0].get("basis").is_none());
}

#[test]
fn off_critical_states_are_not_certified() {
    let s = round_cp1().perturb(&Profile::bump(0.05, [0.3, 0.0], 1.0), 1.0).unwrap();
    let r = matsushima_decomposition(&s, &[vec![0], vec![1]], &opts()).unwrap();
    assert!(!r.certified);
    assert!(r.gradient_norm > 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn eigenvalues_are_sorted_and_mass_orthonormal(seed in any::<u64>(), n in 2usize..8) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
        let c = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
        let a = &b + b.transpose();
        let m = &c * c.transpose() + DMatrix::identity(n, n);
        let e = eigensolve(&a, &m, n).unwrap();
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let g = e.vectors.transpose() * &m * &e.vectors;
        prop_assert!((g - DMatrix::identity(n, n)).norm() < 1e-10);
        for (i, lam) in e.values.iter().enumerate() {
            let v = e.vectors.column(i);
            prop_assert!((&a * v - &m * v * *lam).norm() < 1e-10);
        }
    }
}
