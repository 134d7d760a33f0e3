use std::sync::Arc;

use toric_kahler::kahler_state::{MetricState, Profile};
use toric_kahler::mesh::{Grid, QuadratureRule};
use toric_kahler::sector_ops::{assemble_sector, hessian_form, sector_second_derivative};
use toric_kahler::toric::LatticePolytope;
use toric_kahler::torus_oracle::{full_fd_hessian, full_fd_hessian_with, FullState, N_THETA};
use toric_kahler::Error;

fn round_cp1() -> MetricState {
    let g = Arc::new(Grid::new(1, 8.0, 1025, QuadratureRule::Trapezoid).unwrap());
    MetricState::round_fixture(&LatticePolytope::fixture("cp1").unwrap(), g, 16).unwrap()
}

fn profile(s: &MetricState, f: impl Fn(f64) -> f64) -> Vec<f64> {
    s.grid().axis.iter().map(|&x| f(x)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn invariant_extension_reproduces_the_reduced_state() {
    let s =
        round_cp1().perturb(&Profile::Moment { terms: vec![(vec![2, 0], 0.04), (vec![3, 0], -0.02)] }, 1.0).unwrap();
    let full = FullState::from_invariant(&s, N_THETA).unwrap();
    assert_eq!(full.len(), s.len() * N_THETA);
    assert!(rel(full.energy(), s.energy()) < 1e-8, "{} {}", full.energy(), s.energy());
    let fm = full.theta_mean(&full.f);
    let g = s.grid();
    let l2: f64 = (0..s.len()).map(|k| g.weights[k] * s.det_hess[k] * (fm[k] - s.f[k]).powi(2)).sum();
    assert!(l2.sqrt() < 1e-6);
    // pointwise only where the density is not tiny
    let mask = g.inner_mask(0.5);
    for k in (0..s.len()).filter(|&k| mask[k]) {
        assert!((fm[k] - s.f[k]).abs() < 1e-6, "x = {}", g.axis[k]);
    }
    // θ-constant data has no higher modes
    let spec = full.theta_spectrum(&full.f);
    assert!(spec[1..].iter().all(|&a| a < 1e-12 * spec[0].max(1.0)));
}

#[test]
fn perturbations_of_the_round_metric() {
    let s = round_cp1();
    let sech = profile(&s, |x| 1.0 / x.cosh());
    let flat = FullState::perturbed(&s, &sech, 1, 0.0, N_THETA).unwrap();
    assert!(flat.energy() < 1e-10);
    let bent = FullState::perturbed(&s, &profile(&s, |x| (-x * x).exp()), 1, 0.01, N_THETA).unwrap();
    assert!(bent.energy() > 1e-8);
    // the m = 1 perturbation moves f only in even θ-modes at second order
    let spec = bent.theta_spectrum(&bent.f);
    assert!(spec[1] > 1e3 * spec[3]);
    assert!(matches!(FullState::perturbed(&s, &sech[1..], 1, 0.01, N_THETA), Err(Error::Shape { .. })));
}

#[test]
fn automorphism_directions_are_flat() {
    let s = round_cp1();
    let sech = profile(&s, |x| 1.0 / x.cosh());
    let tanh = profile(&s, f64::tanh);
    assert!(full_fd_hessian(&s, &sech, 1, 1e-3).unwrap().abs() < 1e-4);
    assert!(full_fd_hessian(&s, &tanh, 0, 1e-3).unwrap().abs() < 1e-4);
    let gauss = profile(&s, |x| (-x * x).exp());
    assert!(full_fd_hessian(&s, &gauss, 1, 1e-3).unwrap() > 1e-2);
}

#[test]
fn difference_quotients_settle_under_halving() {
    let s = round_cp1();
    let v = profile(&s, |x| x.tanh().powi(2) / x.cosh());
    let eps = 2e-3;
    let a = full_fd_hessian(&s, &v, 1, eps).unwrap();
    let b = full_fd_hessian(&s, &v, 1, eps / 2.0).unwrap();
    let c = full_fd_hessian(&s, &v, 1, eps / 4.0).unwrap();
    assert!(rel(a, b) < 1e-4, "{a} {b}");
    // O(ε²) truncation: successive differences shrink by about four
    assert!((b - c).abs() < 0.5 * (a - b).abs() + 1e-9 * b.abs());
}

#[test]
fn full_torus_hessian_matches_the_sector_form() {
    let s = round_cp1();
    let gf = s.grad_f();
    for (m, v) in [(0, profile(&s, |x| x.tanh().powi(3))), (1, profile(&s, |x| x.tanh() / x.cosh()))] {
        let op = assemble_sector(&s, &gf, &[m], 16);
        let h = hessian_form(&op, 0.0, 1e-6, 5);
        let c = op.project(&s, &v);
        let sector = sector_second_derivative(&h, &c, &[m]);
        let fd = full_fd_hessian_with(&s, &v, m, 1e-3, 32).unwrap();
        assert!(rel(sector, fd) < 1e-3, "m = {m}: {sector} {fd}");
    }
}
