use std::sync::Arc;

use proptest::prelude::*;

use toric_kahler::kahler_state::{Jet, MetricState, Profile};
use toric_kahler::mesh::{Grid, QuadratureRule};
use toric_kahler::toric::{AffineFunction, LatticePolytope};
use toric_kahler::Error;

fn grid(dim: usize) -> Arc<Grid> {
    let (r, n) = if dim == 1 { (8.0, 1025) } else { (10.0, 161) };
    Arc::new(Grid::new(dim, r, n, QuadratureRule::Trapezoid).unwrap())
}

fn cp1() -> LatticePolytope {
    LatticePolytope::fixture("cp1").unwrap()
}

fn moment(terms: &[(u32, u32, f64)]) -> Profile {
    Profile::Moment { terms: terms.iter().map(|&(a, b, c)| (vec![a, b], c)).collect() }
}

fn psi_jets(state: &MetricState, psi: &Profile) -> Vec<Jet> {
    let g = state.grid();
    (0..state.len()).map(|k| psi.jet(state.dim(), g.point(k), &state.frame.jets[k], None, 2)).collect()
}

#[test]
fn reference_segment_potential() {
    let s = MetricState::reference(&cp1(), grid(1), 8).unwrap();
    let g = s.grid();
    for k in 0..s.len() {
        let x = g.point(k)[0];
        let phi = 0.5 * ((2.0 * x).exp() + 1.0 + (-2.0 * x).exp()).ln();
        assert!((s.phi[k] - phi).abs() < 1e-13);
        assert!(s.moment[k][0].abs() < 1.0);
    }
    assert!(s.energy() > 1e-3);
    let mass: f64 = s.ef().iter().zip(s.mass()).map(|(e, m)| e * m).sum();
    assert!((mass - s.vol_box).abs() < 1e-12);
    assert!((s.vol_box - 2.0).abs() < 1e-6);
}

#[test]
fn reference_moments_lie_in_the_polytope() {
    for key in ["cp1", "cp2", "cp1xcp1", "bl1", "bl2", "bl3"] {
        let p = LatticePolytope::fixture(key).unwrap();
        let s = MetricState::reference(&p, grid(p.dim), 4).unwrap();
        for m in &s.moment {
            for i in 0..p.facets.len() {
                let d = p.facet_distance(i, &m[..p.dim]);
                assert!(d >= -1e-12, "{key} {d}");
            }
        }
        assert!(s.det_hess.iter().all(|&d| d > 0.0));
    }
}

#[test]
fn truncation_reports() {
    let p = LatticePolytope::fixture("cp2").unwrap();
    assert!(MetricState::reference(&p, grid(2), 4).unwrap().truncation_report() < 1e-4);
    let round = MetricState::round_fixture(&cp1(), grid(1), 8).unwrap();
    assert!(round.truncation_report() < 1e-6);
    let g = Arc::new(Grid::new(1, 2.0, 257, QuadratureRule::Trapezoid).unwrap());
    let short = MetricState::round_fixture(&cp1(), g, 8).unwrap().truncation_report();
    // 2(1 − tanh 2)
    assert!((short - 0.0719).abs() < 1e-3, "{short}");
}

#[test]
fn round_segment_is_einstein() {
    let s = MetricState::round_fixture(&cp1(), grid(1), 8).unwrap();
    let mask = s.grid().inner_mask(0.9);
    assert!(s.max_abs_f(&mask) < 1e-8);
    assert!(s.energy() < 1e-10);
    assert!((s.c_norm - 4f64.ln()).abs() < 1e-8);
    for (k, x) in s.grid().axis.iter().enumerate() {
        assert!((s.phi[k] - (2.0 * x.cosh()).ln()).abs() < 1e-12);
    }
}

#[test]
fn round_fixtures_in_two_dimensions() {
    for key in ["cp2", "cp1xcp1"] {
        let p = LatticePolytope::fixture(key).unwrap();
        let s = MetricState::round_fixture(&p, grid(2), 4).unwrap();
        assert!(s.max_abs_f(&s.grid().inner_mask(0.9)) < 1e-6, "{key}");
        assert!(s.energy() < 1e-10);
    }
    let bl1 = LatticePolytope::fixture("bl1").unwrap();
    assert!(matches!(MetricState::round_fixture(&bl1, grid(2), 4), Err(Error::Unsupported(_))));
}

#[test]
fn perturbations() {
    let s = MetricState::round_fixture(&cp1(), grid(1), 8).unwrap();
    let gauss = Profile::bump(1.0, [0.0, 0.0], 1.0);
    let same = s.perturb(&gauss, 0.0).unwrap();
    assert_eq!(same.phi, s.phi);
    let moved = s.perturb(&gauss, 0.05).unwrap();
    assert!(moved.energy() > 1e-8);
    match s.perturb(&gauss, -50.0) {
        Err(Error::Convexity { det, .. }) => assert!(det <= 0.0),
        other => panic!("expected convexity loss, got {:?}", other.map(|s| s.energy())),
    }
}

#[test]
fn ding_pairing() {
    let one = AffineFunction { constant: 1.0, gradient: vec![0.0, 0.0] };
    let p1 = AffineFunction { constant: 0.0, gradient: vec![1.0, 0.0] };

    let cp2 = LatticePolytope::fixture("cp2").unwrap();
    let s = MetricState::reference(&cp2, grid(2), 4).unwrap();
    let bary = cp2.extremal_affine().barycenter;
    assert!(s.ding_pairing(&one, &bary).0.abs() < 1e-8);
    assert!(s.ding_pairing(&p1, &bary).0.abs() < 1e-6);

    let bl1 = LatticePolytope::fixture("bl1").unwrap();
    let ex = bl1.extremal_affine();
    let a = MetricState::reference(&bl1, grid(2), 4).unwrap();
    let b = a.perturb(&moment(&[(1, 1, 0.1), (0, 2, 0.05)]), 1.0).unwrap();
    for f in [&p1, &ex.ell] {
        let (da, closed) = a.ding_pairing(f, &ex.barycenter);
        let (db, _) = b.ding_pairing(f, &ex.barycenter);
        assert!((da - db).abs() < 1e-6, "{da} {db}");
        assert!((da - closed).abs() < 1e-6, "{da} {closed}");
    }
}

#[test]
fn energy_bounded_by_extremal_norm() {
    let bl1 = LatticePolytope::fixture("bl1").unwrap();
    let bound = bl1.extremal_affine().norm_sq;
    let s = MetricState::reference(&bl1, grid(2), 4).unwrap();
    let dirs = [moment(&[(1, 0, 0.1)]), moment(&[(0, 2, 0.08), (1, 1, -0.05)]), Profile::bump(0.1, [0.4, -0.2], 1.2)];
    for d in &dirs {
        let e = s.perturb(d, 1.0).unwrap().energy();
        assert!(e >= bound - 1e-4, "{e} < {bound}");
    }
}

#[test]
fn recentering() {
    let s = MetricState::round_fixture(&cp1(), grid(1), 8).unwrap();
    let (_, t) = s.recenter().unwrap();
    assert!(t[0].abs() < 1e-10);
    let shifted = s.translate([0.3, 0.0]).unwrap();
    let (back, t) = shifted.recenter().unwrap();
    assert!((t[0] + 0.3).abs() < 1e-3, "{t:?}");
    let (again, t2) = back.recenter().unwrap();
    assert!(t2[0].abs() < 1e-8, "{t2:?}");
    let drift = again.phi.iter().zip(&back.phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(drift < 1e-8);
    let far = s.translate([6.0, 0.0]).unwrap();
    assert!(far.recenter().is_err());
}

#[test]
fn pushforward_matches_polytope_moments() {
    for key in ["cp2", "bl1"] {
        let p = LatticePolytope::fixture(key).unwrap();
        let mom = p.moments(2);
        let s = MetricState::reference(&p, grid(2), 4).unwrap();
        let w = s.mass();
        for beta in [[0u32, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]] {
            let num: f64 = (0..s.len())
                .map(|k| w[k] * s.moment[k][0].powi(beta[0] as i32) * s.moment[k][1].powi(beta[1] as i32))
                .sum();
            let exact = mom.get_f64(&beta);
            assert!((num - exact).abs() < 1e-5, "{key} {beta:?}: {num} vs {exact}");
        }
    }
}

#[test]
fn checkpoint_roundtrip_is_exact() {
    let bl1 = LatticePolytope::fixture("bl1").unwrap();
    let s = MetricState::reference(&bl1, grid(2), 6).unwrap();
    let dir: Vec<f64> = (0..s.frame.basis().len()).map(|k| 0.01 / (k + 1) as f64).collect();
    let s = s
        .perturb_coeffs(&dir, 1.0)
        .unwrap()
        .perturb(&Profile::bump(0.05, [0.3, -0.1], 1.0), 1.0)
        .unwrap()
        .translate([0.1, -0.05])
        .unwrap();
    let dir = tempfile_path("state.json");
    s.save_checkpoint(&dir).unwrap();
    let back = MetricState::load_checkpoint(&dir).unwrap();
    std::fs::remove_file(&dir).ok();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back.phi), bits(&s.phi));
    assert_eq!(bits(&back.f), bits(&s.f));
    assert_eq!(back.c_norm.to_bits(), s.c_norm.to_bits());
    assert_eq!(back.checkpoint_string(), s.checkpoint_string());

    let text = s.checkpoint_string();
    assert!(matches!(MetricState::from_checkpoint_str("{}"), Err(Error::Checkpoint(_))));
    let broken = text.replacen("\"format_version\":1", "\"format_version\":7", 1);
    assert!(matches!(MetricState::from_checkpoint_str(&broken), Err(Error::Checkpoint(_))));
}

fn tempfile_path(name: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("toric-kahler-{}-{name}", std::process::id()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn states_are_normalized_and_convex(a in -0.1f64..0.1, b in -0.1f64..0.1, c in -0.1f64..0.1, round: bool) {
        let s0 = if round {
            MetricState::round_fixture(&cp1(), grid(1), 8).unwrap()
        } else {
            MetricState::reference(&cp1(), grid(1), 8).unwrap()
        };
        let s = s0.perturb(&moment(&[(1, 0, a), (2, 0, b), (3, 0, c)]), 1.0).unwrap();
        prop_assert!(s.det_hess.iter().all(|&d| d > 0.0));
        let mass: f64 = s.ef().iter().zip(s.mass()).map(|(e, m)| e * m).sum();
        prop_assert!((mass - s.vol_box).abs() < 1e-12 * s.vol_box);
        prop_assert!(s.truncation_report() < 1e-6);
        prop_assert!(s.energy() >= 0.0);
        prop_assert!(s.moment.iter().all(|m| m[0].abs() <= 1.0));
        let one = AffineFunction { constant: 1.0, gradient: vec![0.0] };
        prop_assert!(s.ding_pairing(&one, &[0.0]).0.abs() < 1e-8);
    }

    #[test]
    fn ricci_potential_variation(a in -1.0f64..1.0, b in -1.0f64..1.0, w in 0.5f64..2.0) {
        // (f(φ+εψ) − f(φ−εψ))/2ε = −Δψ − ψ up to a constant, with Δ = ½Φ∂²
        let s = MetricState::reference(&cp1(), grid(1), 8)
            .unwrap()
            .perturb(&moment(&[(2, 0, 0.05)]), 1.0)
            .unwrap();
        let psi = match (a, b) {
            _ if a.abs() > 0.5 => Profile::bump(a, [b, 0.0], w),
            _ => moment(&[(1, 0, a), (2, 0, b), (4, 0, 0.3)]),
        };
        let eps = 1e-5;
        let up = s.perturb(&psi, eps).unwrap();
        let down = s.perturb(&psi, -eps).unwrap();
        let jets = psi_jets(&s, &psi);
        let fd: Vec<f64> = (0..s.len()).map(|k| (up.f[k] - down.f[k]) / (2.0 * eps)).collect();
        let op: Vec<f64> = (0..s.len())
            .map(|k| -0.5 * s.inv_hess[k][0][0] * jets[k].h[0][0] - jets[k].v)
            .collect();
        let w = s.mass();
        let total: f64 = w.iter().sum();
        let shift: f64 = (0..s.len()).map(|k| w[k] * (fd[k] - op[k])).sum::<f64>() / total;
        let mask = s.grid().inner_mask(0.75);
        let scale = op.iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| v.abs()).fold(0.0, f64::max);
        for k in (0..s.len()).filter(|&k| mask[k]) {
            prop_assert!((fd[k] - op[k] - shift).abs() < 1e-5 * scale, "node {}: {} vs {}", k, fd[k] - shift, op[k]);
        }
    }
}
