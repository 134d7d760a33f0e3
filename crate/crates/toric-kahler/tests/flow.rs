use std::sync::Arc;

use proptest::prelude::*;

use toric_kahler::flow::{flow_step, run_flow, run_flow_from, FlowClock, FlowConfig, FlowStatus, FlowTrace};
use toric_kahler::kahler_state::{Jet, MetricState, Profile};
use toric_kahler::mesh::{Grid, QuadratureRule};
use toric_kahler::sector_ops::energy_derivative;
use toric_kahler::toric::LatticePolytope;

fn grid(dim: usize) -> Arc<Grid> {
    let (r, n) = if dim == 1 { (8.0, 1025) } else { (10.0, 161) };
    Arc::new(Grid::new(dim, r, n, QuadratureRule::Trapezoid).unwrap())
}

fn round_cp1() -> MetricState {
    MetricState::round_fixture(&LatticePolytope::fixture("cp1").unwrap(), grid(1), 24).unwrap()
}

fn bumped(amp: f64, cx: f64) -> MetricState {
    round_cp1().perturb(&Profile::bump(amp, [cx, 0.0], 1.0), 1.0).unwrap()
}

#[test]
fn round_metric_is_a_fixed_point() {
    let s = round_cp1();
    let next = flow_step(&s, 0.1).unwrap();
    let drift = s.phi.iter().zip(&next.phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(drift < 1e-10, "{drift}");
    assert!(next.energy() < 1e-10);
}

#[test]
fn energy_rate_matches_the_first_variation() {
    let s = bumped(0.05, 0.3);
    let gf = s.grad_f();
    // e^f jets; the weak form only reads values and gradients
    let jets: Vec<Jet> =
        s.f.iter()
            .zip(&gf)
            .map(|(f, g)| {
                let e = f.exp();
                Jet { v: e, g: [e * g[0], e * g[1]], ..Jet::default() }
            })
            .collect();
    let predicted = -energy_derivative(&s, &gf, &jets);
    assert!(predicted < 0.0);
    let e0 = s.energy();
    for dt in [1e-3, 5e-4] {
        let rate = (flow_step(&s, dt).unwrap().energy() - e0) / dt;
        assert!((rate - predicted).abs() < 0.1 * predicted.abs(), "dt {dt}: {rate} vs {predicted}");
    }
}

#[test]
fn perturbed_segment_converges_back() {
    let s = bumped(0.05, 0.3);
    let cfg = FlowConfig { tol_conv: 1e-4, t_max: 60.0, ..FlowConfig::default() };
    let out = run_flow(&s, &cfg);
    assert_eq!(out.trace.status, Some(FlowStatus::Converged));
    let e = out.trace.energies();
    assert!(e.windows(2).all(|w| w[1] <= w[0]));
    assert!(*e.last().unwrap() < 1e-7);
    assert!(out.state.residual_norm() < 1e-4);
    let t: Vec<f64> = out.trace.records.iter().map(|r| r.t).collect();
    assert!(t.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn zero_time_budget_records_only_the_start() {
    let s = bumped(0.05, 0.3);
    let cfg = FlowConfig { t_max: 0.0, ..FlowConfig::default() };
    let out = run_flow(&s, &cfg);
    assert_eq!(out.trace.records.len(), 1);
    assert_eq!(out.trace.status, Some(FlowStatus::MaxTime));
    assert_eq!(out.state.phi, s.phi);
    let csv = out.trace.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(FlowTrace::HEADER));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), FlowTrace::HEADER.split(',').count());
    assert_eq!(row[0], "0");
    assert!(lines.next().is_none());
}

#[test]
fn resuming_from_a_checkpoint_is_bit_identical() {
    let s = bumped(0.08, -0.2);
    let cfg = FlowConfig { tol_conv: 1e-8, max_steps: 12, checkpoint_every: 5, ..FlowConfig::default() };
    let mut saved: Vec<(FlowClock, String)> = Vec::new();
    let full = run_flow_from(&s, &cfg, FlowClock::start(&cfg), &mut |c, st| saved.push((*c, st.checkpoint_string())));
    assert_eq!(saved.len(), 2);
    let (clock, text) = &saved[0];
    assert_eq!(clock.step, 5);
    let restored = MetricState::from_checkpoint_str(text).unwrap();
    let resumed = run_flow_from(&restored, &cfg, *clock, &mut |_, _| {});
    assert_eq!(resumed.clock, full.clock);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&resumed.state.phi), bits(&full.state.phi));
    // the resumed run opens with a record of its start, which took no step
    let first = &resumed.trace.records[0];
    assert_eq!((first.step, first.t, first.dt), (5, full.trace.records[5].t, 0.0));
    assert_eq!(first.energy.to_bits(), full.trace.records[5].energy.to_bits());
    assert_eq!(&resumed.trace.records[1..], &full.trace.records[6..]);
}

#[test]
fn invariant_start_stays_inside_the_polytope() {
    let p = LatticePolytope::fixture("cp2").unwrap();
    let s = MetricState::reference(&p, grid(2), 8).unwrap();
    let next = flow_step(&s, 0.05).unwrap();
    assert!(next.energy() < s.energy());
    for m in &next.moment {
        for i in 0..p.facets.len() {
            assert!(p.facet_distance(i, &m[..2]) >= -1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn small_steps_decrease_the_energy(amp in -0.06f64..0.06, cx in -0.8f64..0.8, dt in 1e-4f64..5e-2) {
        prop_assume!(amp.abs() > 1e-3);
        let s = bumped(amp, cx);
        let next = flow_step(&s, dt).unwrap();
        prop_assert!(next.energy() < s.energy(), "{} {}", next.energy(), s.energy());
        prop_assert!(next.det_hess.iter().all(|&d| d > 0.0));
    }
}
