//! The inverse Monge–Ampère flow dφ/dt = 1 − e^{f_φ}.
//!
//! The correction part of φ is a polynomial in the base moment coordinates, so
//! the flow is integrated as a Galerkin system for its coefficients. Each step
//! is linearly implicit Euler, (G − dt·J) δc = dt·r, with G the ⟨⟨·,·⟩⟩ Gram
//! matrix of the basis, r the projected right-hand side and J its Jacobian,
//! followed by an energy guard. Bump profiles carried by the state are part
//! of the trial space through their amplitudes.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kahler_state::{BasisJets, Frame, MetricState, Profile, POTENTIAL_UNIT};
use crate::sector_ops;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub dt0: f64,
    pub t_max: f64,
    /// Stop once ‖1 − e^f‖ drops below this.
    pub tol_conv: f64,
    /// Recenter every k accepted steps (0: never).
    pub recenter_every: usize,
    /// Checkpoint every k accepted steps (0: never).
    pub checkpoint_every: usize,
    pub dt_min: f64,
    pub max_steps: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt0: 0.05,
            t_max: 200.0,
            tol_conv: 1e-3,
            recenter_every: 0,
            checkpoint_every: 0,
            dt_min: 1e-12,
            max_steps: 5000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Converged,
    MaxTime,
    StepUnderflow,
    ConvexityLoss,
}

impl FlowStatus {
    pub fn name(&self) -> &'static str {
        match self {
            FlowStatus::Converged => "converged",
            FlowStatus::MaxTime => "max_time",
            FlowStatus::StepUnderflow => "step_underflow",
            FlowStatus::ConvexityLoss => "convexity_loss",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub energy: f64,
    /// ‖δE‖ in ⟨⟨·,·⟩⟩ over the trial space.
    pub grad_norm: f64,
    pub c_norm: f64,
    pub min_ef: f64,
    /// |pushforward barycenter − barycenter(P)|
    pub drift: f64,
    pub tail_error: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FlowTrace {
    pub records: Vec<FlowRecord>,
    pub status: Option<FlowStatus>,
}

impl FlowTrace {
    pub const HEADER: &'static str = "step,t,dt,energy,grad_norm,c_norm,min_ef,drift,tail_error";

    pub fn csv_row(r: &FlowRecord) -> String {
        format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            r.step, r.t, r.dt, r.energy, r.grad_norm, r.c_norm, r.min_ef, r.drift, r.tail_error
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{}", Self::csv_row(r));
        }
        s
    }

    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }
}

/// Integrator position needed to resume bit-identically.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowClock {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub streak: usize,
}

impl FlowClock {
    pub fn start(cfg: &FlowConfig) -> Self {
        FlowClock { step: 0, t: 0.0, dt: cfg.dt0, streak: 0 }
    }
}

/// Bᵀ diag(w) C, summed over row blocks in parallel.
fn weighted_product(b: &DMatrix<f64>, w: &[f64], c: &DMatrix<f64>) -> DMatrix<f64> {
    const BLOCK: usize = 2048;
    let rows = b.nrows();
    let starts: Vec<usize> = (0..rows).step_by(BLOCK).collect();
    let parts: Vec<DMatrix<f64>> = starts
        .par_iter()
        .map(|&s| {
            let e = (s + BLOCK).min(rows);
            let bb = b.rows(s, e - s);
            let mut cc = c.rows(s, e - s).into_owned();
            for (i, mut row) in cc.row_iter_mut().enumerate() {
                row *= w[s + i];
            }
            bb.tr_mul(&cc)
        })
        .collect();
    let mut out = DMatrix::zeros(b.ncols(), c.ncols());
    for p in parts {
        out += p;
    }
    out
}

fn weighted_vector(b: &DMatrix<f64>, w: &[f64]) -> DVector<f64> {
    b.tr_mul(&DVector::from_column_slice(w))
}

/// Trial functions of the Galerkin system: the frame basis, followed by one
/// column per bump profile in `extras` (scaling that profile).
struct Trial<'a> {
    v: Cow<'a, DMatrix<f64>>,
    h: [Cow<'a, DMatrix<f64>>; 3],
    /// Index into `extras` of every appended column.
    bumps: Vec<usize>,
}

impl<'a> Trial<'a> {
    fn new(state: &'a MetricState) -> Self {
        let bj = state.frame.basis_jets();
        let bumps: Vec<usize> = state
            .extras
            .iter()
            .enumerate()
            .filter(|(_, p)| matches!(p, Profile::Bump { .. }))
            .map(|(i, _)| i)
            .collect();
        if bumps.is_empty() {
            return Trial {
                v: Cow::Borrowed(&bj.v),
                h: [Cow::Borrowed(&bj.h[0]), Cow::Borrowed(&bj.h[1]), Cow::Borrowed(&bj.h[2])],
                bumps,
            };
        }
        let kk = bj.v.ncols();
        let widen = |m: &DMatrix<f64>| m.clone().resize_horizontally(kk + bumps.len(), 0.0);
        let mut v = widen(&bj.v);
        let mut h = [widen(&bj.h[0]), widen(&bj.h[1]), widen(&bj.h[2])];
        for (j, &i) in bumps.iter().enumerate() {
            let jets = state.frame.extras_jets(std::slice::from_ref(&state.extras[i]), 2);
            for (node, jt) in jets.iter().enumerate() {
                v[(node, kk + j)] = jt.v;
                h[0][(node, kk + j)] = jt.h[0][0];
                h[1][(node, kk + j)] = jt.h[0][1];
                h[2][(node, kk + j)] = jt.h[1][1];
            }
        }
        let [h0, h1, h2] = h;
        Trial { v: Cow::Owned(v), h: [Cow::Owned(h0), Cow::Owned(h1), Cow::Owned(h2)], bumps }
    }

    fn from_basis(bj: &'a BasisJets) -> Self {
        Trial {
            v: Cow::Borrowed(&bj.v),
            h: [Cow::Borrowed(&bj.h[0]), Cow::Borrowed(&bj.h[1]), Cow::Borrowed(&bj.h[2])],
            bumps: Vec::new(),
        }
    }
}

/// tr(Φ D²b_k) at every node, as a nodes × K matrix.
fn trace_phi(state: &MetricState, tr: &Trial) -> DMatrix<f64> {
    let n = state.dim();
    let mut out = tr.h[0].clone().into_owned();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let p = &state.inv_hess[i];
        if n == 1 {
            row *= p[0][0];
        } else {
            let r = tr.h[0].row(i) * p[0][0] + tr.h[1].row(i) * (2.0 * p[0][1]) + tr.h[2].row(i) * p[1][1];
            row.copy_from(&r);
        }
    }
    out
}

/// ⟨⟨·,·⟩⟩ Gram matrix of the trial functions and the exact derivative of the
/// discrete energy along each of them (paper units).
fn gradient_parts(state: &MetricState, tr: &Trial, trc: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let g = state.grid();
    let len = state.len();
    let v = state.vol_box;
    let w: Vec<f64> = (0..len).map(|k| g.weights[k] * state.det_hess[k]).collect();
    let gram = weighted_product(&tr.v, &w, &tr.v);
    let ef: Vec<f64> = state.f.iter().map(|f| f.exp()).collect();
    let slack: f64 = (0..len).map(|k| w[k] * (1.0 - ef[k]) * ef[k]).sum();
    // adj:D²b = det·tr(ΦD²b)
    let w1: Vec<f64> = (0..len).map(|k| w[k] * (1.0 - ef[k] * ef[k])).collect();
    let w2: Vec<f64> = (0..len).map(|k| w[k] * 4.0 * (1.0 - ef[k]) * ef[k]).collect();
    let dv = weighted_vector(trc, &w);
    let mean = weighted_vector(&tr.v, &w.iter().zip(&ef).map(|(a, b)| a * b).collect::<Vec<_>>());
    let load = (weighted_vector(trc, &w1) + weighted_vector(&tr.v, &w2) - (dv / v + mean * (2.0 / v)) * (2.0 * slack))
        * POTENTIAL_UNIT;
    (gram, load)
}

fn dual_norm(gram: &DMatrix<f64>, load: &DVector<f64>) -> f64 {
    match gram.clone().cholesky() {
        Some(c) => load.dot(&c.solve(load)).max(0.0).sqrt(),
        None => f64::NAN,
    }
}

/// ‖δE‖ = (rᵀG⁻¹r)^{1/2} over the frame's correction space.
pub fn discrete_gradient_norm(state: &MetricState) -> f64 {
    let tr = Trial::from_basis(state.frame.basis_jets());
    let trc = trace_phi(state, &tr);
    let (gram, load) = gradient_parts(state, &tr, &trc);
    dual_norm(&gram, &load)
}

fn record(state: &MetricState, clock: &FlowClock, dt: f64, grad_norm: f64, bary: &[f64]) -> FlowRecord {
    let pb = state.pushforward_barycenter();
    let drift = (0..state.dim()).map(|i| (pb[i] - bary[i]).powi(2)).sum::<f64>().sqrt();
    FlowRecord {
        step: clock.step,
        t: clock.t,
        dt,
        energy: state.energy(),
        grad_norm,
        c_norm: state.c_norm,
        min_ef: state.f.iter().cloned().fold(f64::INFINITY, f64::min).exp(),
        drift,
        tail_error: state.tail_error,
    }
}

/// One linearly implicit step of size dt (paper time). Errors on convexity loss.
pub fn flow_step(state: &MetricState, dt: f64) -> Result<MetricState> {
    let sys = StepSystem::new(state);
    sys.step(state, dt)
}

struct StepSystem {
    gram: DMatrix<f64>,
    jac: DMatrix<f64>,
    rhs: DVector<f64>,
    bumps: Vec<usize>,
    grad_norm: f64,
}

impl StepSystem {
    fn new(state: &MetricState) -> Self {
        let tr = Trial::new(state);
        let g = state.grid();
        let len = state.len();
        let v = state.vol_box;
        let trc = trace_phi(state, &tr);
        let (gram, load) = gradient_parts(state, &tr, &trc);
        let w: Vec<f64> = (0..len).map(|k| g.weights[k] * state.det_hess[k]).collect();
        let ef: Vec<f64> = state.f.iter().map(|f| f.exp()).collect();
        let rhs_nodes: Vec<f64> = (0..len).map(|k| w[k] * POTENTIAL_UNIT * (1.0 - ef[k])).collect();
        let rhs = weighted_vector(&tr.v, &rhs_nodes);
        // δc for each trial function: dV/V + 2∫e^{−2φ}b/∫e^{−2φ}
        let dv = weighted_vector(&trc, &w);
        let mean = weighted_vector(&tr.v, &w.iter().zip(&ef).map(|(a, b)| a * b).collect::<Vec<_>>());
        let dc = dv / v + mean * (2.0 / v);
        // δF = −½ e^f (δc − 2b − tr(ΦD²b))
        let mut df = tr.v.as_ref() * 2.0 + &trc;
        for (k, mut col) in df.column_iter_mut().enumerate() {
            col.add_scalar_mut(-dc[k]);
        }
        for (i, mut row) in df.row_iter_mut().enumerate() {
            row *= 0.5 * ef[i];
        }
        let jac = weighted_product(&tr.v, &w, &df);
        let grad_norm = dual_norm(&gram, &load);
        StepSystem { gram, jac, rhs, bumps: tr.bumps, grad_norm }
    }

    fn step(&self, state: &MetricState, dt: f64) -> Result<MetricState> {
        let a = &self.gram - &self.jac * dt;
        let delta = a.lu().solve(&(&self.rhs * dt)).ok_or_else(|| Error::Numerical("singular step system".into()))?;
        let kk = delta.len() - self.bumps.len();
        let mut c = if state.coeffs.is_empty() { vec![0.0; kk] } else { state.coeffs.clone() };
        for (ci, d) in c.iter_mut().zip(delta.iter()) {
            *ci += d;
        }
        let mut extras = state.extras.clone();
        for (j, &i) in self.bumps.iter().enumerate() {
            extras[i] = extras[i].scaled(1.0 + delta[kk + j]);
        }
        MetricState::assemble(state.frame.clone(), c, extras, None)
    }
}

/// Callback sink for checkpoints: (clock after the step, state).
pub type CheckpointSink<'a> = dyn FnMut(&FlowClock, &MetricState) + 'a;

pub struct FlowOutcome {
    pub trace: FlowTrace,
    pub state: MetricState,
    pub clock: FlowClock,
}

/// Run the flow from `initial`. The first record describes the initial state.
pub fn run_flow(initial: &MetricState, cfg: &FlowConfig) -> FlowOutcome {
    run_flow_from(initial, cfg, FlowClock::start(cfg), &mut |_, _| {})
}

/// Continue a run from a given clock, reporting checkpoints to `sink`.
pub fn run_flow_from(
    initial: &MetricState,
    cfg: &FlowConfig,
    clock: FlowClock,
    sink: &mut CheckpointSink,
) -> FlowOutcome {
    let bary = initial.polytope().extremal_affine().barycenter;
    let mut clock = clock;
    let mut state = initial.clone();
    let mut trace = FlowTrace::default();
    let mut sys = StepSystem::new(&state);
    trace.records.push(record(&state, &clock, 0.0, sys.grad_norm, &bary));
    let status = loop {
        if state.residual_norm() < cfg.tol_conv {
            break FlowStatus::Converged;
        }
        if clock.t >= cfg.t_max || clock.step >= cfg.max_steps {
            break FlowStatus::MaxTime;
        }
        let e0 = state.energy();
        let mut dt = clock.dt.min(cfg.t_max - clock.t);
        let mut last_err = None;
        let accepted = loop {
            if dt < cfg.dt_min {
                break None;
            }
            match sys.step(&state, dt) {
                Ok(s) if s.energy() <= e0 => break Some(s),
                Ok(_) => last_err = None,
                Err(e) => last_err = Some(e),
            }
            dt *= 0.5;
        };
        let Some(next) = accepted else {
            break match last_err {
                Some(Error::Convexity { .. }) => FlowStatus::ConvexityLoss,
                _ => FlowStatus::StepUnderflow,
            };
        };
        clock.t += dt;
        clock.step += 1;
        clock.streak += 1;
        clock.dt = dt;
        if clock.streak >= 5 {
            clock.dt *= 1.2;
            clock.streak = 0;
        }
        state = next;
        if cfg.recenter_every > 0 && clock.step.is_multiple_of(cfg.recenter_every) {
            if let Ok((s, _)) = state.recenter() {
                if s.energy() <= state.energy() * (1.0 + 1e-9) {
                    state = s;
                }
            }
        }
        sys = StepSystem::new(&state);
        trace.records.push(record(&state, &clock, dt, sys.grad_norm, &bary));
        if cfg.checkpoint_every > 0 && clock.step.is_multiple_of(cfg.checkpoint_every) {
            sink(&clock, &state);
        }
    };
    trace.status = Some(status);
    FlowOutcome { trace, state, clock }
}

/// Gradient norm, commutator residuals on root sectors and the smallest
/// Hessian eigenvalue over the tested sectors.
#[derive(Clone, Debug, Serialize)]
pub struct CriticalityReport {
    pub gradient_norm: f64,
    pub weak_gradient_norm: f64,
    pub commutators: Vec<(Vec<i64>, f64)>,
    pub hessian_min: Vec<(Vec<i64>, f64)>,
    pub certified: bool,
}

impl CriticalityReport {
    pub fn max_commutator(&self) -> f64 {
        self.commutators.iter().map(|c| c.1).fold(0.0, f64::max)
    }

    pub fn min_hessian(&self) -> f64 {
        self.hessian_min.iter().map(|c| c.1).fold(f64::INFINITY, f64::min)
    }
}

pub fn criticality_report(
    state: &MetricState,
    sectors: &[Vec<i64>],
    degree: usize,
    threshold: f64,
    seed: u64,
) -> CriticalityReport {
    let n = state.dim();
    let gf = state.grad_f();
    let zero = vec![0i64; n];
    let op0 = sector_ops::assemble_sector(state, &gf, &zero, degree);
    let fv = sector_ops::first_variation(state, &gf, &op0);
    let mut commutators = Vec::new();
    let mut hessian_min = Vec::new();
    for m in sectors {
        let op = if *m == zero { op0.clone() } else { sector_ops::assemble_sector(state, &gf, m, degree) };
        let h = sector_ops::hessian_form(&op, fv.discrete_norm, threshold, seed);
        if *m != zero {
            commutators.push((m.clone(), h.commutator));
        }
        hessian_min.push((m.clone(), h.min_eigenvalue(&op)));
    }
    CriticalityReport {
        gradient_norm: fv.discrete_norm,
        weak_gradient_norm: fv.norm,
        commutators,
        hessian_min,
        certified: fv.discrete_norm <= threshold,
    }
}

/// Fresh frame over the same base, for callers that want the correction
/// space at a different degree.
pub fn with_degree(state: &MetricState, degree: usize) -> Result<MetricState> {
    if state.frame.degree == degree {
        return Ok(state.clone());
    }
    if state.coeffs.iter().any(|&c| c != 0.0) {
        return Err(Error::Unsupported("changing the degree of a corrected state".into()));
    }
    let f = &state.frame;
    let frame = Arc::new(Frame::new(&f.polytope, f.grid.clone(), f.base.clone(), degree)?);
    MetricState::assemble(frame, Vec::new(), state.extras.clone(), None)
}

/// sup |φ − φ_ref − const| over the inner `fraction` of the box after both
/// states are recentered; the constant is the det-weighted mean difference.
pub fn potential_mismatch(state: &MetricState, reference: &MetricState, fraction: f64) -> Result<f64> {
    if state.len() != reference.len() {
        return Err(Error::Shape { expected: reference.len(), got: state.len() });
    }
    let (a, _) = state.recenter()?;
    let (b, _) = reference.recenter()?;
    let w = a.mass();
    let shift = (0..a.len()).map(|k| w[k] * (a.phi[k] - b.phi[k])).sum::<f64>() / w.iter().sum::<f64>();
    let mask = a.grid().inner_mask(fraction);
    Ok((0..a.len()).filter(|&k| mask[k]).map(|k| (a.phi[k] - b.phi[k] - shift).abs()).fold(0.0, f64::max))
}
