//! The operators L_m, L̄_m on torus weight sectors, discretized by Galerkin
//! projection onto s_m(p)·(polynomials in p), p the base moment coordinates and
//! s_m = Π ℓ_i^{|⟨u_i,m⟩|/2} the vanishing factor every smooth weight-m profile
//! carries at the facets.
//!
//! For u = v e^{i⟨m,θ⟩} the operators reduce to
//!   A_m v = −½Φ^{jk}(v_jk − m_j m_k v) − ½Φ^{jk} f_j (v_k − m_k v),
//!   L_m v = e^f (A_m v − v + [m=0] V⁻¹∫ v e^f dμ),   L̄_m = L_{−m},
//! The stiffness uses that adj D²φ is divergence free:
//!   ∫ (A_m v) w e^f det D²φ dx = ½∫ e^f [⟨adj ∇v, ∇w⟩ + (⟨adj m, m⟩ + ⟨adj ∇f, m⟩) v w] dx,
//! so L̄_m − L_m is exactly the multiplication term.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kahler_state::{Jet, MetricState, PolyBasis, POTENTIAL_UNIT};

/// Sign s' in L̄_m − L_m = s'·e^f ⟨Φ∇f, m⟩.
pub const BRACKET_SIGN: f64 = -1.0;

const CHUNK: usize = 1024;

/// s_m(p)·Q_k(p) for an orthonormal polynomial family Q.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    pub weight: Vec<i64>,
    exponents: Vec<f64>,
    poly: PolyBasis,
}

impl SectorBasis {
    pub fn build(state: &MetricState, m: &[i64], degree: usize) -> Self {
        let exponents = vanishing_exponents(state, m);
        let frame = &state.frame;
        let g = state.grid();
        let mut w = Vec::with_capacity(state.len());
        for k in 0..state.len() {
            let s = vanishing_factor(&frame.base.facet_distances(g.point(k)), &exponents);
            w.push(g.weights[k] * state.det_hess[k] * s * s);
        }
        let poly = PolyBasis::build(state.dim(), degree, &frame.moment_points(), &w);
        SectorBasis { weight: m.to_vec(), exponents, poly }
    }

    pub fn len(&self) -> usize {
        self.poly.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// x-jets (order ≤ 2) of every basis function at nodes start..end, layout
    /// [k·(end − start) + i].
    pub fn jets(&self, state: &MetricState, start: usize, end: usize, order: usize) -> Vec<Jet> {
        let n = state.dim();
        let frame = &state.frame;
        let g = state.grid();
        let pts: Vec<[f64; 2]> = frame.jets[start..end].iter().map(|j| j.mu).collect();
        let mut out = self.poly.jets(&pts, order);
        let len = end - start;
        let facets = &state.polytope().facets;
        for i in 0..len {
            let node = start + i;
            let ell = frame.base.facet_distances(g.point(node));
            let s = s_jet(n, &ell, facets, &self.exponents);
            for k in 0..self.len() {
                let q = &mut out[k * len + i];
                *q = product(n, &s, q).chain(n, &frame.jets[node], None, order);
            }
        }
        out
    }

    /// Nodal values of Σ c_k b_k.
    pub fn synthesize(&self, state: &MetricState, coeffs: &[f64], order: usize) -> Vec<Jet> {
        let mut out = vec![Jet::default(); state.len()];
        let mut start = 0;
        while start < state.len() {
            let end = (start + CHUNK).min(state.len());
            let len = end - start;
            let jets = self.jets(state, start, end, order);
            for i in 0..len {
                for (k, c) in coeffs.iter().enumerate() {
                    out[start + i].axpy(*c, &jets[k * len + i]);
                }
            }
            start = end;
        }
        out
    }
}

fn vanishing_exponents(state: &MetricState, m: &[i64]) -> Vec<f64> {
    state
        .polytope()
        .facets
        .iter()
        .map(|f| f.normal.iter().zip(m).map(|(u, a)| u * a).sum::<i64>().unsigned_abs() as f64 / 2.0)
        .collect()
}

fn vanishing_factor(ell: &[f64], exps: &[f64]) -> f64 {
    ell.iter().zip(exps).filter(|(_, &k)| k > 0.0).map(|(l, k)| l.powf(*k)).product()
}

/// p-jet (order ≤ 2) of Π ℓ_i^{k_i}.
fn s_jet(n: usize, ell: &[f64], facets: &[crate::toric::Facet], exps: &[f64]) -> Jet {
    let s = vanishing_factor(ell, exps);
    let mut j = Jet { v: s, ..Default::default() };
    if s == 0.0 {
        return j;
    }
    let mut a = [0.0; 2];
    let mut b = [[0.0; 2]; 2];
    for ((l, f), &k) in ell.iter().zip(facets).zip(exps) {
        if k == 0.0 {
            continue;
        }
        for x in 0..n {
            let ux = f.normal[x] as f64;
            a[x] += k * ux / l;
            for y in 0..n {
                b[x][y] += k * ux * f.normal[y] as f64 / (l * l);
            }
        }
    }
    for x in 0..n {
        j.g[x] = s * a[x];
        for y in 0..n {
            j.h[x][y] = s * (a[x] * a[y] - b[x][y]);
        }
    }
    j
}

fn product(n: usize, a: &Jet, b: &Jet) -> Jet {
    let mut j = Jet { v: a.v * b.v, ..Default::default() };
    for x in 0..n {
        j.g[x] = a.v * b.g[x] + a.g[x] * b.v;
        for y in 0..n {
            j.h[x][y] = a.v * b.h[x][y] + a.g[x] * b.g[y] + a.g[y] * b.g[x] + a.h[x][y] * b.v;
        }
    }
    j
}

/// Galerkin matrices of one weight sector. Entries are indexed by the sector
/// basis; `mass` realizes ⟨⟨u, v⟩⟩ = ∫ u v̄ det D²φ dx.
#[derive(Clone, Debug)]
pub struct SectorOperator {
    pub weight: Vec<i64>,
    pub state_id: String,
    pub basis: SectorBasis,
    /// ⟨⟨b_i, b_j⟩⟩
    pub mass: DMatrix<f64>,
    /// ∫ b_i b_j e^f det D²φ
    pub mass_f: DMatrix<f64>,
    /// ∫ (A_m b_i) b_j e^f det D²φ, the weighted Laplacian of the gap estimate
    pub laplacian: DMatrix<f64>,
    /// ⟨⟨L_m b_i, b_j⟩⟩
    pub l: DMatrix<f64>,
    /// ⟨⟨L̄_m b_i, b_j⟩⟩
    pub lbar: DMatrix<f64>,
    /// ⟨⟨e^f⟨Φ∇f, m⟩ b_i, b_j⟩⟩, assembled from Φ and det separately
    pub bracket: DMatrix<f64>,
    /// ∫ b_i e^f det D²φ (nonzero use only for m = 0)
    pub mean: DVector<f64>,
    pub volume: f64,
}

impl SectorOperator {
    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    /// Riesz representative coefficients of a load vector: M⁻¹ r.
    pub fn riesz(&self, r: &DVector<f64>) -> DVector<f64> {
        self.mass.clone().cholesky().expect("mass is positive definite").solve(r)
    }

    /// Coefficients of the mass-orthogonal projection of a nodal profile.
    pub fn project(&self, state: &MetricState, values: &[f64]) -> DVector<f64> {
        let r = load_vector(self, state, values);
        self.riesz(&r)
    }
}

/// ∫ b_i v det D²φ dx.
pub fn load_vector(op: &SectorOperator, state: &MetricState, values: &[f64]) -> DVector<f64> {
    let g = state.grid();
    let kk = op.dim();
    let mut r = DVector::zeros(kk);
    let mut start = 0;
    while start < state.len() {
        let end = (start + CHUNK).min(state.len());
        let len = end - start;
        let jets = op.basis.jets(state, start, end, 0);
        for i in 0..len {
            let node = start + i;
            let w = g.weights[node] * state.det_hess[node] * values[node];
            for k in 0..kk {
                r[k] += w * jets[k * len + i].v;
            }
        }
        start = end;
    }
    r
}

/// Assemble L_m and L̄_m on the sector basis of the given polynomial degree.
/// `grad_f` must be the state's ∇f (see `MetricState::grad_f`).
pub fn assemble_sector(state: &MetricState, grad_f: &[[f64; 2]], m: &[i64], degree: usize) -> SectorOperator {
    let n = state.dim();
    assert_eq!(m.len(), n, "weight dimension");
    let basis = SectorBasis::build(state, m, degree);
    let kk = basis.len();
    let g = state.grid();
    let mf = [m[0] as f64, if n == 2 { m[1] as f64 } else { 0.0 }];
    let mut mass = DMatrix::zeros(kk, kk);
    let mut mass_f = DMatrix::zeros(kk, kk);
    let mut grad_part = DMatrix::zeros(kk, kk);
    let mut pot_even = DMatrix::zeros(kk, kk);
    let mut pot_odd = DMatrix::zeros(kk, kk);
    let mut bracket = DMatrix::zeros(kk, kk);
    let mut mean = DVector::zeros(kk);
    let mut start = 0;
    while start < state.len() {
        let end = (start + CHUNK).min(state.len());
        let len = end - start;
        let jets = basis.jets(state, start, end, 1);
        let v = DMatrix::from_fn(len, kk, |i, k| jets[k * len + i].v);
        let gx: Vec<DMatrix<f64>> = (0..n).map(|a| DMatrix::from_fn(len, kk, |i, k| jets[k * len + i].g[a])).collect();
        let mut wd = Vec::with_capacity(len);
        let mut wf = Vec::with_capacity(len);
        let mut we = Vec::with_capacity(len);
        let mut wodd = Vec::with_capacity(len);
        let mut wbr = Vec::with_capacity(len);
        let mut adj = Vec::with_capacity(len);
        for i in 0..len {
            let node = start + i;
            let q = g.weights[node];
            let det = state.det_hess[node];
            let ef = state.f[node].exp();
            let h = &state.hess[node];
            let a = if n == 1 { [[1.0, 0.0], [0.0, 0.0]] } else { [[h[1][1], -h[0][1]], [-h[1][0], h[0][0]]] };
            let mm: f64 = (0..n).map(|x| (0..n).map(|y| a[x][y] * mf[x] * mf[y]).sum::<f64>()).sum();
            let fm: f64 = (0..n).map(|x| (0..n).map(|y| a[x][y] * grad_f[node][x] * mf[y]).sum::<f64>()).sum();
            let phi = &state.inv_hess[node];
            let fm_phi: f64 = (0..n).map(|x| (0..n).map(|y| phi[x][y] * grad_f[node][x] * mf[y]).sum::<f64>()).sum();
            wd.push(q * det);
            wf.push(q * det * ef);
            we.push(0.5 * q * ef * mm);
            wodd.push(0.5 * q * ef * fm);
            wbr.push(q * det * ef * fm_phi);
            adj.push((q * ef, a));
        }
        mean += v.tr_mul(&DVector::from_vec(wf.clone()));
        let scaled = |w: &[f64], x: &DMatrix<f64>| {
            let mut y = x.clone();
            for (i, wi) in w.iter().enumerate() {
                y.row_mut(i).scale_mut(*wi);
            }
            y
        };
        mass += v.tr_mul(&scaled(&wd, &v));
        mass_f += v.tr_mul(&scaled(&wf, &v));
        pot_even += v.tr_mul(&scaled(&we, &v));
        pot_odd += v.tr_mul(&scaled(&wodd, &v));
        bracket += v.tr_mul(&scaled(&wbr, &v));
        for x in 0..n {
            for y in 0..n {
                let w: Vec<f64> = adj.iter().map(|(c, a)| 0.5 * c * a[x][y]).collect();
                grad_part += gx[x].tr_mul(&scaled(&w, &gx[y]));
            }
        }
        start = end;
    }
    let laplacian = &grad_part + &pot_even + &pot_odd;
    let laplacian_bar = &grad_part + &pot_even - &pot_odd;
    let volume = state.vol_box;
    let mut l = &laplacian - &mass_f;
    let mut lbar = &laplacian_bar - &mass_f;
    if m.iter().all(|&a| a == 0) {
        let r1 = &mean * mean.transpose() / volume;
        l += &r1;
        lbar += &r1;
    }
    symmetrize(&mut mass);
    symmetrize(&mut mass_f);
    SectorOperator {
        weight: m.to_vec(),
        state_id: state_identifier(state),
        basis,
        mass,
        mass_f,
        laplacian,
        l,
        lbar,
        bracket,
        mean,
        volume,
    }
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let t = a.transpose();
    *a += t;
    *a *= 0.5;
}

pub fn state_identifier(state: &MetricState) -> String {
    format!("{}|{}|c={:016x}", state.polytope().identifier(), state.grid().identifier(), state.c_norm.to_bits())
}

/// Pointwise L_m v (or L̄_m v when `bar`) from x-jets of a real profile v.
pub fn apply_strong(state: &MetricState, grad_f: &[[f64; 2]], m: &[i64], v: &[Jet], bar: bool) -> Vec<f64> {
    let n = state.dim();
    let sign = if bar { -1.0 } else { 1.0 };
    let mf = [sign * m[0] as f64, if n == 2 { sign * m[1] as f64 } else { 0.0 }];
    let g = state.grid();
    let mean = if m.iter().all(|&a| a == 0) {
        (0..state.len()).map(|k| g.weights[k] * state.det_hess[k] * state.f[k].exp() * v[k].v).sum::<f64>()
            / state.vol_box
    } else {
        0.0
    };
    (0..state.len())
        .map(|k| {
            let phi = &state.inv_hess[k];
            let j = &v[k];
            let mut a = 0.0;
            for x in 0..n {
                for y in 0..n {
                    a -= 0.5 * phi[x][y] * (j.h[x][y] - mf[x] * mf[y] * j.v);
                    a -= 0.5 * phi[x][y] * grad_f[k][x] * (j.g[y] - mf[y] * j.v);
                }
            }
            state.f[k].exp() * (a - j.v + mean)
        })
        .collect()
}

/// Frobenius distance ‖(L̄ − L) − s·B‖ relative to max(‖B‖, ‖L‖); at critical
/// states B vanishes and the operator itself sets the scale.
pub fn bracket_identity_check(op: &SectorOperator) -> f64 {
    bracket_identity_check_with(op, BRACKET_SIGN)
}

pub fn bracket_identity_check_with(op: &SectorOperator, sign: f64) -> f64 {
    let diff = &op.lbar - &op.l - &op.bracket * sign;
    let scale = op.bracket.norm().max(op.l.norm());
    if scale == 0.0 {
        return diff.norm();
    }
    diff.norm() / scale
}

/// Pointwise version on the sector basis functions: compares L̄_m b − L_m b with
/// s'·e^f⟨Φ∇f, m⟩ b node by node in the ⟨⟨·,·⟩⟩ norm.
pub fn bracket_identity_strong(state: &MetricState, grad_f: &[[f64; 2]], op: &SectorOperator, sign: f64) -> f64 {
    let n = state.dim();
    let m = &op.weight;
    let mf = [m[0] as f64, if n == 2 { m[1] as f64 } else { 0.0 }];
    let g = state.grid();
    let kk = op.dim();
    let (mut num, mut den, mut lsc) = (0.0, 0.0, 0.0);
    let mut start = 0;
    let mask = g.inner_mask(0.9);
    while start < state.len() {
        let end = (start + CHUNK).min(state.len());
        let len = end - start;
        let jets = op.basis.jets(state, start, end, 2);
        for k in 0..kk {
            let col = &jets[k * len..(k + 1) * len];
            for i in 0..len {
                let node = start + i;
                if !mask[node] {
                    continue;
                }
                let l = strong_at(state, grad_f, node, &mf, &col[i], 1.0);
                let lb = strong_at(state, grad_f, node, &mf, &col[i], -1.0);
                let phi = &state.inv_hess[node];
                let fm: f64 = (0..n).map(|x| (0..n).map(|y| phi[x][y] * grad_f[node][x] * mf[y]).sum::<f64>()).sum();
                let mult = sign * state.f[node].exp() * fm * col[i].v;
                let w = g.weights[node] * state.det_hess[node];
                num += w * (lb - l - mult).powi(2);
                den += w * mult * mult;
                lsc += w * l * l;
            }
        }
        start = end;
    }
    let scale = den.sqrt().max(lsc.sqrt());
    if scale == 0.0 {
        num.sqrt()
    } else {
        num.sqrt() / scale
    }
}

/// L_m v at one node without the mean term (m ≠ 0, or differences where it cancels).
fn strong_at(state: &MetricState, grad_f: &[[f64; 2]], k: usize, mf: &[f64; 2], j: &Jet, sign: f64) -> f64 {
    let n = state.dim();
    let phi = &state.inv_hess[k];
    let mut a = 0.0;
    for x in 0..n {
        for y in 0..n {
            a -= 0.5 * phi[x][y] * (j.h[x][y] - mf[x] * mf[y] * j.v);
            a -= 0.5 * phi[x][y] * grad_f[k][x] * (j.g[y] - sign * mf[y] * j.v);
        }
    }
    state.f[k].exp() * (a - j.v)
}

/// 2⟨⟨L₀e^f, ψ⟩⟩ for a paper-unit invariant direction ψ given by x-jets, in
/// the weak form
///   ⟨⟨L₀e^f, ψ⟩⟩ = ½∫e^{2f}⟨adj ∇f, ∇ψ⟩ − ∫ψ e^{2f} det + V⁻¹∫e^{2f}det · ∫ψ e^f det.
pub fn energy_derivative(state: &MetricState, grad_f: &[[f64; 2]], psi: &[Jet]) -> f64 {
    energy_derivative_range(state, grad_f, psi, 0, state_e2(state) / state.vol_box)
}

fn energy_derivative_range(state: &MetricState, grad_f: &[[f64; 2]], psi: &[Jet], start: usize, ratio: f64) -> f64 {
    let n = state.dim();
    let g = state.grid();
    let mut s = 0.0;
    for (i, p) in psi.iter().enumerate() {
        let k = start + i;
        let ef = state.f[k].exp();
        let h = &state.hess[k];
        let a = if n == 1 { [[1.0, 0.0], [0.0, 0.0]] } else { [[h[1][1], -h[0][1]], [-h[1][0], h[0][0]]] };
        let mut flux = 0.0;
        for x in 0..n {
            for y in 0..n {
                flux += a[x][y] * grad_f[k][x] * p.g[y];
            }
        }
        s += g.weights[k] * (0.5 * ef * ef * flux + p.v * state.det_hess[k] * ef * (ratio - ef));
    }
    2.0 * s
}

/// Exact derivative of the quadrature value of E_RC along a paper-unit ψ,
/// boundary terms of the truncated box included:
///   δE = ∫(1−e^{2f}) adj:D²δφ + 4∫(1−e^f)e^f det δφ − 2δc ∫(1−e^f)e^f det,  δφ = ½ψ.
pub fn energy_derivative_discrete(state: &MetricState, psi: &[Jet]) -> f64 {
    let (a, b) = discrete_parts(state, psi, 0);
    a - 2.0 * b / state.vol_box * discrete_slack(state)
}

/// ∫(1−e^f)e^f det, the factor multiplying δc.
fn discrete_slack(state: &MetricState) -> f64 {
    let g = state.grid();
    (0..state.len())
        .map(|k| {
            let ef = state.f[k].exp();
            g.weights[k] * (1.0 - ef) * ef * state.det_hess[k]
        })
        .sum()
}

/// The two parts of the discrete derivative that are linear in ψ over a node
/// range: the local terms and V·δc.
fn discrete_parts(state: &MetricState, psi: &[Jet], start: usize) -> (f64, f64) {
    let n = state.dim();
    let g = state.grid();
    let (mut local, mut dc) = (0.0, 0.0);
    for (i, p) in psi.iter().enumerate() {
        let k = start + i;
        let q = g.weights[k];
        let ef = state.f[k].exp();
        let det = state.det_hess[k];
        let h = &state.hess[k];
        let adj_d2 = POTENTIAL_UNIT
            * if n == 1 {
                p.h[0][0]
            } else {
                h[1][1] * p.h[0][0] - h[0][1] * p.h[1][0] - h[1][0] * p.h[0][1] + h[0][0] * p.h[1][1]
            };
        let dphi = POTENTIAL_UNIT * p.v;
        local += q * ((1.0 - ef * ef) * adj_d2 + 4.0 * (1.0 - ef) * ef * det * dphi);
        dc += q * (adj_d2 + 2.0 * ef * det * dphi);
    }
    (local, dc)
}

/// First variation report on the invariant sector.
#[derive(Clone, Debug)]
pub struct FirstVariation {
    /// ⟨⟨g, b_i⟩⟩ for the invariant sector basis.
    pub load: DVector<f64>,
    /// Coefficients of the Riesz representative g.
    pub coeffs: DVector<f64>,
    /// ‖g‖ in ⟨⟨·,·⟩⟩.
    pub norm: f64,
    /// Dual norm of the exact derivative of the quadrature E_RC. At a
    /// discrete critical point this vanishes while `norm` keeps the
    /// truncation error of the integration by parts.
    pub discrete_norm: f64,
    /// ⟨⟨g, 1⟩⟩
    pub against_constants: f64,
}

/// Riesz representative of δE_RC = 2⟨⟨L₀(e^f), ·⟩⟩ on the invariant sector.
pub fn first_variation(state: &MetricState, grad_f: &[[f64; 2]], op0: &SectorOperator) -> FirstVariation {
    assert!(op0.weight.iter().all(|&a| a == 0), "first variation lives in the invariant sector");
    let kk = op0.dim();
    let mut load = DVector::zeros(kk);
    let mut local = DVector::zeros(kk);
    let mut dc = DVector::zeros(kk);
    let ratio = state_e2(state) / state.vol_box;
    let mut start = 0;
    while start < state.len() {
        let end = (start + CHUNK).min(state.len());
        let len = end - start;
        let jets = op0.basis.jets(state, start, end, 2);
        for k in 0..kk {
            let psi = &jets[k * len..(k + 1) * len];
            load[k] += energy_derivative_range(state, grad_f, psi, start, ratio);
            let (a, b) = discrete_parts(state, psi, start);
            local[k] += a;
            dc[k] += b;
        }
        start = end;
    }
    let coeffs = op0.riesz(&load);
    let norm = load.dot(&coeffs).max(0.0).sqrt();
    let exact = local - dc * (2.0 * discrete_slack(state) / state.vol_box);
    let discrete_norm = exact.dot(&op0.riesz(&exact)).max(0.0).sqrt();
    let ones = vec![1.0; state.len()];
    let c1 = op0.project(state, &ones);
    FirstVariation { against_constants: load.dot(&c1), load, coeffs, norm, discrete_norm }
}

fn state_e2(state: &MetricState) -> f64 {
    let g = state.grid();
    (0..state.len()).map(|k| g.weights[k] * (2.0 * state.f[k]).exp() * state.det_hess[k]).sum()
}

/// Hessian form H_m = 2 L_m L̄_m as the Galerkin matrix ⟨⟨H b_i, b_j⟩⟩ = 2 (K̄ M⁻¹ K)_ij.
#[derive(Clone, Debug)]
pub struct HessianForm {
    pub matrix: DMatrix<f64>,
    pub gradient_norm: f64,
    pub commutator: f64,
    pub certified: bool,
}

pub fn hessian_form(op: &SectorOperator, gradient_norm: f64, threshold: f64, seed: u64) -> HessianForm {
    let chol = op.mass.clone().cholesky().expect("mass is positive definite");
    let mk = chol.solve(&op.l);
    let matrix = (&op.lbar * mk) * 2.0;
    HessianForm {
        matrix,
        gradient_norm,
        commutator: commutator_residual(op, seed),
        certified: gradient_norm <= threshold,
    }
}

impl HessianForm {
    /// ⟨⟨H v, v⟩⟩ for sector coefficients v (paper units).
    pub fn quadratic(&self, c: &DVector<f64>) -> f64 {
        c.dot(&(&self.matrix * c))
    }

    /// Smallest eigenvalue of the mass-symmetrized Hessian.
    pub fn min_eigenvalue(&self, op: &SectorOperator) -> f64 {
        let mut h = self.matrix.clone();
        symmetrize(&mut h);
        match crate::spectra::eigensolve(&h, &op.mass, 1) {
            Ok(e) => e.values[0],
            Err(_) => f64::NAN,
        }
    }
}

/// Number of low modes of L_m on which the commutator is measured.
pub const COMMUTATOR_MODES: usize = 10;

/// ‖[L_m, L̄_m]‖ / ‖L_m L̄_m‖ restricted to the lowest eigenmodes of L_m, where
/// the Galerkin operators are resolved; norms by power iteration.
pub fn commutator_residual(op: &SectorOperator, seed: u64) -> f64 {
    if op.weight.iter().all(|&a| a == 0) {
        return 0.0;
    }
    let k = COMMUTATOR_MODES.min(op.dim());
    let eig = match crate::spectra::eigensolve(&op.l, &op.mass, k) {
        Ok(e) => e,
        Err(_) => return f64::NAN,
    };
    let q = &eig.vectors;
    let b = q.transpose() * &op.lbar * q;
    let lam = DMatrix::from_diagonal(&DVector::from_vec(eig.values.clone()));
    let lb = &lam * &b;
    let comm = &lb - &b * &lam;
    let den = power_norm(&lb, seed);
    if den == 0.0 {
        return 0.0;
    }
    power_norm(&comm, seed) / den
}

/// Largest singular value by 200 steps of power iteration on AᵀA.
pub fn power_norm(a: &DMatrix<f64>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DVector::from_fn(a.ncols(), |_, _| rng.gen::<f64>() - 0.5);
    let mut sigma = 0.0;
    for _ in 0..200 {
        let nx = x.norm();
        if nx == 0.0 {
            return 0.0;
        }
        x /= nx;
        let y = a * &x;
        sigma = y.norm();
        x = a.transpose() * y;
    }
    sigma
}

/// Profile-unit bookkeeping: a real direction δφ = ε(v e^{i⟨m,θ⟩} + c.c.) of
/// a weight m ≠ 0 has d²E/dε² = 2·2·⟨⟨L_m L̄_m v, v⟩⟩.
pub fn sector_second_derivative(h: &HessianForm, c: &DVector<f64>, m: &[i64]) -> f64 {
    let factor = if m.iter().all(|&a| a == 0) { 1.0 } else { 2.0 };
    factor * h.quadratic(c)
}
