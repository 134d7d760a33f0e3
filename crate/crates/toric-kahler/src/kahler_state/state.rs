use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::Grid;
use crate::toric::{AffineFunction, LatticePolytope};

use super::base::{round_weights, BaseJet, LseBase};
use super::basis::{Jet, PolyBasis};
use super::profile::Profile;

/// The paper's potential equals twice the coordinate potential φ used here
/// (ω_φ = 2√−1∂∂̄φ); a paper-unit change δφ moves the coordinate potential
/// by POTENTIAL_UNIT·δφ.
pub const POTENTIAL_UNIT: f64 = 0.5;

/// Nodes processed per block when replaying basis recurrences.
const CHUNK: usize = 1024;

/// Grid, base potential and the correction basis shared by all states with
/// the same base.
#[derive(Debug)]
pub struct Frame {
    pub polytope: LatticePolytope,
    pub grid: Arc<Grid>,
    pub base: LseBase,
    pub vol_p: f64,
    pub degree: usize,
    pub jets: Vec<BaseJet>,
    basis: OnceLock<PolyBasis>,
    cache: OnceLock<BasisJets>,
}

/// x-jets of every basis function at every node, node-major columns:
/// `v[(node, k)]`, `g[a][(node, k)]`, `h[0..3]` = (xx, xy, yy).
#[derive(Debug)]
pub struct BasisJets {
    pub v: DMatrix<f64>,
    pub g: [DMatrix<f64>; 2],
    pub h: [DMatrix<f64>; 3],
}

impl Frame {
    pub fn new(polytope: &LatticePolytope, grid: Arc<Grid>, base: LseBase, degree: usize) -> Result<Self> {
        if polytope.dim != grid.dim {
            return Err(Error::InvalidGrid(format!(
                "grid dimension {} does not match polytope dimension {}",
                grid.dim, polytope.dim
            )));
        }
        let jets = grid.points().into_iter().map(|x| base.jet(x)).collect();
        Ok(Frame {
            polytope: polytope.clone(),
            vol_p: polytope.volume(),
            grid,
            base,
            degree,
            jets,
            basis: OnceLock::new(),
            cache: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn moment_points(&self) -> Vec<[f64; 2]> {
        self.jets.iter().map(|j| j.mu).collect()
    }

    /// Polynomials in the base moment coordinates, orthonormal for the
    /// quadrature of det D²φ_base (i.e. for dp on P).
    pub fn basis(&self) -> &PolyBasis {
        self.basis.get_or_init(|| {
            let w: Vec<f64> = self.grid.weights.iter().zip(&self.jets).map(|(q, j)| q * j.det).collect();
            PolyBasis::build(self.dim(), self.degree, &self.moment_points(), &w)
        })
    }

    /// Fourth base derivatives at node k.
    pub fn fourth(&self, k: usize) -> [[[[f64; 2]; 2]; 2]; 2] {
        self.base.fourth(self.grid.point(k))
    }

    /// Basis x-jets to second order at all nodes, computed once per frame.
    pub fn basis_jets(&self) -> &BasisJets {
        self.cache.get_or_init(|| {
            let n = self.dim();
            let len = self.grid.len();
            let basis = self.basis();
            let kk = basis.len();
            let z = || DMatrix::zeros(len, kk);
            let mut out = BasisJets { v: z(), g: [z(), z()], h: [z(), z(), z()] };
            let pts = self.moment_points();
            let mut start = 0;
            while start < len {
                let end = (start + CHUNK).min(len);
                let m = end - start;
                let jets = basis.jets(&pts[start..end], 2);
                for k in 0..kk {
                    for i in 0..m {
                        let node = start + i;
                        let j = jets[k * m + i].chain(n, &self.jets[node], None, 2);
                        out.v[(node, k)] = j.v;
                        out.g[0][(node, k)] = j.g[0];
                        out.g[1][(node, k)] = j.g[1];
                        out.h[0][(node, k)] = j.h[0][0];
                        out.h[1][(node, k)] = j.h[0][1];
                        out.h[2][(node, k)] = j.h[1][1];
                    }
                }
                start = end;
            }
            out
        })
    }

    /// x-jets of Σ_k c_k Q_k(p(x)) up to `order`. Orders ≤ 2 go through the
    /// cached basis jets so every path to a state gives the same bits.
    pub fn combine(&self, coeffs: &[f64], order: usize) -> Vec<Jet> {
        let n = self.dim();
        let len = self.grid.len();
        if coeffs.iter().all(|&c| c == 0.0) {
            return vec![Jet::default(); len];
        }
        let basis = self.basis();
        assert_eq!(coeffs.len(), basis.len());
        if order <= 2 {
            let bj = self.basis_jets();
            let c = DVector::from_column_slice(coeffs);
            let v = &bj.v * &c;
            let g: Vec<DVector<f64>> = bj.g.iter().map(|m| m * &c).collect();
            let h: Vec<DVector<f64>> = bj.h.iter().map(|m| m * &c).collect();
            return (0..len)
                .map(|i| {
                    let mut j = Jet { v: v[i], ..Default::default() };
                    j.g = [g[0][i], g[1][i]];
                    j.h = [[h[0][i], h[1][i]], [h[1][i], h[2][i]]];
                    if n == 1 {
                        j.g[1] = 0.0;
                        j.h = [[h[0][i], 0.0], [0.0, 0.0]];
                    }
                    j
                })
                .collect();
        }
        let mut out = vec![Jet::default(); len];
        let pts = self.moment_points();
        let mut start = 0;
        while start < len {
            let end = (start + CHUNK).min(len);
            let m = end - start;
            let jets = basis.jets(&pts[start..end], order);
            for i in 0..m {
                let mut acc = Jet::default();
                for (k, &c) in coeffs.iter().enumerate() {
                    if c != 0.0 {
                        acc.axpy(c, &jets[k * m + i]);
                    }
                }
                let node = start + i;
                let q4 = if order >= 3 { Some(self.fourth(node)) } else { None };
                out[node] = acc.chain(n, &self.jets[node], q4.as_ref(), order);
            }
            start = end;
        }
        out
    }

    /// Jets of the extra profiles (coordinate units) at every node.
    pub fn extras_jets(&self, extras: &[Profile], order: usize) -> Vec<Jet> {
        let n = self.dim();
        let mut out = vec![Jet::default(); self.grid.len()];
        if extras.is_empty() {
            return out;
        }
        for (k, o) in out.iter_mut().enumerate() {
            let x = self.grid.point(k);
            let q4 = if order >= 3 { Some(self.fourth(k)) } else { None };
            for p in extras {
                o.axpy(1.0, &p.jet(n, x, &self.jets[k], q4.as_ref(), order));
            }
        }
        out
    }
}

/// A torus-invariant metric: analytic base + polynomial correction in the
/// base moment coordinates + closed-form extra profiles, with nodal caches.
#[derive(Clone, Debug)]
pub struct MetricState {
    pub frame: Arc<Frame>,
    /// Correction coefficients in `frame.basis()` (coordinate units); empty
    /// means zero.
    pub coeffs: Vec<f64>,
    /// Extra closed-form profiles (coordinate units).
    pub extras: Vec<Profile>,
    pub phi: Vec<f64>,
    pub hess: Vec<[[f64; 2]; 2]>,
    pub det_hess: Vec<f64>,
    pub inv_hess: Vec<[[f64; 2]; 2]>,
    pub moment: Vec<[f64; 2]>,
    pub f: Vec<f64>,
    pub c_norm: f64,
    /// ∫_box det D²φ dx, the V used in the normalization.
    pub vol_box: f64,
    pub tail_error: f64,
}

impl MetricState {
    pub fn reference(p: &LatticePolytope, grid: Arc<Grid>, degree: usize) -> Result<Self> {
        let frame = Frame::new(p, grid, LseBase::reference(p), degree)?;
        Self::assemble(Arc::new(frame), Vec::new(), Vec::new(), None)
    }

    pub fn round_fixture(p: &LatticePolytope, grid: Arc<Grid>, degree: usize) -> Result<Self> {
        let (pts, w) = round_weights(p)
            .ok_or_else(|| Error::Unsupported(format!("no closed-form Kähler–Einstein fixture for {}", p.name)))?;
        let frame = Frame::new(p, grid, LseBase::new(p, pts, &w), degree)?;
        Self::assemble(Arc::new(frame), Vec::new(), Vec::new(), None)
    }

    pub fn from_base(p: &LatticePolytope, grid: Arc<Grid>, base: LseBase, degree: usize) -> Result<Self> {
        let frame = Frame::new(p, grid, base, degree)?;
        Self::assemble(Arc::new(frame), Vec::new(), Vec::new(), None)
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    pub fn grid(&self) -> &Grid {
        &self.frame.grid
    }

    pub fn polytope(&self) -> &LatticePolytope {
        &self.frame.polytope
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// Build caches. `corr` optionally supplies precomputed x-jets (order ≥ 2)
    /// of the basis part of the correction.
    pub fn assemble(frame: Arc<Frame>, coeffs: Vec<f64>, extras: Vec<Profile>, corr: Option<Vec<Jet>>) -> Result<Self> {
        let n = frame.dim();
        let len = frame.grid.len();
        let corr = match corr {
            Some(c) => c,
            None if coeffs.is_empty() => vec![Jet::default(); len],
            None => frame.combine(&coeffs, 2),
        };
        let ext = frame.extras_jets(&extras, 2);
        let mut phi = vec![0.0; len];
        let mut hess = vec![[[0.0; 2]; 2]; len];
        let mut det_hess = vec![0.0; len];
        let mut inv_hess = vec![[[0.0; 2]; 2]; len];
        let mut moment = vec![[0.0; 2]; len];
        let mut worst: Option<(usize, f64, f64)> = None;
        for k in 0..len {
            let b = &frame.jets[k];
            let mut e = [[0.0; 2]; 2];
            for i in 0..n {
                for j in 0..n {
                    e[i][j] = corr[k].h[i][j] + ext[k].h[i][j];
                }
                moment[k][i] = b.mu[i] + corr[k].g[i] + ext[k].g[i];
            }
            phi[k] = b.phi + corr[k].v + ext[k].v;
            let (det, hs, inv) = if n == 1 {
                let h = b.h[0][0] + e[0][0];
                (h, [[h, 0.0], [0.0, 0.0]], [[1.0 / h, 0.0], [0.0, 0.0]])
            } else {
                // det(H + E) = det H + tr(adj H · E) + det E, with det H stable
                let h = &b.h;
                let tr_adj = h[1][1] * e[0][0] - h[0][1] * e[1][0] - h[1][0] * e[0][1] + h[0][0] * e[1][1];
                let dete = e[0][0] * e[1][1] - e[0][1] * e[1][0];
                let det = b.det + tr_adj + dete;
                let hs = [[h[0][0] + e[0][0], h[0][1] + e[0][1]], [h[1][0] + e[1][0], h[1][1] + e[1][1]]];
                let inv = [[hs[1][1] / det, -hs[0][1] / det], [-hs[1][0] / det, hs[0][0] / det]];
                (det, hs, inv)
            };
            let trace = hs[0][0] + if n == 2 { hs[1][1] } else { 0.0 };
            if !(det > 0.0 && trace > 0.0 && det.is_finite()) && worst.is_none_or(|w| det < w.1) {
                worst = Some((k, det, trace));
            }
            det_hess[k] = det;
            hess[k] = hs;
            inv_hess[k] = inv;
        }
        if let Some((node, det, trace)) = worst {
            let x = frame.grid.point(node)[..n].to_vec();
            return Err(Error::Convexity { node, x, det, trace });
        }
        let grid = &frame.grid;
        let vol_box = grid.integrate(&det_hess);
        if !(vol_box > 0.0) {
            return Err(Error::Numerical("quadrature mass of det D²φ vanishes".into()));
        }
        let pmin = phi.iter().cloned().fold(f64::INFINITY, f64::min);
        let z: f64 = grid.weights.iter().zip(&phi).map(|(q, p)| q * (-2.0 * (p - pmin)).exp()).sum();
        let c_norm = vol_box.ln() - z.ln() + 2.0 * pmin;
        let f = phi.iter().zip(&det_hess).map(|(p, d)| c_norm - 2.0 * p - d.ln()).collect();
        let tail_error = (vol_box - frame.vol_p).abs();
        Ok(MetricState { frame, coeffs, extras, phi, hess, det_hess, inv_hess, moment, f, c_norm, vol_box, tail_error })
    }

    /// φ_paper + ε·ψ for an invariant paper-unit profile ψ.
    pub fn perturb(&self, psi: &Profile, eps: f64) -> Result<Self> {
        if eps == 0.0 {
            return Ok(self.clone());
        }
        let mut extras = self.extras.clone();
        extras.push(psi.scaled(eps * POTENTIAL_UNIT));
        Self::assemble(self.frame.clone(), self.coeffs.clone(), extras, None)
    }

    /// Same state with basis coefficients shifted by `eps`·`dir` (paper units).
    pub fn perturb_coeffs(&self, dir: &[f64], eps: f64) -> Result<Self> {
        let k = self.frame.basis().len();
        let mut c = if self.coeffs.is_empty() { vec![0.0; k] } else { self.coeffs.clone() };
        for (ci, d) in c.iter_mut().zip(dir) {
            *ci += eps * POTENTIAL_UNIT * d;
        }
        Self::assemble(self.frame.clone(), c, self.extras.clone(), None)
    }

    pub fn ef(&self) -> Vec<f64> {
        self.f.iter().map(|f| f.exp()).collect()
    }

    pub fn energy(&self) -> f64 {
        let g = self.grid();
        self.f
            .iter()
            .zip(&self.det_hess)
            .zip(&g.weights)
            .map(|((f, d), q)| {
                let r = 1.0 - f.exp();
                q * r * r * d
            })
            .sum()
    }

    /// ⟨⟨u, v⟩⟩ = ∫ u v det D²φ dx for real nodal fields.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let g = self.grid();
        (0..self.len()).map(|k| g.weights[k] * self.det_hess[k] * u[k] * v[k]).sum()
    }

    /// Quadrature mass q·det D²φ.
    pub fn mass(&self) -> Vec<f64> {
        self.grid().weights.iter().zip(&self.det_hess).map(|(q, d)| q * d).collect()
    }

    pub fn truncation_report(&self) -> f64 {
        self.tail_error
    }

    /// Third derivatives of φ at every node.
    pub fn third_derivatives(&self) -> Vec<[[[f64; 2]; 2]; 2]> {
        let corr =
            if self.coeffs.is_empty() { vec![Jet::default(); self.len()] } else { self.frame.combine(&self.coeffs, 3) };
        let ext = self.frame.extras_jets(&self.extras, 3);
        let n = self.dim();
        (0..self.len())
            .map(|k| {
                let mut t = self.frame.jets[k].t;
                for i in 0..n {
                    for j in 0..n {
                        for l in 0..n {
                            t[i][j][l] += corr[k].t[i][j][l] + ext[k].t[i][j][l];
                        }
                    }
                }
                t
            })
            .collect()
    }

    /// ∇f = −2∇φ − tr(Φ ∂D²φ), from analytic third derivatives.
    pub fn grad_f(&self) -> Vec<[f64; 2]> {
        let n = self.dim();
        let t = self.third_derivatives();
        (0..self.len())
            .map(|k| {
                let mut g = [0.0; 2];
                for l in 0..n {
                    let mut tr = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            tr += self.inv_hess[k][i][j] * t[k][j][i][l];
                        }
                    }
                    g[l] = -2.0 * self.moment[k][l] - tr;
                }
                g
            })
            .collect()
    }

    /// x-centroid of the Monge–Ampère measure, t = ∫ x det D²φ / ∫ det D²φ.
    pub fn centroid(&self) -> [f64; 2] {
        let g = self.grid();
        let mut c = [0.0; 2];
        for k in 0..self.len() {
            let x = g.point(k);
            let w = g.weights[k] * self.det_hess[k];
            c[0] += w * x[0];
            c[1] += w * x[1];
        }
        [c[0] / self.vol_box, c[1] / self.vol_box]
    }

    /// ∫ a(∇φ) det D²φ / vol_box, the pushforward barycenter.
    pub fn pushforward_barycenter(&self) -> [f64; 2] {
        let g = self.grid();
        let mut c = [0.0; 2];
        for k in 0..self.len() {
            let w = g.weights[k] * self.det_hess[k];
            c[0] += w * self.moment[k][0];
            c[1] += w * self.moment[k][1];
        }
        [c[0] / self.vol_box, c[1] / self.vol_box]
    }

    /// Precompose with x ↦ x + t so the Monge–Ampère centroid moves to the
    /// origin; returns the new state and t. The box truncation biases the
    /// centroid, so t is refined by a few fixed-point passes. Errors if t
    /// leaves the inner half of the box.
    pub fn recenter(&self) -> Result<(Self, [f64; 2])> {
        let r = self.grid().half_width;
        let check = |t: [f64; 2]| {
            if t[0].abs() > 0.5 * r || t[1].abs() > 0.5 * r {
                Err(Error::Numerical(format!("recentering translation {t:?} exits the truncation box")))
            } else {
                Ok(())
            }
        };
        let mut t = self.centroid();
        check(t)?;
        let mut s = self.translate(t)?;
        for _ in 0..3 {
            let d = s.centroid();
            if d[0].abs().max(d[1].abs()) <= 1e-13 * (1.0 + t[0].abs().max(t[1].abs())) {
                break;
            }
            t = [t[0] + d[0], t[1] + d[1]];
            check(t)?;
            s = self.translate(t)?;
        }
        Ok((s, t))
    }

    /// The state x ↦ φ(x + t) (same correction, moved base).
    pub fn translate(&self, t: [f64; 2]) -> Result<Self> {
        let base = self.frame.base.translated(t);
        let frame = Arc::new(Frame::new(&self.frame.polytope, self.frame.grid.clone(), base, self.frame.degree)?);
        let coeffs = if self.coeffs.iter().all(|&c| c == 0.0) {
            Vec::new()
        } else {
            // The correction is G(p) for a polynomial G; the new base moment
            // map is p(x + t), so G is unchanged as a polynomial. Re-expand it
            // in the new orthonormal basis.
            let new_pts = frame.moment_points();
            let old = self.frame.basis().values(&new_pts);
            let m = new_pts.len();
            let gvals: Vec<f64> =
                (0..m).map(|i| self.coeffs.iter().enumerate().map(|(k, c)| c * old[k * m + i]).sum()).collect();
            let nb = frame.basis();
            let nv = nb.values(&new_pts);
            let w: Vec<f64> = frame.grid.weights.iter().zip(&frame.jets).map(|(q, j)| q * j.det).collect();
            (0..nb.len()).map(|k| (0..m).map(|i| w[i] * nv[k * m + i] * gvals[i]).sum()).collect()
        };
        let extras = self.extras.iter().map(|p| p.translated(t)).collect();
        Self::assemble(frame, coeffs, extras, None)
    }

    /// Numeric Ding pairing ∫ a(∇φ)(1 − e^f) det D²φ dx and the closed form
    /// vol(P)·⟨b_a, barycenter(P)⟩.
    pub fn ding_pairing(&self, a: &AffineFunction, barycenter: &[f64]) -> (f64, f64) {
        let g = self.grid();
        let n = self.dim();
        let num: f64 = (0..self.len())
            .map(|k| g.weights[k] * self.det_hess[k] * a.eval(&self.moment[k][..n]) * (1.0 - self.f[k].exp()))
            .sum();
        let closed = self.frame.vol_p * a.gradient.iter().zip(barycenter).map(|(b, c)| b * c).sum::<f64>();
        (num, closed)
    }

    /// ‖1 − e^f‖ in ⟨⟨·,·⟩⟩, i.e. √E_RC.
    pub fn residual_norm(&self) -> f64 {
        self.energy().sqrt()
    }

    /// Smallest determinant of D²φ over nodes.
    pub fn min_det(&self) -> f64 {
        self.det_hess.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_f(&self, mask: &[bool]) -> f64 {
        self.f.iter().zip(mask).filter(|(_, &m)| m).map(|(f, _)| f.abs()).fold(0.0, f64::max)
    }
}
