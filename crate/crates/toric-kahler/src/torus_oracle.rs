//! Brute-force ℂP¹ backend on the full (x, θ) cylinder.
//!
//! No torus invariance is assumed: φ is an arbitrary nodal function, the
//! density is ρ = φ_xx + φ_θθ, x-derivatives are finite differences and
//! θ-derivatives are spectral. Used to cross-check the sector reduction.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::kahler_state::{MetricState, POTENTIAL_UNIT};
use crate::mesh::Grid;

pub const N_THETA: usize = 64;
const X_ACCURACY: usize = 8;

/// Nodal data on grid × θ-circle, stored x-major: index i·N_θ + j.
#[derive(Clone, Debug)]
pub struct FullState {
    pub grid: Arc<Grid>,
    pub n_theta: usize,
    pub phi: Vec<f64>,
    pub rho: Vec<f64>,
    pub f: Vec<f64>,
    pub c_norm: f64,
    pub volume: f64,
}

fn theta_derivative(field: &[f64], nx: usize, nt: usize, d: u32) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nt);
    let inv = planner.plan_fft_inverse(nt);
    let mult: Vec<Complex<f64>> = (0..nt)
        .map(|j| {
            let k = if j < nt / 2 { j as f64 } else { j as f64 - nt as f64 };
            if j == nt / 2 && nt.is_multiple_of(2) && d % 2 == 1 {
                Complex::new(0.0, 0.0)
            } else {
                let k = if j == nt / 2 && nt.is_multiple_of(2) { (nt / 2) as f64 } else { k };
                Complex::new(0.0, k).powu(d) / nt as f64
            }
        })
        .collect();
    let mut out = vec![0.0; field.len()];
    out.par_chunks_mut(nt).enumerate().for_each(|(i, row)| {
        let mut buf: Vec<Complex<f64>> = field[i * nt..(i + 1) * nt].iter().map(|&v| Complex::new(v, 0.0)).collect();
        fwd.process(&mut buf);
        for (b, m) in buf.iter_mut().zip(&mult) {
            *b *= m;
        }
        inv.process(&mut buf);
        for (o, b) in row.iter_mut().zip(&buf) {
            *o = b.re;
        }
    });
    debug_assert_eq!(out.len(), nx * nt);
    out
}

fn x_derivative(grid: &Grid, field: &[f64], nt: usize, d: usize) -> Vec<f64> {
    let nx = grid.len();
    let cols: Vec<Vec<f64>> = (0..nt)
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = (0..nx).map(|i| field[i * nt + j]).collect();
            grid.differentiate(&col, &[d], X_ACCURACY).expect("1-D grid")
        })
        .collect();
    let mut out = vec![0.0; field.len()];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..nx {
            out[i * nt + j] = col[i];
        }
    }
    out
}

/// (b, b'') for b = ½log(2cosh 2x), evaluated without overflow.
fn background(x: f64) -> (f64, f64) {
    let a = 2.0 * x.abs();
    let b = 0.5 * (a + (-2.0 * a).exp().ln_1p());
    let s = 1.0 / (2.0 * x).cosh();
    (b, 2.0 * s * s)
}

impl FullState {
    pub fn new(grid: Arc<Grid>, n_theta: usize, phi: Vec<f64>) -> Result<Self> {
        if grid.dim != 1 {
            return Err(Error::Unsupported("the full-torus oracle exists only for n = 1".into()));
        }
        if n_theta < 4 {
            return Err(Error::InvalidGrid(format!("N_theta = {n_theta} is too small")));
        }
        let nt = n_theta;
        let nx = grid.len();
        if phi.len() != nx * nt {
            return Err(Error::Shape { expected: nx * nt, got: phi.len() });
        }
        // The stencils act on φ − b with b = ½log(2cosh 2x) and b'' = 2sech²(2x)
        // exact; φ ≈ |x| in the tails and differencing it directly would leave
        // roundoff of order ε|φ|/h² against a density of order e^{−2|x|}.
        let xs: Vec<f64> = (0..nx).map(|i| grid.point(i)[0]).collect();
        let rest: Vec<f64> = phi.iter().enumerate().map(|(k, p)| p - background(xs[k / nt]).0).collect();
        let pxx = x_derivative(&grid, &rest, nt, 2);
        let ptt = theta_derivative(&phi, nx, nt, 2);
        let rho: Vec<f64> = (0..phi.len()).map(|k| background(xs[k / nt]).1 + pxx[k] + ptt[k]).collect();
        if let Some((k, &r)) = rho.iter().enumerate().find(|(_, r)| !(**r > 0.0)) {
            let x = grid.point(k / nt)[0];
            let theta = 2.0 * std::f64::consts::PI * (k % nt) as f64 / nt as f64;
            return Err(Error::Convexity { node: k, x: vec![x, theta], det: r, trace: r });
        }
        let mut st = FullState { grid, n_theta, phi, rho, f: Vec::new(), c_norm: 0.0, volume: 0.0 };
        st.volume = st.integrate(&st.rho);
        let pmin = st.phi.iter().cloned().fold(f64::INFINITY, f64::min);
        let z: Vec<f64> = st.phi.iter().map(|p| (-2.0 * (p - pmin)).exp()).collect();
        st.c_norm = st.volume.ln() - st.integrate(&z).ln() + 2.0 * pmin;
        st.f = st.phi.iter().zip(&st.rho).map(|(p, r)| st.c_norm - 2.0 * p - r.ln()).collect();
        Ok(st)
    }

    /// θ-constant extension of an invariant state.
    pub fn from_invariant(state: &MetricState, n_theta: usize) -> Result<Self> {
        let nt = n_theta;
        let phi = state.phi.iter().flat_map(|&p| std::iter::repeat_n(p, nt)).collect();
        Self::new(Arc::clone(&state.frame.grid), nt, phi)
    }

    /// φ + ε(v e^{imθ} + conj) in paper units; for m = 0 the direction is ε·v.
    pub fn perturbed(state: &MetricState, v: &[f64], m: i64, eps: f64, n_theta: usize) -> Result<Self> {
        let nt = n_theta;
        if v.len() != state.len() {
            return Err(Error::Shape { expected: state.len(), got: v.len() });
        }
        let mut phi = Vec::with_capacity(state.len() * nt);
        for (p, vi) in state.phi.iter().zip(v) {
            for j in 0..nt {
                let theta = 2.0 * std::f64::consts::PI * j as f64 / nt as f64;
                let d = if m == 0 { eps * vi } else { 2.0 * eps * vi * (m as f64 * theta).cos() };
                phi.push(p + POTENTIAL_UNIT * d);
            }
        }
        Self::new(Arc::clone(&state.frame.grid), nt, phi)
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// ∫ u dx dθ/2π
    pub fn integrate(&self, u: &[f64]) -> f64 {
        let nt = self.n_theta;
        let w = &self.grid.weights;
        u.chunks(nt).zip(w).map(|(row, q)| q * row.iter().sum::<f64>()).sum::<f64>() / nt as f64
    }

    pub fn energy(&self) -> f64 {
        let e: Vec<f64> = self.f.iter().zip(&self.rho).map(|(f, r)| (1.0 - f.exp()).powi(2) * r).collect();
        self.integrate(&e)
    }

    /// θ-average of a nodal field.
    pub fn theta_mean(&self, u: &[f64]) -> Vec<f64> {
        u.chunks(self.n_theta).map(|row| row.iter().sum::<f64>() / self.n_theta as f64).collect()
    }

    fn e2_ratio(&self) -> f64 {
        let e2: Vec<f64> = self.f.iter().zip(&self.rho).map(|(f, r)| (2.0 * f).exp() * r).collect();
        self.integrate(&e2) / self.volume
    }

    /// δE(ψ) = 2∫ ½e^{2f}(f_x ψ_x + f_θ ψ_θ) + ψ ρ e^f (E₂/V − e^f), ψ in paper units.
    pub fn first_variation_along(&self, psi: &[f64]) -> f64 {
        let nt = self.n_theta;
        let nx = self.grid.len();
        let fx = x_derivative(&self.grid, &self.f, nt, 1);
        let ft = theta_derivative(&self.f, nx, nt, 1);
        let px = x_derivative(&self.grid, psi, nt, 1);
        let pt = theta_derivative(psi, nx, nt, 1);
        let ratio = self.e2_ratio();
        let dens: Vec<f64> = (0..self.len())
            .map(|k| {
                let ef = self.f[k].exp();
                0.5 * ef * ef * (fx[k] * px[k] + ft[k] * pt[k]) + psi[k] * self.rho[k] * ef * (ratio - ef)
            })
            .collect();
        2.0 * self.integrate(&dens)
    }

    /// δE along w(x)·cos(mθ) for m = 0..=N_θ/2.
    pub fn first_variation_modes(&self, w: &[f64]) -> Vec<f64> {
        let nt = self.n_theta;
        (0..=nt / 2)
            .map(|m| {
                let psi: Vec<f64> = (0..self.len())
                    .map(|k| {
                        let theta = 2.0 * std::f64::consts::PI * (k % nt) as f64 / nt as f64;
                        w[k / nt] * (m as f64 * theta).cos()
                    })
                    .collect();
                self.first_variation_along(&psi)
            })
            .collect()
    }

    /// Largest |Fourier coefficient| over x for each θ-mode 0..=N_θ/2.
    pub fn theta_spectrum(&self, field: &[f64]) -> Vec<f64> {
        let nt = self.n_theta;
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(nt);
        let mut out = vec![0.0; nt / 2 + 1];
        for row in field.chunks(nt) {
            let mut buf: Vec<Complex<f64>> = row.iter().map(|&v| Complex::new(v, 0.0)).collect();
            fwd.process(&mut buf);
            for (m, o) in out.iter_mut().enumerate() {
                *o = f64::max(*o, buf[m].norm() / nt as f64);
            }
        }
        out
    }
}

pub fn full_energy(state: &FullState) -> f64 {
    state.energy()
}

/// Second central difference (E(φ+δ) − 2E(φ) + E(φ−δ))/ε² on the full grid,
/// δ = ε(v e^{imθ} + conj).
pub fn full_fd_hessian(base: &MetricState, v: &[f64], m: i64, eps: f64) -> Result<f64> {
    full_fd_hessian_with(base, v, m, eps, N_THETA)
}

pub fn full_fd_hessian_with(base: &MetricState, v: &[f64], m: i64, eps: f64, n_theta: usize) -> Result<f64> {
    let e0 = FullState::perturbed(base, v, m, 0.0, n_theta)?.energy();
    let ep = FullState::perturbed(base, v, m, eps, n_theta).map_err(|e| retry_hint(e, eps))?.energy();
    let em = FullState::perturbed(base, v, m, -eps, n_theta).map_err(|e| retry_hint(e, eps))?.energy();
    Ok((ep - 2.0 * e0 + em) / (eps * eps))
}

fn retry_hint(e: Error, eps: f64) -> Error {
    match e {
        Error::Convexity { .. } => Error::Numerical(format!("{e}; retry with ε < {eps:e}")),
        other => other,
    }
}
