//! Closed-form invariant perturbation profiles with exact derivative jets.

use serde::{Deserialize, Serialize};

use super::base::BaseJet;
use super::basis::Jet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// amplitude · exp(−|x − center|² / width²)
    Bump { amplitude: f64, center: [f64; 2], width: f64 },
    /// Σ c_β p^β in the moment coordinates p = ∇φ_base of the current base.
    Moment { terms: Vec<(Vec<u32>, f64)> },
}

impl Profile {
    pub fn bump(amplitude: f64, center: [f64; 2], width: f64) -> Self {
        Profile::Bump { amplitude, center, width }
    }

    pub fn scaled(&self, eps: f64) -> Self {
        match self {
            Profile::Bump { amplitude, center, width } => {
                Profile::Bump { amplitude: amplitude * eps, center: *center, width: *width }
            }
            Profile::Moment { terms } => {
                Profile::Moment { terms: terms.iter().map(|(b, c)| (b.clone(), c * eps)).collect() }
            }
        }
    }

    /// Moment-coordinate profiles follow the base under translation; bumps
    /// are fixed in x and get moved explicitly.
    pub fn translated(&self, t: [f64; 2]) -> Self {
        match self {
            Profile::Bump { amplitude, center, width } => {
                Profile::Bump { amplitude: *amplitude, center: [center[0] - t[0], center[1] - t[1]], width: *width }
            }
            other => other.clone(),
        }
    }

    pub fn jet(
        &self,
        n: usize,
        x: [f64; 2],
        base: &BaseJet,
        q4: Option<&[[[[f64; 2]; 2]; 2]; 2]>,
        order: usize,
    ) -> Jet {
        match self {
            Profile::Bump { amplitude, center, width } => {
                let w2 = width * width;
                let d = [x[0] - center[0], if n == 2 { x[1] - center[1] } else { 0.0 }];
                let r2 = d[0] * d[0] + d[1] * d[1];
                let e = amplitude * (-r2 / w2).exp();
                // derivatives of exp(−|d|²/w²): gradient −2d/w² · e etc.
                let a = [-2.0 * d[0] / w2, -2.0 * d[1] / w2];
                let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
                let c = -2.0 / w2;
                let mut j = Jet { v: e, ..Default::default() };
                for i in 0..n {
                    j.g[i] = e * a[i];
                    for k in 0..n {
                        j.h[i][k] = e * (a[i] * a[k] + c * delta(i, k));
                        for l in 0..n {
                            j.t[i][k][l] = e
                                * (a[i] * a[k] * a[l]
                                    + c * (delta(i, k) * a[l] + delta(i, l) * a[k] + delta(k, l) * a[i]));
                        }
                    }
                }
                j
            }
            Profile::Moment { terms } => {
                let p = base.mu;
                let mut pj = Jet::default();
                for (beta, coef) in terms {
                    pj.axpy(*coef, &monomial_jet(n, p, beta));
                }
                pj.chain(n, base, q4, order)
            }
        }
    }
}

/// Jet in p of p^β.
fn monomial_jet(n: usize, p: [f64; 2], beta: &[u32]) -> Jet {
    // per-axis derivatives of p_a^k up to order 3
    let axis = |a: usize| -> [f64; 4] {
        let k = beta.get(a).copied().unwrap_or(0) as i32;
        let x = p[a];
        let mut d = [0.0; 4];
        let mut fall = 1.0;
        for (o, slot) in d.iter_mut().enumerate() {
            let e = k - o as i32;
            if e < 0 {
                break;
            }
            *slot = fall * x.powi(e);
            fall *= e as f64;
        }
        d
    };
    let a0 = axis(0);
    let a1 = if n == 2 { axis(1) } else { [1.0, 0.0, 0.0, 0.0] };
    let d = |i: usize, j: usize| a0[i] * a1[j];
    let mut jt = Jet { v: d(0, 0), ..Default::default() };
    jt.g[0] = d(1, 0);
    jt.h[0][0] = d(2, 0);
    jt.t[0][0][0] = d(3, 0);
    if n == 2 {
        jt.g[1] = d(0, 1);
        jt.h[0][1] = d(1, 1);
        jt.h[1][0] = d(1, 1);
        jt.h[1][1] = d(0, 2);
        jt.t[0][0][1] = d(2, 1);
        jt.t[0][1][0] = d(2, 1);
        jt.t[1][0][0] = d(2, 1);
        jt.t[0][1][1] = d(1, 2);
        jt.t[1][0][1] = d(1, 2);
        jt.t[1][1][0] = d(1, 2);
        jt.t[1][1][1] = d(0, 3);
    }
    jt
}
