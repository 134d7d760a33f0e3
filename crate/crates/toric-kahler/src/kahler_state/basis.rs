//! Discrete-orthonormal polynomial bases built by Arnoldi-style recurrence
//! (multiply by a coordinate, Gram–Schmidt twice), plus derivative jets by
//! replaying the recurrence at arbitrary points.

use super::base::BaseJet;

/// Value and derivatives up to third order of a scalar function of n ≤ 2
/// variables, stored as full symmetric tensors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; 2],
    pub h: [[f64; 2]; 2],
    pub t: [[[f64; 2]; 2]; 2],
}

impl Jet {
    pub fn axpy(&mut self, a: f64, o: &Jet) {
        self.v += a * o.v;
        for i in 0..2 {
            self.g[i] += a * o.g[i];
            for j in 0..2 {
                self.h[i][j] += a * o.h[i][j];
                for k in 0..2 {
                    self.t[i][j][k] += a * o.t[i][j][k];
                }
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        let z = *self;
        *self = Jet::default();
        self.axpy(a, &z);
    }

    /// Jet in x of F(p(x)) given the jet of F in p and the base derivatives
    /// (H = ∂p/∂x, T = ∂H/∂x, Q = ∂T/∂x).
    pub fn chain(&self, n: usize, b: &BaseJet, q4: Option<&[[[[f64; 2]; 2]; 2]; 2]>, order: usize) -> Jet {
        let h = &b.h;
        let t = &b.t;
        let mut out = Jet { v: self.v, ..Default::default() };
        for j in 0..n {
            out.g[j] = (0..n).map(|a| self.g[a] * h[a][j]).sum();
        }
        if order < 2 {
            return out;
        }
        // (pp-hessian)·H, reused below
        let mut hh = [[0.0; 2]; 2];
        for a in 0..n {
            for k in 0..n {
                hh[a][k] = (0..n).map(|bb| self.h[a][bb] * h[bb][k]).sum();
            }
        }
        for j in 0..n {
            for k in 0..n {
                let mut s = 0.0;
                for a in 0..n {
                    s += h[a][j] * hh[a][k] + self.g[a] * t[a][j][k];
                }
                out.h[j][k] = s;
            }
        }
        if order < 3 {
            return out;
        }
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut s = 0.0;
                    for a in 0..n {
                        for bb in 0..n {
                            for c in 0..n {
                                s += self.t[a][bb][c] * h[a][j] * h[bb][k] * h[c][l];
                            }
                            s +=
                                self.h[a][bb] * (t[a][j][l] * h[bb][k] + h[a][j] * t[bb][k][l] + h[bb][l] * t[a][j][k]);
                        }
                        if let Some(q) = q4 {
                            s += self.g[a] * q[a][j][k][l];
                        }
                    }
                    out.t[j][k][l] = s;
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Step {
    parent: usize,
    axis: usize,
    coef: Vec<f64>,
    norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyBasis {
    pub dim: usize,
    pub degree: usize,
    center: [f64; 2],
    scale: [f64; 2],
    c0: f64,
    steps: Vec<Step>,
}

impl PolyBasis {
    /// Orthonormal basis of polynomials of total degree ≤ `degree` in the
    /// discrete inner product Σ_k w_k f(p_k) g(p_k).
    pub fn build(dim: usize, degree: usize, points: &[[f64; 2]], weights: &[f64]) -> Self {
        let m = points.len();
        let mut center = [0.0; 2];
        let mut scale = [1.0; 2];
        for a in 0..dim {
            let lo = points.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
            center[a] = 0.5 * (lo + hi);
            scale[a] = (0.5 * (hi - lo)).max(1e-300);
        }
        let z: Vec<[f64; 2]> =
            points.iter().map(|p| [(p[0] - center[0]) / scale[0], (p[1] - center[1]) / scale[1]]).collect();
        let wsum: f64 = weights.iter().sum();
        let c0 = 1.0 / wsum.sqrt();
        let mut q: Vec<Vec<f64>> = vec![vec![c0; m]];
        let mut deg = vec![0usize];
        let mut steps = Vec::new();
        for k in 1..=degree {
            let prev: Vec<usize> = (0..q.len()).filter(|&i| deg[i] == k - 1).collect();
            let mut gens: Vec<(usize, usize)> = prev.iter().map(|&i| (i, 0)).collect();
            if dim == 2 {
                gens.push((*prev.last().unwrap(), 1));
            } else {
                gens.truncate(1);
            }
            for (parent, axis) in gens {
                let mut v: Vec<f64> = (0..m).map(|i| z[i][axis] * q[parent][i]).collect();
                let mut coef = vec![0.0; q.len()];
                for _ in 0..2 {
                    for (j, qj) in q.iter().enumerate() {
                        let hj: f64 = (0..m).map(|i| weights[i] * qj[i] * v[i]).sum();
                        coef[j] += hj;
                        for i in 0..m {
                            v[i] -= hj * qj[i];
                        }
                    }
                }
                let norm = (0..m).map(|i| weights[i] * v[i] * v[i]).sum::<f64>().sqrt();
                for x in v.iter_mut() {
                    *x /= norm;
                }
                q.push(v);
                deg.push(k);
                steps.push(Step { parent, axis, coef, norm });
            }
        }
        PolyBasis { dim, degree, center, scale, c0, steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Jets (up to `order` ≤ 3) of every basis function at the given points;
    /// layout out[k·len + i].
    pub fn jets(&self, points: &[[f64; 2]], order: usize) -> Vec<Jet> {
        let m = points.len();
        let kk = self.len();
        let mut out = vec![Jet::default(); kk * m];
        for j in out.iter_mut().take(m) {
            j.v = self.c0;
        }
        for (s, step) in self.steps.iter().enumerate() {
            let k = s + 1;
            let a = step.axis;
            let inv = 1.0 / self.scale[a];
            let (done, rest) = out.split_at_mut(k * m);
            let cur = &mut rest[..m];
            let par = &done[step.parent * m..(step.parent + 1) * m];
            for i in 0..m {
                let za = (points[i][a] - self.center[a]) * inv;
                let pj = &par[i];
                let mut nj = Jet { v: za * pj.v, ..Default::default() };
                if order >= 1 {
                    for b in 0..2 {
                        nj.g[b] = za * pj.g[b];
                    }
                    nj.g[a] += pj.v * inv;
                }
                if order >= 2 {
                    for b in 0..2 {
                        for c in 0..2 {
                            nj.h[b][c] = za * pj.h[b][c];
                        }
                    }
                    for c in 0..2 {
                        nj.h[a][c] += pj.g[c] * inv;
                        nj.h[c][a] += pj.g[c] * inv;
                    }
                }
                if order >= 3 {
                    for b in 0..2 {
                        for c in 0..2 {
                            for d in 0..2 {
                                nj.t[b][c][d] = za * pj.t[b][c][d];
                            }
                        }
                    }
                    for c in 0..2 {
                        for d in 0..2 {
                            nj.t[a][c][d] += pj.h[c][d] * inv;
                            nj.t[c][a][d] += pj.h[c][d] * inv;
                            nj.t[c][d][a] += pj.h[c][d] * inv;
                        }
                    }
                }
                cur[i] = nj;
            }
            for (j, &cj) in step.coef.iter().enumerate() {
                if cj == 0.0 {
                    continue;
                }
                let qj = &done[j * m..(j + 1) * m];
                for i in 0..m {
                    cur[i].axpy(-cj, &qj[i]);
                }
            }
            let r = 1.0 / step.norm;
            for c in cur.iter_mut() {
                c.scale(r);
            }
        }
        out
    }

    /// Values only, layout out[k·len + i].
    pub fn values(&self, points: &[[f64; 2]]) -> Vec<f64> {
        let m = points.len();
        let kk = self.len();
        let mut out = vec![0.0; kk * m];
        for v in out.iter_mut().take(m) {
            *v = self.c0;
        }
        for (s, step) in self.steps.iter().enumerate() {
            let k = s + 1;
            let a = step.axis;
            let (done, rest) = out.split_at_mut(k * m);
            let cur = &mut rest[..m];
            for i in 0..m {
                cur[i] = (points[i][a] - self.center[a]) / self.scale[a] * done[step.parent * m + i];
            }
            for (j, &cj) in step.coef.iter().enumerate() {
                for i in 0..m {
                    cur[i] -= cj * done[j * m + i];
                }
            }
            for c in cur.iter_mut() {
                *c /= step.norm;
            }
        }
        out
    }
}
