//! Weighted log-sum-exp potentials φ(x) = ½ log Σ_a w_a e^{2⟨a,x⟩}.
//!
//! The softmax π_a(x) ∝ w_a e^{2⟨a,x⟩} makes every derivative a cumulant:
//! ∇φ = E[a], D²φ = 2 Cov, D³φ = 4 κ₃, D⁴φ = 8 κ₄.

use crate::toric::LatticePolytope;

#[derive(Clone, Debug, PartialEq)]
pub struct LseBase {
    pub dim: usize,
    pub points: Vec<[f64; 2]>,
    pub log_weights: Vec<f64>,
    /// For each lattice point, ⟨u_i, a⟩ + offset_i for every facet i.
    pub facet_values: Vec<Vec<f64>>,
}

/// Derivatives of the base at one node. Symmetric tensors are stored in full
/// 2×2(×2×2) form; entries beyond `dim` are zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct BaseJet {
    pub phi: f64,
    pub mu: [f64; 2],
    pub h: [[f64; 2]; 2],
    pub t: [[[f64; 2]; 2]; 2],
    pub det: f64,
}

impl LseBase {
    pub fn new(p: &LatticePolytope, points: Vec<Vec<i64>>, weights: &[f64]) -> Self {
        assert_eq!(points.len(), weights.len());
        let facet_values = points
            .iter()
            .map(|a| {
                p.facets
                    .iter()
                    .map(|f| f.offset as f64 + f.normal.iter().zip(a).map(|(u, x)| (u * x) as f64).sum::<f64>())
                    .collect()
            })
            .collect();
        let pts = points.iter().map(|a| [a[0] as f64, if p.dim == 2 { a[1] as f64 } else { 0.0 }]).collect();
        LseBase { dim: p.dim, points: pts, log_weights: weights.iter().map(|w| w.ln()).collect(), facet_values }
    }

    /// Reference potential: unit weights on every lattice point of P.
    pub fn reference(p: &LatticePolytope) -> Self {
        let pts = p.lattice_points();
        let w = vec![1.0; pts.len()];
        Self::new(p, pts, &w)
    }

    /// The base precomposed with x ↦ x + t.
    pub fn translated(&self, t: [f64; 2]) -> Self {
        let mut out = self.clone();
        for (lw, a) in out.log_weights.iter_mut().zip(&self.points) {
            *lw += 2.0 * (a[0] * t[0] + a[1] * t[1]);
        }
        out
    }

    fn softmax(&self, x: [f64; 2], pi: &mut Vec<f64>) -> f64 {
        pi.clear();
        let mut mx = f64::NEG_INFINITY;
        for (a, lw) in self.points.iter().zip(&self.log_weights) {
            let e = 2.0 * (a[0] * x[0] + a[1] * x[1]) + lw;
            pi.push(e);
            mx = mx.max(e);
        }
        let mut z = 0.0;
        for e in pi.iter_mut() {
            *e = (*e - mx).exp();
            z += *e;
        }
        for e in pi.iter_mut() {
            *e /= z;
        }
        0.5 * (mx + z.ln())
    }

    pub fn jet(&self, x: [f64; 2]) -> BaseJet {
        let mut pi = Vec::with_capacity(self.points.len());
        let phi = self.softmax(x, &mut pi);
        let n = self.dim;
        let mut mu = [0.0; 2];
        for (p, a) in pi.iter().zip(&self.points) {
            mu[0] += p * a[0];
            mu[1] += p * a[1];
        }
        let mut h = [[0.0; 2]; 2];
        let mut t = [[[0.0; 2]; 2]; 2];
        let mut det = 0.0;
        for (ia, (p, a)) in pi.iter().zip(&self.points).enumerate() {
            let d = [a[0] - mu[0], a[1] - mu[1]];
            for j in 0..n {
                for k in 0..n {
                    h[j][k] += 2.0 * p * d[j] * d[k];
                    for l in 0..n {
                        t[j][k][l] += 4.0 * p * d[j] * d[k] * d[l];
                    }
                }
            }
            if n == 2 {
                // det(2 Cov) = 2 Σ_{a,b} π_a π_b (d_a × d_b)²; no cancellation
                for (q, b) in pi.iter().zip(&self.points).skip(ia + 1) {
                    let e = [b[0] - mu[0], b[1] - mu[1]];
                    let cr = d[0] * e[1] - d[1] * e[0];
                    det += 4.0 * p * q * cr * cr;
                }
            }
        }
        if n == 1 {
            det = h[0][0];
        }
        BaseJet { phi, mu, h, t, det }
    }

    /// Fourth derivative tensor 8κ₄ at x.
    pub fn fourth(&self, x: [f64; 2]) -> [[[[f64; 2]; 2]; 2]; 2] {
        let mut pi = Vec::with_capacity(self.points.len());
        self.softmax(x, &mut pi);
        let n = self.dim;
        let mut mu = [0.0; 2];
        for (p, a) in pi.iter().zip(&self.points) {
            mu[0] += p * a[0];
            mu[1] += p * a[1];
        }
        let mut c = [[0.0; 2]; 2];
        let mut m4 = [[[[0.0; 2]; 2]; 2]; 2];
        for (p, a) in pi.iter().zip(&self.points) {
            let d = [a[0] - mu[0], a[1] - mu[1]];
            for i in 0..n {
                for j in 0..n {
                    c[i][j] += p * d[i] * d[j];
                    for k in 0..n {
                        for l in 0..n {
                            m4[i][j][k][l] += p * d[i] * d[j] * d[k] * d[l];
                        }
                    }
                }
            }
        }
        let mut out = [[[[0.0; 2]; 2]; 2]; 2];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let k4 = m4[i][j][k][l] - c[i][j] * c[k][l] - c[i][k] * c[j][l] - c[i][l] * c[j][k];
                        out[i][j][k][l] = 8.0 * k4;
                    }
                }
            }
        }
        out
    }

    /// Facet distances ℓ_i(∇φ(x)) computed as softmax averages of the
    /// nonnegative integers ⟨u_i, a⟩ + 1, so they stay accurate near ∂P.
    pub fn facet_distances(&self, x: [f64; 2]) -> Vec<f64> {
        let mut pi = Vec::with_capacity(self.points.len());
        self.softmax(x, &mut pi);
        let nf = self.facet_values.first().map_or(0, |v| v.len());
        let mut out = vec![0.0; nf];
        for (p, fv) in pi.iter().zip(&self.facet_values) {
            for (o, v) in out.iter_mut().zip(fv) {
                *o += p * v;
            }
        }
        out
    }
}

/// Closed-form Kähler–Einstein weights for ℂP¹, ℂP², ℂP¹×ℂP¹: ℂP¹ is
/// log(2 cosh x) = ½ log(e^{2x} + 2 + e^{−2x}), ℂP² is the multinomial
/// expansion of (1 + e^{2x₁} + e^{2x₂})³, and products multiply weights.
pub fn round_weights(p: &LatticePolytope) -> Option<(Vec<Vec<i64>>, Vec<f64>)> {
    let mut vs = p.vertices.clone();
    vs.sort();
    let pts = p.lattice_points();
    let binom2 = |a: i64| if a == 0 { 2.0 } else { 1.0 };
    match (p.dim, vs.as_slice()) {
        (1, [a, b]) if a[0] == -1 && b[0] == 1 => {
            let w = pts.iter().map(|a| binom2(a[0])).collect();
            Some((pts, w))
        }
        (2, _) if vs == vec![vec![-1, -1], vec![-1, 1], vec![1, -1], vec![1, 1]] => {
            let w = pts.iter().map(|a| binom2(a[0]) * binom2(a[1])).collect();
            Some((pts, w))
        }
        (2, _) if vs == vec![vec![-1, -1], vec![-1, 2], vec![2, -1]] => {
            let fact = |k: i64| (1..=k).product::<i64>() as f64;
            let w = pts
                .iter()
                .map(|a| {
                    let (i, j) = (a[0] + 1, a[1] + 1);
                    fact(3) / (fact(i) * fact(j) * fact(3 - i - j))
                })
                .collect();
            Some((pts, w))
        }
        _ => None,
    }
}
