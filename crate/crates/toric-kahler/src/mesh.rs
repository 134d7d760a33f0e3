//! Uniform truncated grids on ℝⁿ (n = 1, 2), quadrature, and finite differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureRule {
    Trapezoid,
    Simpson,
}

impl QuadratureRule {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "trapezoid" => Ok(QuadratureRule::Trapezoid),
            "simpson" => Ok(QuadratureRule::Simpson),
            _ => Err(Error::InvalidGrid(format!("unknown quadrature rule '{s}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            QuadratureRule::Trapezoid => "trapezoid",
            QuadratureRule::Simpson => "simpson",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Grid {
    pub dim: usize,
    pub half_width: f64,
    pub points_per_axis: usize,
    pub spacing: f64,
    pub rule: QuadratureRule,
    /// Coordinates along one axis.
    pub axis: Vec<f64>,
    /// Quadrature weights along one axis.
    pub axis_weights: Vec<f64>,
    /// Product weights over all nodes, node index i·N + j in 2-d.
    pub weights: Vec<f64>,
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, points_per_axis: usize, rule: QuadratureRule) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("half width {half_width} must be positive")));
        }
        if points_per_axis < 5 || points_per_axis.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be odd and at least 5, got {points_per_axis}"
            )));
        }
        let n = points_per_axis;
        let h = 2.0 * half_width / (n - 1) as f64;
        let axis: Vec<f64> = (0..n).map(|i| -half_width + i as f64 * h).collect();
        let axis_weights: Vec<f64> = (0..n)
            .map(|i| match rule {
                QuadratureRule::Trapezoid => {
                    if i == 0 || i == n - 1 {
                        h / 2.0
                    } else {
                        h
                    }
                }
                QuadratureRule::Simpson => {
                    if i == 0 || i == n - 1 {
                        h / 3.0
                    } else if i % 2 == 1 {
                        4.0 * h / 3.0
                    } else {
                        2.0 * h / 3.0
                    }
                }
            })
            .collect();
        let weights = if dim == 1 {
            axis_weights.clone()
        } else {
            let mut w = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    w.push(axis_weights[i] * axis_weights[j]);
                }
            }
            w
        };
        Ok(Grid { dim, half_width, points_per_axis: n, spacing: h, rule, axis, axis_weights, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Coordinates of node k (second entry unused for n = 1).
    pub fn point(&self, k: usize) -> [f64; 2] {
        let n = self.points_per_axis;
        if self.dim == 1 {
            [self.axis[k], 0.0]
        } else {
            [self.axis[k / n], self.axis[k % n]]
        }
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Nodes with every coordinate strictly inside `fraction`·R.
    pub fn inner_mask(&self, fraction: f64) -> Vec<bool> {
        let lim = fraction * self.half_width + 1e-12;
        (0..self.len())
            .map(|k| {
                let p = self.point(k);
                (0..self.dim).all(|j| p[j].abs() <= lim)
            })
            .collect()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn identifier(&self) -> String {
        format!("n{}-R{}-N{}-{}", self.dim, self.half_width, self.points_per_axis, self.rule.name())
    }

    /// Finite-difference derivative of a nodal field. `order` is a multi-index
    /// of total degree ≤ 2 and `accuracy` ∈ {2, 4, 6, 8}. Central stencils inside,
    /// one-sided stencils of the same accuracy in the boundary layer.
    pub fn differentiate(&self, field: &[f64], order: &[usize], accuracy: usize) -> Result<Vec<f64>> {
        if field.len() != self.len() {
            return Err(Error::Shape { expected: self.len(), got: field.len() });
        }
        if order.len() != self.dim || order.iter().sum::<usize>() > 2 {
            return Err(Error::InvalidGrid(format!("unsupported derivative order {order:?}")));
        }
        if ![2, 4, 6, 8].contains(&accuracy) {
            return Err(Error::InvalidGrid(format!("accuracy must be 2, 4, 6 or 8, got {accuracy}")));
        }
        let mut out = field.to_vec();
        for (axis, &d) in order.iter().enumerate() {
            if d > 0 {
                out = self.apply_axis(&out, axis, d, accuracy);
            }
        }
        Ok(out)
    }

    fn apply_axis(&self, field: &[f64], axis: usize, d: usize, accuracy: usize) -> Vec<f64> {
        let n = self.points_per_axis;
        let stencils = Stencils::new(n, self.spacing, d, accuracy);
        let mut out = vec![0.0; field.len()];
        if self.dim == 1 {
            stencils.apply(field, &mut out, 0, 1);
        } else {
            for other in 0..n {
                let (offset, stride) = if axis == 0 { (other, n) } else { (other * n, 1) };
                stencils.apply(field, &mut out, offset, stride);
            }
        }
        out
    }
}

/// Fornberg finite-difference weights for the d-th derivative at 0 from
/// integer offsets.
pub fn fd_weights(offsets: &[i64], d: usize) -> Vec<f64> {
    let m = offsets.len();
    // Vandermonde solve: Σ_k w_k o_k^j = j! δ_{jd}
    let a = nalgebra::DMatrix::from_fn(m, m, |j, k| (offsets[k] as f64).powi(j as i32));
    let mut b = nalgebra::DVector::zeros(m);
    b[d] = (1..=d).product::<usize>() as f64;
    a.lu().solve(&b).expect("distinct offsets").iter().copied().collect()
}

struct Stencils {
    rows: Vec<(i64, Vec<f64>)>,
}

impl Stencils {
    fn new(n: usize, h: f64, d: usize, accuracy: usize) -> Self {
        let half = (accuracy / 2) as i64;
        let width = (accuracy + d) as i64;
        let central: Vec<i64> = (-half..=half).collect();
        let cw: Vec<f64> = fd_weights(&central, d).iter().map(|w| w / h.powi(d as i32)).collect();
        let rows = (0..n as i64)
            .map(|i| {
                if i - half >= 0 && i + half < n as i64 {
                    (i - half, cw.clone())
                } else {
                    let start = if i - half < 0 { 0 } else { n as i64 - width };
                    let offs: Vec<i64> = (start..start + width).map(|j| j - i).collect();
                    let w = fd_weights(&offs, d).iter().map(|w| w / h.powi(d as i32)).collect();
                    (start, w)
                }
            })
            .collect();
        Stencils { rows }
    }

    fn apply(&self, field: &[f64], out: &mut [f64], offset: usize, stride: usize) {
        for (i, (start, w)) in self.rows.iter().enumerate() {
            let mut s = 0.0;
            for (k, wk) in w.iter().enumerate() {
                s += wk * field[offset + (*start as usize + k) * stride];
            }
            out[offset + i * stride] = s;
        }
    }
}
