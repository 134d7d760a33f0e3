//! Lattice polytope combinatorics with exact rational arithmetic.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Global orientation s in λ_α = s·⟨b_ℓ, α⟩. Fixed once against the spectral
/// computation at a converged soliton state and frozen here.
pub const LAMBDA_SIGN: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Facet {
    /// Primitive inward normal u.
    pub normal: Vec<i64>,
    /// P lies in ⟨u, p⟩ ≥ −offset.
    pub offset: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticePolytope {
    pub name: String,
    pub dim: usize,
    /// For n = 2 the vertices are in counter-clockwise order and facet i joins
    /// vertex i to vertex i+1.
    pub vertices: Vec<Vec<i64>>,
    pub facets: Vec<Facet>,
}

#[derive(Deserialize)]
struct PolytopeDoc {
    name: String,
    dim: usize,
    vertices: Vec<Vec<i64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffineFunction {
    pub constant: f64,
    pub gradient: Vec<f64>,
}

impl AffineFunction {
    pub fn zero(n: usize) -> Self {
        AffineFunction { constant: 0.0, gradient: vec![0.0; n] }
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        self.constant + self.gradient.iter().zip(p).map(|(b, x)| b * x).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DemazureRoot {
    pub weight: Vec<i64>,
    pub facet_index: usize,
}

#[derive(Clone, Debug)]
pub struct ExtremalData {
    pub ell: AffineFunction,
    /// ℓ coefficients (constant, gradient...) as exact rationals.
    pub ell_exact: Vec<BigRational>,
    pub barycenter: Vec<f64>,
    pub barycenter_exact: Vec<BigRational>,
    pub obstruction_margin: f64,
    pub margin_exact: BigRational,
    /// ‖ℓ‖²_{L²(P)}.
    pub norm_sq: f64,
    pub norm_sq_exact: BigRational,
    pub predicted_lambdas: Vec<(Vec<i64>, f64)>,
}

/// Exact monomial integrals ∫_P p^β dp for |β| ≤ max_degree.
#[derive(Clone, Debug)]
pub struct Moments {
    pub dim: usize,
    pub max_degree: u32,
    table: BTreeMap<Vec<u32>, BigRational>,
}

impl Moments {
    pub fn get(&self, beta: &[u32]) -> &BigRational {
        &self.table[beta]
    }

    pub fn get_f64(&self, beta: &[u32]) -> f64 {
        rat_to_f64(self.get(beta))
    }

    pub fn volume(&self) -> &BigRational {
        self.get(&vec![0; self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<u32>, &BigRational)> {
        self.table.iter()
    }
}

pub fn rat_to_f64(r: &BigRational) -> f64 {
    // numer/denom may individually overflow f64 only for absurd inputs
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

pub fn rat_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

impl LatticePolytope {
    /// Parse the JSON schema `{ "name", "dim", "vertices" }` and validate.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PolytopeDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_vertices(&doc.name, doc.dim, doc.vertices)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Built-in fixtures: cp1, cp2, cp1xcp1, bl1, bl2, bl3.
    pub fn fixture(key: &str) -> Result<Self> {
        let text = match key.to_ascii_lowercase().as_str() {
            "cp1" => include_str!("../../../fixtures/cp1.json"),
            "cp2" => include_str!("../../../fixtures/cp2.json"),
            "cp1xcp1" => include_str!("../../../fixtures/cp1xcp1.json"),
            "bl1" => include_str!("../../../fixtures/bl1.json"),
            "bl2" => include_str!("../../../fixtures/bl2.json"),
            "bl3" => include_str!("../../../fixtures/bl3.json"),
            other => return Err(Error::Unsupported(format!("no built-in polytope '{other}'"))),
        };
        Self::from_json(text)
    }

    pub fn from_vertices(name: &str, dim: usize, vertices: Vec<Vec<i64>>) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidPolytope(format!("dim {dim} not in {{1, 2}}")));
        }
        for v in &vertices {
            if v.len() != dim {
                return Err(Error::InvalidPolytope(format!("vertex {v:?} has length {} but dim is {dim}", v.len())));
            }
        }
        let (vertices, facets) = if dim == 1 { Self::segment(vertices)? } else { Self::polygon(vertices)? };
        for (i, f) in facets.iter().enumerate() {
            if f.offset != 1 {
                return Err(Error::InvalidPolytope(format!(
                    "not reflexive: facet {i} with normal {:?} has offset {}",
                    f.normal, f.offset
                )));
            }
        }
        Ok(LatticePolytope { name: name.to_string(), dim, vertices, facets })
    }

    fn segment(mut vertices: Vec<Vec<i64>>) -> Result<(Vec<Vec<i64>>, Vec<Facet>)> {
        vertices.sort();
        vertices.dedup();
        if vertices.len() != 2 {
            return Err(Error::InvalidPolytope(format!(
                "a 1-d polytope needs two distinct endpoints, got {vertices:?}"
            )));
        }
        let (a, b) = (vertices[0][0], vertices[1][0]);
        let facets = vec![Facet { normal: vec![1], offset: -a }, Facet { normal: vec![-1], offset: b }];
        Ok((vertices, facets))
    }

    fn polygon(vertices: Vec<Vec<i64>>) -> Result<(Vec<Vec<i64>>, Vec<Facet>)> {
        let mut vs: Vec<[i64; 2]> = vertices.iter().map(|v| [v[0], v[1]]).collect();
        vs.sort();
        vs.dedup();
        if vs.len() < 3 {
            return Err(Error::InvalidPolytope(format!(
                "a polygon needs at least three distinct vertices, got {}",
                vs.len()
            )));
        }
        let cx = vs.iter().map(|v| v[0] as f64).sum::<f64>() / vs.len() as f64;
        let cy = vs.iter().map(|v| v[1] as f64).sum::<f64>() / vs.len() as f64;
        vs.sort_by(|a, b| {
            let ta = (a[1] as f64 - cy).atan2(a[0] as f64 - cx);
            let tb = (b[1] as f64 - cy).atan2(b[0] as f64 - cx);
            ta.partial_cmp(&tb).unwrap()
        });
        let k = vs.len();
        let mut area2 = 0i64;
        for i in 0..k {
            let (a, b, c) = (vs[i], vs[(i + 1) % k], vs[(i + 2) % k]);
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            if cross <= 0 {
                return Err(Error::InvalidPolytope(format!("vertex {:?} is not a strict convex corner", b)));
            }
            area2 += a[0] * b[1] - a[1] * b[0];
        }
        if area2 <= 0 {
            return Err(Error::InvalidPolytope("polygon is not full-dimensional".into()));
        }
        let mut facets = Vec::with_capacity(k);
        for i in 0..k {
            let (a, b) = (vs[i], vs[(i + 1) % k]);
            let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
            let g = gcd(ex, ey);
            let u = [-ey / g, ex / g];
            let offset = -(u[0] * a[0] + u[1] * a[1]);
            facets.push(Facet { normal: u.to_vec(), offset });
        }
        // rebuild vertices from consecutive facet lines
        for i in 0..k {
            let (f, g) = (&facets[(i + k - 1) % k], &facets[i]);
            let det = f.normal[0] * g.normal[1] - f.normal[1] * g.normal[0];
            let x = (-f.offset * g.normal[1] + g.offset * f.normal[1]) as f64 / det as f64;
            let y = (-g.offset * f.normal[0] + f.offset * g.normal[0]) as f64 / det as f64;
            if (x - vs[i][0] as f64).abs() > 1e-12 || (y - vs[i][1] as f64).abs() > 1e-12 {
                return Err(Error::InvalidPolytope(format!(
                    "facet intersection ({x}, {y}) does not reproduce vertex {:?}",
                    vs[i]
                )));
            }
        }
        Ok((vs.iter().map(|v| v.to_vec()).collect(), facets))
    }

    pub fn contains(&self, p: &[i64]) -> bool {
        self.facets.iter().all(|f| dot_i(&f.normal, p) >= -f.offset)
    }

    pub fn lattice_points(&self) -> Vec<Vec<i64>> {
        let lo: Vec<i64> = (0..self.dim).map(|j| self.vertices.iter().map(|v| v[j]).min().unwrap()).collect();
        let hi: Vec<i64> = (0..self.dim).map(|j| self.vertices.iter().map(|v| v[j]).max().unwrap()).collect();
        let mut out = Vec::new();
        if self.dim == 1 {
            for a in lo[0]..=hi[0] {
                out.push(vec![a]);
            }
        } else {
            for a in lo[0]..=hi[0] {
                for b in lo[1]..=hi[1] {
                    if self.contains(&[a, b]) {
                        out.push(vec![a, b]);
                    }
                }
            }
        }
        out
    }

    pub fn moments(&self, max_degree: u32) -> Moments {
        moments_of_vertices(self.dim, &self.vertices, max_degree)
    }

    pub fn volume(&self) -> f64 {
        rat_to_f64(self.moments(0).volume())
    }

    pub fn demazure_roots(&self) -> Vec<DemazureRoot> {
        let bound = 2 * self.vertices.iter().flatten().map(|c| c.abs()).max().unwrap_or(1) + 2;
        let mut roots = Vec::new();
        let mut visit = |alpha: Vec<i64>| {
            let pairings: Vec<i64> = self.facets.iter().map(|f| dot_i(&f.normal, &alpha)).collect();
            let neg: Vec<usize> = (0..pairings.len()).filter(|&i| pairings[i] == -1).collect();
            if neg.len() == 1 && pairings.iter().all(|&s| s >= -1) {
                roots.push(DemazureRoot { weight: alpha, facet_index: neg[0] });
            }
        };
        if self.dim == 1 {
            for a in -bound..=bound {
                visit(vec![a]);
            }
        } else {
            for a in -bound..=bound {
                for b in -bound..=bound {
                    visit(vec![a, b]);
                }
            }
        }
        roots
    }

    /// n + number of Demazure roots.
    pub fn dim_automorphisms(&self) -> usize {
        self.dim + self.demazure_roots().len()
    }

    pub fn extremal_affine(&self) -> ExtremalData {
        let origin = vec![rat(0); self.dim];
        let mut data = extremal_affine_of_vertices(self.dim, &self.vertices, &origin);
        data.predicted_lambdas = self
            .demazure_roots()
            .into_iter()
            .map(|r| {
                let l = LAMBDA_SIGN * dot_f(&data.ell.gradient, &r.weight);
                (r.weight, l)
            })
            .collect();
        data
    }

    /// Facet distances ℓ_i(p) = ⟨u_i, p⟩ + offset_i, nonnegative on P.
    pub fn facet_distance(&self, i: usize, p: &[f64]) -> f64 {
        let f = &self.facets[i];
        f.offset as f64 + f.normal.iter().zip(p).map(|(&u, &x)| u as f64 * x).sum::<f64>()
    }

    /// Integer polytope key used in checkpoints and reports.
    pub fn identifier(&self) -> String {
        let vs: Vec<String> =
            self.vertices.iter().map(|v| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")).collect();
        format!("{}[{}]", self.name, vs.join(";"))
    }
}

impl fmt::Display for LatticePolytope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.identifier())
    }
}

fn dot_i(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dot_f(a: &[f64], b: &[i64]) -> f64 {
    a.iter().zip(b).map(|(x, &y)| x * y as f64).sum()
}

/// Exact monomial moments of the convex hull of `vertices` (ordered
/// counter-clockwise for n = 2), via a fan from the first vertex and the
/// Dirichlet formula ∫_T λ^k = 2|T| k!/(|k|+2)!.
pub fn moments_of_vertices(dim: usize, vertices: &[Vec<i64>], max_degree: u32) -> Moments {
    let mut table = BTreeMap::new();
    if dim == 1 {
        let a = vertices.iter().map(|v| v[0]).min().unwrap();
        let b = vertices.iter().map(|v| v[0]).max().unwrap();
        for k in 0..=max_degree {
            let num = BigInt::from(b).pow(k + 1) - BigInt::from(a).pow(k + 1);
            table.insert(vec![k], BigRational::new(num, BigInt::from(k + 1)));
        }
        return Moments { dim, max_degree, table };
    }
    for d in 0..=max_degree {
        for b1 in 0..=d {
            let b2 = d - b1;
            let mut total = BigRational::zero();
            for i in 1..vertices.len() - 1 {
                let tri = [&vertices[0], &vertices[i], &vertices[i + 1]];
                total += triangle_monomial(tri, b1, b2);
            }
            table.insert(vec![b1, b2], total);
        }
    }
    Moments { dim, max_degree, table }
}

fn triangle_monomial(t: [&Vec<i64>; 3], b1: u32, b2: u32) -> BigRational {
    let area2 = ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[1][1] - t[0][1]) * (t[2][0] - t[0][0])).abs();
    // p_j = Σ_i λ_i t_i[j]; expand both powers as trinomials in λ
    let expand = |b: u32, j: usize| -> Vec<([u32; 3], BigInt)> {
        let mut terms = Vec::new();
        for k0 in 0..=b {
            for k1 in 0..=(b - k0) {
                let k2 = b - k0 - k1;
                let coef = factorial(b) / (factorial(k0) * factorial(k1) * factorial(k2))
                    * BigInt::from(t[0][j]).pow(k0)
                    * BigInt::from(t[1][j]).pow(k1)
                    * BigInt::from(t[2][j]).pow(k2);
                if !coef.is_zero() {
                    terms.push(([k0, k1, k2], coef));
                }
            }
        }
        terms
    };
    let (e1, e2) = (expand(b1, 0), expand(b2, 1));
    let mut sum = BigRational::zero();
    for (k, c) in &e1 {
        for (l, d) in &e2 {
            let m = [k[0] + l[0], k[1] + l[1], k[2] + l[2]];
            let num = c * d * factorial(m[0]) * factorial(m[1]) * factorial(m[2]);
            let den = factorial(m[0] + m[1] + m[2] + 2);
            sum += BigRational::new(num, den);
        }
    }
    // ∫_T λ^m = 2|T| m!/(|m|+2)! with 2|T| = area2
    sum * rat(area2)
}

/// ℓ for the polytope with the given center: the unique affine function with
/// ∫_P ℓ·a = vol(P)·⟨b_a, bary(P) − center⟩ for every affine a.
pub fn extremal_affine_of_vertices(dim: usize, vertices: &[Vec<i64>], center: &[BigRational]) -> ExtremalData {
    let mom = moments_of_vertices(dim, vertices, 2);
    let n1 = dim + 1;
    let e = |j: usize| -> Vec<u32> {
        let mut b = vec![0u32; dim];
        if j > 0 {
            b[j - 1] += 1;
        }
        b
    };
    let mut gram = vec![vec![BigRational::zero(); n1]; n1];
    for a in 0..n1 {
        for b in 0..n1 {
            let ea = e(a);
            let eb = e(b);
            let beta: Vec<u32> = ea.iter().zip(&eb).map(|(x, y)| x + y).collect();
            gram[a][b] = mom.get(&beta).clone();
        }
    }
    let vol = mom.volume().clone();
    let bary: Vec<BigRational> = (0..dim).map(|j| mom.get(&e(j + 1)) / &vol).collect();
    let mut rhs = vec![BigRational::zero(); n1];
    for j in 0..dim {
        rhs[j + 1] = &vol * (&bary[j] - &center[j]);
    }
    let coef = solve_exact(gram.clone(), rhs.clone());
    let norm_sq: BigRational = coef.iter().zip(&rhs).map(|(c, r)| c * r).sum();
    let max_ell = vertices
        .iter()
        .map(|v| {
            let mut s = coef[0].clone();
            for j in 0..dim {
                s += &coef[j + 1] * rat(v[j]);
            }
            s
        })
        .max()
        .unwrap();
    let margin = BigRational::one() - max_ell;
    ExtremalData {
        ell: AffineFunction { constant: rat_to_f64(&coef[0]), gradient: coef[1..].iter().map(rat_to_f64).collect() },
        ell_exact: coef,
        barycenter: bary.iter().map(rat_to_f64).collect(),
        barycenter_exact: bary,
        obstruction_margin: rat_to_f64(&margin),
        margin_exact: margin,
        norm_sq: rat_to_f64(&norm_sq),
        norm_sq_exact: norm_sq,
        predicted_lambdas: Vec::new(),
    }
}

/// Gaussian elimination over the rationals; the matrix must be nonsingular.
fn solve_exact(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Vec<BigRational> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .find(|&r| !a[r][col].is_zero())
            .expect("Gram matrix of a full-dimensional polytope is nonsingular");
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let factor = &a[r][col] / &a[col][col];
                for c in col..n {
                    let t = &factor * &a[col][c];
                    a[r][c] -= t;
                }
                let t = &factor * &b[col];
                b[r] -= t;
            }
        }
    }
    (0..n).map(|i| &b[i] / &a[i][i]).collect()
}

/// Whether a rational is nonnegative (helper for reports).
pub fn rat_is_nonneg(r: &BigRational) -> bool {
    !r.is_negative()
}
