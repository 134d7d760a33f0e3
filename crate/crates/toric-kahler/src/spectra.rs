//! Generalized symmetric eigensolves, kernels of L_m and the Matsushima
//! decomposition of h(X) into eigenspaces of L̄ on Ker L.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kahler_state::MetricState;
use crate::sector_ops::{self, FirstVariation, SectorOperator};
use crate::toric::LAMBDA_SIGN;

pub const REPORT_SCHEMA: u32 = 1;

/// 1e−4 × the smallest clearly nonzero eigenvalue of L₀ at the round ℂP¹
/// fixture (that eigenvalue is 2).
pub const KERNEL_THRESHOLD: f64 = 2e-4;

/// Eigenvectors whose ⟨⟨·,·⟩⟩ mass lies mostly outside this fraction of the
/// box are boundary artifacts.
pub const BOUNDARY_FRACTION: f64 = 0.95;

#[derive(Clone, Debug)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    /// M-orthonormal columns.
    pub vectors: DMatrix<f64>,
    pub max_residual: f64,
}

/// k smallest eigenpairs of A x = λ M x for symmetric A and SPD M.
pub fn eigensolve(a: &DMatrix<f64>, m: &DMatrix<f64>, k: usize) -> Result<Eigenpairs> {
    let n = a.nrows();
    if a.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::Shape { expected: n, got: m.nrows() });
    }
    if k > n {
        return Err(Error::Numerical(format!("requested {k} eigenpairs of a {n}-dimensional problem")));
    }
    let chol = m.clone().cholesky().ok_or_else(|| Error::Numerical("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let li = l.clone().try_inverse().ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let mut c = &li * a * li.transpose();
    let ct = c.transpose();
    c += ct;
    c *= 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let mut values = Vec::with_capacity(k);
    let mut vectors = DMatrix::zeros(n, k);
    let lit = li.transpose();
    let scale = eig.eigenvalues.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let mut max_residual = 0.0f64;
    for (col, &i) in order.iter().take(k).enumerate() {
        let mut x = &lit * eig.eigenvectors.column(i);
        // deterministic sign: largest entry positive
        let imax = x.iamax();
        if x[imax] < 0.0 {
            x = -x;
        }
        let lam = eig.eigenvalues[i];
        let mx = m * &x;
        let r = (a * &x - &mx * lam).norm() / mx.norm();
        max_residual = max_residual.max(r / scale);
        values.push(lam);
        vectors.set_column(col, &x);
    }
    if max_residual > 1e-8 {
        return Err(Error::Numerical(format!("eigensolve residual {max_residual:e} exceeds 1e-8")));
    }
    Ok(Eigenpairs { values, vectors, max_residual })
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelReport {
    pub weight: Vec<i64>,
    pub threshold: f64,
    /// Lowest eigenvalues of L_m (up to eight).
    pub low_eigenvalues: Vec<f64>,
    /// Kernel dimension, constants removed for m = 0.
    pub dim: usize,
    /// Count range when eigenvalues sit within a decade of the threshold.
    pub range: (usize, usize),
    pub ambiguous: bool,
    pub boundary_artifacts: usize,
    #[serde(skip)]
    pub basis: DMatrix<f64>,
}

/// Eigenvectors of L_m below `threshold`, boundary artifacts excluded.
pub fn kernel_of_l(state: &MetricState, op: &SectorOperator, threshold: f64) -> Result<KernelReport> {
    let kk = op.dim();
    let eig = eigensolve(&op.l, &op.mass, kk)?;
    let is_zero = op.weight.iter().all(|&a| a == 0);
    let g = state.grid();
    let outer: Vec<bool> = g.inner_mask(BOUNDARY_FRACTION).iter().map(|b| !b).collect();
    let mut cols = Vec::new();
    let mut artifacts = 0;
    for (i, &lam) in eig.values.iter().enumerate() {
        if lam >= threshold {
            break;
        }
        let c: Vec<f64> = eig.vectors.column(i).iter().copied().collect();
        let vals = op.basis.synthesize(state, &c, 0);
        let (mut tot, mut out) = (0.0, 0.0);
        for k in 0..state.len() {
            let w = g.weights[k] * state.det_hess[k] * vals[k].v * vals[k].v;
            tot += w;
            if outer[k] {
                out += w;
            }
        }
        if tot > 0.0 && out / tot > 0.5 {
            artifacts += 1;
            continue;
        }
        cols.push(i);
    }
    let offset = usize::from(is_zero);
    let lo = eig.values.iter().filter(|&&v| v < 0.1 * threshold).count();
    let hi = eig.values.iter().filter(|&&v| v < 10.0 * threshold).count();
    let ambiguous = lo != hi;
    let mut basis = DMatrix::zeros(kk, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        basis.set_column(j, &eig.vectors.column(i));
    }
    Ok(KernelReport {
        weight: op.weight.clone(),
        threshold,
        low_eigenvalues: eig.values.iter().take(8).copied().collect(),
        dim: cols.len().saturating_sub(offset),
        range: (lo.saturating_sub(offset), hi.saturating_sub(offset)),
        ambiguous,
        boundary_artifacts: artifacts,
        basis,
    })
}

/// Eigenvalues of v ↦ −Δ_m v − ⟨∂̄v, ∂̄f⟩ in ⟨⟨·,·⟩⟩_f, ascending.
pub fn weighted_laplacian_spectrum(op: &SectorOperator, k: usize) -> Result<Vec<f64>> {
    Ok(eigensolve(&op.laplacian, &op.mass_f, k.min(op.dim()))?.values)
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub weight: Vec<i64>,
    /// Smallest eigenvalue that is not the constant mode.
    pub gap: f64,
    /// Eigenvalues within `tol` of 1.
    pub multiplicity_at_one: usize,
}

pub fn spectral_gap(op: &SectorOperator, tol: f64) -> Result<GapReport> {
    let vals = weighted_laplacian_spectrum(op, 12)?;
    let skip = usize::from(op.weight.iter().all(|&a| a == 0));
    let gap = vals[skip];
    let multiplicity_at_one = vals[skip..].iter().filter(|v| (*v - 1.0).abs() < tol).count();
    Ok(GapReport { weight: op.weight.clone(), gap, multiplicity_at_one })
}

#[derive(Clone, Debug, Serialize)]
pub struct SectorSummary {
    pub weight: Vec<i64>,
    pub kernel: KernelReport,
    /// Eigenvalues of L̄_m on Ker L_m (constants removed for m = 0).
    pub lambdas: Vec<f64>,
    /// Imaginary parts; the restriction is real symmetric in this
    /// discretization.
    pub lambdas_imag: Vec<f64>,
    pub predicted: Vec<f64>,
    pub commutator: f64,
    pub bracket_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionReport {
    pub schema_version: u32,
    pub polytope: String,
    pub grid: String,
    pub gradient_norm: f64,
    pub weak_gradient_norm: f64,
    pub certified: bool,
    pub kernel_threshold: f64,
    pub sectors: Vec<SectorSummary>,
    pub total_dim: usize,
    pub total_range: (usize, usize),
    pub predicted_dim: usize,
    /// (λ, multiplicity) merged across sectors.
    pub lambdas: Vec<(f64, usize)>,
    pub lambda_sign: f64,
    /// max |λ − predicted| / max(|predicted|, 1) over matched pairs.
    pub max_lambda_error: f64,
    pub min_lambda: f64,
    pub max_lambda_imag: f64,
}

/// Options for `matsushima_decomposition`.
#[derive(Clone, Debug)]
pub struct DecompositionOptions {
    pub degree: usize,
    pub threshold: f64,
    pub certification: f64,
    pub seed: u64,
}

/// Kernel of L_m and the spectrum of L̄_m on it for every listed weight.
pub fn matsushima_decomposition(
    state: &MetricState,
    sectors: &[Vec<i64>],
    opts: &DecompositionOptions,
) -> Result<DecompositionReport> {
    let grad_f = state.grad_f();
    let zero = vec![0i64; state.dim()];
    let op0 = sector_ops::assemble_sector(state, &grad_f, &zero, opts.degree);
    let fv = sector_ops::first_variation(state, &grad_f, &op0);
    let ops: Vec<SectorOperator> = sectors
        .iter()
        .map(|m| if *m == zero { op0.clone() } else { sector_ops::assemble_sector(state, &grad_f, m, opts.degree) })
        .collect();
    decomposition_from_operators(state, &fv, &ops, opts)
}

/// As `matsushima_decomposition`, reusing assembled operators.
pub fn decomposition_from_operators(
    state: &MetricState,
    fv: &FirstVariation,
    ops: &[SectorOperator],
    opts: &DecompositionOptions,
) -> Result<DecompositionReport> {
    let p = state.polytope();
    let ext = p.extremal_affine();
    let n = state.dim();
    let zero = vec![0i64; n];
    let certified = fv.discrete_norm <= opts.certification;
    let mut summaries = Vec::new();
    for op in ops {
        let m = &op.weight;
        let kernel = kernel_of_l(state, op, opts.threshold)?;
        let lambdas = restricted_lbar(state, op, &kernel)?;
        let predicted = if *m == zero {
            vec![0.0; n]
        } else if p.demazure_roots().iter().any(|r| r.weight == *m) {
            let b = &ext.ell.gradient;
            vec![LAMBDA_SIGN * b.iter().zip(m).map(|(x, &a)| x * a as f64).sum::<f64>()]
        } else {
            Vec::new()
        };
        summaries.push(SectorSummary {
            weight: m.clone(),
            lambdas_imag: vec![0.0; lambdas.len()],
            lambdas,
            predicted,
            commutator: sector_ops::commutator_residual(op, opts.seed),
            bracket_residual: sector_ops::bracket_identity_check(op),
            kernel,
        });
    }
    let total_dim = summaries.iter().map(|s| s.kernel.dim).sum();
    let total_range = summaries.iter().fold((0, 0), |acc, s| (acc.0 + s.kernel.range.0, acc.1 + s.kernel.range.1));
    let mut all: Vec<f64> = summaries.iter().flat_map(|s| s.lambdas.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    let mut merged: Vec<(f64, usize)> = Vec::new();
    for v in all {
        match merged.last_mut() {
            Some((c, k)) if (v - *c).abs() <= 1e-6 * c.abs().max(1.0) => *k += 1,
            _ => merged.push((v, 1)),
        }
    }
    let mut max_err = 0.0f64;
    for s in &summaries {
        if s.lambdas.len() == s.predicted.len() {
            let mut a = s.lambdas.clone();
            let mut b = s.predicted.clone();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            for (x, y) in a.iter().zip(&b) {
                max_err = max_err.max((x - y).abs() / y.abs().max(1.0));
            }
        } else {
            max_err = f64::INFINITY;
        }
    }
    let min_lambda = summaries.iter().flat_map(|s| s.lambdas.iter().copied()).fold(f64::INFINITY, f64::min);
    Ok(DecompositionReport {
        schema_version: REPORT_SCHEMA,
        polytope: p.identifier(),
        grid: state.grid().identifier(),
        gradient_norm: fv.discrete_norm,
        weak_gradient_norm: fv.norm,
        certified: certified && summaries.iter().all(|s| !s.kernel.ambiguous),
        kernel_threshold: opts.threshold,
        total_dim,
        total_range,
        predicted_dim: p.dim_automorphisms(),
        lambdas: merged,
        lambda_sign: LAMBDA_SIGN,
        max_lambda_error: max_err,
        min_lambda: if min_lambda.is_finite() { min_lambda } else { 0.0 },
        max_lambda_imag: 0.0,
        sectors: summaries,
    })
}

/// Eigenvalues of the ⟨⟨·,·⟩⟩-projection of L̄_m onto the computed kernel.
pub fn restricted_lbar(state: &MetricState, op: &SectorOperator, kernel: &KernelReport) -> Result<Vec<f64>> {
    let mut x = kernel.basis.clone();
    if x.ncols() == 0 {
        return Ok(Vec::new());
    }
    if op.weight.iter().all(|&a| a == 0) {
        // remove the constants
        let c1 = op.project(state, &vec![1.0; state.len()]);
        let mc1 = &op.mass * &c1;
        let norm = c1.dot(&mc1);
        let proj = x.tr_mul(&mc1) / norm;
        x -= &c1 * proj.transpose();
        let gram = x.tr_mul(&(&op.mass * &x));
        let eig = SymmetricEigen::new(gram.clone());
        let mut keep: Vec<usize> = (0..gram.nrows()).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
        keep.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
        let mut y = DMatrix::zeros(x.nrows(), keep.len());
        for (j, &i) in keep.iter().enumerate() {
            let v: DVector<f64> = &x * eig.eigenvectors.column(i) / eig.eigenvalues[i].sqrt();
            y.set_column(j, &v);
        }
        x = y;
        if x.ncols() == 0 {
            return Ok(Vec::new());
        }
    }
    let b = x.transpose() * &op.lbar * &x;
    let gram = x.transpose() * &op.mass * &x;
    let mut vals = eigensolve(&b, &gram, b.nrows())?.values;
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}
