use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use toric_kahler::flow::FlowConfig;
use toric_kahler::kahler_state::{MetricState, Profile};
use toric_kahler::mesh::{Grid, QuadratureRule};
use toric_kahler::sector_ops::BRACKET_SIGN;
use toric_kahler::spectra::KERNEL_THRESHOLD;
use toric_kahler::toric::LatticePolytope;

use crate::CliError;

/// Schema version carried by every file the CLI writes.
pub const OUTPUT_SCHEMA: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "R")]
    pub r: Option<f64>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub rule: Option<QuadratureRule>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    Reference,
    Round,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateConfig {
    pub start: Start,
    /// Degree of the polynomial correction space the flow evolves in.
    pub degree: Option<usize>,
    /// Fixed perturbations added to the start potential (paper units).
    pub perturbations: Vec<Profile>,
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig { start: Start::Reference, degree: None, perturbations: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub certification: f64,
    pub kernel: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { certification: 1e-6, kernel: KERNEL_THRESHOLD }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// Criteria run by `validate`.
    pub criteria: Vec<u32>,
    /// Sign used by the bracket-identity checks. Anything other than the
    /// library constant is a negative control and must fail.
    pub bracket_sign: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig { criteria: vec![1, 4, 5, 7], bracket_sign: BRACKET_SIGN }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in fixture name or path to a polytope file.
    pub polytope: String,
    pub grid: GridConfig,
    pub state: StateConfig,
    pub flow: FlowConfig,
    /// Polynomial degree of the sector operator bases.
    pub operator_degree: Option<usize>,
    /// Torus weights to analyse; default {0} ∪ Demazure roots.
    pub sectors: Option<Vec<Vec<i64>>>,
    pub thresholds: Thresholds,
    pub validate: ValidateConfig,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            polytope: "cp1".into(),
            grid: GridConfig::default(),
            state: StateConfig::default(),
            flow: FlowConfig::default(),
            operator_degree: None,
            sectors: None,
            thresholds: Thresholds::default(),
            validate: ValidateConfig::default(),
            out: PathBuf::from("out"),
            seed: 1,
        }
    }
}

/// The trapezoid rule is spectrally accurate for the smooth, exponentially
/// decaying integrands on the moment grid; Simpson is kept for comparison.
pub const DEFAULT_RULE: QuadratureRule = QuadratureRule::Trapezoid;

pub fn default_grid(dim: usize) -> (f64, usize) {
    if dim == 1 {
        (8.0, 1025)
    } else {
        (10.0, 161)
    }
}

pub fn default_state_degree(dim: usize) -> usize {
    if dim == 1 {
        24
    } else {
        20
    }
}

pub fn default_operator_degree(dim: usize) -> usize {
    if dim == 1 {
        16
    } else {
        12
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn load_polytope(&self) -> Result<LatticePolytope, CliError> {
        let p = Path::new(&self.polytope);
        let res = if p.exists() { LatticePolytope::load(p) } else { LatticePolytope::fixture(&self.polytope) };
        res.map_err(|e| CliError::Input(format!("polytope '{}': {e}", self.polytope)))
    }

    /// Fill every optional field so the dumped config is explicit.
    pub fn resolve(mut self) -> Result<(Self, LatticePolytope), CliError> {
        let p = self.load_polytope()?;
        let n = p.dim;
        let (r, nn) = default_grid(n);
        self.grid.r.get_or_insert(r);
        self.grid.n.get_or_insert(nn);
        self.grid.rule.get_or_insert(DEFAULT_RULE);
        self.state.degree.get_or_insert(default_state_degree(n));
        self.operator_degree.get_or_insert(default_operator_degree(n));
        if self.sectors.is_none() {
            let mut s = vec![vec![0i64; n]];
            s.extend(p.demazure_roots().into_iter().map(|r| r.weight));
            self.sectors = Some(s);
        }
        self.check(n)?;
        Ok((self, p))
    }

    fn check(&self, dim: usize) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Input(m.to_string()));
        if !(self.thresholds.certification > 0.0 && self.thresholds.kernel > 0.0 && self.flow.tol_conv > 0.0) {
            return bad("thresholds must be positive");
        }
        if !(self.flow.dt0 > 0.0) || !(self.flow.t_max >= 0.0) {
            return bad("flow.dt0 must be positive and flow.t_max non-negative");
        }
        if let Some(s) = &self.sectors {
            if s.iter().any(|m| m.len() != dim) {
                return bad("every sector weight needs one entry per dimension");
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let h = Sha256::digest(text.as_bytes());
        h.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn grid(&self, dim: usize) -> Result<Arc<Grid>, CliError> {
        let (r, nn) = default_grid(dim);
        Grid::new(dim, self.grid.r.unwrap_or(r), self.grid.n.unwrap_or(nn), self.grid.rule.unwrap_or(DEFAULT_RULE))
            .map(Arc::new)
            .map_err(|e| CliError::Input(format!("grid: {e}")))
    }

    /// The configured start state.
    pub fn initial_state(&self, p: &LatticePolytope) -> Result<MetricState, CliError> {
        let grid = self.grid(p.dim)?;
        let deg = self.state.degree.unwrap_or(default_state_degree(p.dim));
        let mut s = match self.state.start {
            Start::Reference => MetricState::reference(p, grid, deg),
            Start::Round => MetricState::round_fixture(p, grid, deg),
        }
        .map_err(|e| CliError::Input(format!("start state: {e}")))?;
        for psi in &self.state.perturbations {
            s = s.perturb(psi, 1.0).map_err(CliError::Numerical)?;
        }
        Ok(s)
    }
}

/// "0,1;-1,0" → [[0,1],[-1,0]]
pub fn parse_sectors(text: &str) -> Result<Vec<Vec<i64>>, CliError> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|w| {
            w.split(',')
                .map(|c| c.trim().parse::<i64>().map_err(|e| CliError::Input(format!("sector '{w}': {e}"))))
                .collect()
        })
        .collect()
}
