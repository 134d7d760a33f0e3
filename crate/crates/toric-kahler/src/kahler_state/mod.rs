//! Torus-invariant metric states on a truncated grid.

pub mod base;
pub mod basis;
pub mod profile;
mod state;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Grid, QuadratureRule};
use crate::toric::LatticePolytope;

pub use base::{BaseJet, LseBase};
pub use basis::{Jet, PolyBasis};
pub use profile::Profile;
pub use state::{BasisJets, Frame, MetricState, POTENTIAL_UNIT};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format_version: u32,
    polytope_id: String,
    polytope: PolytopeRecord,
    grid_id: String,
    grid: GridRecord,
    degree: usize,
    base_points: Vec<[f64; 2]>,
    base_log_weights: Vec<u64>,
    coeffs: Vec<u64>,
    extras: Vec<Profile>,
    phi: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct PolytopeRecord {
    name: String,
    dim: usize,
    vertices: Vec<Vec<i64>>,
}

#[derive(Serialize, Deserialize)]
struct GridRecord {
    dim: usize,
    half_width: u64,
    points_per_axis: usize,
    rule: QuadratureRule,
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn unbits(v: &[u64]) -> Vec<f64> {
    v.iter().map(|&b| f64::from_bits(b)).collect()
}

impl MetricState {
    /// Structured-text checkpoint. Every float is stored by its bit pattern so
    /// a round trip is exact.
    pub fn checkpoint_string(&self) -> String {
        let p = self.polytope();
        let g = self.grid();
        let doc = CheckpointDoc {
            format_version: CHECKPOINT_VERSION,
            polytope_id: p.identifier(),
            polytope: PolytopeRecord { name: p.name.clone(), dim: p.dim, vertices: p.vertices.clone() },
            grid_id: g.identifier(),
            grid: GridRecord {
                dim: g.dim,
                half_width: g.half_width.to_bits(),
                points_per_axis: g.points_per_axis,
                rule: g.rule,
            },
            degree: self.frame.degree,
            base_points: self.frame.base.points.clone(),
            base_log_weights: bits(&self.frame.base.log_weights),
            coeffs: bits(&self.coeffs),
            extras: self.extras.clone(),
            phi: bits(&self.phi),
        };
        serde_json::to_string(&doc).expect("checkpoint serializes")
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.checkpoint_string())?;
        Ok(())
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let doc: CheckpointDoc = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if doc.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {}", doc.format_version)));
        }
        let p = LatticePolytope::from_vertices(&doc.polytope.name, doc.polytope.dim, doc.polytope.vertices)?;
        if p.identifier() != doc.polytope_id {
            return Err(Error::Checkpoint("polytope identifier mismatch".into()));
        }
        let g = Grid::new(doc.grid.dim, f64::from_bits(doc.grid.half_width), doc.grid.points_per_axis, doc.grid.rule)?;
        if g.identifier() != doc.grid_id {
            return Err(Error::Checkpoint("grid identifier mismatch".into()));
        }
        let log_weights = unbits(&doc.base_log_weights);
        if log_weights.len() != doc.base_points.len() {
            return Err(Error::Checkpoint("base weights and points differ in length".into()));
        }
        let pts: Vec<Vec<i64>> =
            doc.base_points.iter().map(|a| a[..p.dim].iter().map(|&c| c as i64).collect()).collect();
        let mut base = LseBase::new(&p, pts, &vec![1.0; log_weights.len()]);
        base.log_weights = log_weights;
        let frame = Arc::new(Frame::new(&p, Arc::new(g), base, doc.degree)?);
        let coeffs = unbits(&doc.coeffs);
        if !coeffs.is_empty() && coeffs.len() != frame.basis().len() {
            return Err(Error::Shape { expected: frame.basis().len(), got: coeffs.len() });
        }
        let state = MetricState::assemble(frame, coeffs, doc.extras, None)?;
        let phi = unbits(&doc.phi);
        if phi.len() != state.phi.len() {
            return Err(Error::Shape { expected: state.phi.len(), got: phi.len() });
        }
        if bits(&phi) != bits(&state.phi) {
            return Err(Error::Checkpoint("stored potential does not match its reconstruction".into()));
        }
        Ok(state)
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint_str(&text)
    }
}
