use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use toric_kahler::flow::{self, FlowClock, FlowStatus, FlowTrace};
use toric_kahler::kahler_state::MetricState;
use toric_kahler::spectra::{self, DecompositionOptions};
use toric_kahler::toric::{rat_string, LatticePolytope};

use crate::checks::{self, Lab};
use crate::config::{RunConfig, OUTPUT_SCHEMA};
use crate::CliError;

/// A flow checkpoint: the state plus the integrator position.
#[derive(Serialize, Deserialize)]
pub struct FlowCheckpoint {
    pub schema_version: u32,
    pub config_digest: String,
    pub clock: FlowClock,
    pub state: Value,
}

fn envelope(cfg: &RunConfig, kind: &str, body: Value) -> Value {
    json!({
        "schema_version": OUTPUT_SCHEMA,
        "kind": kind,
        "config_digest": cfg.digest(),
        "config": cfg,
        "result": body,
    })
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Io(format!("{}: {e}", cfg.out.display())))?;
    Ok(cfg.out.clone())
}

/// Load either a bare state checkpoint or a flow checkpoint.
pub fn load_state(path: &Path) -> Result<(MetricState, Option<FlowClock>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let bad = |e: toric_kahler::Error| CliError::Input(format!("{}: {e}", path.display()));
    if v.get("clock").is_some() {
        let ck: FlowCheckpoint =
            serde_json::from_value(v).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let state = MetricState::from_checkpoint_str(&ck.state.to_string()).map_err(bad)?;
        Ok((state, Some(ck.clock)))
    } else {
        Ok((MetricState::from_checkpoint_str(&text).map_err(bad)?, None))
    }
}

fn checkpoint_value(cfg: &RunConfig, clock: &FlowClock, state: &MetricState) -> String {
    let ck = FlowCheckpoint {
        schema_version: OUTPUT_SCHEMA,
        config_digest: cfg.digest(),
        clock: *clock,
        state: serde_json::from_str(&state.checkpoint_string()).expect("checkpoint is JSON"),
    };
    serde_json::to_string(&ck).expect("checkpoint serializes")
}

pub fn analyze(cfg: &RunConfig, p: &LatticePolytope) -> Result<i32, CliError> {
    let dir = out_dir(cfg)?;
    let ex = p.extremal_affine();
    let roots = p.demazure_roots();
    let vol = p.moments(0).volume().clone();
    let body = json!({
        "polytope": { "name": p.name, "id": p.identifier(), "dim": p.dim, "vertices": p.vertices },
        "volume": p.volume(),
        "volume_exact": rat_string(&vol),
        "barycenter": ex.barycenter,
        "barycenter_exact": ex.barycenter_exact.iter().map(rat_string).collect::<Vec<_>>(),
        "demazure_roots": roots.iter().map(|r| json!({ "weight": r.weight, "facet": r.facet_index })).collect::<Vec<_>>(),
        "dim_automorphisms": p.dim_automorphisms(),
        "ell": { "constant": ex.ell.constant, "gradient": ex.ell.gradient },
        "ell_exact": ex.ell_exact.iter().map(rat_string).collect::<Vec<_>>(),
        "obstruction_margin": ex.obstruction_margin,
        "obstruction_margin_exact": rat_string(&ex.margin_exact),
        "ell_norm_sq": ex.norm_sq,
        "ell_norm_sq_exact": rat_string(&ex.norm_sq_exact),
        "predicted_lambdas": ex.predicted_lambdas.iter().map(|(w, l)| json!({ "weight": w, "lambda": l })).collect::<Vec<_>>(),
    });
    write_json(&dir.join("analysis.json"), &envelope(cfg, "analysis", body))?;
    println!("polytope      {} ({})", p.name, p.identifier());
    println!("volume        {}", rat_string(&vol));
    let bary: Vec<String> = ex.barycenter_exact.iter().map(rat_string).collect();
    println!("barycenter    ({})", bary.join(", "));
    let ell: Vec<String> = ex.ell_exact.iter().map(rat_string).collect();
    println!("ell           [{}]  (constant, gradient)", ell.join(", "));
    println!("margin        {}", rat_string(&ex.margin_exact));
    println!("|ell|^2       {}", rat_string(&ex.norm_sq_exact));
    println!("roots         {}", roots.len());
    for (w, l) in &ex.predicted_lambdas {
        println!("  {w:?}  predicted lambda {:.6}", l + 0.0);
    }
    Ok(0)
}

pub fn flow(cfg: &RunConfig, p: &LatticePolytope, state_path: Option<&Path>) -> Result<i32, CliError> {
    let dir = out_dir(cfg)?;
    let (state, clock) = match state_path {
        Some(path) => load_state(path)?,
        None => (cfg.initial_state(p)?, None),
    };
    if state.polytope().identifier() != p.identifier() {
        return Err(CliError::Input("state polytope differs from the configured polytope".into()));
    }
    let clock = clock.unwrap_or_else(|| FlowClock::start(&cfg.flow));
    let ck_dir = dir.join("checkpoints");
    if cfg.flow.checkpoint_every > 0 {
        fs::create_dir_all(&ck_dir).map_err(|e| CliError::Io(format!("{}: {e}", ck_dir.display())))?;
    }
    // Checkpoint files are written off the stepping thread.
    let (tx, rx) = mpsc::channel::<(PathBuf, String)>();
    let writer = thread::spawn(move || -> Result<(), String> {
        for (path, text) in rx {
            fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
        }
        Ok(())
    });
    let out = {
        let mut sink = |c: &FlowClock, s: &MetricState| {
            let path = ck_dir.join(format!("step_{:06}.json", c.step));
            let _ = tx.send((path, checkpoint_value(cfg, c, s)));
        };
        flow::run_flow_from(&state, &cfg.flow, clock, &mut sink)
    };
    drop(tx);
    let write_result = writer.join().map_err(|_| CliError::Io("checkpoint writer panicked".into()))?;
    let trace_path = dir.join("trace.csv");
    let mut csv = format!("# schema_version={} config_digest={}\n", OUTPUT_SCHEMA, cfg.digest());
    csv.push_str(&out.trace.to_csv());
    fs::write(&trace_path, csv).map_err(|e| CliError::Io(format!("{}: {e}", trace_path.display())))?;
    write_result.map_err(CliError::Io)?;
    fs::write(dir.join("final_state.json"), checkpoint_value(cfg, &out.clock, &out.state))
        .map_err(|e| CliError::Io(e.to_string()))?;

    let status = out.trace.status.expect("run sets a status");
    let sectors = cfg.sectors.clone().unwrap_or_default();
    let degree = cfg.operator_degree.unwrap_or(12);
    let crit = flow::criticality_report(&out.state, &sectors, degree, cfg.thresholds.certification, cfg.seed);
    let last = out.trace.records.last().expect("initial record");
    let body = json!({
        "status": status.name(),
        "steps": out.clock.step,
        "t": out.clock.t,
        "final_energy": last.energy,
        "final_grad_norm": last.grad_norm,
        "records": out.trace.records.len(),
        "criticality": crit,
        "trace": "trace.csv",
        "final_state": "final_state.json",
    });
    write_json(&dir.join("flow_report.json"), &envelope(cfg, "flow", body))?;
    println!(
        "status {}  steps {}  t {:.6}  E_RC {:.6e}  gradient {:.3e}  certified {}",
        status.name(),
        out.clock.step,
        out.clock.t,
        last.energy,
        crit.gradient_norm,
        crit.certified
    );
    Ok(match status {
        FlowStatus::Converged | FlowStatus::MaxTime => 0,
        FlowStatus::StepUnderflow | FlowStatus::ConvexityLoss => 3,
    })
}

pub fn spectrum(cfg: &RunConfig, p: &LatticePolytope, state_path: Option<&Path>) -> Result<i32, CliError> {
    let dir = out_dir(cfg)?;
    let state = match state_path {
        Some(path) => load_state(path)?.0,
        None => cfg.initial_state(p)?,
    };
    let sectors = cfg.sectors.clone().unwrap_or_default();
    let opts = DecompositionOptions {
        degree: cfg.operator_degree.unwrap_or(12),
        threshold: cfg.thresholds.kernel,
        certification: cfg.thresholds.certification,
        seed: cfg.seed,
    };
    let report = spectra::matsushima_decomposition(&state, &sectors, &opts).map_err(CliError::Numerical)?;
    write_json(&dir.join("spectrum.json"), &envelope(cfg, "spectrum", serde_json::to_value(&report).expect("report")))?;
    println!(
        "gradient {:.3e}  certified {}  kernel dimension {} (range {:?}, expected {})",
        report.gradient_norm, report.certified, report.total_dim, report.total_range, report.predicted_dim
    );
    println!("{:<12} {:>6} {:>16} {:>16} {:>12}", "weight", "kernel", "lambda", "predicted", "commutator");
    for s in &report.sectors {
        let rows = s.lambdas.len().max(s.predicted.len()).max(1);
        for i in 0..rows {
            let cell = |v: Option<&f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.8}"));
            let mut line = String::new();
            if i == 0 {
                let _ = write!(line, "{:<12} {:>6}", format!("{:?}", s.weight), s.kernel.dim);
            } else {
                let _ = write!(line, "{:<12} {:>6}", "", "");
            }
            let _ = write!(line, " {:>16} {:>16}", cell(s.lambdas.get(i)), cell(s.predicted.get(i)));
            if i == 0 {
                let _ = write!(line, " {:>12.3e}", s.commutator);
            }
            println!("{line}");
        }
    }
    Ok(0)
}

pub fn validate(cfg: &RunConfig) -> Result<i32, CliError> {
    let dir = out_dir(cfg)?;
    let mut lab = Lab::new(cfg.seed, cfg.validate.bracket_sign, cfg.thresholds.certification, cfg.thresholds.kernel);
    let mut results = Vec::new();
    for &id in &cfg.validate.criteria {
        let c = lab.run(id);
        println!("{}", c.summary());
        results.push(c);
    }
    let oracle = checks::oracle_consistency(cfg.seed).map_err(CliError::Numerical)?;
    for c in &oracle {
        println!("oracle {} {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
    }
    let pass = results.iter().all(|c| c.pass) && oracle.iter().all(|c| c.pass);
    let body = json!({ "pass": pass, "criteria": results, "oracle": oracle });
    write_json(&dir.join("validation.json"), &envelope(cfg, "validation", body))?;
    Ok(if pass { 0 } else { 1 })
}

/// Parse a trace file back into records (comment lines skipped).
pub fn read_trace(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with(FlowTrace::HEADER))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}
