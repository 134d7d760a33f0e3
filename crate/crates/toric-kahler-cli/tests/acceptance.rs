//! Runs the full validation suite and prints one line per criterion. Built
//! without the libtest harness so the lines are shown on success too.

use std::fs;
use std::process::Command;

use toric_kahler::sector_ops::BRACKET_SIGN;
use toric_kahler::spectra::KERNEL_THRESHOLD;
use toric_kahler_cli::checks::{self, Lab};

fn determinism() -> (bool, String) {
    let tmp = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for _ in 0..2 {
        let o = Command::new(env!("CARGO_BIN_EXE_toric-kahler"))
            .args(["validate", "--out", "v"])
            .current_dir(tmp.path())
            .output()
            .unwrap();
        if o.status.code() != Some(0) {
            return (false, format!("validate exited with {:?}", o.status.code()));
        }
        reports.push(fs::read(tmp.path().join("v/validation.json")).unwrap());
    }
    let same = reports[0] == reports[1];
    (same, format!("{} bytes, identical {same}", reports[0].len()))
}

fn main() {
    let mut lab = Lab::new(1, BRACKET_SIGN, 1e-6, KERNEL_THRESHOLD);
    let mut failed = Vec::new();
    for id in 1..=10 {
        let c = lab.run(id);
        println!("{}", c.summary());
        for n in &c.notes {
            println!("    {n}");
        }
        if !c.pass {
            failed.push(id);
        }
    }
    for c in checks::oracle_consistency(1).unwrap() {
        println!("oracle {} {} = {:.3e}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value.unwrap_or(f64::NAN));
    }
    let (ok, detail) = determinism();
    println!("criterion 11 {} repeated validate reports ({detail})", if ok { "PASS" } else { "FAIL" });
    if !ok {
        failed.push(11);
    }
    if !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
