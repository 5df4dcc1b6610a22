//! Result bundle: factor matrices, weight vectors, time-mode traces and a
//! JSON report in one directory.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use cmtf_core::io::{format_f64, format_matrix, format_vector, read_matrix, read_vector};
use cmtf_core::kruskal::{CoupledModel, KruskalModel};
use cmtf_core::DenseMatrix;
use serde_json::Value;

pub const FACTOR_NAMES: [&str; 4] = ["A", "B", "C", "V"];
pub const OBJECTIVE_RTOL: f64 = 1e-8;

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_factors(
    dir: &Path,
    factors: &[DenseMatrix],
    lambda: &[f64],
    sigma: Option<&[f64]>,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, f) in FACTOR_NAMES.iter().zip(factors) {
        write(&dir.join(format!("factor_{name}.txt")), &format_matrix(f))?;
    }
    write(&dir.join("weights_lambda.txt"), &format_vector(lambda))?;
    if let Some(s) = sigma {
        write(&dir.join("weights_sigma.txt"), &format_vector(s))?;
    }
    let traces = dir.join("traces");
    fs::create_dir_all(&traces)?;
    let time = &factors[1];
    for r in 0..time.cols() {
        let mut text = String::from("# time value\n");
        for (j, v) in time.col(r).iter().enumerate() {
            text.push_str(&format!("{j} {}\n", format_f64(*v)));
        }
        write(&traces.join(format!("component_{r}.txt")), &text)?;
    }
    Ok(())
}

pub fn write_kruskal(dir: &Path, m: &KruskalModel) -> Result<()> {
    write_factors(dir, m.factors(), m.weights(), None)
}

pub fn write_coupled(dir: &Path, m: &CoupledModel) -> Result<()> {
    write_factors(
        dir,
        m.factors(),
        m.tensor_weights(),
        Some(m.matrix_weights()),
    )
}

fn load(dir: &Path, name: &str) -> Result<DenseMatrix> {
    let p = dir.join(format!("factor_{name}.txt"));
    read_matrix(&p).with_context(|| format!("reading {}", p.display()))
}

pub fn read_kruskal(dir: &Path) -> Result<KruskalModel> {
    let w = read_vector(&dir.join("weights_lambda.txt"))?;
    Ok(KruskalModel::new(
        w,
        [load(dir, "A")?, load(dir, "B")?, load(dir, "C")?],
    )?)
}

pub fn read_coupled(dir: &Path) -> Result<CoupledModel> {
    let l = read_vector(&dir.join("weights_lambda.txt"))?;
    let s = read_vector(&dir.join("weights_sigma.txt"))?;
    let f = [
        load(dir, "A")?,
        load(dir, "B")?,
        load(dir, "C")?,
        load(dir, "V")?,
    ];
    Ok(CoupledModel::new(l, s, f)?)
}

pub fn write_report(dir: &Path, doc: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    write(&dir.join("report.json"), &text)
}

/// Outcome of recomputing the objective from the written files.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveCheck {
    pub reported: f64,
    pub recomputed: f64,
}

impl ObjectiveCheck {
    pub fn relative_difference(&self) -> f64 {
        (self.recomputed - self.reported).abs() / self.reported.abs().max(f64::MIN_POSITIVE)
    }

    pub fn passed(&self) -> bool {
        self.relative_difference() <= OBJECTIVE_RTOL || self.recomputed == self.reported
    }

    pub fn to_json(self) -> Value {
        serde_json::json!({
            "reported": self.reported,
            "recomputed": self.recomputed,
            "relative_difference": self.relative_difference(),
            "tolerance": OBJECTIVE_RTOL,
            "passed": self.passed(),
        })
    }
}
