use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use cmtf_core::acmtf::{acmtf_objective, fit_acmtf, AcmtfConfig, ComponentLabel};
use cmtf_core::cp::{fit_cp, CpConfig};
use cmtf_core::io::{
    format_labels, format_matrix, format_synth_spec, format_tensor, read_labels, read_matrix,
    read_synth_spec, read_tensor,
};
use cmtf_core::optimizer::OptimizerConfig;
use cmtf_core::parallel::Execution;
use cmtf_core::preprocess::{prepare_coupled, tensor_protocol, PreprocessRecord};
use cmtf_core::report::FitReport;
use cmtf_core::stats::{significance_for_factor, ComponentSignificance, GroupLabels, TTestKind};
use cmtf_core::synthetic::{generate, paper_shaped_preset};
use serde_json::{json, Value};

use crate::args::{AcmtfArgs, CpArgs, FitArgs, Preset, StatsArgs, SynthArgs, TestKindArg};
use crate::bundle::{self, ObjectiveCheck};

/// Command failure, mapped to the process exit status.
#[derive(Debug)]
pub enum Failure {
    Data(anyhow::Error),
    Fit(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Data(_) => 3,
            Failure::Fit(_) => 4,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Data(e) | Failure::Fit(e) => e,
        }
    }
}

impl From<cmtf_core::Error> for Failure {
    fn from(e: cmtf_core::Error) -> Self {
        match e {
            cmtf_core::Error::FitFailure(_) | cmtf_core::Error::DegenerateModel(_) => {
                Failure::Fit(e.into())
            }
            other => Failure::Data(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = Result<(), Failure>;

fn reading<T>(path: &Path, r: cmtf_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| {
        Failure::Data(anyhow::Error::new(e).context(format!("reading {}", path.display())))
    })
}

fn test_kind(k: TestKindArg) -> TTestKind {
    match k {
        TestKindArg::Pooled => TTestKind::Pooled,
        TestKindArg::Welch => TTestKind::Welch,
    }
}

fn optimizer(fit: &FitArgs) -> OptimizerConfig {
    OptimizerConfig {
        max_iterations: fit.max_iters,
        rel_f_tol: fit.tol_rel_f,
        ..OptimizerConfig::default()
    }
}

fn execution(fit: &FitArgs) -> Execution {
    if fit.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn load_groups(fit: &FitArgs, subjects: usize) -> Result<Option<GroupLabels>, Failure> {
    let Some(path) = &fit.groups else {
        return Ok(None);
    };
    let labels = reading(path, read_labels(path))?;
    if labels.len() != subjects {
        return Err(Failure::Data(anyhow!(
            "{} has {} labels but the data has {subjects} subjects",
            path.display(),
            labels.len()
        )));
    }
    Ok(Some(labels))
}

fn check_objective(reported: Option<f64>, recomputed: f64) -> Result<ObjectiveCheck, Failure> {
    let reported =
        reported.ok_or_else(|| Failure::Fit(anyhow!("fit report has no model objective")))?;
    let check = ObjectiveCheck {
        reported,
        recomputed,
    };
    if !check.passed() {
        return Err(Failure::Fit(anyhow!(
            "objective recomputed from the bundle ({recomputed}) differs from the reported {reported}"
        )));
    }
    Ok(check)
}

fn sq_residual(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn fit_summary(out: &mut String, report: &FitReport) {
    let best = report.best_start.unwrap_or(0);
    let _ = writeln!(
        out,
        "{} rank {}: best start {best} of {}, objective {:.10e}",
        report.model,
        report.rank,
        report.starts.len(),
        report.model_objective.unwrap_or(f64::NAN)
    );
    let converged = report.starts.iter().filter(|s| s.converged).count();
    let _ = writeln!(out, "converged starts: {converged}/{}", report.starts.len());
    if let Some(u) = &report.uniqueness {
        let _ = writeln!(
            out,
            "near-best starts: {}, min FMS to best {:.6} ({})",
            u.cluster.len(),
            u.min_fms,
            if u.unique { "unique" } else { "not unique" }
        );
    }
    if let Some(c) = &report.congruence {
        if c.degenerate {
            let _ = writeln!(
                out,
                "warning: max cross-component congruence {:.4}",
                c.max_congruence
            );
        }
    }
}

fn significance_table(out: &mut String, s: &ComponentSignificance) {
    let kind = match s.kind {
        TTestKind::Pooled => "pooled",
        TTestKind::Welch => "welch",
    };
    let _ = writeln!(out, "group tests ({kind} t, alpha {}):", s.alpha);
    let _ = writeln!(
        out,
        "component t df p p_bonferroni significant significant_bonferroni"
    );
    for c in &s.components {
        let _ = writeln!(
            out,
            "{} {:.6} {:.4} {:.6e} {:.6e} {} {}",
            c.component, c.t, c.df, c.p, c.p_bonferroni, c.significant, c.significant_bonferroni
        );
    }
}

pub fn cmd_cp(a: CpArgs) -> CmdResult {
    let x = reading(&a.input, read_tensor(&a.input))?;
    let groups = load_groups(&a.fit, x.dims()[0])?;
    let (xp, record) = if a.fit.no_preprocess {
        (x, PreprocessRecord::default())
    } else {
        tensor_protocol(&x)?
    };
    let cfg = CpConfig {
        n_starts: a.fit.inits.unwrap_or(10),
        seed: a.fit.seed,
        optimizer: optimizer(&a.fit),
        execution: execution(&a.fit),
        ..CpConfig::new(a.rank)
    };
    log::info!("fitting CP rank {} with {} starts", cfg.rank, cfg.n_starts);
    let fit = fit_cp(&xp, &cfg)?;
    let sig = groups
        .as_ref()
        .map(|g| significance_for_factor(&fit.model.factors()[0], g, test_kind(a.fit.ttest)))
        .transpose()?;

    let mut out = String::new();
    fit_summary(&mut out, &fit.report);
    let _ = writeln!(out, "component weight");
    for (r, w) in fit.model.weights().iter().enumerate() {
        let _ = writeln!(out, "{r} {w:.10e}");
    }
    if let Some(s) = &sig {
        significance_table(&mut out, s);
    }

    if let Some(dir) = &a.fit.out {
        bundle::write_kruskal(dir, &fit.model)?;
        let back = bundle::read_kruskal(dir)?;
        let check = check_objective(
            fit.report.model_objective,
            sq_residual(xp.as_slice(), back.reconstruct().as_slice()),
        )?;
        let doc = json!({
            "command": "cp",
            "config": cfg,
            "data": { "tensor_dims": xp.dims() },
            "preprocess": { "tensor": record },
            "fit": fit.report,
            "significance": sig,
            "objective_check": check.to_json(),
        });
        bundle::write_report(dir, &doc)?;
    }
    print!("{out}");
    Ok(())
}

pub fn cmd_acmtf(a: AcmtfArgs) -> CmdResult {
    let x = reading(&a.tensor, read_tensor(&a.tensor))?;
    let y = reading(&a.matrix, read_matrix(&a.matrix))?;
    if x.dims()[0] != y.rows() {
        return Err(Failure::Data(anyhow!(
            "subject counts differ: tensor has {} subjects, matrix has {} rows",
            x.dims()[0],
            y.rows()
        )));
    }
    let groups = load_groups(&a.fit, x.dims()[0])?;
    let (xp, yp, rx, ry) = prepare_coupled(&x, &y, !a.fit.no_preprocess, !a.no_unit_norm)?;
    let cfg = AcmtfConfig {
        beta: a.beta,
        share_threshold: a.share_threshold,
        n_starts: a.fit.inits.unwrap_or(32),
        seed: a.fit.seed,
        optimizer: optimizer(&a.fit),
        execution: execution(&a.fit),
        ..AcmtfConfig::new(a.rank)
    };
    log::info!(
        "fitting ACMTF rank {} with {} starts",
        cfg.rank,
        cfg.n_starts
    );
    let fit = fit_acmtf(&xp, &yp, &cfg)?;
    let sig = groups
        .as_ref()
        .map(|g| significance_for_factor(&fit.model.factors()[0], g, test_kind(a.fit.ttest)))
        .transpose()?;

    let mut out = String::new();
    fit_summary(&mut out, &fit.report);
    let _ = writeln!(out, "component lambda sigma label");
    for w in &fit.report.weights {
        let _ = writeln!(
            out,
            "{} {:.10e} {:.10e} {}",
            w.component, w.lambda, w.sigma, w.label
        );
    }
    if let Some(s) = &sig {
        significance_table(&mut out, s);
    }

    if let Some(dir) = &a.fit.out {
        bundle::write_coupled(dir, &fit.model)?;
        let back = bundle::read_coupled(dir)?;
        let check = check_objective(
            fit.report.model_objective,
            acmtf_objective(&xp, &yp, &back, &cfg)?,
        )?;
        let shared = fit
            .labels
            .iter()
            .filter(|l| **l == ComponentLabel::Shared)
            .count();
        let doc = json!({
            "command": "acmtf",
            "config": cfg,
            "data": { "tensor_dims": xp.dims(), "matrix_dims": [yp.rows(), yp.cols()] },
            "preprocess": { "tensor": rx, "matrix": ry },
            "fit": fit.report,
            "shared_components": shared,
            "significance": sig,
            "objective_check": check.to_json(),
        });
        bundle::write_report(dir, &doc)?;
    }
    print!("{out}");
    Ok(())
}

pub fn cmd_synth(a: SynthArgs) -> CmdResult {
    let mut spec = match (&a.spec, a.preset) {
        (Some(p), _) => reading(p, read_synth_spec(p))?,
        (None, Some(Preset::Paper)) => paper_shaped_preset(),
        (None, None) => unreachable!("clap requires a source"),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let data = generate(&spec)?;
    let dir = &a.out;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let put = |name: &str, text: String| {
        fs::write(dir.join(name), text).with_context(|| format!("writing {name}"))
    };
    put("tensor.t3", format_tensor(&data.tensor))?;
    put("matrix.txt", format_matrix(&data.matrix))?;
    put("groups.txt", format_labels(&data.labels))?;
    put("spec.cfg", format_synth_spec(&spec))?;

    let truth_dir = dir.join("truth");
    bundle::write_coupled(&truth_dir, &data.truth)?;
    let back = bundle::read_coupled(&truth_dir)?;
    let residual = |m: &cmtf_core::kruskal::CoupledModel| {
        sq_residual(data.tensor.as_slice(), m.reconstruct_tensor().as_slice())
            + sq_residual(data.matrix.as_slice(), m.reconstruct_matrix().as_slice())
    };
    let check = check_objective(Some(residual(&data.truth)), residual(&back))?;
    let planted: Vec<Value> = (0..spec.rank)
        .map(|r| {
            json!({
                "component": r,
                "in_tensor": spec.in_tensor[r],
                "in_matrix": spec.in_matrix[r],
                "delta": spec.delta[r],
            })
        })
        .collect();
    let doc = json!({
        "command": "synth",
        "seed": spec.seed,
        "data": { "tensor_dims": data.tensor.dims(), "matrix_dims": [data.matrix.rows(), data.matrix.cols()] },
        "groups": data.labels.counts(),
        "planted": planted,
        "objective_check": check.to_json(),
    });
    bundle::write_report(&truth_dir, &doc)?;
    let [i, j, k] = data.tensor.dims();
    println!(
        "tensor {i}x{j}x{k}, matrix {}x{}, rank {}, seed {}",
        data.matrix.rows(),
        data.matrix.cols(),
        spec.rank,
        spec.seed
    );
    Ok(())
}

pub fn cmd_stats(a: StatsArgs) -> CmdResult {
    let f = reading(&a.factors, read_matrix(&a.factors))?;
    let labels = reading(&a.groups, read_labels(&a.groups))?;
    let sig = significance_for_factor(&f, &labels, test_kind(a.ttest))?;
    let mut out = String::new();
    significance_table(&mut out, &sig);
    print!("{out}");
    Ok(())
}
