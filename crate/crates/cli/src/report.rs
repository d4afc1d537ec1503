//! Fit reports (line-oriented `key=value`) and machine-readable traces.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use sbv::data::Normalization;
use sbv::estimate::FitResult;
use sbv::kernel::KernelParams;
use sbv::vecchia::VecchiaConfig;

pub struct FitReport {
    pub variant: String,
    pub n: usize,
    pub d: usize,
    pub theta: KernelParams,
    pub relevance: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    pub normalization: Option<Normalization>,
    pub response_scale: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn write_report(
    path: &Path,
    config: &VecchiaConfig,
    n: usize,
    d: usize,
    fit: &FitResult,
    wall_time_s: f64,
    normalization: Option<&Normalization>,
    response_scale: Option<f64>,
) -> Result<()> {
    let mut out = String::new();
    out.push_str("command=fit\n");
    out.push_str(&format!("variant={}\n", config.variant));
    out.push_str(&format!("n={n}\nd={d}\n"));
    out.push_str(&format!("nu={}\n", fit.theta_hat.nu));
    out.push_str(&format!("sigma2={}\n", fit.theta_hat.sigma2));
    out.push_str(&format!("tau2={}\n", fit.theta_hat.tau2));
    for (i, b) in fit.theta_hat.beta.iter().enumerate() {
        out.push_str(&format!("beta_{}={}\n", i + 1, b));
    }
    for (i, r) in fit.relevance.iter().enumerate() {
        out.push_str(&format!("relevance_{}={}\n", i + 1, r));
    }
    out.push_str(&format!("loglik={}\n", fit.loglik));
    out.push_str(&format!("iterations={}\n", fit.iterations));
    out.push_str(&format!("evaluations={}\n", fit.evaluations));
    out.push_str(&format!("converged={}\n", fit.converged));
    out.push_str(&format!("wall_time_s={wall_time_s}\n"));
    out.push_str(&format!(
        "nns_escalated_blocks={}\nnns_escalations={}\nnns_rounds={}\n",
        fit.nns_stats.escalated_blocks, fit.nns_stats.escalations, fit.nns_stats.rounds
    ));
    out.push_str(&format!("load_imbalance={}\n", fit.load_imbalance));
    out.push_str(&format!("preprocess_hash={}\n", fit.preprocess_hash));
    out.push_str(&format!("preprocess_rounds={}\n", fit.preprocess_rounds));
    match normalization {
        Some(norm) => {
            out.push_str("normalize=true\n");
            for (i, (lo, hi)) in norm.mins.iter().zip(&norm.maxs).enumerate() {
                out.push_str(&format!("norm_min_{}={lo}\nnorm_max_{}={hi}\n", i + 1, i + 1));
            }
        }
        None => out.push_str("normalize=false\n"),
    }
    if let Some(scale) = response_scale {
        out.push_str(&format!("response_scale={scale}\n"));
    }
    std::fs::write(path, out).with_context(|| format!("cannot write report {}", path.display()))?;
    Ok(())
}

/// Objective trace: one row per evaluation, full-precision values.
pub fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path)
            .with_context(|| format!("cannot write trace {}", path.display()))?,
    );
    writeln!(out, "eval,loglik")?;
    for (i, ll) in trace.iter().enumerate() {
        writeln!(out, "{},{ll:.16e}", i + 1)?;
    }
    Ok(())
}

pub fn read_report(path: &Path) -> Result<FitReport> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read report {}", path.display()))?;
    let mut map = std::collections::BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("report line {}: expected key=value", idx + 1))?;
        map.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| -> Result<&String> {
        map.get(k).ok_or_else(|| anyhow!("report missing key '{k}'"))
    };
    let f = |k: &str| -> Result<f64> {
        get(k)?.parse().map_err(|e| anyhow!("report key '{k}': {e}"))
    };
    let n: usize = get("n")?.parse()?;
    let d: usize = get("d")?.parse()?;
    let mut beta = Vec::with_capacity(d);
    let mut relevance = Vec::with_capacity(d);
    for i in 1..=d {
        beta.push(f(&format!("beta_{i}"))?);
        relevance.push(f(&format!("relevance_{i}"))?);
    }
    let theta = KernelParams::new(f("sigma2")?, beta, f("nu")?, f("tau2")?)
        .map_err(|e| anyhow!("report parameters invalid: {e}"))?;
    let normalization = if get("normalize")?.as_str() == "true" {
        let mut mins = Vec::with_capacity(d);
        let mut maxs = Vec::with_capacity(d);
        for i in 1..=d {
            mins.push(f(&format!("norm_min_{i}"))?);
            maxs.push(f(&format!("norm_max_{i}"))?);
        }
        Some(Normalization { mins, maxs })
    } else {
        None
    };
    let response_scale = map.get("response_scale").map(|v| v.parse()).transpose()?;
    if get("command")?.as_str() != "fit" {
        bail!("not a fit report");
    }
    Ok(FitReport {
        variant: get("variant")?.clone(),
        n,
        d,
        theta,
        relevance,
        loglik: f("loglik")?,
        iterations: get("iterations")?.parse()?,
        evaluations: get("evaluations")?.parse()?,
        converged: get("converged")?.parse()?,
        wall_time_s: f("wall_time_s")?,
        normalization,
        response_scale,
    })
}
