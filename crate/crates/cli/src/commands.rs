//! Command implementations behind the CLI surface.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use sbv::data::{Dataset, PointMatrix};
use sbv::estimate::{self, mle_fit_rounds, warm_start_beta, ParamBounds};
use sbv::exact::{self, MAX_EXACT_N};
use sbv::kernel::KernelParams;
use sbv::nns::knn_oracle;
use sbv::rng::{self, substream};
use sbv::vecchia::{self, Seeds, Variant, VecchiaConfig};

use crate::config::Config;
use crate::kmeans::kmeans_blocks;
use crate::report;

const MODEL_KEYS: &[&str] = &[
    "variant",
    "bs_est",
    "bs_pred",
    "m_est",
    "m_pred",
    "alpha",
    "n_sim",
    "ci_level",
    "workers",
    "seed_cluster",
    "seed_order",
    "seed_sim",
    "nu",
];

const FIT_KEYS: &[&str] = &[
    "max_evals",
    "refit_preprocess",
    "init_sigma2",
    "init_beta",
    "init_tau2",
    "lb_sigma2",
    "ub_sigma2",
    "lb_beta",
    "ub_beta",
    "lb_tau2",
    "ub_tau2",
    "warm_start",
    "normalize",
    "normalize_response",
    "subsample",
    "seed_subsample",
];

fn seeds_from(cfg: &Config) -> Result<Seeds> {
    Ok(Seeds {
        cluster: cfg.u64_or("seed_cluster", 0)?,
        order: cfg.u64_or("seed_order", 1)?,
        sim: cfg.u64_or("seed_sim", 2)?,
    })
}

fn vecchia_config_from(cfg: &Config, workers_override: Option<usize>) -> Result<VecchiaConfig> {
    let variant: Variant = cfg.string_or("variant", "SBV").parse()?;
    let config = VecchiaConfig {
        variant,
        bs_est: cfg.usize_or("bs_est", if variant.singleton_blocks() { 1 } else { 100 })?,
        bs_pred: cfg.usize_or("bs_pred", 10)?,
        m_est: cfg.usize_or("m_est", 60)?,
        m_pred: cfg.usize_or("m_pred", 120)?,
        alpha: cfg.f64_or("alpha", 100.0)?,
        seeds: seeds_from(cfg)?,
        n_sim: cfg.usize_or("n_sim", 1000)?,
        ci_level: cfg.f64_or("ci_level", 0.95)?,
        workers: workers_override.unwrap_or(cfg.usize_or("workers", 1)?),
    };
    config.validate()?;
    Ok(config)
}

fn truth_params_from(cfg: &Config, d: usize) -> Result<KernelParams> {
    Ok(KernelParams::new(
        cfg.f64_or("sigma2", 1.0)?,
        cfg.f64_vec_or("beta", d, 1.0)?,
        cfg.f64_or("nu", 3.5)?,
        cfg.f64_or("tau2", 0.0)?,
    )?)
}

/// Simulate a zero-mean GP dataset on uniform unit-cube inputs and write
/// it as CSV. Deterministic for a fixed config.
pub fn cmd_simulate(config_path: &Path, out: &Path) -> Result<()> {
    let cfg = Config::parse_file(config_path)?;
    cfg.check_known(&["n", "d", "seed", "sigma2", "tau2", "nu", "beta"])?;
    let n = cfg.require_usize("n")?;
    let d = cfg.require_usize("d")?;
    if n > MAX_EXACT_N {
        bail!(
            "n = {n} exceeds the exact-simulation cap of {MAX_EXACT_N}; \
             sequential blockwise simulation of larger datasets is out of scope"
        );
    }
    let seed = cfg.u64_or("seed", 0)?;
    let params = truth_params_from(&cfg, d)?;
    let mut xs = rng::stream(substream(seed, 0x78));
    let points = PointMatrix::random_unit_cube(n, d, &mut xs);
    let y = exact::gp_simulate(&points, &params, substream(seed, 0x79))?;
    let data = Dataset::from_parts(points, y)?;
    data.to_csv(out)?;
    println!("simulate: wrote {n} points in {d} dimensions to {}", out.display());
    Ok(())
}

struct IngestedData {
    data: Dataset,
    normalization: Option<sbv::data::Normalization>,
    response_scale: Option<f64>,
}

fn ingest(data_path: &Path, cfg: &Config) -> Result<IngestedData> {
    let mut data = Dataset::from_csv(data_path)
        .with_context(|| format!("loading {}", data_path.display()))?;
    let subsample = cfg.usize_or("subsample", 0)?;
    if subsample > 0 && subsample < data.len() {
        data = data.subsample(subsample, cfg.u64_or("seed_subsample", 7)?)?;
    }
    let mut normalization = None;
    if cfg.bool_or("normalize", false)? {
        let (nd, norm) = data.normalize_unit_cube();
        data = nd;
        normalization = Some(norm);
    }
    let mut response_scale = None;
    if cfg.bool_or("normalize_response", false)? {
        response_scale = Some(data.normalize_response_mean_one()?);
    }
    Ok(IngestedData {
        data,
        normalization,
        response_scale,
    })
}

/// Fit kernel hyperparameters by maximum likelihood and write the
/// `key=value` report plus the objective-trace CSV.
pub fn cmd_fit(
    data_path: &Path,
    config_path: &Path,
    report_path: &Path,
    trace_path: Option<&Path>,
    workers_override: Option<usize>,
    refit_override: Option<usize>,
) -> Result<()> {
    let cfg = Config::parse_file(config_path)?;
    let allowed: Vec<&str> = MODEL_KEYS.iter().chain(FIT_KEYS).copied().collect();
    cfg.check_known(&allowed)?;
    let config = vecchia_config_from(&cfg, workers_override)?;
    let ingested = ingest(data_path, &cfg)?;
    let data = &ingested.data;
    let d = data.dim();
    let nu = cfg.f64_or("nu", 3.5)?;

    let bounds = ParamBounds {
        sigma2: (cfg.f64_or("lb_sigma2", 1e-3)?, cfg.f64_or("ub_sigma2", 1e3)?),
        beta: (cfg.f64_or("lb_beta", 1e-3)?, cfg.f64_or("ub_beta", 1e2)?),
        tau2: (cfg.f64_or("lb_tau2", 1e-8)?, cfg.f64_or("ub_tau2", 1e1)?),
    };
    let mut init = KernelParams::new(
        cfg.f64_or("init_sigma2", 1.0)?,
        cfg.f64_vec_or("init_beta", d, 0.3)?,
        nu,
        cfg.f64_or("init_tau2", 1e-4)?,
    )?;

    let warm = cfg.usize_or("warm_start", 0)?;
    if warm > 0 {
        if !config.variant.uses_scaling() {
            bail!("warm_start applies to the scaled variants only");
        }
        let warm_n = warm.min(data.len());
        init = warm_start_beta(data, warm_n, &config, nu)?;
        init.sigma2 = init.sigma2.clamp(bounds.sigma2.0, bounds.sigma2.1);
        init.tau2 = init.tau2.clamp(bounds.tau2.0, bounds.tau2.1);
        for b in &mut init.beta {
            *b = b.clamp(bounds.beta.0, bounds.beta.1);
        }
    }

    let max_evals = cfg.usize_or("max_evals", 500)?;
    let rounds = refit_override.unwrap_or(cfg.usize_or("refit_preprocess", 1)?);
    let start = Instant::now();
    let fit = mle_fit_rounds(data, &config, &bounds, &init, max_evals, rounds)?;
    let wall = start.elapsed().as_secs_f64();

    report::write_report(
        report_path,
        &config,
        data.len(),
        d,
        &fit,
        wall,
        ingested.normalization.as_ref(),
        ingested.response_scale,
    )?;
    let default_trace = report_path.with_extension("trace.csv");
    report::write_trace(trace_path.unwrap_or(&default_trace), &fit.loglik_trace)?;
    println!(
        "fit: variant={} n={} loglik={:.6} evaluations={} converged={}",
        config.variant,
        data.len(),
        fit.loglik,
        fit.evaluations,
        fit.converged
    );
    Ok(())
}

/// Predict at new inputs from a fit report: blockwise conditional
/// moments, then seeded conditional simulation with confidence bounds.
pub fn cmd_predict(
    train_path: &Path,
    test_path: &Path,
    report_path: &Path,
    config_path: &Path,
    out: &Path,
    workers_override: Option<usize>,
) -> Result<()> {
    let cfg = Config::parse_file(config_path)?;
    let allowed: Vec<&str> = MODEL_KEYS.iter().chain(FIT_KEYS).copied().collect();
    cfg.check_known(&allowed)?;
    let fit = report::read_report(report_path)?;
    let mut config = vecchia_config_from(&cfg, workers_override)?;
    config.variant = fit.variant.parse()?;

    let mut train = Dataset::from_csv(train_path)?;
    let test = Dataset::from_csv(test_path)?;
    if train.dim() != test.dim() {
        bail!(
            "train has {} input columns but test has {}",
            train.dim(),
            test.dim()
        );
    }
    if train.dim() != fit.d {
        bail!("report was fit in {} dimensions, data has {}", fit.d, train.dim());
    }
    let mut test_points = test.points.clone();
    if let Some(norm) = &fit.normalization {
        train = Dataset {
            points: norm.apply(&train.points),
            responses: train.responses,
            global_ids: train.global_ids,
        };
        test_points = norm.apply(&test_points);
    }
    let scale = fit.response_scale.unwrap_or(1.0);
    if scale != 1.0 {
        for y in &mut train.responses {
            *y /= scale;
        }
    }

    let pred = vecchia::vecchia_predict(&train, &test_points, &config, &fit.theta)?;
    let sims = vecchia::conditional_simulate(
        &pred.mean,
        &pred.variance,
        config.n_sim,
        config.seeds.sim,
        config.ci_level,
    )?;

    let mut text = String::from("mean,sd,ci_lo,ci_hi\n");
    for s in &sims {
        text.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}\n",
            s.sim_mean * scale,
            s.sim_sd * scale,
            s.ci_lo * scale,
            s.ci_hi * scale
        ));
    }
    std::fs::write(out, text)?;
    println!(
        "predict: {} points, {}% intervals, wrote {}",
        sims.len(),
        100.0 * config.ci_level,
        out.display()
    );
    Ok(())
}

const SCENARIO_KEYS: &[&str] = &[
    "n",
    "d",
    "n_test",
    "sigma2",
    "tau2",
    "nu",
    "beta",
    "variants",
    "m_list",
    "bs_est",
    "bs_pred",
    "alpha",
    "workers",
    "seeds",
    "kmeans",
    "kmeans_m_list",
    "kmeans_iters",
    "data_seed",
];

/// One benchmark cell: approximation quality (KL at the true parameters),
/// prediction error on held-out points, and one-evaluation runtime.
struct BenchRow {
    variant: Variant,
    m: usize,
    bs: usize,
    seed: u64,
    kl: f64,
    mspe: f64,
    eval_seconds: f64,
}

/// Sweep variants x conditioning sizes x seeds on a synthetic truth and
/// emit plot-ready CSV tables, including the clustering comparison
/// between random anchors and the K-means baseline.
pub fn cmd_benchmark(scenario_path: &Path, out_dir: &Path) -> Result<()> {
    let cfg = Config::parse_file(scenario_path)?;
    cfg.check_known(SCENARIO_KEYS)?;
    let n = cfg.require_usize("n")?;
    let d = cfg.require_usize("d")?;
    let n_test = cfg.usize_or("n_test", 200)?;
    if n + n_test > MAX_EXACT_N {
        bail!("scenario needs n + n_test <= {MAX_EXACT_N} for exact simulation and KL");
    }
    let truth = truth_params_from(&cfg, d)?;
    let variants: Vec<Variant> = cfg
        .string_list_or("variants", &["CV", "BV", "SV", "SBV"])
        .iter()
        .map(|s| s.parse())
        .collect::<sbv::Result<_>>()?;
    let m_list = cfg.usize_list_or("m_list", &[10, 30, 60])?;
    let bs_est = cfg.usize_or("bs_est", 10)?;
    let bs_pred = cfg.usize_or("bs_pred", 10)?;
    let alpha = cfg.f64_or("alpha", 100.0)?;
    let workers = cfg.usize_or("workers", 1)?;
    let seed_count = cfg.usize_or("seeds", 5)?;
    let data_seed = cfg.u64_or("data_seed", 9000)?;

    std::fs::create_dir_all(out_dir)?;
    let mut rows: Vec<BenchRow> = Vec::new();
    let mut cluster_rows: Vec<(usize, u64, f64, f64, f64)> = Vec::new();
    let kmeans_on = cfg.bool_or("kmeans", false)?;
    let kmeans_m_list = cfg.usize_list_or("kmeans_m_list", &[10, 30, 60, 120])?;
    let kmeans_iters = cfg.usize_or("kmeans_iters", 10)?;

    for s in 0..seed_count as u64 {
        let mut xs = rng::stream(substream(data_seed, 2 * s));
        let all_points = PointMatrix::random_unit_cube(n + n_test, d, &mut xs);
        let all_y = exact::gp_simulate(&all_points, &truth, substream(data_seed, 2 * s + 1))?;
        let train_idx: Vec<usize> = (0..n).collect();
        let test_idx: Vec<usize> = (n..n + n_test).collect();
        let train =
            Dataset::from_parts(all_points.gather(&train_idx), all_y[..n].to_vec())?;
        let test_points = all_points.gather(&test_idx);
        let test_y = &all_y[n..];

        let zeros = vec![0.0; n];
        let exact_ll0 = exact::exact_loglik(&train.points, &zeros, &truth)?;
        let zero_data = Dataset::from_parts(train.points.clone(), zeros.clone())?;

        for &variant in &variants {
            for &m in &m_list {
                let config = VecchiaConfig {
                    variant,
                    bs_est: if variant.singleton_blocks() { 1 } else { bs_est },
                    bs_pred: if variant.singleton_blocks() { 1 } else { bs_pred },
                    m_est: m,
                    m_pred: m,
                    alpha,
                    seeds: Seeds {
                        cluster: substream(data_seed, 100 + s),
                        order: substream(data_seed, 200 + s),
                        sim: substream(data_seed, 300 + s),
                    },
                    n_sim: 1000,
                    ci_level: 0.95,
                    workers,
                };
                let geometry = config.geometry_scaling(&truth.beta);
                let pre = vecchia::preprocess(&zero_data, &config, &geometry)?;
                let t0 = Instant::now();
                let ll0 = vecchia::vecchia_loglik_with(&zero_data, &pre, &truth, workers)?;
                let eval_seconds = t0.elapsed().as_secs_f64();
                let kl = exact_ll0 - ll0;
                let pred = vecchia::vecchia_predict(&train, &test_points, &config, &truth)?;
                let mspe = estimate::mspe(&pred.mean, test_y)?;
                rows.push(BenchRow {
                    variant,
                    m,
                    bs: config.bs_est,
                    seed: s,
                    kl,
                    mspe,
                    eval_seconds,
                });
            }
        }

        if kmeans_on {
            let config0 = VecchiaConfig {
                variant: Variant::ScaledBlock,
                bs_est,
                alpha,
                workers: 1,
                ..VecchiaConfig::default()
            };
            let geometry = config0.geometry_scaling(&truth.beta);
            let scaled = train.points.scale_by(&geometry);
            let k = (n / bs_est).max(1);
            let km_blocks = kmeans_blocks(&scaled, k, kmeans_iters, substream(data_seed, 400));
            for &m in &kmeans_m_list {
                for anchor_seed in 0..seed_count as u64 {
                    let mut config = config0.clone();
                    config.m_est = m;
                    config.seeds = Seeds {
                        cluster: substream(data_seed, 500 + anchor_seed),
                        order: substream(data_seed, 600 + s),
                        sim: 0,
                    };
                    let ll_rac = vecchia::vecchia_loglik(&train, &config, &truth)?;
                    let pre_km = vecchia::preprocess_with_blocks(
                        &train,
                        &config,
                        &geometry,
                        km_blocks.clone(),
                    )?;
                    let ll_km = vecchia::vecchia_loglik_with(&train, &pre_km, &truth, 1)?;
                    let rel = (ll_rac - ll_km).abs() / ll_km.abs();
                    cluster_rows.push((m, anchor_seed, ll_rac, ll_km, rel));
                }
            }
        }
    }

    let metrics_path = out_dir.join("metrics.csv");
    let mut text = String::from("variant,m,bs_est,seed,kl,mspe,eval_seconds\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{},{:.16e},{:.16e},{:.6}\n",
            r.variant, r.m, r.bs, r.seed, r.kl, r.mspe, r.eval_seconds
        ));
    }
    std::fs::write(&metrics_path, text)?;

    if kmeans_on {
        let path = out_dir.join("clustering.csv");
        let mut text = String::from("m,anchor_seed,loglik_rac,loglik_kmeans,rel_err\n");
        for (m, seed, lr, lk, rel) in &cluster_rows {
            text.push_str(&format!("{m},{seed},{lr:.16e},{lk:.16e},{rel:.16e}\n"));
        }
        std::fs::write(&path, text)?;
    }
    println!(
        "benchmark: {} metric rows{} -> {}",
        rows.len(),
        if kmeans_on {
            format!(", {} clustering rows", cluster_rows.len())
        } else {
            String::new()
        },
        out_dir.display()
    );
    Ok(())
}

/// Compare the filtered neighbor search against the exhaustive oracle on
/// a dataset and report mismatches (expected: zero) and escalations.
pub fn cmd_nns_check(data_path: &Path, config_path: &Path) -> Result<()> {
    let cfg = Config::parse_file(config_path)?;
    let allowed: Vec<&str> = MODEL_KEYS.iter().chain(FIT_KEYS).copied().collect();
    cfg.check_known(&allowed)?;
    let config = vecchia_config_from(&cfg, None)?;
    let ingested = ingest(data_path, &cfg)?;
    let data = &ingested.data;
    let beta = cfg.f64_vec_or("init_beta", data.dim(), 0.3)?;
    let geometry = config.geometry_scaling(&beta);
    let pre = vecchia::preprocess(data, &config, &geometry)?;

    let scaled = data.points.scale_by(&geometry);
    let ranks = pre.partition.ranks();
    let mut mismatches = 0usize;
    for q in 0..pre.partition.len() {
        let admissible: Vec<usize> = pre
            .partition
            .blocks
            .iter()
            .enumerate()
            .filter(|(b, _)| ranks[*b] < ranks[q])
            .flat_map(|(_, members)| members.iter().copied())
            .collect();
        let want = knn_oracle(
            pre.partition.centers.row(q),
            &admissible,
            &scaled,
            config.m_est,
        );
        if want != pre.neighbors.sets[q] {
            mismatches += 1;
        }
    }
    println!(
        "nns-check: blocks={} m={} mismatches={} escalated_blocks={} escalations={} rounds={}",
        pre.partition.len(),
        config.m_est,
        mismatches,
        pre.nns_stats.escalated_blocks,
        pre.nns_stats.escalations,
        pre.nns_stats.rounds
    );
    if mismatches > 0 {
        bail!("{mismatches} blocks disagree with the exhaustive oracle");
    }
    Ok(())
}
