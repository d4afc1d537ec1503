//! Fitting behavior: parameter recovery on synthetic data, incumbent
//! monotonicity, warm starts, and the preprocessing-once contract.

use sbv::data::{Dataset, PointMatrix};
use sbv::estimate::{
    default_init, kl_divergence, mle_fit, warm_start_beta, ParamBounds, WARM_START_MAX_EVALS,
};
use sbv::exact::gp_simulate;
use sbv::kernel::KernelParams;
use sbv::rng;
use sbv::stats;
use sbv::vecchia::{preprocess, Seeds, Variant, VecchiaConfig};

fn synthetic(n: usize, params: &KernelParams, seed: u64) -> Dataset {
    let mut rng = rng::stream(seed);
    let x = PointMatrix::random_unit_cube(n, params.dim(), &mut rng);
    let y = gp_simulate(&x, params, seed ^ 0xbead).unwrap();
    Dataset::from_parts(x, y).unwrap()
}

fn cfg(variant: Variant, bs_est: usize, m_est: usize, seed: u64) -> VecchiaConfig {
    VecchiaConfig {
        variant,
        bs_est,
        m_est,
        seeds: Seeds {
            cluster: seed,
            order: seed ^ 0xaaaa,
            sim: seed ^ 0xbbbb,
        },
        ..VecchiaConfig::default()
    }
}

#[test]
fn one_dimensional_range_recovery() {
    let truth = KernelParams::new(1.0, vec![0.08], 3.5, 1e-6).unwrap();
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let data = synthetic(2000, &truth, 100 + seed);
        let config = cfg(Variant::ScaledBlock, 100, 60, seed);
        let fit = mle_fit(
            &data,
            &config,
            &ParamBounds::default(),
            &default_init(1, 3.5),
            500,
        )
        .unwrap();
        ratios.push(fit.theta_hat.beta[0] / truth.beta[0]);
    }
    let med = stats::median(&ratios);
    assert!(
        (0.5..=2.0).contains(&med),
        "median fitted/true range ratio {med} (all: {ratios:?})"
    );
}

#[test]
fn incumbent_never_worse_than_truth_init() {
    let truth = KernelParams::new(1.4, vec![0.2, 0.3], 3.5, 0.01).unwrap();
    let data = synthetic(300, &truth, 7);
    let config = cfg(Variant::ScaledBlock, 20, 30, 3);
    let fit = mle_fit(&data, &config, &ParamBounds::default(), &truth, 120).unwrap();
    let initial = fit.loglik_trace[0];
    assert!(
        fit.loglik >= initial,
        "final {} worse than initial {initial}",
        fit.loglik
    );
}

#[test]
fn preprocessing_is_built_once_and_hash_matches() {
    let truth = KernelParams::new(1.0, vec![0.15, 0.15, 0.15], 3.5, 1e-4).unwrap();
    let data = synthetic(400, &truth, 17);
    let config = cfg(Variant::ScaledBlock, 16, 20, 11);
    let init = default_init(3, 3.5);
    let fit = mle_fit(&data, &config, &ParamBounds::default(), &init, 150).unwrap();
    assert_eq!(fit.preprocess_rounds, 1);
    // the artifacts the fit used are exactly the ones preprocess produces
    // from the init ranges
    let geometry = config.geometry_scaling(&init.beta);
    let pre = preprocess(&data, &config, &geometry).unwrap();
    assert_eq!(fit.preprocess_hash, pre.hash);
}

#[test]
fn fit_traces_are_deterministic() {
    let truth = KernelParams::new(1.0, vec![0.2, 0.2], 3.5, 1e-4).unwrap();
    let data = synthetic(250, &truth, 23);
    let config = cfg(Variant::ScaledBlock, 12, 15, 29);
    let a = mle_fit(&data, &config, &ParamBounds::default(), &default_init(2, 3.5), 80).unwrap();
    let b = mle_fit(&data, &config, &ParamBounds::default(), &default_init(2, 3.5), 80).unwrap();
    assert_eq!(a.loglik_trace.len(), b.loglik_trace.len());
    for (x, y) in a.loglik_trace.iter().zip(&b.loglik_trace) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn shared_range_variants_reject_anisotropic_init() {
    let truth = KernelParams::new(1.0, vec![0.2, 0.4], 3.5, 1e-4).unwrap();
    let data = synthetic(100, &truth, 31);
    let config = cfg(Variant::Block, 10, 10, 5);
    let err = mle_fit(&data, &config, &ParamBounds::default(), &truth, 50);
    assert!(err.is_err());
}

#[test]
fn warm_start_on_full_data_equals_direct_scaled_fit() {
    let truth = KernelParams::new(1.0, vec![0.12, 0.3], 3.5, 1e-4).unwrap();
    let data = synthetic(300, &truth, 37);
    let config = cfg(Variant::ScaledBlock, 20, 25, 13);
    let warm = warm_start_beta(&data, data.len(), &config, 3.5).unwrap();
    let mut sv_config = config.clone();
    sv_config.variant = Variant::Scaled;
    sv_config.bs_est = 1;
    let direct = mle_fit(
        &data,
        &sv_config,
        &ParamBounds::default(),
        &default_init(2, 3.5),
        WARM_START_MAX_EVALS,
    )
    .unwrap();
    assert_eq!(warm.beta, direct.theta_hat.beta);
    assert_eq!(warm.sigma2, direct.theta_hat.sigma2);
}

#[test]
fn warm_start_roughly_isotropic_under_isotropic_truth() {
    let truth = KernelParams::new(1.0, vec![0.2; 3], 3.5, 1e-6).unwrap();
    let mut spreads = Vec::new();
    for seed in 0..5 {
        let data = synthetic(900, &truth, 200 + seed);
        let config = cfg(Variant::ScaledBlock, 30, 30, seed);
        let warm = warm_start_beta(&data, 450, &config, 3.5).unwrap();
        let max = warm.beta.iter().cloned().fold(f64::MIN, f64::max);
        let min = warm.beta.iter().cloned().fold(f64::MAX, f64::min);
        spreads.push(max / min);
    }
    let med = stats::median(&spreads);
    assert!(med <= 3.0, "median range spread {med} (all: {spreads:?})");
}

fn accuracy_study_theta() -> KernelParams {
    let mut beta = vec![5.0; 10];
    beta[0] = 0.05;
    beta[1] = 0.05;
    KernelParams::new(1.0, beta, 3.5, 0.0).unwrap()
}

fn separation(relevance: &[f64]) -> (f64, f64) {
    let active = relevance[0].min(relevance[1]);
    let inactive = relevance[2..].iter().cloned().fold(f64::MIN, f64::max);
    (active, inactive)
}

#[test]
fn anisotropic_fit_recovers_input_relevance() {
    let truth = accuracy_study_theta();
    let data = synthetic(2000, &truth, 500);
    let config = cfg(Variant::ScaledBlock, 100, 60, 19);
    let warm = warm_start_beta(&data, 600, &config, 3.5).unwrap();
    let fit = mle_fit(&data, &config, &ParamBounds::default(), &warm, 500).unwrap();
    let (active, inactive) = separation(&fit.relevance);
    assert!(
        active >= 10.0 * inactive,
        "relevance separation too weak: active {active}, inactive {inactive}, \
         relevance {:?}",
        fit.relevance
    );
}

#[test]
fn kl_divergence_examples() {
    let truth = KernelParams::new(1.0, vec![0.25, 0.25], 3.5, 1e-4).unwrap();
    let mut rng = rng::stream(61);
    let x = PointMatrix::random_unit_cube(150, 2, &mut rng);
    // full conditioning: approximation is exact, KL vanishes
    let full = cfg(Variant::ScaledBlock, 10, 150, 21);
    let kl = kl_divergence(&x, &truth, &full).unwrap();
    assert!(kl.abs() <= 1e-6, "{kl}");
    // any configuration: nonnegative up to round-off
    for m in [5usize, 20] {
        let c = cfg(Variant::ScaledBlock, 10, m, 22);
        assert!(kl_divergence(&x, &truth, &c).unwrap() >= -1e-6);
    }
}
