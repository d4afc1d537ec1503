//! Consistency of the blockwise likelihood against the dense oracle:
//! full-conditioning recovery, chain-rule telescoping, a per-block
//! explicit-inverse conditional oracle, variant degeneracies, and
//! determinism across worker counts.

use sbv::data::{Dataset, PointMatrix};
use sbv::estimate::kl_divergence;
use sbv::exact::{exact_loglik, exact_predict, gp_simulate};
use sbv::kernel::{cov_matrix, KernelParams};
use sbv::nns::{validate_neighbor_sets, NeighborSets, NnsMode};
use sbv::rng;
use sbv::vecchia::{
    assemble_batches, block_loglik, conditional_simulate, preprocess, vecchia_loglik,
    vecchia_loglik_with, vecchia_predict, Seeds, Variant, VecchiaConfig,
};

const LOG_2PI: f64 = 1.8378770664093453;

fn config(variant: Variant, bs_est: usize, m_est: usize, seed: u64) -> VecchiaConfig {
    VecchiaConfig {
        variant,
        bs_est,
        m_est,
        seeds: Seeds {
            cluster: seed,
            order: seed ^ 0x5eed,
            sim: seed ^ 0xd1ce,
        },
        ..VecchiaConfig::default()
    }
}

fn random_theta(d: usize, seed: u64) -> KernelParams {
    let mut rng = rng::stream(seed);
    let beta: Vec<f64> = (0..d).map(|_| 0.08 + 0.8 * rng::uniform01(&mut rng)).collect();
    KernelParams::new(
        0.5 + 1.5 * rng::uniform01(&mut rng),
        beta,
        3.5,
        1e-4 + 0.05 * rng::uniform01(&mut rng),
    )
    .unwrap()
}

fn synthetic(n: usize, params: &KernelParams, seed: u64) -> Dataset {
    let mut rng = rng::stream(seed);
    let x = PointMatrix::random_unit_cube(n, params.dim(), &mut rng);
    let y = gp_simulate(&x, params, seed ^ 0xf00d).unwrap();
    Dataset::from_parts(x, y).unwrap()
}

/// The design of the synthetic accuracy study: two short ranges, eight
/// long (inactive) ones, unit variance, no nugget.
fn accuracy_study_theta() -> KernelParams {
    let mut beta = vec![5.0; 10];
    beta[0] = 0.05;
    beta[1] = 0.05;
    KernelParams::new(1.0, beta, 3.5, 0.0).unwrap()
}

#[test]
fn full_conditioning_recovers_exact_loglik() {
    for (n, bs, seed) in [(120usize, 1usize, 0u64), (120, 10, 1), (300, 25, 2)] {
        let params = random_theta(6, seed + 40);
        let data = synthetic(n, &params, seed);
        let exact = exact_loglik(&data.points, &data.responses, &params).unwrap();
        let cfg = config(
            if bs == 1 { Variant::Scaled } else { Variant::ScaledBlock },
            bs,
            n, // m >= n: every block conditions on all earlier points
            seed,
        );
        let approx = vecchia_loglik(&data, &cfg, &params).unwrap();
        assert!(
            (approx - exact).abs() <= 1e-8 * exact.abs(),
            "n={n} bs={bs}: {approx} vs {exact}"
        );
    }
}

#[test]
fn single_block_is_exact() {
    let params = random_theta(3, 7);
    let data = synthetic(80, &params, 3);
    let cfg = config(Variant::ScaledBlock, 80, 10, 4);
    let approx = vecchia_loglik(&data, &cfg, &params).unwrap();
    let exact = exact_loglik(&data.points, &data.responses, &params).unwrap();
    assert!((approx - exact).abs() <= 1e-10 * exact.abs());
}

#[test]
fn chain_rule_telescopes_with_full_neighbor_sets() {
    // Conditioning every block on the union of all earlier blocks must
    // telescope to the joint density, independent of block sizes and order.
    let params = random_theta(4, 9);
    let data = synthetic(90, &params, 11);
    let cfg = config(Variant::ScaledBlock, 9, 5, 6);
    let geometry = cfg.geometry_scaling(&params.beta);
    let mut pre = preprocess(&data, &cfg, &geometry).unwrap();
    // overwrite the searched sets with full earlier-point unions
    let ranks = pre.partition.ranks();
    let mut sets = vec![Vec::new(); pre.partition.len()];
    for (b, set) in sets.iter_mut().enumerate() {
        for (other, members) in pre.partition.blocks.iter().enumerate() {
            if ranks[other] < ranks[b] {
                set.extend(members.iter().copied());
            }
        }
    }
    pre.neighbors = NeighborSets { sets };
    let approx = vecchia_loglik_with(&data, &pre, &params, 1).unwrap();
    let exact = exact_loglik(&data.points, &data.responses, &params).unwrap();
    assert!(
        (approx - exact).abs() <= 1e-8 * exact.abs(),
        "{approx} vs {exact}"
    );
}

mod dense_oracle {
    //! Explicit-inverse conditional Gaussian density, independent of the
    //! Cholesky path under test.

    pub fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let n = a.len();
        let mut inv: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
                .unwrap();
            a.swap(piv, k);
            inv.swap(piv, k);
            let pivot = a[k][k];
            for j in 0..n {
                a[k][j] /= pivot;
                inv[k][j] /= pivot;
            }
            for i in 0..n {
                if i != k {
                    let f = a[i][k];
                    for j in 0..n {
                        a[i][j] -= f * a[k][j];
                        inv[i][j] -= f * inv[k][j];
                    }
                }
            }
        }
        inv
    }

    pub fn log_det(mut a: Vec<Vec<f64>>) -> f64 {
        let n = a.len();
        let mut acc = 0.0;
        let mut sign = 1.0;
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
                .unwrap();
            if piv != k {
                a.swap(piv, k);
                sign = -sign;
            }
            let pivot = a[k][k];
            if pivot < 0.0 {
                sign = -sign;
            }
            acc += pivot.abs().ln();
            for i in k + 1..n {
                let f = a[i][k] / pivot;
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
            }
        }
        assert!(sign > 0.0, "negative determinant in oracle");
        acc
    }
}

#[test]
fn block_loglik_matches_dense_conditional_oracle() {
    let params = random_theta(3, 20);
    let data = synthetic(40, &params, 21);
    let cfg = config(Variant::ScaledBlock, 5, 10, 22);
    let geometry = cfg.geometry_scaling(&params.beta);
    let pre = preprocess(&data, &cfg, &geometry).unwrap();
    let batches = assemble_batches(&data, &pre.partition, &pre.neighbors, &params).unwrap();

    let to_rows = |m: &sbv::CovMatrix| -> Vec<Vec<f64>> {
        (0..m.rows)
            .map(|i| (0..m.cols).map(|j| m.at(i, j)).collect())
            .collect()
    };

    for batch in &batches {
        let got = block_loglik(batch).unwrap();
        let bs = batch.sigma_lk.rows;
        let m = batch.sigma_con.rows;
        // oracle: mu = C' K^{-1} yJ, S = Lk - C' K^{-1} C, then dense Gaussian density
        let (mu, s) = if m == 0 {
            (vec![0.0; bs], to_rows(&batch.sigma_lk))
        } else {
            let kinv = dense_oracle::invert(to_rows(&batch.sigma_con));
            let cross = &batch.sigma_cross; // m x bs
            let mut mu = vec![0.0; bs];
            let mut s = to_rows(&batch.sigma_lk);
            for a in 0..bs {
                for i in 0..m {
                    for j in 0..m {
                        mu[a] += cross.at(i, a) * kinv[i][j] * batch.y_neighbors[j];
                    }
                }
                for b in 0..bs {
                    let mut red = 0.0;
                    for i in 0..m {
                        for j in 0..m {
                            red += cross.at(i, a) * kinv[i][j] * cross.at(j, b);
                        }
                    }
                    s[a][b] -= red;
                }
            }
            (mu, s)
        };
        let resid: Vec<f64> = batch.y_block.iter().zip(&mu).map(|(y, m)| y - m).collect();
        let sinv = dense_oracle::invert(s.clone());
        let mut quad = 0.0;
        for i in 0..bs {
            for j in 0..bs {
                quad += resid[i] * sinv[i][j] * resid[j];
            }
        }
        let want = -0.5 * (bs as f64 * LOG_2PI + dense_oracle::log_det(s) + quad);
        assert!(
            (got - want).abs() <= 1e-8 * want.abs().max(1.0),
            "block {}: {got} vs {want}",
            batch.block
        );
    }
}

#[test]
fn batch_entries_equal_submatrix_extraction() {
    let params = random_theta(4, 30);
    let data = synthetic(60, &params, 31);
    let cfg = config(Variant::ScaledBlock, 6, 12, 32);
    let geometry = cfg.geometry_scaling(&params.beta);
    let pre = preprocess(&data, &cfg, &geometry).unwrap();
    validate_neighbor_sets(&pre.neighbors, &pre.partition, NnsMode::Estimation, cfg.m_est)
        .unwrap();
    let batches = assemble_batches(&data, &pre.partition, &pre.neighbors, &params).unwrap();
    for batch in &batches {
        let members = &pre.partition.blocks[batch.block];
        let neigh = &pre.neighbors.sets[batch.block];
        let pb = data.points.gather(members);
        let pn = data.points.gather(neigh);
        assert_eq!(batch.sigma_lk, cov_matrix(&pb, &pb, &params).unwrap());
        assert_eq!(batch.sigma_con, cov_matrix(&pn, &pn, &params).unwrap());
        assert_eq!(batch.sigma_cross, cov_matrix(&pn, &pb, &params).unwrap());
        assert_eq!(batch.sigma_cross.rows, neigh.len());
        assert_eq!(batch.sigma_cross.cols, members.len());
        // first block in the ordering carries no conditioning matrices
        if pre.partition.ranks()[batch.block] == 0 {
            assert!(batch.sigma_con.is_empty() && batch.sigma_cross.is_empty());
        }
    }
}

#[test]
fn singleton_scaled_block_equals_scaled_variant() {
    let params = random_theta(5, 41);
    let data = synthetic(150, &params, 42);
    let sbv = vecchia_loglik(&data, &config(Variant::ScaledBlock, 1, 20, 5), &params).unwrap();
    let sv = vecchia_loglik(&data, &config(Variant::Scaled, 1, 20, 5), &params).unwrap();
    assert_eq!(sbv.to_bits(), sv.to_bits());
}

#[test]
fn equal_ranges_scaled_block_equals_block_variant() {
    // With every range equal to a power of two, scaling is an exact
    // binary rescaling, so the scaled and unscaled pipelines make
    // bit-identical decisions and the likelihoods coincide exactly.
    let params = KernelParams::new(1.3, vec![0.5; 4], 3.5, 1e-3).unwrap();
    let data = synthetic(150, &params, 52);
    let sbv = vecchia_loglik(&data, &config(Variant::ScaledBlock, 8, 15, 6), &params).unwrap();
    let bv = vecchia_loglik(&data, &config(Variant::Block, 8, 15, 6), &params).unwrap();
    assert_eq!(sbv.to_bits(), bv.to_bits());
}

#[test]
fn loglik_is_deterministic_and_worker_invariant() {
    let params = random_theta(4, 60);
    let data = synthetic(200, &params, 61);
    let cfg = config(Variant::ScaledBlock, 10, 25, 7);
    let geometry = cfg.geometry_scaling(&params.beta);
    let pre = preprocess(&data, &cfg, &geometry).unwrap();
    let base = vecchia_loglik_with(&data, &pre, &params, 1).unwrap();
    for workers in [1usize, 2, 4] {
        let ll = vecchia_loglik_with(&data, &pre, &params, workers).unwrap();
        assert_eq!(ll.to_bits(), base.to_bits(), "P={workers}");
    }
    // and the full pipeline reproduces itself
    let again = vecchia_loglik(&data, &cfg, &params).unwrap();
    assert_eq!(again.to_bits(), base.to_bits());
}

#[test]
fn kl_is_nonnegative_and_improves_with_m() {
    let params = accuracy_study_theta();
    let mut rng = rng::stream(70);
    let x = PointMatrix::random_unit_cube(400, 10, &mut rng);
    let mut kls = Vec::new();
    for m in [10usize, 30, 60] {
        let cfg = config(Variant::ScaledBlock, 10, m, 8);
        let kl = kl_divergence(&x, &params, &cfg).unwrap();
        assert!(kl >= -1e-6, "m={m}: {kl}");
        kls.push(kl);
    }
    assert!(
        kls[2] < kls[0],
        "KL should shrink from m=10 to m=60: {kls:?}"
    );
}

#[test]
fn prediction_with_full_conditioning_matches_exact() {
    let params = random_theta(3, 80);
    let train = synthetic(120, &params, 81);
    let mut rng = rng::stream(82);
    let test = PointMatrix::random_unit_cube(30, 3, &mut rng);
    let mut cfg = config(Variant::ScaledBlock, 10, 20, 9);
    cfg.bs_pred = 7;
    cfg.m_pred = 120; // all training points
    let got = vecchia_predict(&train, &test, &cfg, &params).unwrap();
    let (mean, var) = exact_predict(&train.points, &train.responses, &test, &params).unwrap();
    for j in 0..30 {
        assert!((got.mean[j] - mean[j]).abs() < 1e-8, "mean {j}");
        assert!((got.variance[j] - var[j]).abs() < 1e-8, "var {j}");
    }
}

#[test]
fn prediction_interpolates_coincident_training_point() {
    let params = KernelParams::new(1.0, vec![0.3, 0.3], 3.5, 0.0).unwrap();
    let train = synthetic(40, &params, 90);
    let test = train.points.gather(&[13]);
    let mut cfg = config(Variant::ScaledBlock, 10, 20, 10);
    cfg.bs_pred = 1;
    cfg.m_pred = 40;
    let got = vecchia_predict(&train, &test, &cfg, &params).unwrap();
    assert!((got.mean[0] - train.responses[13]).abs() < 1e-6);
    assert!(got.variance[0].abs() < 1e-6);
}

#[test]
fn conditional_simulation_summaries() {
    // degenerate: zero variance collapses the interval onto the mean
    let out = conditional_simulate(&[3.25], &[0.0], 100, 5, 0.95).unwrap();
    assert_eq!(out[0].sim_mean, 3.25);
    assert_eq!(out[0].sim_sd, 0.0);
    assert_eq!(out[0].ci_lo, 3.25);
    assert_eq!(out[0].ci_hi, 3.25);

    // law of large numbers at n_sim = 1e5, three Monte-Carlo sigmas
    let n_sim = 100_000;
    let out = conditional_simulate(&[2.0], &[4.0], n_sim, 6, 0.95).unwrap();
    let mean_tol = 3.0 * 2.0 / (n_sim as f64).sqrt();
    assert!((out[0].sim_mean - 2.0).abs() < mean_tol, "{}", out[0].sim_mean);
    let var = out[0].sim_sd * out[0].sim_sd;
    let var_tol = 3.0 * 4.0 * (2.0 / (n_sim as f64 - 1.0)).sqrt();
    assert!((var - 4.0).abs() < var_tol, "{var}");

    // the 95% interval uses the ~1.95996 normal quantile
    let half_width = 0.5 * (out[0].ci_hi - out[0].ci_lo);
    let z = half_width / out[0].sim_sd;
    assert!((z - 1.959964).abs() < 1e-5, "{z}");

    // usage errors
    assert!(conditional_simulate(&[0.0], &[-0.1], 10, 0, 0.95).is_err());
    assert!(conditional_simulate(&[0.0], &[1.0], 1, 0, 0.95).is_err());
    assert!(conditional_simulate(&[0.0], &[1.0], 10, 0, 1.0).is_err());
}

#[test]
fn config_validation_rules() {
    let mut cfg = VecchiaConfig::default();
    cfg.variant = Variant::Classic;
    cfg.bs_est = 10;
    assert!(cfg.validate().is_err());
    cfg.bs_est = 1;
    assert!(cfg.validate().is_ok());
    cfg.n_sim = 1;
    assert!(cfg.validate().is_err());
    cfg.n_sim = 2;
    cfg.ci_level = 1.0;
    assert!(cfg.validate().is_err());
}

#[test]
fn variant_parsing_round_trips() {
    for (s, v) in [
        ("CV", Variant::Classic),
        ("BV", Variant::Block),
        ("SV", Variant::Scaled),
        ("SBV", Variant::ScaledBlock),
    ] {
        let parsed: Variant = s.parse().unwrap();
        assert_eq!(parsed, v);
        assert_eq!(v.to_string(), s);
    }
    assert!("XV".parse::<Variant>().is_err());
}
