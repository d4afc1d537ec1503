//! Validation of the dense GP routines against naive explicit-inverse
//! linear algebra (Gauss-Jordan inverse, elimination determinant)
//! implemented independently here.

use sbv::data::PointMatrix;
use sbv::exact::{exact_loglik, exact_predict, gp_simulate};
use sbv::kernel::{cov_matrix, KernelParams};
use sbv::rng;

const LOG_2PI: f64 = 1.8378770664093453;

/// Dense matrix as nested rows, for the oracle only.
fn to_rows(m: &sbv::CovMatrix) -> Vec<Vec<f64>> {
    (0..m.rows)
        .map(|i| (0..m.cols).map(|j| m.at(i, j)).collect())
        .collect()
}

/// log-determinant via Gaussian elimination with partial pivoting.
fn log_det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut log_abs = 0.0;
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
        assert!(pivot != 0.0, "singular matrix in oracle");
        if pivot < 0.0 {
            sign = -sign;
        }
        log_abs += pivot.abs().ln();
        for i in k + 1..n {
            let f = a[i][k] / pivot;
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    assert!(sign > 0.0, "negative determinant in oracle");
    log_abs
}

/// Explicit inverse via Gauss-Jordan with partial pivoting.
fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
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

fn quad_form(inv: &[Vec<f64>], y: &[f64]) -> f64 {
    let n = y.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += y[i] * inv[i][j] * y[j];
        }
    }
    s
}

fn anisotropic_params(d: usize, seed: u64) -> KernelParams {
    let mut rng = rng::stream(seed);
    let beta: Vec<f64> = (0..d).map(|_| 0.1 + 0.6 * rng::uniform01(&mut rng)).collect();
    KernelParams::new(
        0.5 + rng::uniform01(&mut rng),
        beta,
        3.5,
        0.01 + 0.05 * rng::uniform01(&mut rng),
    )
    .unwrap()
}

#[test]
fn loglik_matches_explicit_inverse_oracle() {
    let mut rng = rng::stream(11);
    let n = 50;
    let d = 4;
    let x = PointMatrix::random_unit_cube(n, d, &mut rng);
    let params = anisotropic_params(d, 77);
    let y = gp_simulate(&x, &params, 5).unwrap();

    let sigma = cov_matrix(&x, &x, &params).unwrap();
    let rows = to_rows(&sigma);
    let want = -0.5 * (n as f64 * LOG_2PI + log_det(rows.clone()) + quad_form(&invert(rows), &y));
    let got = exact_loglik(&x, &y, &params).unwrap();
    assert!(
        (got - want).abs() <= 1e-8 * want.abs(),
        "{got} vs {want}"
    );
}

#[test]
fn predict_matches_explicit_inverse_oracle() {
    let mut rng = rng::stream(21);
    let n = 30;
    let nstar = 5;
    let d = 3;
    let x = PointMatrix::random_unit_cube(n, d, &mut rng);
    let xstar = PointMatrix::random_unit_cube(nstar, d, &mut rng);
    let params = anisotropic_params(d, 78);
    let y = gp_simulate(&x, &params, 6).unwrap();

    let (mean, var) = exact_predict(&x, &y, &xstar, &params).unwrap();

    let sigma = cov_matrix(&x, &x, &params).unwrap();
    let cross = cov_matrix(&x, &xstar, &params).unwrap();
    let inv = invert(to_rows(&sigma));
    for j in 0..nstar {
        // mu_j = k_j' Sigma^{-1} y ; var_j = k(x*,x*) - k_j' Sigma^{-1} k_j
        let kj: Vec<f64> = (0..n).map(|i| cross.at(i, j)).collect();
        let mut siy = vec![0.0; n];
        for a in 0..n {
            for b in 0..n {
                siy[a] += inv[a][b] * y[b];
            }
        }
        let mu: f64 = kj.iter().zip(&siy).map(|(k, v)| k * v).sum();
        let mut sik = vec![0.0; n];
        for a in 0..n {
            for b in 0..n {
                sik[a] += inv[a][b] * kj[b];
            }
        }
        let reduction: f64 = kj.iter().zip(&sik).map(|(k, v)| k * v).sum();
        let prior = params.sigma2 + params.tau2;
        assert!((mean[j] - mu).abs() < 1e-8, "mean {j}");
        assert!((var[j] - (prior - reduction)).abs() < 1e-8, "var {j}");
    }
}

#[test]
fn loglik_is_permutation_invariant() {
    let mut rng = rng::stream(31);
    let n = 60;
    let d = 3;
    let x = PointMatrix::random_unit_cube(n, d, &mut rng);
    let params = anisotropic_params(d, 79);
    let y = gp_simulate(&x, &params, 8).unwrap();
    let base = exact_loglik(&x, &y, &params).unwrap();
    for seed in 0..5 {
        let mut r2 = rng::stream(seed);
        let perm = rng::sample_without_replacement(&mut r2, n, n);
        let xp = x.gather(&perm);
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let permuted = exact_loglik(&xp, &yp, &params).unwrap();
        assert!(
            (permuted - base).abs() <= 1e-10 * base.abs(),
            "seed {seed}: {permuted} vs {base}"
        );
    }
}

#[test]
fn predictive_variance_shrinks_with_nested_designs() {
    let mut rng = rng::stream(41);
    let d = 2;
    let x_all = PointMatrix::random_unit_cube(40, d, &mut rng);
    let params = KernelParams::new(1.0, vec![0.3, 0.3], 2.5, 1e-6).unwrap();
    let y_all = gp_simulate(&x_all, &params, 3).unwrap();
    let xstar = PointMatrix::random_unit_cube(6, d, &mut rng);
    let mut prev = vec![f64::INFINITY; 6];
    for &take in &[5usize, 10, 20, 40] {
        let idx: Vec<usize> = (0..take).collect();
        let x = x_all.gather(&idx);
        let y: Vec<f64> = y_all[..take].to_vec();
        let (_, var) = exact_predict(&x, &y, &xstar, &params).unwrap();
        for j in 0..6 {
            assert!(
                var[j] <= prev[j] + 1e-9,
                "take={take} j={j}: {} > {}",
                var[j],
                prev[j]
            );
        }
        prev = var;
    }
}
