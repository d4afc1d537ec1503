//! Reference Lloyd clustering, used only by the benchmark suite as the
//! comparison baseline for random anchor clustering.

use sbv::data::PointMatrix;
use sbv::rng;

/// Fixed-iteration K-means over scaled coordinates: seeded uniform
/// initial centers, nearest-center assignment (ties to the lower center
/// index), mean updates; empty clusters keep their previous center and
/// are dropped from the final block list.
pub fn kmeans_blocks(scaled: &PointMatrix, k: usize, iters: usize, seed: u64) -> Vec<Vec<usize>> {
    let n = scaled.len();
    let d = scaled.dim();
    assert!(k >= 1 && k <= n);
    let mut stream = rng::stream(seed);
    let init = rng::sample_without_replacement(&mut stream, n, k);
    let mut centers: Vec<Vec<f64>> = init.iter().map(|&i| scaled.row(i).to_vec()).collect();
    let mut assignment = vec![0usize; n];
    for _ in 0..iters {
        for i in 0..n {
            let x = scaled.row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let mut dist = 0.0;
                for t in 0..d {
                    let diff = x[t] - c[t];
                    dist += diff * diff;
                }
                if dist < best_d {
                    best_d = dist;
                    best = j;
                }
            }
            assignment[i] = best;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assignment[i]] += 1;
            for t in 0..d {
                sums[assignment[i]][t] += scaled.row(i)[t];
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for t in 0..d {
                    centers[j][t] = sums[j][t] / counts[j] as f64;
                }
            }
        }
    }
    let mut blocks = vec![Vec::new(); k];
    for i in 0..n {
        blocks[assignment[i]].push(i);
    }
    blocks.retain(|b| !b.is_empty());
    blocks
}
