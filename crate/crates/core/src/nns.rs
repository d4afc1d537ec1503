//! Filtered exact m-nearest-neighbor search for block centers.
//!
//! Neighbor candidates are restricted in two stages before a brute-force
//! scan: a coarse center-to-center filter decides which blocks travel
//! between workers, and a fine center-to-point filter keeps points
//! within a Monte-Carlo radius `lambda` of the query center. Unlike a
//! bare radius search, the search here is exact by construction: any
//! block whose candidate set cannot prove its `m` nearest admissible
//! points retries with `lambda` doubled until the result is certain.
//!
//! Distances are center-to-point in scaled space and compared squared;
//! ties break toward the lower global id everywhere, so results are
//! stable under permutations and worker layouts.

use rayon::prelude::*;

use crate::data::PointMatrix;
use crate::distsim::WorkerGroup;
use crate::error::Result;
use crate::partition::{sq_dist, BlockPartition};

/// Neighbor search flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NnsMode {
    /// Conditioning sets for estimation: only points in blocks strictly
    /// earlier in the block ordering are admissible.
    Estimation,
    /// Prediction: all corpus (training) points are admissible.
    Prediction,
}

/// Per-block ordered conditioning sets: global point ids, ascending
/// distance to the block center, at most `m` entries each.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSets {
    pub sets: Vec<Vec<usize>>,
}

/// Search diagnostics surfaced in fit reports.
#[derive(Debug, Clone, Copy, Default)]
pub struct NnsStats {
    /// Blocks that needed at least one radius escalation.
    pub escalated_blocks: usize,
    /// Total radius doublings across all blocks.
    pub escalations: usize,
    /// Candidate-exchange rounds executed.
    pub rounds: usize,
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, v| acc * v as f64)
}

/// Monte-Carlo candidate radius: `(alpha * m * zeta_d / n)^(1/d)` with
/// `zeta_d = Gamma(d/2+1) / pi^(d/2)` for even `d` and
/// `2 pi^((d-1)/2) Gamma((d+1)/2) / Gamma(d+1)` for odd `d`.
pub fn distance_threshold(n: usize, m: usize, d: usize, alpha: f64) -> f64 {
    assert!(n >= 1 && m >= 1 && d >= 1 && alpha > 0.0);
    let zeta = if d % 2 == 0 {
        factorial(d / 2) / std::f64::consts::PI.powi(d as i32 / 2)
    } else {
        2.0 * std::f64::consts::PI.powi((d as i32 - 1) / 2) * factorial((d - 1) / 2)
            / factorial(d)
    };
    (alpha * m as f64 * zeta / n as f64).powf(1.0 / d as f64)
}

/// Default candidate-set expansion factor.
pub const DEFAULT_ALPHA: f64 = 100.0;

/// Block metadata replicated to every worker before the coarse exchange.
#[derive(Debug, Clone)]
pub struct BlockSummary {
    pub block: usize,
    pub worker: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    pub rank: usize,
    pub size: usize,
}

/// Build the replicated summaries for a partition whose blocks are owned
/// by `owner` (one worker id per block).
pub fn block_summaries(
    partition: &BlockPartition,
    scaled: &PointMatrix,
    owner: &[usize],
) -> Vec<BlockSummary> {
    let ranks = partition.ranks();
    let radii = partition.radii(scaled);
    (0..partition.len())
        .map(|b| BlockSummary {
            block: b,
            worker: owner[b],
            center: partition.centers.row(b).to_vec(),
            radius: radii[b],
            rank: ranks[b],
            size: partition.blocks[b].len(),
        })
        .collect()
}

/// Coarse candidate selection: block `q` is a candidate for worker `p`
/// iff some center owned by `p` lies within `lambda_blocks` of `q`'s
/// center. Returns one sorted candidate id list per worker.
pub fn coarse_candidates(
    summaries: &[BlockSummary],
    workers: usize,
    lambda_blocks: f64,
) -> Vec<Vec<usize>> {
    let t2 = lambda_blocks * lambda_blocks;
    let mut local_centers: Vec<Vec<&[f64]>> = vec![Vec::new(); workers];
    for s in summaries {
        local_centers[s.worker].push(&s.center);
    }
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); workers];
    for (p, cands) in out.iter_mut().enumerate() {
        for q in summaries {
            if local_centers[p]
                .iter()
                .any(|c| sq_dist(c, &q.center) <= t2)
            {
                cands.push(q.block);
            }
        }
        cands.sort_unstable();
    }
    out
}

/// Fine candidate selection for one query center: points of the
/// candidate blocks that are order-admissible and strictly within
/// `lambda` of the center.
pub fn fine_candidates(
    center: &[f64],
    candidate_blocks: &[usize],
    partition: &BlockPartition,
    scaled: &PointMatrix,
    lambda: f64,
    my_rank: usize,
    mode: NnsMode,
) -> Vec<usize> {
    let ranks = partition.ranks();
    let l2 = lambda * lambda;
    let mut out = Vec::new();
    for &b in candidate_blocks {
        if mode == NnsMode::Estimation && ranks[b] >= my_rank {
            continue;
        }
        for &i in &partition.blocks[b] {
            if sq_dist(center, scaled.row(i)) < l2 {
                out.push(i);
            }
        }
    }
    out
}

#[inline]
fn cmp_dist_id(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Brute-force m-NN over an explicit candidate set: the `min(m, |S|)`
/// nearest by (squared) distance, ties to the lower id, ascending.
pub fn knn_brute(center: &[f64], candidates: &[usize], scaled: &PointMatrix, m: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .map(|&i| (sq_dist(center, scaled.row(i)), i))
        .collect();
    if scored.len() > m && m > 0 {
        scored.select_nth_unstable_by(m - 1, cmp_dist_id);
        scored.truncate(m);
    } else if m == 0 {
        scored.clear();
    }
    scored.sort_unstable_by(cmp_dist_id);
    scored.into_iter().map(|(_, i)| i).collect()
}

/// Exhaustive reference search over an admissible set, full sort, same
/// distance and tie rule as [`knn_brute`].
pub fn knn_oracle(center: &[f64], admissible: &[usize], scaled: &PointMatrix, m: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = admissible
        .iter()
        .map(|&i| (sq_dist(center, scaled.row(i)), i))
        .collect();
    scored.sort_by(cmp_dist_id);
    scored.truncate(m);
    scored.into_iter().map(|(_, i)| i).collect()
}

/// Exact conditioning sets for every block of an ordered partition:
/// composes the coarse exchange, fine filtering, and brute-force search,
/// escalating the radius per block until exactness is guaranteed.
pub fn filtered_knn_all(
    scaled: &PointMatrix,
    partition: &BlockPartition,
    owner: &[usize],
    workers: usize,
    m: usize,
    alpha: f64,
) -> Result<(NeighborSets, NnsStats)> {
    filtered_search(
        scaled,
        partition,
        owner,
        scaled,
        partition,
        owner,
        workers,
        m,
        alpha,
        NnsMode::Estimation,
    )
}

/// Prediction-mode search: neighbors for the query blocks (built on test
/// points, whose scaled coordinates are `query_scaled`) are drawn from
/// all corpus (training) points, no ordering constraint.
#[allow(clippy::too_many_arguments)]
pub fn filtered_knn_predict(
    corpus_scaled: &PointMatrix,
    corpus: &BlockPartition,
    corpus_owner: &[usize],
    query_scaled: &PointMatrix,
    queries: &BlockPartition,
    query_owner: &[usize],
    workers: usize,
    m: usize,
    alpha: f64,
) -> Result<(NeighborSets, NnsStats)> {
    filtered_search(
        corpus_scaled,
        corpus,
        corpus_owner,
        query_scaled,
        queries,
        query_owner,
        workers,
        m,
        alpha,
        NnsMode::Prediction,
    )
}

#[allow(clippy::too_many_arguments)]
fn filtered_search(
    corpus_scaled: &PointMatrix,
    corpus: &BlockPartition,
    corpus_owner: &[usize],
    query_scaled: &PointMatrix,
    queries: &BlockPartition,
    query_owner: &[usize],
    workers: usize,
    m: usize,
    alpha: f64,
    mode: NnsMode,
) -> Result<(NeighborSets, NnsStats)> {
    let n_corpus: usize = corpus.blocks.iter().map(Vec::len).sum();
    let bq = queries.len();
    let mut stats = NnsStats::default();
    if m == 0 {
        return Ok((
            NeighborSets {
                sets: vec![Vec::new(); bq],
            },
            stats,
        ));
    }

    let mut group = WorkerGroup::new(workers)?;
    let d = corpus_scaled.dim();
    let lambda0 = distance_threshold(n_corpus.max(1), m, d, alpha);

    // Replicate corpus block summaries once: every worker describes its
    // own blocks, then the gathered list is identical everywhere.
    let corpus_ranks = corpus.ranks();
    let corpus_radii = corpus.radii(corpus_scaled);
    let per_worker_summaries: Vec<Vec<BlockSummary>> = (0..workers)
        .map(|p| {
            (0..corpus.len())
                .filter(|&b| corpus_owner[b] == p)
                .map(|b| BlockSummary {
                    block: b,
                    worker: p,
                    center: corpus.centers.row(b).to_vec(),
                    radius: corpus_radii[b],
                    rank: corpus_ranks[b],
                    size: corpus.blocks[b].len(),
                })
                .collect()
        })
        .collect();
    let replicas = group.all_gather(per_worker_summaries)?;
    let corpus_summaries: Vec<BlockSummary> = replicas[0].iter().flatten().cloned().collect();
    let rho_max = corpus_radii.iter().copied().fold(0.0f64, f64::max);
    let query_ranks = queries.ranks();
    let query_radii = queries.radii(query_scaled);

    // Admissible-point counts per query, used to decide when a short
    // result is genuinely complete.
    let admissible_count: Vec<usize> = match mode {
        NnsMode::Prediction => vec![n_corpus; bq],
        NnsMode::Estimation => {
            // prefix sums over blocks in rank order
            let mut size_by_rank = vec![0usize; corpus.len()];
            for s in &corpus_summaries {
                size_by_rank[s.rank] = s.size;
            }
            let mut prefix = vec![0usize; corpus.len() + 1];
            for r in 0..corpus.len() {
                prefix[r + 1] = prefix[r] + size_by_rank[r];
            }
            (0..bq).map(|q| prefix[query_ranks[q]]).collect()
        }
    };

    let mut lambda: Vec<f64> = vec![lambda0; bq];
    let mut result: Vec<Option<Vec<usize>>> = vec![None; bq];
    let mut delivered: Vec<Vec<bool>> = vec![vec![false; corpus.len()]; workers];
    let mut available: Vec<Vec<usize>> = vec![Vec::new(); workers];

    for round in 0..64 {
        let active: Vec<usize> = (0..bq).filter(|&q| result[q].is_none()).collect();
        if active.is_empty() {
            break;
        }
        stats.rounds = round + 1;

        // Broadcast the active queries' current radii.
        let needs_out: Vec<Vec<(usize, f64)>> = (0..workers)
            .map(|p| {
                active
                    .iter()
                    .filter(|&&q| query_owner[q] == p)
                    .map(|&q| (q, lambda[q]))
                    .collect()
            })
            .collect();
        let needs_replicas = group.all_gather(needs_out)?;

        // Coarse exchange: owners ship not-yet-delivered blocks to every
        // worker with a query center in range.
        let mut outboxes: Vec<Vec<(usize, usize)>> = Vec::with_capacity(workers);
        for p in 0..workers {
            let needs = &needs_replicas[p];
            let mine: Vec<&BlockSummary> =
                corpus_summaries.iter().filter(|s| s.worker == p).collect();
            let mut outbox = Vec::new();
            for s in mine {
                for (dest, group_needs) in needs.iter().enumerate() {
                    if delivered[dest][s.block] {
                        continue;
                    }
                    let wanted = group_needs.iter().any(|&(q, lam)| {
                        if mode == NnsMode::Estimation && s.rank >= query_ranks[q] {
                            return false;
                        }
                        let t = lam + query_radii[q] + rho_max;
                        sq_dist(&s.center, queries.centers.row(q)) <= t * t
                    });
                    if wanted {
                        outbox.push((dest, s.block));
                    }
                }
            }
            outboxes.push(outbox);
        }
        let inboxes = group.all_to_all(outboxes)?;
        for (p, inbox) in inboxes.into_iter().enumerate() {
            for b in inbox {
                if !delivered[p][b] {
                    delivered[p][b] = true;
                    available[p].push(b);
                }
            }
        }

        // Fine filter + brute search per active query.
        let found: Vec<(usize, Option<Vec<usize>>)> = active
            .par_iter()
            .map(|&q| {
                let p = query_owner[q];
                let center = queries.centers.row(q);
                let cands = fine_candidates(
                    center,
                    &available[p],
                    corpus,
                    corpus_scaled,
                    lambda[q],
                    query_ranks[q],
                    mode,
                );
                let res = knn_brute(center, &cands, corpus_scaled, m);
                if res.len() >= m || res.len() >= admissible_count[q] {
                    (q, Some(res))
                } else {
                    (q, None)
                }
            })
            .collect();
        for (q, res) in found {
            match res {
                Some(r) => result[q] = Some(r),
                None => {
                    lambda[q] *= 2.0;
                    stats.escalations += 1;
                }
            }
        }
    }

    stats.escalated_blocks = lambda.iter().filter(|&&l| l > lambda0).count();
    let sets: Vec<Vec<usize>> = result
        .into_iter()
        .map(|r| r.expect("radius escalation failed to terminate"))
        .collect();
    Ok((NeighborSets { sets }, stats))
}

/// Map member indices to global ids and check the structural invariants
/// of a neighbor-set family against its partition (test support).
pub fn validate_neighbor_sets(
    sets: &NeighborSets,
    partition: &BlockPartition,
    mode: NnsMode,
    m: usize,
) -> std::result::Result<(), String> {
    let ranks = partition.ranks();
    let mut block_of = std::collections::HashMap::new();
    for (b, members) in partition.blocks.iter().enumerate() {
        for &i in members {
            block_of.insert(i, b);
        }
    }
    for (q, set) in sets.sets.iter().enumerate() {
        if set.len() > m {
            return Err(format!("block {q} has {} > m = {m} neighbors", set.len()));
        }
        let mut seen = std::collections::HashSet::new();
        for &i in set {
            if !seen.insert(i) {
                return Err(format!("block {q} repeats neighbor {i}"));
            }
            if mode == NnsMode::Estimation {
                let b = block_of[&i];
                if ranks[b] >= ranks[q] {
                    return Err(format!(
                        "block {q} (rank {}) conditions on point {i} from rank {}",
                        ranks[q], ranks[b]
                    ));
                }
            }
        }
        if mode == NnsMode::Estimation && ranks[q] == 0 && !set.is_empty() {
            return Err("first block in the ordering must have no neighbors".into());
        }
    }
    Ok(())
}
