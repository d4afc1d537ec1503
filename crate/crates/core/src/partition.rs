//! Worker partitioning, random anchor clustering, and block ordering.
//!
//! The preprocessing pipeline assigns points to workers along the most
//! relevant input dimension, clusters each worker's points around
//! uniformly drawn anchor points (no inter-worker communication), and
//! then orders all blocks globally by seeded random keys.

use crate::data::{Dataset, PointMatrix};
use crate::error::{Error, Result};
use crate::rng;

/// Index of the most relevant dimension: `argmax_i 1/beta_i`, ties going
/// to the lowest index.
pub fn relevant_dim(beta: &[f64]) -> usize {
    assert!(!beta.is_empty() && beta.iter().all(|b| *b > 0.0));
    let mut best = 0;
    for (i, b) in beta.iter().enumerate().skip(1) {
        if *b < beta[best] {
            best = i;
        }
    }
    best
}

/// Divide every coordinate by its range parameter; responses and ids are
/// untouched. The caller keeps the original dataset for reporting and
/// for worker assignment, which uses unscaled coordinates.
pub fn scale_inputs(dataset: &Dataset, beta: &[f64]) -> Result<Dataset> {
    if beta.len() != dataset.dim() {
        return Err(Error::invalid(format!(
            "beta length {} does not match dimension {}",
            beta.len(),
            dataset.dim()
        )));
    }
    if beta.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::invalid("every beta[i] must be positive"));
    }
    Ok(Dataset {
        points: dataset.points.scale_by(beta),
        responses: dataset.responses.clone(),
        global_ids: dataset.global_ids.clone(),
    })
}

/// Worker index for a normalized coordinate: `floor(x * P)`, clamped to
/// `P - 1` at `x = 1`. The coordinate comes from unit-cube inputs along
/// the most relevant dimension.
pub fn partition_assign(x: f64, workers: usize) -> Result<usize> {
    if workers == 0 {
        return Err(Error::invalid("worker count must be at least 1"));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!(
            "partition coordinate {x} outside [0, 1]; normalize inputs to the unit cube first"
        )));
    }
    Ok(((x * workers as f64) as usize).min(workers - 1))
}

/// Disjoint blocks over a point set, with per-block centers (means of
/// members in scaled space) and a global ordering of the blocks.
#[derive(Debug, Clone)]
pub struct BlockPartition {
    /// Per-block member indices into the originating dataset.
    pub blocks: Vec<Vec<usize>>,
    /// Per-block mean of member coordinates, in scaled space.
    pub centers: PointMatrix,
    /// Visit order: `order[rank] = block index`.
    pub order: Vec<usize>,
}

impl BlockPartition {
    /// Build from explicit member lists, computing centers and an
    /// identity ordering. Blocks must be nonempty and disjoint.
    pub fn from_blocks(blocks: Vec<Vec<usize>>, scaled: &PointMatrix) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("partition needs at least one block"));
        }
        let mut seen = std::collections::HashSet::new();
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::invalid("every block must be nonempty"));
            }
            for &i in b {
                if !seen.insert(i) {
                    return Err(Error::invalid(format!("point {i} appears in two blocks")));
                }
            }
        }
        let centers = compute_centers(&blocks, scaled);
        let order = (0..blocks.len()).collect();
        Ok(BlockPartition {
            blocks,
            centers,
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Inverse of `order`: `ranks()[block] = position in the ordering`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![0; self.order.len()];
        for (rank, &b) in self.order.iter().enumerate() {
            r[b] = rank;
        }
        r
    }

    /// Max member-to-center distance per block, in scaled space.
    pub fn radii(&self, scaled: &PointMatrix) -> Vec<f64> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(b, members)| {
                members
                    .iter()
                    .map(|&i| sq_dist(scaled.row(i), self.centers.row(b)).sqrt())
                    .fold(0.0f64, f64::max)
            })
            .collect()
    }
}

fn compute_centers(blocks: &[Vec<usize>], scaled: &PointMatrix) -> PointMatrix {
    let d = scaled.dim();
    let mut data = Vec::with_capacity(blocks.len() * d);
    for members in blocks {
        let mut c = vec![0.0; d];
        for &i in members {
            for (cj, xj) in c.iter_mut().zip(scaled.row(i)) {
                *cj += xj;
            }
        }
        let inv = 1.0 / members.len() as f64;
        data.extend(c.into_iter().map(|v| v * inv));
    }
    PointMatrix::new(data, blocks.len(), d)
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let t = a[i] - b[i];
        s += t * t;
    }
    s
}

/// Random anchor clustering of one worker's points (given as indices
/// into `scaled`): draw `k_p` anchors uniformly without replacement,
/// assign every point to its nearest anchor by squared distance in
/// scaled space (ties to the lowest anchor index; anchors stay in their
/// own block), then recompute centers as member means.
pub fn rac_cluster(
    local: &[usize],
    scaled: &PointMatrix,
    k_p: usize,
    seed: u64,
) -> Result<BlockPartition> {
    let n_p = local.len();
    if k_p == 0 || k_p > n_p {
        return Err(Error::invalid(format!(
            "anchor count {k_p} outside 1..={n_p}"
        )));
    }
    let mut rng = rng::stream(seed);
    let anchor_pos = rng::sample_without_replacement(&mut rng, n_p, k_p);
    let anchors: Vec<usize> = anchor_pos.iter().map(|&p| local[p]).collect();
    let mut assignment = vec![usize::MAX; n_p];
    for (j, &p) in anchor_pos.iter().enumerate() {
        assignment[p] = j;
    }
    for (pos, &i) in local.iter().enumerate() {
        if assignment[pos] != usize::MAX {
            continue; // anchors belong to their own block
        }
        let x = scaled.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, &a) in anchors.iter().enumerate() {
            let d = sq_dist(x, scaled.row(a));
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        assignment[pos] = best;
    }
    let mut blocks = vec![Vec::new(); k_p];
    for (pos, &i) in local.iter().enumerate() {
        blocks[assignment[pos]].push(i);
    }
    BlockPartition::from_blocks(blocks, scaled)
}

/// Random key for block ordering, derived from the ordering seed and the
/// block's stable identity `(worker, local index)`.
pub(crate) fn order_key(seed: u64, worker: usize, local: usize) -> u64 {
    rng::substream(seed, ((worker as u64) << 32) | local as u64)
}

/// Globally reorder blocks: each block draws a key from a stream keyed
/// by its identity, and the new order sorts the keys. Deterministic for
/// a fixed seed.
pub fn reorder_blocks(partition: &BlockPartition, seed: u64) -> BlockPartition {
    let idents: Vec<(usize, usize)> = (0..partition.len()).map(|b| (0, b)).collect();
    let order = order_by_keys(seed, &idents);
    BlockPartition {
        blocks: partition.blocks.clone(),
        centers: partition.centers.clone(),
        order,
    }
}

/// Sort positions `0..n` by `(key, worker, local)` for the given block
/// identities; used directly by the distributed pipeline where blocks
/// from different workers are merged.
pub(crate) fn order_by_keys(seed: u64, idents: &[(usize, usize)]) -> Vec<usize> {
    let mut keyed: Vec<(u64, usize, usize, usize)> = idents
        .iter()
        .enumerate()
        .map(|(pos, &(w, l))| (order_key(seed, w, l), w, l, pos))
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, _, _, pos)| pos).collect()
}
