//! Blockwise Vecchia likelihood, prediction, and conditional simulation.
//!
//! The joint density is approximated as a product of per-block Gaussian
//! conditionals, each block conditioning on its `m` nearest
//! previously-ordered points. The four classic variants share one code
//! path here: the variant decides whether clustering, ordering, and
//! neighbor search happen in anisotropically scaled space (SV, SBV) or
//! unscaled space (CV, BV), and whether blocks are singletons (CV, SV).
//! Kernel evaluation always uses the supplied parameters, so approximation
//! quality can be compared across variants at a common model.

use rayon::prelude::*;

use crate::data::{Dataset, PointMatrix};
use crate::distsim::WorkerGroup;
use crate::error::{Error, FactorStage, Result};
use crate::kernel::{cov_matrix, CovMatrix, KernelParams};
use crate::linalg::dot;
use crate::nns::{self, NeighborSets, NnsStats};
use crate::partition::{self, BlockPartition};
use crate::rng::{substream, NormalSource};
use crate::stats;

const LOG_2PI: f64 = 1.8378770664093453;
/// Predicted variances above this (negative) floor clamp to zero; lower
/// values are treated as numerical failures.
const VARIANCE_CLAMP: f64 = -1e-10;

/// Vecchia family member.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Classic: singleton blocks, unscaled geometry.
    Classic,
    /// Block: clustered blocks, unscaled geometry.
    Block,
    /// Scaled: singleton blocks, anisotropic scaling.
    Scaled,
    /// Scaled Block: clustered blocks with anisotropic scaling.
    ScaledBlock,
}

impl Variant {
    pub fn uses_scaling(self) -> bool {
        matches!(self, Variant::Scaled | Variant::ScaledBlock)
    }

    pub fn singleton_blocks(self) -> bool {
        matches!(self, Variant::Classic | Variant::Scaled)
    }

    pub fn abbreviation(self) -> &'static str {
        match self {
            Variant::Classic => "CV",
            Variant::Block => "BV",
            Variant::Scaled => "SV",
            Variant::ScaledBlock => "SBV",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CV" => Ok(Variant::Classic),
            "BV" => Ok(Variant::Block),
            "SV" => Ok(Variant::Scaled),
            "SBV" => Ok(Variant::ScaledBlock),
            other => Err(Error::invalid(format!(
                "unknown variant '{other}' (expected CV, BV, SV, or SBV)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.abbreviation())
    }
}

/// Seeds for the stochastic pipeline stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub cluster: u64,
    pub order: u64,
    pub sim: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            cluster: 0,
            order: 1,
            sim: 2,
        }
    }
}

/// Full approximation configuration.
#[derive(Debug, Clone)]
pub struct VecchiaConfig {
    pub variant: Variant,
    /// Target mean block size for estimation / prediction.
    pub bs_est: usize,
    pub bs_pred: usize,
    /// Conditioning-set sizes for estimation / prediction.
    pub m_est: usize,
    pub m_pred: usize,
    /// Candidate-radius expansion factor for the neighbor search.
    pub alpha: f64,
    pub seeds: Seeds,
    /// Conditional-simulation draws per prediction point.
    pub n_sim: usize,
    pub ci_level: f64,
    /// Simulated worker count.
    pub workers: usize,
}

impl Default for VecchiaConfig {
    fn default() -> Self {
        VecchiaConfig {
            variant: Variant::ScaledBlock,
            bs_est: 100,
            bs_pred: 10,
            m_est: 60,
            m_pred: 120,
            alpha: nns::DEFAULT_ALPHA,
            seeds: Seeds::default(),
            n_sim: 1000,
            ci_level: 0.95,
            workers: 1,
        }
    }
}

impl VecchiaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.variant.singleton_blocks() && self.bs_est != 1 {
            return Err(Error::invalid(format!(
                "variant {} requires bs_est = 1, got {}",
                self.variant, self.bs_est
            )));
        }
        if self.bs_est == 0 || self.bs_pred == 0 {
            return Err(Error::invalid("block sizes must be at least 1"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::invalid("alpha must be positive"));
        }
        if self.n_sim < 2 {
            return Err(Error::invalid("n_sim must be at least 2"));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::invalid("ci_level must lie in (0, 1)"));
        }
        if self.workers == 0 {
            return Err(Error::invalid("worker count must be at least 1"));
        }
        Ok(())
    }

    /// Geometry used for clustering, ordering, and neighbor search:
    /// the model's ranges for scaled variants, unit (unscaled) otherwise.
    pub fn geometry_scaling(&self, beta: &[f64]) -> Vec<f64> {
        if self.variant.uses_scaling() {
            beta.to_vec()
        } else {
            vec![1.0; beta.len()]
        }
    }
}

/// Frozen preprocessing artifacts: blocks, ordering, conditioning sets.
/// Likelihood evaluations reuse one of these across all optimizer
/// iterations.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub partition: BlockPartition,
    /// Preprocessing owner of each block.
    pub owner: Vec<usize>,
    pub neighbors: NeighborSets,
    /// Geometry scaling the artifacts were built with.
    pub scaling: Vec<f64>,
    pub nns_stats: NnsStats,
    /// Largest worker load divided by the balanced load `n / P`.
    pub load_imbalance: f64,
    /// Structural fingerprint of (blocks, order, neighbor sets).
    pub hash: u64,
}

struct BlockLayout {
    partition: BlockPartition,
    owner: Vec<usize>,
    load_imbalance: f64,
}

/// Cluster a dataset into blocks: all-to-all worker assignment along the
/// most relevant dimension of `geometry`, per-worker random anchor
/// clustering toward mean block size `bs`, and a seeded global ordering.
fn build_blocks(
    data: &Dataset,
    geometry: &[f64],
    bs: usize,
    workers: usize,
    cluster_seed: u64,
    order_seed: u64,
) -> Result<BlockLayout> {
    if data.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    if geometry.len() != data.dim() {
        return Err(Error::invalid(format!(
            "geometry scaling has {} entries for dimension {}",
            geometry.len(),
            data.dim()
        )));
    }
    let n = data.len();
    let d_max = partition::relevant_dim(geometry);
    let mut group = WorkerGroup::new(workers)?;

    // Redistribute points: initial contiguous shards, then all-to-all by
    // the unscaled coordinate along the most relevant dimension.
    let mut outboxes: Vec<Vec<(usize, usize)>> = Vec::with_capacity(workers);
    for p in 0..workers {
        let lo = p * n / workers;
        let hi = (p + 1) * n / workers;
        let mut outbox = Vec::with_capacity(hi - lo);
        for i in lo..hi {
            let dest = partition::partition_assign(data.points.row(i)[d_max], workers)?;
            outbox.push((dest, i));
        }
        outboxes.push(outbox);
    }
    let locals = group.all_to_all(outboxes)?;

    let scaled = data.points.scale_by(geometry);
    let mut blocks = Vec::new();
    let mut idents = Vec::new();
    let mut owner = Vec::new();
    let mut center_rows = Vec::new();
    for (p, local) in locals.iter().enumerate() {
        if local.is_empty() {
            continue;
        }
        let k_p = ((local.len() as f64 / bs as f64).round() as usize).clamp(1, local.len());
        let part = partition::rac_cluster(local, &scaled, k_p, substream(cluster_seed, p as u64))?;
        for (l, members) in part.blocks.into_iter().enumerate() {
            center_rows.push(part.centers.row(l).to_vec());
            blocks.push(members);
            idents.push((p, l));
            owner.push(p);
        }
    }
    let order = partition::order_by_keys(order_seed, &idents);
    let centers = PointMatrix::from_rows(center_rows);
    let max_load = locals.iter().map(Vec::len).max().unwrap_or(0);
    let load_imbalance = max_load as f64 / (n as f64 / workers as f64);
    Ok(BlockLayout {
        partition: BlockPartition {
            blocks,
            centers,
            order,
        },
        owner,
        load_imbalance,
    })
}

fn preprocess_hash(partition: &BlockPartition, neighbors: &NeighborSets) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    partition.blocks.hash(&mut h);
    partition.order.hash(&mut h);
    for s in &neighbors.sets {
        s.hash(&mut h);
    }
    h.finish()
}

/// Run the full estimation preprocessing: partitioning, clustering,
/// ordering, and the filtered exact neighbor search.
pub fn preprocess(
    data: &Dataset,
    config: &VecchiaConfig,
    geometry: &[f64],
) -> Result<Preprocessed> {
    config.validate()?;
    let layout = build_blocks(
        data,
        geometry,
        config.bs_est,
        config.workers,
        config.seeds.cluster,
        config.seeds.order,
    )?;
    let scaled = data.points.scale_by(geometry);
    let (neighbors, nns_stats) = nns::filtered_knn_all(
        &scaled,
        &layout.partition,
        &layout.owner,
        config.workers,
        config.m_est,
        config.alpha,
    )?;
    let hash = preprocess_hash(&layout.partition, &neighbors);
    Ok(Preprocessed {
        partition: layout.partition,
        owner: layout.owner,
        neighbors,
        scaling: geometry.to_vec(),
        nns_stats,
        load_imbalance: layout.load_imbalance,
        hash,
    })
}

/// Preprocessing with externally supplied blocks (single-owner layout):
/// the ordering and neighbor search run unchanged. Lets alternative
/// clusterings be evaluated under the same likelihood.
pub fn preprocess_with_blocks(
    data: &Dataset,
    config: &VecchiaConfig,
    geometry: &[f64],
    blocks: Vec<Vec<usize>>,
) -> Result<Preprocessed> {
    config.validate()?;
    let scaled = data.points.scale_by(geometry);
    let covered: usize = blocks.iter().map(Vec::len).sum();
    if covered != data.len() {
        return Err(Error::invalid(format!(
            "supplied blocks cover {covered} of {} points",
            data.len()
        )));
    }
    let base = BlockPartition::from_blocks(blocks, &scaled)?;
    let partition = partition::reorder_blocks(&base, config.seeds.order);
    let owner = vec![0usize; partition.len()];
    let (neighbors, nns_stats) = nns::filtered_knn_all(
        &scaled,
        &partition,
        &owner,
        1,
        config.m_est,
        config.alpha,
    )?;
    let hash = preprocess_hash(&partition, &neighbors);
    Ok(Preprocessed {
        partition,
        owner,
        neighbors,
        scaling: geometry.to_vec(),
        nns_stats,
        load_imbalance: 1.0,
        hash,
    })
}

/// One block's covariance triplet and response slices, laid out for
/// independent factorization.
#[derive(Debug, Clone)]
pub struct BlockBatch {
    pub block: usize,
    /// bs x bs marginal covariance of the block (nugget on the diagonal).
    pub sigma_lk: CovMatrix,
    /// m x m covariance of the conditioning set.
    pub sigma_con: CovMatrix,
    /// m x bs cross covariance, neighbors by block.
    pub sigma_cross: CovMatrix,
    pub y_block: Vec<f64>,
    pub y_neighbors: Vec<f64>,
}

/// Build the covariance triplet for one block.
pub fn assemble_block(
    data: &Dataset,
    partition: &BlockPartition,
    neighbors: &NeighborSets,
    params: &KernelParams,
    block: usize,
) -> Result<BlockBatch> {
    let members = &partition.blocks[block];
    let neigh = &neighbors.sets[block];
    let pts_block = data.points.gather(members);
    let pts_neigh = data.points.gather(neigh);
    let sigma_lk = cov_matrix(&pts_block, &pts_block, params)?;
    let sigma_con = cov_matrix(&pts_neigh, &pts_neigh, params)?;
    let sigma_cross = cov_matrix(&pts_neigh, &pts_block, params)?;
    Ok(BlockBatch {
        block,
        sigma_lk,
        sigma_con,
        sigma_cross,
        y_block: members.iter().map(|&i| data.responses[i]).collect(),
        y_neighbors: neigh.iter().map(|&i| data.responses[i]).collect(),
    })
}

/// Materialize the whole batch collection. The likelihood path streams
/// block by block instead; this exists for inspection and tests.
pub fn assemble_batches(
    data: &Dataset,
    partition: &BlockPartition,
    neighbors: &NeighborSets,
    params: &KernelParams,
) -> Result<Vec<BlockBatch>> {
    (0..partition.len())
        .map(|b| assemble_block(data, partition, neighbors, params, b))
        .collect()
}

/// Conditional moments of one block given its neighbors:
/// `mu = W' y'` and `Sigma_new = Sigma_lk - W' W` with
/// `W = L^{-1} Sigma_cross`, `y' = L^{-1} y_J`, `L = chol(Sigma_con)`.
/// Consumes the batch and factors in place.
fn conditional_moments(mut batch: BlockBatch) -> Result<(Vec<f64>, CovMatrix, Vec<f64>, usize)> {
    let block = batch.block;
    let bs = batch.sigma_lk.rows;
    if batch.sigma_con.rows == 0 {
        return Ok((vec![0.0; bs], batch.sigma_lk, batch.y_block, block));
    }
    batch
        .sigma_con
        .cholesky_lower_in_place()
        .map_err(|e| stage_err(e, block, FactorStage::Conditioning))?;
    let l = &batch.sigma_con;
    l.solve_lower_matrix_in_place(&mut batch.sigma_cross);
    l.solve_lower_in_place(&mut batch.y_neighbors);
    let w = &batch.sigma_cross;
    let yp = &batch.y_neighbors;
    let mut sigma_new = batch.sigma_lk;
    for j in 0..bs {
        for i in j..bs {
            let v = sigma_new.at(i, j) - dot(w.col(i), w.col(j));
            sigma_new.set(i, j, v);
            sigma_new.set(j, i, v);
        }
    }
    let mu: Vec<f64> = (0..bs).map(|i| dot(w.col(i), yp)).collect();
    Ok((mu, sigma_new, batch.y_block, block))
}

fn stage_err(e: Error, block: usize, stage: FactorStage) -> Error {
    match e {
        Error::NotPositiveDefinite { pivot } => Error::BlockFactorization {
            block,
            stage,
            pivot,
        },
        other => other,
    }
}

/// Log-density of one block given its conditioning set. Empty neighbor
/// sets fall back to the unconditional Gaussian term on `Sigma_lk`.
pub fn block_loglik(batch: &BlockBatch) -> Result<f64> {
    block_loglik_owned(batch.clone())
}

fn block_loglik_owned(batch: BlockBatch) -> Result<f64> {
    let block = batch.block;
    let (mu, mut sigma_new, y_block, _) = conditional_moments(batch)?;
    let bs = y_block.len();
    sigma_new
        .cholesky_lower_in_place()
        .map_err(|e| stage_err(e, block, FactorStage::Block))?;
    let mut v: Vec<f64> = y_block.iter().zip(&mu).map(|(y, m)| y - m).collect();
    sigma_new.solve_lower_in_place(&mut v);
    Ok(-0.5 * (dot(&v, &v) + sigma_new.log_det_from_cholesky() + bs as f64 * LOG_2PI))
}

/// Approximate log-likelihood from frozen preprocessing artifacts.
///
/// Per-block terms are computed wherever convenient (they are pure
/// functions of the batch), gathered, and summed in global block order,
/// so the result is bit-identical for any evaluation worker count.
pub fn vecchia_loglik_with(
    data: &Dataset,
    pre: &Preprocessed,
    params: &KernelParams,
    workers: usize,
) -> Result<f64> {
    let mut group = WorkerGroup::new(workers)?;
    let ranks = pre.partition.ranks();
    let per_worker: Vec<Vec<(usize, f64)>> = (0..workers)
        .map(|p| {
            let mine: Vec<usize> = (0..pre.partition.len())
                .filter(|b| b % workers == p)
                .collect();
            mine.par_iter()
                .map(|&b| {
                    let batch = assemble_block(data, &pre.partition, &pre.neighbors, params, b)?;
                    Ok((ranks[b], block_loglik_owned(batch)?))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let replicas = group.all_gather(per_worker)?;
    // Every worker folds the identical rank-sorted list; keep worker 0's.
    let mut terms: Vec<(usize, f64)> = replicas[0].iter().flatten().copied().collect();
    terms.sort_unstable_by_key(|&(rank, _)| rank);
    Ok(terms.into_iter().map(|(_, ll)| ll).sum())
}

/// Approximate log-likelihood end to end: preprocess with the geometry
/// implied by the variant, then evaluate.
pub fn vecchia_loglik(data: &Dataset, config: &VecchiaConfig, params: &KernelParams) -> Result<f64> {
    params.validate()?;
    if params.dim() != data.dim() {
        return Err(Error::invalid(format!(
            "kernel has {} ranges for dimension {}",
            params.dim(),
            data.dim()
        )));
    }
    let geometry = config.geometry_scaling(&params.beta);
    let pre = preprocess(data, config, &geometry)?;
    vecchia_loglik_with(data, &pre, params, config.workers)
}

/// Per-point predictive moments.
#[derive(Debug, Clone)]
pub struct PredictOutput {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Blockwise prediction: test points are clustered into blocks of mean
/// size `bs_pred`, each conditioned on its `m_pred` nearest training
/// points (no ordering constraint), and the conditional mean and the
/// diagonal of the conditional covariance are returned per point.
pub fn vecchia_predict(
    train: &Dataset,
    test_points: &PointMatrix,
    config: &VecchiaConfig,
    params: &KernelParams,
) -> Result<PredictOutput> {
    config.validate()?;
    params.validate()?;
    if test_points.dim() != train.dim() {
        return Err(Error::invalid(format!(
            "test dimension {} does not match training dimension {}",
            test_points.dim(),
            train.dim()
        )));
    }
    if params.dim() != train.dim() {
        return Err(Error::invalid("kernel dimension does not match data"));
    }
    let geometry = config.geometry_scaling(&params.beta);

    let train_layout = build_blocks(
        train,
        &geometry,
        config.bs_est,
        config.workers,
        config.seeds.cluster,
        config.seeds.order,
    )?;
    let test_data = Dataset::from_parts(test_points.clone(), vec![0.0; test_points.len()])?;
    let test_layout = build_blocks(
        &test_data,
        &geometry,
        config.bs_pred,
        config.workers,
        substream(config.seeds.cluster, 0x70726564), // independent stream for test blocks
        substream(config.seeds.order, 0x70726564),
    )?;

    let train_scaled = train.points.scale_by(&geometry);
    let test_scaled = test_points.scale_by(&geometry);
    let (neighbors, _) = nns::filtered_knn_predict(
        &train_scaled,
        &train_layout.partition,
        &train_layout.owner,
        &test_scaled,
        &test_layout.partition,
        &test_layout.owner,
        config.workers,
        config.m_pred,
        config.alpha,
    )?;

    let queries = &test_layout.partition;
    let results: Vec<(usize, Vec<f64>, Vec<f64>)> = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let members = &queries.blocks[q];
            let neigh = &neighbors.sets[q];
            let pts_block = test_points.gather(members);
            let pts_neigh = train.points.gather(neigh);
            let sigma_lk = cov_matrix(&pts_block, &pts_block, params)?;
            let sigma_con = cov_matrix(&pts_neigh, &pts_neigh, params)?;
            let sigma_cross = cov_matrix(&pts_neigh, &pts_block, params)?;
            let batch = BlockBatch {
                block: q,
                sigma_lk,
                sigma_con,
                sigma_cross,
                y_block: vec![0.0; members.len()],
                y_neighbors: neigh.iter().map(|&i| train.responses[i]).collect(),
            };
            let (mu, sigma_new, _, _) = conditional_moments(batch)?;
            let mut var = Vec::with_capacity(members.len());
            for (k, &i) in members.iter().enumerate() {
                let raw = sigma_new.at(k, k);
                if raw < VARIANCE_CLAMP {
                    return Err(Error::invalid(format!(
                        "negative predictive variance {raw} at test point {i}"
                    )));
                }
                var.push(raw.max(0.0));
            }
            Ok((q, mu, var))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mean = vec![0.0; test_points.len()];
    let mut variance = vec![0.0; test_points.len()];
    for (q, mu, var) in results {
        for (k, &i) in queries.blocks[q].iter().enumerate() {
            mean[i] = mu[k];
            variance[i] = var[k];
        }
    }
    Ok(PredictOutput { mean, variance })
}

/// Summary of the conditional simulation at one prediction point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSummary {
    pub sim_mean: f64,
    pub sim_sd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Draw `n_sim` normal samples per point around the predictive moments
/// and summarize them with a two-sided normal confidence interval at
/// `ci_level`.
pub fn conditional_simulate(
    mean: &[f64],
    variance: &[f64],
    n_sim: usize,
    seed: u64,
    ci_level: f64,
) -> Result<Vec<SimSummary>> {
    if mean.len() != variance.len() {
        return Err(Error::invalid("mean and variance lengths differ"));
    }
    if n_sim < 2 {
        return Err(Error::invalid("n_sim must be at least 2"));
    }
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(Error::invalid("ci_level must lie in (0, 1)"));
    }
    if let Some(v) = variance.iter().find(|v| **v < 0.0) {
        return Err(Error::invalid(format!("negative variance {v}")));
    }
    let z = stats::z_for_ci(ci_level);
    let mut src = NormalSource::new(seed);
    let mut out = Vec::with_capacity(mean.len());
    let mut draws = vec![0.0; n_sim];
    for (&mu, &var) in mean.iter().zip(variance) {
        let sd = var.sqrt();
        for dv in &mut draws {
            *dv = mu + sd * src.next();
        }
        let sim_mean = stats::mean(&draws);
        let sim_sd = stats::sample_variance(&draws).sqrt();
        out.push(SimSummary {
            sim_mean,
            sim_sd,
            ci_lo: sim_mean - z * sim_sd,
            ci_hi: sim_mean + z * sim_sd,
        });
    }
    Ok(out)
}
