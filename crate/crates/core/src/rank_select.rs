//! Channel-rank selection for the decomposed beamformers.
//!
//! Truncating cluster `g` to its `r_g` dominant eigenpairs trades a weaker
//! effective channel against a tighter fit of the per-cluster centroid. The
//! tradeoff is scored by the per-device surrogate
//! `lambda_min^-1(F^H F) (1 - d_P2(C_g, U_F)^2)^-1`, which depends only on
//! `r_g`, so clusters can be optimized one at a time.

use rayon::prelude::*;

use crate::aircomp::DeviceId;
use crate::channel::{ChannelRealization, ClusterModel, SystemDims};
use crate::design::{
    cluster_outer_factor, design_overlapping_with_rank, group_by_cluster, CentroidTerm,
};
use crate::error::{Error, Result};
use crate::numerics::{lambda_min, svd, OrthonormalBasis};

/// Keeps the top `r` eigenpairs of a cluster model.
pub fn truncate(model: &ClusterModel, r: usize, payload_dim: usize) -> Result<ClusterModel> {
    if r < payload_dim || r > model.rank() {
        return Err(Error::domain(format!(
            "rank {r} outside [{payload_dim}, {}]",
            model.rank()
        )));
    }
    model.leading(r)
}

/// Surrogate from a device's centroid term and the cluster centroid.
/// `1 - d_P2^2` is taken as `sigma_min(U_F^H C)^2`; orthogonal subspaces give
/// `f64::INFINITY`.
pub fn surrogate_from_term(term: &CentroidTerm, centroid: &OrthonormalBasis) -> Result<f64> {
    let cross = term.subspace.matrix().adjoint() * centroid.matrix();
    let overlap = svd(&cross).sigma_min().powi(2);
    if !(overlap > 0.0) || !(term.weight > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (term.weight * overlap.min(1.0)))
}

/// Surrogates of every device in one cluster truncated to rank `r`, in device order.
pub fn cluster_surrogates(
    model: &ClusterModel,
    devices: &[&ChannelRealization],
    r: usize,
    payload_dim: usize,
) -> Result<Vec<f64>> {
    let truncated = truncate(model, r, payload_dim)?;
    let (centroid, terms) = cluster_outer_factor(&truncated, devices, payload_dim)?;
    terms
        .iter()
        .map(|t| surrogate_from_term(t, &centroid))
        .collect()
}

/// Surrogate of a single device, with the centroid recomputed for its cluster at rank `r`.
pub fn surrogate_mse(
    model: &ClusterModel,
    devices: &[&ChannelRealization],
    device: usize,
    r: usize,
    payload_dim: usize,
) -> Result<f64> {
    let values = cluster_surrogates(model, devices, r, payload_dim)?;
    values
        .get(device)
        .copied()
        .ok_or_else(|| Error::dim(format!("device {device} not in cluster")))
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateReport {
    /// `values[g][k]`.
    pub values: Vec<Vec<f64>>,
    pub max: f64,
    pub bottleneck: DeviceId,
}

impl SurrogateReport {
    pub fn from_values(values: Vec<Vec<f64>>) -> Self {
        let mut max = f64::NEG_INFINITY;
        let mut bottleneck = DeviceId {
            cluster: 0,
            device: 0,
        };
        for (g, row) in values.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                if v > max {
                    max = v;
                    bottleneck = DeviceId {
                        cluster: g,
                        device: k,
                    };
                }
            }
        }
        SurrogateReport {
            values,
            max,
            bottleneck,
        }
    }

    pub fn cluster_max(&self, g: usize) -> f64 {
        max_of(&self.values[g])
    }
}

/// Per-cluster ranks `L <= r_g <= R_g`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankAssignment {
    pub ranks: Vec<usize>,
}

impl RankAssignment {
    pub fn new(ranks: Vec<usize>, models: &[ClusterModel], payload_dim: usize) -> Result<Self> {
        if ranks.len() != models.len() {
            return Err(Error::dim("one rank per cluster is required"));
        }
        for (r, m) in ranks.iter().zip(models) {
            if *r < payload_dim || *r > m.rank() {
                return Err(Error::domain(format!(
                    "rank {r} outside [{payload_dim}, {}]",
                    m.rank()
                )));
            }
        }
        Ok(RankAssignment { ranks })
    }

    pub fn full(models: &[ClusterModel]) -> Self {
        RankAssignment {
            ranks: models.iter().map(ClusterModel::rank).collect(),
        }
    }

    /// Truncates each model to its assigned rank.
    pub fn apply(&self, models: &[ClusterModel], payload_dim: usize) -> Result<Vec<ClusterModel>> {
        models
            .iter()
            .zip(&self.ranks)
            .map(|(m, &r)| truncate(m, r, payload_dim))
            .collect()
    }
}

/// Surrogates of every device under an assignment.
pub fn evaluate_assignment(
    models: &[ClusterModel],
    channels: &[ChannelRealization],
    dims: &SystemDims,
    assignment: &RankAssignment,
) -> Result<SurrogateReport> {
    let groups = group_by_cluster(models.len(), channels)?;
    let values = models
        .iter()
        .zip(&groups)
        .zip(&assignment.ranks)
        .map(|((m, devs), &r)| cluster_surrogates(m, devs, r, dims.payload_dim))
        .collect::<Result<Vec<_>>>()?;
    Ok(SurrogateReport::from_values(values))
}

/// Index of the smallest value, earliest on ties. Infinite values rank last.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Best rank in `[L, R_g]` for one cluster and its worst-device surrogate.
fn best_cluster_rank(
    model: &ClusterModel,
    devices: &[&ChannelRealization],
    payload_dim: usize,
) -> Result<(usize, Vec<f64>)> {
    let per_rank = (payload_dim..=model.rank())
        .into_par_iter()
        .map(|r| cluster_surrogates(model, devices, r, payload_dim))
        .collect::<Result<Vec<_>>>()?;
    let maxima: Vec<f64> = per_rank.iter().map(|v| max_of(v)).collect();
    let i = argmin(&maxima);
    Ok((
        payload_dim + i,
        per_rank.into_iter().nth(i).unwrap_or_default(),
    ))
}

fn check_models(models: &[ClusterModel], dims: &SystemDims) -> Result<()> {
    dims.validate()?;
    if models.is_empty() {
        return Err(Error::domain("at least one cluster model is required"));
    }
    if let Some(m) = models.iter().find(|m| m.rank() < dims.payload_dim) {
        return Err(Error::domain(format!(
            "cluster rank {} below payload dimension {}",
            m.rank(),
            dims.payload_dim
        )));
    }
    Ok(())
}

/// One rank for all clusters, searched over `[L, min_g R_g]`.
pub fn select_homogeneous(
    models: &[ClusterModel],
    channels: &[ChannelRealization],
    dims: &SystemDims,
) -> Result<(usize, SurrogateReport)> {
    check_models(models, dims)?;
    let groups = group_by_cluster(models.len(), channels)?;
    let r_max = models.iter().map(ClusterModel::rank).min().unwrap_or(0);
    let reports = (dims.payload_dim..=r_max)
        .into_par_iter()
        .map(|r| {
            let values = models
                .iter()
                .zip(&groups)
                .map(|(m, devs)| cluster_surrogates(m, devs, r, dims.payload_dim))
                .collect::<Result<Vec<_>>>()?;
            Ok(SurrogateReport::from_values(values))
        })
        .collect::<Result<Vec<_>>>()?;
    let maxima: Vec<f64> = reports.iter().map(|r| r.max).collect();
    let i = argmin(&maxima);
    Ok((dims.payload_dim + i, reports.into_iter().nth(i).unwrap()))
}

#[derive(Clone, Debug)]
pub struct HeterogeneousSelection {
    pub assignment: RankAssignment,
    pub report: SurrogateReport,
    /// Global surrogate max after initialization and after every iteration.
    pub history: Vec<f64>,
    /// Iterations run, including the final one that changed nothing.
    pub iterations: usize,
    /// False when `max_iters` ran out before a fixed point.
    pub converged: bool,
}

/// Per-cluster ranks by bottleneck-driven coordinate descent.
///
/// Starts from `r_g = L`. Each iteration re-optimizes the cluster holding the
/// worst device and stops once that leaves every rank unchanged, or after
/// `max_iters` iterations.
pub fn select_heterogeneous(
    models: &[ClusterModel],
    channels: &[ChannelRealization],
    dims: &SystemDims,
    max_iters: usize,
) -> Result<HeterogeneousSelection> {
    check_models(models, dims)?;
    let groups = group_by_cluster(models.len(), channels)?;
    let mut ranks = vec![dims.payload_dim; models.len()];
    let mut values = models
        .iter()
        .zip(&groups)
        .map(|(m, devs)| cluster_surrogates(m, devs, dims.payload_dim, dims.payload_dim))
        .collect::<Result<Vec<_>>>()?;
    let mut report = SurrogateReport::from_values(values.clone());
    let mut history = vec![report.max];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let g = report.bottleneck.cluster;
        let (r, cluster_values) = best_cluster_rank(&models[g], &groups[g], dims.payload_dim)?;
        let changed = r != ranks[g];
        ranks[g] = r;
        values[g] = cluster_values;
        report = SurrogateReport::from_values(values.clone());
        history.push(report.max);
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(HeterogeneousSelection {
        assignment: RankAssignment { ranks },
        report,
        history,
        iterations,
        converged,
    })
}

/// Default iteration cap for [`select_heterogeneous`].
pub fn default_max_iters(n_clusters: usize) -> usize {
    2 * n_clusters
}

/// `max_{g,k} lambda_min^-1(A_o F F^H A_o^H)` for the two-tier design at common rank `r_s`.
pub fn overlapping_objective(
    models: &[ClusterModel],
    channels: &[ChannelRealization],
    dims: &SystemDims,
    r_s: usize,
) -> Result<f64> {
    let design = design_overlapping_with_rank(models, channels, dims, r_s)?;
    let mut worst = f64::NEG_INFINITY;
    for f in &design.effective {
        let af = &design.outer * &f.matrix;
        let lam = lambda_min(&(&af * af.adjoint()))?;
        worst = worst.max(if lam > 0.0 { 1.0 / lam } else { f64::INFINITY });
    }
    Ok(worst)
}

/// Common rank for the two-tier design, searched over `[L, min_g R_g]`.
pub fn select_overlapping(
    models: &[ClusterModel],
    channels: &[ChannelRealization],
    dims: &SystemDims,
) -> Result<(usize, f64)> {
    check_models(models, dims)?;
    let r_max = models.iter().map(ClusterModel::rank).min().unwrap_or(0);
    let values = (dims.payload_dim..=r_max)
        .into_par_iter()
        .map(|r| overlapping_objective(models, channels, dims, r))
        .collect::<Result<Vec<_>>>()?;
    let i = argmin(&values);
    Ok((dims.payload_dim + i, values[i]))
}
