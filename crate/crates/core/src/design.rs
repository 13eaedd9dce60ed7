//! Receive beamformer constructions.
//!
//! - [`design_disjoint`]: for clusters with non-overlapping AoA ranges,
//!   `A = sum_g C_g^H U_g^H` where `C_g` is the weighted subspace centroid of
//!   the cluster's reduced-dimension effective channels `F = Lambda^1/2 W`.
//! - [`design_overlapping`]: two-tier `A = A_o A_i`. The inner factor is a
//!   centroid of the clusters' dominant covariance subspaces, the outer factor
//!   a centroid of the effective channels seen through the inner factor.
//! - [`design_reference`]: the same centroid rule applied once over the full
//!   channels of all devices, ignoring cluster structure.
//!
//! Every centroid weights a device's left singular subspace `U_F` by
//! `lambda_min(F^H F) = sigma_min(F)^2`, both taken from one SVD.

use crate::aircomp::{AggregationBeamformer, Decomposition, DeviceId};
use crate::channel::{ChannelRealization, ClusterModel, SystemDims};
use crate::error::{Error, Result};
use crate::numerics::{principal_eigenspace, svd, CMatrix, OrthonormalBasis};

/// Relative singular value below which an effective channel is degenerate.
pub const DEGENERATE_RATIO: f64 = 1e-12;

/// Reduced-dimension channel of one device.
#[derive(Clone, Debug)]
pub struct EffectiveChannel {
    pub cluster_index: usize,
    pub device_index: usize,
    pub matrix: CMatrix,
}

impl EffectiveChannel {
    pub fn id(&self) -> DeviceId {
        DeviceId {
            cluster: self.cluster_index,
            device: self.device_index,
        }
    }
}

/// One device's contribution `weight * U_F U_F^H` to a centroid matrix.
#[derive(Clone, Debug)]
pub struct CentroidTerm {
    /// `lambda_min(F^H F)`.
    pub weight: f64,
    /// Column space of `F`.
    pub subspace: OrthonormalBasis,
}

/// Splits `lambda_min(F^H F)` and `U_F` out of one SVD.
pub fn centroid_term(f: &CMatrix, id: DeviceId) -> Result<CentroidTerm> {
    let degenerate = Error::DegenerateChannel {
        cluster: id.cluster,
        device: id.device,
    };
    if f.nrows() < f.ncols() || f.ncols() == 0 {
        return Err(degenerate);
    }
    let dec = svd(f);
    if !(dec.sigma_min() > DEGENERATE_RATIO * dec.sigma_max()) {
        return Err(degenerate);
    }
    Ok(CentroidTerm {
        weight: dec.sigma_min().powi(2),
        subspace: dec.u,
    })
}

/// `S = sum weight U U^H`.
pub fn centroid_matrix(terms: &[CentroidTerm]) -> Result<CMatrix> {
    let Some(first) = terms.first() else {
        return Err(Error::domain("centroid of an empty set of subspaces"));
    };
    let n = first.subspace.ambient_dim();
    let mut s = CMatrix::zeros(n, n);
    for t in terms {
        if t.subspace.ambient_dim() != n {
            return Err(Error::dim("centroid terms live in different spaces"));
        }
        s += t.subspace.projector().scale(t.weight);
    }
    Ok(s)
}

/// `d`-dimensional principal eigenspace of the weighted centroid matrix.
pub fn weighted_centroid(terms: &[CentroidTerm], d: usize) -> Result<OrthonormalBasis> {
    principal_eigenspace(&centroid_matrix(terms)?, d)
}

/// `F = gain * diag(sqrt(lambda)) W[..r, ..]` where `r` is the model rank.
pub fn effective_channel(
    model: &ClusterModel,
    ch: &ChannelRealization,
) -> Result<EffectiveChannel> {
    let r = model.rank();
    if ch.fading.nrows() < r {
        return Err(Error::dim(format!(
            "device ({}, {}) has {} fading rows, model needs {r}",
            ch.cluster_index,
            ch.device_index,
            ch.fading.nrows()
        )));
    }
    let w = ch.fading.rows(0, r);
    Ok(EffectiveChannel {
        cluster_index: ch.cluster_index,
        device_index: ch.device_index,
        matrix: (model.sqrt_eigenvalues() * w).scale(ch.gain),
    })
}

/// Groups realizations by cluster index, preserving their order.
pub fn group_by_cluster(
    n_clusters: usize,
    channels: &[ChannelRealization],
) -> Result<Vec<Vec<&ChannelRealization>>> {
    let mut groups = vec![Vec::new(); n_clusters];
    for ch in channels {
        groups
            .get_mut(ch.cluster_index)
            .ok_or_else(|| {
                Error::dim(format!(
                    "device ({}, {}) tagged to a cluster beyond the {n_clusters} models",
                    ch.cluster_index, ch.device_index
                ))
            })?
            .push(ch);
    }
    if let Some(g) = groups.iter().position(|v| v.is_empty()) {
        return Err(Error::domain(format!("cluster {g} has no devices")));
    }
    Ok(groups)
}

fn check_models(models: &[ClusterModel], dims: &SystemDims) -> Result<()> {
    dims.validate()?;
    if models.is_empty() {
        return Err(Error::domain("at least one cluster model is required"));
    }
    if models.len() != dims.n_clusters {
        return Err(Error::dim(format!(
            "{} models for {} clusters",
            models.len(),
            dims.n_clusters
        )));
    }
    let n = models[0].n_rx();
    if models.iter().any(|m| m.n_rx() != n) {
        return Err(Error::dim("cluster models disagree on the array size"));
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

/// Outer factor `C_g` of one cluster (`r_g x L`) and the centroid terms it came from.
pub fn cluster_outer_factor(
    model: &ClusterModel,
    devices: &[&ChannelRealization],
    payload_dim: usize,
) -> Result<(OrthonormalBasis, Vec<CentroidTerm>)> {
    let terms = devices
        .iter()
        .map(|ch| {
            let f = effective_channel(model, ch)?;
            centroid_term(&f.matrix, f.id())
        })
        .collect::<Result<Vec<_>>>()?;
    let c = weighted_centroid(&terms, payload_dim)?;
    Ok((c, terms))
}

#[derive(Clone, Debug)]
pub struct DisjointDesign {
    /// `C_g`, `r_g x L`, one per cluster.
    pub outer_factors: Vec<OrthonormalBasis>,
    /// `lambda_min(F^H F)` per cluster, per device.
    pub weights: Vec<Vec<f64>>,
    pub composed: AggregationBeamformer,
}

/// Decomposed beamformer for disjoint clusters. Uses each model's full rank;
/// pass truncated models to get a reduced-rank variant.
pub fn design_disjoint(
    models: &[ClusterModel],
    channels: &[ChannelRealization],
    dims: &SystemDims,
) -> Result<DisjointDesign> {
    check_models(models, dims)?;
    let groups = group_by_cluster(models.len(), channels)?;
    let mut outer_factors = Vec::with_capacity(models.len());
    let mut weights = Vec::with_capacity(models.len());
    for (model, devices) in models.iter().zip(&groups) {
        let (c, terms) = cluster_outer_factor(model, devices, dims.payload_dim)?;
        outer_factors.push(c);
        weights.push(terms.iter().map(|t| t.weight).collect());
    }
    let composed = AggregationBeamformer::from_decomposition(Decomposition::PerCluster {
        outer: outer_factors.clone(),
        bases: models.iter().map(|m| m.basis().clone()).collect(),
    })?;
    Ok(DisjointDesign {
        outer_factors,
        weights,
        composed,
    })
}

#[derive(Clone, Debug)]
pub struct OverlappingDesign {
    pub r_s: usize,
    /// `A_i`, `R_s x N_r`, orthonormal rows.
    pub inner: CMatrix,
    /// `A_o`, `L x R_s`, orthonormal rows.
    pub outer: CMatrix,
    /// Per-cluster inner-centroid weights.
    pub alpha: Vec<f64>,
    /// `F = A_i U^ Lambda^1/2 W^` per device, in channel order.
    pub effective: Vec<EffectiveChannel>,
    pub composed: AggregationBeamformer,
}

/// `alpha_(g,k) = sum_{i<=L} 1 / lambda_i(Lambda^1/2 W W^H Lambda^1/2)` for a
/// device under a (truncated) model; the nonzero eigenvalues are the squared
/// singular values of `F = Lambda^1/2 W`.
pub fn device_alpha(
    model: &ClusterModel,
    ch: &ChannelRealization,
    payload_dim: usize,
) -> Result<f64> {
    let f = effective_channel(model, ch)?;
    let degenerate = Error::DegenerateChannel {
        cluster: ch.cluster_index,
        device: ch.device_index,
    };
    let dec = svd(&f.matrix);
    if dec.sigma.len() < payload_dim {
        return Err(degenerate);
    }
    let top = &dec.sigma[..payload_dim];
    if !(top[payload_dim - 1] > DEGENERATE_RATIO * top[0]) {
        return Err(degenerate);
    }
    Ok(top.iter().map(|s| 1.0 / (s * s)).sum())
}

/// `A_i = [principal R_s-subspace of sum_g alpha_g U^_g U^_g^H]^H`.
pub fn inner_beamformer(truncated: &[ClusterModel], alpha: &[f64], r_s: usize) -> Result<CMatrix> {
    if truncated.len() != alpha.len() || truncated.is_empty() {
        return Err(Error::dim("one weight per cluster is required"));
    }
    let terms: Vec<CentroidTerm> = truncated
        .iter()
        .zip(alpha)
        .map(|(m, &a)| CentroidTerm {
            weight: a,
            subspace: m.basis().clone(),
        })
        .collect();
    Ok(weighted_centroid(&terms, r_s)?.matrix().adjoint())
}

/// Effective channel through the inner beamformer: `A_i U^ Lambda^^1/2 W^`.
pub fn inner_effective_channel(
    inner: &CMatrix,
    truncated: &ClusterModel,
    ch: &ChannelRealization,
) -> Result<EffectiveChannel> {
    let reduced = effective_channel(truncated, ch)?;
    Ok(EffectiveChannel {
        matrix: inner * truncated.basis().matrix() * reduced.matrix,
        ..reduced
    })
}

/// Two-tier beamformer with `R_s = min_g R_g`.
pub fn design_overlapping(
    models: &[ClusterModel],
    channels: &[ChannelRealization],
    dims: &SystemDims,
) -> Result<OverlappingDesign> {
    let r_s = models
        .iter()
        .map(ClusterModel::rank)
        .min()
        .ok_or_else(|| Error::domain("at least one cluster model is required"))?;
    design_overlapping_with_rank(models, channels, dims, r_s)
}

/// Two-tier beamformer with an explicit common rank `L <= r_s <= min_g R_g`.
pub fn design_overlapping_with_rank(
    models: &[ClusterModel],
    channels: &[ChannelRealization],
    dims: &SystemDims,
    r_s: usize,
) -> Result<OverlappingDesign> {
    check_models(models, dims)?;
    let min_rank = models.iter().map(ClusterModel::rank).min().unwrap_or(0);
    if r_s < dims.payload_dim || r_s > min_rank {
        return Err(Error::domain(format!(
            "common rank {r_s} outside [{}, {min_rank}]",
            dims.payload_dim
        )));
    }
    let groups = group_by_cluster(models.len(), channels)?;
    let truncated = models
        .iter()
        .map(|m| m.leading(r_s))
        .collect::<Result<Vec<_>>>()?;

    let mut alpha = Vec::with_capacity(models.len());
    for (model, devices) in truncated.iter().zip(&groups) {
        let mut worst = f64::NEG_INFINITY;
        for ch in devices {
            worst = worst.max(device_alpha(model, ch, dims.payload_dim)?);
        }
        alpha.push(worst);
    }
    let inner = inner_beamformer(&truncated, &alpha, r_s)?;

    let effective = channels
        .iter()
        .map(|ch| inner_effective_channel(&inner, &truncated[ch.cluster_index], ch))
        .collect::<Result<Vec<_>>>()?;
    let terms = effective
        .iter()
        .map(|f| centroid_term(&f.matrix, f.id()))
        .collect::<Result<Vec<_>>>()?;
    let outer = weighted_centroid(&terms, dims.payload_dim)?
        .matrix()
        .adjoint();

    let composed = AggregationBeamformer::from_decomposition(Decomposition::TwoTier {
        inner: inner.clone(),
        outer: outer.clone(),
    })?;
    Ok(OverlappingDesign {
        r_s,
        inner,
        outer,
        alpha,
        effective,
        composed,
    })
}

/// Structureless baseline: the centroid rule over all full channels `H`.
pub fn design_reference(
    channels: &[ChannelRealization],
    dims: &SystemDims,
) -> Result<AggregationBeamformer> {
    dims.validate()?;
    if channels.is_empty() {
        return Err(Error::domain("no channels"));
    }
    let terms = channels
        .iter()
        .map(|ch| centroid_term(&ch.channel, ch.into()))
        .collect::<Result<Vec<_>>>()?;
    let basis = weighted_centroid(&terms, dims.payload_dim)?;
    AggregationBeamformer::new(basis.matrix().adjoint())
}
