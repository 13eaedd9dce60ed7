//! Analog feedback: how the AP collects the centroid matrices over the air.
//!
//! Every device sends `Z = lambda_min(F^H F) V Sigma^-1 U^H`, so that the
//! channel `F` turns it into `lambda_min U_F U_F^H` and simultaneous
//! transmissions add up to the centroid matrix the design needs.
//!
//! - Disjoint clusters: one slot. The AP separates clusters by projecting
//!   onto each `U_g`; cross-cluster leakage is the only error source.
//! - Overlapping clusters: `G` scalar max rounds deliver the inner-centroid
//!   weights, the AP computes and broadcasts `A_i`, then one slot per cluster
//!   returns `Y_g`, post-processed into `Omega_g = A_i U^_g U^_g^H Y_g`.
//!
//! The feedback link is noiseless unless a perturbation hook is supplied.

use crate::aircomp::{AggregationBeamformer, Decomposition};
use crate::channel::{ChannelRealization, ClusterModel, SystemDims};
use crate::design::{
    centroid_term, design_overlapping, device_alpha, effective_channel, group_by_cluster,
    inner_beamformer, inner_effective_channel, DEGENERATE_RATIO,
};
use crate::error::{Error, Result};
use crate::numerics::{principal_eigenspace, svd, CMatrix, OrthonormalBasis};

#[derive(Clone, Debug)]
pub struct FeedbackSignal {
    pub cluster_index: usize,
    pub device_index: usize,
    /// `N_t x r`.
    pub matrix: CMatrix,
}

/// `Z = lambda_min(F^H F) V Sigma^-1 U^H` for an `r x N_t` channel `F`.
pub fn feedback_signal(f: &CMatrix, cluster: usize, device: usize) -> Result<FeedbackSignal> {
    let degenerate = Error::DegenerateChannel { cluster, device };
    if f.nrows() < f.ncols() || f.ncols() == 0 {
        return Err(degenerate);
    }
    let dec = svd(f);
    if !(dec.sigma_min() > DEGENERATE_RATIO * dec.sigma_max()) {
        return Err(degenerate);
    }
    let lam = dec.sigma_min().powi(2);
    let mut v = dec.v.matrix().clone();
    for (j, s) in dec.sigma.iter().enumerate() {
        v.column_mut(j).scale_mut(lam / s);
    }
    Ok(FeedbackSignal {
        cluster_index: cluster,
        device_index: device,
        matrix: v * dec.u.matrix().adjoint(),
    })
}

/// Exact maximum, standing in for an over-the-air maximum computation.
pub fn max_aircomp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("maximum of an empty sequence"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("max_aircomp input"));
    }
    Ok(values.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Clone, Debug)]
pub enum Slot {
    /// Superposed matrix feedback received on the array.
    Channel(CMatrix),
    /// Result of one scalar max round.
    ScalarMax(f64),
}

#[derive(Clone, Debug)]
pub struct FeedbackTranscript {
    /// Slots in protocol order.
    pub slots: Vec<Slot>,
    /// `Y_g` (disjoint) or `Omega_g` (overlapping), one per cluster.
    pub cluster_outputs: Vec<CMatrix>,
    pub beamformer: AggregationBeamformer,
}

impl FeedbackTranscript {
    pub fn channel_slots(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| matches!(s, Slot::Channel(_)))
            .count()
    }

    pub fn scalar_rounds(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| matches!(s, Slot::ScalarMax(_)))
            .count()
    }
}

/// Disjoint-cluster feedback over a noiseless link.
pub fn simulate_disjoint_feedback(
    models: &[ClusterModel],
    channels: &[ChannelRealization],
    dims: &SystemDims,
) -> Result<FeedbackTranscript> {
    simulate_disjoint_feedback_with(models, channels, dims, |_| {})
}

/// Disjoint-cluster feedback; `perturb` sees each received slot before the AP uses it.
///
/// Clusters of different ranks send square `r_g x r_g` products; the AP
/// receives them zero-padded to the widest one and keeps the leading
/// `r_g x r_g` block after projecting on `U_g`.
pub fn simulate_disjoint_feedback_with<P>(
    models: &[ClusterModel],
    channels: &[ChannelRealization],
    dims: &SystemDims,
    mut perturb: P,
) -> Result<FeedbackTranscript>
where
    P: FnMut(&mut CMatrix),
{
    dims.validate()?;
    let groups = group_by_cluster(models.len(), channels)?;
    let n_rx = models[0].n_rx();
    let width = models.iter().map(ClusterModel::rank).max().unwrap_or(0);
    let mut y = CMatrix::zeros(n_rx, width);
    for (model, devices) in models.iter().zip(&groups) {
        let r = model.rank();
        let mut local = CMatrix::zeros(r, r);
        for ch in devices {
            let f = effective_channel(model, ch)?;
            let z = feedback_signal(&f.matrix, f.cluster_index, f.device_index)?;
            local += &f.matrix * &z.matrix;
        }
        let mut block = y.columns_mut(0, r);
        block += model.basis().matrix() * local;
    }
    perturb(&mut y);

    let mut outputs = Vec::with_capacity(models.len());
    let mut outer = Vec::with_capacity(models.len());
    for model in models {
        let r = model.rank();
        let y_g = (model.basis().matrix().adjoint() * &y)
            .columns(0, r)
            .into_owned();
        outer.push(principal_eigenspace(&y_g, dims.payload_dim)?);
        outputs.push(y_g);
    }
    let beamformer = AggregationBeamformer::from_decomposition(Decomposition::PerCluster {
        outer,
        bases: models.iter().map(|m| m.basis().clone()).collect(),
    })?;
    Ok(FeedbackTranscript {
        slots: vec![Slot::Channel(y)],
        cluster_outputs: outputs,
        beamformer,
    })
}

/// Overlapping-cluster feedback over a noiseless link, at `R_s = min_g R_g`.
pub fn simulate_overlapping_feedback(
    models: &[ClusterModel],
    channels: &[ChannelRealization],
    dims: &SystemDims,
) -> Result<FeedbackTranscript> {
    simulate_overlapping_feedback_with(models, channels, dims, |_| {})
}

/// Overlapping-cluster feedback with a perturbation hook on every channel slot.
pub fn simulate_overlapping_feedback_with<P>(
    models: &[ClusterModel],
    channels: &[ChannelRealization],
    dims: &SystemDims,
    mut perturb: P,
) -> Result<FeedbackTranscript>
where
    P: FnMut(&mut CMatrix),
{
    dims.validate()?;
    let groups = group_by_cluster(models.len(), channels)?;
    let r_s = models
        .iter()
        .map(ClusterModel::rank)
        .min()
        .ok_or_else(|| Error::domain("at least one cluster model is required"))?;
    if r_s < dims.payload_dim {
        return Err(Error::domain(format!(
            "common rank {r_s} below payload dimension {}",
            dims.payload_dim
        )));
    }
    let truncated = models
        .iter()
        .map(|m| m.leading(r_s))
        .collect::<Result<Vec<_>>>()?;

    // Pass 1: scalar max rounds, then the AP forms A_i from the covariances.
    let mut slots = Vec::with_capacity(2 * models.len());
    let mut alpha = Vec::with_capacity(models.len());
    for (model, devices) in truncated.iter().zip(&groups) {
        let local = devices
            .iter()
            .map(|ch| device_alpha(model, ch, dims.payload_dim))
            .collect::<Result<Vec<_>>>()?;
        let a = max_aircomp(&local)?;
        slots.push(Slot::ScalarMax(a));
        alpha.push(a);
    }
    let inner = inner_beamformer(&truncated, &alpha, r_s)?;

    // Pass 2: one slot per cluster over the full channels.
    let mut outputs = Vec::with_capacity(models.len());
    for (g, devices) in groups.iter().enumerate() {
        let mut y_g = CMatrix::zeros(models[g].n_rx(), r_s);
        for ch in devices {
            let f = inner_effective_channel(&inner, &truncated[g], ch)?;
            let z = feedback_signal(&f.matrix, f.cluster_index, f.device_index)?;
            y_g += &ch.channel * &z.matrix;
        }
        perturb(&mut y_g);
        let proj = truncated[g].basis().projector();
        outputs.push(&inner * proj * &y_g);
        slots.push(Slot::Channel(y_g));
    }
    let s_c = outputs
        .iter()
        .fold(CMatrix::zeros(r_s, r_s), |acc, o| acc + o);
    let outer = principal_eigenspace(&s_c, dims.payload_dim)?
        .matrix()
        .adjoint();
    let beamformer =
        AggregationBeamformer::from_decomposition(Decomposition::TwoTier { inner, outer })?;
    Ok(FeedbackTranscript {
        slots,
        cluster_outputs: outputs,
        beamformer,
    })
}

/// `S^(c)` built directly from the overlapping design's effective channels.
pub fn direct_overlapping_centroid(
    models: &[ClusterModel],
    channels: &[ChannelRealization],
    dims: &SystemDims,
) -> Result<CMatrix> {
    let design = design_overlapping(models, channels, dims)?;
    let mut s = CMatrix::zeros(design.r_s, design.r_s);
    for f in &design.effective {
        let t = centroid_term(&f.matrix, f.id())?;
        s += t.subspace.projector().scale(t.weight);
    }
    Ok(s)
}

/// Row space of a beamformer, for comparing reconstructions up to rotation.
pub fn row_space(a: &AggregationBeamformer) -> Result<OrthonormalBasis> {
    Ok(svd(&a.matrix().adjoint()).u)
}
