//! Optimal denoising factor, zero-forcing precoders and AirComp MSE for a
//! given receive (aggregation) beamformer `A`.
//!
//! With the equalization constraint `A H B = eta I` and per-device power cap
//! `tr(B B^H) <= P_t`, the best precoder of device `(g, k)` is
//! `B = eta (A H)^H (A H H^H A^H)^{-1}` and the largest feasible common
//! `eta` is set by the device with the largest `tr((A H H^H A^H)^{-1})`.
//! The resulting MSE is `N0 tr(A A^H) / eta^2`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, hermitian_eig, real_trace, CMatrix, OrthonormalBasis};

/// Largest tolerated condition number of a device's `L x L` Gram matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Tolerance for recomposing a decomposed beamformer.
const RECOMPOSE_TOL: f64 = 1e-10;

/// Transmit power and receiver noise power, both in watts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkBudget {
    pub p_t: f64,
    pub n0: f64,
}

impl LinkBudget {
    pub fn new(p_t: f64, n0: f64) -> Result<Self> {
        if !(p_t > 0.0 && p_t.is_finite()) || !(n0 > 0.0 && n0.is_finite()) {
            return Err(Error::domain(format!(
                "link budget needs positive power and noise (p_t = {p_t}, n0 = {n0})"
            )));
        }
        Ok(LinkBudget { p_t, n0 })
    }

    /// Noise-free budget, used to check that zero forcing cancels exactly.
    pub fn noiseless(p_t: f64) -> Result<Self> {
        if !(p_t > 0.0 && p_t.is_finite()) {
            return Err(Error::domain(format!(
                "transmit power {p_t} must be positive"
            )));
        }
        Ok(LinkBudget { p_t, n0: 0.0 })
    }

    /// From `P_t` in dBm and a noise density (dBm/Hz) integrated over a bandwidth.
    pub fn from_dbm(p_t_dbm: f64, noise_density_dbm_hz: f64, bandwidth_hz: f64) -> Result<Self> {
        LinkBudget::new(
            dbm_to_watts(p_t_dbm),
            dbm_to_watts(noise_density_dbm_hz) * bandwidth_hz,
        )
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Index `(g, k)` of a device.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeviceId {
    pub cluster: usize,
    pub device: usize,
}

impl From<&ChannelRealization> for DeviceId {
    fn from(r: &ChannelRealization) -> Self {
        DeviceId {
            cluster: r.cluster_index,
            device: r.device_index,
        }
    }
}

/// How a beamformer was assembled.
#[derive(Clone, Debug)]
pub enum Decomposition {
    /// `A = sum_g C_g^H U_g^H`.
    PerCluster {
        outer: Vec<OrthonormalBasis>,
        bases: Vec<OrthonormalBasis>,
    },
    /// `A = A_o A_i` with `A_i: R_s x N_r` and `A_o: L x R_s`.
    TwoTier { inner: CMatrix, outer: CMatrix },
}

impl Decomposition {
    pub fn recompose(&self) -> Result<CMatrix> {
        match self {
            Decomposition::PerCluster { outer, bases } => {
                if outer.len() != bases.len() || outer.is_empty() {
                    return Err(Error::dim("one outer factor per cluster basis is required"));
                }
                let l = outer[0].dim();
                let n = bases[0].ambient_dim();
                let mut a = CMatrix::zeros(l, n);
                for (c, u) in outer.iter().zip(bases) {
                    if c.ambient_dim() != u.dim() || c.dim() != l || u.ambient_dim() != n {
                        return Err(Error::dim(format!(
                            "outer factor {}x{} does not fit basis {}x{}",
                            c.ambient_dim(),
                            c.dim(),
                            u.ambient_dim(),
                            u.dim()
                        )));
                    }
                    a += c.matrix().adjoint() * u.matrix().adjoint();
                }
                Ok(a)
            }
            Decomposition::TwoTier { inner, outer } => {
                if outer.ncols() != inner.nrows() {
                    return Err(Error::dim(format!(
                        "outer {}x{} times inner {}x{}",
                        outer.nrows(),
                        outer.ncols(),
                        inner.nrows(),
                        inner.ncols()
                    )));
                }
                Ok(outer * inner)
            }
        }
    }
}

/// The `L x N_r` receive matrix `A`, optionally with its factors.
#[derive(Clone, Debug)]
pub struct AggregationBeamformer {
    matrix: CMatrix,
    decomposition: Option<Decomposition>,
}

impl AggregationBeamformer {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        ensure_finite(&matrix, "beamformer")?;
        Ok(AggregationBeamformer {
            matrix,
            decomposition: None,
        })
    }

    pub fn from_decomposition(decomposition: Decomposition) -> Result<Self> {
        let matrix = decomposition.recompose()?;
        ensure_finite(&matrix, "beamformer")?;
        Ok(AggregationBeamformer {
            matrix,
            decomposition: Some(decomposition),
        })
    }

    /// Attaches factors to an existing matrix after checking they recompose it.
    pub fn with_decomposition(self, decomposition: Decomposition) -> Result<Self> {
        let recomposed = decomposition.recompose()?;
        if recomposed.shape() != self.matrix.shape() {
            return Err(Error::dim("decomposition has the wrong shape"));
        }
        let err = (&recomposed - &self.matrix).norm();
        if err > RECOMPOSE_TOL * self.matrix.norm().max(1.0) {
            return Err(Error::domain(format!(
                "decomposition differs from matrix by {err:.3e}"
            )));
        }
        Ok(AggregationBeamformer {
            matrix: self.matrix,
            decomposition: Some(decomposition),
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn decomposition(&self) -> Option<&Decomposition> {
        self.decomposition.as_ref()
    }

    pub fn payload_dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Optimal transmit-side quantities for a fixed `A`.
#[derive(Clone, Debug)]
pub struct DesignEvaluation {
    pub eta: f64,
    /// One `N_t x L` precoder per device, in channel order.
    pub precoders: Vec<CMatrix>,
    pub mse: f64,
    pub p2_objective: f64,
    pub bottleneck: DeviceId,
}

fn check_shapes(a: &CMatrix, channels: &[ChannelRealization]) -> Result<()> {
    if channels.is_empty() {
        return Err(Error::domain("no channels to evaluate"));
    }
    for ch in channels {
        if ch.channel.nrows() != a.ncols() {
            return Err(Error::dim(format!(
                "beamformer has {} columns, channel of device ({}, {}) has {} rows",
                a.ncols(),
                ch.cluster_index,
                ch.device_index,
                ch.channel.nrows()
            )));
        }
    }
    Ok(())
}

/// `tr(G^{-1})` of a device Gram matrix, refusing near-singular ones.
pub fn trace_inverse(gram: &CMatrix, id: DeviceId) -> Result<f64> {
    let values = hermitian_eig(gram)?.values;
    let max = values.first().copied().unwrap_or(0.0);
    let min = values.last().copied().unwrap_or(0.0);
    if !(min > 0.0) || max / min > MAX_CONDITION {
        return Err(Error::RankDeficient {
            cluster: id.cluster,
            device: id.device,
            condition: if min > 0.0 { max / min } else { f64::INFINITY },
        });
    }
    Ok(values.iter().map(|v| 1.0 / v).sum())
}

fn device_gram(a: &CMatrix, h: &CMatrix) -> CMatrix {
    let ah = a * h;
    &ah * ah.adjoint()
}

/// `tr((A H H^H A^H)^{-1})` for every device, in channel order.
pub fn trace_inverses(a: &CMatrix, channels: &[ChannelRealization]) -> Result<Vec<f64>> {
    check_shapes(a, channels)?;
    channels
        .iter()
        .map(|ch| trace_inverse(&device_gram(a, &ch.channel), ch.into()))
        .collect()
}

/// Weakest device: the largest `tr((A H H^H A^H)^{-1})`.
fn weakest(a: &CMatrix, channels: &[ChannelRealization]) -> Result<(f64, DeviceId)> {
    let traces = trace_inverses(a, channels)?;
    let (idx, worst) =
        traces
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
    Ok((worst, (&channels[idx]).into()))
}

/// Optimal denoising factor `eta* = min_(g,k) sqrt(P_t / tr((A H H^H A^H)^{-1}))`
/// and the device attaining it.
pub fn denoising_factor(
    a: &CMatrix,
    channels: &[ChannelRealization],
    budget: &LinkBudget,
) -> Result<(f64, DeviceId)> {
    let (worst, id) = weakest(a, channels)?;
    Ok(((budget.p_t / worst).sqrt(), id))
}

/// `B_(g,k) = eta (A H)^H (A H H^H A^H)^{-1}` for every device.
pub fn zero_forcing_precoders(
    a: &CMatrix,
    channels: &[ChannelRealization],
    eta: f64,
) -> Result<Vec<CMatrix>> {
    check_shapes(a, channels)?;
    channels
        .iter()
        .map(|ch| {
            let ah = a * &ch.channel;
            let gram = &ah * ah.adjoint();
            // condition guard; the trace itself is not needed here
            trace_inverse(&gram, ch.into())?;
            let l = gram.nrows();
            let chol = gram.cholesky().ok_or(Error::RankDeficient {
                cluster: ch.cluster_index,
                device: ch.device_index,
                condition: f64::INFINITY,
            })?;
            let inv = chol.solve(&CMatrix::identity(l, l));
            Ok((ah.adjoint() * inv).scale(eta))
        })
        .collect()
}

/// Unconstrained min-max objective `tr(A A^H) max_(g,k) tr((A H H^H A^H)^{-1})`.
pub fn p2_objective(a: &CMatrix, channels: &[ChannelRealization]) -> Result<f64> {
    let (worst, _) = weakest(a, channels)?;
    Ok(real_trace(&(a * a.adjoint())) * worst)
}

/// Total MSE over all `L` entries at the optimal `eta*`:
/// `(N0 / P_t) tr(A A^H) max tr((A H H^H A^H)^{-1})`.
pub fn closed_form_mse(
    a: &CMatrix,
    channels: &[ChannelRealization],
    budget: &LinkBudget,
) -> Result<f64> {
    Ok(budget.n0 / budget.p_t * p2_objective(a, channels)?)
}

/// Optimal transmit design and its figures of merit for a fixed `A`.
pub fn evaluate(
    a: &CMatrix,
    channels: &[ChannelRealization],
    budget: &LinkBudget,
) -> Result<DesignEvaluation> {
    let (eta, bottleneck) = denoising_factor(a, channels, budget)?;
    let precoders = zero_forcing_precoders(a, channels, eta)?;
    let p2 = p2_objective(a, channels)?;
    Ok(DesignEvaluation {
        eta,
        precoders,
        mse: budget.n0 / budget.p_t * p2,
        p2_objective: p2,
        bottleneck,
    })
}

/// Draws an `rows x cols` matrix with i.i.d. CN(0, variance) entries.
fn complex_gaussian<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut R,
) -> CMatrix {
    let scale = (variance / 2.0).sqrt();
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    })
}

/// Monte Carlo estimate of `E ||A Y / eta - sum X||^2` with the optimal
/// `eta*` and precoders, unit-power Gaussian symbols and CN(0, N0) noise.
/// Returns `(mean, standard error)`.
pub fn empirical_mse<R: Rng + ?Sized>(
    a: &CMatrix,
    channels: &[ChannelRealization],
    budget: &LinkBudget,
    n_trials: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n_trials < 2 {
        return Err(Error::domain(format!(
            "need at least 2 trials, got {n_trials}"
        )));
    }
    let (eta, _) = denoising_factor(a, channels, budget)?;
    let precoders = zero_forcing_precoders(a, channels, eta)?;
    let l = a.nrows();
    let n_rx = a.ncols();
    // A H B per device; equals eta I up to rounding.
    let effective: Vec<CMatrix> = channels
        .iter()
        .zip(&precoders)
        .map(|(ch, b)| a * &ch.channel * b)
        .collect();

    let mut errors = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let mut received = CMatrix::zeros(l, 1);
        let mut target = CMatrix::zeros(l, 1);
        for m in &effective {
            let x = complex_gaussian(l, 1, 1.0 / l as f64, rng);
            received += m * &x;
            target += x;
        }
        if budget.n0 > 0.0 {
            let noise = complex_gaussian(n_rx, 1, budget.n0, rng);
            received += a * noise;
        }
        let err = received.unscale(eta) - target;
        errors.push(err.norm_squared());
    }
    let n = n_trials as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
