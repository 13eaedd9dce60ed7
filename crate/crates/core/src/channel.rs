//! Clustered MIMO channel model.
//!
//! Each cluster's receive covariance follows the one-ring model of a uniform
//! linear array: devices in cluster `g` reach the access point from an
//! angle-of-arrival interval, and entry `(m, n)` of the covariance is the
//! average of `exp(j 2 pi D (n - m) sin(phi))` over that interval. Individual
//! channels are `H = beta * U diag(sqrt(lambda)) W` where `(U, lambda)` are
//! the dominant eigenpairs of the covariance and `W` is i.i.d. CN(0, 1)
//! small-scale fading.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, hermitian_eig, real_diagonal, CMatrix, OrthonormalBasis};

/// Quadrature nodes per covariance entry.
pub const QUADRATURE_NODES: usize = 512;

/// Default relative eigenvalue threshold for [`spectral_rank`], calibrated so
/// that the spectral count reproduces the analytic rank on the reference
/// geometries.
pub const DEFAULT_SPECTRAL_THRESHOLD: f64 = 0.5;

/// Uniform linear receive array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub n_rx: usize,
    /// Antenna spacing in wavelengths.
    pub spacing: f64,
}

impl ArrayGeometry {
    pub fn new(n_rx: usize, spacing: f64) -> Result<Self> {
        let g = ArrayGeometry { n_rx, spacing };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rx == 0 {
            return Err(Error::domain("array needs at least one antenna"));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::domain(format!(
                "antenna spacing {} must be positive",
                self.spacing
            )));
        }
        Ok(())
    }
}

/// Angle-of-arrival interval (degrees) and device count of one cluster.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub theta_min: f64,
    pub theta_max: f64,
    pub n_devices: usize,
}

impl ClusterSpec {
    pub fn new(theta_min: f64, theta_max: f64, n_devices: usize) -> Result<Self> {
        let s = ClusterSpec {
            theta_min,
            theta_max,
            n_devices,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.theta_min)
            || !(-90.0..=90.0).contains(&self.theta_max)
            || self.theta_min > self.theta_max
        {
            return Err(Error::domain(format!(
                "AoA range [{}, {}] must satisfy -90 <= min <= max <= 90",
                self.theta_min, self.theta_max
            )));
        }
        if self.n_devices == 0 {
            return Err(Error::domain("cluster needs at least one device"));
        }
        Ok(())
    }
}

/// Antenna counts and cluster count. Devices transmit with exactly as many
/// antennas as payload entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDims {
    pub n_tx: usize,
    pub payload_dim: usize,
    pub n_clusters: usize,
}

impl SystemDims {
    pub fn new(payload_dim: usize, n_clusters: usize) -> Result<Self> {
        let d = SystemDims {
            n_tx: payload_dim,
            payload_dim,
            n_clusters,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx != self.payload_dim {
            return Err(Error::domain(format!(
                "n_tx ({}) must equal payload_dim ({})",
                self.n_tx, self.payload_dim
            )));
        }
        if self.payload_dim == 0 || self.n_clusters == 0 {
            return Err(Error::domain("payload_dim and n_clusters must be positive"));
        }
        Ok(())
    }
}

/// Covariance of one cluster together with its dominant eigenpairs.
#[derive(Clone, Debug)]
pub struct ClusterModel {
    covariance: CMatrix,
    basis: OrthonormalBasis,
    eigenvalues: Vec<f64>,
}

impl ClusterModel {
    pub fn covariance(&self) -> &CMatrix {
        &self.covariance
    }

    /// `U_g`, `N_r x R_g`.
    pub fn basis(&self) -> &OrthonormalBasis {
        &self.basis
    }

    /// Descending, strictly positive.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_rx(&self) -> usize {
        self.covariance.nrows()
    }

    /// Keeps the `r` dominant eigenpairs.
    pub fn leading(&self, r: usize) -> Result<ClusterModel> {
        if r == 0 || r > self.rank() {
            return Err(Error::domain(format!(
                "cannot keep {r} of {} eigenpairs",
                self.rank()
            )));
        }
        Ok(ClusterModel {
            covariance: self.covariance.clone(),
            basis: self.basis.leading(r)?,
            eigenvalues: self.eigenvalues[..r].to_vec(),
        })
    }

    /// `diag(sqrt(lambda))`.
    pub fn sqrt_eigenvalues(&self) -> CMatrix {
        let s: Vec<f64> = self.eigenvalues.iter().map(|v| v.sqrt()).collect();
        real_diagonal(&s)
    }
}

/// One device's channel.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    pub cluster_index: usize,
    pub device_index: usize,
    /// `W`, `R_g x N_t`.
    pub fading: CMatrix,
    /// `H`, `N_r x N_t`.
    pub channel: CMatrix,
    /// Path-loss amplitude applied to `H`.
    pub gain: f64,
}

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_rule(QUADRATURE_NODES))
}

/// Gauss–Legendre nodes and weights on [-1, 1] (Newton iteration on P_n).
fn gauss_legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// One-ring covariance of a cluster seen by a uniform linear array.
pub fn build_covariance(geom: &ArrayGeometry, spec: &ClusterSpec) -> Result<CMatrix> {
    geom.validate()?;
    spec.validate()?;
    let n = geom.n_rx;
    let lo = spec.theta_min.to_radians();
    let hi = spec.theta_max.to_radians();
    let phase = |diff: usize, phi: f64| 2.0 * PI * geom.spacing * diff as f64 * phi.sin();

    // Toeplitz: entry (m, m + d) depends on d only.
    let mut lag = vec![Complex64::new(1.0, 0.0); n];
    if hi > lo {
        let (nodes, weights) = gauss_legendre();
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (d, entry) in lag.iter_mut().enumerate().skip(1) {
            let mut acc = Complex64::new(0.0, 0.0);
            for (x, w) in nodes.iter().zip(weights) {
                acc += Complex64::from_polar(*w, phase(d, mid + half * x));
            }
            // (1 / (hi - lo)) * half * sum = sum / 2
            *entry = acc * 0.5;
        }
    } else {
        for (d, entry) in lag.iter_mut().enumerate().skip(1) {
            *entry = Complex64::from_polar(1.0, phase(d, lo));
        }
    }

    Ok(CMatrix::from_fn(n, n, |r, c| {
        if c >= r {
            lag[c - r]
        } else {
            lag[r - c].conj()
        }
    }))
}

/// Rank rule for a ULA: `round(N_r D (sin max - sin min))` clamped to `[L, N_r]`.
pub fn analytic_rank(geom: &ArrayGeometry, spec: &ClusterSpec, payload_dim: usize) -> usize {
    let spread = spec.theta_max.to_radians().sin() - spec.theta_min.to_radians().sin();
    let raw = (geom.n_rx as f64 * geom.spacing * spread).round().max(0.0) as usize;
    raw.clamp(payload_dim.min(geom.n_rx), geom.n_rx)
}

/// Number of eigenvalues at or above `threshold * lambda_1`.
pub fn spectral_rank(covariance: &CMatrix, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::domain(format!(
            "threshold {threshold} outside (0, 1)"
        )));
    }
    let values = hermitian_eig(covariance)?.values;
    let Some(&top) = values.first() else {
        return Ok(0);
    };
    Ok(values.iter().filter(|&&v| v >= threshold * top).count())
}

/// Top-`rank` eigenpairs of a covariance.
pub fn decompose_cluster(covariance: &CMatrix, rank: usize) -> Result<ClusterModel> {
    if rank == 0 || rank > covariance.nrows() {
        return Err(Error::dim(format!(
            "rank {rank} for a {}x{} covariance",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    let eig = hermitian_eig(covariance)?;
    let eigenvalues = eig.values[..rank].to_vec();
    if let Some(bad) = eigenvalues.iter().find(|v| **v <= 0.0) {
        return Err(Error::domain(format!(
            "covariance has a non-positive eigenvalue {bad:.3e} within the top {rank}"
        )));
    }
    Ok(ClusterModel {
        covariance: covariance.clone(),
        basis: eig.vectors.leading(rank)?,
        eigenvalues,
    })
}

/// Builds a cluster model directly from a basis and eigenvalues; the
/// covariance is reconstructed as `U diag(lambda) U^H`.
pub fn model_from_parts(basis: OrthonormalBasis, eigenvalues: Vec<f64>) -> Result<ClusterModel> {
    if basis.dim() != eigenvalues.len() || eigenvalues.is_empty() {
        return Err(Error::dim(format!(
            "{} eigenvalues for a {}-column basis",
            eigenvalues.len(),
            basis.dim()
        )));
    }
    if eigenvalues.windows(2).any(|w| w[0] < w[1]) || eigenvalues.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::domain("eigenvalues must be positive and descending"));
    }
    let u = basis.matrix();
    let covariance = u * real_diagonal(&eigenvalues) * u.adjoint();
    Ok(ClusterModel {
        covariance,
        basis,
        eigenvalues,
    })
}

/// Assembles `H = gain * U diag(sqrt(lambda)) W` from given fading.
pub fn realization_from_fading(
    model: &ClusterModel,
    cluster_index: usize,
    device_index: usize,
    fading: CMatrix,
    gain: f64,
) -> Result<ChannelRealization> {
    if fading.nrows() != model.rank() {
        return Err(Error::dim(format!(
            "fading has {} rows, model rank is {}",
            fading.nrows(),
            model.rank()
        )));
    }
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::domain(format!("gain {gain} must be positive")));
    }
    ensure_finite(&fading, "fading")?;
    let channel = (model.basis().matrix() * model.sqrt_eigenvalues() * &fading).scale(gain);
    Ok(ChannelRealization {
        cluster_index,
        device_index,
        fading,
        channel,
        gain,
    })
}

/// Draws an i.i.d. CN(0, 1) matrix.
pub fn complex_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Samples one device of cluster `cluster_index`.
pub fn sample_device<R: Rng + ?Sized>(
    model: &ClusterModel,
    cluster_index: usize,
    device_index: usize,
    dims: &SystemDims,
    gain: f64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let fading = complex_normal(model.rank(), dims.n_tx, rng);
    realization_from_fading(model, cluster_index, device_index, fading, gain)
}

/// Samples `n_devices` realizations from one generator, in device order.
pub fn sample_channels<R: Rng + ?Sized>(
    model: &ClusterModel,
    cluster_index: usize,
    n_devices: usize,
    dims: &SystemDims,
    gain: f64,
    rng: &mut R,
) -> Result<Vec<ChannelRealization>> {
    (0..n_devices)
        .map(|k| sample_device(model, cluster_index, k, dims, gain, rng))
        .collect()
}

/// Samples every device of every cluster with an independent ChaCha8 stream
/// per `(seed, trial, cluster, device)`, so the draws do not depend on the
/// order in which devices or trials are processed.
pub fn sample_network(
    models: &[ClusterModel],
    devices_per_cluster: usize,
    dims: &SystemDims,
    gain: f64,
    seed: u64,
    trial: u64,
) -> Result<Vec<ChannelRealization>> {
    let counts = vec![devices_per_cluster; models.len()];
    sample_network_sized(models, &counts, dims, gain, seed, trial)
}

/// [`sample_network`] with a device count per cluster.
pub fn sample_network_sized(
    models: &[ClusterModel],
    devices: &[usize],
    dims: &SystemDims,
    gain: f64,
    seed: u64,
    trial: u64,
) -> Result<Vec<ChannelRealization>> {
    if devices.len() != models.len() {
        return Err(Error::dim(format!(
            "{} device counts for {} clusters",
            devices.len(),
            models.len()
        )));
    }
    let mut out = Vec::with_capacity(devices.iter().sum());
    for (g, (model, &n)) in models.iter().zip(devices).enumerate() {
        for k in 0..n {
            let mut rng = substream_rng(seed, &[trial, g as u64, k as u64]);
            out.push(sample_device(model, g, k, dims, gain, &mut rng)?);
        }
    }
    Ok(out)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// ChaCha8 generator keyed by a master seed and an index path.
pub fn substream_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = splitmix64(seed);
    for &p in path {
        state = splitmix64(state ^ splitmix64(p.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Path loss in dB at `distance_km`: `145.4 + 37.5 log10(d)`.
pub fn path_loss_db(distance_km: f64) -> Result<f64> {
    if !(distance_km > 0.0 && distance_km.is_finite()) {
        return Err(Error::domain(format!(
            "distance {distance_km} km must be positive"
        )));
    }
    Ok(145.4 + 37.5 * distance_km.log10())
}

/// Amplitude gain `10^(-PL/20)`.
pub fn path_loss_gain(distance_km: f64) -> Result<f64> {
    Ok(10f64.powf(-path_loss_db(distance_km)? / 20.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{orthonormality_error, svd};

    const D: f64 = 1.0 / 3.0;

    fn geom(n: usize) -> ArrayGeometry {
        ArrayGeometry::new(n, D).unwrap()
    }

    fn spec(lo: f64, hi: f64) -> ClusterSpec {
        ClusterSpec::new(lo, hi, 5).unwrap()
    }

    #[test]
    fn quadrature_integrates_polynomials() {
        let (x, w) = gauss_legendre_rule(16);
        let sum: f64 = w.iter().sum();
        assert!((sum - 2.0).abs() < 1e-13);
        let x4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((x4 - 0.4).abs() < 1e-13);
        let (_, w) = gauss_legendre();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_matches_bessel_closed_form() {
        // Over the full [-90, 90] range the lag-d entry is J0(2 pi D d) averaged
        // over phi; compare with a fine midpoint rule as an independent oracle.
        let g = geom(8);
        let c = build_covariance(&g, &spec(-90.0, 90.0)).unwrap();
        for d in 1..8 {
            let m = 200_000;
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..m {
                let phi = -PI / 2.0 + PI * (i as f64 + 0.5) / m as f64;
                acc += Complex64::from_polar(1.0, 2.0 * PI * D * d as f64 * phi.sin());
            }
            let oracle = acc / m as f64;
            assert!((c[(0, d)] - oracle).norm() < 1e-9, "lag {d}");
        }
    }

    #[test]
    fn point_source_is_all_ones() {
        let c = build_covariance(&geom(4), &spec(0.0, 0.0)).unwrap();
        for z in c.iter() {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        assert_eq!(spectral_rank(&c, 1e-3).unwrap(), 1);
    }

    #[test]
    fn covariance_hermitian_unit_diagonal() {
        let c = build_covariance(&geom(24), &spec(-30.0, 12.0)).unwrap();
        for i in 0..24 {
            assert_eq!(c[(i, i)], Complex64::new(1.0, 0.0));
        }
        assert_eq!(c.adjoint(), c);
        let eig = hermitian_eig(&c).unwrap();
        assert!(eig.values.iter().all(|v| *v > -1e-9));
    }

    #[test]
    fn analytic_ranks_of_reference_geometries() {
        let g = geom(48);
        assert_eq!(analytic_rank(&g, &spec(-49.0, -1.0), 5), 12);
        assert_eq!(analytic_rank(&g, &spec(1.0, 49.0), 5), 12);
        assert_eq!(analytic_rank(&g, &spec(-51.0, -15.0), 5), 8);
        assert_eq!(analytic_rank(&g, &spec(-14.0, 14.0), 5), 8);
        assert_eq!(analytic_rank(&g, &spec(15.0, 41.0), 5), 6);
        assert_eq!(analytic_rank(&g, &spec(-45.0, 15.0), 5), 15);
        // clamped to L from below
        assert_eq!(analytic_rank(&g, &spec(0.0, 0.0), 5), 5);
    }

    #[test]
    fn spectral_rank_examples() {
        assert_eq!(spectral_rank(&CMatrix::identity(5, 5), 1e-3).unwrap(), 5);
        assert_eq!(
            spectral_rank(&real_diagonal(&[1.0, 1e-6]), 1e-3).unwrap(),
            1
        );
        let c = build_covariance(&geom(48), &spec(-49.0, -1.0)).unwrap();
        assert_eq!(spectral_rank(&c, DEFAULT_SPECTRAL_THRESHOLD).unwrap(), 12);
        assert!(spectral_rank(&c, 1.5).is_err());
    }

    #[test]
    fn decompose_rank_one_all_ones() {
        let c = build_covariance(&geom(4), &spec(0.0, 0.0)).unwrap();
        let m = decompose_cluster(&c, 1).unwrap();
        assert!((m.eigenvalues()[0] - 4.0).abs() < 1e-12);
        let u = m.basis().matrix();
        for i in 0..4 {
            assert!((u[(i, 0)].norm() - 0.5).abs() < 1e-12);
        }
        // same direction as (1,1,1,1)/2 up to phase
        let ones = CMatrix::from_element(4, 1, Complex64::new(0.5, 0.0));
        assert!(((ones.adjoint() * u)[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decompose_identity_and_errors() {
        let m = decompose_cluster(&CMatrix::identity(4, 4), 2).unwrap();
        assert_eq!(m.eigenvalues(), &[1.0, 1.0]);
        assert!(matches!(
            decompose_cluster(&CMatrix::identity(4, 4), 5),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn decompose_one_ring_orthonormal() {
        let c = build_covariance(&geom(48), &spec(-49.0, -1.0)).unwrap();
        let m = decompose_cluster(&c, 12).unwrap();
        assert!(orthonormality_error(m.basis().matrix()) < 1e-10);
        assert_eq!(m.rank(), 12);
    }

    #[test]
    fn deterministic_fading_gives_scaled_basis() {
        let c = build_covariance(&geom(8), &spec(-20.0, 20.0)).unwrap();
        let model = decompose_cluster(&c, 3).unwrap();
        let w = CMatrix::identity(3, 2);
        let h = realization_from_fading(&model, 0, 0, w, 1.0).unwrap();
        let expected = (model.basis().matrix() * model.sqrt_eigenvalues())
            .columns(0, 2)
            .into_owned();
        assert!((h.channel - expected).norm() < 1e-12);
    }

    #[test]
    fn realization_invariant_with_gain() {
        let c = build_covariance(&geom(16), &spec(-20.0, 20.0)).unwrap();
        let model = decompose_cluster(&c, 5).unwrap();
        let dims = SystemDims::new(3, 1).unwrap();
        let mut rng = substream_rng(1, &[0]);
        let r = sample_device(&model, 0, 0, &dims, 0.25, &mut rng).unwrap();
        let rebuilt = (model.basis().matrix() * model.sqrt_eigenvalues() * &r.fading).scale(0.25);
        assert!((rebuilt - &r.channel).norm() < 1e-10);
        assert_eq!(r.fading.shape(), (5, 3));
        assert_eq!(r.channel.shape(), (16, 3));
    }

    #[test]
    fn fading_second_moment() {
        // (1/R) tr(W W^H) / N_t has mean 1 and variance 1 / (R N_t).
        let model = decompose_cluster(&CMatrix::identity(6, 6), 4).unwrap();
        let dims = SystemDims::new(3, 1).unwrap();
        let mut rng = substream_rng(7, &[]);
        let n = 10_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let r = sample_device(&model, 0, 0, &dims, 1.0, &mut rng).unwrap();
                (r.fading.norm_squared()) / (4.0 * 3.0)
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn same_seed_same_draws() {
        let model = decompose_cluster(&CMatrix::identity(6, 6), 4).unwrap();
        let dims = SystemDims::new(2, 1).unwrap();
        let a = sample_network(std::slice::from_ref(&model), 3, &dims, 1.0, 99, 4).unwrap();
        let b = sample_network(&[model], 3, &dims, 1.0, 99, 4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.fading, y.fading);
            assert_eq!(x.channel, y.channel);
        }
    }

    #[test]
    fn substreams_are_distinct() {
        let mut a = substream_rng(1, &[0, 0, 0]);
        let mut b = substream_rng(1, &[0, 0, 1]);
        let mut c = substream_rng(1, &[0, 1, 0]);
        let (x, y, z): (u64, u64, u64) = (a.random(), b.random(), c.random());
        assert!(x != y && y != z && x != z);
    }

    #[test]
    fn path_loss_values() {
        let pl = path_loss_db(0.05).unwrap();
        // 145.4 - 37.5 * 1.30103
        assert!((pl - 96.6114).abs() < 1e-3, "{pl}");
        let beta = path_loss_gain(0.05).unwrap();
        assert!((beta - 10f64.powf(-pl / 20.0)).abs() < 1e-20);
        assert!((beta - 1.4768e-5).abs() < 1e-8, "{beta}");
        // distance where PL = 0 dB
        let d0 = 10f64.powf(-145.4 / 37.5);
        assert!((path_loss_gain(d0).unwrap() - 1.0).abs() < 1e-12);
        assert!(path_loss_gain(0.0).is_err());
        assert!(path_loss_gain(-1.0).is_err());
    }

    #[test]
    fn path_loss_power_round_trip() {
        for d in [0.001, 0.05, 0.3, 2.0, 17.5] {
            let pl = path_loss_db(d).unwrap();
            let beta = path_loss_gain(d).unwrap();
            assert!((beta * beta * 10f64.powf(pl / 10.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_cluster_coherence_shrinks_with_array_size() {
        let coherence = |n: usize| {
            let g = geom(n);
            let s1 = spec(-49.0, -1.0);
            let s2 = spec(1.0, 49.0);
            let r1 = analytic_rank(&g, &s1, 1);
            let r2 = analytic_rank(&g, &s2, 1);
            let m1 = decompose_cluster(&build_covariance(&g, &s1).unwrap(), r1).unwrap();
            let m2 = decompose_cluster(&build_covariance(&g, &s2).unwrap(), r2).unwrap();
            let top = r1.min(r2).min(3);
            let u1 = m1.basis().leading(top).unwrap();
            let u2 = m2.basis().leading(top).unwrap();
            svd(&(u1.matrix().adjoint() * u2.matrix())).sigma_max()
        };
        let small = coherence(24);
        let large = coherence(96);
        assert!(large < small, "{large} !< {small}");
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(ClusterSpec::new(10.0, -10.0, 1).is_err());
        assert!(ClusterSpec::new(-95.0, 0.0, 1).is_err());
        assert!(ClusterSpec::new(0.0, 1.0, 0).is_err());
        assert!(ArrayGeometry::new(0, 0.5).is_err());
        assert!(ArrayGeometry::new(4, 0.0).is_err());
        let d = SystemDims {
            n_tx: 4,
            payload_dim: 3,
            n_clusters: 1,
        };
        assert!(d.validate().is_err());
    }
}
