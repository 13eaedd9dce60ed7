//! Monte Carlo scenarios and CSV output.
//!
//! A [`ScenarioConfig`] fixes the array, the clusters, the link budget and one
//! swept parameter. [`run_scenario`] builds the covariance models once per
//! sweep point, draws every trial from its own sub-stream of the master seed,
//! and averages the closed-form MSE of each method. Trials run in parallel but
//! are reduced in trial order, so output does not depend on the thread count.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aircomp::{closed_form_mse, p2_objective, LinkBudget};
use crate::channel::{
    analytic_rank, build_covariance, decompose_cluster, path_loss_gain, sample_network_sized,
    ArrayGeometry, ChannelRealization, ClusterModel, ClusterSpec, SystemDims,
};
use crate::design::{
    design_disjoint, design_overlapping, design_overlapping_with_rank, design_reference,
};
use crate::error::{Error, Result};
use crate::numerics::CMatrix;
use crate::rank_select::{
    default_max_iters, select_heterogeneous, select_homogeneous, select_overlapping, truncate,
};

pub const CSV_HEADER: &str = "scenario,sweep_name,sweep_value,method,mean_mse,std_err,trials";

pub const DEFAULT_TRIALS: usize = 500;

/// Devices per cluster when the sweep does not set it.
pub const DEFAULT_DEVICES: usize = 5;

pub const BUILTIN_SCENARIOS: [&str; 8] = [
    "fig3a", "fig3b", "fig4a", "fig4b", "fig5a", "fig5b", "fig6a", "fig6b",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "DisDAB")]
    DisDab,
    #[serde(rename = "DisDAB+HomRS")]
    DisDabHomRs,
    #[serde(rename = "DisDAB+HetRS")]
    DisDabHetRs,
    #[serde(rename = "OvpDAB")]
    OvpDab,
    #[serde(rename = "OvpDAB+RS")]
    OvpDabRs,
    Reference,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::DisDab,
        Method::DisDabHomRs,
        Method::DisDabHetRs,
        Method::OvpDab,
        Method::OvpDabRs,
        Method::Reference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::DisDab => "DisDAB",
            Method::DisDabHomRs => "DisDAB+HomRS",
            Method::DisDabHetRs => "DisDAB+HetRS",
            Method::OvpDab => "OvpDAB",
            Method::OvpDabRs => "OvpDAB+RS",
            Method::Reference => "Reference",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Link budget in the units of the parameter table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub bandwidth_hz: f64,
    pub noise_density_dbm_hz: f64,
    pub distance_km: f64,
    /// Transmit power used when the sweep does not set it.
    pub p_t_dbm: f64,
}

impl BudgetConfig {
    pub fn link_budget(&self, p_t_dbm: f64) -> Result<LinkBudget> {
        LinkBudget::from_dbm(p_t_dbm, self.noise_density_dbm_hz, self.bandwidth_hz)
    }

    pub fn gain(&self) -> Result<f64> {
        path_loss_gain(self.distance_km)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    /// Transmit power in dBm.
    PTDbm { values: Vec<f64> },
    /// Devices per cluster.
    K { values: Vec<usize> },
    /// Shift `delta` in degrees; cluster `g` covers
    /// `[theta_min, theta_max] + shift_signs[g] * delta`.
    DeltaDeg {
        values: Vec<f64>,
        shift_signs: Vec<f64>,
    },
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::PTDbm { .. } => "p_t_dbm",
            Sweep::K { .. } => "k",
            Sweep::DeltaDeg { .. } => "delta_deg",
        }
    }

    pub fn points(&self) -> Vec<f64> {
        match self {
            Sweep::PTDbm { values } | Sweep::DeltaDeg { values, .. } => values.clone(),
            Sweep::K { values } => values.iter().map(|&k| k as f64).collect(),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            Sweep::PTDbm { values } | Sweep::DeltaDeg { values, .. } => values.is_empty(),
            Sweep::K { values } => values.is_empty(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub geometry: ArrayGeometry,
    pub clusters: Vec<ClusterSpec>,
    pub dims: SystemDims,
    pub budget: BudgetConfig,
    pub sweep: Sweep,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
}

/// Everything one sweep point needs.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub clusters: Vec<ClusterSpec>,
    pub p_t_dbm: f64,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.sweep.is_empty() {
            return bad("sweep has no values".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if self.clusters.len() != self.dims.n_clusters {
            return bad(format!(
                "{} clusters listed but dims.n_clusters = {}",
                self.clusters.len(),
                self.dims.n_clusters
            ));
        }
        if let Sweep::DeltaDeg { shift_signs, .. } = &self.sweep {
            if shift_signs.len() != self.clusters.len() {
                return bad("one shift sign per cluster is required".into());
            }
        }
        if let Sweep::K { values } = &self.sweep {
            if values.contains(&0) {
                return bad("device counts must be positive".into());
            }
        }
        let b = &self.budget;
        if !(b.bandwidth_hz > 0.0) || !b.noise_density_dbm_hz.is_finite() || !b.p_t_dbm.is_finite()
        {
            return bad("budget needs positive bandwidth and finite dBm values".into());
        }
        let config_err = |e: Error| Error::Config(e.to_string());
        self.geometry.validate().map_err(config_err)?;
        self.dims.validate().map_err(config_err)?;
        b.gain().map_err(config_err)?;
        for p in self.sweep_points() {
            for c in &p.clusters {
                c.validate().map_err(config_err)?;
            }
        }
        Ok(())
    }

    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let base = |value: f64| SweepPoint {
            value,
            clusters: self.clusters.clone(),
            p_t_dbm: self.budget.p_t_dbm,
        };
        match &self.sweep {
            Sweep::PTDbm { values } => values
                .iter()
                .map(|&p| SweepPoint {
                    p_t_dbm: p,
                    ..base(p)
                })
                .collect(),
            Sweep::K { values } => values
                .iter()
                .map(|&k| {
                    let mut pt = base(k as f64);
                    for c in &mut pt.clusters {
                        c.n_devices = k;
                    }
                    pt
                })
                .collect(),
            Sweep::DeltaDeg {
                values,
                shift_signs,
            } => values
                .iter()
                .map(|&d| {
                    let mut pt = base(d);
                    for (c, s) in pt.clusters.iter_mut().zip(shift_signs) {
                        c.theta_min += s * d;
                        c.theta_max += s * d;
                    }
                    pt
                })
                .collect(),
        }
    }
}

/// Covariance models at analytic rank, one per cluster.
pub fn build_models(
    geometry: &ArrayGeometry,
    clusters: &[ClusterSpec],
    dims: &SystemDims,
) -> Result<Vec<ClusterModel>> {
    clusters
        .iter()
        .map(|spec| {
            let cov = build_covariance(geometry, spec)?;
            decompose_cluster(&cov, analytic_rank(geometry, spec, dims.payload_dim))
        })
        .collect()
}

/// Aggregation beamformer of `method` for one channel draw.
pub fn design_for(
    method: Method,
    models: &[ClusterModel],
    channels: &[ChannelRealization],
    dims: &SystemDims,
) -> Result<CMatrix> {
    let l = dims.payload_dim;
    let a = match method {
        Method::DisDab => design_disjoint(models, channels, dims)?.composed,
        Method::DisDabHomRs => {
            let (r, _) = select_homogeneous(models, channels, dims)?;
            let truncated = models
                .iter()
                .map(|m| truncate(m, r, l))
                .collect::<Result<Vec<_>>>()?;
            design_disjoint(&truncated, channels, dims)?.composed
        }
        Method::DisDabHetRs => {
            let sel =
                select_heterogeneous(models, channels, dims, default_max_iters(models.len()))?;
            design_disjoint(&sel.assignment.apply(models, l)?, channels, dims)?.composed
        }
        Method::OvpDab => design_overlapping(models, channels, dims)?.composed,
        Method::OvpDabRs => {
            let (r, _) = select_overlapping(models, channels, dims)?;
            design_overlapping_with_rank(models, channels, dims, r)?.composed
        }
        Method::Reference => design_reference(channels, dims)?,
    };
    Ok(a.matrix().clone())
}

/// `p2_objective` per method (outer) and trial (inner) at one geometry.
pub fn p2_samples(config: &ScenarioConfig, clusters: &[ClusterSpec]) -> Result<Vec<Vec<f64>>> {
    let models = build_models(&config.geometry, clusters, &config.dims)?;
    let counts: Vec<usize> = clusters.iter().map(|c| c.n_devices).collect();
    let gain = config.budget.gain()?;
    let per_trial = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let channels =
                sample_network_sized(&models, &counts, &config.dims, gain, config.seed, t)?;
            config
                .methods
                .iter()
                .map(|&m| {
                    let a = design_for(m, &models, &channels, &config.dims)?;
                    infeasible_as_infinite(p2_objective(&a, &channels))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..config.methods.len())
        .map(|i| per_trial.iter().map(|row| row[i]).collect())
        .collect())
}

/// A design that leaves some device with a singular Gram matrix cannot
/// serve it at any power; that trial scores `f64::INFINITY` instead of
/// aborting the run.
fn infeasible_as_infinite(value: Result<f64>) -> Result<f64> {
    match value {
        Err(Error::RankDeficient { .. }) => Ok(f64::INFINITY),
        other => other,
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        c += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + c
}

/// Sample mean and standard error of the mean (zero for a single sample,
/// infinite when any sample is).
pub fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    if values.iter().any(|v| v.is_infinite()) {
        return (f64::INFINITY, f64::INFINITY);
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub method: Method,
    pub mean_mse: f64,
    pub std_err: f64,
    pub trials: usize,
}

fn rows_at(
    config: &ScenarioConfig,
    value: f64,
    budget: &LinkBudget,
    samples: &[Vec<f64>],
) -> Vec<ResultRow> {
    let scale = budget.n0 / budget.p_t;
    config
        .methods
        .iter()
        .zip(samples)
        .map(|(&method, p2)| {
            let mse: Vec<f64> = p2.iter().map(|v| scale * v).collect();
            let (mean_mse, std_err) = mean_and_std_err(&mse);
            ResultRow {
                scenario: config.name.clone(),
                sweep_name: config.sweep.name().to_string(),
                sweep_value: value,
                method,
                mean_mse,
                std_err,
                trials: config.trials,
            }
        })
        .collect()
}

/// Runs every sweep point and method; rows come out sweep-major, in method order.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let points = config.sweep_points();
    let mut rows = Vec::with_capacity(points.len() * config.methods.len());
    if let Sweep::PTDbm { .. } = config.sweep {
        // Designs do not depend on P_t; draw once and rescale.
        let samples = p2_samples(config, &config.clusters)?;
        for p in &points {
            rows.extend(rows_at(
                config,
                p.value,
                &config.budget.link_budget(p.p_t_dbm)?,
                &samples,
            ));
        }
    } else {
        for p in &points {
            let samples = p2_samples(config, &p.clusters)?;
            rows.extend(rows_at(
                config,
                p.value,
                &config.budget.link_budget(p.p_t_dbm)?,
                &samples,
            ));
        }
    }
    Ok(rows)
}

/// Divides MSE figures by the payload dimension.
pub fn normalize_per_entry(rows: &mut [ResultRow], payload_dim: usize) {
    let l = payload_dim as f64;
    for r in rows {
        r.mean_mse /= l;
        r.std_err /= l;
    }
}

/// Closed-form MSE of each method on one trial, for spot checks.
pub fn trial_mse(config: &ScenarioConfig, point: &SweepPoint, trial: u64) -> Result<Vec<f64>> {
    let models = build_models(&config.geometry, &point.clusters, &config.dims)?;
    let counts: Vec<usize> = point.clusters.iter().map(|c| c.n_devices).collect();
    let channels = sample_network_sized(
        &models,
        &counts,
        &config.dims,
        config.budget.gain()?,
        config.seed,
        trial,
    )?;
    let budget = config.budget.link_budget(point.p_t_dbm)?;
    config
        .methods
        .iter()
        .map(|&m| {
            let a = design_for(m, &models, &channels, &config.dims)?;
            infeasible_as_infinite(closed_form_mse(&a, &channels, &budget))
        })
        .collect()
}

/// Writes the CSV and returns the number of bytes written.
pub fn emit_csv<W: Write>(rows: &[ResultRow], mut out: W) -> Result<usize> {
    if rows.is_empty() {
        return Err(Error::domain("no result rows to write"));
    }
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{:.8e},{:.8e},{}\n",
            r.scenario, r.sweep_name, r.sweep_value, r.method, r.mean_mse, r.std_err, r.trials
        ));
    }
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(text.len())
}

fn table1(
    name: &str,
    n_rx: usize,
    clusters: &[(f64, f64)],
    sweep: Sweep,
    methods: &[Method],
    p_t_dbm: f64,
) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        geometry: ArrayGeometry {
            n_rx,
            spacing: 1.0 / 3.0,
        },
        clusters: clusters
            .iter()
            .map(|&(theta_min, theta_max)| ClusterSpec {
                theta_min,
                theta_max,
                n_devices: DEFAULT_DEVICES,
            })
            .collect(),
        dims: SystemDims {
            n_tx: 5,
            payload_dim: 5,
            n_clusters: clusters.len(),
        },
        budget: BudgetConfig {
            bandwidth_hz: 10e6,
            noise_density_dbm_hz: -174.0,
            distance_km: 0.05,
            p_t_dbm,
        },
        sweep,
        methods: methods.to_vec(),
        trials: DEFAULT_TRIALS,
        seed: 0,
    }
}

/// The simulation setups behind each figure panel.
pub fn builtin_scenario(name: &str) -> Result<ScenarioConfig> {
    use Method::*;
    let p_t = || Sweep::PTDbm {
        values: vec![0.0, 10.0, 20.0, 30.0],
    };
    let k = || Sweep::K {
        values: vec![5, 10, 15, 20],
    };
    let fig3 = [(-49.0, -1.0), (1.0, 49.0)];
    let fig4 = [(-51.0, -15.0), (-14.0, 14.0), (15.0, 41.0)];
    let fig5 = [(-45.0, 15.0), (-15.0, 45.0)];
    let cfg = match name {
        "fig3a" => table1(name, 48, &fig3, p_t(), &[DisDab, DisDabHomRs], 20.0),
        "fig3b" => table1(name, 48, &fig3, k(), &[DisDab, DisDabHomRs], 20.0),
        "fig4a" => table1(name, 48, &fig4, p_t(), &[DisDab, DisDabHetRs], 20.0),
        "fig4b" => table1(name, 48, &fig4, k(), &[DisDab, DisDabHetRs], 20.0),
        "fig5a" => table1(name, 48, &fig5, p_t(), &[OvpDab, OvpDabRs], 20.0),
        "fig5b" => table1(name, 48, &fig5, k(), &[OvpDab, OvpDabRs], 20.0),
        "fig6a" => table1(
            name,
            30,
            &[(-35.0, 25.0), (-30.0, 30.0)],
            Sweep::DeltaDeg {
                values: vec![0.0, 10.0, 20.0, 30.0, 40.0],
                shift_signs: vec![-1.0, 1.0],
            },
            &[DisDab, OvpDab, Reference],
            24.0,
        ),
        "fig6b" => table1(
            name,
            30,
            &[(-50.0, 10.0), (-15.0, 45.0)],
            k(),
            &[DisDab, OvpDab, Reference],
            24.0,
        ),
        _ => {
            return Err(Error::UnknownScenario {
                name: name.to_string(),
                valid: BUILTIN_SCENARIOS.join(", "),
            })
        }
    };
    Ok(cfg)
}
