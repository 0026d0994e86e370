//! Replica sampling of the final routing cost and its confidence interval.
//!
//! `L` independent online Frank-Wolfe runs use the averaging schedule and
//! `eta = 1/T`, each over its own weight trajectory. The final cost of
//! every replica feeds a one-pass variance estimate and a normal interval
//! around the replicate mean.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{sample_weights, RngStream, StreamPurpose, WeightProcessConfig};
use crate::error::{Error, Result};
use crate::netgraph::{path_cost, Graph, PathPoint, WeightVector};
use crate::ofw::{eta_schedule, round_to_path, EtaMode, GammaSchedule, OfwState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMode {
    /// Half-width `u sqrt(sigma_hat)`: where a single replicate cost falls.
    #[default]
    Distribution,
    /// Half-width `u sqrt(sigma_hat / L)`: where the mean cost falls.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub replicas: usize,
    pub alpha: f64,
    pub horizon: usize,
    pub mode: IntervalMode,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            replicas: 100,
            alpha: 0.05,
            horizon: 100,
            mode: IntervalMode::Distribution,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::Config("replica count must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaSummary<T> {
    pub replica: usize,
    /// Iterate in force at the last step, `x_T`.
    pub final_iterate: PathPoint<T>,
    /// Weights observed at the last step, `w_T`.
    pub final_weights: WeightVector<T>,
    /// `<w_T, x_T>`.
    pub cost: T,
    pub rounded_path: PathPoint<T>,
}

/// Runs one replica; replica `l` draws from streams `(seed, l, *)`.
pub fn run_replica<T: Scalar>(
    g: &Graph,
    process: &WeightProcessConfig<T>,
    cfg: &SamplerConfig,
    replica: usize,
) -> Result<ReplicaSummary<T>> {
    let mut init_rng = RngStream::new(cfg.seed, replica as u64, StreamPurpose::InitialWeights);
    let w0 = sample_weights(g, process, 0, &mut init_rng)?;
    let eta = eta_schedule(T::one(), T::one(), cfg.horizon, EtaMode::Sampler)?;
    let mut state = OfwState::init(g, &w0, eta, GammaSchedule::Averaging, cfg.horizon)?;
    let mut rng = RngStream::new(cfg.seed, replica as u64, StreamPurpose::Weights);
    let mut last = None;
    while !state.is_finished() {
        let t = state.t();
        let w = sample_weights(g, process, t, &mut rng)?;
        if t == cfg.horizon {
            last = Some((state.x().clone(), w.clone()));
        }
        state.step(g, &w)?;
    }
    let (final_iterate, final_weights) = last.expect("horizon is at least one step");
    Ok(ReplicaSummary {
        replica,
        cost: path_cost(&final_iterate, &final_weights)?,
        rounded_path: round_to_path(g, &final_iterate)?,
        final_iterate,
        final_weights,
    })
}

/// Runs replicas `0..L` in parallel; results are ordered by replica index.
pub fn run_replicas<T: Scalar>(
    g: &Graph,
    process: &WeightProcessConfig<T>,
    cfg: &SamplerConfig,
) -> Result<Vec<ReplicaSummary<T>>> {
    run_replica_range(g, process, cfg, 0..cfg.replicas)
}

/// Runs an arbitrary range of replica indices, e.g. fresh replicas beyond
/// those used to build an interval.
pub fn run_replica_range<T: Scalar>(
    g: &Graph,
    process: &WeightProcessConfig<T>,
    cfg: &SamplerConfig,
    replicas: Range<usize>,
) -> Result<Vec<ReplicaSummary<T>>> {
    cfg.validate()?;
    process.validate(g.arc_count())?;
    replicas
        .into_par_iter()
        .map(|l| run_replica(g, process, cfg, l))
        .collect()
}

/// Replicate mean and `(1/L) sum c^2 - ((1/L) sum c)^2`, clamped at zero.
///
/// Both are accumulated relative to the first cost (the shifted-data
/// form): algebraically identical, but exact for constant inputs and free
/// of cancellation when the mean is large.
pub fn replicate_moments<T: Scalar>(costs: &[T]) -> Result<(T, T)> {
    let Some(&pivot) = costs.first() else {
        return Err(Error::InvalidArgument("no replicate costs".into()));
    };
    let l = T::of(costs.len() as f64);
    let (sum, sum_sq) = costs.iter().fold((T::zero(), T::zero()), |(s, q), &c| {
        let d = c - pivot;
        (s + d, q + d * d)
    });
    let offset = sum / l;
    Ok((pivot + offset, (sum_sq / l - offset * offset).max(T::zero())))
}

pub fn replicate_variance<T: Scalar>(costs: &[T]) -> Result<T> {
    Ok(replicate_moments(costs)?.1)
}

/// Standard normal quantile: `q` with `Phi(q) = p`.
///
/// Rational approximation (relative error about 1e-9) refined by one
/// Halley step on the exact CDF.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile level must lie in (0, 1), got {p}"
        )));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.54967101033649e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - P_LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    let cdf = 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2);
    let e = cdf - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    Ok(x - u / (1.0 + x * u / 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval<T> {
    pub lower: T,
    pub upper: T,
    pub mean: T,
    pub sigma_hat: T,
    pub alpha: f64,
    pub mode: IntervalMode,
}

impl<T: Scalar> ConfidenceInterval<T> {
    pub fn contains(&self, value: T) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn half_width(&self) -> T {
        (self.upper - self.lower) / T::of(2.0)
    }
}

/// Interval around the mean of `costs` at level `1 - alpha`.
pub fn interval_from_costs<T: Scalar>(costs: &[T], alpha: f64, mode: IntervalMode) -> Result<ConfidenceInterval<T>> {
    if costs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "an interval needs at least 2 replicates, got {}",
            costs.len()
        )));
    }
    let l = T::of(costs.len() as f64);
    let (mean, sigma_hat) = replicate_moments(costs)?;
    let u = T::of(normal_quantile(1.0 - alpha / 2.0)?);
    let spread = match mode {
        IntervalMode::Distribution => u * sigma_hat.sqrt(),
        IntervalMode::Mean => u * sigma_hat.sqrt() / l.sqrt(),
    };
    Ok(ConfidenceInterval {
        lower: mean - spread,
        upper: mean + spread,
        mean,
        sigma_hat,
        alpha,
        mode,
    })
}

pub fn confidence_interval<T: Scalar>(
    summaries: &[ReplicaSummary<T>],
    cfg: &SamplerConfig,
) -> Result<ConfidenceInterval<T>> {
    let costs: Vec<T> = summaries.iter().map(|s| s.cost).collect();
    interval_from_costs(&costs, cfg.alpha, cfg.mode)
}

/// JSON report of one sampling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CiReport<T> {
    #[serde(rename = "L")]
    pub replicas: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub alpha: f64,
    pub mode: IntervalMode,
    pub mean: T,
    pub sigma_hat: T,
    pub lower: T,
    pub upper: T,
    pub costs: Vec<T>,
}

impl<T: Scalar> CiReport<T> {
    pub fn new(cfg: &SamplerConfig, ci: &ConfidenceInterval<T>, summaries: &[ReplicaSummary<T>]) -> Self {
        CiReport {
            replicas: summaries.len(),
            horizon: cfg.horizon,
            alpha: ci.alpha,
            mode: ci.mode,
            mean: ci.mean,
            sigma_hat: ci.sigma_hat,
            lower: ci.lower,
            upper: ci.upper,
            costs: summaries.iter().map(|s| s.cost).collect(),
        }
    }
}
