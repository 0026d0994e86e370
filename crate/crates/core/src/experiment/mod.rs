//! Experiment orchestration: builds the network, picks source-sink pairs,
//! drives one online Frank-Wolfe engine per pair over a shared weight
//! trajectory, and optionally samples replica intervals.
//!
//! Everything except wall-clock timing is a pure function of the config,
//! so the written CSV/JSON files are byte-for-byte reproducible.

mod output;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    gradient_bound, polytope_diameter_bound, sample_weights, ProcessKind, RngStream, StreamPurpose, WeightProcessConfig,
};
use crate::error::{Error, Result};
use crate::iasg::VerificationConfig;
use crate::netgraph::{export_dot, generate_counted, Graph, WeightVector};
use crate::ofw::{
    best_fixed_path_in_hindsight, eta_schedule, regret_report, round_to_path, EtaMode, GammaSchedule, LossTiming,
    OfwState, OracleDiagnostics, RegretReport, TraceRow,
};
use crate::sampler::{confidence_interval, run_replicas, CiReport, IntervalMode, SamplerConfig};
use crate::scalar::Scalar;

pub use output::{
    write_graph, write_iasg_report, write_run_outputs, write_sampling_outputs, write_scaling_table, SNAPSHOT_DIR,
};

/// Network sizes of the reference scaling study.
pub const DEFAULT_SCALING_SIZES: [usize; 4] = [12, 100, 200, 500];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkSpec {
    Generated {
        n_nodes: usize,
        #[serde(default = "default_degree_min")]
        degree_min: usize,
        #[serde(default = "default_degree_max")]
        degree_max: usize,
    },
    File {
        file: PathBuf,
    },
}

fn default_degree_min() -> usize {
    2
}

fn default_degree_max() -> usize {
    5
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec::Generated {
            n_nodes: 12,
            degree_min: default_degree_min(),
            degree_max: default_degree_max(),
        }
    }
}

/// Source-sink pairs to route. Absent means the network's own terminals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairSpec {
    /// Number of distinct connected pairs drawn uniformly at random.
    Count(usize),
    Explicit(Vec<[usize; 2]>),
}

/// Where the weights defining the first iterate come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialWeights {
    /// One draw of the weight process from its own stream.
    #[default]
    Sampled,
    /// The noiseless level of the process at step 0 (`w_max / 2` for uniform draws).
    Mean,
}

/// Replica-sampling section; horizon and seed come from the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub replicas: usize,
    pub alpha: f64,
    pub mode: IntervalMode,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerSection {
            replicas: d.replicas,
            alpha: d.alpha,
            mode: d.mode,
        }
    }
}

/// Quadratic problem and run parameters for the covariance check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IasgSection {
    pub hessian: Vec<Vec<f64>>,
    pub noise_cov: Vec<Vec<f64>>,
    pub optimum: Vec<f64>,
    #[serde(flatten)]
    pub run: VerificationConfig,
}

impl Default for IasgSection {
    fn default() -> Self {
        IasgSection {
            hessian: vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            noise_cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            optimum: vec![0.0, 0.0],
            run: VerificationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Scalar")]
pub struct ExperimentConfig<T = f64> {
    pub network: NetworkSpec,
    pub pairs: Option<PairSpec>,
    pub horizon: usize,
    pub eta_mode: EtaMode,
    pub gamma: GammaSchedule,
    pub loss_timing: LossTiming,
    pub initial_weights: InitialWeights,
    pub weights: WeightProcessConfig<T>,
    pub sampler: Option<SamplerSection>,
    pub seed: u64,
    pub out: PathBuf,
    /// Steps at which a DOT snapshot of every pair is taken.
    pub snapshot_steps: Vec<usize>,
    pub scaling_sizes: Vec<usize>,
    pub iasg: IasgSection,
}

impl<T: Scalar> Default for ExperimentConfig<T> {
    fn default() -> Self {
        ExperimentConfig {
            network: NetworkSpec::default(),
            pairs: None,
            horizon: 100,
            eta_mode: EtaMode::Theorem,
            gamma: GammaSchedule::Theorem,
            loss_timing: LossTiming::CommitThenObserve,
            initial_weights: InitialWeights::Sampled,
            weights: WeightProcessConfig::default(),
            sampler: None,
            seed: 0,
            out: PathBuf::from("out"),
            snapshot_steps: Vec::new(),
            scaling_sizes: DEFAULT_SCALING_SIZES.to_vec(),
            iasg: IasgSection::default(),
        }
    }
}

impl<T: Scalar> ExperimentConfig<T> {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Checks what can be checked without building the network.
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if let Some(&t) = self.snapshot_steps.iter().find(|&&t| t == 0 || t > self.horizon) {
            return Err(Error::Config(format!("snapshot step {t} outside 1..={}", self.horizon)));
        }
        if let Some(PairSpec::Count(0)) = self.pairs {
            return Err(Error::Config("pair count must be positive".into()));
        }
        if let Some(s) = &self.sampler {
            self.sampler_config(s).validate()?;
            if s.replicas < 2 {
                return Err(Error::Config("sampling needs at least 2 replicas".into()));
            }
        }
        Ok(())
    }

    fn sampler_config(&self, s: &SamplerSection) -> SamplerConfig {
        SamplerConfig {
            replicas: s.replicas,
            alpha: s.alpha,
            horizon: self.horizon,
            mode: s.mode,
            seed: self.seed,
        }
    }
}

/// Network and routed pairs of one experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub graph: Graph,
    /// Discarded draws before the generator produced a connected network.
    pub generation_retries: usize,
    pub pairs: Vec<(usize, usize)>,
}

pub fn build_setup<T: Scalar>(cfg: &ExperimentConfig<T>) -> Result<Setup> {
    cfg.validate()?;
    let (graph, generation_retries) = match &cfg.network {
        NetworkSpec::Generated {
            n_nodes,
            degree_min,
            degree_max,
        } => generate_counted(*n_nodes, *degree_min, *degree_max, cfg.seed)?,
        NetworkSpec::File { file } => (Graph::load(file)?, 0),
    };
    cfg.weights.validate(graph.arc_count())?;
    let pairs = select_pairs(&graph, cfg.pairs.as_ref(), cfg.seed)?;
    Ok(Setup {
        graph,
        generation_retries,
        pairs,
    })
}

fn select_pairs(g: &Graph, spec: Option<&PairSpec>, seed: u64) -> Result<Vec<(usize, usize)>> {
    let n = g.node_count();
    match spec {
        None => Ok(vec![(g.source(), g.sink())]),
        Some(PairSpec::Explicit(list)) => {
            if list.is_empty() {
                return Err(Error::Config("explicit pair list is empty".into()));
            }
            list.iter()
                .map(|&[u, v]| {
                    if u >= n || v >= n {
                        Err(Error::Config(format!(
                            "pair ({u}, {v}) references a node outside 0..{n}"
                        )))
                    } else if u == v {
                        Err(Error::Config(format!("pair ({u}, {v}) has equal endpoints")))
                    } else if !g.reachable(u, v) {
                        Err(Error::Config(format!("pair ({u}, {v}) is disconnected")))
                    } else {
                        Ok((u, v))
                    }
                })
                .collect()
        }
        Some(&PairSpec::Count(k)) => {
            let candidates: Vec<(usize, usize)> = (0..n)
                .flat_map(|u| {
                    let seen = g.reachable_from(u);
                    (0..n).filter(move |&v| v != u && seen[v]).map(move |v| (u, v))
                })
                .collect();
            if k > candidates.len() {
                return Err(Error::Config(format!(
                    "asked for {k} pairs but the network has {} connected pairs",
                    candidates.len()
                )));
            }
            let mut rng = RngStream::new(seed, 0, StreamPurpose::Pairs);
            Ok(index::sample(&mut rng, candidates.len(), k)
                .into_iter()
                .map(|i| candidates[i])
                .collect())
        }
    }
}

/// Rendered DOT frame of one pair at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub dot: String,
}

/// Result of routing one pair.
#[derive(Debug, Clone)]
pub struct PairRun<T> {
    pub pair_id: usize,
    pub source: usize,
    pub sink: usize,
    pub eta: T,
    pub trace: Vec<TraceRow<T>>,
    pub regret: RegretReport<T>,
    pub max_violation: T,
    pub diagnostics: OracleDiagnostics,
    pub elapsed: Duration,
    pub snapshots: Vec<Snapshot>,
}

/// Replica interval for one pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct PairInterval<T> {
    pub pair_id: usize,
    pub source: usize,
    pub sink: usize,
    #[serde(flatten)]
    pub report: CiReport<T>,
}

/// Wall-clock seconds per phase. Never part of the reproducible outputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseTiming {
    pub setup: Duration,
    pub weights: Duration,
    pub optimization: Duration,
    /// Oracle time summed over pairs.
    pub oracle: Duration,
    pub sampling: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport<T> {
    pub graph: Graph,
    pub generation_retries: usize,
    pub horizon: usize,
    pub pairs: Vec<PairRun<T>>,
    pub intervals: Option<Vec<PairInterval<T>>>,
    pub timing: PhaseTiming,
}

impl<T> ExperimentReport<T> {
    pub fn oracle_calls(&self) -> usize {
        self.pairs.iter().map(|p| p.diagnostics.calls).sum()
    }

    pub fn clamped_entries(&self) -> usize {
        self.pairs.iter().map(|p| p.diagnostics.clamped_entries).sum()
    }
}

/// Routes every configured pair for `horizon` steps; samples intervals too
/// when the config carries a sampler section.
pub fn run_experiment<T: Scalar>(cfg: &ExperimentConfig<T>) -> Result<ExperimentReport<T>> {
    execute(cfg, true, cfg.sampler.clone())
}

/// Replica sampling only, for every configured pair. A missing sampler
/// section falls back to its defaults.
pub fn run_sampling<T: Scalar>(cfg: &ExperimentConfig<T>) -> Result<ExperimentReport<T>> {
    execute(cfg, false, Some(cfg.sampler.clone().unwrap_or_default()))
}

fn execute<T: Scalar>(
    cfg: &ExperimentConfig<T>,
    optimize: bool,
    sampler: Option<SamplerSection>,
) -> Result<ExperimentReport<T>> {
    let started = Instant::now();
    let mut timing = PhaseTiming::default();
    let setup = build_setup(cfg)?;
    timing.setup = started.elapsed();

    let mut pairs = Vec::new();
    if optimize {
        let clock = Instant::now();
        let (w0, trajectory) = weight_trajectory(&setup.graph, cfg)?;
        timing.weights = clock.elapsed();

        let clock = Instant::now();
        pairs = setup
            .pairs
            .par_iter()
            .enumerate()
            .map(|(id, &(u, v))| route_pair(&setup.graph, cfg, id, u, v, &w0, &trajectory))
            .collect::<Result<Vec<_>>>()?;
        timing.optimization = clock.elapsed();
        timing.oracle = pairs.iter().map(|p| p.diagnostics.elapsed).sum();
    }

    let intervals = match sampler {
        Some(section) => {
            let clock = Instant::now();
            let sc = cfg.sampler_config(&section);
            let out = setup
                .pairs
                .iter()
                .enumerate()
                .map(|(id, &(u, v))| {
                    let g = setup.graph.with_terminals(u, v)?;
                    let summaries = run_replicas(&g, &cfg.weights, &sc)?;
                    let ci = confidence_interval(&summaries, &sc)?;
                    Ok(PairInterval {
                        pair_id: id,
                        source: u,
                        sink: v,
                        report: CiReport::new(&sc, &ci, &summaries),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            timing.sampling = clock.elapsed();
            Some(out)
        }
        None => None,
    };
    timing.total = started.elapsed();

    Ok(ExperimentReport {
        graph: setup.graph,
        generation_retries: setup.generation_retries,
        horizon: cfg.horizon,
        pairs,
        intervals,
        timing,
    })
}

/// `w_0` and the shared draws `w_1..w_T`.
fn weight_trajectory<T: Scalar>(
    g: &Graph,
    cfg: &ExperimentConfig<T>,
) -> Result<(WeightVector<T>, Vec<WeightVector<T>>)> {
    let w0 = match cfg.initial_weights {
        InitialWeights::Sampled => {
            let mut rng = RngStream::new(cfg.seed, 0, StreamPurpose::InitialWeights);
            sample_weights(g, &cfg.weights, 0, &mut rng)?
        }
        InitialWeights::Mean => mean_weights(g, &cfg.weights)?,
    };
    let mut rng = RngStream::new(cfg.seed, 0, StreamPurpose::Weights);
    let trajectory = (1..=cfg.horizon)
        .map(|t| sample_weights(g, &cfg.weights, t, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok((w0, trajectory))
}

fn mean_weights<T: Scalar>(g: &Graph, process: &WeightProcessConfig<T>) -> Result<WeightVector<T>> {
    match process.kind {
        ProcessKind::IidUniform => Ok(WeightVector::new(vec![process.w_max / T::of(2.0); g.arc_count()])?),
        ProcessKind::Composite => {
            let mut quiet = process.clone();
            quiet.composite.noise_stddev = T::zero();
            // no noise, so the stream is never consumed
            let mut rng = RngStream::new(0, 0, StreamPurpose::InitialWeights);
            sample_weights(g, &quiet, 0, &mut rng)
        }
    }
}

fn route_pair<T: Scalar>(
    network: &Graph,
    cfg: &ExperimentConfig<T>,
    pair_id: usize,
    source: usize,
    sink: usize,
    w0: &WeightVector<T>,
    trajectory: &[WeightVector<T>],
) -> Result<PairRun<T>> {
    let clock = Instant::now();
    let g = network.with_terminals(source, sink)?;
    let grad = gradient_bound(&g, &cfg.weights);
    let diam = polytope_diameter_bound::<T>(&g);
    let eta = eta_schedule(grad, diam, cfg.horizon, cfg.eta_mode)?;
    let mut state = OfwState::init(&g, w0, eta, cfg.gamma, cfg.horizon)?.with_loss_timing(cfg.loss_timing);
    let mut snapshots = Vec::new();
    for w in trajectory {
        let t = state.t();
        if cfg.snapshot_steps.contains(&t) {
            snapshots.push(snapshot(&g, w, &round_to_path(&g, state.x())?, t)?);
        }
        state.step(&g, w)?;
    }
    let (_, hindsight) = best_fixed_path_in_hindsight(&g, state.cum_weights())?;
    let regret = regret_report(state.trace(), hindsight, grad, diam, cfg.horizon)?;
    Ok(PairRun {
        pair_id,
        source,
        sink,
        eta,
        trace: state.trace().to_vec(),
        regret,
        max_violation: state.max_violation(),
        diagnostics: state.diagnostics().clone(),
        elapsed: clock.elapsed(),
        snapshots,
    })
}

/// DOT frame of `g` under `w_t` with `path` drawn solid.
pub fn snapshot<T: Scalar>(
    g: &Graph,
    w: &WeightVector<T>,
    path: &crate::netgraph::PathPoint<T>,
    t: usize,
) -> Result<Snapshot> {
    Ok(Snapshot {
        step: t,
        dot: export_dot(g, w, path)?,
    })
}

/// One row of the scaling table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub nodes: usize,
    pub total_seconds: f64,
    pub oracle_seconds: f64,
    pub horizon: usize,
    pub oracle_calls: usize,
    pub per_iteration_oracle_seconds: f64,
}

/// Runs the template experiment once per network size and times it.
/// Sampling and snapshots are switched off.
pub fn run_scaling_study<T: Scalar>(sizes: &[usize], template: &ExperimentConfig<T>) -> Result<Vec<ScalingRow>> {
    if sizes.is_empty() {
        return Err(Error::Config("scaling study needs at least one size".into()));
    }
    let (degree_min, degree_max) = match template.network {
        NetworkSpec::Generated {
            degree_min, degree_max, ..
        } => (degree_min, degree_max),
        NetworkSpec::File { .. } => (default_degree_min(), default_degree_max()),
    };
    sizes
        .iter()
        .map(|&n| {
            let cfg = ExperimentConfig {
                network: NetworkSpec::Generated {
                    n_nodes: n,
                    degree_min,
                    degree_max,
                },
                sampler: None,
                snapshot_steps: Vec::new(),
                ..template.clone()
            };
            let report = run_experiment(&cfg)?;
            let calls = report.oracle_calls();
            let oracle = report.timing.oracle.as_secs_f64();
            log::info!(
                "N={n}: {:.4}s total, {} oracle calls",
                report.timing.total.as_secs_f64(),
                calls
            );
            Ok(ScalingRow {
                nodes: n,
                total_seconds: report.timing.total.as_secs_f64(),
                oracle_seconds: oracle,
                horizon: cfg.horizon,
                oracle_calls: calls,
                per_iteration_oracle_seconds: oracle / calls.max(1) as f64,
            })
        })
        .collect()
}
