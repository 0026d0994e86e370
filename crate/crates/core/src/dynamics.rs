//! Time-varying random weight processes driving the network.
//!
//! Two processes are available: independent uniform traversal times, and a
//! composite signal adding a periodic component, a linear trend, step jumps
//! and Gaussian noise to a per-arc base level, clipped to `[0, w_max]`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::{Graph, WeightVector};
use crate::scalar::Scalar;

/// What a random stream is used for. Part of the stream identity so that
/// draws for one purpose never shift draws for another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamPurpose {
    Weights,
    InitialWeights,
    Pairs,
    GradientNoise,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Weights => 1,
            StreamPurpose::InitialWeights => 2,
            StreamPurpose::Pairs => 3,
            StreamPurpose::GradientNoise => 4,
        }
    }
}

/// Deterministic random stream identified by `(seed, replica, purpose)`.
///
/// Each identity maps to its own ChaCha stream, so adding replicas or
/// purposes never perturbs the values seen by existing ones.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    replica: u64,
    purpose: StreamPurpose,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, replica: u64, purpose: StreamPurpose) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((replica << 8) | purpose.tag());
        RngStream {
            seed,
            replica,
            purpose,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }

    pub fn purpose(&self) -> StreamPurpose {
        self.purpose
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    #[default]
    IidUniform,
    Composite,
}

/// Base level of the composite process: one value for every arc, or one
/// value per arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseLevel<T> {
    Uniform(T),
    PerArc(Vec<T>),
}

impl<T: Scalar> BaseLevel<T> {
    fn at(&self, arc: usize) -> T {
        match self {
            BaseLevel::Uniform(v) => *v,
            BaseLevel::PerArc(v) => v[arc],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct CompositeParams<T> {
    pub base: BaseLevel<T>,
    /// Period of the sinusoidal component, in steps.
    pub period: usize,
    pub periodic_amplitude: T,
    /// Additive change per step.
    pub trend_slope: T,
    pub jump_times: Vec<usize>,
    pub jump_sizes: Vec<T>,
    pub noise_stddev: T,
}

impl<T: Scalar> Default for CompositeParams<T> {
    fn default() -> Self {
        CompositeParams {
            base: BaseLevel::Uniform(T::of(0.5)),
            period: 24,
            periodic_amplitude: T::zero(),
            trend_slope: T::zero(),
            jump_times: Vec::new(),
            jump_sizes: Vec::new(),
            noise_stddev: T::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct WeightProcessConfig<T> {
    pub kind: ProcessKind,
    pub w_max: T,
    pub composite: CompositeParams<T>,
}

impl<T: Scalar> Default for WeightProcessConfig<T> {
    fn default() -> Self {
        WeightProcessConfig {
            kind: ProcessKind::IidUniform,
            w_max: T::one(),
            composite: CompositeParams::default(),
        }
    }
}

impl<T: Scalar> WeightProcessConfig<T> {
    pub fn iid_uniform(w_max: T) -> Self {
        WeightProcessConfig {
            kind: ProcessKind::IidUniform,
            w_max,
            ..Default::default()
        }
    }

    /// Composite process with every component switched off: the weights
    /// stay at `base` forever.
    pub fn constant(base: BaseLevel<T>, w_max: T) -> Self {
        WeightProcessConfig {
            kind: ProcessKind::Composite,
            w_max,
            composite: CompositeParams {
                base,
                ..Default::default()
            },
        }
    }

    pub fn validate(&self, arc_count: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.w_max.is_finite() && self.w_max > T::zero()) {
            return bad(format!("w_max must be positive, got {}", self.w_max));
        }
        if self.kind == ProcessKind::IidUniform {
            return Ok(());
        }
        let c = &self.composite;
        if let BaseLevel::PerArc(v) = &c.base {
            if v.len() != arc_count {
                return bad(format!("base has {} entries for {} arcs", v.len(), arc_count));
            }
        }
        let base_ok = match &c.base {
            BaseLevel::Uniform(v) => v.is_finite(),
            BaseLevel::PerArc(v) => v.iter().all(|x| x.is_finite()),
        };
        if !base_ok {
            return bad("base levels must be finite".into());
        }
        if c.period == 0 {
            return bad("period must be positive".into());
        }
        if !(c.periodic_amplitude.is_finite() && c.periodic_amplitude >= T::zero()) {
            return bad("periodic_amplitude must be finite and nonnegative".into());
        }
        if !c.trend_slope.is_finite() {
            return bad("trend_slope must be finite".into());
        }
        if !(c.noise_stddev.is_finite() && c.noise_stddev >= T::zero()) {
            return bad("noise_stddev must be finite and nonnegative".into());
        }
        if c.jump_times.len() != c.jump_sizes.len() {
            return bad("jump_times and jump_sizes differ in length".into());
        }
        if !c.jump_sizes.iter().all(|x| x.is_finite()) {
            return bad("jump sizes must be finite".into());
        }
        Ok(())
    }
}

/// Draws the weight vector for step `t`.
pub fn sample_weights<T: Scalar>(
    g: &Graph,
    cfg: &WeightProcessConfig<T>,
    t: usize,
    rng: &mut RngStream,
) -> Result<WeightVector<T>> {
    cfg.validate(g.arc_count())?;
    let m = g.arc_count();
    let values = match cfg.kind {
        ProcessKind::IidUniform => (0..m)
            .map(|_| (T::sample_unit(rng) * cfg.w_max).min(cfg.w_max))
            .collect(),
        ProcessKind::Composite => {
            let c = &cfg.composite;
            let step = T::of(t as f64);
            let phase = T::TAU() * step / T::of(c.period as f64);
            let jumps = c
                .jump_times
                .iter()
                .zip(&c.jump_sizes)
                .filter(|(&at, _)| at <= t)
                .fold(T::zero(), |acc, (_, &size)| acc + size);
            let shared = c.periodic_amplitude * phase.sin() + c.trend_slope * step + jumps;
            (0..m)
                .map(|e| {
                    let noise = if c.noise_stddev > T::zero() {
                        c.noise_stddev * T::sample_standard_normal(rng)
                    } else {
                        T::zero()
                    };
                    (c.base.at(e) + shared + noise).max(T::zero()).min(cfg.w_max)
                })
                .collect()
        }
    };
    WeightVector::new(values)
}

/// `w_max * sqrt(|arcs|)`, a bound on the Euclidean norm of any weight draw.
pub fn gradient_bound<T: Scalar>(g: &Graph, cfg: &WeightProcessConfig<T>) -> T {
    cfg.w_max * T::of(g.arc_count() as f64).sqrt()
}

/// `sqrt(2 (|V| - 1))`. Two simple-path indicators differ in at most
/// `2 (|V| - 1)` coordinates, so this dominates the distance between any
/// two path vertices.
pub fn polytope_diameter_bound<T: Scalar>(g: &Graph) -> T {
    T::of(2.0 * (g.node_count() as f64 - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{generate_random_network, shortest_path_oracle, CostVector};
    use rand::Rng;

    fn graph_with_arcs(pairs: usize) -> Graph {
        // a cycle on `pairs` nodes has exactly `pairs` undirected edges
        let edges: Vec<(usize, usize)> = (0..pairs).map(|i| (i, (i + 1) % pairs)).collect();
        Graph::from_undirected(pairs, &edges, 0, pairs - 1).unwrap()
    }

    #[test]
    fn iid_uniform_within_unit_interval() {
        let g = generate_random_network(12, 2, 5, 1).unwrap();
        let cfg = WeightProcessConfig::<f64>::iid_uniform(1.0);
        let mut rng = RngStream::new(9, 0, StreamPurpose::Weights);
        for t in 0..200 {
            let w = sample_weights(&g, &cfg, t, &mut rng).unwrap();
            assert_eq!(w.len(), g.arc_count());
            assert!(w.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn composite_without_components_is_constant() {
        let g = graph_with_arcs(4);
        let base: Vec<f64> = (0..g.arc_count()).map(|i| 0.1 * i as f64).collect();
        let cfg = WeightProcessConfig::constant(BaseLevel::PerArc(base.clone()), 1.0);
        let mut rng = RngStream::new(1, 0, StreamPurpose::Weights);
        for t in [0, 1, 7, 100] {
            assert_eq!(sample_weights(&g, &cfg, t, &mut rng).unwrap().values(), base.as_slice());
        }
    }

    #[test]
    fn composite_peak_of_the_cycle() {
        let g = graph_with_arcs(3);
        let mut cfg = WeightProcessConfig::constant(BaseLevel::Uniform(0.5f64), 1.0);
        cfg.composite.periodic_amplitude = 0.1;
        cfg.composite.period = 24;
        let mut rng = RngStream::new(1, 0, StreamPurpose::Weights);
        let w = sample_weights(&g, &cfg, 6, &mut rng).unwrap();
        for &v in w.values() {
            assert!((v - 0.6).abs() < 1e-15);
        }
    }

    #[test]
    fn composite_trend_jumps_and_clipping() {
        let g = graph_with_arcs(3);
        let mut cfg = WeightProcessConfig::constant(BaseLevel::Uniform(0.2), 1.0);
        cfg.composite.trend_slope = 0.01;
        cfg.composite.jump_times = vec![5, 50];
        cfg.composite.jump_sizes = vec![0.3, -0.4];
        let at = |cfg: &WeightProcessConfig<f64>, t| {
            let mut rng = RngStream::new(1, 0, StreamPurpose::Weights);
            sample_weights(&g, cfg, t, &mut rng).unwrap().values()[0]
        };
        assert!((at(&cfg, 4) - 0.24).abs() < 1e-15);
        assert!((at(&cfg, 5) - 0.55).abs() < 1e-15);
        assert!((at(&cfg, 49) - 0.99).abs() < 1e-15);
        assert!((at(&cfg, 60) - 0.7).abs() < 1e-15);
        cfg.composite.trend_slope = 0.1;
        assert_eq!(at(&cfg, 40), 1.0);
        cfg.composite.jump_sizes = vec![-2.0, 0.0];
        assert_eq!(at(&cfg, 5), 0.0);
    }

    #[test]
    fn noisy_composite_stays_in_range() {
        let g = generate_random_network(20, 2, 5, 3).unwrap();
        let mut cfg = WeightProcessConfig::constant(BaseLevel::Uniform(0.5), 1.0);
        cfg.composite.noise_stddev = 0.4;
        cfg.composite.periodic_amplitude = 0.3;
        let mut rng = RngStream::new(2, 0, StreamPurpose::Weights);
        for t in 0..100 {
            let w = sample_weights(&g, &cfg, t, &mut rng).unwrap();
            assert!(w.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let g = graph_with_arcs(3);
        let mut rng = RngStream::new(1, 0, StreamPurpose::Weights);
        let cfg = WeightProcessConfig::<f64>::iid_uniform(0.0);
        assert!(sample_weights(&g, &cfg, 0, &mut rng).is_err());
        let cfg = WeightProcessConfig::constant(BaseLevel::PerArc(vec![0.1; 2]), 1.0);
        assert!(sample_weights(&g, &cfg, 0, &mut rng).is_err());
        let mut cfg = WeightProcessConfig::constant(BaseLevel::Uniform(0.1), 1.0);
        cfg.composite.jump_times = vec![1];
        assert!(sample_weights(&g, &cfg, 0, &mut rng).is_err());
    }

    #[test]
    fn streams_are_reproducible_and_independent() {
        let g = generate_random_network(12, 2, 5, 1).unwrap();
        let cfg = WeightProcessConfig::<f64>::iid_uniform(1.0);
        let draw = |replica, purpose| {
            let mut rng = RngStream::new(5, replica, purpose);
            (0..10)
                .flat_map(|t| sample_weights(&g, &cfg, t, &mut rng).unwrap().into_inner())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(0, StreamPurpose::Weights), draw(0, StreamPurpose::Weights));
        assert_ne!(draw(0, StreamPurpose::Weights), draw(1, StreamPurpose::Weights));
        assert_ne!(draw(0, StreamPurpose::Weights), draw(0, StreamPurpose::InitialWeights));
    }

    #[test]
    fn bounds_follow_their_formulas() {
        let g16 = graph_with_arcs(8);
        assert_eq!(g16.arc_count(), 16);
        assert_eq!(gradient_bound(&g16, &WeightProcessConfig::<f64>::iid_uniform(1.0)), 4.0);
        let g9_arcs: Vec<(usize, usize)> = (0..9).map(|i| (i, i + 1)).collect();
        let g9 = Graph::new(10, g9_arcs, 0, 9).unwrap();
        assert_eq!(gradient_bound(&g9, &WeightProcessConfig::<f64>::iid_uniform(2.0)), 6.0);

        let g12 = generate_random_network(12, 2, 5, 0).unwrap();
        assert!((polytope_diameter_bound::<f64>(&g12) - 22f64.sqrt()).abs() < 1e-15);
        let g2 = Graph::new(2, vec![(0, 1)], 0, 1).unwrap();
        assert_eq!(polytope_diameter_bound::<f64>(&g2), 2f64.sqrt());
    }

    #[test]
    fn gradient_bound_dominates_samples() {
        let g = generate_random_network(30, 2, 5, 8).unwrap();
        let cfg = WeightProcessConfig::<f64>::iid_uniform(1.0);
        let bound = gradient_bound(&g, &cfg);
        let mut rng = RngStream::new(3, 0, StreamPurpose::Weights);
        for t in 0..1000 {
            assert!(sample_weights(&g, &cfg, t, &mut rng).unwrap().norm() <= bound);
        }
    }

    #[test]
    fn diameter_bound_dominates_path_distances() {
        let mut rng = RngStream::new(4, 0, StreamPurpose::Pairs);
        for seed in 0..10 {
            let g = generate_random_network(15, 2, 5, seed).unwrap();
            let d: f64 = polytope_diameter_bound(&g);
            let paths: Vec<_> = (0..20)
                .map(|_| {
                    let c: Vec<f64> = (0..g.arc_count()).map(|_| rng.random::<f64>()).collect();
                    shortest_path_oracle(&g, &CostVector::new(c).unwrap()).unwrap().point
                })
                .collect();
            for x in &paths {
                for y in &paths {
                    let dist = x
                        .mass()
                        .iter()
                        .zip(y.mass())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    assert!(dist <= d);
                }
            }
        }
    }

    #[test]
    fn config_deserializes_with_defaults() {
        let cfg: WeightProcessConfig<f64> = serde_json::from_str(
            r#"{"kind": "composite", "composite": {"base": [0.1, 0.2], "periodic_amplitude": 0.2}}"#,
        )
        .unwrap();
        assert_eq!(cfg.w_max, 1.0);
        assert_eq!(cfg.composite.base, BaseLevel::PerArc(vec![0.1, 0.2]));
        assert_eq!(cfg.composite.period, 24);
        let cfg: WeightProcessConfig<f64> = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.kind, ProcessKind::IidUniform);
    }
}
