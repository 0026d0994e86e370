//! Online Frank-Wolfe over the shortest-path flow polytope.
//!
//! Each round the engine charges the loss of its current fractional
//! iterate, accumulates the observed weights, asks the shortest-path
//! oracle for the vertex minimizing `eta * sum(w) + 2 (x_t - x_1)`, and
//! moves to `gamma_t x_t + (1 - gamma_t) y_{t+1}`.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::{
    path_cost, shortest_path_oracle, validate_path_point, CostVector, Graph, PathPoint, WeightVector,
};
use crate::scalar::Scalar;

/// Convex-combination weight schedule `gamma_t` applied to the current iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GammaSchedule {
    /// `min(1, 2 / sqrt(t))`, the schedule carrying the regret guarantee.
    #[default]
    Theorem,
    /// `t / (t + 1)`, which makes the iterate a running average.
    Averaging,
}

impl GammaSchedule {
    pub fn at<T: Scalar>(self, t: usize) -> T {
        match self {
            GammaSchedule::Theorem => gamma_theorem(t),
            GammaSchedule::Averaging => gamma_averaging(t),
        }
    }
}

/// Step-size rule for `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    /// `G / (D T^{3/4})`.
    #[default]
    Theorem,
    /// `G / (D T^{3/2})`, as used for the original road-network simulations.
    Simulation,
    /// `1 / T`, used by the replica sampler.
    Sampler,
}

/// When the round's weights become visible relative to the decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossTiming {
    /// Commit to `x_t`, then observe `w_t` and pay `<w_t, x_t>`.
    #[default]
    CommitThenObserve,
    /// Observe `w_t`, update, and pay `<w_t, x_{t+1}>`.
    ObserveThenCommit,
}

pub fn gamma_theorem<T: Scalar>(t: usize) -> T {
    T::one().min(T::of(2.0) / T::of(t as f64).sqrt())
}

pub fn gamma_averaging<T: Scalar>(t: usize) -> T {
    let t = T::of(t as f64);
    t / (t + T::one())
}

/// `eta` for the given weight bound `g`, diameter `d` and horizon.
pub fn eta_schedule<T: Scalar>(g: T, d: T, horizon: usize, mode: EtaMode) -> Result<T> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let h = T::of(horizon as f64);
    if mode == EtaMode::Sampler {
        return Ok(T::one() / h);
    }
    if !(g > T::zero() && d > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "weight bound and diameter must be positive, got {g} and {d}"
        )));
    }
    let exponent = match mode {
        EtaMode::Theorem => T::of(0.75),
        _ => T::of(1.5),
    };
    Ok(g / (d * h.powf(exponent)))
}

/// One row of the per-step trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow<T> {
    pub t: usize,
    pub loss: T,
    /// Cost entries clamped to zero by the oracle in this step.
    pub clamps: usize,
}

/// Oracle usage accumulated by one engine.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleDiagnostics {
    pub calls: usize,
    pub clamped_entries: usize,
    /// Calls in which at least one entry was clamped.
    pub clamped_calls: usize,
    pub elapsed: Duration,
}

/// Outcome of a single round.
#[derive(Debug, Clone)]
pub struct StepRecord<T> {
    pub row: TraceRow<T>,
    /// Oracle vertex `y_{t+1}`.
    pub target: PathPoint<T>,
    pub gamma: T,
}

/// Full iterate state of the online Frank-Wolfe engine.
#[derive(Debug, Clone)]
pub struct OfwState<T> {
    t: usize,
    x: PathPoint<T>,
    x1: PathPoint<T>,
    cum_weights: Vec<T>,
    eta: T,
    gamma: GammaSchedule,
    horizon: usize,
    timing: LossTiming,
    trace: Vec<TraceRow<T>>,
    max_violation: T,
    diagnostics: OracleDiagnostics,
}

impl<T: Scalar> OfwState<T> {
    /// Starts from the shortest path under `w0`, which serves as both
    /// `x_1` and `y_1`.
    pub fn init(g: &Graph, w0: &WeightVector<T>, eta: T, gamma: GammaSchedule, horizon: usize) -> Result<Self> {
        if !(eta > T::zero() && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
        }
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        let start = Instant::now();
        let first = shortest_path_oracle(g, &CostVector::from(w0))?;
        let diagnostics = OracleDiagnostics {
            calls: 1,
            clamped_entries: first.clamped,
            clamped_calls: usize::from(first.clamped > 0),
            elapsed: start.elapsed(),
        };
        Ok(OfwState {
            t: 1,
            x: first.point.clone(),
            x1: first.point,
            cum_weights: vec![T::zero(); g.arc_count()],
            eta,
            gamma,
            horizon,
            timing: LossTiming::default(),
            trace: Vec::with_capacity(horizon),
            max_violation: T::zero(),
            diagnostics,
        })
    }

    pub fn with_loss_timing(mut self, timing: LossTiming) -> Self {
        self.timing = timing;
        self
    }

    /// Plays round `t` against the weights `w`.
    pub fn step(&mut self, g: &Graph, w: &WeightVector<T>) -> Result<StepRecord<T>> {
        if self.t > self.horizon {
            return Err(Error::HorizonExceeded { horizon: self.horizon });
        }
        if w.len() != self.cum_weights.len() {
            return Err(Error::LengthMismatch {
                expected: self.cum_weights.len(),
                actual: w.len(),
            });
        }

        for (c, &v) in self.cum_weights.iter_mut().zip(w.values()) {
            *c = *c + v;
        }
        let two = T::of(2.0);
        let cost: Vec<T> = self
            .cum_weights
            .iter()
            .zip(self.x.mass().iter().zip(self.x1.mass()))
            .map(|(&c, (&x, &x1))| self.eta * c + two * (x - x1))
            .collect();

        let start = Instant::now();
        let y = shortest_path_oracle(g, &CostVector::new(cost)?)?;
        self.diagnostics.elapsed += start.elapsed();
        self.diagnostics.calls += 1;
        self.diagnostics.clamped_entries += y.clamped;
        self.diagnostics.clamped_calls += usize::from(y.clamped > 0);

        let gamma: T = self.gamma.at(self.t);
        let next = self.x.convex_combination(gamma, &y.point)?;
        let violation = validate_path_point(g, &next)?.max_violation();
        if violation > T::feasibility_tol() {
            return Err(Error::Infeasible {
                step: self.t,
                violation: violation.as_f64(),
            });
        }
        self.max_violation = self.max_violation.max(violation);

        let loss = match self.timing {
            LossTiming::CommitThenObserve => path_cost(&self.x, w)?,
            LossTiming::ObserveThenCommit => path_cost(&next, w)?,
        };
        let row = TraceRow {
            t: self.t,
            loss,
            clamps: y.clamped,
        };
        self.trace.push(row);
        self.x = next;
        self.t += 1;
        Ok(StepRecord {
            row,
            target: y.point,
            gamma,
        })
    }

    /// Index of the next round to be played.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_finished(&self) -> bool {
        self.t > self.horizon
    }

    /// Current iterate `x_t`.
    pub fn x(&self) -> &PathPoint<T> {
        &self.x
    }

    pub fn x1(&self) -> &PathPoint<T> {
        &self.x1
    }

    pub fn cum_weights(&self) -> &[T] {
        &self.cum_weights
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    pub fn gamma_schedule(&self) -> GammaSchedule {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn trace(&self) -> &[TraceRow<T>] {
        &self.trace
    }

    /// Largest feasibility violation seen over all iterates so far.
    pub fn max_violation(&self) -> T {
        self.max_violation
    }

    pub fn diagnostics(&self) -> &OracleDiagnostics {
        &self.diagnostics
    }

    pub fn realized_loss(&self) -> T {
        self.trace.iter().fold(T::zero(), |acc, r| acc + r.loss)
    }
}

/// Decodes a fractional iterate into the path carrying the most mass,
/// by running the oracle on costs `1 - mass`.
pub fn round_to_path<T: Scalar>(g: &Graph, x: &PathPoint<T>) -> Result<PathPoint<T>> {
    let cost = x.mass().iter().map(|&m| (T::one() - m).max(T::zero())).collect();
    Ok(shortest_path_oracle(g, &CostVector::new(cost)?)?.point)
}

/// Best single path against the accumulated weights, and its total cost.
pub fn best_fixed_path_in_hindsight<T: Scalar>(g: &Graph, cum_weights: &[T]) -> Result<(PathPoint<T>, T)> {
    let w = WeightVector::for_graph(g, cum_weights.to_vec())?;
    let best = shortest_path_oracle(g, &CostVector::from(&w))?;
    let cost = path_cost(&best.point, &w)?;
    Ok((best.point, cost))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport<T> {
    pub realized_loss: T,
    pub hindsight_loss: T,
    pub regret: T,
    /// `8 D G T^{3/4}`.
    pub bound: T,
    pub horizon: usize,
    pub diameter: T,
    pub gradient_bound: T,
}

impl<T: Scalar> RegretReport<T> {
    pub fn within_bound(&self) -> bool {
        self.regret <= self.bound
    }
}

pub fn regret_report<T: Scalar>(
    trace: &[TraceRow<T>],
    hindsight_loss: T,
    gradient_bound: T,
    diameter: T,
    horizon: usize,
) -> Result<RegretReport<T>> {
    if trace.len() != horizon {
        return Err(Error::LengthMismatch {
            expected: horizon,
            actual: trace.len(),
        });
    }
    let realized_loss = trace.iter().fold(T::zero(), |acc, r| acc + r.loss);
    Ok(RegretReport {
        realized_loss,
        hindsight_loss,
        regret: realized_loss - hindsight_loss,
        bound: T::of(8.0) * diameter * gradient_bound * T::of(horizon as f64).powf(T::of(0.75)),
        horizon,
        diameter,
        gradient_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{
        gradient_bound, polytope_diameter_bound, sample_weights, RngStream, StreamPurpose, WeightProcessConfig,
    };
    use crate::netgraph::fixtures::{chain, diamond};
    use crate::netgraph::{brute_force_oracle, generate_random_network};

    fn w(v: &[f64]) -> WeightVector<f64> {
        WeightVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_theorem::<f64>(1), 1.0);
        assert_eq!(gamma_theorem::<f64>(4), 1.0);
        assert!((gamma_theorem::<f64>(9) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(gamma_averaging::<f64>(1), 0.5);
        assert_eq!(gamma_averaging::<f64>(3), 0.75);
        let mut prev = 0.0;
        for t in 1..2000 {
            let g = gamma_averaging::<f64>(t);
            assert!(g > prev && g < 1.0);
            prev = g;
        }
    }

    #[test]
    fn eta_modes() {
        assert_eq!(eta_schedule::<f64>(3.0, 2.0, 16, EtaMode::Theorem).unwrap(), 0.1875);
        assert!((eta_schedule::<f64>(3.0, 2.0, 16, EtaMode::Simulation).unwrap() - 3.0 / 128.0).abs() < 1e-15);
        assert!((eta_schedule::<f64>(7.0, 5.0, 100, EtaMode::Sampler).unwrap() - 0.01).abs() < 1e-15);
        assert!(eta_schedule(0.0, 2.0, 16, EtaMode::Theorem).is_err());
        assert!(eta_schedule(1.0, 2.0, 0, EtaMode::Theorem).is_err());
    }

    #[test]
    fn init_takes_shortest_path_under_w0() {
        let s = OfwState::init(&diamond(), &w(&[0.1, 0.4, 0.3, 0.1]), 0.1, GammaSchedule::Theorem, 5).unwrap();
        assert_eq!(s.x().mass(), &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(s.x(), s.x1());
        assert_eq!(s.t(), 1);
        assert!(s.cum_weights().iter().all(|&c| c == 0.0));

        let s = OfwState::init(&chain(), &w(&[0.5, 0.5, 0.5]), 0.1, GammaSchedule::Theorem, 5).unwrap();
        assert_eq!(s.x().mass(), &[1.0, 1.0, 1.0]);

        assert!(OfwState::init(&chain(), &w(&[0.5; 3]), 0.0, GammaSchedule::Theorem, 5).is_err());
        assert!(OfwState::init(&chain(), &w(&[0.5; 3]), 0.1, GammaSchedule::Theorem, 0).is_err());
    }

    #[test]
    fn first_theorem_step_keeps_x1() {
        let g = diamond();
        let mut s = OfwState::init(&g, &w(&[0.1, 0.4, 0.3, 0.1]), 5.0, GammaSchedule::Theorem, 3).unwrap();
        // weights that make the other branch optimal: y_2 differs from x_1
        let rec = s.step(&g, &w(&[1.0, 0.0, 1.0, 0.0])).unwrap();
        assert_eq!(rec.target.mass(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(rec.gamma, 1.0);
        assert_eq!(s.x(), s.x1());
    }

    #[test]
    fn single_route_never_moves() {
        let g = chain();
        let mut s = OfwState::init(&g, &w(&[0.2, 0.3, 0.4]), 0.5, GammaSchedule::Averaging, 20).unwrap();
        for _ in 0..20 {
            s.step(&g, &w(&[0.9, 0.1, 0.5])).unwrap();
            assert_eq!(s.x().mass(), &[1.0, 1.0, 1.0]);
        }
        assert!(s.is_finished());
        assert!(matches!(s.step(&g, &w(&[0.1; 3])), Err(Error::HorizonExceeded { .. })));
    }

    #[test]
    fn diamond_trace_matches_hand_evaluation() {
        // arcs: 0 u->a, 1 u->b, 2 a->v, 3 b->v; x_1 = upper path (u, a, v)
        let g = diamond();
        let w0 = w(&[0.1, 0.4, 0.3, 0.1]);
        let wt = w(&[0.4, 0.1, 0.3, 0.1]);
        let mut s = OfwState::init(&g, &w0, 0.01, GammaSchedule::Averaging, 2).unwrap();

        // t=1: cost 0.01 * wt, lower path (0.002) beats upper (0.007); x_2 = midpoint
        let r1 = s.step(&g, &wt).unwrap();
        assert_eq!(r1.target.mass(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(s.x().mass(), &[0.5, 0.5, 0.5, 0.5]);
        assert!((r1.row.loss - 0.7).abs() < 1e-15);
        assert_eq!(r1.row.clamps, 0);

        // t=2: cost 0.02 * wt + 2 (x_2 - x_1) = (-0.992, 1.002, -0.994, 1.002)
        // clamps two entries; upper path costs 0, so y_3 = x_1
        let r2 = s.step(&g, &wt).unwrap();
        assert_eq!(r2.target.mass(), &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(r2.row.clamps, 2);
        assert!((r2.row.loss - 0.45).abs() < 1e-15);
        let x3 = [2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0];
        for (a, b) in s.x().mass().iter().zip(x3) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((s.realized_loss() - 1.15).abs() < 1e-15);
        assert_eq!(s.diagnostics().calls, 3);
        assert_eq!(s.diagnostics().clamped_calls, 1);
    }

    #[test]
    fn observe_then_commit_charges_updated_iterate() {
        let g = diamond();
        let wt = w(&[0.4, 0.1, 0.3, 0.1]);
        let mut s = OfwState::init(&g, &w(&[0.1, 0.4, 0.3, 0.1]), 0.01, GammaSchedule::Averaging, 2)
            .unwrap()
            .with_loss_timing(LossTiming::ObserveThenCommit);
        let r1 = s.step(&g, &wt).unwrap();
        assert!((r1.row.loss - 0.45).abs() < 1e-15);
    }

    #[test]
    fn averaging_iterate_is_running_mean_of_vertices() {
        let g = generate_random_network(12, 2, 5, 4).unwrap();
        let cfg = WeightProcessConfig::<f64>::iid_uniform(1.0);
        let mut rng = RngStream::new(4, 0, StreamPurpose::Weights);
        let w0 = sample_weights(&g, &cfg, 0, &mut rng).unwrap();
        let mut s = OfwState::init(&g, &w0, 0.05, GammaSchedule::Averaging, 50).unwrap();
        let mut sum: Vec<f64> = s.x1().mass().to_vec();
        for t in 1..=50 {
            let rec = s.step(&g, &sample_weights(&g, &cfg, t, &mut rng).unwrap()).unwrap();
            for (acc, &y) in sum.iter_mut().zip(rec.target.mass()) {
                *acc += y;
            }
            let mean = PathPoint::from_mass(sum.iter().map(|v| v / (t as f64 + 1.0)).collect());
            assert!(s.x().max_abs_diff(&mean) <= 1e-9);
        }
    }

    #[test]
    fn iterates_stay_feasible() {
        let g = generate_random_network(40, 2, 5, 9).unwrap();
        let cfg = WeightProcessConfig::<f64>::iid_uniform(1.0);
        let mut rng = RngStream::new(9, 0, StreamPurpose::Weights);
        let w0 = sample_weights(&g, &cfg, 0, &mut rng).unwrap();
        for gamma in [GammaSchedule::Theorem, GammaSchedule::Averaging] {
            let mut s = OfwState::init(&g, &w0, 0.02, gamma, 60).unwrap();
            while !s.is_finished() {
                let wt = sample_weights(&g, &cfg, s.t(), &mut rng).unwrap();
                s.step(&g, &wt).unwrap();
                assert!(validate_path_point(&g, s.x()).unwrap().max_violation() <= 1e-9);
            }
            assert!(s.max_violation() <= 1e-9);
            assert_eq!(s.trace().len(), 60);
        }
    }

    #[test]
    fn rounding() {
        let g = diamond();
        let p1 = PathPoint::<f64>::indicator(4, &[0, 2]);
        let p2 = PathPoint::<f64>::indicator(4, &[1, 3]);
        assert_eq!(round_to_path(&g, &p1).unwrap(), p1);
        assert_eq!(round_to_path(&g, &p2).unwrap(), p2);
        let mix = p1.convex_combination(0.9, &p2).unwrap();
        assert_eq!(round_to_path(&g, &mix).unwrap(), p1);
        let mix = p1.convex_combination(0.2, &p2).unwrap();
        assert_eq!(round_to_path(&g, &mix).unwrap(), p2);
    }

    #[test]
    fn hindsight_minimum() {
        let g = diamond();
        let (p, cost) = best_fixed_path_in_hindsight(&g, &[0.0; 4]).unwrap();
        assert_eq!(cost, 0.0);
        assert!(p.is_binary());

        // constant weights for 10 steps
        let cum: Vec<f64> = [0.1, 0.4, 0.3, 0.1].iter().map(|v| v * 10.0).collect();
        let (p, cost) = best_fixed_path_in_hindsight(&g, &cum).unwrap();
        assert_eq!(p.mass(), &[1.0, 0.0, 1.0, 0.0]);
        assert!((cost - 4.0).abs() < 1e-12);
    }

    #[test]
    fn hindsight_matches_enumeration_on_random_histories() {
        let cfg = WeightProcessConfig::<f64>::iid_uniform(1.0);
        for seed in 0..10 {
            let g = generate_random_network(10, 2, 5, seed).unwrap();
            let mut rng = RngStream::new(seed, 0, StreamPurpose::Weights);
            let mut cum = vec![0.0; g.arc_count()];
            for t in 0..25 {
                for (c, v) in cum
                    .iter_mut()
                    .zip(sample_weights(&g, &cfg, t, &mut rng).unwrap().values())
                {
                    *c += v;
                }
            }
            let (_, cost) = best_fixed_path_in_hindsight(&g, &cum).unwrap();
            let brute = brute_force_oracle(&g, &CostVector::new(cum.clone()).unwrap()).unwrap();
            assert!((cost - brute.cost).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_route_has_zero_regret() {
        let g = chain();
        let wt = w(&[0.9, 0.1, 0.5]);
        let mut s = OfwState::init(&g, &wt, 0.5, GammaSchedule::Theorem, 10).unwrap();
        for _ in 0..10 {
            s.step(&g, &wt).unwrap();
        }
        let (_, hindsight) = best_fixed_path_in_hindsight(&g, s.cum_weights()).unwrap();
        let report = regret_report(s.trace(), hindsight, 1.0, 1.0, 10).unwrap();
        assert!(report.regret.abs() <= 1e-12);
    }

    #[test]
    fn bound_formula() {
        let g = generate_random_network(12, 2, 5, 0).unwrap();
        let gb = gradient_bound(&g, &WeightProcessConfig::<f64>::iid_uniform(1.0));
        let d: f64 = polytope_diameter_bound(&g);
        let trace: Vec<TraceRow<f64>> = (1..=100)
            .map(|t| TraceRow {
                t,
                loss: 1.0,
                clamps: 0,
            })
            .collect();
        let r = regret_report(&trace, 50.0, gb, d, 100).unwrap();
        let expected = 8.0 * 22f64.sqrt() * (g.arc_count() as f64).sqrt() * 31.622776601683793;
        assert!((r.bound - expected).abs() < 1e-9);
        assert_eq!(r.realized_loss, 100.0);
        assert_eq!(r.regret, 50.0);
        assert!(regret_report(&trace, 0.0, gb, d, 99).is_err());
    }

    #[test]
    fn single_precision_engine() {
        let g = diamond();
        let w0 = WeightVector::new(vec![0.1f32, 0.4, 0.3, 0.1]).unwrap();
        let wt = WeightVector::new(vec![0.4f32, 0.1, 0.3, 0.1]).unwrap();
        let mut s = OfwState::init(&g, &w0, 0.01f32, GammaSchedule::Averaging, 30).unwrap();
        while !s.is_finished() {
            s.step(&g, &wt).unwrap();
        }
        assert!(validate_path_point(&g, s.x()).unwrap().is_feasible());
    }
}
