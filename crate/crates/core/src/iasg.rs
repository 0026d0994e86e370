//! Iterate-averaging stochastic gradient on strongly convex quadratics, and
//! the Monte Carlo check of its predicted posterior covariance.
//!
//! The test objective has Hessian `A`, minimizer `x*`, and stochastic
//! gradients `A (x - x*) + xi` with `xi ~ N(0, C)`. The stationary
//! covariance `Sigma` of constant-step SGD solves `A Sigma + Sigma A^T = eta C`,
//! and the averaged iterate after `T` steps is predicted to have second
//! moment `(1 / (eta T)) (Sigma A^{-T} + A^{-1} Sigma) = (1 / T) A^{-1} C A^{-T}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{RngStream, StreamPurpose};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct QuadraticProblem<T> {
    hessian: Matrix<T>,
    optimum: Vec<T>,
    noise_cov: Matrix<T>,
    // symmetric square root of noise_cov
    noise_factor: Matrix<T>,
    max_curvature: T,
}

impl<T: Scalar> QuadraticProblem<T> {
    pub fn new(hessian: Matrix<T>, optimum: Vec<T>, noise_cov: Matrix<T>) -> Result<Self> {
        let n = optimum.len();
        if n == 0 {
            return Err(Error::InvalidArgument("problem dimension must be positive".into()));
        }
        if (hessian.rows(), hessian.cols()) != (n, n) || (noise_cov.rows(), noise_cov.cols()) != (n, n) {
            return Err(Error::InvalidArgument(format!("matrices must be {n}x{n}")));
        }
        let eig_a = checked_symmetric_eigen(&hessian)?;
        if eig_a.min_value() <= T::zero() {
            return Err(Error::NotPositiveDefinite);
        }
        let eig_c = checked_symmetric_eigen(&noise_cov)?;
        let floor = -T::of(1e-12) * noise_cov.max_abs().max(T::one());
        if eig_c.min_value() < floor {
            return Err(Error::InvalidArgument(
                "noise covariance is not positive semidefinite".into(),
            ));
        }
        Ok(QuadraticProblem {
            max_curvature: eig_a.max_value(),
            noise_factor: eig_c.reconstruct_with(|v| v.max(T::zero()).sqrt()),
            hessian,
            optimum,
            noise_cov,
        })
    }

    pub fn dim(&self) -> usize {
        self.optimum.len()
    }

    pub fn hessian(&self) -> &Matrix<T> {
        &self.hessian
    }

    pub fn optimum(&self) -> &[T] {
        &self.optimum
    }

    pub fn noise_cov(&self) -> &Matrix<T> {
        &self.noise_cov
    }

    /// Largest step size for which plain gradient descent is stable, `2 / lambda_max(A)`.
    pub fn stable_step_limit(&self) -> T {
        T::of(2.0) / self.max_curvature
    }

    /// Writes `A (x - x*) + xi` into `out`.
    fn stochastic_gradient(&self, x: &[T], rng: &mut RngStream, scratch: &mut [T], out: &mut [T]) {
        let n = self.dim();
        for (s, (&xi, &opt)) in scratch.iter_mut().zip(x.iter().zip(&self.optimum)) {
            *s = xi - opt;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..n).fold(T::zero(), |acc, j| acc + self.hessian[(i, j)] * scratch[j]);
        }
        if self.noise_cov.max_abs() > T::zero() {
            for s in scratch.iter_mut() {
                *s = T::sample_standard_normal(rng);
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o = *o + (0..n).fold(T::zero(), |acc, j| acc + self.noise_factor[(i, j)] * scratch[j]);
            }
        }
    }
}

fn checked_symmetric_eigen<T: Scalar>(m: &Matrix<T>) -> Result<crate::linalg::SymmetricEigen<T>> {
    if m.asymmetry() > T::of(1e-12) * m.max_abs().max(T::one()) {
        return Err(Error::InvalidArgument("matrix is not symmetric".into()));
    }
    m.symmetric_eigen()
}

/// Where the stochastic gradient is evaluated each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradientPoint {
    /// At the averaged iterate `x_t`, literally `y_{t+1} = y_t - eta grad f_t(x_t)`.
    #[default]
    AveragedIterate,
    /// At the SGD iterate `y_t` (Polyak-Ruppert averaging).
    SgdIterate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IasgState<T> {
    /// Index of the next step.
    pub t: usize,
    /// Averaged iterate.
    pub x: Vec<T>,
    /// SGD iterate.
    pub y: Vec<T>,
    pub eta: T,
}

impl<T: Scalar> IasgState<T> {
    pub fn new(start: Vec<T>, eta: T) -> Self {
        IasgState {
            t: 1,
            y: start.clone(),
            x: start,
            eta,
        }
    }

    /// `y <- y - eta g`, then `x <- gamma_t x + (1 - gamma_t) y` with `gamma_t = t / (t + 1)`.
    fn advance(&mut self, grad: &[T]) {
        let t = T::of(self.t as f64);
        let gamma = t / (t + T::one());
        for ((x, y), &g) in self.x.iter_mut().zip(self.y.iter_mut()).zip(grad) {
            *y = *y - self.eta * g;
            *x = gamma * *x + (T::one() - gamma) * *y;
        }
        self.t += 1;
    }
}

/// Runs `horizon` steps from `x_1 = y_1 = start` and returns `x_{T+1}`.
pub fn iasg_run<T: Scalar>(
    p: &QuadraticProblem<T>,
    start: &[T],
    eta: T,
    horizon: usize,
    point: GradientPoint,
    rng: &mut RngStream,
) -> Result<Vec<T>> {
    if start.len() != p.dim() {
        return Err(Error::LengthMismatch {
            expected: p.dim(),
            actual: start.len(),
        });
    }
    if !(eta > T::zero() && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if eta >= p.stable_step_limit() {
        log::warn!(
            "step size {} is at or above the stability limit 2/lambda_max = {}",
            eta,
            p.stable_step_limit()
        );
    }
    let n = p.dim();
    let mut state = IasgState::new(start.to_vec(), eta);
    let mut grad = vec![T::zero(); n];
    let mut scratch = vec![T::zero(); n];
    for _ in 0..horizon {
        let at = match point {
            GradientPoint::AveragedIterate => &state.x,
            GradientPoint::SgdIterate => &state.y,
        };
        p.stochastic_gradient(at, rng, &mut scratch, &mut grad);
        state.advance(&grad);
    }
    Ok(state.x)
}

/// Solves `A Sigma + Sigma A^T = eta C` for symmetric positive definite `A`.
///
/// With `A = Q diag(l) Q^T`, the rotated solution is
/// `(Q^T Sigma Q)_ij = eta (Q^T C Q)_ij / (l_i + l_j)`.
pub fn lyapunov_solve<T: Scalar>(a: &Matrix<T>, c: &Matrix<T>, eta: T) -> Result<Matrix<T>> {
    if !a.is_square() || (c.rows(), c.cols()) != (a.rows(), a.cols()) {
        return Err(Error::InvalidArgument(
            "Lyapunov operands must be square and equally sized".into(),
        ));
    }
    let eig = checked_symmetric_eigen(a)?;
    if eig.min_value() <= T::zero() {
        return Err(Error::NotPositiveDefinite);
    }
    let q = &eig.vectors;
    let mut rotated = &(&q.transpose() * &c.scale(eta)) * q;
    let n = a.rows();
    for i in 0..n {
        for j in 0..n {
            rotated[(i, j)] = rotated[(i, j)] / (eig.values[i] + eig.values[j]);
        }
    }
    Ok((&(q * &rotated) * &q.transpose()).symmetrized())
}

/// `max |A Sigma + Sigma A^T - eta C|`.
pub fn lyapunov_residual<T: Scalar>(a: &Matrix<T>, sigma: &Matrix<T>, c: &Matrix<T>, eta: T) -> T {
    let lhs = &(a * sigma) + &(sigma * &a.transpose());
    (&lhs - &c.scale(eta)).max_abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CovariancePrediction<T> {
    pub sigma: Matrix<T>,
    pub predicted: Matrix<T>,
}

/// `(1 / (eta T)) (Sigma A^{-T} + A^{-1} Sigma)`.
pub fn posterior_covariance_prediction<T: Scalar>(
    a: &Matrix<T>,
    sigma: &Matrix<T>,
    eta: T,
    horizon: usize,
) -> Result<Matrix<T>> {
    if horizon == 0 || eta.is_nan() || eta <= T::zero() {
        return Err(Error::InvalidArgument("eta and horizon must be positive".into()));
    }
    let a_inv = a.inverse()?;
    let sum = &(sigma * &a_inv.transpose()) + &(&a_inv * sigma);
    Ok(sum.scale(T::one() / (eta * T::of(horizon as f64))))
}

/// `(1 / T) A^{-1} C A^{-T}`, the closed form of the prediction when
/// `Sigma` solves the Lyapunov equation.
pub fn sandwich_covariance<T: Scalar>(a: &Matrix<T>, c: &Matrix<T>, horizon: usize) -> Result<Matrix<T>> {
    let a_inv = a.inverse()?;
    Ok((&(&a_inv * c) * &a_inv.transpose()).scale(T::one() / T::of(horizon as f64)))
}

pub fn predict_covariance<T: Scalar>(
    p: &QuadraticProblem<T>,
    eta: T,
    horizon: usize,
) -> Result<CovariancePrediction<T>> {
    let sigma = lyapunov_solve(p.hessian(), p.noise_cov(), eta)?;
    let predicted = posterior_covariance_prediction(p.hessian(), &sigma, eta, horizon)?;
    Ok(CovariancePrediction { sigma, predicted })
}

/// `(1 / L) sum_l (x_l - c)(x_l - c)^T`.
pub fn empirical_second_moment<T: Scalar>(outputs: &[Vec<T>], center: &[T]) -> Result<Matrix<T>> {
    if outputs.is_empty() {
        return Err(Error::InvalidArgument("no replica outputs".into()));
    }
    let n = center.len();
    let mut m = Matrix::zeros(n, n);
    for x in outputs {
        if x.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: x.len(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = m[(i, j)] + (x[i] - center[i]) * (x[j] - center[j]);
            }
        }
    }
    Ok(m.scale(T::one() / T::of(outputs.len() as f64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerificationConfig {
    pub eta: f64,
    pub horizon: usize,
    pub replicas: usize,
    pub seed: u64,
    /// Largest accepted relative Frobenius error.
    pub tolerance: f64,
    pub gradient_point: GradientPoint,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig {
            eta: 0.05,
            horizon: 5000,
            replicas: 1000,
            seed: 0,
            tolerance: 0.20,
            gradient_point: GradientPoint::SgdIterate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub dims: usize,
    pub eta: f64,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "L")]
    pub replicas: usize,
    pub gradient_point: GradientPoint,
    pub relative_frobenius_error: f64,
    /// Max-norm gap between the Lyapunov-based prediction and its closed form.
    pub identity_residual: f64,
    pub lyapunov_residual: f64,
    pub empirical: Vec<Vec<f64>>,
    pub predicted: Vec<Vec<f64>>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Runs `replicas` independent chains started at the optimum and compares
/// their second moment about the optimum with the predicted covariance.
pub fn verify_covariance<T: Scalar>(p: &QuadraticProblem<T>, cfg: &VerificationConfig) -> Result<VerificationReport> {
    if cfg.replicas < 2 {
        return Err(Error::Config("covariance check needs at least 2 replicas".into()));
    }
    let eta = T::of(cfg.eta);
    let prediction = predict_covariance(p, eta, cfg.horizon)?;
    let closed_form = sandwich_covariance(p.hessian(), p.noise_cov(), cfg.horizon)?;
    let identity_residual = (&prediction.predicted - &closed_form).max_abs().as_f64();
    let lyap_residual = lyapunov_residual(p.hessian(), &prediction.sigma, p.noise_cov(), eta).as_f64();

    let outputs = (0..cfg.replicas)
        .into_par_iter()
        .map(|l| {
            let mut rng = RngStream::new(cfg.seed, l as u64, StreamPurpose::GradientNoise);
            iasg_run(p, p.optimum(), eta, cfg.horizon, cfg.gradient_point, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let empirical = empirical_second_moment(&outputs, p.optimum())?;
    let rel = ((&empirical - &prediction.predicted).frobenius() / prediction.predicted.frobenius()).as_f64();

    let to_f64 = |m: &Matrix<T>| -> Vec<Vec<f64>> {
        m.to_rows()
            .into_iter()
            .map(|r| r.into_iter().map(Scalar::as_f64).collect())
            .collect()
    };
    Ok(VerificationReport {
        dims: p.dim(),
        eta: cfg.eta,
        horizon: cfg.horizon,
        replicas: cfg.replicas,
        gradient_point: cfg.gradient_point,
        relative_frobenius_error: rel,
        identity_residual,
        lyapunov_residual: lyap_residual,
        empirical: to_f64(&empirical),
        predicted: to_f64(&prediction.predicted),
        tolerance: cfg.tolerance,
        passed: rel <= cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::tests::random_spd;

    fn stream() -> RngStream {
        RngStream::new(1, 0, StreamPurpose::GradientNoise)
    }

    /// Independent route: solve the vectorized system
    /// `(I kron A + A kron I) vec(Sigma) = eta vec(C)` by elimination.
    fn lyapunov_by_kronecker(a: &Matrix<f64>, c: &Matrix<f64>, eta: f64) -> Matrix<f64> {
        let n = a.rows();
        let mut k = Matrix::zeros(n * n, n * n);
        for i in 0..n {
            for j in 0..n {
                let row = i * n + j;
                for m in 0..n {
                    k[(row, m * n + j)] += a[(i, m)];
                    k[(row, i * n + m)] += a[(j, m)];
                }
            }
        }
        let rhs: Vec<f64> = (0..n * n).map(|r| eta * c[(r / n, r % n)]).collect();
        let sol = k.inverse().unwrap().mul_vec(&rhs);
        Matrix::from_rows(&sol.chunks(n).map(<[f64]>::to_vec).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn noise_free_optimum_is_fixed() {
        let p = QuadraticProblem::new(Matrix::from_diag(&[1.0, 3.0]), vec![0.3, -0.7], Matrix::zeros(2, 2)).unwrap();
        for point in [GradientPoint::AveragedIterate, GradientPoint::SgdIterate] {
            let x = iasg_run(&p, &[0.3, -0.7], 0.1, 500, point, &mut stream()).unwrap();
            assert_eq!(x, vec![0.3, -0.7]);
        }
    }

    #[test]
    fn two_literal_steps_by_hand() {
        // A = 1, x* = 0, eta = 0.5, x_1 = y_1 = 1, gradient at x_t:
        // y_2 = 1 - 0.5 * 1 = 0.5,     x_2 = 1/2 * 1 + 1/2 * 0.5 = 0.75
        // y_3 = 0.5 - 0.5 * 0.75 = 0.125, x_3 = 2/3 * 0.75 + 1/3 * 0.125 = 13/24
        let p = QuadraticProblem::<f64>::new(Matrix::identity(1), vec![0.0], Matrix::zeros(1, 1)).unwrap();
        let x2 = iasg_run(&p, &[1.0], 0.5, 1, GradientPoint::AveragedIterate, &mut stream()).unwrap();
        assert!((x2[0] - 0.75).abs() < 1e-15);
        let x3 = iasg_run(&p, &[1.0], 0.5, 2, GradientPoint::AveragedIterate, &mut stream()).unwrap();
        assert!((x3[0] - 13.0 / 24.0).abs() < 1e-15);
        // gradient at y_t: y_3 = 0.5 - 0.25 = 0.25, x_3 = 0.5 + 1/12 = 7/12
        let x3 = iasg_run(&p, &[1.0], 0.5, 2, GradientPoint::SgdIterate, &mut stream()).unwrap();
        assert!((x3[0] - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn noisy_runs_concentrate_near_optimum() {
        let p =
            QuadraticProblem::<f64>::new(Matrix::from_diag(&[1.0, 2.0]), vec![1.0, -1.0], Matrix::identity(2)).unwrap();
        let mean_sq_dev = |horizon| {
            (0..200)
                .map(|l| {
                    let mut rng = RngStream::new(7, l, StreamPurpose::GradientNoise);
                    let x: Vec<f64> =
                        iasg_run(&p, &[0.0, 0.0], 0.05, horizon, GradientPoint::SgdIterate, &mut rng).unwrap();
                    (x[0] - 1.0).powi(2) + (x[1] + 1.0).powi(2)
                })
                .sum::<f64>()
                / 200.0
        };
        let short = mean_sq_dev(200);
        let long = mean_sq_dev(3000);
        assert!(long < short / 3.0, "{short} vs {long}");
    }

    #[test]
    fn lyapunov_closed_forms() {
        let s = lyapunov_solve(&Matrix::identity(3), &Matrix::identity(3), 0.3).unwrap();
        assert!((&s - &Matrix::identity(3).scale(0.15)).max_abs() < 1e-15);
        let s = lyapunov_solve(&Matrix::from_diag(&[1.0, 2.0]), &Matrix::identity(2), 0.1).unwrap();
        assert!((&s - &Matrix::from_diag(&[0.05, 0.025])).max_abs() < 1e-15);
    }

    #[test]
    fn lyapunov_residual_and_kronecker_agreement() {
        for seed in 0..20 {
            let a = random_spd(4, seed);
            let b = random_spd(4, seed + 100);
            let c = &b * &b.transpose();
            let s = lyapunov_solve(&a, &c, 0.07).unwrap();
            assert!(lyapunov_residual(&a, &s, &c, 0.07) <= 1e-10);
            assert!(s.asymmetry() <= 1e-12);
            assert!(s.symmetric_eigen().unwrap().min_value() >= -1e-12);
            let oracle = lyapunov_by_kronecker(&a, &c, 0.07);
            assert!((&s - &oracle).max_abs() <= 1e-10);
        }
    }

    #[test]
    fn lyapunov_rejects_indefinite() {
        let a = Matrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(
            lyapunov_solve(&a, &Matrix::identity(2), 0.1),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn prediction_examples() {
        let eta = 0.2;
        let sigma = Matrix::identity(2).scale(eta / 2.0);
        let pred = posterior_covariance_prediction(&Matrix::identity(2), &sigma, eta, 50).unwrap();
        assert!((&pred - &Matrix::identity(2).scale(1.0 / 50.0)).max_abs() < 1e-15);

        let a = Matrix::from_diag(&[1.0, 2.0]);
        let sigma = lyapunov_solve(&a, &Matrix::identity(2), 0.1).unwrap();
        let pred = posterior_covariance_prediction(&a, &sigma, 0.1, 10).unwrap();
        assert!((&pred - &Matrix::from_diag(&[0.1, 0.025])).max_abs() < 1e-15);

        assert!(matches!(
            posterior_covariance_prediction(&Matrix::zeros(2, 2), &sigma, 0.1, 10),
            Err(Error::Singular)
        ));
    }

    #[test]
    fn prediction_identity_on_random_problems() {
        for seed in 0..20 {
            let a = random_spd(3, seed);
            let b = random_spd(3, seed + 50);
            let c = &b * &b.transpose();
            let sigma = lyapunov_solve(&a, &c, 0.03).unwrap();
            let pred = posterior_covariance_prediction(&a, &sigma, 0.03, 400).unwrap();
            let closed = sandwich_covariance(&a, &c, 400).unwrap();
            assert!((&pred - &closed).max_abs() <= 1e-10);
            assert!(pred.asymmetry() <= 1e-12);
            assert!(pred.symmetric_eigen().unwrap().min_value() >= -1e-12);
        }
    }

    #[test]
    fn second_moment_examples() {
        let same = vec![vec![0.5, 0.5]; 4];
        assert_eq!(empirical_second_moment(&same, &[0.5, 0.5]).unwrap().max_abs(), 0.0);
        let pm = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let m = empirical_second_moment(&pm, &[0.0, 0.0]).unwrap();
        assert_eq!(m.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(empirical_second_moment::<f64>(&[], &[0.0]).is_err());
    }

    #[test]
    fn problem_validation() {
        let c = Matrix::identity(2);
        assert!(QuadraticProblem::new(Matrix::from_diag(&[1.0, 0.0]), vec![0.0; 2], c.clone()).is_err());
        let asym = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(QuadraticProblem::new(asym, vec![0.0; 2], c.clone()).is_err());
        assert!(QuadraticProblem::new(Matrix::identity(2), vec![0.0; 3], c.clone()).is_err());
        assert!(QuadraticProblem::new(Matrix::identity(2), vec![0.0; 2], Matrix::from_diag(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn deterministic_per_stream() {
        let p = QuadraticProblem::new(Matrix::from_diag(&[1.0, 2.0]), vec![0.0; 2], Matrix::identity(2)).unwrap();
        let run = || {
            let mut rng = RngStream::new(3, 2, StreamPurpose::GradientNoise);
            iasg_run(&p, &[0.0, 0.0], 0.05, 100, GradientPoint::SgdIterate, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn small_verification_runs() {
        let p = QuadraticProblem::new(Matrix::from_diag(&[1.0, 2.0]), vec![0.0; 2], Matrix::identity(2)).unwrap();
        let cfg = VerificationConfig {
            horizon: 500,
            replicas: 200,
            ..Default::default()
        };
        let report = verify_covariance(&p, &cfg).unwrap();
        assert_eq!(report.dims, 2);
        assert!(report.identity_residual <= 1e-10);
        assert!(
            report.relative_frobenius_error < 0.5,
            "{}",
            report.relative_frobenius_error
        );
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["T"], 500);
        assert_eq!(json["L"], 200);
    }
}
