//! Numerical checks of the closed-loop stability properties.
//!
//! Everything here works either on parameters alone (linearization, the
//! estimator Lyapunov certificate) or on a finished run (Lyapunov descent,
//! decay rate, run metrics).

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{CrossingKind, RunOutput, SimConfig, TrajectoryRecord};
use crate::estimator::{estimator_lyapunov, EstimatorParams};
use crate::guidance::{self, GuidanceParams};
use crate::quadrature::{adaptive_gauss, adaptive_simpson};

pub const QUADRATURE_TOL: f64 = 1e-10;
/// Estimation-error threshold for declaring the estimator converged.
pub const ESTIMATOR_CONVERGENCE_TOL: f64 = 1e-3;
pub const DEFAULT_SETTLING_BAND: f64 = 0.005;
const DESCENT_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum AnalysisError {
    #[error("Lyapunov function undefined at r = {r}, theta = {theta} (needs r >= r_a = {r_a} and theta in [0, pi])")]
    DomainError { r: f64, theta: f64, r_a: f64 },
}

// ---------------------------------------------------------------------------
// Guidance Lyapunov function

/// `-1/z + k cos(asin(r_a / z))`, the integrand of the range term.
pub fn lyapunov_integrand(z: f64, params: &GuidanceParams) -> f64 {
    let ratio = (params.r_a / z).min(1.0);
    -1.0 / z + params.k * (1.0 - ratio * ratio).sqrt()
}

/// Range term `int_{r_d}^{r} (-1/z + k cos(asin(r_a/z))) dz`, nonnegative.
pub fn range_potential(r: f64, params: &GuidanceParams) -> f64 {
    adaptive_simpson(|z| lyapunov_integrand(z, params), params.r_d, r, QUADRATURE_TOL)
}

/// Same integral evaluated with the Gauss-Legendre rule.
pub fn range_potential_gauss(r: f64, params: &GuidanceParams) -> f64 {
    adaptive_gauss(|z| lyapunov_integrand(z, params), params.r_d, r, 0.5 * QUADRATURE_TOL)
}

/// `1 - sin(theta) + range_potential(r)` on `r >= r_a`, `theta in [0, pi]`.
pub fn guidance_lyapunov(r: f64, theta: f64, params: &GuidanceParams) -> Result<f64, AnalysisError> {
    if !(r >= params.r_a && (0.0..=PI).contains(&theta)) {
        return Err(AnalysisError::DomainError {
            r,
            theta,
            r_a: params.r_a,
        });
    }
    Ok(1.0 - theta.sin() + range_potential(r, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub t: f64,
    pub value: f64,
    /// Forward difference to the next sample.
    pub derivative_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub samples: Vec<LyapunovSample>,
    pub tolerance: f64,
    pub violations: usize,
    /// Largest forward-difference derivative seen (most positive).
    pub worst_derivative: f64,
    pub worst_time: f64,
}

impl DescentReport {
    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

/// Slope allowance for the descent check at sample spacing `h`: a fixed
/// floor plus a first-order term for the zero-order hold on the turn rate.
pub fn descent_tolerance(h: f64) -> f64 {
    DESCENT_SLACK + 1e-2 * h
}

fn descent_eligible(rec: &TrajectoryRecord, params: &GuidanceParams) -> bool {
    !rec.inside_ca && rec.r >= params.r_a && rec.theta <= PI
}

/// Checks that the guidance Lyapunov function does not increase between
/// consecutive eligible samples. Differences of the range term are integrated
/// directly over `[r_i, r_{i+1}]` so quadrature error does not pollute them.
pub fn check_lyapunov_descent(records: &[TrajectoryRecord], params: &GuidanceParams) -> DescentReport {
    let spacing = records
        .windows(2)
        .map(|w| (w[1].t - w[0].t).abs())
        .fold(0.0, f64::max);
    let tolerance = descent_tolerance(spacing);
    let mut report = DescentReport {
        samples: Vec::new(),
        tolerance,
        violations: 0,
        worst_derivative: f64::NEG_INFINITY,
        worst_time: f64::NAN,
    };
    for w in records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if !(descent_eligible(a, params) && descent_eligible(b, params)) {
            continue;
        }
        let dt = b.t - a.t;
        let dv = a.theta.sin() - b.theta.sin()
            + adaptive_simpson(|z| lyapunov_integrand(z, params), a.r, b.r, 1e-15);
        let slope = dv / dt;
        let value = 1.0 - a.theta.sin() + range_potential(a.r, params);
        report.samples.push(LyapunovSample {
            t: a.t,
            value,
            derivative_estimate: slope,
        });
        if slope > report.worst_derivative {
            report.worst_derivative = slope;
            report.worst_time = a.t;
        }
        if slope > tolerance {
            report.violations += 1;
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Linearization

/// Closed-loop polar right-hand side on `r >= r_a`, `theta in [0, pi]`,
/// where the measured range rate equals `-V cos(theta)`.
pub fn closed_loop_polar_rhs(r: f64, theta: f64, params: &GuidanceParams) -> [f64; 2] {
    let v = params.speed;
    let f1 = -v * theta.cos();
    let f2 = params.k * (guidance::reference_range_rate(r, params) + v * theta.cos())
        + v * theta.sin() / r;
    [f1, f2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizationResult {
    pub a: [[f64; 2]; 2],
    pub eigenvalues: [ComplexValue; 2],
    pub hurwitz: bool,
}

/// Jacobian of the closed loop at `(r_d, pi/2)` from its closed-form entries,
/// with eigenvalues from the characteristic polynomial.
pub fn linearize_closed_loop(params: &GuidanceParams) -> LinearizationResult {
    let GuidanceParams { r_d, k, speed: v, r_a } = *params;
    let root = (1.0 - r_a * r_a / (r_d * r_d)).sqrt();
    let a21 = -k * v * r_a * r_a / (r_d.powi(3) * root) - v / (r_d * r_d);
    let a = [[0.0, v], [a21, -k * v]];

    // lambda^2 - tr lambda + det = 0
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = tr * tr - 4.0 * det;
    let eigenvalues = if disc >= 0.0 {
        let s = disc.sqrt();
        [
            ComplexValue { re: 0.5 * (tr + s), im: 0.0 },
            ComplexValue { re: 0.5 * (tr - s), im: 0.0 },
        ]
    } else {
        let s = (-disc).sqrt();
        [
            ComplexValue { re: 0.5 * tr, im: 0.5 * s },
            ComplexValue { re: 0.5 * tr, im: -0.5 * s },
        ]
    };
    let hurwitz = eigenvalues.iter().all(|l| l.re < 0.0);
    LinearizationResult {
        a,
        eigenvalues,
        hurwitz,
    }
}

// ---------------------------------------------------------------------------
// Estimator Lyapunov certificate

type Mat3 = [[f64; 3]; 3];

fn to_array(m: &Matrix3<f64>) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn eig_range(m: &Matrix3<f64>) -> (f64, f64) {
    let e = SymmetricEigen::new(*m).eigenvalues;
    (e.min(), e.max())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorLyapunovCertificate {
    pub p: Mat3,
    pub q1: Mat3,
    pub q2: Mat3,
    pub q3: Mat3,
    pub q4: Mat3,
    pub delta1: f64,
    pub delta2: f64,
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
    /// `lambda_min(Q1 - Q3)`
    pub margin_q1_q3: f64,
    /// `lambda_min(Q2 - Q4)`
    pub margin_q2_q4: f64,
    /// Decay coefficient `lambda_min(Q1 - Q3) / sqrt(lambda_max(P))`.
    pub eta: f64,
    pub valid: bool,
    pub assumptions: Vec<String>,
}

impl EstimatorLyapunovCertificate {
    /// Upper bound on the convergence time from an initial Lyapunov value,
    /// `2 sqrt(V0) / eta`. `None` when the certificate gives no decay rate.
    pub fn convergence_time_bound(&self, v0: f64) -> Option<f64> {
        (self.margin_q1_q3 > 0.0 && self.lambda_min_p > 0.0).then(|| 2.0 * v0.sqrt() / self.eta)
    }
}

/// Assembles `P`, `Q1..Q4` for the estimation-error dynamics driven by the
/// closed loop, with disturbance bound `|f| < delta1 + delta2 |q|`.
pub fn estimator_certificate(
    guidance: &GuidanceParams,
    est: &EstimatorParams,
) -> EstimatorLyapunovCertificate {
    let (k1, k2, k3) = (est.k1, est.k2, est.k3);
    let v = guidance.speed;
    let delta1 = v * v * (2.0 * guidance.k + 1.0 / guidance.r_a);
    let delta2 = guidance.k * v;

    let p = 0.5
        * Matrix3::new(
            4.0 * k2 + k1 * k1, 0.0, -k1,
            0.0, 2.0 * k3, 0.0,
            -k1, 0.0, 2.0,
        );
    let q1 = 0.5
        * k1
        * Matrix3::new(
            2.0 * k2 + k1 * k1, 0.0, -k1,
            0.0, 2.0 * k3, 0.0,
            -k1, 0.0, 1.0,
        );
    // Middle entry: k3 stands in for a gain that has no definition.
    let q2 = k2
        * Matrix3::new(
            k2 + 2.0 * k1 * k1, 0.0, 0.0,
            0.0, k3, 0.0,
            0.0, 0.0, 1.0,
        );
    let q3 = Matrix3::from_diagonal(&nalgebra::Vector3::new(delta1 * (1.0 + k1), 0.0, delta1));
    let q4 = Matrix3::from_diagonal(&nalgebra::Vector3::new(
        0.5 * k1 * k1,
        0.0,
        0.5 * delta2 * delta2 + 2.0 * delta2,
    ));

    let (lambda_min_p, lambda_max_p) = eig_range(&p);
    let (margin_q1_q3, _) = eig_range(&(q1 - q3));
    let (margin_q2_q4, _) = eig_range(&(q2 - q4));
    let eta = margin_q1_q3 / lambda_max_p.sqrt();
    EstimatorLyapunovCertificate {
        p: to_array(&p),
        q1: to_array(&q1),
        q2: to_array(&q2),
        q3: to_array(&q3),
        q4: to_array(&q4),
        delta1,
        delta2,
        lambda_min_p,
        lambda_max_p,
        margin_q1_q3,
        margin_q2_q4,
        eta,
        valid: lambda_min_p > 0.0 && margin_q1_q3 > 0.0 && margin_q2_q4 > 0.0,
        assumptions: vec!["Q2[1][1] = k2 * k3 (assumed k3)".into()],
    }
}

// ---------------------------------------------------------------------------
// Run metrics

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// First time after which `|r - r_d|` stays below the band.
    pub settling_time_to_band: Option<f64>,
    pub final_radius_error: f64,
    pub max_abs_omega: f64,
    #[serde(rename = "num_Ca_entries")]
    pub num_ca_entries: usize,
    pub estimator_convergence_time: Option<f64>,
    /// Mean range over the last fifth of the run.
    pub settled_mean_radius: f64,
}

/// Start of the final stretch over which `pred` holds on every sample that
/// `consider` selects. `None` when the last considered sample fails.
fn final_streak_start(
    records: &[TrajectoryRecord],
    consider: impl Fn(&TrajectoryRecord) -> bool,
    pred: impl Fn(&TrajectoryRecord) -> bool,
) -> Option<f64> {
    let mut start = None;
    for rec in records.iter().filter(|r| consider(r)) {
        if pred(rec) {
            start.get_or_insert(rec.t);
        } else {
            start = None;
        }
    }
    start
}

/// Estimation error `(p, q)` of a record, if an estimator is running.
pub fn estimation_errors(rec: &TrajectoryRecord) -> Option<(f64, f64)> {
    rec.has_estimate()
        .then_some((rec.r - rec.xhat1, rec.r_dot - rec.xhat2))
}

/// Time after which the estimation errors stay below `tol` outside `C_a`.
pub fn estimator_convergence_time(records: &[TrajectoryRecord], tol: f64) -> Option<f64> {
    if !records.first()?.has_estimate() {
        return None;
    }
    final_streak_start(
        records,
        |r| !r.frozen(),
        |r| {
            let (p, q) = estimation_errors(r).unwrap();
            p.abs() < tol && q.abs() < tol
        },
    )
}

/// Mean range over the trailing `fraction` of the samples.
pub fn settled_mean_radius(records: &[TrajectoryRecord], fraction: f64) -> f64 {
    let n = ((records.len() as f64 * fraction).ceil() as usize).clamp(1, records.len().max(1));
    let tail = &records[records.len().saturating_sub(n)..];
    tail.iter().map(|r| r.r).sum::<f64>() / tail.len() as f64
}

/// `band_fraction` is relative to `r_d` (0.005 is a 0.5 % band).
pub fn compute_metrics(run: &RunOutput, config: &SimConfig, band_fraction: f64) -> RunMetrics {
    let r_d = config.guidance.r_d;
    let band = band_fraction * r_d;
    let records = &run.records;
    RunMetrics {
        settling_time_to_band: final_streak_start(records, |_| true, |r| (r.r - r_d).abs() < band),
        final_radius_error: records.last().map_or(f64::NAN, |r| (r.r - r_d).abs()),
        max_abs_omega: records.iter().map(|r| r.omega.abs()).fold(0.0, f64::max),
        num_ca_entries: run
            .events
            .iter()
            .filter(|e| e.kind == CrossingKind::Entry)
            .count(),
        estimator_convergence_time: estimator_convergence_time(records, ESTIMATOR_CONVERGENCE_TOL),
        settled_mean_radius: settled_mean_radius(records, 0.2),
    }
}

// ---------------------------------------------------------------------------
// Estimator decay rate

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub sqrt_v_start: f64,
    pub sqrt_v_end: f64,
    /// Time spent outside `C_a` before convergence.
    pub active_time: f64,
    pub average_rate: f64,
    pub required_rate: f64,
}

impl DecayReport {
    pub fn pass(&self) -> bool {
        self.average_rate >= self.required_rate
    }
}

/// Average decrease rate of `sqrt(V)` of the estimator Lyapunov function
/// over the pre-convergence interval, excluding frozen stretches. The
/// requirement is a quarter of the certified rate `eta / 2`.
pub fn check_estimator_decay(
    records: &[TrajectoryRecord],
    est: &EstimatorParams,
    certificate: &EstimatorLyapunovCertificate,
) -> Option<DecayReport> {
    let t_conv = estimator_convergence_time(records, ESTIMATOR_CONVERGENCE_TOL)?;
    let sqrt_v = |r: &TrajectoryRecord| {
        let (p, q) = estimation_errors(r).unwrap();
        estimator_lyapunov(p, q, est).sqrt()
    };
    let first = records.iter().find(|r| !r.frozen())?;
    let end = records.iter().find(|r| r.t >= t_conv && !r.frozen())?;
    let active_time: f64 = records
        .windows(2)
        .filter(|w| w[1].t <= t_conv && !w[0].frozen() && !w[1].frozen())
        .map(|w| w[1].t - w[0].t)
        .sum();
    let (start, stop) = (sqrt_v(first), sqrt_v(end));
    let average_rate = if active_time > 0.0 {
        (start - stop) / active_time
    } else {
        f64::INFINITY
    };
    Some(DecayReport {
        sqrt_v_start: start,
        sqrt_v_end: stop,
        active_time,
        average_rate,
        required_rate: certificate.eta / 4.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, GainPolicy};
    use crate::estimator::ResetRadiusMode;
    use crate::geometry::{CartesianState, TargetPosition};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn reference() -> GuidanceParams {
        GuidanceParams::new(10.0, 0.2, 1.0).unwrap()
    }

    fn reference_estimator() -> EstimatorParams {
        EstimatorParams {
            k1: 2.0,
            k2: 1.2,
            k3: 0.1,
            reset_radius_mode: ResetRadiusMode::AimRadius,
        }
    }

    /// Antiderivative of the integrand: `-ln z + k (sqrt(z^2 - r_a^2) - r_a acos(r_a / z))`.
    fn potential_closed_form(r: f64, p: &GuidanceParams) -> f64 {
        let anti = |z: f64| {
            -z.ln() + p.k * ((z * z - p.r_a * p.r_a).sqrt() - p.r_a * (p.r_a / z).acos())
        };
        anti(r) - anti(p.r_d)
    }

    #[test]
    fn lyapunov_examples() {
        let p = reference();
        assert_eq!(guidance_lyapunov(10.0, FRAC_PI_2, &p).unwrap(), 0.0);
        assert_eq!(guidance_lyapunov(10.0, 0.0, &p).unwrap(), 1.0);
        let v = guidance_lyapunov(12.0, FRAC_PI_2, &p).unwrap();
        let cross = range_potential_gauss(12.0, &p);
        assert!(v > 0.0);
        assert!((v - cross).abs() < 1e-10, "{v} vs {cross}");
        assert!((v - potential_closed_form(12.0, &p)).abs() < 1e-10);
        assert!(matches!(
            guidance_lyapunov(8.0, 1.0, &p),
            Err(AnalysisError::DomainError { .. })
        ));
        assert!(guidance_lyapunov(10.0, 4.0, &p).is_err());
    }

    #[test]
    fn quadrature_down_to_aim_radius() {
        let p = reference();
        let simpson = range_potential(p.r_a, &p);
        let exact = potential_closed_form(p.r_a, &p);
        assert!((simpson - exact).abs() < 1e-9, "{simpson} vs {exact}");
        assert!((range_potential_gauss(p.r_a, &p) - exact).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn lyapunov_positive_off_equilibrium(r in 8.67f64..40.0, theta in 0.0f64..=PI) {
            let p = reference();
            let v = guidance_lyapunov(r, theta, &p).unwrap();
            prop_assert!(v >= 0.0);
            let dist = (r - 10.0).abs() + (theta - FRAC_PI_2).abs();
            if dist > 1e-2 {
                prop_assert!(v > 1e-6, "v = {} at ({}, {})", v, r, theta);
            }
        }

        #[test]
        fn linearization_real_parts_and_discriminant(
            r_d in 1.0f64..50.0, kr in 1.01f64..10.0, v in 0.1f64..5.0,
        ) {
            let p = GuidanceParams::new(r_d, kr / r_d, v).unwrap();
            let lin = linearize_closed_loop(&p);
            let kv = p.k * v;
            // With r_a on its design value, A21 = -k^2 V, so the
            // characteristic polynomial is l^2 + kV l + k^2 V^2.
            prop_assert!((lin.a[1][0] + p.k * kv).abs() < 1e-9 * (1.0 + p.k * kv));
            for l in lin.eigenvalues {
                prop_assert!((l.re + kv / 2.0).abs() < 1e-9);
                prop_assert!((l.im.abs() - 3f64.sqrt() / 2.0 * kv).abs() < 1e-7);
            }
            prop_assert!(lin.hurwitz);
        }
    }

    #[test]
    fn reference_linearization() {
        let lin = linearize_closed_loop(&reference());
        assert_eq!(lin.a[0], [0.0, 1.0]);
        assert!((lin.a[1][0] + 0.04).abs() < 1e-12);
        assert!((lin.a[1][1] + 0.2).abs() < 1e-15);
        assert!(lin.hurwitz);
        // Independent route: nalgebra's general eigenvalue solver.
        let m = nalgebra::Matrix2::new(lin.a[0][0], lin.a[0][1], lin.a[1][0], lin.a[1][1]);
        let mut oracle: Vec<_> = m.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        for (l, (re, im)) in lin.eigenvalues.iter().zip(oracle) {
            assert!((l.re - re).abs() < 1e-12 && (l.im - im).abs() < 1e-12);
        }
        assert!((lin.eigenvalues[0].re + 0.1).abs() < 1e-12);
        assert!((lin.eigenvalues[0].im - 0.1 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        for p in [reference(), GuidanceParams::new(4.0, 0.5, 2.5).unwrap()] {
            let lin = linearize_closed_loop(&p);
            let h = 1e-6;
            let x0 = [p.r_d, FRAC_PI_2];
            for j in 0..2 {
                let mut plus = x0;
                let mut minus = x0;
                plus[j] += h;
                minus[j] -= h;
                let fp = closed_loop_polar_rhs(plus[0], plus[1], &p);
                let fm = closed_loop_polar_rhs(minus[0], minus[1], &p);
                for i in 0..2 {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    assert!((fd - lin.a[i][j]).abs() <= 1e-5, "A[{i}][{j}] {} vs {fd}", lin.a[i][j]);
                }
            }
        }
    }

    #[test]
    fn reference_certificate_values() {
        let cert = estimator_certificate(&reference(), &reference_estimator());
        assert!((cert.delta1 - 0.515_470).abs() < 1e-6);
        assert!((cert.delta2 - 0.2).abs() < 1e-15);
        assert!(cert.lambda_min_p > 0.0);
        assert!(cert.margin_q2_q4 > 0.0);
        // The (1,3) block of Q1 - Q3 is [[4.8536, -2], [-2, 0.4845]], which has
        // a negative determinant: no decay rate at these gains.
        let block_det = (cert.q1[0][0] - cert.q3[0][0]) * (cert.q1[2][2] - cert.q3[2][2])
            - cert.q1[0][2] * cert.q1[2][0];
        assert!(block_det < 0.0, "{block_det}");
        assert!(cert.margin_q1_q3 < 0.0);
        assert!(!cert.valid);
        assert!(cert.convergence_time_bound(1.0).is_none());
    }

    #[test]
    fn certificate_with_larger_gains_is_valid() {
        let est = EstimatorParams {
            k1: 4.0,
            k2: 5.0,
            ..reference_estimator()
        };
        let cert = estimator_certificate(&reference(), &est);
        assert!(cert.valid, "{cert:?}");
        assert!(cert.eta > 0.0);
        let bound = cert.convergence_time_bound(4.0).unwrap();
        assert!((bound - 4.0 / cert.eta).abs() < 1e-12);
    }

    #[test]
    fn certificate_fails_for_low_k2_and_vanishing_k1() {
        let low_k2 = EstimatorParams { k2: 1.0, ..reference_estimator() };
        let cert = estimator_certificate(&reference(), &low_k2);
        let report = guidance::validate_gains(
            10.0,
            0.2,
            1.0,
            Some(&low_k2),
            guidance::ControllerMode::OutputFeedback,
        );
        assert!(!cert.valid || !report.pass());
        assert!(!report.pass());

        let tiny_k1 = EstimatorParams { k1: 1e-9, ..reference_estimator() };
        let cert = estimator_certificate(&reference(), &tiny_k1);
        assert!(cert.margin_q1_q3 <= 0.0);
        assert!(!cert.valid);
    }

    fn reference_run() -> (SimConfig, RunOutput) {
        let cfg = SimConfig::full_information(
            TargetPosition::new(0.0, -10.0),
            CartesianState::new(13.0, -2.0, 5.0 * PI / 4.0),
            reference(),
            300.0,
        );
        let out = run(&cfg, GainPolicy::Strict).unwrap();
        (cfg, out)
    }

    #[test]
    fn descent_holds_after_last_exit_and_fails_reversed() {
        let (cfg, out) = reference_run();
        let t_last = out.events.last().map_or(0.0, |e| e.time);
        let tail: Vec<_> = out.records.iter().copied().filter(|r| r.t >= t_last).collect();
        let report = check_lyapunov_descent(&tail, &cfg.guidance);
        assert!(!report.samples.is_empty());
        assert!(report.pass(), "worst {} at {}", report.worst_derivative, report.worst_time);

        let mut reversed: Vec<_> = tail.clone();
        reversed.reverse();
        let t_end = reversed[0].t;
        for r in &mut reversed {
            r.t = t_end - r.t;
        }
        let bad = check_lyapunov_descent(&reversed, &cfg.guidance);
        assert!(!bad.pass());
    }

    #[test]
    fn descent_on_constant_trajectory_is_flat() {
        let p = reference();
        let rec = TrajectoryRecord {
            t: 0.0,
            state: CartesianState::new(0.0, 0.0, 0.0),
            r: 10.0,
            theta: FRAC_PI_2,
            r_dot: 0.0,
            omega: -0.1,
            xhat1: f64::NAN,
            xhat2: f64::NAN,
            inside_ca: false,
        };
        let recs: Vec<_> = (0..100).map(|i| TrajectoryRecord { t: i as f64 * 1e-3, ..rec }).collect();
        let report = check_lyapunov_descent(&recs, &p);
        assert_eq!(report.samples.len(), 99);
        assert!(report
            .samples
            .iter()
            .all(|s| s.derivative_estimate.abs() <= report.tolerance));
    }

    #[test]
    fn metrics_of_equilibrium_start() {
        let p = reference();
        let target = TargetPosition::new(0.0, 0.0);
        let s0 = CartesianState::from_polar(
            target,
            crate::geometry::PolarState { r: 10.0, theta: FRAC_PI_2 },
            1.0,
        );
        let cfg = SimConfig::full_information(target, s0, p, 50.0);
        let out = run(&cfg, GainPolicy::Strict).unwrap();
        let m = compute_metrics(&out, &cfg, DEFAULT_SETTLING_BAND);
        assert_eq!(m.settling_time_to_band, Some(0.0));
        assert!(m.final_radius_error < 1e-3);
        assert_eq!(m.num_ca_entries, 0);
        assert_eq!(m.estimator_convergence_time, None);
        assert!((m.max_abs_omega - 0.1).abs() < 1e-6);
    }

    #[test]
    fn metrics_of_reference_run() {
        let (cfg, out) = reference_run();
        let m = compute_metrics(&out, &cfg, DEFAULT_SETTLING_BAND);
        assert!(m.num_ca_entries <= 1);
        assert!(m.settling_time_to_band.unwrap() < 300.0);
        assert!(m.max_abs_omega <= cfg.guidance.omega_bound() + 1e-12);
    }
}
