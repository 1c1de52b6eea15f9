//! Switching circumnavigation controllers and their parameter checks.
//!
//! Outside the aim circle `C_a` (radius `r_a`) the turn rate tracks the range
//! rate the vehicle would have when flying at a tangent point of `C_a`:
//!
//! ```text
//! omega = k [ V cos(pi - asin(r_a / r)) - rdot ]     r >= r_a
//! omega = 0                                         r <  r_a
//! ```
//!
//! With `r_a = sqrt(r_d^2 - 1/k^2)` the resulting orbit has radius `r_d`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::EstimatorParams;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GuidanceError {
    #[error("invalid gain: k = {k} must exceed 1/r_d = {min} (r_d = {r_d})")]
    InvalidGain { k: f64, r_d: f64, min: f64 },
    #[error("invalid parameter {name} = {value}: must be positive and finite")]
    NonPositive { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    /// Range and range rate both measured.
    FullInformation,
    /// Range measured, range rate taken from the sliding-mode estimator.
    OutputFeedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceParams {
    pub r_d: f64,
    pub k: f64,
    pub speed: f64,
    pub r_a: f64,
}

impl GuidanceParams {
    pub fn new(r_d: f64, k: f64, speed: f64) -> Result<Self, GuidanceError> {
        for (name, value) in [("r_d", r_d), ("k", k), ("speed", speed)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(GuidanceError::NonPositive { name, value });
            }
        }
        let r_a = compute_r_a(r_d, k)?;
        Ok(Self { r_d, k, speed, r_a })
    }

    /// Turn-rate bound `2kV`.
    pub fn omega_bound(&self) -> f64 {
        2.0 * self.k * self.speed
    }
}

/// Aim-circle radius that places the stable orbit at `r_d`.
// Negated comparisons so that NaN inputs are rejected too.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn compute_r_a(r_d: f64, k: f64) -> Result<f64, GuidanceError> {
    let min = 1.0 / r_d;
    if !(k > min) {
        return Err(GuidanceError::InvalidGain { k, r_d, min });
    }
    let radicand = r_d * r_d - 1.0 / (k * k);
    if !(radicand > 0.0) {
        return Err(GuidanceError::InvalidGain { k, r_d, min });
    }
    Ok(radicand.sqrt())
}

/// Radius of the circular orbit the switching law settles on for a given aim radius.
pub fn stable_radius(r_a: f64, k: f64) -> f64 {
    (r_a * r_a + 1.0 / (k * k)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Active,
    Coast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlDecision {
    pub omega: f64,
    pub branch: Branch,
}

impl ControlDecision {
    const COAST: ControlDecision = ControlDecision {
        omega: 0.0,
        branch: Branch::Coast,
    };
}

/// Range rate obtained when heading at a tangent point of `C_a`, i.e.
/// `V cos(pi - asin(r_a / r))`.
pub fn reference_range_rate(r: f64, params: &GuidanceParams) -> f64 {
    // Round-off can push the ratio a hair past 1 on the switching surface.
    let ratio = (params.r_a / r).clamp(-1.0, 1.0);
    params.speed * (std::f64::consts::PI - ratio.asin()).cos()
}

/// Active-branch law evaluated regardless of which side of `C_a` the vehicle is on.
pub(crate) fn active_omega(r: f64, rate: f64, params: &GuidanceParams) -> f64 {
    params.k * (reference_range_rate(r, params) - rate)
}

/// Evaluates the switching law with the branch chosen by the caller. The
/// hybrid executive uses this so the branch follows the localized crossing
/// events rather than a round-off-sensitive comparison.
pub fn decide(r: f64, rate: f64, params: &GuidanceParams, inside: bool) -> ControlDecision {
    if inside {
        ControlDecision::COAST
    } else {
        ControlDecision {
            omega: active_omega(r, rate, params),
            branch: Branch::Active,
        }
    }
}

pub fn full_information_control(r: f64, r_dot: f64, params: &GuidanceParams) -> ControlDecision {
    decide(r, r_dot, params, r < params.r_a)
}

/// Same law with the measured range rate replaced by the estimate `xhat2`.
pub fn output_feedback_control(r: f64, xhat2: f64, params: &GuidanceParams) -> ControlDecision {
    decide(r, xhat2, params, r < params.r_a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Parameters for which the controller or estimator is not even defined.
    Hard,
    /// Hypotheses of the convergence results.
    Convergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCheck {
    pub name: String,
    pub kind: CheckKind,
    pub value: f64,
    pub threshold: f64,
    /// `value - threshold`; the check passes when this is strictly positive.
    pub margin: f64,
    pub pass: bool,
}

impl GainCheck {
    fn new(name: impl Into<String>, kind: CheckKind, value: f64, threshold: f64) -> Self {
        let margin = value - threshold;
        Self {
            name: name.into(),
            kind,
            value,
            threshold,
            margin,
            pass: margin > 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mode: ControllerMode,
    pub checks: Vec<GainCheck>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn hard_failures(&self) -> impl Iterator<Item = &GainCheck> {
        self.checks
            .iter()
            .filter(|c| !c.pass && c.kind == CheckKind::Hard)
    }

    pub fn convergence_failures(&self) -> impl Iterator<Item = &GainCheck> {
        self.checks
            .iter()
            .filter(|c| !c.pass && c.kind == CheckKind::Convergence)
    }

    pub fn has_hard_failure(&self) -> bool {
        self.hard_failures().next().is_some()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "gain validation ({:?})", self.mode)?;
        for c in &self.checks {
            writeln!(
                f,
                "  [{}] {:<40} value {:>12.6} threshold {:>12.6} margin {:>+12.6} ({:?})",
                if c.pass { "pass" } else { "FAIL" },
                c.name,
                c.value,
                c.threshold,
                c.margin,
                c.kind
            )?;
        }
        write!(f, "overall: {}", if self.pass() { "pass" } else { "FAIL" })
    }
}

/// Lower bound on `k2` for the estimator to converge in closed loop.
pub fn k2_threshold(k: f64, speed: f64, r_a: f64, k1: f64) -> f64 {
    let delta1 = speed * speed * (2.0 * k + 1.0 / r_a);
    let delta2 = k * speed;
    (1.0 + delta1 * delta1 / k1).max(0.5 * delta2 * delta2 + 2.0 * delta2)
}

/// Checks every gain inequality for the selected controller. Works on raw
/// values so that inadmissible sets can still be reported.
pub fn validate_gains(
    r_d: f64,
    k: f64,
    speed: f64,
    estimator: Option<&EstimatorParams>,
    mode: ControllerMode,
) -> ValidationReport {
    use CheckKind::*;
    let mut checks = vec![
        GainCheck::new("r_d > 0", Hard, r_d, 0.0),
        GainCheck::new("speed > 0", Hard, speed, 0.0),
        GainCheck::new("k > 0", Hard, k, 0.0),
        GainCheck::new(
            "aim radius radicand r_d^2 - 1/k^2 > 0",
            Hard,
            r_d * r_d,
            1.0 / (k * k),
        ),
    ];
    let r_a = compute_r_a(r_d, k).ok();
    match mode {
        ControllerMode::FullInformation => {
            checks.push(GainCheck::new("k > 1/r_d", Convergence, k, 1.0 / r_d));
        }
        ControllerMode::OutputFeedback => {
            let inv_ra = r_a.map_or(f64::INFINITY, |r_a| 1.0 / r_a);
            checks.push(GainCheck::new("k > 1/r_a", Convergence, k, inv_ra));
            match estimator {
                None => checks.push(GainCheck::new("estimator gains present", Hard, 0.0, 0.0)),
                Some(est) => {
                    checks.push(GainCheck::new("k1 > 0", Hard, est.k1, 0.0));
                    checks.push(GainCheck::new("k2 > 0", Hard, est.k2, 0.0));
                    checks.push(GainCheck::new("k3 > 0", Hard, est.k3, 0.0));
                    let threshold = match r_a {
                        Some(r_a) if est.k1 > 0.0 => k2_threshold(k, speed, r_a, est.k1),
                        _ => f64::INFINITY,
                    };
                    checks.push(GainCheck::new(
                        "k2 > max{1 + d1^2/k1, d2^2/2 + 2 d2}",
                        Convergence,
                        est.k2,
                        threshold,
                    ));
                }
            }
        }
    }
    ValidationReport { mode, checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::ResetRadiusMode;
    use proptest::prelude::*;

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

    #[test]
    fn aim_radius_examples() {
        assert!((compute_r_a(10.0, 0.2).unwrap() - 8.6603).abs() < 5e-5);
        assert!(matches!(
            compute_r_a(10.0, 0.1),
            Err(GuidanceError::InvalidGain { .. })
        ));
        assert!((compute_r_a(2.0, 1.0).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        assert!(GuidanceParams::new(10.0, 0.05, 1.0).is_err());
        assert!(GuidanceParams::new(10.0, 0.2, 0.0).is_err());
    }

    #[test]
    fn stable_radius_examples() {
        assert!((stable_radius(8.6603, 0.2) - 10.0).abs() < 1e-4);
        assert_eq!(stable_radius(0.0, 0.25), 4.0);
        assert_eq!(stable_radius(3.0, 0.25), 5.0);
    }

    #[test]
    fn equilibrium_turn_rate() {
        let p = reference();
        let d = full_information_control(10.0, 0.0, &p);
        assert_eq!(d.branch, Branch::Active);
        assert!((d.omega + 0.1).abs() < 1e-12, "omega {}", d.omega);
    }

    #[test]
    fn on_switching_surface_reference_vanishes() {
        let p = reference();
        let d = full_information_control(p.r_a, 0.0, &p);
        assert_eq!(d.branch, Branch::Active);
        assert!(d.omega.abs() < 1e-12);
    }

    #[test]
    fn inside_aim_circle_coasts() {
        let p = reference();
        for rdot in [-1.0, 0.0, 0.7] {
            let d = full_information_control(p.r_a / 2.0, rdot, &p);
            assert_eq!(d, ControlDecision { omega: 0.0, branch: Branch::Coast });
            let d = output_feedback_control(p.r_a / 2.0, rdot, &p);
            assert_eq!(d.branch, Branch::Coast);
        }
    }

    #[test]
    fn output_feedback_hand_computed() {
        let p = reference();
        let r_a = (100.0f64 - 25.0).sqrt();
        // cos(pi - asin(x)) = -sqrt(1 - x^2)
        let expected = 0.2 * (-(1.0 - (r_a / 12.0).powi(2)).sqrt() - 0.3);
        let d = output_feedback_control(12.0, 0.3, &p);
        assert!((d.omega - expected).abs() < 1e-14);
        assert_eq!(d.branch, Branch::Active);
    }

    #[test]
    fn reference_gain_set_passes_both_modes() {
        let est = reference_estimator();
        let fi = validate_gains(10.0, 0.2, 1.0, None, ControllerMode::FullInformation);
        assert!(fi.pass(), "{fi}");
        let of = validate_gains(10.0, 0.2, 1.0, Some(&est), ControllerMode::OutputFeedback);
        assert!(of.pass(), "{of}");
        let k2 = of.checks.iter().find(|c| c.name.starts_with("k2 > max")).unwrap();
        // 1 + (2k + 1/r_a)^2 / k1 with V = 1, r_a = sqrt(75).
        let oracle = 1.0 + (0.4 + 1.0 / 75f64.sqrt()).powi(2) / 2.0;
        assert!((k2.threshold - oracle).abs() < 1e-14, "{}", k2.threshold);
        assert!((k2.threshold - 1.132_855).abs() < 1e-6);
        assert!((k2.margin - (1.2 - oracle)).abs() < 1e-14);
    }

    #[test]
    fn failing_gain_sets() {
        let low_k = validate_gains(10.0, 0.05, 1.0, None, ControllerMode::FullInformation);
        assert!(!low_k.pass());
        assert!(low_k.has_hard_failure());
        assert!(low_k.convergence_failures().any(|c| c.name == "k > 1/r_d"));

        let mut est = reference_estimator();
        est.k3 = 0.0;
        let r = validate_gains(10.0, 0.2, 1.0, Some(&est), ControllerMode::OutputFeedback);
        assert!(!r.pass());
        assert!(r.hard_failures().any(|c| c.name == "k3 > 0"));

        let mut est = reference_estimator();
        est.k2 = 1.0;
        let r = validate_gains(10.0, 0.2, 1.0, Some(&est), ControllerMode::OutputFeedback);
        assert!(!r.pass());
        assert!(!r.has_hard_failure());
    }

    #[test]
    fn output_feedback_needs_k_above_inverse_aim_radius() {
        // k r_d = 1.2 passes the full-information test but r_a = 5.53 < 1/k = 8.33.
        let fi = validate_gains(10.0, 0.12, 1.0, None, ControllerMode::FullInformation);
        assert!(fi.pass());
        let est = EstimatorParams { k2: 50.0, ..reference_estimator() };
        let of = validate_gains(10.0, 0.12, 1.0, Some(&est), ControllerMode::OutputFeedback);
        assert!(of.convergence_failures().any(|c| c.name == "k > 1/r_a"));
    }

    proptest! {
        #[test]
        fn turn_rate_bounded(
            r_d in 1.0f64..50.0,
            kr in 1.001f64..5.0,
            v in 0.1f64..5.0,
            r_frac in 0.01f64..10.0,
            rdot_frac in -1.0f64..=1.0,
        ) {
            let p = GuidanceParams::new(r_d, kr / r_d, v).unwrap();
            let r = r_frac * r_d;
            let d = full_information_control(r, rdot_frac * v, &p);
            prop_assert!(d.omega.abs() <= p.omega_bound() + 1e-12);
        }

        #[test]
        fn aim_radius_round_trip(r_d in 0.5f64..100.0, kr in 1.0001f64..20.0) {
            let k = kr / r_d;
            let r_a = compute_r_a(r_d, k).unwrap();
            prop_assert!(r_a > 0.0 && r_a < r_d);
            prop_assert!((stable_radius(r_a, k) - r_d).abs() <= 1e-12 * r_d.max(1.0));
        }

        #[test]
        fn clockwise_on_stable_circle(r_d in 0.5f64..100.0, kr in 1.0001f64..20.0, v in 0.1f64..10.0) {
            let p = GuidanceParams::new(r_d, kr / r_d, v).unwrap();
            let d = full_information_control(r_d, 0.0, &p);
            prop_assert!(d.omega < 0.0);
            prop_assert!((d.omega + v / r_d).abs() < 1e-12 * (v / r_d).max(1.0));
        }

        #[test]
        fn substitution_identity(r in 0.1f64..40.0, rdot in -1.0f64..1.0) {
            let p = reference();
            prop_assert_eq!(
                output_feedback_control(r, rdot, &p),
                full_information_control(r, rdot, &p)
            );
        }

        #[test]
        fn active_branch_is_continuous(r in 8.7f64..40.0, rdot in -1.0f64..1.0) {
            let p = reference();
            let e = 1e-7;
            let a = full_information_control(r, rdot, &p).omega;
            let b = full_information_control(r + e, rdot + e, &p).omega;
            prop_assert!((a - b).abs() < 1e-5);
        }
    }
}
