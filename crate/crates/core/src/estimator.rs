//! Sliding-mode range-rate estimator with freeze/reset across the aim circle.
//!
//! Outside `C_a`, with `e = r - xhat1`:
//!
//! ```text
//! xhat1' = xhat2 + k1 |e|^(1/2) sgn(e)
//! xhat2' = k2 sgn(e) + k3 e
//! ```
//!
//! While the vehicle is inside `C_a` both states are held. On exit the range
//! estimate is reflected about the reset radius and the rate estimate negated,
//! which maps the estimation error `(p, q)` at entry to `(-p, -q)` at exit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guidance::GuidanceParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EstimatorError {
    #[error("estimator is already frozen")]
    AlreadyFrozen,
    #[error("estimator is not frozen")]
    NotFrozen,
}

/// Which radius the range estimate is reflected about on exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetRadiusMode {
    /// `xhat1 <- 2 r_d - xhat1`.
    #[serde(alias = "paper")]
    DesiredRadius,
    /// `xhat1 <- 2 r_a - xhat1`. The exit happens on `r = r_a`, so only this
    /// choice negates the range error exactly.
    #[default]
    #[serde(alias = "theory")]
    AimRadius,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    #[serde(default)]
    pub reset_radius_mode: ResetRadiusMode,
}

impl EstimatorParams {
    pub fn reset_radius(&self, guidance: &GuidanceParams) -> f64 {
        match self.reset_radius_mode {
            ResetRadiusMode::DesiredRadius => guidance.r_d,
            ResetRadiusMode::AimRadius => guidance.r_a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub xhat1: f64,
    pub xhat2: f64,
    pub frozen: bool,
}

impl EstimatorState {
    pub fn new(xhat1: f64, xhat2: f64) -> Self {
        Self {
            xhat1,
            xhat2,
            frozen: false,
        }
    }

    /// Range and range-rate errors `(p, q) = (r - xhat1, rdot - xhat2)`.
    pub fn errors(&self, r: f64, r_dot: f64) -> (f64, f64) {
        (r - self.xhat1, r_dot - self.xhat2)
    }
}

/// Sign with `sgn(0) = 0`.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Time derivative of `(xhat1, xhat2)`; zero while frozen.
pub fn estimator_rhs(est: &EstimatorState, r: f64, params: &EstimatorParams) -> [f64; 2] {
    if est.frozen {
        return [0.0, 0.0];
    }
    injection(est.xhat1, est.xhat2, r, params)
}

#[inline]
pub(crate) fn injection(xhat1: f64, xhat2: f64, r: f64, params: &EstimatorParams) -> [f64; 2] {
    let e = r - xhat1;
    let s = sgn(e);
    [
        xhat2 + params.k1 * e.abs().sqrt() * s,
        params.k2 * s + params.k3 * e,
    ]
}

pub fn freeze(est: &EstimatorState) -> Result<EstimatorState, EstimatorError> {
    if est.frozen {
        return Err(EstimatorError::AlreadyFrozen);
    }
    Ok(EstimatorState {
        frozen: true,
        ..*est
    })
}

pub fn reset_at_exit(
    est: &EstimatorState,
    params: &EstimatorParams,
    guidance: &GuidanceParams,
) -> Result<EstimatorState, EstimatorError> {
    if !est.frozen {
        return Err(EstimatorError::NotFrozen);
    }
    Ok(EstimatorState {
        xhat1: 2.0 * params.reset_radius(guidance) - est.xhat1,
        xhat2: -est.xhat2,
        frozen: false,
    })
}

/// Lyapunov function of the estimation error,
/// `2 k2 |p| + k3 p^2 + q^2/2 + (k1 |p|^(1/2) sgn(p) - q)^2 / 2`.
pub fn estimator_lyapunov(p: f64, q: f64, params: &EstimatorParams) -> f64 {
    let s = p.abs().sqrt() * sgn(p);
    let cross = params.k1 * s - q;
    2.0 * params.k2 * p.abs() + params.k3 * p * p + 0.5 * q * q + 0.5 * cross * cross
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_gains(mode: ResetRadiusMode) -> EstimatorParams {
        EstimatorParams {
            k1: 2.0,
            k2: 1.2,
            k3: 0.1,
            reset_radius_mode: mode,
        }
    }

    fn reference_guidance() -> GuidanceParams {
        GuidanceParams::new(10.0, 0.2, 1.0).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let g = reference_gains(ResetRadiusMode::AimRadius);
        let on_manifold = EstimatorState::new(5.0, 0.7);
        assert_eq!(estimator_rhs(&on_manifold, 5.0, &g), [0.7, 0.0]);

        let d = estimator_rhs(&EstimatorState::new(0.0, 0.0), 4.0, &g);
        assert!((d[0] - 4.0).abs() < 1e-15 && (d[1] - 1.6).abs() < 1e-15, "{d:?}");

        let d = estimator_rhs(&EstimatorState::new(1.0, 0.0), 0.0, &g);
        assert!((d[0] + 2.0).abs() < 1e-15 && (d[1] + 1.3).abs() < 1e-15, "{d:?}");
    }

    #[test]
    fn freeze_holds_values() {
        let g = reference_gains(ResetRadiusMode::AimRadius);
        let f = freeze(&EstimatorState::new(9.0, 0.5)).unwrap();
        assert_eq!(f, EstimatorState { xhat1: 9.0, xhat2: 0.5, frozen: true });
        assert_eq!(freeze(&f), Err(EstimatorError::AlreadyFrozen));
        assert_eq!(estimator_rhs(&f, 3.0, &g), [0.0, 0.0]);
    }

    #[test]
    fn reset_examples() {
        let guidance = reference_guidance();
        let desired = reference_gains(ResetRadiusMode::DesiredRadius);
        let frozen = freeze(&EstimatorState::new(9.0, 0.5)).unwrap();
        let out = reset_at_exit(&frozen, &desired, &guidance).unwrap();
        assert_eq!(out, EstimatorState { xhat1: 11.0, xhat2: -0.5, frozen: false });

        let aim = reference_gains(ResetRadiusMode::AimRadius);
        for g in [&desired, &aim] {
            let z = freeze(&EstimatorState::new(7.0, 0.0)).unwrap();
            assert_eq!(reset_at_exit(&z, g, &guidance).unwrap().xhat2, 0.0);
        }

        let exact = freeze(&EstimatorState::new(guidance.r_a, 0.3)).unwrap();
        let out = reset_at_exit(&exact, &aim, &guidance).unwrap();
        assert!((out.xhat1 - guidance.r_a).abs() < 1e-14);

        assert_eq!(
            reset_at_exit(&EstimatorState::new(1.0, 1.0), &aim, &guidance),
            Err(EstimatorError::NotFrozen)
        );
    }

    #[test]
    fn lyapunov_matches_quadratic_form() {
        let g = reference_gains(ResetRadiusMode::AimRadius);
        // xi^T P xi with xi = (|p|^(1/2) sgn p, p, q)
        let (p, q): (f64, f64) = (-0.37, 0.81);
        let s = p.abs().sqrt() * sgn(p);
        let xi = [s, p, q];
        let pm = [
            [0.5 * (4.0 * g.k2 + g.k1 * g.k1), 0.0, -0.5 * g.k1],
            [0.0, g.k3, 0.0],
            [-0.5 * g.k1, 0.0, 1.0],
        ];
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                quad += xi[i] * pm[i][j] * xi[j];
            }
        }
        assert!((estimator_lyapunov(p, q, &g) - quad).abs() < 1e-14);
        assert_eq!(estimator_lyapunov(0.0, 0.0, &g), 0.0);
    }

    proptest! {
        #[test]
        fn aim_radius_reset_negates_errors_and_keeps_lyapunov(
            xhat1 in 0.0f64..20.0,
            xhat2 in -3.0f64..3.0,
            rdot_entry in -1.0f64..0.0,
        ) {
            let guidance = reference_guidance();
            let g = reference_gains(ResetRadiusMode::AimRadius);
            let frozen = freeze(&EstimatorState::new(xhat1, xhat2)).unwrap();
            let out = reset_at_exit(&frozen, &g, &guidance).unwrap();
            // Entry and exit both happen on r = r_a; the chord reverses the range rate.
            let (p_e, q_e) = frozen.errors(guidance.r_a, rdot_entry);
            let (p_x, q_x) = out.errors(guidance.r_a, -rdot_entry);
            prop_assert!((p_x + p_e).abs() < 1e-12);
            prop_assert!((q_x + q_e).abs() < 1e-12);
            let before = estimator_lyapunov(p_e, q_e, &g);
            let after = estimator_lyapunov(p_x, q_x, &g);
            prop_assert!((before - after).abs() <= 1e-12 * before.max(1.0));
        }

        #[test]
        fn lyapunov_nonnegative_and_even(p in -10.0f64..10.0, q in -10.0f64..10.0) {
            let g = reference_gains(ResetRadiusMode::AimRadius);
            let v = estimator_lyapunov(p, q, &g);
            prop_assert!(v >= 0.0);
            prop_assert_eq!(v, estimator_lyapunov(-p, -q, &g));
        }
    }
}
