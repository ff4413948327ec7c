//! Steering laws that turn a row detection into a yaw-rate command.
//!
//! Angles enter in degrees and offsets in pixels, as the detector reports
//! them; `omega` is returned in rad/s with positive values turning left.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tsm::CropRowDetection;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServoConfigError {
    #[error("proportional gain must be nonzero")]
    ZeroGain,
    #[error("controller weights must be nonnegative and not both zero (w1 = {w1}, w2 = {w2})")]
    BadWeights { w1: f64, w2: f64 },
    #[error("IBVS gain lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("yaw-rate Jacobian is zero; its pseudoinverse is undefined")]
    SingularJacobian,
}

/// Image-space error of the detected row.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ServoError {
    /// Detected row angle to the vertical, degrees.
    pub delta_theta: f64,
    /// `l_x2 - width / 2`, pixels.
    pub delta_lx2: f64,
}

impl std::ops::Mul<f64> for ServoError {
    type Output = ServoError;
    fn mul(self, k: f64) -> ServoError {
        ServoError {
            delta_theta: self.delta_theta * k,
            delta_lx2: self.delta_lx2 * k,
        }
    }
}

pub fn servo_error(det: &CropRowDetection, width: usize) -> ServoError {
    ServoError {
        delta_theta: det.delta_theta,
        delta_lx2: det.l_x2 as f64 - width as f64 / 2.0,
    }
}

/// `omega = alpha * (w1 * dtheta + w2 * dlx2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PControllerConfig {
    /// Gain; its sign carries the steering convention.
    pub alpha: f64,
    /// Weight per degree.
    pub w1: f64,
    /// Weight per pixel.
    pub w2: f64,
    /// Forward speed, m/s.
    pub v_star: f64,
}

impl Default for PControllerConfig {
    fn default() -> Self {
        Self {
            alpha: -0.12,
            w1: 1.0,
            w2: 1.0 / 25.0,
            v_star: 0.5,
        }
    }
}

impl PControllerConfig {
    pub fn validate(&self) -> Result<(), ServoConfigError> {
        if self.alpha == 0.0 {
            return Err(ServoConfigError::ZeroGain);
        }
        if self.w1 < 0.0 || self.w2 < 0.0 || (self.w1 == 0.0 && self.w2 == 0.0) {
            return Err(ServoConfigError::BadWeights {
                w1: self.w1,
                w2: self.w2,
            });
        }
        Ok(())
    }
}

pub fn p_control(err: &ServoError, cfg: &PControllerConfig) -> f64 {
    cfg.alpha * (cfg.w1 * err.delta_theta + cfg.w2 * err.delta_lx2)
}

/// Image-based visual servoing on the feature vector `[dlx2, dtheta]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbvsConfig {
    pub lambda: f64,
    pub v_star: f64,
    /// Feature rate per unit forward speed.
    pub jacobian_v: [f64; 2],
    /// Feature rate per unit yaw rate.
    pub jacobian_w: [f64; 2],
}

impl IbvsConfig {
    pub fn validate(&self) -> Result<(), ServoConfigError> {
        if !(self.lambda > 0.0) {
            return Err(ServoConfigError::NonPositiveLambda(self.lambda));
        }
        if self.jacobian_w == [0.0, 0.0] {
            return Err(ServoConfigError::SingularJacobian);
        }
        Ok(())
    }
}

/// Moore-Penrose pseudoinverse of a column 2-vector, as a row vector.
pub fn pinv_column(j: [f64; 2]) -> Result<[f64; 2], ServoConfigError> {
    let norm2 = j[0] * j[0] + j[1] * j[1];
    if norm2 == 0.0 {
        return Err(ServoConfigError::SingularJacobian);
    }
    Ok([j[0] / norm2, j[1] / norm2])
}

/// `omega = -pinv(J_w) * (lambda * e + J_v * v*)` with `e = [dlx2, dtheta]`.
pub fn ibvs_control(err: &ServoError, cfg: &IbvsConfig) -> Result<f64, ServoConfigError> {
    let pinv = pinv_column(cfg.jacobian_w)?;
    let e = [err.delta_lx2, err.delta_theta];
    let r0 = cfg.lambda * e[0] + cfg.jacobian_v[0] * cfg.v_star;
    let r1 = cfg.lambda * e[1] + cfg.jacobian_v[1] * cfg.v_star;
    Ok(-(pinv[0] * r0 + pinv[1] * r1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Controller {
    Proportional(PControllerConfig),
    Ibvs(IbvsConfig),
}

impl Default for Controller {
    fn default() -> Self {
        Controller::Proportional(PControllerConfig::default())
    }
}

impl Controller {
    pub fn v_star(&self) -> f64 {
        match self {
            Controller::Proportional(c) => c.v_star,
            Controller::Ibvs(c) => c.v_star,
        }
    }

    pub fn validate(&self) -> Result<(), ServoConfigError> {
        match self {
            Controller::Proportional(c) => c.validate(),
            Controller::Ibvs(c) => c.validate(),
        }
    }

    pub fn command(&self, err: &ServoError) -> Result<f64, ServoConfigError> {
        match self {
            Controller::Proportional(c) => Ok(p_control(err, c)),
            Controller::Ibvs(c) => ibvs_control(err, c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(l_x2: usize, theta: f64) -> CropRowDetection {
        CropRowDetection {
            l_x1: 256,
            l_x2,
            delta_theta: theta,
            anchor_fallback: false,
            anchor_peak_ratio: 1.0,
            line_peak: 512,
        }
    }

    #[test]
    fn servo_error_arithmetic() {
        assert_eq!(servo_error(&det(256, 0.0), 512), ServoError::default());
        let e = servo_error(&det(350, 5.0), 512);
        assert_eq!((e.delta_theta, e.delta_lx2), (5.0, 94.0));
        let e = servo_error(&det(190, -10.0), 512);
        assert_eq!((e.delta_theta, e.delta_lx2), (-10.0, -66.0));
    }

    #[test]
    fn p_control_examples() {
        let cfg = PControllerConfig {
            alpha: 0.01,
            w1: 1.0,
            w2: 0.1,
            v_star: 0.3,
        };
        assert_eq!(p_control(&ServoError::default(), &cfg), 0.0);
        let e = ServoError {
            delta_theta: 2.0,
            delta_lx2: 10.0,
        };
        assert!((p_control(&e, &cfg) - 0.03).abs() < 1e-15);
    }

    #[test]
    fn p_gain_and_weight_rescaling_cancel() {
        let e = ServoError {
            delta_theta: -3.5,
            delta_lx2: 41.0,
        };
        let base = PControllerConfig::default();
        for k in [0.5, 2.0, 10.0] {
            let scaled = PControllerConfig {
                alpha: base.alpha * k,
                w1: base.w1 / k,
                w2: base.w2 / k,
                ..base
            };
            assert!((p_control(&e, &scaled) - p_control(&e, &base)).abs() < 1e-12);
        }
    }

    #[test]
    fn ibvs_unit_pseudoinverse() {
        let cfg = IbvsConfig {
            lambda: 1.0,
            v_star: 0.0,
            jacobian_v: [0.0, 0.0],
            jacobian_w: [1.0, 0.0],
        };
        assert_eq!(pinv_column(cfg.jacobian_w).unwrap(), [1.0, 0.0]);
        let e = ServoError {
            delta_theta: 9.0,
            delta_lx2: 4.0,
        };
        assert_eq!(ibvs_control(&e, &cfg).unwrap(), -4.0);
        assert_eq!(ibvs_control(&ServoError::default(), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn ibvs_rejects_zero_jacobian() {
        let cfg = IbvsConfig {
            lambda: 1.0,
            v_star: 0.2,
            jacobian_v: [0.1, 0.0],
            jacobian_w: [0.0, 0.0],
        };
        assert_eq!(
            ibvs_control(&ServoError::default(), &cfg),
            Err(ServoConfigError::SingularJacobian)
        );
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PControllerConfig::default().validate().is_ok());
        let zero = PControllerConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert_eq!(zero.validate(), Err(ServoConfigError::ZeroGain));
        let weights = PControllerConfig {
            w1: 0.0,
            w2: 0.0,
            ..Default::default()
        };
        assert!(weights.validate().is_err());
        let lam = IbvsConfig {
            lambda: 0.0,
            v_star: 0.1,
            jacobian_v: [0.0; 2],
            jacobian_w: [1.0, 1.0],
        };
        assert!(lam.validate().is_err());
    }
}
