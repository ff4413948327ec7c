//! Closed-loop row-following trials.
//!
//! Each frame: render the mask, optionally degrade it, detect the central row,
//! compute the steering command and advance the robot by one frame distance.
//! A trial ends when the top half of the clean render holds no crop pixels
//! (end of row) or after `max_frames`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::CameraModel;
use super::field::{project_centerline, Field, Renderer};
use super::robot::{step, wrap_deg, RobotState};
use super::SimError;
use crate::eval::{settling_time, DEFAULT_SETTLING_BAND_DEG};
use crate::mask::{degrade, DegradeSpec};
use crate::servo::{servo_error, Controller, IbvsConfig, PControllerConfig};
use crate::tsm::{detect, TsmConfig};

/// Metres travelled per frame so that a trial from the row start to the
/// end-of-row condition takes about 140 frames with the default camera.
pub const DEFAULT_FRAME_DISTANCE: f64 = 0.032;
pub const DEFAULT_MAX_FRAMES: usize = 300;
pub const MAX_INITIAL_HEADING_DEG: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub initial_heading_deg: f64,
    /// Initial sideways offset from the row centreline, metres (left positive).
    pub initial_offset: f64,
    pub frame_distance: f64,
    pub max_frames: usize,
    pub controller: Controller,
    pub tsm: TsmConfig,
    pub camera: CameraModel,
    pub degrade: Option<DegradeSpec>,
    /// Row to follow; the field's middle row when `None`.
    pub row_index: Option<usize>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        let camera = CameraModel::default();
        Self {
            initial_heading_deg: 0.0,
            initial_offset: 0.0,
            frame_distance: DEFAULT_FRAME_DISTANCE,
            max_frames: DEFAULT_MAX_FRAMES,
            controller: Controller::default(),
            tsm: simulation_tsm(camera.output_size),
            camera,
            degrade: None,
            row_index: None,
        }
    }
}

/// Triangle-scan parameters for the simulated camera. The scan range is the
/// middle half of the bottom edge, which holds the followed row for headings
/// up to 20 degrees and excludes the neighbours; the fallback anchor is the
/// column where a centred, aligned row meets the top edge.
pub fn simulation_tsm(output_size: usize) -> TsmConfig {
    TsmConfig {
        begin: output_size / 4,
        cease: 3 * output_size / 4,
        default_anchor: output_size / 2,
        ..TsmConfig::for_width(output_size)
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.initial_heading_deg.abs() > MAX_INITIAL_HEADING_DEG {
            return bad(format!(
                "initial heading {} outside +/-{MAX_INITIAL_HEADING_DEG} deg",
                self.initial_heading_deg
            ));
        }
        if !(self.frame_distance > 0.0) {
            return bad("frame distance must be positive".into());
        }
        if self.max_frames == 0 {
            return bad("max_frames must be positive".into());
        }
        if !(self.controller.v_star() > 0.0) {
            return bad("forward speed must be positive in simulation".into());
        }
        self.controller
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        self.tsm
            .validate(self.camera.output_size)
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        self.camera.validate().map_err(SimError::InvalidConfig)?;
        if let Some(d) = &self.degrade {
            d.validate()
                .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    /// Seconds per frame implied by the forward speed.
    pub fn dt(&self) -> f64 {
        self.frame_distance / self.controller.v_star()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    /// Robot heading relative to the row, degrees.
    pub theta_world_deg: f64,
    /// Signed distance from the followed centreline, metres (left positive).
    pub lateral_m: f64,
    pub theta_img_deg: f64,
    pub dlx2_px: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EndOfRow,
    MaxFrames,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub records: Vec<FrameRecord>,
    pub terminated: Termination,
    pub max_frames: usize,
    pub row_index: usize,
}

pub const TRACE_CSV_HEADER: &str = "frame,theta_world_deg,lateral_m,theta_img_deg,dlx2_px,omega";

impl TrialTrace {
    pub fn mean_abs_theta_deg(&self) -> f64 {
        mean(self.records.iter().map(|r| r.theta_world_deg.abs()))
    }

    pub fn mean_abs_lateral_m(&self) -> f64 {
        mean(self.records.iter().map(|r| r.lateral_m.abs()))
    }

    pub fn max_abs_lateral_m(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.lateral_m.abs())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.frame, r.theta_world_deg, r.lateral_m, r.theta_img_deg, r.dlx2_px, r.omega
            ));
        }
        out
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Per-frame degradation seed derived from the spec seed.
fn frame_seed(seed: u64, frame: usize) -> u64 {
    seed ^ (frame as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn run_trial(field: &Field, cfg: &TrialConfig) -> Result<TrialTrace, SimError> {
    let renderer = Renderer::new(cfg.camera)?;
    run_trial_with(field, cfg, &renderer)
}

fn run_trial_with(
    field: &Field,
    cfg: &TrialConfig,
    renderer: &Renderer,
) -> Result<TrialTrace, SimError> {
    cfg.validate()?;
    let row_index = match cfg.row_index {
        Some(i) if i < field.rows().len() => i,
        Some(i) => return Err(SimError::RowNotVisible(i)),
        None => field.rows().len() / 2,
    };
    let row = *field
        .rows()
        .get(row_index)
        .ok_or(SimError::RowNotVisible(row_index))?;
    let size = cfg.camera.output_size;
    let v = cfg.controller.v_star();
    let dt = cfg.dt();

    let mut robot = RobotState {
        x: row.x_start,
        y: row.y + cfg.initial_offset,
        heading: cfg.initial_heading_deg.to_radians(),
    };
    let mut records = Vec::new();
    let mut terminated = Termination::MaxFrames;
    for frame in 0..cfg.max_frames {
        let clean = renderer.render(field, &robot);
        let end_of_row = clean.rows_empty(0, size / 2);
        let mask = match &cfg.degrade {
            Some(spec) => degrade(
                &clean,
                &DegradeSpec {
                    seed: frame_seed(spec.seed, frame),
                    ..*spec
                },
            )?,
            None => clean,
        };
        let det = detect(&mask, &cfg.tsm)?;
        let err = servo_error(&det, size);
        let omega = cfg.controller.command(&err)?;
        records.push(FrameRecord {
            frame,
            theta_world_deg: wrap_deg(robot.heading.to_degrees()),
            lateral_m: robot.y - row.y,
            theta_img_deg: err.delta_theta,
            dlx2_px: err.delta_lx2,
            omega,
        });
        if end_of_row {
            terminated = Termination::EndOfRow;
            break;
        }
        robot = step(&robot, v, omega, dt);
    }
    Ok(TrialTrace {
        records,
        terminated,
        max_frames: cfg.max_frames,
        row_index,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub initial_heading_deg: f64,
    pub frames: usize,
    pub settling_frames: usize,
    pub settled: bool,
    pub mean_abs_theta_deg: f64,
    pub mean_abs_lateral_m: f64,
    pub max_abs_lateral_m: f64,
    pub terminated: Termination,
}

impl TrialSummary {
    pub fn of(cfg: &TrialConfig, trace: &TrialTrace) -> Self {
        let settling = settling_time(trace, DEFAULT_SETTLING_BAND_DEG);
        Self {
            initial_heading_deg: cfg.initial_heading_deg,
            frames: trace.records.len(),
            settling_frames: settling,
            settled: settling <= trace.records.len(),
            mean_abs_theta_deg: trace.mean_abs_theta_deg(),
            mean_abs_lateral_m: trace.mean_abs_lateral_m(),
            max_abs_lateral_m: trace.max_abs_lateral_m(),
            terminated: trace.terminated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub trials: Vec<TrialSummary>,
    /// Means of the per-trial means.
    pub mean_abs_theta_deg: f64,
    pub mean_abs_lateral_m: f64,
    pub mean_settling_frames: f64,
    pub all_settled: bool,
}

impl BatchSummary {
    pub fn from_trials(trials: Vec<TrialSummary>) -> Self {
        let n = trials.len().max(1) as f64;
        let sum = |f: fn(&TrialSummary) -> f64| trials.iter().map(f).sum::<f64>() / n;
        Self {
            mean_abs_theta_deg: sum(|t| t.mean_abs_theta_deg),
            mean_abs_lateral_m: sum(|t| t.mean_abs_lateral_m),
            mean_settling_frames: sum(|t| t.settling_frames as f64),
            all_settled: trials.iter().all(|t| t.settled),
            trials,
        }
    }
}

/// Runs every trial on the same field. Results are identical with or
/// without `parallel`; traces come back in input order.
pub fn run_batch(
    configs: &[TrialConfig],
    field: &Field,
    parallel: bool,
) -> Result<(BatchSummary, Vec<TrialTrace>), SimError> {
    let mut renderers: Vec<Renderer> = Vec::new();
    for c in configs {
        if !renderers.iter().any(|r| *r.camera() == c.camera) {
            renderers.push(Renderer::new(c.camera)?);
        }
    }
    let run = |c: &TrialConfig| {
        let r = renderers
            .iter()
            .find(|r| *r.camera() == c.camera)
            .expect("renderer prepared for every camera");
        run_trial_with(field, c, r)
    };
    let traces: Vec<TrialTrace> = if parallel {
        configs.par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        configs.iter().map(run).collect::<Result<_, _>>()?
    };
    let trials = configs
        .iter()
        .zip(&traces)
        .map(|(c, t)| TrialSummary::of(c, t))
        .collect();
    Ok((BatchSummary::from_trials(trials), traces))
}

/// Initial headings for `n` trials: the first half random in (0, 20] degrees,
/// the rest random in [-20, 0).
pub fn protocol_headings(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positive = n.div_ceil(2);
    (0..n)
        .map(|i| {
            let mag = MAX_INITIAL_HEADING_DEG * (1.0 - rng.gen::<f64>());
            if i < positive {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Trial configs following the alternating-sign protocol, all sharing `base`.
pub fn protocol_trials(base: &TrialConfig, n: usize, seed: u64) -> Vec<TrialConfig> {
    protocol_headings(n, seed)
        .into_iter()
        .enumerate()
        .map(|(i, h)| TrialConfig {
            initial_heading_deg: h,
            degrade: base.degrade.map(|d| DegradeSpec {
                seed: d.seed.wrapping_add(i as u64),
                ..d
            }),
            ..*base
        })
        .collect()
}

/// Finite-difference image Jacobian of the features `[l_x2 - size/2, theta]`
/// with respect to forward speed (per m/s) and yaw rate (per rad/s), taken at
/// `robot` relative to row `row_index`.
pub fn image_jacobian(
    field: &Field,
    robot: &RobotState,
    cam: &CameraModel,
    row_index: usize,
) -> Result<([f64; 2], [f64; 2]), SimError> {
    let centre = cam.output_size as f64 / 2.0 - 0.5;
    let features = |r: &RobotState| -> Result<[f64; 2], SimError> {
        let p = project_centerline(field, r, cam, row_index)?;
        Ok([p.l_x2 - centre, p.theta_deg])
    };
    let h = 1e-4;
    let (sin, cos) = robot.heading.sin_cos();
    let ahead = |d: f64| RobotState {
        x: robot.x + d * cos,
        y: robot.y + d * sin,
        ..*robot
    };
    let turned = |d: f64| RobotState {
        heading: robot.heading + d,
        ..*robot
    };
    let diff = |a: [f64; 2], b: [f64; 2]| [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h)];
    let jv = diff(features(&ahead(h))?, features(&ahead(-h))?);
    let jw = diff(features(&turned(h))?, features(&turned(-h))?);
    Ok((jv, jw))
}

/// IBVS config whose Jacobians come from the camera model at the nominal pose
/// (on the centreline, aligned with the row).
pub fn nominal_ibvs(
    field: &Field,
    cam: &CameraModel,
    row_index: usize,
    lambda: f64,
    v_star: f64,
) -> Result<IbvsConfig, SimError> {
    let row = field
        .rows()
        .get(row_index)
        .ok_or(SimError::RowNotVisible(row_index))?;
    let robot = RobotState {
        x: row.x_start,
        y: row.y,
        heading: 0.0,
    };
    let (jacobian_v, jacobian_w) = image_jacobian(field, &robot, cam, row_index)?;
    Ok(IbvsConfig {
        lambda,
        v_star,
        jacobian_v,
        jacobian_w,
    })
}

/// Trial config with the default proportional controller.
pub fn proportional_trial(heading_deg: f64, controller: PControllerConfig) -> TrialConfig {
    TrialConfig {
        initial_heading_deg: heading_deg,
        controller: Controller::Proportional(controller),
        ..Default::default()
    }
}
