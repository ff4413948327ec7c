//! Geometric crop-field simulator for closed-loop row following.

pub mod camera;
pub mod corpus;
pub mod field;
pub mod robot;
pub mod trial;

use thiserror::Error;

pub use camera::{CameraModel, GroundTable};
pub use corpus::{render_corpus, CorpusItem, CorpusSpec};
pub use field::{
    generate_field, project_centerline, render_mask, CenterlineProjection, Field, FieldSpec, Plant,
    Renderer, RowLine,
};
pub use robot::{step, wrap_deg, RobotState};
pub use trial::{
    image_jacobian, nominal_ibvs, proportional_trial, protocol_headings, protocol_trials,
    run_batch, run_trial, simulation_tsm, BatchSummary, FrameRecord, Termination, TrialConfig,
    TrialSummary, TrialTrace, DEFAULT_FRAME_DISTANCE, DEFAULT_MAX_FRAMES, TRACE_CSV_HEADER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("row {0} is not visible from this pose")]
    RowNotVisible(usize),
    #[error(transparent)]
    Detection(#[from] crate::tsm::TsmError),
    #[error(transparent)]
    Controller(#[from] crate::servo::ServoConfigError),
    #[error(transparent)]
    Mask(#[from] crate::mask::MaskError),
}
