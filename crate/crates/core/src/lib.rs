//! Central crop-row extraction from binary segmentation masks.
//!
//! The triangle scan ([`tsm`]) finds the row the robot should follow as a line
//! from an anchor on the top image edge to a point on a bounded stretch of the
//! bottom edge. [`servo`] turns that line into a yaw-rate command, [`sim`]
//! closes the loop over a rendered crop field, and [`eval`] scores detections
//! and derives scan parameters from ground truth.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod eval;
pub mod mask;
pub mod raster;
pub mod servo;
pub mod sim;
pub mod tsm;

pub use mask::{degrade, load_mask, save_mask, BinaryMask, DegradeSpec, MaskError};
pub use raster::rasterize_segment;
pub use servo::{
    ibvs_control, p_control, servo_error, Controller, IbvsConfig, PControllerConfig, ServoError,
};
pub use tsm::{anchor_scan, detect, line_scan, CropRowDetection, SumCurve, TsmConfig, TsmError};
