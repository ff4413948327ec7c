//! Randomized renders paired with their analytic centreline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    generate_field, project_centerline, CameraModel, CenterlineProjection, FieldSpec, Renderer,
    RobotState, SimError,
};
use crate::mask::BinaryMask;

/// Pose ranges for [`render_corpus`]. Each sample gets its own field seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub count: usize,
    pub seed: u64,
    pub max_heading_deg: f64,
    pub max_offset: f64,
    /// Robot x is drawn from `[0, max_progress]` metres along the row.
    pub max_progress: f64,
    pub field: FieldSpec,
    pub camera: CameraModel,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            count: 200,
            seed: 0,
            max_heading_deg: 20.0,
            max_offset: 0.05,
            max_progress: 2.0,
            field: FieldSpec::default(),
            camera: CameraModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub id: String,
    pub field_seed: u64,
    pub robot: RobotState,
    pub mask: BinaryMask,
    pub truth: CenterlineProjection,
}

/// Renders `spec.count` masks of the middle row from random poses.
pub fn render_corpus(spec: &CorpusSpec) -> Result<Vec<CorpusItem>, SimError> {
    if !(spec.max_heading_deg >= 0.0 && spec.max_offset >= 0.0 && spec.max_progress >= 0.0) {
        return Err(SimError::InvalidConfig(
            "corpus ranges must be non-negative".into(),
        ));
    }
    let renderer = Renderer::new(spec.camera)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let row_index = spec.field.middle_row();
    let mut items = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let field_seed = spec.seed.wrapping_add(i as u64);
        let field = generate_field(&FieldSpec {
            seed: field_seed,
            ..spec.field
        })?;
        let row = field.rows()[row_index];
        let robot = RobotState {
            x: row.x_start + rng.gen_range(0.0..=spec.max_progress),
            y: row.y + rng.gen_range(-spec.max_offset..=spec.max_offset),
            heading: rng
                .gen_range(-spec.max_heading_deg..=spec.max_heading_deg)
                .to_radians(),
        };
        let truth = project_centerline(&field, &robot, &spec.camera, row_index)?;
        items.push(CorpusItem {
            id: format!("render_{i:04}.pgm"),
            field_seed,
            robot,
            mask: renderer.render(&field, &robot),
            truth,
        });
    }
    Ok(items)
}
