//! Parametric crop field and mask rendering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::camera::{CameraModel, GroundTable};
use super::robot::RobotState;
use super::SimError;
use crate::mask::BinaryMask;
use crate::tsm::heading_deg;

/// Rows run along world +x; row `i` has its centreline at `y = i * row_spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub row_spacing: f64,
    pub seed_spacing: f64,
    pub plant_height_mean: f64,
    pub plant_height_jitter: f64,
    pub row_length: f64,
    pub num_rows: usize,
    /// Canopy radius per unit plant height.
    pub plant_radius_per_height: f64,
    /// Mesh yaw of the original plants; discs have no orientation.
    pub plant_orientation_deg: f64,
    pub seed: u64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self {
            row_spacing: 0.60,
            seed_spacing: 0.16,
            plant_height_mean: 0.06,
            plant_height_jitter: 0.03,
            row_length: 6.0,
            num_rows: 20,
            plant_radius_per_height: 1.0,
            plant_orientation_deg: 145.0,
            seed: 0,
        }
    }
}

impl FieldSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.row_spacing > 0.0 && self.seed_spacing > 0.0) {
            return bad("row and seed spacing must be positive".into());
        }
        if !(self.plant_height_jitter >= 0.0 && self.plant_height_jitter <= self.plant_height_mean)
        {
            return bad(format!(
                "plant height jitter {} must lie in [0, mean {}]",
                self.plant_height_jitter, self.plant_height_mean
            ));
        }
        if self.num_rows == 0 {
            return bad("need at least one row".into());
        }
        if !(self.row_length >= 0.0 && self.plant_radius_per_height > 0.0) {
            return bad("row length and radius factor must be positive".into());
        }
        Ok(())
    }

    /// Plants on one row: every seed spacing from the row start up to and
    /// including the row length.
    pub fn plants_per_row(&self) -> usize {
        (self.row_length / self.seed_spacing + 1e-9).floor() as usize + 1
    }

    pub fn row_y(&self, row: usize) -> f64 {
        row as f64 * self.row_spacing
    }

    /// Row a trial follows by default.
    pub fn middle_row(&self) -> usize {
        self.num_rows / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub x: f64,
    pub y: f64,
    pub canopy_radius: f64,
}

/// A straight row centreline from `(x_start, y)` to `(x_end, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowLine {
    pub y: f64,
    pub x_start: f64,
    pub x_end: f64,
}

#[derive(Debug, Clone)]
pub struct Field {
    plants: Vec<Plant>,
    rows: Vec<RowLine>,
    index: PlantIndex,
}

impl Field {
    pub fn new(plants: Vec<Plant>, rows: Vec<RowLine>) -> Self {
        let index = PlantIndex::build(&plants);
        Self {
            plants,
            rows,
            index,
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new())
    }

    pub fn plants(&self) -> &[Plant] {
        &self.plants
    }

    pub fn rows(&self) -> &[RowLine] {
        &self.rows
    }

    /// Index of the row whose centreline is closest to `y`.
    pub fn nearest_row(&self, y: f64) -> Option<usize> {
        self.rows
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.y - y).abs().total_cmp(&(b.1.y - y).abs()))
            .map(|(i, _)| i)
    }

    /// Same field shifted by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Field {
        let plants = self
            .plants
            .iter()
            .map(|p| Plant {
                x: p.x + dx,
                y: p.y + dy,
                ..*p
            })
            .collect();
        let rows = self
            .rows
            .iter()
            .map(|r| RowLine {
                y: r.y + dy,
                x_start: r.x_start + dx,
                x_end: r.x_end + dx,
            })
            .collect();
        Field::new(plants, rows)
    }
}

pub fn generate_field(spec: &FieldSpec) -> Result<Field, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per_row = spec.plants_per_row();
    let mut plants = Vec::with_capacity(per_row * spec.num_rows);
    let mut rows = Vec::with_capacity(spec.num_rows);
    for r in 0..spec.num_rows {
        let y = spec.row_y(r);
        for j in 0..per_row {
            let u: f64 = rng.gen_range(-1.0..=1.0);
            let height = spec.plant_height_mean + u * spec.plant_height_jitter;
            plants.push(Plant {
                x: j as f64 * spec.seed_spacing,
                y,
                canopy_radius: height * spec.plant_radius_per_height,
            });
        }
        rows.push(RowLine {
            y,
            x_start: 0.0,
            x_end: spec.row_length,
        });
    }
    Ok(Field::new(plants, rows))
}

/// Uniform grid over the plant bounding box; a cell is at least as wide as
/// the largest canopy radius, so a 3x3 neighbourhood covers any disc hit.
#[derive(Debug, Clone)]
struct PlantIndex {
    origin: (f64, f64),
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<u32>,
    /// (x, y, r^2) grouped by cell.
    discs: Vec<(f64, f64, f64)>,
}

impl PlantIndex {
    fn build(plants: &[Plant]) -> Self {
        if plants.is_empty() {
            return Self {
                origin: (0.0, 0.0),
                cell: 1.0,
                nx: 0,
                ny: 0,
                starts: vec![0],
                discs: Vec::new(),
            };
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        let mut rmax = 0.0f64;
        for p in plants {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
            rmax = rmax.max(p.canopy_radius);
        }
        let area = (x1 - x0 + 1.0) * (y1 - y0 + 1.0);
        let cell = (rmax * 1.01 + 1e-6).max((area / 4.0e6).sqrt());
        let origin = (x0 - cell, y0 - cell);
        let nx = ((x1 - origin.0) / cell).floor() as usize + 2;
        let ny = ((y1 - origin.1) / cell).floor() as usize + 2;
        let cell_of = |p: &Plant| {
            let cx = ((p.x - origin.0) / cell).floor() as usize;
            let cy = ((p.y - origin.1) / cell).floor() as usize;
            cy * nx + cx
        };
        let mut counts = vec![0u32; nx * ny + 1];
        for p in plants {
            counts[cell_of(p) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut discs = vec![(0.0, 0.0, 0.0); plants.len()];
        for p in plants {
            let c = cell_of(p);
            discs[fill[c] as usize] = (p.x, p.y, p.canopy_radius * p.canopy_radius);
            fill[c] += 1;
        }
        Self {
            origin,
            cell,
            nx,
            ny,
            starts,
            discs,
        }
    }

    /// Whether the world point `robot + offset` falls in any disc. The disc
    /// test runs on robot-relative coordinates.
    #[inline]
    fn covers(&self, robot: (f64, f64), offset: (f64, f64)) -> bool {
        if self.nx == 0 {
            return false;
        }
        let wx = robot.0 + offset.0;
        let wy = robot.1 + offset.1;
        let fx = ((wx - self.origin.0) / self.cell).floor();
        let fy = ((wy - self.origin.1) / self.cell).floor();
        if fx < -1.0 || fy < -1.0 || fx > self.nx as f64 || fy > self.ny as f64 {
            return false;
        }
        let (cx, cy) = (fx as isize, fy as isize);
        for yy in (cy - 1).max(0)..=(cy + 1).min(self.ny as isize - 1) {
            let row = yy as usize * self.nx;
            let xa = (cx - 1).max(0) as usize;
            let xb = (cx + 1).min(self.nx as isize - 1);
            if xb < xa as isize {
                continue;
            }
            let (s, e) = (
                self.starts[row + xa] as usize,
                self.starts[row + xb as usize + 1] as usize,
            );
            for &(px, py, r2) in &self.discs[s..e] {
                let dx = offset.0 - (px - robot.0);
                let dy = offset.1 - (py - robot.1);
                if dx * dx + dy * dy <= r2 {
                    return true;
                }
            }
        }
        false
    }
}

/// Renders masks for one camera, reusing its per-pixel ground footprints.
#[derive(Debug, Clone)]
pub struct Renderer {
    camera: CameraModel,
    table: GroundTable,
}

impl Renderer {
    pub fn new(camera: CameraModel) -> Result<Self, SimError> {
        camera.validate().map_err(SimError::InvalidConfig)?;
        Ok(Self {
            table: camera.ground_table(),
            camera,
        })
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn render(&self, field: &Field, robot: &RobotState) -> BinaryMask {
        let s = self.table.size;
        let (sin, cos) = robot.heading.sin_cos();
        let pos = (robot.x, robot.y);
        let pixels = self
            .table
            .points
            .iter()
            .map(|pt| match *pt {
                Some((f, l)) => field
                    .index
                    .covers(pos, (f * cos - l * sin, f * sin + l * cos)),
                None => false,
            })
            .collect();
        BinaryMask::from_pixels(s, s, pixels).expect("table matches output size")
    }
}

/// One-off render; prefer [`Renderer`] in loops.
pub fn render_mask(
    field: &Field,
    robot: &RobotState,
    cam: &CameraModel,
) -> Result<BinaryMask, SimError> {
    Ok(Renderer::new(*cam)?.render(field, robot))
}

/// Exact image position of a row centreline, in the detector's pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterlineProjection {
    /// Column (pixel-index units) where the line crosses the centre of row 0.
    pub l_x1: f64,
    /// Column where the line crosses the centre of the last row.
    pub l_x2: f64,
    /// `atan((l_x2 - l_x1) / H)` in degrees.
    pub theta_deg: f64,
}

fn world_to_robot(robot: &RobotState, x: f64, y: f64) -> (f64, f64) {
    let (sin, cos) = robot.heading.sin_cos();
    let (dx, dy) = (x - robot.x, y - robot.y);
    (dx * cos + dy * sin, -dx * sin + dy * cos)
}

fn robot_to_world(robot: &RobotState, f: f64, l: f64) -> (f64, f64) {
    let (sin, cos) = robot.heading.sin_cos();
    (robot.x + f * cos - l * sin, robot.y + f * sin + l * cos)
}

/// Where the (infinite) centreline of `row_index` crosses the image row at
/// continuous height `v`, plus the world x of that crossing.
fn crossing(row: &RowLine, robot: &RobotState, cam: &CameraModel, v: f64) -> Option<(f64, f64)> {
    let s = cam.output_size as f64;
    let a = cam.output_to_ground(0.0, v)?;
    let b = cam.output_to_ground(s, v)?;
    let (ax, ay) = robot_to_world(robot, a.0, a.1);
    let (bx, by) = robot_to_world(robot, b.0, b.1);
    if (by - ay).abs() < 1e-12 {
        return None;
    }
    let t = (row.y - ay) / (by - ay);
    let wx = ax + t * (bx - ax);
    let (f, l) = world_to_robot(robot, wx, row.y);
    let (u, _) = cam.project_ground(f, l)?;
    Some((u, wx))
}

/// Analytic image of a row centreline: the ground truth the detector is
/// scored against.
pub fn project_centerline(
    field: &Field,
    robot: &RobotState,
    cam: &CameraModel,
    row_index: usize,
) -> Result<CenterlineProjection, SimError> {
    let row = field
        .rows
        .get(row_index)
        .ok_or(SimError::RowNotVisible(row_index))?;
    let s = cam.output_size as f64;
    let top = crossing(row, robot, cam, 0.5);
    let bottom = crossing(row, robot, cam, s - 0.5);
    let ((u1, x1), (u2, x2)) = match (top, bottom) {
        (Some(t), Some(b)) => (t, b),
        _ => return Err(SimError::RowNotVisible(row_index)),
    };
    let (lo, hi) = (x1.min(x2), x1.max(x2));
    let off_image = (u1 < 0.0 && u2 < 0.0) || (u1 > s && u2 > s);
    if hi < row.x_start || lo > row.x_end || off_image {
        return Err(SimError::RowNotVisible(row_index));
    }
    let l_x1 = u1 - 0.5;
    let l_x2 = u2 - 0.5;
    Ok(CenterlineProjection {
        l_x1,
        l_x2,
        theta_deg: heading_deg(l_x1, l_x2, cam.output_size),
    })
}
