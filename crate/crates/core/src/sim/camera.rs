//! Pitched pinhole camera over a flat ground plane.
//!
//! Robot frame: x forward, y left, z up, origin on the ground below the
//! camera. The camera looks along the robot heading, tilted down by `-pitch`.
//! Images are rendered at `render_width x render_height` and squashed to a
//! square `output_size` image, which stretches row angles the same way the
//! resize in front of the segmentation network does.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub hfov_deg: f64,
    pub vfov_deg: f64,
    /// Negative looks down.
    pub pitch_deg: f64,
    /// Optical centre height above ground, metres.
    pub mount_height: f64,
    pub render_width: usize,
    pub render_height: usize,
    pub output_size: usize,
    /// Render the square output directly with square pixels (vertical FOV on
    /// both axes) instead of squashing the wide frame.
    pub square_direct: bool,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            hfov_deg: 69.0,
            vfov_deg: 42.0,
            pitch_deg: -25.0,
            mount_height: 0.7,
            render_width: 1280,
            render_height: 720,
            output_size: 512,
            square_direct: false,
        }
    }
}

/// Intrinsics of the image actually sampled (render frame, or the square
/// frame when `square_direct`).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Intrinsics {
    width: f64,
    height: f64,
    fx: f64,
    fy: f64,
}

type Vec3 = [f64; 3];

#[inline]
fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), String> {
        for (name, fov) in [("hfov", self.hfov_deg), ("vfov", self.vfov_deg)] {
            if !(fov > 0.0 && fov < 180.0) {
                return Err(format!("{name} {fov} outside (0, 180)"));
            }
        }
        if !(self.pitch_deg < 0.0 && self.pitch_deg > -90.0) {
            return Err(format!(
                "pitch {} must point below the horizon",
                self.pitch_deg
            ));
        }
        if !(self.mount_height > 0.0) {
            return Err("mount height must be positive".into());
        }
        if self.render_width == 0 || self.render_height == 0 || self.output_size == 0 {
            return Err("image sizes must be positive".into());
        }
        Ok(())
    }

    fn intrinsics(&self) -> Intrinsics {
        if self.square_direct {
            let s = self.output_size as f64;
            let f = (s / 2.0) / (self.vfov_deg.to_radians() / 2.0).tan();
            Intrinsics {
                width: s,
                height: s,
                fx: f,
                fy: f,
            }
        } else {
            let (w, h) = (self.render_width as f64, self.render_height as f64);
            Intrinsics {
                width: w,
                height: h,
                fx: (w / 2.0) / (self.hfov_deg.to_radians() / 2.0).tan(),
                fy: (h / 2.0) / (self.vfov_deg.to_radians() / 2.0).tan(),
            }
        }
    }

    /// Camera axes (right, down, optical) in the robot frame.
    fn axes(&self) -> (Vec3, Vec3, Vec3) {
        let (s, c) = self.pitch_deg.to_radians().sin_cos();
        let right = [0.0, -1.0, 0.0];
        let forward = [c, 0.0, s];
        let down = [s, 0.0, -c];
        (right, down, forward)
    }

    /// Maps continuous output coordinates to continuous sampled-frame
    /// coordinates.
    fn output_to_frame(&self, u: f64, v: f64) -> (f64, f64) {
        let k = self.intrinsics();
        let s = self.output_size as f64;
        (u * k.width / s, v * k.height / s)
    }

    fn frame_to_output(&self, u: f64, v: f64) -> (f64, f64) {
        let k = self.intrinsics();
        let s = self.output_size as f64;
        (u * s / k.width, v * s / k.height)
    }

    fn frame_ray(&self, u: f64, v: f64) -> Vec3 {
        let k = self.intrinsics();
        let (r, d, f) = self.axes();
        let a = (u - k.width / 2.0) / k.fx;
        let b = (v - k.height / 2.0) / k.fy;
        [
            f[0] + a * r[0] + b * d[0],
            f[1] + a * r[1] + b * d[1],
            f[2] + a * r[2] + b * d[2],
        ]
    }

    fn ray_to_ground(&self, ray: Vec3) -> Option<(f64, f64)> {
        if ray[2] >= -1e-12 {
            return None;
        }
        let t = self.mount_height / -ray[2];
        Some((t * ray[0], t * ray[1]))
    }

    /// Ground point (forward, left) seen at continuous output coordinates
    /// `(u, v)`, or `None` above the horizon.
    pub fn output_to_ground(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let (fu, fv) = self.output_to_frame(u, v);
        self.ray_to_ground(self.frame_ray(fu, fv))
    }

    /// Continuous coordinates in the sampled frame (before any resize) of a
    /// ground point in the robot frame, or `None` behind the camera.
    pub fn project_ground_to_frame(&self, forward: f64, left: f64) -> Option<(f64, f64)> {
        let k = self.intrinsics();
        let (r, d, f) = self.axes();
        let p = [forward, left, -self.mount_height];
        let z = dot(p, f);
        if z <= 1e-9 {
            return None;
        }
        Some((
            k.width / 2.0 + k.fx * dot(p, r) / z,
            k.height / 2.0 + k.fy * dot(p, d) / z,
        ))
    }

    /// Continuous output coordinates of a ground point in the robot frame.
    pub fn project_ground(&self, forward: f64, left: f64) -> Option<(f64, f64)> {
        self.project_ground_to_frame(forward, left)
            .map(|(u, v)| self.frame_to_output(u, v))
    }

    /// Ground footprint of every output pixel, sampled the way a
    /// nearest-neighbour resize samples the wide render.
    pub fn ground_table(&self) -> GroundTable {
        let k = self.intrinsics();
        let s = self.output_size;
        let src = |i: usize, len: f64| -> f64 {
            if self.square_direct {
                i as f64 + 0.5
            } else {
                // centre of the render pixel the resize picks
                (((i as f64 + 0.5) * len / s as f64).floor()).min(len - 1.0) + 0.5
            }
        };
        let mut points = Vec::with_capacity(s * s);
        for v in 0..s {
            let fv = src(v, k.height);
            for u in 0..s {
                let fu = src(u, k.width);
                points.push(self.ray_to_ground(self.frame_ray(fu, fv)));
            }
        }
        GroundTable { size: s, points }
    }
}

/// Per-pixel ground footprints in the robot frame for one camera.
#[derive(Debug, Clone)]
pub struct GroundTable {
    pub size: usize,
    pub points: Vec<Option<(f64, f64)>>,
}
