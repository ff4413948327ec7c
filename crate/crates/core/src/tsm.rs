//! Triangle scan: central crop-row extraction from a binary mask.
//!
//! The row is modeled as a straight segment from an anchor `A = (l_x1, 0)` on
//! the top edge to a point `P = (l_x2, H - 1)` on the bottom edge, with `l_x2`
//! restricted to the begin/cease window `[B, C]`.
//!
//! 1. Anchor scan: column sums over the top strip of height `h = round(s * H)`;
//!    the arg-max column is the anchor. A peak below `ratio * h` means the
//!    strip holds no convincing row, and the configured default anchor is used.
//! 2. Line scan: for every `p` in `[B, C]` count foreground pixels on the
//!    rasterized segment `A -> (p, H - 1)`; the arg-max is `l_x2`.
//!
//! Ties go to the lowest index in both scans. The heading is
//! `atan((l_x2 - l_x1) / H)` in degrees, positive when the bottom point lies
//! right of the anchor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BinaryMask;
use crate::raster::SegmentPixels;

/// Image width at which the reference B, C and default anchor are defined.
pub const REFERENCE_WIDTH: usize = 512;
pub const REFERENCE_BEGIN: usize = 190;
pub const REFERENCE_CEASE: usize = 350;
pub const REFERENCE_DEFAULT_ANCHOR: usize = 277;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TsmError {
    #[error("invalid triangle-scan config: {0}")]
    InvalidConfig(String),
    #[error("anchor column {anchor} outside image of width {width}")]
    AnchorOutOfRange { anchor: usize, width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsmConfig {
    /// Anchor strip height as a fraction of the image height.
    pub scale_factor: f64,
    /// First bottom-edge column scanned (B).
    pub begin: usize,
    /// Last bottom-edge column scanned (C), inclusive.
    pub cease: usize,
    /// Minimum anchor peak, as a fraction of the strip height.
    pub anchor_threshold_ratio: f64,
    /// Anchor used when the strip peak is below threshold.
    pub default_anchor: usize,
}

impl Default for TsmConfig {
    fn default() -> Self {
        Self::for_width(REFERENCE_WIDTH)
    }
}

impl TsmConfig {
    /// Reference parameters with B, C and the default anchor scaled linearly
    /// to `width`.
    pub fn for_width(width: usize) -> Self {
        let scale = |v: usize| ((v * width) as f64 / REFERENCE_WIDTH as f64).round() as usize;
        Self {
            scale_factor: 0.2,
            begin: scale(REFERENCE_BEGIN),
            cease: scale(REFERENCE_CEASE),
            anchor_threshold_ratio: 0.4,
            default_anchor: scale(REFERENCE_DEFAULT_ANCHOR),
        }
    }

    pub fn validate(&self, width: usize) -> Result<(), TsmError> {
        if !(self.scale_factor > 0.0 && self.scale_factor <= 1.0) {
            return Err(TsmError::InvalidConfig(format!(
                "scale factor {} outside (0, 1]",
                self.scale_factor
            )));
        }
        if !(0.0..=1.0).contains(&self.anchor_threshold_ratio) {
            return Err(TsmError::InvalidConfig(format!(
                "anchor threshold ratio {} outside [0, 1]",
                self.anchor_threshold_ratio
            )));
        }
        if !(self.begin < self.cease && self.cease < width) {
            return Err(TsmError::InvalidConfig(format!(
                "need begin < cease < width, got {} / {} / {width}",
                self.begin, self.cease
            )));
        }
        if self.default_anchor >= width {
            return Err(TsmError::InvalidConfig(format!(
                "default anchor {} outside width {width}",
                self.default_anchor
            )));
        }
        Ok(())
    }

    /// Anchor strip height for an image of `height` rows.
    pub fn strip_height(&self, height: usize) -> usize {
        ((self.scale_factor * height as f64).round() as usize).clamp(1, height)
    }
}

/// A scan profile normalized by its peak, for plotting and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumCurve {
    /// Column of the first entry.
    pub start: usize,
    pub values: Vec<f64>,
    pub argmax: usize,
}

impl SumCurve {
    fn from_counts(start: usize, counts: &[u32]) -> Self {
        let (argmax, peak) = argmax_lowest(counts);
        let values = if peak == 0 {
            vec![0.0; counts.len()]
        } else {
            counts.iter().map(|&c| c as f64 / peak as f64).collect()
        };
        Self {
            start,
            values,
            argmax,
        }
    }

    /// Column of the peak.
    pub fn argmax_column(&self) -> usize {
        self.start + self.argmax
    }

    /// `index,value` CSV with a header line; index is the image column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.start + i, v));
        }
        out
    }
}

fn argmax_lowest(counts: &[u32]) -> (usize, u32) {
    let mut best = (0, 0);
    for (i, &c) in counts.iter().enumerate() {
        if c > best.1 {
            best = (i, c);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorScan {
    pub anchor: usize,
    /// Raw foreground count in the peak column of the strip.
    pub peak: u32,
    /// `peak / h`.
    pub peak_ratio: f64,
    pub strip_height: usize,
    pub fallback: bool,
    pub curve: SumCurve,
}

pub fn anchor_scan(mask: &BinaryMask, cfg: &TsmConfig) -> Result<AnchorScan, TsmError> {
    cfg.validate(mask.width())?;
    let h = cfg.strip_height(mask.height());
    let mut sums = vec![0u32; mask.width()];
    for y in 0..h {
        for (s, &p) in sums.iter_mut().zip(mask.row(y)) {
            *s += p as u32;
        }
    }
    let curve = SumCurve::from_counts(0, &sums);
    let peak = sums[curve.argmax];
    // a peak of exactly ratio * h passes; compare with a little slack so that
    // products like 0.4 * 100 are not pushed over by rounding
    let fallback = (peak as f64) + 1e-9 < cfg.anchor_threshold_ratio * h as f64;
    Ok(AnchorScan {
        anchor: if fallback {
            cfg.default_anchor
        } else {
            curve.argmax
        },
        peak,
        peak_ratio: peak as f64 / h as f64,
        strip_height: h,
        fallback,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineScan {
    pub lx2: usize,
    /// Foreground count on the winning segment.
    pub peak: u32,
    pub curve: SumCurve,
}

/// Foreground pixels on the segment from `a` to `b`.
#[inline]
pub fn segment_sum(mask: &BinaryMask, a: (i32, i32), b: (i32, i32)) -> u32 {
    let w = mask.width();
    let px = mask.pixels();
    SegmentPixels::new(a, b)
        .map(|(x, y)| px[y as usize * w + x as usize] as u32)
        .sum()
}

pub fn line_scan(mask: &BinaryMask, anchor: usize, cfg: &TsmConfig) -> Result<LineScan, TsmError> {
    cfg.validate(mask.width())?;
    if anchor >= mask.width() {
        return Err(TsmError::AnchorOutOfRange {
            anchor,
            width: mask.width(),
        });
    }
    let bottom = mask.height() as i32 - 1;
    let counts: Vec<u32> = (cfg.begin..=cfg.cease)
        .map(|p| segment_sum(mask, (anchor as i32, 0), (p as i32, bottom)))
        .collect();
    let curve = SumCurve::from_counts(cfg.begin, &counts);
    Ok(LineScan {
        lx2: curve.argmax_column(),
        peak: counts[curve.argmax],
        curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropRowDetection {
    /// Anchor column on the top edge.
    pub l_x1: usize,
    /// Bottom-edge column, within `[begin, cease]`.
    pub l_x2: usize,
    /// Signed angle to the image vertical, degrees.
    pub delta_theta: f64,
    pub anchor_fallback: bool,
    pub anchor_peak_ratio: f64,
    pub line_peak: u32,
}

impl CropRowDetection {
    /// True when the winning segment saw no foreground at all.
    pub fn is_degenerate(&self) -> bool {
        self.line_peak == 0
    }
}

/// `atan((lx2 - lx1) / height)` in degrees.
pub fn heading_deg(lx1: f64, lx2: f64, height: usize) -> f64 {
    ((lx2 - lx1) / height as f64).atan().to_degrees()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTrace {
    pub detection: CropRowDetection,
    pub anchor_curve: SumCurve,
    pub line_curve: SumCurve,
}

pub fn detect(mask: &BinaryMask, cfg: &TsmConfig) -> Result<CropRowDetection, TsmError> {
    detect_traced(mask, cfg).map(|t| t.detection)
}

/// Same as [`detect`], keeping both scan profiles.
pub fn detect_traced(mask: &BinaryMask, cfg: &TsmConfig) -> Result<DetectionTrace, TsmError> {
    let a = anchor_scan(mask, cfg)?;
    let l = line_scan(mask, a.anchor, cfg)?;
    Ok(DetectionTrace {
        detection: CropRowDetection {
            l_x1: a.anchor,
            l_x2: l.lx2,
            delta_theta: heading_deg(a.anchor as f64, l.lx2 as f64, mask.height()),
            anchor_fallback: a.fallback,
            anchor_peak_ratio: a.peak_ratio,
            line_peak: l.peak,
        },
        anchor_curve: a.curve,
        line_curve: l.curve,
    })
}

/// One line of the detections JSON-lines stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image: String,
    pub lx1: i64,
    pub lx2: i64,
    pub theta_deg: f64,
    pub fallback: bool,
}

impl DetectionRecord {
    pub fn new(image: impl Into<String>, det: &CropRowDetection) -> Self {
        Self {
            image: image.into(),
            lx1: det.l_x1 as i64,
            lx2: det.l_x2 as i64,
            theta_deg: det.delta_theta,
            fallback: det.anchor_fallback,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("detection record serializes")
    }
}
