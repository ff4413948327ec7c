//! Binary crop-row masks: storage, PGM (P5) I/O and synthetic degradation.
//!
//! A mask is the only input the row detector sees. Foreground (`true`) marks
//! pixels predicted as crop row. Files are 8-bit binary PGM; on load every gray
//! value at or above the threshold (128 by default) becomes foreground, and on
//! save foreground is written as 255 and background as 0.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Gray level at or above which a pixel loads as foreground.
pub const DEFAULT_THRESHOLD: u8 = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MaskError {
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("truncated PGM data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("mask dimensions must be positive, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("pixel buffer has {found} entries, expected {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("invalid degradation spec: {0}")]
    InvalidDegradeSpec(String),
}

/// Row-major W×H boolean raster.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    pixels: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("foreground", &self.count_foreground())
            .finish()
    }
}

impl BinaryMask {
    /// All-background mask.
    pub fn new(width: usize, height: usize) -> Result<Self, MaskError> {
        Self::filled(width, height, false)
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyDimensions { width, height });
        }
        Ok(Self {
            width,
            height,
            pixels: vec![value; width * height],
        })
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<bool>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyDimensions { width, height });
        }
        if pixels.len() != width * height {
            return Err(MaskError::SizeMismatch {
                expected: width * height,
                found: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.pixels[y * self.width + x] = value;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[bool] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn count_foreground(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    /// True when no pixel in rows `[y0, y1)` is foreground.
    pub fn rows_empty(&self, y0: usize, y1: usize) -> bool {
        let y1 = y1.min(self.height);
        if y0 >= y1 {
            return true;
        }
        !self.pixels[y0 * self.width..y1 * self.width]
            .iter()
            .any(|&p| p)
    }
}

/// Decodes a P5 PGM with the default threshold.
pub fn load_mask(bytes: &[u8]) -> Result<BinaryMask, MaskError> {
    load_mask_with_threshold(bytes, DEFAULT_THRESHOLD)
}

/// Decodes a P5 PGM; gray values (rescaled to 0..=255 when maxval < 255) at or
/// above `threshold` become foreground.
pub fn load_mask_with_threshold(bytes: &[u8], threshold: u8) -> Result<BinaryMask, MaskError> {
    let gray = load_gray(bytes)?;
    let pixels = gray.data.iter().map(|&v| v >= threshold).collect();
    BinaryMask::from_pixels(gray.width, gray.height, pixels)
}

/// 8-bit gray raster, normalized to maxval 255.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// Decodes a P5 PGM into gray levels on a 0..=255 scale.
pub fn load_gray(bytes: &[u8]) -> Result<GrayImage, MaskError> {
    let mut header = HeaderReader { bytes, pos: 0 };
    let magic = header.token()?;
    if magic != b"P5" {
        return Err(MaskError::MalformedHeader(format!(
            "expected magic P5, found {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(MaskError::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > 255 {
        return Err(MaskError::MalformedHeader(format!(
            "maxval {maxval} unsupported (8-bit only)"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => {
            return Err(MaskError::MalformedHeader(
                "missing whitespace after maxval".into(),
            ))
        }
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| MaskError::MalformedHeader("dimensions overflow".into()))?;
    let payload = &bytes[header.pos..];
    if payload.len() < expected {
        return Err(MaskError::TruncatedData {
            expected,
            found: payload.len(),
        });
    }
    let data = if maxval == 255 {
        payload[..expected].to_vec()
    } else {
        payload[..expected]
            .iter()
            .map(|&v| ((v.min(maxval as u8) as usize * 255 + maxval / 2) / maxval) as u8)
            .collect()
    };
    Ok(GrayImage {
        width,
        height,
        data,
    })
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8], MaskError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(MaskError::MalformedHeader(
                "unexpected end of header".into(),
            ));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize, MaskError> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                MaskError::MalformedHeader(format!(
                    "invalid {what}: {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

/// Encodes as P5 with maxval 255; foreground is 255, background 0.
pub fn save_mask(mask: &BinaryMask) -> Vec<u8> {
    let payload = mask.pixels.iter().map(|&p| if p { 255 } else { 0 });
    encode_pgm(mask.width, mask.height, payload)
}

pub fn save_gray(image: &GrayImage) -> Vec<u8> {
    encode_pgm(image.width, image.height, image.data.iter().copied())
}

fn encode_pgm(width: usize, height: usize, payload: impl Iterator<Item = u8>) -> Vec<u8> {
    let header = format!("P5\n{width} {height}\n255\n");
    let mut out = Vec::with_capacity(header.len() + width * height);
    out.extend_from_slice(header.as_bytes());
    out.extend(payload);
    out
}

/// Knobs for imitating imperfect segmentation output.
///
/// Applied in order: disc dilation, block dropout on foreground, background
/// speckle. Everything is driven by `seed`, so a spec always produces the same
/// output for the same mask.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DegradeSpec {
    pub dropout_block_size: usize,
    pub dropout_probability: f64,
    pub speckle_probability: f64,
    pub dilation_radius: usize,
    pub seed: u64,
}

impl Default for DegradeSpec {
    fn default() -> Self {
        Self::identity()
    }
}

impl DegradeSpec {
    pub fn identity() -> Self {
        Self {
            dropout_block_size: 8,
            dropout_probability: 0.0,
            speckle_probability: 0.0,
            dilation_radius: 0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), MaskError> {
        if self.dropout_block_size == 0 {
            return Err(MaskError::InvalidDegradeSpec(
                "dropout_block_size must be >= 1".into(),
            ));
        }
        for (name, p) in [
            ("dropout_probability", self.dropout_probability),
            ("speckle_probability", self.speckle_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(MaskError::InvalidDegradeSpec(format!(
                    "{name} = {p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Dilates, drops foreground blocks, then adds background speckle.
pub fn degrade(mask: &BinaryMask, spec: &DegradeSpec) -> Result<BinaryMask, MaskError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = dilate(mask, spec.dilation_radius);
    let (w, h) = (out.width, out.height);

    if spec.dropout_probability > 0.0 {
        let bs = spec.dropout_block_size;
        for by in (0..h).step_by(bs) {
            for bx in (0..w).step_by(bs) {
                // one draw per block regardless of content keeps the stream aligned
                if rng.gen::<f64>() < spec.dropout_probability {
                    for y in by..(by + bs).min(h) {
                        out.pixels[y * w + bx..y * w + (bx + bs).min(w)].fill(false);
                    }
                }
            }
        }
    }

    if spec.speckle_probability > 0.0 {
        for p in out.pixels.iter_mut() {
            let flip = rng.gen::<f64>() < spec.speckle_probability;
            if !*p && flip {
                *p = true;
            }
        }
    }
    Ok(out)
}

/// Morphological dilation with a disc of the given radius.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width, mask.height);
    let r = radius as isize;
    // horizontal half-extent of the disc at each vertical offset
    let spans: Vec<isize> = (-r..=r)
        .map(|dy| {
            let rem = (r * r - dy * dy) as f64;
            rem.sqrt().floor() as isize
        })
        .collect();
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if !mask.pixels[y * w + x] {
                continue;
            }
            for (i, &span) in spans.iter().enumerate() {
                let yy = y as isize + i as isize - r;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                let x0 = (x as isize - span).max(0) as usize;
                let x1 = (x as isize + span).min(w as isize - 1) as usize;
                out[yy as usize * w + x0..=yy as usize * w + x1].fill(true);
            }
        }
    }
    BinaryMask {
        width: w,
        height: h,
        pixels: out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm(w: usize, h: usize, data: &[u8]) -> Vec<u8> {
        let mut v = format!("P5\n{w} {h}\n255\n").into_bytes();
        v.extend_from_slice(data);
        v
    }

    #[test]
    fn loads_two_by_two() {
        let m = load_mask(&pgm(2, 2, &[255, 0, 0, 255])).unwrap();
        assert_eq!(m.pixels(), &[true, false, false, true]);
    }

    #[test]
    fn threshold_is_inclusive_at_128() {
        let m = load_mask(&pgm(3, 1, &[127, 128, 200])).unwrap();
        assert_eq!(m.pixels(), &[false, true, true]);
        let m = load_mask_with_threshold(&pgm(3, 1, &[127, 128, 200]), 200).unwrap();
        assert_eq!(m.pixels(), &[false, false, true]);
    }

    #[test]
    fn all_zero_large_mask_is_empty() {
        let m = load_mask(&pgm(512, 512, &vec![0; 512 * 512])).unwrap();
        assert_eq!(m.count_foreground(), 0);
        assert_eq!((m.width(), m.height()), (512, 512));
    }

    #[test]
    fn header_comments_are_accepted() {
        let bytes = b"P5\n# made by hand\n2 # width\n1\n255\n\xff\x00";
        let m = load_mask(bytes).unwrap();
        assert_eq!(m.pixels(), &[true, false]);
    }

    #[test]
    fn save_emits_canonical_header_and_payload() {
        let m = BinaryMask::from_pixels(2, 2, vec![true, false, false, true]).unwrap();
        assert_eq!(save_mask(&m), pgm(2, 2, &[255, 0, 0, 255]));
    }

    #[test]
    fn full_foreground_payload() {
        let m = BinaryMask::filled(512, 512, true).unwrap();
        let bytes = save_mask(&m);
        let payload = &bytes[b"P5\n512 512\n255\n".len()..];
        assert_eq!(payload.len(), 262_144);
        assert!(payload.iter().all(|&b| b == 255));
    }

    #[test]
    fn rejects_malformed_headers() {
        for bad in [
            &b"P2\n2 2\n255\n\0\0\0\0"[..],
            b"P5\n2\n",
            b"P5\nx 2\n255\n\0\0\0\0",
            b"P5\n2 2\n65535\n\0\0\0\0\0\0\0\0",
            b"P5\n0 2\n255\n",
            b"P5\n2 2\n255",
            b"",
        ] {
            assert!(
                matches!(load_mask(bad), Err(MaskError::MalformedHeader(_))),
                "accepted {:?}",
                String::from_utf8_lossy(bad)
            );
        }
    }

    #[test]
    fn rejects_truncated_payload() {
        let err = load_mask(&pgm(4, 4, &[0; 10])).unwrap_err();
        assert_eq!(
            err,
            MaskError::TruncatedData {
                expected: 16,
                found: 10
            }
        );
    }

    #[test]
    fn smaller_maxval_is_rescaled() {
        let bytes = b"P5\n3 1\n1\n\x00\x01\x01";
        let m = load_mask(bytes).unwrap();
        assert_eq!(m.pixels(), &[false, true, true]);
    }

    #[test]
    fn identity_degrade_is_noop() {
        let mut m = BinaryMask::new(16, 16).unwrap();
        for i in 0..16 {
            m.set(i, i, true);
        }
        let out = degrade(&m, &DegradeSpec::identity()).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn degrade_is_deterministic() {
        let m = BinaryMask::filled(32, 32, true).unwrap();
        let spec = DegradeSpec {
            dropout_block_size: 4,
            dropout_probability: 0.3,
            speckle_probability: 0.1,
            dilation_radius: 1,
            seed: 99,
        };
        assert_eq!(degrade(&m, &spec).unwrap(), degrade(&m, &spec).unwrap());
    }

    #[test]
    fn full_dropout_clears_every_8x8_mask() {
        // every one of the 2^8 row patterns, replicated down the columns
        let spec = DegradeSpec {
            dropout_block_size: 8,
            dropout_probability: 1.0,
            speckle_probability: 0.0,
            dilation_radius: 0,
            seed: 7,
        };
        for pattern in 0u32..256 {
            let pixels = (0..64).map(|i| pattern >> (i % 8) & 1 == 1).collect();
            let m = BinaryMask::from_pixels(8, 8, pixels).unwrap();
            assert_eq!(degrade(&m, &spec).unwrap().count_foreground(), 0);
        }
    }

    #[test]
    fn dilation_grows_a_point_into_a_disc() {
        let mut m = BinaryMask::new(9, 9).unwrap();
        m.set(4, 4, true);
        let d = dilate(&m, 2);
        // lattice points with dx^2 + dy^2 <= 4
        assert_eq!(d.count_foreground(), 13);
        assert!(d.get(4, 2) && d.get(6, 4) && !d.get(6, 6));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = DegradeSpec::identity();
        s.dropout_block_size = 0;
        assert!(s.validate().is_err());
        let mut s = DegradeSpec::identity();
        s.speckle_probability = 1.5;
        assert!(s.validate().is_err());
    }
}
