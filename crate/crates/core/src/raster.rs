//! 8-connected digital line segments.

/// Integer pixel coordinate `(x, y)`.
pub type Pixel = (i32, i32);

/// Bresenham walk between two pixels, endpoints included.
///
/// The walk always runs from the endpoint with the smaller `(y, x)` to the
/// larger one, so `a -> b` and `b -> a` visit exactly the same pixel set.
#[derive(Debug, Clone)]
pub struct SegmentPixels {
    x: i32,
    y: i32,
    dx: i32,
    dy: i32,
    sx: i32,
    sy: i32,
    err: i32,
    remaining: u32,
}

impl SegmentPixels {
    pub fn new(a: Pixel, b: Pixel) -> Self {
        let (start, end) = if (a.1, a.0) <= (b.1, b.0) {
            (a, b)
        } else {
            (b, a)
        };
        let dx = (end.0 - start.0).abs();
        let dy = -(end.1 - start.1).abs();
        Self {
            x: start.0,
            y: start.1,
            dx,
            dy,
            sx: if start.0 < end.0 { 1 } else { -1 },
            sy: if start.1 < end.1 { 1 } else { -1 },
            err: dx + dy,
            remaining: dx.max(-dy) as u32 + 1,
        }
    }
}

impl Iterator for SegmentPixels {
    type Item = Pixel;

    #[inline]
    fn next(&mut self) -> Option<Pixel> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let out = (self.x, self.y);
        let e2 = 2 * self.err;
        if e2 >= self.dy {
            self.err += self.dy;
            self.x += self.sx;
        }
        if e2 <= self.dx {
            self.err += self.dx;
            self.y += self.sy;
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining as usize, Some(self.remaining as usize))
    }
}

impl ExactSizeIterator for SegmentPixels {}

/// Pixels of the segment from `a` to `p`, listed starting at `a`.
pub fn rasterize_segment(a: Pixel, p: Pixel) -> Vec<Pixel> {
    let mut pixels: Vec<Pixel> = SegmentPixels::new(a, p).collect();
    if pixels.first() != Some(&a) {
        pixels.reverse();
    }
    pixels
}
