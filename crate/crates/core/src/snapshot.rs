//! Smile detection on a still snapshot of the face.
//!
//! The chain is skin mask, adaptive threshold, Canny edges, 8-connected edge
//! linking and the smile rules applied to the mouth region of interest. Face
//! and mouth regions are supplied by the caller.
//!
//! Geometry convention: pixel `(px, py)` covers `[px, px+1) x [py, py+1)`.
//! Segment corners and region anchors are real-valued in that frame, so a
//! scene scaled by an integer factor scales every quantity the rules compare.

use std::collections::VecDeque;

use image::{GrayImage, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::session::Emotion;

/// Longest qualifying edge, as a fraction of the mouth width.
pub const EDGE_LENGTH_FRACTION: f64 = 1.0 / 8.0;
/// `n_e / N` must exceed this for a smile.
pub const RATIO_THRESHOLD: f64 = 0.05;
/// Snapshot spacing, in seconds.
pub const SNAPSHOT_INTERVAL: f64 = 5.0;

const GAUSSIAN_SIGMA: f64 = 1.4;
const GAUSSIAN_RADIUS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub const fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn right(&self) -> u32 {
        self.x + self.width
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn contains(&self, px: u32, py: u32) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        u64::from(self.x) + u64::from(self.width) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.height) <= u64::from(height)
    }

    fn check_in(&self, width: u32, height: u32, what: &str) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Region(format!("{what} {self:?} is empty")));
        }
        if !self.fits_within(width, height) {
            return Err(Error::Region(format!(
                "{what} {self:?} exceeds the {width}x{height} raster"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotRoi {
    pub face: Rect,
    pub mouth: Rect,
}

/// Explicit RGB skin rule.
pub fn is_skin([r, g, b]: [u8; 3]) -> bool {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    r > 95 && g > 40 && b > 20 && max - min > 15 && r.abs_diff(g) > 15 && r > g && r > b
}

/// 255 where a pixel inside `face` is skin, 0 elsewhere.
pub fn skin_mask(rgb: &RgbImage, face: Rect) -> Result<GrayImage> {
    face.check_in(rgb.width(), rgb.height(), "face region")?;
    let mut mask = GrayImage::new(rgb.width(), rgb.height());
    for y in face.y..face.bottom() {
        for x in face.x..face.right() {
            if is_skin(rgb.get_pixel(x, y).0) {
                mask.put_pixel(x, y, Luma([255]));
            }
        }
    }
    Ok(mask)
}

/// Luma with weights 0.299, 0.587, 0.114, rounded to nearest.
pub fn grayscale(rgb: &RgbImage) -> GrayImage {
    GrayImage::from_fn(rgb.width(), rgb.height(), |x, y| {
        let [r, g, b] = rgb.get_pixel(x, y).0;
        let v = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
        Luma([v.round().clamp(0.0, 255.0) as u8])
    })
}

/// Sets a pixel iff its value exceeds the mean of its `window` x `window`
/// neighbourhood minus `offset`. Borders replicate the edge pixels.
pub fn adaptive_threshold(gray: &GrayImage, window: u32, offset: f64) -> Result<GrayImage> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::Parameter(format!(
            "adaptive window must be odd and >= 3, got {window}"
        )));
    }
    let (w, h) = (gray.width() as i64, gray.height() as i64);
    let mut out = GrayImage::new(gray.width(), gray.height());
    if w == 0 || h == 0 {
        return Ok(out);
    }
    let r = i64::from(window / 2);
    // Integral image over the replicate-padded raster.
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    let mut integral = vec![0u64; ((pw + 1) * (ph + 1)) as usize];
    let at = |x: i64, y: i64| (y * (pw + 1) + x) as usize;
    for py in 0..ph {
        let sy = (py - r).clamp(0, h - 1) as u32;
        let mut row_sum = 0u64;
        for px in 0..pw {
            let sx = (px - r).clamp(0, w - 1) as u32;
            row_sum += u64::from(gray.get_pixel(sx, sy).0[0]);
            integral[at(px + 1, py + 1)] = integral[at(px + 1, py)] + row_sum;
        }
    }
    let area = f64::from(window * window);
    for y in 0..h {
        for x in 0..w {
            // Window in padded coordinates: [x, x + window) x [y, y + window).
            let (x0, y0, x1, y1) = (x, y, x + 2 * r + 1, y + 2 * r + 1);
            let sum = integral[at(x1, y1)] + integral[at(x0, y0)]
                - integral[at(x0, y1)]
                - integral[at(x1, y0)];
            let mean = sum as f64 / area;
            let v = f64::from(gray.get_pixel(x as u32, y as u32).0[0]);
            if v > mean - offset {
                out.put_pixel(x as u32, y as u32, Luma([255]));
            }
        }
    }
    Ok(out)
}

/// Smoothed Sobel gradients of a raster.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub width: u32,
    pub height: u32,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl GradientField {
    pub fn magnitude_at(&self, x: u32, y: u32) -> f64 {
        self.magnitude[(y * self.width + x) as usize]
    }
}

fn gaussian_kernel() -> [f64; 2 * GAUSSIAN_RADIUS + 1] {
    let mut k = [0.0; 2 * GAUSSIAN_RADIUS + 1];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - GAUSSIAN_RADIUS as f64;
        *v = (-d * d / (2.0 * GAUSSIAN_SIGMA * GAUSSIAN_SIGMA)).exp();
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// 5x5 Gaussian (sigma 1.4) then 3x3 Sobel, both with replicated borders.
pub fn smoothed_gradient(gray: &GrayImage) -> GradientField {
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let kernel = gaussian_kernel();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let src: Vec<f64> = gray.pixels().map(|p| f64::from(p.0[0])).collect();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * src[y * w + clamp(x as isize + i as isize - 2, w)])
                .sum();
        }
    }
    let mut smooth = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            smooth[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * tmp[clamp(y as isize + i as isize - 2, h) * w + x])
                .sum();
        }
    }
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut magnitude = vec![0.0; w * h];
    for y in 0..h {
        let (ym, yp) = (clamp(y as isize - 1, h), clamp(y as isize + 1, h));
        for x in 0..w {
            let (xm, xp) = (clamp(x as isize - 1, w), clamp(x as isize + 1, w));
            let s = |xx: usize, yy: usize| smooth[yy * w + xx];
            let dx = (s(xp, ym) + 2.0 * s(xp, y) + s(xp, yp)) - (s(xm, ym) + 2.0 * s(xm, y) + s(xm, yp));
            let dy = (s(xm, yp) + 2.0 * s(x, yp) + s(xp, yp)) - (s(xm, ym) + 2.0 * s(x, ym) + s(xp, ym));
            let i = y * w + x;
            gx[i] = dx;
            gy[i] = dy;
            magnitude[i] = dx.hypot(dy);
        }
    }
    GradientField {
        width: w as u32,
        height: h as u32,
        gx,
        gy,
        magnitude,
    }
}

/// Canny edge map: 255 on edge pixels, 0 elsewhere.
///
/// Gaussian smoothing and Sobel gradients, non-maximum suppression along the
/// quantized gradient direction, then double thresholding with 8-connected
/// hysteresis. On a plateau of two equal maxima the lower-coordinate pixel
/// is kept, so ideal steps give one-pixel-wide edges.
pub fn canny_edges(gray: &GrayImage, low: f64, high: f64) -> Result<GrayImage> {
    if !(low >= 0.0 && low <= high) {
        return Err(Error::Parameter(format!(
            "canny thresholds need 0 <= low <= high, got low={low} high={high}"
        )));
    }
    let field = smoothed_gradient(gray);
    let (w, h) = (field.width as isize, field.height as isize);
    let mag = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            field.magnitude[(y * w + x) as usize]
        }
    };
    let mut thinned = vec![0.0; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let m = field.magnitude[i];
            if m <= 0.0 {
                continue;
            }
            let mut angle = field.gy[i].atan2(field.gx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            // (behind, ahead) neighbours along the gradient direction.
            let ((bx, by), (ax, ay)) = if !(22.5..157.5).contains(&angle) {
                ((x - 1, y), (x + 1, y))
            } else if angle < 67.5 {
                ((x - 1, y - 1), (x + 1, y + 1))
            } else if angle < 112.5 {
                ((x, y - 1), (x, y + 1))
            } else {
                ((x + 1, y - 1), (x - 1, y + 1))
            };
            if m > mag(bx, by) && m >= mag(ax, ay) {
                thinned[i] = m;
            }
        }
    }
    let mut out = GrayImage::new(field.width, field.height);
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            if thinned[i] < high || thinned[i] <= 0.0 || out.get_pixel(x as u32, y as u32).0[0] != 0 {
                continue;
            }
            out.put_pixel(x as u32, y as u32, Luma([255]));
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                for (nx, ny) in neighbours8(cx, cy) {
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = (ny * w + nx) as usize;
                    if thinned[j] > 0.0
                        && thinned[j] >= low
                        && out.get_pixel(nx as u32, ny as u32).0[0] == 0
                    {
                        out.put_pixel(nx as u32, ny as u32, Luma([255]));
                        stack.push((nx, ny));
                    }
                }
            }
        }
    }
    Ok(out)
}

fn neighbours8(x: isize, y: isize) -> [(isize, isize); 8] {
    [
        (x - 1, y - 1),
        (x, y - 1),
        (x + 1, y - 1),
        (x - 1, y),
        (x + 1, y),
        (x - 1, y + 1),
        (x, y + 1),
        (x + 1, y + 1),
    ]
}

/// An 8-connected chain of edge pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSegment {
    pixels: Vec<(u32, u32)>,
    min: (u32, u32),
    max: (u32, u32),
}

impl EdgeSegment {
    /// Panics on an empty pixel list.
    pub fn new(pixels: Vec<(u32, u32)>) -> Self {
        assert!(!pixels.is_empty(), "edge segment needs at least one pixel");
        let min = pixels
            .iter()
            .fold((u32::MAX, u32::MAX), |(a, b), &(x, y)| (a.min(x), b.min(y)));
        let max = pixels
            .iter()
            .fold((0, 0), |(a, b), &(x, y)| (a.max(x), b.max(y)));
        Self { pixels, min, max }
    }

    /// Horizontal run of `length` pixels starting at `(x, y)`.
    pub fn horizontal(x: u32, y: u32, length: u32) -> Self {
        Self::new((x..x + length).map(|px| (px, y)).collect())
    }

    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixels
    }

    /// Pixel count `|e|`.
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Bounding box in pixel units.
    pub fn bounds(&self) -> Rect {
        Rect::new(
            self.min.0,
            self.min.1,
            self.max.0 - self.min.0 + 1,
            self.max.1 - self.min.1 + 1,
        )
    }

    /// Top-left corner `(x1, y1)` of the covered area.
    pub fn min_corner(&self) -> (f64, f64) {
        (f64::from(self.min.0), f64::from(self.min.1))
    }

    /// Bottom-right corner `(x2, y2)` of the covered area (exclusive).
    pub fn max_corner(&self) -> (f64, f64) {
        (f64::from(self.max.0) + 1.0, f64::from(self.max.1) + 1.0)
    }

    fn center_x(&self) -> f64 {
        (self.min_corner().0 + self.max_corner().0) / 2.0
    }
}

/// 8-connected components of the edge pixels inside `region` (clipped to the map).
///
/// Segments are ordered by their first pixel in raster order; each chain
/// lists its pixels in breadth-first order from that pixel.
pub fn link_edges(edges: &GrayImage, region: Rect) -> Vec<EdgeSegment> {
    let x1 = region.right().min(edges.width());
    let y1 = region.bottom().min(edges.height());
    let (x0, y0) = (region.x.min(x1), region.y.min(y1));
    let (w, h) = ((x1 - x0) as usize, (y1 - y0) as usize);
    let mut seen = vec![false; w * h];
    let is_edge = |x: u32, y: u32| edges.get_pixel(x, y).0[0] != 0;
    let mut segments = Vec::new();
    let mut queue = VecDeque::new();
    for y in y0..y1 {
        for x in x0..x1 {
            let i = (y - y0) as usize * w + (x - x0) as usize;
            if seen[i] || !is_edge(x, y) {
                continue;
            }
            seen[i] = true;
            queue.push_back((x, y));
            let mut pixels = Vec::new();
            while let Some((cx, cy)) = queue.pop_front() {
                pixels.push((cx, cy));
                for (nx, ny) in neighbours8(cx as isize, cy as isize) {
                    if nx < x0 as isize || ny < y0 as isize || nx >= x1 as isize || ny >= y1 as isize {
                        continue;
                    }
                    let (nx, ny) = (nx as u32, ny as u32);
                    let j = (ny - y0) as usize * w + (nx - x0) as usize;
                    if !seen[j] && is_edge(nx, ny) {
                        seen[j] = true;
                        queue.push_back((nx, ny));
                    }
                }
            }
            segments.push(EdgeSegment::new(pixels));
        }
    }
    segments
}

/// The mouth region with the anchors the smile rules compare against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MouthRegion {
    bounds: Rect,
}

impl MouthRegion {
    /// Requires width >= 8 and height >= 2.
    pub fn new(bounds: Rect) -> Result<Self> {
        if bounds.width < 8 || bounds.height < 2 {
            return Err(Error::Region(format!(
                "mouth region {bounds:?} must be at least 8 wide and 2 high"
            )));
        }
        Ok(Self { bounds })
    }

    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    /// `m_l`, the region width.
    pub fn width(&self) -> f64 {
        f64::from(self.bounds.width)
    }

    /// Edge length threshold `t = m_l / 8`.
    pub fn length_threshold(&self) -> f64 {
        self.width() * EDGE_LENGTH_FRACTION
    }

    fn mid_x(&self) -> f64 {
        f64::from(self.bounds.x) + self.width() / 2.0
    }

    fn mid_y(&self) -> f64 {
        f64::from(self.bounds.y) + f64::from(self.bounds.height) / 2.0
    }

    /// Centroid `(m_x1, m_y1)` of the left half.
    pub fn left_anchor(&self) -> (f64, f64) {
        (f64::from(self.bounds.x) + self.width() / 4.0, self.mid_y())
    }

    /// Centroid `(m_x2, m_y2)` of the right half.
    pub fn right_anchor(&self) -> (f64, f64) {
        (f64::from(self.bounds.x) + 3.0 * self.width() / 4.0, self.mid_y())
    }

    /// A segment belongs to the half containing its bounding-box centre.
    pub fn is_left(&self, segment: &EdgeSegment) -> bool {
        segment.center_x() < self.mid_x()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmileVerdict {
    pub is_smile: bool,
    /// Qualifying edges `n_e`.
    pub qualifying: usize,
    /// All edges `N` in the region.
    pub total: usize,
    /// `n_e / N`, 0 when there are no edges.
    pub ratio: f64,
    pub left_hits: usize,
    pub right_hits: usize,
}

/// Applies the smile rules.
///
/// A left-half edge qualifies iff `|e| < t`, `x1 > m_x1` and `y1 > m_y1`
/// (its top-left corner lies below-right of the left anchor). A right-half
/// edge qualifies iff `|e| < t`, `x2 > m_x2` and `y2 > m_y2` (bottom-right
/// corner beyond the right anchor). A smile needs a qualifying edge in each
/// half and `n_e / N > 0.05`.
pub fn detect_smile(segments: &[EdgeSegment], mouth: &MouthRegion) -> Result<SmileVerdict> {
    let t = mouth.length_threshold();
    let (lx, ly) = mouth.left_anchor();
    let (rx, ry) = mouth.right_anchor();
    let b = mouth.bounds();
    let (mut left_hits, mut right_hits) = (0, 0);
    for s in segments {
        let (x1, y1) = s.min_corner();
        let (x2, y2) = s.max_corner();
        if x1 < f64::from(b.x) || y1 < f64::from(b.y) || x2 > f64::from(b.right()) || y2 > f64::from(b.bottom()) {
            return Err(Error::Region(format!(
                "edge segment {:?} lies outside the mouth region {b:?}",
                s.bounds()
            )));
        }
        let short = (s.len() as f64) < t;
        if mouth.is_left(s) {
            if short && x1 > lx && y1 > ly {
                left_hits += 1;
            }
        } else if short && x2 > rx && y2 > ry {
            right_hits += 1;
        }
    }
    let qualifying = left_hits + right_hits;
    let total = segments.len();
    let ratio = if total == 0 {
        0.0
    } else {
        qualifying as f64 / total as f64
    };
    Ok(SmileVerdict {
        is_smile: left_hits > 0 && right_hits > 0 && ratio > RATIO_THRESHOLD,
        qualifying,
        total,
        ratio,
        left_hits,
        right_hits,
    })
}

/// Indices of the frames to snapshot: the first frame at or after each
/// multiple of `interval` seconds from the first timestamp. A frame is
/// emitted at most once even when a gap spans several multiples.
pub fn snapshot_schedule(timestamps: &[f64], interval: f64) -> Result<Vec<usize>> {
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(Error::Parameter(format!(
            "snapshot interval must be positive, got {interval}"
        )));
    }
    if let Some(w) = timestamps.windows(2).find(|w| !(w[1] >= w[0])) {
        return Err(Error::Parameter(format!(
            "timestamps must be non-decreasing ({} then {})",
            w[0], w[1]
        )));
    }
    let Some(&start) = timestamps.first() else {
        return Ok(Vec::new());
    };
    let mut due = 0.0;
    let mut picks = Vec::new();
    for (i, &t) in timestamps.iter().enumerate() {
        let elapsed = t - start;
        if elapsed >= due {
            picks.push(i);
            due = ((elapsed / interval).floor() + 1.0) * interval;
        }
    }
    Ok(picks)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateParams {
    pub canny_low: f64,
    pub canny_high: f64,
    pub window: u32,
    pub offset: f64,
}

impl Default for TemplateParams {
    fn default() -> Self {
        Self {
            canny_low: 50.0,
            canny_high: 150.0,
            window: 11,
            offset: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateOutcome {
    /// Happiness on a smile; `None` (abstain) otherwise.
    pub decision: Option<Emotion>,
    pub verdict: SmileVerdict,
    pub segments: Vec<EdgeSegment>,
}

/// Foreground of the face: skin pixels that also pass the adaptive threshold.
pub fn segment_face(rgb: &RgbImage, face: Rect, params: &TemplateParams) -> Result<GrayImage> {
    let skin = skin_mask(rgb, face)?;
    let thresholded = adaptive_threshold(&grayscale(rgb), params.window, params.offset)?;
    let mut out = GrayImage::new(rgb.width(), rgb.height());
    for (o, (s, t)) in out.pixels_mut().zip(skin.pixels().zip(thresholded.pixels())) {
        if s.0[0] != 0 && t.0[0] != 0 {
            *o = Luma([255]);
        }
    }
    Ok(out)
}

/// Runs the whole chain on one snapshot.
pub fn template_classify(
    rgb: &RgbImage,
    roi: &SnapshotRoi,
    params: &TemplateParams,
) -> Result<TemplateOutcome> {
    roi.mouth.check_in(rgb.width(), rgb.height(), "mouth region")?;
    let mouth = MouthRegion::new(roi.mouth)?;
    let segmented = segment_face(rgb, roi.face, params)?;
    let edges = canny_edges(&segmented, params.canny_low, params.canny_high)?;
    let segments = link_edges(&edges, roi.mouth);
    let verdict = detect_smile(&segments, &mouth)?;
    Ok(TemplateOutcome {
        decision: verdict.is_smile.then_some(Emotion::Happiness),
        verdict,
        segments,
    })
}
