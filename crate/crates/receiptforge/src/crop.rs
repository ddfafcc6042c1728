//! Receipt localization: a coarse crop from the positive heatmap cells,
//! then a refined crop from the bright/dark step-edge detector and a
//! rotation-based rectification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::HeatMap;
use crate::detect::DetectionConfig;
use crate::geom::{BBox, Quad};
use crate::raster::{rotate, GrayImage};

#[derive(Debug, Error, PartialEq)]
pub enum CropError {
    #[error("no positive heatmap cells to crop from")]
    NoReceiptRegion,
    #[error("could not find the {0:?} edge")]
    EdgeNotFound(EdgeSide),
    #[error("edge intersections form a degenerate quadrilateral")]
    DegenerateQuad,
    #[error("heatmap lacks the target class")]
    ClassMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeSide {
    Left,
    Right,
    Top,
    Bottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeOrientation {
    QuasiVertical,
    QuasiHorizontal,
}

/// One fitted receipt edge. Quasi-vertical lines are `x = slope*y + offset`,
/// quasi-horizontal lines `y = slope*x + offset`; the angle is the signed
/// deviation from the nominal axis in degrees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeLine {
    pub side: EdgeSide,
    pub orientation: EdgeOrientation,
    pub support: Vec<(f64, f64)>,
    pub slope: f64,
    pub offset: f64,
    pub angle_degrees: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CropConfig {
    /// Wide-crop dilation as a fraction of each dimension.
    pub margin: f64,
    /// Mean-filter strip width in pixels.
    pub strip_width: usize,
    /// Minimum bright-minus-dark contrast for an edge point, gray levels.
    pub contrast_delta: f64,
    /// Upper bound on |angle from axis| for an accepted edge, degrees.
    pub quasi_angle_max: f64,
    /// Minimum inlier support per edge after outlier rejection.
    pub min_inliers: usize,
    /// Number of scanlines sampled per edge.
    pub scanlines: usize,
}

impl Default for CropConfig {
    fn default() -> Self {
        CropConfig {
            margin: 0.05,
            strip_width: 7,
            contrast_delta: 40.0,
            quasi_angle_max: 20.0,
            min_inliers: 8,
            scanlines: 48,
        }
    }
}

/// Affine map from source-image coordinates into the rectified crop:
/// rotation about the source center followed by the crop translation.
#[derive(Debug, Clone, Serialize)]
pub struct SceneMap {
    /// Rotation applied to the source image, degrees.
    pub rotation: f64,
    pub src_w: usize,
    pub src_h: usize,
    pub rot_w: usize,
    pub rot_h: usize,
    /// Crop box inside the rotated frame.
    pub crop: BBox,
}

impl SceneMap {
    pub fn identity_crop(src_w: usize, src_h: usize, crop: BBox) -> Self {
        SceneMap { rotation: 0.0, src_w, src_h, rot_w: src_w, rot_h: src_h, crop }
    }

    pub fn map_point(&self, x: f64, y: f64) -> (f64, f64) {
        let rad = self.rotation.to_radians();
        let (sin, cos) = rad.sin_cos();
        let (cx, cy) = ((self.src_w as f64 - 1.0) / 2.0, (self.src_h as f64 - 1.0) / 2.0);
        let (ox, oy) = ((self.rot_w as f64 - 1.0) / 2.0, (self.rot_h as f64 - 1.0) / 2.0);
        let (dx, dy) = (x - cx, y - cy);
        let rx = cos * dx - sin * dy + ox;
        let ry = sin * dx + cos * dy + oy;
        (rx - self.crop.x as f64, ry - self.crop.y as f64)
    }

    /// Axis-aligned bounding box of the mapped corners.
    pub fn map_box(&self, b: &BBox) -> BBox {
        let corners = [
            (b.x as f64, b.y as f64),
            (b.right() as f64, b.y as f64),
            (b.right() as f64, b.bottom() as f64),
            (b.x as f64, b.bottom() as f64),
        ];
        let mapped: Vec<(f64, f64)> = corners.iter().map(|&(x, y)| self.map_point(x, y)).collect();
        let x0 = mapped.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let y0 = mapped.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let x1 = mapped.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let y1 = mapped.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        BBox::new(
            x0.round() as i64,
            y0.round() as i64,
            ((x1 - x0).round() as i64).max(1),
            ((y1 - y0).round() as i64).max(1),
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CropResult {
    pub wide_box: BBox,
    pub quad: Quad,
    #[serde(skip)]
    pub rectified: GrayImage,
    pub skew_angle: f64,
    /// Source-to-rectified coordinate transform.
    pub map: SceneMap,
    /// True when edge refinement failed and the wide crop was used as-is.
    pub fallback: bool,
}

/// Bounding box of all positive target-class cells mapped back to pixels,
/// dilated by `margin` and clamped to the image bounds.
pub fn wide_crop(
    hm: &HeatMap,
    cfg: &DetectionConfig,
    margin: f64,
    img_w: usize,
    img_h: usize,
) -> Result<BBox, CropError> {
    let class = hm.class_index(&cfg.target_class).ok_or(CropError::ClassMismatch)?;
    let mut acc: Option<BBox> = None;
    for i in 0..hm.grid_h {
        for j in 0..hm.grid_w {
            if hm.score(i, j, class) >= cfg.heat_threshold {
                let window = hm.cell_window(i, j);
                acc = Some(match acc {
                    Some(b) => b.union_box(&window),
                    None => window,
                });
            }
        }
    }
    let b = acc.ok_or(CropError::NoReceiptRegion)?;
    Ok(b.dilate_clamped(margin, img_w as i64, img_h as i64))
}

struct ScanProfile {
    /// Two-sided mean difference indexed by position along the scan axis.
    response: Vec<f64>,
    valid: std::ops::Range<usize>,
}

fn scan_profile(values: &[f64], strip: usize) -> ScanProfile {
    let n = values.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let mut response = vec![0.0; n];
    let lo = strip;
    let hi = n.saturating_sub(strip);
    for x in lo..hi {
        let left = (prefix[x] - prefix[x - strip]) / strip as f64;
        let right = (prefix[x + strip] - prefix[x]) / strip as f64;
        // Positive where the right strip is brighter than the left.
        response[x] = right - left;
    }
    ScanProfile { response, valid: lo..hi }
}

/// Candidate positions: local maxima of `sign * response` above the
/// contrast threshold.
fn candidates(profile: &ScanProfile, sign: f64, delta: f64) -> Vec<usize> {
    let r = &profile.response;
    profile
        .valid
        .clone()
        .filter(|&x| {
            let v = sign * r[x];
            if v < delta {
                return false;
            }
            let lo = x.saturating_sub(2).max(profile.valid.start);
            let hi = (x + 3).min(profile.valid.end);
            (lo..hi).all(|k| sign * r[k] <= v)
        })
        .collect()
}

/// Least-squares line fit (dependent = slope*independent + offset) with two
/// rounds of median-residual outlier rejection.
fn fit_line_robust(
    points: &[(f64, f64)], // (independent, dependent)
    min_inliers: usize,
) -> Option<(f64, f64, Vec<(f64, f64)>)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    let mut fit = None;
    for _round in 0..3 {
        if pts.len() < min_inliers {
            return None;
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = sxx - sx * sx / n;
        let slope = if denom.abs() < 1e-9 { 0.0 } else { (sxy - sx * sy / n) / denom };
        let offset = (sy - slope * sx) / n;
        fit = Some((slope, offset));
        let mut residuals: Vec<f64> =
            pts.iter().map(|p| (p.1 - (slope * p.0 + offset)).abs()).collect();
        let mut sorted = residuals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2].max(0.5);
        let keep: Vec<(f64, f64)> = pts
            .iter()
            .zip(residuals.drain(..))
            .filter(|(_, r)| *r <= 2.0 * median)
            .map(|(p, _)| *p)
            .collect();
        if keep.len() == pts.len() {
            break;
        }
        pts = keep;
    }
    fit.map(|(s, o)| (s, o, pts))
}

fn detect_one_edge(
    img: &GrayImage,
    search: &BBox,
    side: EdgeSide,
    cfg: &CropConfig,
) -> Result<EdgeLine, CropError> {
    let vertical = matches!(side, EdgeSide::Left | EdgeSide::Right);
    // Along each scanline the bright receipt interior lies toward the
    // search-box center, so left/top edges look for dark-to-bright steps
    // and right/bottom edges for bright-to-dark ones.
    let sign = match side {
        EdgeSide::Left | EdgeSide::Top => 1.0,
        EdgeSide::Right | EdgeSide::Bottom => -1.0,
    };
    let (scan_len, across_len, across_start) = if vertical {
        (search.w as usize, search.h as usize, search.y as usize)
    } else {
        (search.h as usize, search.w as usize, search.x as usize)
    };
    if scan_len <= 2 * cfg.strip_width || across_len == 0 {
        return Err(CropError::EdgeNotFound(side));
    }
    let step = (across_len / cfg.scanlines).max(1);
    let mut points: Vec<(f64, f64)> = Vec::new(); // (across, along)
    let mut line_values = vec![0.0; scan_len];
    for across in (across_start..across_start + across_len).step_by(step) {
        for (i, v) in line_values.iter_mut().enumerate() {
            *v = if vertical {
                img.get(search.x as usize + i, across) as f64
            } else {
                img.get(across, search.y as usize + i) as f64
            };
        }
        let profile = scan_profile(&line_values, cfg.strip_width);
        let cand = candidates(&profile, sign, cfg.contrast_delta);
        let pick = match side {
            EdgeSide::Left | EdgeSide::Top => cand.first(),
            EdgeSide::Right | EdgeSide::Bottom => cand.last(),
        };
        if let Some(&pos) = pick {
            let along = if vertical { search.x as f64 + pos as f64 } else { search.y as f64 + pos as f64 };
            points.push((across as f64, along));
        }
    }
    let (slope, offset, inliers) =
        fit_line_robust(&points, cfg.min_inliers).ok_or(CropError::EdgeNotFound(side))?;
    if inliers.len() < cfg.min_inliers {
        return Err(CropError::EdgeNotFound(side));
    }
    let angle = slope.atan().to_degrees();
    if angle.abs() > cfg.quasi_angle_max {
        return Err(CropError::EdgeNotFound(side));
    }
    let support = inliers
        .iter()
        .map(|&(across, along)| if vertical { (along, across) } else { (across, along) })
        .collect();
    Ok(EdgeLine {
        side,
        orientation: if vertical {
            EdgeOrientation::QuasiVertical
        } else {
            EdgeOrientation::QuasiHorizontal
        },
        support,
        slope,
        offset,
        angle_degrees: angle,
    })
}

/// Detect the four receipt edges inside a search box using the two-sided
/// mean step filter.
pub fn detect_receipt_edges(
    img: &GrayImage,
    search: &BBox,
    cfg: &CropConfig,
) -> Result<[EdgeLine; 4], CropError> {
    let search = search.clamped(img.width() as i64, img.height() as i64);
    let left = detect_one_edge(img, &search, EdgeSide::Left, cfg)?;
    let right = detect_one_edge(img, &search, EdgeSide::Right, cfg)?;
    let top = detect_one_edge(img, &search, EdgeSide::Top, cfg)?;
    let bottom = detect_one_edge(img, &search, EdgeSide::Bottom, cfg)?;
    Ok([left, right, top, bottom])
}

fn intersect(vert: &EdgeLine, horiz: &EdgeLine) -> (f64, f64) {
    // x = a*y + b, y = c*x + d.
    let (a, b) = (vert.slope, vert.offset);
    let (c, d) = (horiz.slope, horiz.offset);
    let x = (a * d + b) / (1.0 - a * c);
    let y = c * x + d;
    (x, y)
}

/// Build the receipt quad from the four edges, estimate the skew from the
/// quasi-vertical pair and return the deskewed axis-aligned crop.
pub fn rectify(img: &GrayImage, edges: &[EdgeLine; 4]) -> Result<CropResult, CropError> {
    let [left, right, top, bottom] = edges;
    let tl = intersect(left, top);
    let tr = intersect(right, top);
    let br = intersect(right, bottom);
    let bl = intersect(left, bottom);
    let quad = Quad::new([tl, tr, br, bl]);
    let (w, h) = (img.width() as f64, img.height() as f64);
    for (x, y) in quad.corners {
        if x < -0.5 * w || x > 1.5 * w || y < -0.5 * h || y > 1.5 * h {
            return Err(CropError::DegenerateQuad);
        }
    }
    if !quad.is_simple() || quad.signed_area() <= 0.0 {
        return Err(CropError::DegenerateQuad);
    }
    // Signed deviation of the vertical pair from vertical; the rotation that
    // cancels it brings the receipt upright.
    let mean_slope_angle = (left.slope.atan() + right.slope.atan()) / 2.0;
    let skew_angle = -mean_slope_angle.to_degrees();
    let rotation = -skew_angle;
    let rotated = rotate(img, rotation).map_err(|_| CropError::DegenerateQuad)?;
    // Map the quad corners through the same transform to find the crop box.
    let rad = rotation.to_radians();
    let (sin, cos) = rad.sin_cos();
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let (ox, oy) = ((rotated.width() as f64 - 1.0) / 2.0, (rotated.height() as f64 - 1.0) / 2.0);
    let mapped: Vec<(f64, f64)> = quad
        .corners
        .iter()
        .map(|&(x, y)| {
            let (dx, dy) = (x - cx, y - cy);
            (cos * dx - sin * dy + ox, sin * dx + cos * dy + oy)
        })
        .collect();
    let crop_box = Quad::new([mapped[0], mapped[1], mapped[2], mapped[3]])
        .bounding_box()
        .clamped(rotated.width() as i64, rotated.height() as i64);
    let rectified = rotated.crop(&crop_box);
    let map = SceneMap {
        rotation,
        src_w: img.width(),
        src_h: img.height(),
        rot_w: rotated.width(),
        rot_h: rotated.height(),
        crop: crop_box,
    };
    Ok(CropResult {
        wide_box: quad.bounding_box().clamped(img.width() as i64, img.height() as i64),
        quad,
        rectified,
        skew_angle,
        map,
        fallback: false,
    })
}

/// Full crop stage: wide crop from the heatmap, edge refinement inside the
/// expanded wide box, falling back to the plain wide crop (skew 0) when
/// fewer than four edges can be fitted.
pub fn crop_receipt(
    img: &GrayImage,
    hm: &HeatMap,
    det_cfg: &DetectionConfig,
    cfg: &CropConfig,
) -> Result<CropResult, CropError> {
    let wide = wide_crop(hm, det_cfg, cfg.margin, img.width(), img.height())?;
    // Edge search gets extra slack beyond the wide box so an edge sitting on
    // the box boundary is still visible to the step filter.
    let slack_x = ((wide.w as f64 * cfg.margin).round() as i64).max(20);
    let slack_y = ((wide.h as f64 * cfg.margin).round() as i64).max(20);
    let search = wide.expand_clamped(slack_x, slack_y, img.width() as i64, img.height() as i64);
    match detect_receipt_edges(img, &search, cfg).and_then(|edges| rectify(img, &edges)) {
        Ok(mut result) => {
            result.wide_box = wide;
            Ok(result)
        }
        Err(_) => Ok(CropResult {
            wide_box: wide,
            quad: Quad::new([
                (wide.x as f64, wide.y as f64),
                (wide.right() as f64, wide.y as f64),
                (wide.right() as f64, wide.bottom() as f64),
                (wide.x as f64, wide.bottom() as f64),
            ]),
            rectified: img.crop(&wide),
            skew_angle: 0.0,
            map: SceneMap::identity_crop(img.width(), img.height(), wide),
            fallback: true,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::HeatMap;

    fn heatmap(grid_w: usize, grid_h: usize, positives: &[(usize, usize)]) -> HeatMap {
        let labels = vec!["receipt".to_string(), "not_receipt".to_string()];
        let mut scores = Vec::new();
        for i in 0..grid_h {
            for j in 0..grid_w {
                let p = if positives.contains(&(i, j)) { 0.9 } else { 0.0 };
                scores.extend([p, 1.0 - p]);
            }
        }
        HeatMap::new(grid_w, grid_h, 227, 227, labels, scores)
    }

    #[test]
    fn wide_crop_single_cell() {
        let hm = heatmap(4, 3, &[(1, 2)]);
        let cfg = DetectionConfig::default();
        let b = wide_crop(&hm, &cfg, 0.0, 2000, 2000).unwrap();
        assert_eq!(b, BBox::new(454, 227, 227, 227));
    }

    #[test]
    fn wide_crop_unions_cells_and_covers_windows() {
        let hm = heatmap(4, 3, &[(0, 1), (0, 3)]);
        let cfg = DetectionConfig::default();
        let b = wide_crop(&hm, &cfg, 0.0, 2000, 2000).unwrap();
        assert_eq!(b, BBox::new(227, 0, 3 * 227, 227));
        // Margin-zero box contains every positive window exactly.
        for (i, j) in [(0usize, 1usize), (0, 3)] {
            let w = hm.cell_window(i, j);
            assert_eq!(b.union_box(&w), b);
        }
    }

    #[test]
    fn wide_crop_all_cells_is_whole_frame() {
        let all: Vec<(usize, usize)> = (0..3).flat_map(|i| (0..4).map(move |j| (i, j))).collect();
        let hm = heatmap(4, 3, &all);
        let b = wide_crop(&hm, &DetectionConfig::default(), 0.0, 4 * 227, 3 * 227).unwrap();
        assert_eq!(b, BBox::new(0, 0, 4 * 227, 3 * 227));
    }

    #[test]
    fn wide_crop_no_positives() {
        let hm = heatmap(4, 3, &[]);
        assert_eq!(
            wide_crop(&hm, &DetectionConfig::default(), 0.0, 2000, 2000),
            Err(CropError::NoReceiptRegion)
        );
    }

    /// White rectangle on dark background, optionally rotated.
    fn synthetic_receipt(angle_deg: f64) -> (GrayImage, BBox) {
        let (w, h) = (360, 300);
        let inner = BBox::new(80, 50, 180, 200);
        let rad = angle_deg.to_radians();
        let (sin, cos) = rad.sin_cos();
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        let mut px = vec![60u8; w * h];
        for y in 0..h {
            for x in 0..w {
                // Rotate the sample position back into the axis-aligned frame.
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let sx = cos * dx + sin * dy + cx;
                let sy = -sin * dx + cos * dy + cy;
                if inner.contains_point(sx, sy) {
                    px[y * w + x] = 240;
                }
            }
        }
        (GrayImage::new(w, h, px), inner)
    }

    #[test]
    fn edges_on_axis_aligned_rectangle() {
        let (img, inner) = synthetic_receipt(0.0);
        let cfg = CropConfig::default();
        let search = BBox::new(0, 0, img.width() as i64, img.height() as i64);
        let edges = detect_receipt_edges(&img, &search, &cfg).unwrap();
        for e in &edges {
            assert!(e.angle_degrees.abs() < 0.2, "{:?} angle {}", e.side, e.angle_degrees);
        }
        // Offsets within a pixel of the true borders.
        assert!((edges[0].offset - inner.x as f64).abs() <= 1.5);
        assert!((edges[1].offset - inner.right() as f64).abs() <= 1.5);
        assert!((edges[2].offset - inner.y as f64).abs() <= 1.5);
        assert!((edges[3].offset - inner.bottom() as f64).abs() <= 1.5);
    }

    #[test]
    fn edges_on_rotated_rectangle() {
        let (img, _) = synthetic_receipt(5.0);
        let cfg = CropConfig::default();
        let search = BBox::new(0, 0, img.width() as i64, img.height() as i64);
        let edges = detect_receipt_edges(&img, &search, &cfg).unwrap();
        for e in &edges {
            assert!(
                (e.angle_degrees.abs() - 5.0).abs() < 1.0,
                "{:?} angle {}",
                e.side,
                e.angle_degrees
            );
        }
    }

    #[test]
    fn uniform_image_has_no_edges() {
        let img = GrayImage::filled(200, 200, 128);
        let cfg = CropConfig::default();
        let search = BBox::new(0, 0, 200, 200);
        assert!(matches!(
            detect_receipt_edges(&img, &search, &cfg),
            Err(CropError::EdgeNotFound(_))
        ));
    }

    #[test]
    fn rectify_axis_aligned_is_plain_crop() {
        let (img, inner) = synthetic_receipt(0.0);
        let cfg = CropConfig::default();
        let search = BBox::new(0, 0, img.width() as i64, img.height() as i64);
        let edges = detect_receipt_edges(&img, &search, &cfg).unwrap();
        let result = rectify(&img, &edges).unwrap();
        assert!(result.skew_angle.abs() < 0.3);
        assert!((result.rectified.width() as i64 - inner.w).abs() <= 3);
        assert!((result.rectified.height() as i64 - inner.h).abs() <= 3);
    }

    #[test]
    fn rectify_straightens_rotated_receipt() {
        let (img, _) = synthetic_receipt(5.0);
        let cfg = CropConfig::default();
        let search = BBox::new(0, 0, img.width() as i64, img.height() as i64);
        let edges = detect_receipt_edges(&img, &search, &cfg).unwrap();
        let result = rectify(&img, &edges).unwrap();
        assert!((result.skew_angle.abs() - 5.0).abs() < 1.0, "skew {}", result.skew_angle);
        // Re-run the edge detector on the rectified output: the residual
        // angles must be near zero.
        let r = &result.rectified;
        let search = BBox::new(0, 0, r.width() as i64, r.height() as i64);
        if let Ok(edges) = detect_receipt_edges(r, &search, &cfg) {
            for e in &edges {
                assert!(e.angle_degrees.abs() < 0.5, "{:?} residual {}", e.side, e.angle_degrees);
            }
        }
    }

    #[test]
    fn rectify_rejects_crossing_side_lines() {
        // Left and right lines crossing inside the frame make a bowtie.
        let mk = |side, slope: f64, offset: f64| EdgeLine {
            side,
            orientation: if matches!(side, EdgeSide::Left | EdgeSide::Right) {
                EdgeOrientation::QuasiVertical
            } else {
                EdgeOrientation::QuasiHorizontal
            },
            support: vec![],
            slope,
            offset,
            angle_degrees: slope.atan().to_degrees(),
        };
        let img = GrayImage::filled(100, 100, 128);
        let edges = [
            mk(EdgeSide::Left, 0.3, 35.0),
            mk(EdgeSide::Right, -0.3, 65.0),
            mk(EdgeSide::Top, 0.0, 10.0),
            mk(EdgeSide::Bottom, 0.0, 90.0),
        ];
        assert_eq!(rectify(&img, &edges).unwrap_err(), CropError::DegenerateQuad);
    }
}
