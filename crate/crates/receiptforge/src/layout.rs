//! Adaptive binarization and projection-profile segmentation of the
//! rectified receipt into full-width bands, column sub-blocks and text
//! lines.

use serde::{Deserialize, Serialize};

use crate::geom::BBox;
use crate::raster::{BinaryMask, GrayImage};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinarizeParams {
    /// Local window edge, odd.
    pub window: usize,
    /// Sauvola sensitivity.
    pub k: f64,
    /// Dynamic range of the standard deviation.
    pub r: f64,
}

impl Default for BinarizeParams {
    fn default() -> Self {
        BinarizeParams { window: 31, k: 0.2, r: 128.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Band,
    Subblock,
    Line,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextBlock {
    pub box_: BBox,
    pub kind: BlockKind,
    /// Index of the parent block in the flat hierarchy, if any.
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayoutParams {
    pub binarize: BinarizeParams,
    /// Rows with at least this many ink pixels count as inked.
    pub ink_row_min: usize,
    /// Band separation as a multiple of the estimated line height.
    pub band_gap_factor: f64,
    /// Line separation inside a sub-block, same unit.
    pub line_gap_factor: f64,
    /// Lower bound on the column split gap, as a multiple of line height.
    pub col_gap_floor_factor: f64,
    /// Prior split snapping tolerance as a fraction of the receipt width.
    pub snap_tolerance: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            binarize: BinarizeParams::default(),
            ink_row_min: 2,
            band_gap_factor: 0.8,
            line_gap_factor: 0.3,
            col_gap_floor_factor: 0.8,
            snap_tolerance: 0.03,
        }
    }
}

/// Sauvola adaptive binarization: a pixel is ink iff
/// `value < m * (1 + k * (s / R - 1))` with the mean `m` and standard
/// deviation `s` taken over the local window (clipped at borders). Computed
/// with integral images.
pub fn adaptive_binarize(img: &GrayImage, params: &BinarizeParams) -> BinaryMask {
    assert!(params.window >= 3 && params.window % 2 == 1, "window must be odd and >= 3");
    let (w, h) = (img.width(), img.height());
    // Integral images of values and squared values, (w+1) x (h+1).
    let mut sum = vec![0f64; (w + 1) * (h + 1)];
    let mut sq = vec![0f64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0f64;
        let mut row_sq = 0f64;
        for x in 0..w {
            let v = img.get(x, y) as f64;
            row_sum += v;
            row_sq += v * v;
            let idx = (y + 1) * (w + 1) + (x + 1);
            sum[idx] = sum[idx - (w + 1)] + row_sum;
            sq[idx] = sq[idx - (w + 1)] + row_sq;
        }
    }
    let radius = params.window / 2;
    let mut bits = vec![false; w * h];
    for y in 0..h {
        let y0 = y.saturating_sub(radius);
        let y1 = (y + radius + 1).min(h);
        for x in 0..w {
            let x0 = x.saturating_sub(radius);
            let x1 = (x + radius + 1).min(w);
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            let rect = |t: &[f64]| {
                t[y1 * (w + 1) + x1] - t[y0 * (w + 1) + x1] - t[y1 * (w + 1) + x0]
                    + t[y0 * (w + 1) + x0]
            };
            let mean = rect(&sum) / n;
            let var = (rect(&sq) / n - mean * mean).max(0.0);
            let std = var.sqrt();
            let threshold = mean * (1.0 + params.k * (std / params.r - 1.0));
            if (img.get(x, y) as f64) < threshold {
                bits[y * w + x] = true;
            }
        }
    }
    BinaryMask::new(w, h, bits)
}

/// Median height of maximal inked-row runs over the whole mask; the driver
/// for the projection gap defaults. Falls back to 8 on blank masks.
pub fn estimate_line_height(mask: &BinaryMask, ink_row_min: usize) -> usize {
    let mut heights = Vec::new();
    let mut run = 0usize;
    for y in 0..mask.height() {
        let ink = row_ink(mask, y, 0, mask.width());
        if ink >= ink_row_min {
            run += 1;
        } else if run > 0 {
            heights.push(run);
            run = 0;
        }
    }
    if run > 0 {
        heights.push(run);
    }
    if heights.is_empty() {
        return 8;
    }
    heights.sort_unstable();
    heights[heights.len() / 2]
}

fn row_ink(mask: &BinaryMask, y: usize, x0: usize, x1: usize) -> usize {
    (x0..x1).filter(|&x| mask.get(x, y)).count()
}

fn col_ink(mask: &BinaryMask, x: usize, y0: usize, y1: usize) -> usize {
    (y0..y1).filter(|&y| mask.get(x, y)).count()
}

/// Group profile positions into maximal inked runs separated by at least
/// `min_gap` blank positions. Shared by row and column segmentation.
fn profile_runs(inked: &[bool], min_gap: usize) -> Vec<(usize, usize)> {
    let min_gap = min_gap.max(1);
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_ink: usize = 0;
    for (i, &on) in inked.iter().enumerate() {
        if on {
            match start {
                None => start = Some(i),
                Some(s) => {
                    if i - last_ink - 1 >= min_gap {
                        runs.push((s, last_ink));
                        start = Some(i);
                    }
                }
            }
            last_ink = i;
        }
    }
    if let Some(s) = start {
        runs.push((s, last_ink));
    }
    runs
}

/// Full-width horizontal bands: maximal inked row intervals (inclusive)
/// separated by at least `min_gap` blank rows.
pub fn horizontal_bands(mask: &BinaryMask, min_gap: usize, ink_row_min: usize) -> Vec<(usize, usize)> {
    let inked: Vec<bool> = (0..mask.height())
        .map(|y| row_ink(mask, y, 0, mask.width()) >= ink_row_min)
        .collect();
    profile_runs(&inked, min_gap)
}

fn bands_in_box(mask: &BinaryMask, b: &BBox, min_gap: usize, ink_row_min: usize) -> Vec<(usize, usize)> {
    let inked: Vec<bool> = (b.y..b.bottom())
        .map(|y| row_ink(mask, y as usize, b.x as usize, b.right() as usize) >= ink_row_min)
        .collect();
    profile_runs(&inked, min_gap)
        .into_iter()
        .map(|(a, z)| (a + b.y as usize, z + b.y as usize))
        .collect()
}

/// Split a band into column sub-blocks at blank column runs of width at
/// least `min_col_gap`; when layout priors are given, detected splits within
/// the snapping tolerance of a prior are kept as-is and a missing prior
/// split is forced at the widest blank run near the prior fraction.
pub fn vertical_subblocks(
    mask: &BinaryMask,
    band: &BBox,
    priors: &[f64],
    params: &LayoutParams,
    line_height: usize,
) -> Vec<BBox> {
    let (x0, x1) = (band.x as usize, band.right() as usize);
    let (y0, y1) = (band.y as usize, band.bottom() as usize);
    let inked: Vec<bool> = (x0..x1).map(|x| col_ink(mask, x, y0, y1) > 0).collect();

    // Blank runs between inked columns drive the gap statistics.
    let ink_runs = profile_runs(&inked, 1);
    if ink_runs.is_empty() {
        return Vec::new();
    }
    let mut gaps: Vec<(usize, usize)> = Vec::new(); // (start, width), band-local
    for pair in ink_runs.windows(2) {
        let gap_start = pair[0].1 + 1;
        let gap_width = pair[1].0 - gap_start;
        if gap_width > 0 {
            gaps.push((gap_start, gap_width));
        }
    }
    let mut widths: Vec<usize> = gaps.iter().map(|g| g.1).collect();
    widths.sort_unstable();
    let median_gap = if widths.is_empty() { 0 } else { widths[widths.len() / 2] };
    let floor = (params.col_gap_floor_factor * line_height as f64).ceil() as usize;
    let min_col_gap = (2 * median_gap).max(floor).max(1);

    // Split positions: centers of qualifying blank runs.
    let mut splits: Vec<usize> = gaps
        .iter()
        .filter(|g| g.1 >= min_col_gap)
        .map(|g| g.0 + g.1 / 2)
        .collect();

    // Prior knowledge: a missing split at a known column fraction is forced
    // at the widest blank run near that fraction.
    let width = (x1 - x0) as f64;
    let tol = (params.snap_tolerance * mask.width() as f64).round() as usize;
    for &prior in priors {
        let target = (prior * width).round() as usize;
        let near_existing = splits.iter().any(|&s| s.abs_diff(target) <= tol);
        if near_existing {
            continue;
        }
        if let Some(best) = gaps
            .iter()
            .filter(|g| (g.0 + g.1 / 2).abs_diff(target) <= tol)
            .max_by_key(|g| g.1)
        {
            splits.push(best.0 + best.1 / 2);
        }
    }
    splits.sort_unstable();
    splits.dedup();

    // Ink-tight sub-boxes between consecutive splits.
    let mut out = Vec::new();
    let mut seg_start = 0usize;
    let bounds: Vec<usize> = splits.iter().copied().chain([x1 - x0]).collect();
    for bound in bounds {
        let seg = &inked[seg_start..bound];
        if let Some(first) = seg.iter().position(|&b| b) {
            let last = seg.iter().rposition(|&b| b).unwrap();
            out.push(BBox::new(
                (x0 + seg_start + first) as i64,
                y0 as i64,
                (last - first + 1) as i64,
                (y1 - y0) as i64,
            ));
        }
        seg_start = bound;
    }
    out
}

/// Text lines inside a sub-block: the horizontal band extraction applied
/// recursively with a tighter gap.
pub fn segment_lines(
    mask: &BinaryMask,
    subblock: &BBox,
    params: &LayoutParams,
    line_height: usize,
) -> Vec<BBox> {
    let min_gap = ((params.line_gap_factor * line_height as f64).ceil() as usize).max(1);
    bands_in_box(mask, subblock, min_gap, params.ink_row_min)
        .into_iter()
        .map(|(y0, y1)| {
            // Tighten horizontally to the ink extent of the line.
            let xs: Vec<usize> = (subblock.x as usize..subblock.right() as usize)
                .filter(|&x| col_ink(mask, x, y0, y1 + 1) > 0)
                .collect();
            let (x0, x1) = match (xs.first(), xs.last()) {
                (Some(&a), Some(&b)) => (a, b),
                _ => (subblock.x as usize, subblock.right() as usize - 1),
            };
            BBox::new(x0 as i64, y0 as i64, (x1 - x0 + 1) as i64, (y1 - y0 + 1) as i64)
        })
        .collect()
}

/// Band -> sub-block -> line hierarchy of a binarized receipt, flat with
/// parent indices.
pub fn build_hierarchy(mask: &BinaryMask, priors: &[f64], params: &LayoutParams) -> Vec<TextBlock> {
    let line_height = estimate_line_height(mask, params.ink_row_min);
    // Smallest integer gap satisfying "gap >= factor * line height".
    let band_gap = ((params.band_gap_factor * line_height as f64).ceil() as usize).max(1);
    let mut blocks = Vec::new();
    for (y0, y1) in horizontal_bands(mask, band_gap, params.ink_row_min) {
        // Tighten the band horizontally to its ink extent.
        let xs: Vec<usize> =
            (0..mask.width()).filter(|&x| col_ink(mask, x, y0, y1 + 1) > 0).collect();
        let (bx0, bx1) = (*xs.first().unwrap(), *xs.last().unwrap());
        let band_box = BBox::new(
            bx0 as i64,
            y0 as i64,
            (bx1 - bx0 + 1) as i64,
            (y1 - y0 + 1) as i64,
        );
        let band_idx = blocks.len();
        blocks.push(TextBlock { box_: band_box, kind: BlockKind::Band, parent: None });
        for sub in vertical_subblocks(mask, &band_box, priors, params, line_height) {
            let sub_idx = blocks.len();
            blocks.push(TextBlock { box_: sub, kind: BlockKind::Subblock, parent: Some(band_idx) });
            for line in segment_lines(mask, &sub, params, line_height) {
                blocks.push(TextBlock { box_: line, kind: BlockKind::Line, parent: Some(sub_idx) });
            }
        }
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_from_rows(w: usize, rows: &[(usize, usize)]) -> BinaryMask {
        let h = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0) + 3;
        let mut m = BinaryMask::blank(w, h);
        for &(y0, y1) in rows {
            for y in y0..=y1 {
                for x in 0..w {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// Independent brute-force reference for band extraction.
    fn bands_oracle(mask: &BinaryMask, min_gap: usize, ink_row_min: usize) -> Vec<(usize, usize)> {
        let mut inked_rows = Vec::new();
        for y in 0..mask.height() {
            let mut count = 0;
            for x in 0..mask.width() {
                if mask.get(x, y) {
                    count += 1;
                }
            }
            if count >= ink_row_min {
                inked_rows.push(y);
            }
        }
        let mut out: Vec<(usize, usize)> = Vec::new();
        for &y in &inked_rows {
            match out.last_mut() {
                Some(last) if y - last.1 - 1 < min_gap.max(1) => last.1 = y,
                _ => out.push((y, y)),
            }
        }
        out
    }

    #[test]
    fn bands_simple_cases() {
        let m = mask_from_rows(10, &[(0, 4), (10, 12)]);
        assert_eq!(horizontal_bands(&m, 3, 2), vec![(0, 4), (10, 12)]);
        // Gap of 5 (rows 5..=9) with min_gap 6 merges the runs.
        assert_eq!(horizontal_bands(&m, 6, 2), vec![(0, 12)]);
        let blank = BinaryMask::blank(8, 8);
        assert!(horizontal_bands(&blank, 3, 2).is_empty());
        let solid = mask_from_rows(10, &[(2, 7)]);
        assert_eq!(horizontal_bands(&solid, 3, 2), vec![(2, 7)]);
    }

    #[test]
    fn bands_match_brute_force_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let w = rng.gen_range(4..40);
            let h = rng.gen_range(4..60);
            let mut m = BinaryMask::blank(w, h);
            for y in 0..h {
                for x in 0..w {
                    if rng.gen_bool(0.2) {
                        m.set(x, y, true);
                    }
                }
            }
            let min_gap = rng.gen_range(1..6);
            assert_eq!(horizontal_bands(&m, min_gap, 2), bands_oracle(&m, min_gap, 2));
        }
    }

    #[test]
    fn binarize_constant_images_have_no_ink() {
        for v in [0u8, 128, 255] {
            let img = GrayImage::filled(40, 40, v);
            let mask = adaptive_binarize(&img, &BinarizeParams::default());
            assert_eq!(mask.ink_count(), 0, "value {v}");
        }
    }

    #[test]
    fn binarize_glyph_on_white() {
        let mut px = vec![245u8; 60 * 60];
        for y in 25..35 {
            for x in 25..35 {
                px[y * 60 + x] = 10;
            }
        }
        let img = GrayImage::new(60, 60, px);
        let mask = adaptive_binarize(&img, &BinarizeParams::default());
        // Glyph pixels are ink.
        for y in 26..34 {
            for x in 26..34 {
                assert!(mask.get(x, y));
            }
        }
        // Background far from the glyph is clean.
        for y in 0..10 {
            for x in 0..60 {
                assert!(!mask.get(x, y));
            }
        }
    }

    #[test]
    fn binarize_is_shading_tolerant() {
        // Text under a strong illumination gradient: the adaptive rule keeps
        // the ink fraction close to the evenly-lit version, while a global
        // threshold collapses.
        let w = 120;
        let h = 60;
        let glyph = |x: usize, y: usize| y % 12 < 4 && x % 8 < 4;
        let flat: Vec<u8> = (0..w * h)
            .map(|i| if glyph(i % w, i / w) { 40 } else { 230 })
            .collect();
        let lit: Vec<u8> = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                let shade = 180.0 * x as f64 / w as f64;
                let base: f64 = if glyph(x, y) { 40.0 } else { 230.0 };
                (base - shade).clamp(0.0, 255.0) as u8
            })
            .collect();
        let p = BinarizeParams::default();
        let flat_ink = adaptive_binarize(&GrayImage::new(w, h, flat), &p).ink_count() as f64;
        let lit_ink = adaptive_binarize(&GrayImage::new(w, h, lit.clone()), &p).ink_count() as f64;
        assert!(lit_ink < 2.0 * flat_ink && lit_ink > flat_ink / 2.0);
        // Global-threshold oracle at 128 marks the whole shaded side as ink.
        let global_ink = lit.iter().filter(|&&v| v < 128).count() as f64;
        assert!(global_ink > 2.0 * flat_ink);
    }

    fn text_band(w: usize, h: usize, cols: &[(usize, usize)]) -> BinaryMask {
        // Band with inked columns in the given ranges, text-like row pattern.
        let mut m = BinaryMask::blank(w, h);
        for &(x0, x1) in cols {
            for x in x0..=x1 {
                for y in 1..h - 1 {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    #[test]
    fn subblocks_split_label_and_price() {
        // Character-ish runs on the left, a wide gap, then a price column.
        let cols: Vec<(usize, usize)> = vec![(2, 6), (8, 12), (14, 18), (60, 64), (66, 70)];
        let m = text_band(80, 12, &cols);
        let band = BBox::new(0, 0, 80, 12);
        let subs = vertical_subblocks(&m, &band, &[], &LayoutParams::default(), 10);
        assert_eq!(subs.len(), 2);
        assert_eq!((subs[0].x, subs[0].right()), (2, 19));
        assert_eq!((subs[1].x, subs[1].right()), (60, 71));
    }

    #[test]
    fn subblocks_single_when_no_gap() {
        let m = text_band(40, 10, &[(2, 37)]);
        let band = BBox::new(0, 0, 40, 10);
        let subs = vertical_subblocks(&m, &band, &[], &LayoutParams::default(), 8);
        assert_eq!(subs.len(), 1);
    }

    #[test]
    fn subblocks_prior_forces_missing_split() {
        // A narrow gap at 77% of the width that would not qualify on its
        // own; the 0.78 prior forces the split there.
        let m = text_band(100, 10, &[(2, 74), (80, 96)]);
        let band = BBox::new(0, 0, 100, 10);
        let mut params = LayoutParams::default();
        params.col_gap_floor_factor = 2.0; // floor 20 > gap width 5
        let line_height = 10;
        let none = vertical_subblocks(&m, &band, &[], &params, line_height);
        assert_eq!(none.len(), 1);
        let with_prior = vertical_subblocks(&m, &band, &[0.78], &params, line_height);
        assert_eq!(with_prior.len(), 2);
        // Split snapped to the detected gap, between the ink runs.
        assert!(with_prior[0].right() <= 75 && with_prior[1].x >= 80);
    }

    #[test]
    fn subblocks_partition_band_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let w = rng.gen_range(20..120);
            let h = rng.gen_range(4..16);
            let mut m = BinaryMask::blank(w, h);
            for x in 0..w {
                if rng.gen_bool(0.5) {
                    let y = rng.gen_range(0..h);
                    m.set(x, y, true);
                }
            }
            let band = BBox::new(0, 0, w as i64, h as i64);
            let subs = vertical_subblocks(&m, &band, &[], &LayoutParams::default(), 6);
            // Pairwise disjoint, in order, inside the band.
            for pair in subs.windows(2) {
                assert!(pair[0].right() <= pair[1].x);
            }
            for s in &subs {
                assert!(s.x >= 0 && s.right() <= w as i64);
                // Each sub-block contains ink in its first and last column.
                assert!((0..h).any(|y| m.get(s.x as usize, y)));
                assert!((0..h).any(|y| m.get(s.right() as usize - 1, y)));
            }
        }
    }

    #[test]
    fn lines_within_subblock() {
        // Three 3-row lines separated by 4 blank rows.
        let mut m = BinaryMask::blank(30, 40);
        for &y0 in &[5usize, 12, 19] {
            for y in y0..y0 + 3 {
                for x in 3..27 {
                    m.set(x, y, true);
                }
            }
        }
        let sub = BBox::new(0, 0, 30, 40);
        let lines = segment_lines(&m, &sub, &LayoutParams::default(), 3);
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].y, 5);
        assert_eq!(lines[2].y, 19);
        // Empty sub-block.
        let blank = BinaryMask::blank(10, 10);
        assert!(segment_lines(&blank, &BBox::new(0, 0, 10, 10), &LayoutParams::default(), 3).is_empty());
    }

    #[test]
    fn hierarchy_containment_and_order() {
        let mut m = BinaryMask::blank(60, 50);
        // Two bands of two lines each.
        // Intra-band line gap of 3 rows stays under the band-gap threshold
        // (0.8 x line height 4); the 13-row gap between bands exceeds it.
        for &band_y in &[4usize, 28] {
            for &dy in &[0usize, 7] {
                for y in band_y + dy..band_y + dy + 4 {
                    for x in 5..55 {
                        m.set(x, y, true);
                    }
                }
            }
        }
        let blocks = build_hierarchy(&m, &[], &LayoutParams::default());
        let bands: Vec<&TextBlock> = blocks.iter().filter(|b| b.kind == BlockKind::Band).collect();
        assert_eq!(bands.len(), 2);
        assert!(bands[0].box_.y < bands[1].box_.y);
        for b in &blocks {
            if let Some(p) = b.parent {
                let parent = &blocks[p];
                assert!(parent.box_.intersection(&b.box_) == Some(b.box_), "child inside parent");
            }
        }
    }

    #[test]
    fn hierarchy_symmetric_under_rotation() {
        let mut m = BinaryMask::blank(40, 30);
        for y in 3..7 {
            for x in 2..20 {
                m.set(x, y, true);
            }
        }
        for y in 15..19 {
            for x in 10..38 {
                m.set(x, y, true);
            }
        }
        let params = LayoutParams::default();
        let fwd = build_hierarchy(&m, &[], &params);
        let rev = build_hierarchy(&m.rotate180(), &[], &params);
        assert_eq!(fwd.len(), rev.len());
        // Every forward box appears 180-degree-rotated in the reverse set.
        for b in &fwd {
            let rx = 40 - b.box_.right();
            let ry = 30 - b.box_.bottom();
            assert!(
                rev.iter().any(|r| r.box_ == BBox::new(rx, ry, b.box_.w, b.box_.h) && r.kind == b.kind),
                "missing rotated counterpart of {:?}",
                b
            );
        }
    }
}
