//! Geometric primitives shared by every pipeline stage: axis-aligned boxes,
//! quadrilaterals and the intersection-over-union metric.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate box: width and height must be positive (got {w}x{h})")]
    InvalidGeometry { w: i64, h: i64 },
}

/// Axis-aligned rectangle in image coordinates, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl BBox {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn area(&self) -> i64 {
        self.w * self.h
    }

    pub fn right(&self) -> i64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> i64 {
        self.y + self.h
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 > x0 && y1 > y0 {
            Some(BBox::new(x0, y0, x1 - x0, y1 - y0))
        } else {
            None
        }
    }

    pub fn union_box(&self, other: &BBox) -> BBox {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.right().max(other.right());
        let y1 = self.bottom().max(other.bottom());
        BBox::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// Grow by `frac` of each dimension on every side, then clamp to
    /// `[0, bound_w] x [0, bound_h]`.
    pub fn dilate_clamped(&self, frac: f64, bound_w: i64, bound_h: i64) -> BBox {
        let dx = (self.w as f64 * frac).round() as i64;
        let dy = (self.h as f64 * frac).round() as i64;
        self.expand_clamped(dx, dy, bound_w, bound_h)
    }

    pub fn expand_clamped(&self, dx: i64, dy: i64, bound_w: i64, bound_h: i64) -> BBox {
        let x0 = (self.x - dx).max(0);
        let y0 = (self.y - dy).max(0);
        let x1 = (self.right() + dx).min(bound_w);
        let y1 = (self.bottom() + dy).min(bound_h);
        BBox::new(x0, y0, (x1 - x0).max(1), (y1 - y0).max(1))
    }

    pub fn clamped(&self, bound_w: i64, bound_h: i64) -> BBox {
        self.expand_clamped(0, 0, bound_w, bound_h)
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x as f64 && x < self.right() as f64 && y >= self.y as f64 && y < self.bottom() as f64
    }
}

/// Intersection over union of two boxes, computed from continuous rectangle
/// areas so the value does not depend on raster resolution.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64, GeometryError> {
    for r in [a, b] {
        if r.w <= 0 || r.h <= 0 {
            return Err(GeometryError::InvalidGeometry { w: r.w, h: r.h });
        }
    }
    let inter = a.intersection(b).map_or(0, |r| r.area()) as f64;
    let union = (a.area() + b.area()) as f64 - inter;
    Ok(inter / union)
}

/// Quadrilateral corners in top-left, top-right, bottom-right, bottom-left
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    pub corners: [(f64, f64); 4],
}

impl Quad {
    pub fn new(corners: [(f64, f64); 4]) -> Self {
        Quad { corners }
    }

    /// Signed area via the shoelace formula. Positive for the TL,TR,BR,BL
    /// winding in a y-down coordinate system.
    pub fn signed_area(&self) -> f64 {
        let c = &self.corners;
        let mut acc = 0.0;
        for i in 0..4 {
            let (x0, y0) = c[i];
            let (x1, y1) = c[(i + 1) % 4];
            acc += x0 * y1 - x1 * y0;
        }
        acc / 2.0
    }

    /// True when no two non-adjacent sides intersect and the area is nonzero.
    pub fn is_simple(&self) -> bool {
        if self.signed_area().abs() < 1e-9 {
            return false;
        }
        let c = &self.corners;
        let seg = |i: usize| (c[i], c[(i + 1) % 4]);
        segments_intersect(seg(0), seg(2)) == false && segments_intersect(seg(1), seg(3)) == false
    }

    pub fn bounding_box(&self) -> BBox {
        let xs = self.corners.iter().map(|c| c.0);
        let ys = self.corners.iter().map(|c| c.1);
        let x0 = xs.clone().fold(f64::INFINITY, f64::min);
        let x1 = xs.fold(f64::NEG_INFINITY, f64::max);
        let y0 = ys.clone().fold(f64::INFINITY, f64::min);
        let y1 = ys.fold(f64::NEG_INFINITY, f64::max);
        BBox::new(
            x0.floor() as i64,
            y0.floor() as i64,
            (x1.ceil() - x0.floor()).max(1.0) as i64,
            (y1.ceil() - y0.floor()).max(1.0) as i64,
        )
    }
}

fn segments_intersect(a: ((f64, f64), (f64, f64)), b: ((f64, f64), (f64, f64))) -> bool {
    fn orient(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
        (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
    }
    let ((p1, p2), (p3, p4)) = (a, b);
    let d1 = orient(p3, p4, p1);
    let d2 = orient(p3, p4, p2);
    let d3 = orient(p1, p2, p3);
    let d4 = orient(p1, p2, p4);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_identity() {
        let a = BBox::new(3, 4, 10, 20);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn iou_disjoint() {
        let a = BBox::new(0, 0, 5, 5);
        let b = BBox::new(10, 10, 5, 5);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn iou_half_overlap_matches_unit_cell_oracle() {
        let a = BBox::new(0, 0, 10, 10);
        let b = BBox::new(5, 0, 10, 10);
        // Brute-force oracle: count unit cells in intersection and union.
        let mut inter = 0u64;
        let mut union = 0u64;
        for x in -5..25 {
            for y in -5..25 {
                let in_a = x >= 0 && x < 10 && y >= 0 && y < 10;
                let in_b = x >= 5 && x < 15 && y >= 0 && y < 10;
                if in_a && in_b {
                    inter += 1;
                }
                if in_a || in_b {
                    union += 1;
                }
            }
        }
        let expected = inter as f64 / union as f64;
        assert!((iou(&a, &b).unwrap() - expected).abs() < 1e-9);
        assert!((iou(&a, &b).unwrap() - 50.0 / 150.0).abs() < 1e-9);
    }

    #[test]
    fn iou_rejects_degenerate() {
        let a = BBox::new(0, 0, 0, 10);
        let b = BBox::new(0, 0, 5, 5);
        assert!(matches!(iou(&a, &b), Err(GeometryError::InvalidGeometry { .. })));
    }

    #[test]
    fn iou_symmetric() {
        let a = BBox::new(2, 3, 7, 9);
        let b = BBox::new(5, 1, 4, 12);
        assert_eq!(iou(&a, &b).unwrap(), iou(&b, &a).unwrap());
    }

    #[test]
    fn quad_simple_and_area() {
        let q = Quad::new([(0.0, 0.0), (10.0, 0.0), (10.0, 5.0), (0.0, 5.0)]);
        assert!(q.is_simple());
        assert!((q.signed_area().abs() - 50.0).abs() < 1e-9);
        // Bowtie is not simple.
        let bow = Quad::new([(0.0, 0.0), (10.0, 5.0), (10.0, 0.0), (0.0, 5.0)]);
        assert!(!bow.is_simple());
    }
}
