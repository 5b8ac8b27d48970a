//! Axis-aligned box arithmetic underlying fusion and matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle in continuous pixel coordinates.
///
/// Corner convention: `area = (x2 - x1) * (y2 - y1)`, no +1 correction.
/// Degenerate (zero width or height) and non-finite boxes are rejected at
/// construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Box2D {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl Box2D {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let invalid = |reason: &str| Error::InvalidBox {
            x1,
            y1,
            x2,
            y2,
            reason: reason.to_string(),
        };
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(invalid("coordinates must be finite"));
        }
        if x2 <= x1 || y2 <= y1 {
            return Err(invalid("box must have strictly positive width and height"));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    /// Intersection area with another box; 0 when disjoint.
    pub fn intersection_area(&self, other: &Box2D) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    /// Intersection over union, in [0, 1].
    pub fn iou(&self, other: &Box2D) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }
}

impl TryFrom<[f64; 4]> for Box2D {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        Box2D::new(c[0], c[1], c[2], c[3])
    }
}

impl From<Box2D> for [f64; 4] {
    fn from(b: Box2D) -> [f64; 4] {
        b.corners()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> Box2D {
        Box2D::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn area_examples() {
        assert_eq!(b(0.0, 0.0, 10.0, 10.0).area(), 100.0);
        assert_eq!(b(2.0, 3.0, 4.0, 7.0).area(), 8.0);
        assert_eq!(b(0.0, 0.0, 1.0, 1.0).area(), 1.0);
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&b(20.0, 20.0, 30.0, 30.0)), 0.0);
        // intersection 50, union 150
        let c = b(5.0, 0.0, 15.0, 10.0);
        assert!((a.iou(&c) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(Box2D::new(0.0, 0.0, 0.0, 10.0).is_err());
        assert!(Box2D::new(0.0, 0.0, 10.0, 0.0).is_err());
        assert!(Box2D::new(5.0, 5.0, 4.0, 7.0).is_err());
        assert!(Box2D::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(Box2D::new(0.0, 0.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn touching_edges_are_disjoint() {
        // shared edge has zero intersection area
        assert_eq!(b(0.0, 0.0, 10.0, 10.0).iou(&b(10.0, 0.0, 20.0, 10.0)), 0.0);
    }
}
