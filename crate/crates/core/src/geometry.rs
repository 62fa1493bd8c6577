//! Axis-aligned box geometry and intersection-over-union.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned bounding box in pixel coordinates, `[x_min, y_min,
/// x_max, y_max]` with the continuous-area convention (no +1 pixel).
///
/// Construction enforces `x_max > x_min`, `y_max > y_min` and finiteness,
/// so every box in the system has strictly positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        for (name, v) in [
            ("x_min", x_min),
            ("y_min", y_min),
            ("x_max", x_max),
            ("y_max", y_max),
        ] {
            if !v.is_finite() {
                return Err(Error::Schema(format!(
                    "box coordinate {name} is not finite: {v}"
                )));
            }
        }
        if x_max <= x_min {
            return Err(Error::Schema(format!(
                "degenerate box: x_max ({x_max}) <= x_min ({x_min})"
            )));
        }
        if y_max <= y_min {
            return Err(Error::Schema(format!(
                "degenerate box: y_max ({y_max}) <= y_min ({y_min})"
            )));
        }
        Ok(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    /// Area of the overlap region, zero when interiors are disjoint.
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Intersection over union, in `[0, 1]`. Symmetric; 1.0 for identical
    /// boxes, 0.0 for disjoint interiors.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// Free-function form of [`BoundingBox::iou`].
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.iou(b)
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> [f64; 4] {
        b.as_array()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn identical_boxes_have_iou_one() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(a.iou(&a), 1.0);
    }

    #[test]
    fn disjoint_boxes_have_iou_zero() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        let b = bx(3.0, 3.0, 4.0, 4.0);
        assert_eq!(a.iou(&b), 0.0);
    }

    #[test]
    fn touching_boxes_have_iou_zero() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        let b = bx(2.0, 0.0, 4.0, 2.0);
        assert_eq!(a.iou(&b), 0.0);
    }

    #[test]
    fn half_overlap_case() {
        // intersection 2, union 6
        let a = bx(0.0, 0.0, 2.0, 2.0);
        let b = bx(1.0, 0.0, 3.0, 2.0);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(BoundingBox::new(1.0, 0.0, 1.0, 2.0).is_err());
        assert!(BoundingBox::new(2.0, 0.0, 1.0, 2.0).is_err());
        assert!(BoundingBox::new(0.0, 5.0, 1.0, 2.0).is_err());
        assert!(BoundingBox::new(0.0, f64::NAN, 1.0, 2.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::INFINITY, 2.0).is_err());
    }

    #[test]
    fn serde_round_trip_is_array() {
        let a = bx(0.5, 1.5, 2.0, 4.0);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, "[0.5,1.5,2.0,4.0]");
        let back: BoundingBox = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }

    prop_compose! {
        fn arb_box()(x0 in -100.0f64..100.0, y0 in -100.0f64..100.0,
                     w in 0.01f64..50.0, h in 0.01f64..50.0) -> BoundingBox {
            BoundingBox::new(x0, y0, x0 + w, y0 + h).unwrap()
        }
    }

    proptest! {
        #[test]
        fn iou_symmetric(a in arb_box(), b in arb_box()) {
            prop_assert_eq!(a.iou(&b), b.iou(&a));
        }

        #[test]
        fn iou_bounded(a in arb_box(), b in arb_box()) {
            let v = a.iou(&b);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn self_iou_is_one(a in arb_box()) {
            prop_assert!((a.iou(&a) - 1.0).abs() < 1e-12);
        }
    }
}
