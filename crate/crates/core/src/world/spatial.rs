use serde::{Deserialize, Serialize};

use super::BBox;
use crate::error::{Error, Result};

/// `[x_min, y_min, x_max, y_max, x_center, y_center, width, height]`.
///
/// Coordinates map `[0, W]` (resp. `[0, H]`) onto `[-1, 1]`; width and height
/// are `2w/W` and `2h/H`, so a full-image box has extent 2.
pub fn spatial_features(bbox: &BBox, width: f64, height: f64) -> Result<[f64; 8]> {
    if !(bbox.width > 0.0 && bbox.height > 0.0) {
        return Err(Error::Validation(format!(
            "degenerate bounding box {:?}",
            <[f64; 4]>::from(*bbox)
        )));
    }
    let x_max = bbox.x + bbox.width;
    let y_max = bbox.y + bbox.height;
    if bbox.x < 0.0 || bbox.y < 0.0 || x_max > width || y_max > height {
        return Err(Error::Validation(format!(
            "bounding box {:?} outside {width}x{height} image",
            <[f64; 4]>::from(*bbox)
        )));
    }
    let nx = |x: f64| 2.0 * x / width - 1.0;
    let ny = |y: f64| 2.0 * y / height - 1.0;
    let (cx, cy) = bbox.center();
    Ok([
        nx(bbox.x),
        ny(bbox.y),
        nx(x_max),
        ny(y_max),
        nx(cx),
        ny(cy),
        2.0 * bbox.width / width,
        2.0 * bbox.height / height,
    ])
}

/// Coarse image region of an object's centre.
///
/// In normalised centre coordinates `(x, y)` (y grows downwards), the centre
/// region is the diamond `|x| + |y| < MIDDLE_RADIUS`; everything else is a
/// quadrant. Every region is convex, so a linear softmax over `(x, y)` can
/// represent the partition exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
    Middle,
}

impl Region {
    pub const ALL: &'static [Region] = &[
        Region::TopLeft,
        Region::TopRight,
        Region::BottomLeft,
        Region::BottomRight,
        Region::Middle,
    ];

    pub const MIDDLE_RADIUS: f64 = 0.6;

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&r| r == self).expect("listed region")
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn phrase(self) -> &'static str {
        match self {
            Region::TopLeft => "top left",
            Region::TopRight => "top right",
            Region::BottomLeft => "bottom left",
            Region::BottomRight => "bottom right",
            Region::Middle => "middle",
        }
    }

    /// Region of a normalised centre `(x, y)` in `[-1, 1]^2`.
    pub fn of_normalized(x: f64, y: f64) -> Self {
        if x.abs() + y.abs() < Self::MIDDLE_RADIUS {
            return Region::Middle;
        }
        match (x < 0.0, y < 0.0) {
            (true, true) => Region::TopLeft,
            (false, true) => Region::TopRight,
            (true, false) => Region::BottomLeft,
            (false, false) => Region::BottomRight,
        }
    }

    pub fn of_bbox(bbox: &BBox, width: f64, height: f64) -> Self {
        let (cx, cy) = bbox.center();
        Self::of_normalized(2.0 * cx / width - 1.0, 2.0 * cy / height - 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox { x, y, width: w, height: h }
    }

    #[test]
    fn full_image_box() {
        let s = spatial_features(&bb(0.0, 0.0, 100.0, 50.0), 100.0, 50.0).unwrap();
        assert_eq!(s, [-1.0, -1.0, 1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn centred_quarter_box_has_zero_centre() {
        let s = spatial_features(&bb(25.0, 25.0, 50.0, 50.0), 100.0, 100.0).unwrap();
        assert_eq!(s[4], 0.0);
        assert_eq!(s[5], 0.0);
    }

    #[test]
    fn hand_computed_box() {
        // (10, 20, 30, 40) on 200x100:
        // x_min = 20/200 - 1, y_min = 40/100 - 1, x_max = 80/200 - 1,
        // y_max = 120/100 - 1, cx = 50/200 - 1, cy = 80/100 - 1,
        // w = 60/200, h = 80/100.
        let s = spatial_features(&bb(10.0, 20.0, 30.0, 40.0), 200.0, 100.0).unwrap();
        let expected = [-0.9, -0.6, -0.6, 0.2, -0.75, -0.2, 0.3, 0.8];
        for (a, b) in s.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn degenerate_or_outside_boxes_rejected() {
        assert!(spatial_features(&bb(1.0, 1.0, 0.0, 5.0), 10.0, 10.0).is_err());
        assert!(spatial_features(&bb(8.0, 1.0, 5.0, 5.0), 10.0, 10.0).is_err());
    }

    #[test]
    fn quadrant_rule_by_hand_geometry() {
        // Centre at (0.25W, 0.25H) -> normalised (-0.5, -0.5), |x|+|y| = 1 >= 0.6.
        let b = bb(15.0, 15.0, 20.0, 20.0);
        assert_eq!(Region::of_bbox(&b, 100.0, 100.0), Region::TopLeft);
        assert_eq!(Region::of_normalized(0.1, -0.2), Region::Middle);
        assert_eq!(Region::of_normalized(0.7, 0.3), Region::BottomRight);
    }
}
