//! Axis-aligned boxes in continuous pixel coordinates.
//!
//! The origin is the top-left corner of the image, x grows rightward and y
//! grows downward. Coordinates are continuous: a full-frame box on a 640x480
//! image is `(0, 0, 640, 480)`, with no `-1` offsets anywhere.

use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum GeometryError {
    /// Corners are not finite or not ordered.
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    /// Width or height of zero.
    ZeroDims,
    /// Box extends beyond the image frame.
    OutOfBounds {
        bbox: BoundingBox,
        width: u32,
        height: u32,
    },
    /// Quarter turns outside 0..=3.
    InvalidQuarterTurns(u8),
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::InvalidBox { x_min, y_min, x_max, y_max } => write!(
                f,
                "invalid box ({x_min}, {y_min}, {x_max}, {y_max}): corners must be finite and ordered"
            ),
            GeometryError::ZeroDims => f.write_str("image dimensions must be at least 1x1"),
            GeometryError::OutOfBounds { bbox, width, height } => write!(
                f,
                "box ({}, {}, {}, {}) lies outside a {width}x{height} image",
                bbox.x_min, bbox.y_min, bbox.x_max, bbox.y_max
            ),
            GeometryError::InvalidQuarterTurns(k) => {
                write!(f, "quarter turns must be in 0..=3, got {k}")
            }
        }
    }
}

impl core::error::Error for GeometryError {}

/// Image size in pixels; both sides at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ImageDims {
    width: u32,
    height: u32,
}

impl ImageDims {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::ZeroDims);
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Dimensions after rotating the frame by `quarter_turns` * 90 degrees.
    pub fn rotated(&self, quarter_turns: u8) -> Self {
        if quarter_turns % 2 == 1 {
            Self {
                width: self.height,
                height: self.width,
            }
        } else {
            *self
        }
    }

    /// The full-frame box.
    pub fn frame(&self) -> BoundingBox {
        BoundingBox {
            x_min: 0.0,
            y_min: 0.0,
            x_max: f64::from(self.width),
            y_max: f64::from(self.height),
        }
    }
}

/// Corner-form box. Invariant: `x_min <= x_max`, `y_min <= y_max`, all finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let finite =
            x_min.is_finite() && y_min.is_finite() && x_max.is_finite() && y_max.is_finite();
        if !finite || x_min > x_max || y_min > y_max {
            return Err(GeometryError::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Builds a box from any two opposite corners.
    pub fn from_points(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            x_min: x0.min(x1),
            y_min: y0.min(y1),
            x_max: x0.max(x1),
            y_max: y0.max(y1),
        }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::from_points(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn is_within(&self, dims: ImageDims) -> bool {
        self.x_min >= 0.0
            && self.y_min >= 0.0
            && self.x_max <= f64::from(dims.width)
            && self.y_max <= f64::from(dims.height)
    }

    /// Overlap with `other`, or `None` when the boxes do not touch.
    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        (x_min <= x_max && y_min <= y_max).then_some(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Clips to the image frame. A box entirely outside collapses onto the
    /// nearest frame edge with zero area.
    pub fn clip(&self, dims: ImageDims) -> BoundingBox {
        let w = f64::from(dims.width);
        let h = f64::from(dims.height);
        BoundingBox {
            x_min: self.x_min.clamp(0.0, w),
            y_min: self.y_min.clamp(0.0, h),
            x_max: self.x_max.clamp(0.0, w),
            y_max: self.y_max.clamp(0.0, h),
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    /// Total order used wherever output must be deterministic.
    pub fn lexicographic_cmp(&self, other: &BoundingBox) -> core::cmp::Ordering {
        self.x_min
            .total_cmp(&other.x_min)
            .then(self.y_min.total_cmp(&other.y_min))
            .then(self.x_max.total_cmp(&other.x_max))
            .then(self.y_max.total_cmp(&other.y_max))
    }
}

/// Center-form box with every field a fraction of the image width or height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormCenterBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl NormCenterBox {
    pub fn to_corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn from_corners(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            cx: (x_min + x_max) / 2.0,
            cy: (y_min + y_max) / 2.0,
            w: x_max - x_min,
            h: y_max - y_min,
        }
    }

    /// Clips the corner form to the unit square and re-centers.
    pub fn clipped(&self) -> Self {
        let (x0, y0, x1, y1) = self.to_corners();
        Self::from_corners(
            x0.clamp(0.0, 1.0),
            y0.clamp(0.0, 1.0),
            x1.clamp(0.0, 1.0),
            y1.clamp(0.0, 1.0),
        )
    }
}

/// Intersection over union. Two degenerate boxes have IoU 0.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection(b).map_or(0.0, |i| i.area());
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Rotates a box together with its image frame by `quarter_turns` * 90
/// degrees clockwise. Returns the rotated box and the rotated dims.
///
/// A quarter-turn maps an axis-aligned box onto another axis-aligned box
/// exactly, so there is no enclosing-box slack.
pub fn rotate_box(
    b: &BoundingBox,
    quarter_turns: u8,
    dims: ImageDims,
) -> Result<(BoundingBox, ImageDims), GeometryError> {
    if quarter_turns > 3 {
        return Err(GeometryError::InvalidQuarterTurns(quarter_turns));
    }
    if !b.is_within(dims) {
        return Err(GeometryError::OutOfBounds {
            bbox: *b,
            width: dims.width,
            height: dims.height,
        });
    }
    let w = f64::from(dims.width);
    let h = f64::from(dims.height);
    let rotated = match quarter_turns {
        0 => *b,
        // (x, y) -> (H - y, x)
        1 => BoundingBox::from_points(h - b.y_max, b.x_min, h - b.y_min, b.x_max),
        // (x, y) -> (W - x, H - y)
        2 => BoundingBox::from_points(w - b.x_max, h - b.y_max, w - b.x_min, h - b.y_min),
        // (x, y) -> (y, W - x)
        _ => BoundingBox::from_points(b.y_min, w - b.x_max, b.y_max, w - b.x_min),
    };
    Ok((rotated, dims.rotated(quarter_turns)))
}

/// Pixel corners to normalized center form.
pub fn to_normalized(b: &BoundingBox, dims: ImageDims) -> Result<NormCenterBox, GeometryError> {
    if !b.is_within(dims) {
        return Err(GeometryError::OutOfBounds {
            bbox: *b,
            width: dims.width,
            height: dims.height,
        });
    }
    let w = f64::from(dims.width);
    let h = f64::from(dims.height);
    let (cx, cy) = b.center();
    Ok(NormCenterBox {
        cx: cx / w,
        cy: cy / h,
        w: b.width() / w,
        h: b.height() / h,
    })
}

/// Normalized center form back to pixel corners.
pub fn from_normalized(n: &NormCenterBox, dims: ImageDims) -> BoundingBox {
    let w = f64::from(dims.width);
    let h = f64::from(dims.height);
    let (x0, y0, x1, y1) = n.to_corners();
    BoundingBox::from_points(x0 * w, y0 * h, x1 * w, y1 * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    fn dims(w: u32, h: u32) -> ImageDims {
        ImageDims::new(w, h).unwrap()
    }

    #[test]
    fn iou_identity_and_disjoint() {
        assert_eq!(iou(&bb(0., 0., 10., 10.), &bb(0., 0., 10., 10.)), 1.0);
        assert_eq!(iou(&bb(0., 0., 10., 10.), &bb(20., 20., 30., 30.)), 0.0);
    }

    #[test]
    fn iou_half_overlap_matches_unit_cell_count() {
        // Count unit cells of the integer grid covered by each box.
        let a = (0..10, 0..10);
        let b = (5..15, 0..10);
        let mut inter = 0;
        let mut union = 0;
        for x in 0..15 {
            for y in 0..10 {
                let in_a = a.0.contains(&x) && a.1.contains(&y);
                let in_b = b.0.contains(&x) && b.1.contains(&y);
                inter += usize::from(in_a && in_b);
                union += usize::from(in_a || in_b);
            }
        }
        let expected = inter as f64 / union as f64;
        let got = iou(&bb(0., 0., 10., 10.), &bb(5., 0., 15., 10.));
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iou_of_degenerate_boxes_is_zero() {
        let p = bb(3., 3., 3., 3.);
        assert_eq!(iou(&p, &p), 0.0);
        assert_eq!(iou(&p, &bb(0., 0., 10., 10.)), 0.0);
    }

    #[test]
    fn rotate_examples() {
        let d = dims(100, 200);
        let b = bb(10., 20., 30., 60.);
        assert_eq!(rotate_box(&b, 0, d).unwrap(), (b, d));
        assert_eq!(
            rotate_box(&b, 1, d).unwrap(),
            (bb(140., 10., 180., 30.), dims(200, 100))
        );
        assert_eq!(rotate_box(&b, 2, d).unwrap(), (bb(70., 140., 90., 180.), d));
        // (x, y) -> (y, W - x)
        assert_eq!(
            rotate_box(&b, 3, d).unwrap(),
            (bb(20., 70., 60., 90.), dims(200, 100))
        );
    }

    #[test]
    fn rotate_rejects_out_of_bounds_and_bad_turns() {
        let d = dims(100, 200);
        assert!(matches!(
            rotate_box(&bb(90., 0., 110., 10.), 1, d),
            Err(GeometryError::OutOfBounds { .. })
        ));
        assert_eq!(
            rotate_box(&bb(0., 0., 1., 1.), 4, d),
            Err(GeometryError::InvalidQuarterTurns(4))
        );
    }

    #[test]
    fn normalized_examples() {
        let d = dims(100, 200);
        let n = to_normalized(&bb(0., 0., 100., 200.), d).unwrap();
        assert_eq!(
            n,
            NormCenterBox {
                cx: 0.5,
                cy: 0.5,
                w: 1.0,
                h: 1.0
            }
        );
        let n = to_normalized(&bb(25., 50., 75., 150.), d).unwrap();
        assert_eq!(
            n,
            NormCenterBox {
                cx: 0.5,
                cy: 0.5,
                w: 0.5,
                h: 0.5
            }
        );
        assert_eq!(from_normalized(&n, d), bb(25., 50., 75., 150.));
    }

    #[test]
    fn zero_dims_rejected() {
        assert_eq!(ImageDims::new(0, 5), Err(GeometryError::ZeroDims));
        assert_eq!(ImageDims::new(5, 0), Err(GeometryError::ZeroDims));
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BoundingBox::new(2., 0., 1., 1.).is_err());
        assert!(BoundingBox::new(0., 0., f64::NAN, 1.).is_err());
    }

    #[test]
    fn clip_and_translate() {
        let d = dims(640, 640);
        let moved = bb(630., 0., 640., 10.).translate(10., 0.);
        let clipped = moved.clip(d);
        assert_eq!(clipped.area(), 0.0);
        assert_eq!(bb(-5., -5., 5., 5.).clip(d), bb(0., 0., 5., 5.));
    }
}
