//! Axis-aligned box arithmetic shared by every pipeline stage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid box [{x1}, {y1}, {x2}, {y2}]: coordinates must be finite, non-negative, with x1 < x2 and y1 < y2")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("invalid image geometry {width}x{height}")]
    InvalidImage { width: u32, height: u32 },
    #[error("cannot build an enclosing box for an empty group")]
    EmptyGroup,
}

/// Box in pixel coordinates, top-left `(x1, y1)` to bottom-right `(x2, y2)`.
///
/// Always has strictly positive area and finite, non-negative coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite() && *v >= 0.0);
        if !finite || x1 >= x2 || y1 >= y2 {
            return Err(GeometryError::InvalidBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    #[inline]
    pub fn x1(&self) -> f64 {
        self.x1
    }
    #[inline]
    pub fn y1(&self) -> f64 {
        self.y1
    }
    #[inline]
    pub fn x2(&self) -> f64 {
        self.x2
    }
    #[inline]
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) * 0.5, (self.y1 + self.y2) * 0.5)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// True when `other` lies entirely inside `self` (edges may touch).
    pub fn contains(&self, other: &BBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    pub fn within_image(&self, img: ImageGeometry) -> bool {
        self.x2 <= f64::from(img.width) && self.y2 <= f64::from(img.height)
    }

    /// Clamp to the image rectangle. `None` if nothing of positive area remains.
    pub fn clamp_to(&self, img: ImageGeometry) -> Option<BBox> {
        let (w, h) = (f64::from(img.width), f64::from(img.height));
        BBox::new(
            self.x1.clamp(0.0, w),
            self.y1.clamp(0.0, h),
            self.x2.clamp(0.0, w),
            self.y2.clamp(0.0, h),
        )
        .ok()
    }

    /// Integer pixel region covered by this box, rounded outward and clipped
    /// to the image. Returns `None` when no pixel remains.
    pub fn pixel_region(&self, img: ImageGeometry) -> Option<PixelRect> {
        let x0 = (self.x1.floor() as u64).min(u64::from(img.width)) as u32;
        let y0 = (self.y1.floor() as u64).min(u64::from(img.height)) as u32;
        let x1 = (self.x2.ceil() as u64).min(u64::from(img.width)) as u32;
        let y1 = (self.y2.ceil() as u64).min(u64::from(img.height)) as u32;
        (x0 < x1 && y0 < y1).then_some(PixelRect { x0, y0, x1, y1 })
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn pixel_count(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub width: u32,
    pub height: u32,
}

impl ImageGeometry {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidImage { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn diagonal(&self) -> f64 {
        f64::from(self.width).hypot(f64::from(self.height))
    }
}

/// Intersection over union; 0 for disjoint or edge-touching boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn bbox_union(a: &BBox, b: &BBox) -> BBox {
    BBox {
        x1: a.x1.min(b.x1),
        y1: a.y1.min(b.y1),
        x2: a.x2.max(b.x2),
        y2: a.y2.max(b.y2),
    }
}

/// Grow each side by `fraction` of the box's own width (horizontal sides) or
/// height (vertical sides), then clamp to the image.
///
/// A negative or non-finite fraction is treated as zero. If the input box lies
/// outside the image the clamped result may collapse; in that case the input
/// is returned unchanged.
pub fn pad_bbox(b: &BBox, fraction: f64, img: ImageGeometry) -> BBox {
    let f = if fraction.is_finite() { fraction.max(0.0) } else { 0.0 };
    let (dx, dy) = (b.width() * f, b.height() * f);
    let grown = BBox {
        x1: (b.x1 - dx).max(0.0),
        y1: (b.y1 - dy).max(0.0),
        x2: b.x2 + dx,
        y2: b.y2 + dy,
    };
    grown.clamp_to(img).unwrap_or(*b)
}

/// Euclidean distance between box centers divided by the image diagonal.
pub fn center_distance(a: &BBox, b: &BBox, img: ImageGeometry) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by) / img.diagonal()
}

/// Smallest box enclosing every member: `(min x1, min y1, max x2, max y2)`.
pub fn enclosing_bbox<'a, I>(boxes: I) -> Result<BBox, GeometryError>
where
    I: IntoIterator<Item = &'a BBox>,
{
    boxes
        .into_iter()
        .copied()
        .reduce(|acc, b| bbox_union(&acc, &b))
        .ok_or(GeometryError::EmptyGroup)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn img(w: u32, h: u32) -> ImageGeometry {
        ImageGeometry::new(w, h).unwrap()
    }

    #[test]
    fn rejects_degenerate_and_negative_boxes() {
        assert!(BBox::new(1.0, 1.0, 1.0, 2.0).is_err());
        assert!(BBox::new(1.0, 3.0, 2.0, 2.0).is_err());
        assert!(BBox::new(-1.0, 0.0, 2.0, 2.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 2.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::INFINITY, 2.0).is_err());
        assert!(ImageGeometry::new(0, 10).is_err());
    }

    #[test]
    fn iou_fixtures() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(20.0, 20.0, 30.0, 30.0)), 0.0);
        assert_eq!(iou(&a, &bb(10.0, 0.0, 20.0, 10.0)), 0.0);
        let half = iou(&a, &bb(5.0, 0.0, 15.0, 10.0));
        assert!((half - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn union_fixtures() {
        let u = bbox_union(&bb(0.0, 0.0, 1.0, 1.0), &bb(0.0, 0.0, 1.0, 1.0));
        assert_eq!(u, bb(0.0, 0.0, 1.0, 1.0));
        let u = bbox_union(&bb(0.0, 0.0, 2.0, 2.0), &bb(3.0, 3.0, 5.0, 5.0));
        assert_eq!(u, bb(0.0, 0.0, 5.0, 5.0));
        let u = bbox_union(&bb(1.0, 4.0, 3.0, 9.0), &bb(2.0, 1.0, 8.0, 5.0));
        assert_eq!(u, bb(1.0, 1.0, 8.0, 9.0));
    }

    #[test]
    fn pad_fixtures() {
        let b = bb(10.0, 10.0, 20.0, 20.0);
        assert_eq!(pad_bbox(&b, 0.0, img(100, 100)), b);
        assert_eq!(pad_bbox(&b, 0.1, img(100, 100)), bb(9.0, 9.0, 21.0, 21.0));
        let b = bb(0.0, 0.0, 50.0, 50.0);
        assert_eq!(pad_bbox(&b, 0.5, img(60, 60)), bb(0.0, 0.0, 60.0, 60.0));
    }

    #[test]
    fn center_distance_fixtures() {
        let g = img(100, 100);
        let a = bb(10.0, 10.0, 20.0, 20.0);
        assert_eq!(center_distance(&a, &a, g), 0.0);
        // Degenerate centers at the corners are approximated by tiny boxes.
        let tl = bb(0.0, 0.0, 1e-9, 1e-9);
        let br = bb(100.0 - 1e-9, 100.0 - 1e-9, 100.0, 100.0);
        assert!((center_distance(&tl, &br, g) - 1.0).abs() < 1e-9);
        let b = bb(60.0, 10.0, 70.0, 20.0);
        assert!((center_distance(&a, &b, g) - 50.0 / 20000f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn enclosing_fixtures() {
        assert_eq!(enclosing_bbox(&[]), Err(GeometryError::EmptyGroup));
        let one = bb(3.0, 4.0, 5.0, 6.0);
        assert_eq!(enclosing_bbox(&[one]).unwrap(), one);
        let two = [bb(10.0, 20.0, 30.0, 60.0), bb(40.0, 25.0, 55.0, 70.0)];
        assert_eq!(enclosing_bbox(&two).unwrap(), bb(10.0, 20.0, 55.0, 70.0));
        let three = [
            bb(5.0, 5.0, 6.0, 6.0),
            bb(1.0, 9.0, 2.0, 10.0),
            bb(8.0, 1.0, 9.0, 2.0),
        ];
        assert_eq!(enclosing_bbox(&three).unwrap(), bb(1.0, 1.0, 9.0, 10.0));
    }

    #[test]
    fn pixel_region_rounds_outward() {
        let r = bb(1.2, 2.7, 3.1, 4.0).pixel_region(img(10, 10)).unwrap();
        assert_eq!(r, PixelRect { x0: 1, y0: 2, x1: 4, y1: 4 });
        let r = bb(8.5, 8.5, 12.0, 12.0).pixel_region(img(10, 10)).unwrap();
        assert_eq!(r, PixelRect { x0: 8, y0: 8, x1: 10, y1: 10 });
        assert!(bb(10.0, 10.0, 12.0, 12.0).pixel_region(img(10, 10)).is_none());
    }

    #[test]
    fn serde_as_array() {
        let b: BBox = serde_json::from_str("[1.0, 2.0, 3.5, 4]").unwrap();
        assert_eq!(b, bb(1.0, 2.0, 3.5, 4.0));
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1.0,2.0,3.5,4.0]");
        assert!(serde_json::from_str::<BBox>("[3, 2, 1, 4]").is_err());
    }
}
