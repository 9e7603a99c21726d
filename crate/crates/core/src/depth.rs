//! Single-channel depth maps and per-person median depth cues.

use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage};
use thiserror::Error;

use crate::geometry::{BBox, ImageGeometry, PixelRect};

#[derive(Debug, Error)]
pub enum DepthError {
    #[error("depth map not found: {0}")]
    MissingFile(PathBuf),
    #[error("depth map {path}: expected {expected_w}x{expected_h}, found {found_w}x{found_h}")]
    DimensionMismatch {
        path: PathBuf,
        expected_w: u32,
        expected_h: u32,
        found_w: u32,
        found_h: u32,
    },
    #[error("depth map {path}: unsupported format ({detail}); expected 8-bit single-channel grayscale")]
    UnsupportedFormat { path: PathBuf, detail: String },
    #[error("box {0:?} covers no depth pixels")]
    EmptyRegion([f64; 4]),
}

/// 8-bit depth map; larger values are whatever the upstream estimator emits.
#[derive(Debug, Clone)]
pub struct DepthMap {
    pixels: GrayImage,
}

impl DepthMap {
    pub fn from_gray(pixels: GrayImage) -> Self {
        Self { pixels }
    }

    /// Build from row-major values. Panics if `values.len() != width * height`.
    pub fn from_values(width: u32, height: u32, values: Vec<u8>) -> Self {
        let pixels = GrayImage::from_raw(width, height, values)
            .expect("depth buffer length must equal width * height");
        Self { pixels }
    }

    pub fn geometry(&self) -> ImageGeometry {
        ImageGeometry {
            width: self.pixels.width(),
            height: self.pixels.height(),
        }
    }

    pub fn as_gray(&self) -> &GrayImage {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels.get_pixel(x, y).0[0]
    }

    fn region_values(&self, r: PixelRect) -> Vec<u8> {
        let mut out = Vec::with_capacity(r.pixel_count() as usize);
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                out.push(self.get(x, y));
            }
        }
        out
    }
}

/// Median depths of two persons and their absolute difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DepthCue {
    pub z_a: u8,
    pub z_b: u8,
    pub abs_diff: u8,
}

impl DepthCue {
    pub fn new(z_a: u8, z_b: u8) -> Self {
        Self {
            z_a,
            z_b,
            abs_diff: z_a.abs_diff(z_b),
        }
    }
}

pub fn load_depth_map(path: &Path, expected: ImageGeometry) -> Result<DepthMap, DepthError> {
    if !path.exists() {
        return Err(DepthError::MissingFile(path.to_path_buf()));
    }
    let decoded = image::open(path).map_err(|e| DepthError::UnsupportedFormat {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let gray = match decoded {
        DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(DepthError::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: format!("{:?}", other.color()),
            })
        }
    };
    if gray.width() != expected.width || gray.height() != expected.height {
        return Err(DepthError::DimensionMismatch {
            path: path.to_path_buf(),
            expected_w: expected.width,
            expected_h: expected.height,
            found_w: gray.width(),
            found_h: gray.height(),
        });
    }
    Ok(DepthMap::from_gray(gray))
}

/// Lower median of a value multiset: element `(n - 1) / 2` of the sorted values.
pub fn lower_median(values: &mut [u8]) -> Option<u8> {
    if values.is_empty() {
        return None;
    }
    let k = (values.len() - 1) / 2;
    let (_, m, _) = values.select_nth_unstable(k);
    Some(*m)
}

/// Lower median of all depth pixels covered by `b` (rounded outward).
pub fn median_depth(d: &DepthMap, b: &BBox) -> Result<u8, DepthError> {
    let region = b
        .pixel_region(d.geometry())
        .ok_or(DepthError::EmptyRegion(b.to_array()))?;
    let mut values = d.region_values(region);
    lower_median(&mut values).ok_or(DepthError::EmptyRegion(b.to_array()))
}

pub fn depth_cue(d: &DepthMap, a: &BBox, b: &BBox) -> Result<DepthCue, DepthError> {
    Ok(DepthCue::new(median_depth(d, a)?, median_depth(d, b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Luma, Rgb, RgbImage};

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn median_fixtures() {
        let constant = DepthMap::from_values(8, 8, vec![77; 64]);
        assert_eq!(median_depth(&constant, &bb(1.0, 1.0, 6.5, 7.0)).unwrap(), 77);

        let four = DepthMap::from_values(4, 1, vec![40, 10, 30, 20]);
        assert_eq!(median_depth(&four, &bb(0.0, 0.0, 4.0, 1.0)).unwrap(), 20);

        let three = DepthMap::from_values(3, 1, vec![5, 200, 5]);
        assert_eq!(median_depth(&three, &bb(0.0, 0.0, 3.0, 1.0)).unwrap(), 5);
    }

    #[test]
    fn median_empty_region() {
        let d = DepthMap::from_values(4, 4, vec![0; 16]);
        let outside = bb(4.0, 4.0, 9.0, 9.0);
        assert!(matches!(median_depth(&d, &outside), Err(DepthError::EmptyRegion(_))));
    }

    #[test]
    fn cue_fixtures() {
        assert_eq!(DepthCue::new(120, 130), DepthCue { z_a: 120, z_b: 130, abs_diff: 10 });
        assert_eq!(DepthCue::new(255, 0).abs_diff, 255);
        let mut values = vec![120u8; 8];
        values.extend(vec![130u8; 8]);
        let d = DepthMap::from_values(4, 4, values);
        let top = bb(0.0, 0.0, 4.0, 2.0);
        let bottom = bb(0.0, 2.0, 4.0, 4.0);
        assert_eq!(depth_cue(&d, &top, &bottom).unwrap(), DepthCue::new(120, 130));
        assert_eq!(depth_cue(&d, &top, &top).unwrap().abs_diff, 0);
    }

    #[test]
    fn load_png_and_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let g = GrayImage::from_fn(64, 48, |x, y| Luma([((x + y) % 256) as u8]));
        let png = dir.path().join("d.png");
        let pgm = dir.path().join("d.pgm");
        g.save(&png).unwrap();
        g.save(&pgm).unwrap();
        let geom = ImageGeometry::new(64, 48).unwrap();
        for p in [&png, &pgm] {
            let d = load_depth_map(p, geom).unwrap();
            assert_eq!(d.get(10, 5), 15);
        }
        let wrong = ImageGeometry::new(128, 96).unwrap();
        assert!(matches!(
            load_depth_map(&png, wrong),
            Err(DepthError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn load_rejects_rgb_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let rgb = RgbImage::from_pixel(8, 8, Rgb([1, 2, 3]));
        let p = dir.path().join("rgb.png");
        rgb.save(&p).unwrap();
        let geom = ImageGeometry::new(8, 8).unwrap();
        assert!(matches!(
            load_depth_map(&p, geom),
            Err(DepthError::UnsupportedFormat { .. })
        ));
        assert!(matches!(
            load_depth_map(&dir.path().join("nope.png"), geom),
            Err(DepthError::MissingFile(_))
        ));
    }

    #[test]
    fn load_rejects_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let g16 = image::ImageBuffer::<Luma<u16>, Vec<u16>>::from_pixel(4, 4, Luma([1000]));
        let p = dir.path().join("d16.png");
        g16.save(&p).unwrap();
        let geom = ImageGeometry::new(4, 4).unwrap();
        assert!(matches!(
            load_depth_map(&p, geom),
            Err(DepthError::UnsupportedFormat { .. })
        ));
    }
}
