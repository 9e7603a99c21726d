use image::{Rgb, RgbImage};

use super::{build_prompt, ClassifyError};
use crate::depth::{depth_cue, DepthCue, DepthMap};
use crate::geometry::{bbox_union, pad_bbox, BBox, PixelRect};
use crate::scene_io::{PersonId, Scene};

pub const FIRST_PERSON_COLOR: Rgb<u8> = Rgb([255, 0, 0]);
pub const SECOND_PERSON_COLOR: Rgb<u8> = Rgb([0, 0, 255]);

/// Rendered input for one pair: aligned RGB and depth crops of the padded
/// union box, each with 1-pixel outlines around the two persons.
#[derive(Debug, Clone)]
pub struct PairQuery {
    pub scene_id: String,
    pub person_a: PersonId,
    pub person_b: PersonId,
    pub union_box: BBox,
    /// Pixel region (in image coordinates) that both crops were cut from.
    pub crop_region: PixelRect,
    pub rgb_crop: RgbImage,
    /// Depth crop expanded to three channels so the outlines keep their colors.
    pub depth_crop: RgbImage,
    pub cue: DepthCue,
    pub prompt: String,
}

impl PairQuery {
    pub fn pair_id(&self) -> String {
        format!("{}:{}:{}", self.scene_id, self.person_a, self.person_b)
    }
}

fn crop_rgb(img: &RgbImage, r: PixelRect) -> RgbImage {
    image::imageops::crop_imm(img, r.x0, r.y0, r.width(), r.height()).to_image()
}

fn crop_depth(d: &DepthMap, r: PixelRect) -> RgbImage {
    RgbImage::from_fn(r.width(), r.height(), |x, y| {
        let v = d.get(r.x0 + x, r.y0 + y);
        Rgb([v, v, v])
    })
}

/// Draw a 1-pixel outline of `rect` (image coordinates) into a crop that
/// starts at `origin`.
fn outline(canvas: &mut RgbImage, origin: PixelRect, rect: PixelRect, color: Rgb<u8>) {
    let x0 = rect.x0.saturating_sub(origin.x0);
    let y0 = rect.y0.saturating_sub(origin.y0);
    let x1 = (rect.x1 - origin.x0).min(canvas.width()) - 1;
    let y1 = (rect.y1 - origin.y0).min(canvas.height()) - 1;
    for x in x0..=x1 {
        canvas.put_pixel(x, y0, color);
        canvas.put_pixel(x, y1, color);
    }
    for y in y0..=y1 {
        canvas.put_pixel(x0, y, color);
        canvas.put_pixel(x1, y, color);
    }
}

/// Build the classifier input for persons `a` and `b`.
///
/// Union, padding and crop are applied identically to the RGB image and the
/// depth map. The depth cue is computed from the unpadded person boxes.
pub fn build_pair_query(
    scene: &Scene,
    rgb: &RgbImage,
    depth: &DepthMap,
    a: PersonId,
    b: PersonId,
    pad_fraction: f64,
    template: &str,
) -> Result<PairQuery, ClassifyError> {
    let pa = scene.person(a).ok_or(ClassifyError::UnknownPerson(a))?;
    let pb = scene.person(b).ok_or(ClassifyError::UnknownPerson(b))?;
    let geom = scene.image;
    if (rgb.width(), rgb.height()) != (geom.width, geom.height) {
        return Err(ClassifyError::MissingAsset {
            path: scene.rgb_path.clone().into(),
            detail: format!(
                "RGB image is {}x{}, scene declares {}x{}",
                rgb.width(),
                rgb.height(),
                geom.width,
                geom.height
            ),
        });
    }
    if depth.geometry() != geom {
        return Err(ClassifyError::MissingAsset {
            path: scene.depth_path.clone().into(),
            detail: "depth map size differs from scene".into(),
        });
    }

    let union_box = pad_bbox(&bbox_union(&pa.bbox, &pb.bbox), pad_fraction, geom);
    let region = union_box.pixel_region(geom).ok_or(ClassifyError::EmptyRegion(a, b))?;
    let rect_a = pa.bbox.pixel_region(geom).ok_or(ClassifyError::EmptyRegion(a, b))?;
    let rect_b = pb.bbox.pixel_region(geom).ok_or(ClassifyError::EmptyRegion(a, b))?;

    let mut rgb_crop = crop_rgb(rgb, region);
    let mut depth_crop = crop_depth(depth, region);
    for canvas in [&mut rgb_crop, &mut depth_crop] {
        outline(canvas, region, rect_a, FIRST_PERSON_COLOR);
        outline(canvas, region, rect_b, SECOND_PERSON_COLOR);
    }

    let cue = depth_cue(depth, &pa.bbox, &pb.bbox).map_err(|_| ClassifyError::EmptyRegion(a, b))?;
    let prompt = build_prompt(template, &cue)?;
    Ok(PairQuery {
        scene_id: scene.scene_id.clone(),
        person_a: a,
        person_b: b,
        union_box,
        crop_region: region,
        rgb_crop,
        depth_crop,
        cue,
        prompt,
    })
}
