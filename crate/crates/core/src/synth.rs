//! Synthetic scenes with planted social groups.
//!
//! Group members stand side by side at nearly equal depth; distinct groups
//! and singletons are kept apart by a fixed margin. Depth maps fill each
//! person box with that person's depth so median depths are exact, and RGB
//! images are flat-colored stand-ins with outlined persons.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::Judgment;
use crate::depth::DepthMap;
use crate::geometry::{enclosing_bbox, BBox, ImageGeometry};
use crate::pair_filter::{Provenance, RelationMatrix};
use crate::scene_io::{write_manifest, GroupAnnotation, PersonDetection, Scene, SceneError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssetFormat {
    /// `.png` depth and RGB images.
    #[default]
    Png,
    /// Uncompressed `.pgm` depth and `.ppm` RGB images.
    Pnm,
}

impl AssetFormat {
    fn extensions(self) -> (&'static str, &'static str) {
        match self {
            AssetFormat::Png => ("png", "png"),
            AssetFormat::Pnm => ("ppm", "pgm"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_scenes: usize,
    pub width: u32,
    pub height: u32,
    pub persons_min: usize,
    pub persons_max: usize,
    /// `(group size, probability)`; sizes must be at least 2.
    pub group_sizes: Vec<(usize, f64)>,
    /// Probability that the next placed unit is a lone person.
    pub singleton_prob: f64,
    pub flip_rate: f64,
    pub notsure_rate: f64,
    pub seed: u64,
    pub format: AssetFormat,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_scenes: 100,
            width: 640,
            height: 480,
            persons_min: 2,
            persons_max: 8,
            group_sizes: vec![(2, 0.6), (3, 0.25), (4, 0.15)],
            singleton_prob: 0.3,
            flip_rate: 0.0,
            notsure_rate: 0.0,
            seed: 0,
            format: AssetFormat::Png,
        }
    }
}

// Layout constants, pixels.
const PERSON_W: (u32, u32) = (18, 30);
const PERSON_H: (u32, u32) = (56, 96);
const MEMBER_GAP: (u32, u32) = (3, 10);
const UNIT_MARGIN: f64 = 56.0;
const PLACEMENT_ATTEMPTS: usize = 400;

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.width < 160 || self.height < 120 {
            return err("image must be at least 160x120");
        }
        if self.persons_min > self.persons_max {
            return err("persons_min exceeds persons_max");
        }
        if self.group_sizes.is_empty() {
            return err("group_sizes is empty");
        }
        if self.group_sizes.iter().any(|&(s, p)| s < 2 || !(0.0..=1.0).contains(&p)) {
            return err("group sizes must be >= 2 with probabilities in [0, 1]");
        }
        let total: f64 = self.group_sizes.iter().map(|g| g.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return err("group size probabilities must sum to 1");
        }
        for (name, r) in [
            ("singleton_prob", self.singleton_prob),
            ("flip_rate", self.flip_rate),
            ("notsure_rate", self.notsure_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(SynthError::Config(format!("{name} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn image(&self) -> ImageGeometry {
        ImageGeometry {
            width: self.width,
            height: self.height,
        }
    }
}

/// A generated scene plus the planted depth of each person (same order as
/// `scene.persons`) and a display color per person.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub scene: Scene,
    pub depths: Vec<u8>,
    pub colors: Vec<[u8; 3]>,
}

impl SynthScene {
    /// Scene with median depths filled from the planted values.
    pub fn with_depths(&self) -> Scene {
        let mut s = self.scene.clone();
        for (p, &z) in s.persons.iter_mut().zip(&self.depths) {
            p.median_depth = Some(z);
        }
        s
    }

    pub fn render_depth(&self) -> DepthMap {
        let geom = self.scene.image;
        let mut img = GrayImage::from_fn(geom.width, geom.height, |_, y| {
            Luma([(8 + y * 180 / geom.height) as u8])
        });
        for (p, &z) in self.scene.persons.iter().zip(&self.depths) {
            let r = p.bbox.pixel_region(geom).expect("synthetic boxes lie inside the image");
            for y in r.y0..r.y1 {
                for x in r.x0..r.x1 {
                    img.put_pixel(x, y, Luma([z]));
                }
            }
        }
        DepthMap::from_gray(img)
    }

    pub fn render_rgb(&self) -> RgbImage {
        let geom = self.scene.image;
        let mut img = RgbImage::from_pixel(geom.width, geom.height, Rgb([150, 150, 140]));
        for (p, c) in self.scene.persons.iter().zip(&self.colors) {
            let r = p.bbox.pixel_region(geom).expect("synthetic boxes lie inside the image");
            let edge = Rgb(c.map(|v| v / 3));
            for y in r.y0..r.y1 {
                for x in r.x0..r.x1 {
                    let border = x == r.x0 || y == r.y0 || x + 1 == r.x1 || y + 1 == r.y1;
                    img.put_pixel(x, y, if border { edge } else { Rgb(*c) });
                }
            }
        }
        img
    }
}

fn sample_group_size(rng: &mut ChaCha8Rng, sizes: &[(usize, f64)]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(s, p) in sizes {
        acc += p;
        if u < acc {
            return s;
        }
    }
    sizes.last().map(|g| g.0).unwrap_or(2)
}

struct Unit {
    boxes: Vec<BBox>,
    depths: Vec<u8>,
    color: [u8; 3],
}

fn footprint_clear(candidate: &BBox, placed: &[BBox]) -> bool {
    placed.iter().all(|o| {
        candidate.x2() + UNIT_MARGIN <= o.x1()
            || o.x2() + UNIT_MARGIN <= candidate.x1()
            || candidate.y2() + UNIT_MARGIN <= o.y1()
            || o.y2() + UNIT_MARGIN <= candidate.y1()
    })
}

fn place_unit(rng: &mut ChaCha8Rng, size: usize, geom: ImageGeometry, placed: &[BBox]) -> Option<Unit> {
    let height = rng.gen_range(PERSON_H.0..=PERSON_H.1);
    let widths: Vec<u32> = (0..size).map(|_| rng.gen_range(PERSON_W.0..=PERSON_W.1)).collect();
    let heights: Vec<u32> = (0..size)
        .map(|_| (height as i64 + rng.gen_range(-6..=6)).max(PERSON_H.0 as i64) as u32)
        .collect();
    let gaps: Vec<u32> = (1..size).map(|_| rng.gen_range(MEMBER_GAP.0..=MEMBER_GAP.1)).collect();
    let total_w: u32 = widths.iter().sum::<u32>() + gaps.iter().sum::<u32>();
    let max_h = *heights.iter().max().unwrap();
    if total_w >= geom.width || max_h >= geom.height {
        return None;
    }
    let base_z: i32 = rng.gen_range(20..=235);
    let depths: Vec<u8> = (0..size)
        .map(|_| (base_z + rng.gen_range(-3..=3)).clamp(0, 255) as u8)
        .collect();
    let color = [rng.gen_range(40..=230), rng.gen_range(40..=230), rng.gen_range(40..=230)];

    for _ in 0..PLACEMENT_ATTEMPTS {
        let x0 = rng.gen_range(0..=geom.width - total_w);
        let y0 = rng.gen_range(0..=geom.height - max_h);
        let footprint = BBox::new(f64::from(x0), f64::from(y0), f64::from(x0 + total_w), f64::from(y0 + max_h)).ok()?;
        if !footprint_clear(&footprint, placed) {
            continue;
        }
        let mut x = x0;
        let mut boxes = Vec::with_capacity(size);
        for k in 0..size {
            let top = y0 + (max_h - heights[k]);
            boxes.push(
                BBox::new(f64::from(x), f64::from(top), f64::from(x + widths[k]), f64::from(y0 + max_h))
                    .expect("positive person size"),
            );
            x += widths[k] + gaps.get(k).copied().unwrap_or(0);
        }
        return Some(Unit { boxes, depths, color });
    }
    None
}

fn generate_one(rng: &mut ChaCha8Rng, cfg: &SynthConfig, index: usize) -> SynthScene {
    let geom = cfg.image();
    let n = rng.gen_range(cfg.persons_min..=cfg.persons_max);
    let mut sizes = Vec::new();
    let mut remaining = n;
    while remaining > 0 {
        let size = if remaining == 1 || rng.gen::<f64>() < cfg.singleton_prob {
            1
        } else {
            sample_group_size(rng, &cfg.group_sizes).min(remaining)
        };
        sizes.push(size);
        remaining -= size;
    }

    let mut footprints = Vec::new();
    let mut units = Vec::new();
    for size in sizes {
        if let Some(u) = place_unit(rng, size, geom, &footprints) {
            footprints.push(enclosing_bbox(&u.boxes).expect("unit has members"));
            units.push(u);
        }
    }

    let total: usize = units.iter().map(|u| u.boxes.len()).sum();
    let mut ids: Vec<u32> = (1..=total as u32).collect();
    ids.shuffle(rng);

    let mut persons = Vec::with_capacity(total);
    let mut depths = Vec::with_capacity(total);
    let mut colors = Vec::with_capacity(total);
    let mut groups = Vec::new();
    let mut next = ids.into_iter();
    for u in &units {
        let mut members = Vec::new();
        for (b, &z) in u.boxes.iter().zip(&u.depths) {
            let id = next.next().expect("one id per person");
            members.push(id);
            persons.push(PersonDetection {
                person_id: id,
                bbox: *b,
                confidence: (rng.gen_range(55..=100) as f64) / 100.0,
                median_depth: None,
            });
            depths.push(z);
            colors.push(u.color);
        }
        if members.len() >= 2 {
            members.sort_unstable();
            groups.push((members, enclosing_bbox(&u.boxes).expect("unit has members")));
        }
    }

    // Persons in id order, carrying their depth and color along.
    let mut order: Vec<usize> = (0..persons.len()).collect();
    order.sort_by_key(|&k| persons[k].person_id);
    let persons: Vec<_> = order.iter().map(|&k| persons[k].clone()).collect();
    let depths: Vec<_> = order.iter().map(|&k| depths[k]).collect();
    let colors: Vec<_> = order.iter().map(|&k| colors[k]).collect();

    groups.sort_by_key(|g| g.0[0]);
    let gt_groups = groups
        .into_iter()
        .enumerate()
        .map(|(k, (member_ids, bbox))| GroupAnnotation {
            group_id: k as u32,
            member_ids,
            bbox,
        })
        .collect();

    let scene_id = format!("synth_{index:05}");
    let (rgb_ext, depth_ext) = cfg.format.extensions();
    SynthScene {
        scene: Scene {
            rgb_path: format!("rgb/{scene_id}.{rgb_ext}"),
            depth_path: format!("depth/{scene_id}.{depth_ext}"),
            scene_id,
            image: geom,
            persons,
            gt_groups: Some(gt_groups),
        },
        depths,
        colors,
    }
}

/// Deterministic for a given config (including seed).
pub fn generate_scenes(cfg: &SynthConfig) -> Result<Vec<SynthScene>, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.n_scenes).map(|k| generate_one(&mut rng, cfg, k)).collect())
}

/// Generate scenes and write `manifest.jsonl`, `rgb/` and `depth/` under
/// `out_dir`. Returns the manifest path.
pub fn write_corpus(cfg: &SynthConfig, out_dir: &Path) -> Result<PathBuf, SynthError> {
    let scenes = generate_scenes(cfg)?;
    for sub in ["rgb", "depth"] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| SynthError::Io {
            path: dir.clone(),
            message: e.to_string(),
        })?;
    }
    for s in &scenes {
        let rgb_path = out_dir.join(&s.scene.rgb_path);
        s.render_rgb().save(&rgb_path).map_err(|e| SynthError::Io {
            path: rgb_path.clone(),
            message: e.to_string(),
        })?;
        let depth_path = out_dir.join(&s.scene.depth_path);
        s.render_depth().as_gray().save(&depth_path).map_err(|e| SynthError::Io {
            path: depth_path.clone(),
            message: e.to_string(),
        })?;
    }
    let manifest = out_dir.join("manifest.jsonl");
    let plain: Vec<Scene> = scenes.into_iter().map(|s| s.scene).collect();
    write_manifest(&manifest, &plain)?;
    Ok(manifest)
}

/// Independently perturb every classified pair: with probability `flip_rate`
/// swap Yes and No, otherwise with probability `notsure_rate` replace it with
/// NotSure. One uniform draw per pair decides both, so the two outcomes are
/// exclusive and, for a fixed seed, the flipped set grows monotonically with
/// `flip_rate`.
pub fn corrupt_judgments(m: &RelationMatrix, flip_rate: f64, notsure_rate: f64, seed: u64) -> RelationMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = m.clone();
    for (i, j) in m.pairs() {
        if m.provenance(i, j) != Provenance::Classified {
            continue;
        }
        let u: f64 = rng.gen();
        let current = m.get(i, j);
        let next = if u < flip_rate {
            match current {
                Judgment::Yes => Judgment::No,
                Judgment::No => Judgment::Yes,
                Judgment::NotSure => Judgment::NotSure,
            }
        } else if u < flip_rate + notsure_rate {
            Judgment::NotSure
        } else {
            current
        };
        out.set(i, j, next, Provenance::Classified);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::median_depth;
    use crate::geometry::center_distance;

    fn cfg(n: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n_scenes: n,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn zero_scenes() {
        assert!(generate_scenes(&cfg(0, 1)).unwrap().is_empty());
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(1, 1);
        c.group_sizes = vec![(2, 0.5), (3, 0.4)];
        assert!(matches!(generate_scenes(&c), Err(SynthError::Config(_))));
        let mut c = cfg(1, 1);
        c.flip_rate = 1.5;
        assert!(c.validate().is_err());
        let mut c = cfg(1, 1);
        c.group_sizes = vec![(1, 1.0)];
        assert!(c.validate().is_err());
        let mut c = cfg(1, 1);
        c.persons_min = 5;
        c.persons_max = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate_scenes(&cfg(20, 7)).unwrap(), generate_scenes(&cfg(20, 7)).unwrap());
        assert_ne!(generate_scenes(&cfg(20, 7)).unwrap(), generate_scenes(&cfg(20, 8)).unwrap());
    }

    #[test]
    fn planted_structure() {
        for s in generate_scenes(&cfg(60, 3)).unwrap() {
            let scene = &s.scene;
            let groups = scene.gt_groups.as_ref().unwrap();
            let depth = s.render_depth();
            for g in groups {
                assert!(g.member_ids.len() >= 2);
                let boxes: Vec<BBox> = g.member_ids.iter().map(|&id| scene.person(id).unwrap().bbox).collect();
                assert_eq!(enclosing_bbox(&boxes).unwrap(), g.bbox);
            }
            for (k, p) in scene.persons.iter().enumerate() {
                assert!(p.bbox.within_image(scene.image));
                assert_eq!(median_depth(&depth, &p.bbox).unwrap(), s.depths[k]);
            }
            // Persons from different units are never closer than the margin allows.
            let unit_of = |id: u32| groups.iter().position(|g| g.member_ids.contains(&id));
            for a in &scene.persons {
                for b in &scene.persons {
                    let same = a.person_id == b.person_id
                        || (unit_of(a.person_id).is_some() && unit_of(a.person_id) == unit_of(b.person_id));
                    if !same {
                        let d = center_distance(&a.bbox, &b.bbox, scene.image) * scene.image.diagonal();
                        assert!(d >= UNIT_MARGIN, "{} vs {}: {d}", a.person_id, b.person_id);
                    }
                }
            }
        }
    }

    #[test]
    fn written_corpus_passes_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(5, 11);
        c.format = AssetFormat::Pnm;
        let manifest = write_corpus(&c, dir.path()).unwrap();
        let loaded = crate::scene_io::load_scenes(&manifest).unwrap();
        let generated: Vec<Scene> = generate_scenes(&c).unwrap().into_iter().map(|s| s.scene).collect();
        assert_eq!(loaded, generated);
        assert!(dir.path().join(&loaded[0].depth_path).exists());
        assert!(loaded[0].depth_path.ends_with(".pgm"));
    }

    fn yes_no_matrix(n: u32) -> RelationMatrix {
        let mut m = RelationMatrix::new((0..n).collect());
        for (i, j) in m.pairs().collect::<Vec<_>>() {
            let v = if (i + j) % 2 == 0 { Judgment::Yes } else { Judgment::No };
            m.set(i, j, v, Provenance::Classified);
        }
        m
    }

    #[test]
    fn corruption_identity_and_full_flip() {
        let m = yes_no_matrix(12);
        assert_eq!(corrupt_judgments(&m, 0.0, 0.0, 5), m);
        let flipped = corrupt_judgments(&m, 1.0, 0.0, 5);
        for (i, j) in m.pairs() {
            assert_ne!(flipped.get(i, j), m.get(i, j));
            assert_ne!(flipped.get(i, j), Judgment::NotSure);
        }
        assert!(flipped.is_symmetric());
    }

    #[test]
    fn corruption_rate_matches_expectation() {
        // 142 persons give 10 011 pairs.
        let m = yes_no_matrix(142);
        let c = corrupt_judgments(&m, 0.1, 0.0, 99);
        let total = m.pairs().count();
        let flipped = m.pairs().filter(|&(i, j)| c.get(i, j) != m.get(i, j)).count();
        let frac = flipped as f64 / total as f64;
        assert!(total >= 10_000);
        assert!((frac - 0.1).abs() <= 0.01, "{frac}");
    }

    #[test]
    fn corruption_skips_filtered_pairs() {
        let mut m = yes_no_matrix(4);
        m.set(0, 1, Judgment::No, Provenance::Filtered);
        let c = corrupt_judgments(&m, 1.0, 0.0, 1);
        assert_eq!(c.get(0, 1), Judgment::No);
        assert_eq!(c.provenance(0, 1), Provenance::Filtered);
    }
}
