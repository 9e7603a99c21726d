//! Scene manifests, detections, ground-truth groups and pipeline output files.
//!
//! Every file is JSON-lines: one scene (or one record) per line. Asset paths
//! inside a manifest are relative to the manifest's own directory.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::Judgment;
use crate::cluster::GroupRegion;
use crate::geometry::{BBox, ImageGeometry};
use crate::pair_filter::{Provenance, RelationMatrix};

pub type PersonId = u32;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: scene '{scene_id}': {message}")]
    Validation {
        path: PathBuf,
        line: usize,
        scene_id: String,
        message: String,
    },
}

impl SceneError {
    fn io(path: &Path, source: io::Error) -> Self {
        SceneError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonDetection {
    pub person_id: PersonId,
    pub bbox: BBox,
    pub confidence: f64,
    /// Filled by the depth stage.
    pub median_depth: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupAnnotation {
    pub group_id: u32,
    /// Empty for box-only ground truth.
    pub member_ids: Vec<PersonId>,
    pub bbox: BBox,
}

impl GroupAnnotation {
    pub fn has_members(&self) -> bool {
        !self.member_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub image: ImageGeometry,
    pub rgb_path: String,
    pub depth_path: String,
    pub persons: Vec<PersonDetection>,
    pub gt_groups: Option<Vec<GroupAnnotation>>,
}

impl Scene {
    pub fn person(&self, id: PersonId) -> Option<&PersonDetection> {
        self.persons.iter().find(|p| p.person_id == id)
    }

    pub fn gt_boxes(&self) -> Vec<BBox> {
        self.gt_groups
            .iter()
            .flatten()
            .map(|g| g.bbox)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotatorSource {
    Human,
    Pipeline,
}

/// One pairwise affiliation label; `person_a < person_b` always.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairAnnotationRecord {
    pub scene_id: String,
    pub person_a: PersonId,
    pub person_b: PersonId,
    pub label: Judgment,
    pub annotator_source: AnnotatorSource,
}

// ---- wire records ----------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PersonRecord {
    person_id: PersonId,
    bbox: [f64; 4],
    confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    median_depth: Option<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupRecord {
    group_id: u32,
    #[serde(default)]
    member_ids: Option<Vec<PersonId>>,
    bbox: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRecord {
    scene_id: String,
    width: u32,
    height: u32,
    rgb_path: String,
    depth_path: String,
    #[serde(default)]
    persons: Vec<PersonRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_groups: Option<Vec<GroupRecord>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GroupOut {
    member_ids: Vec<PersonId>,
    bbox: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
struct ResultRecord {
    scene_id: String,
    groups: Vec<GroupOut>,
}

fn validate(rec: SceneRecord) -> Result<Scene, String> {
    let image = ImageGeometry::new(rec.width, rec.height).map_err(|e| e.to_string())?;
    let mut seen = BTreeSet::new();
    let mut persons = Vec::with_capacity(rec.persons.len());
    for p in rec.persons {
        if !seen.insert(p.person_id) {
            return Err(format!("duplicate person_id {}", p.person_id));
        }
        if !(0.0..=1.0).contains(&p.confidence) {
            return Err(format!(
                "person {}: confidence {} outside [0, 1]",
                p.person_id, p.confidence
            ));
        }
        let raw = BBox::new(p.bbox[0].max(0.0), p.bbox[1].max(0.0), p.bbox[2], p.bbox[3])
            .map_err(|e| format!("person {}: {e}", p.person_id))?;
        let bbox = raw
            .clamp_to(image)
            .ok_or_else(|| format!("person {}: box {:?} lies outside the image", p.person_id, p.bbox))?;
        persons.push(PersonDetection {
            person_id: p.person_id,
            bbox,
            confidence: p.confidence,
            median_depth: p.median_depth,
        });
    }
    let gt_groups = match rec.gt_groups {
        None => None,
        Some(groups) => {
            let mut gids = BTreeSet::new();
            let mut out = Vec::with_capacity(groups.len());
            for g in groups {
                if !gids.insert(g.group_id) {
                    return Err(format!("duplicate group_id {}", g.group_id));
                }
                let bbox = BBox::try_from(g.bbox).map_err(|e| format!("group {}: {e}", g.group_id))?;
                let mut member_ids = g.member_ids.unwrap_or_default();
                member_ids.sort_unstable();
                if member_ids.windows(2).any(|w| w[0] == w[1]) {
                    return Err(format!("group {}: repeated member id", g.group_id));
                }
                if member_ids.len() == 1 {
                    return Err(format!("group {}: a group needs at least two members", g.group_id));
                }
                if let Some(m) = member_ids.iter().find(|m| !seen.contains(m)) {
                    return Err(format!("group {}: unknown member {m}", g.group_id));
                }
                out.push(GroupAnnotation {
                    group_id: g.group_id,
                    member_ids,
                    bbox,
                });
            }
            Some(out)
        }
    };
    Ok(Scene {
        scene_id: rec.scene_id,
        image,
        rgb_path: rec.rgb_path,
        depth_path: rec.depth_path,
        persons,
        gt_groups,
    })
}

fn to_record(s: &Scene) -> SceneRecord {
    SceneRecord {
        scene_id: s.scene_id.clone(),
        width: s.image.width,
        height: s.image.height,
        rgb_path: s.rgb_path.clone(),
        depth_path: s.depth_path.clone(),
        persons: s
            .persons
            .iter()
            .map(|p| PersonRecord {
                person_id: p.person_id,
                bbox: p.bbox.to_array(),
                confidence: p.confidence,
                median_depth: p.median_depth,
            })
            .collect(),
        gt_groups: s.gt_groups.as_ref().map(|gs| {
            gs.iter()
                .map(|g| GroupRecord {
                    group_id: g.group_id,
                    member_ids: g.has_members().then(|| g.member_ids.clone()),
                    bbox: g.bbox.to_array(),
                })
                .collect()
        }),
    }
}

/// Parse every line of a manifest, keeping good scenes and collecting errors.
pub fn load_scenes_lenient(manifest: &Path) -> Result<(Vec<Scene>, Vec<SceneError>), SceneError> {
    let file = File::open(manifest).map_err(|e| SceneError::io(manifest, e))?;
    let mut scenes = Vec::new();
    let mut errors = Vec::new();
    let mut ids = BTreeSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| SceneError::io(manifest, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SceneRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                errors.push(SceneError::Parse {
                    path: manifest.to_path_buf(),
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let scene_id = rec.scene_id.clone();
        let invalid = |message: String| SceneError::Validation {
            path: manifest.to_path_buf(),
            line: line_no,
            scene_id: scene_id.clone(),
            message,
        };
        if ids.contains(&scene_id) {
            errors.push(invalid("duplicate scene_id".into()));
            continue;
        }
        match validate(rec) {
            Ok(scene) => {
                ids.insert(scene_id);
                scenes.push(scene);
            }
            Err(message) => errors.push(invalid(message)),
        }
    }
    Ok((scenes, errors))
}

/// Strict load: the first malformed or invalid line is an error.
pub fn load_scenes(manifest: &Path) -> Result<Vec<Scene>, SceneError> {
    let (scenes, mut errors) = load_scenes_lenient(manifest)?;
    if errors.is_empty() {
        Ok(scenes)
    } else {
        Err(errors.swap_remove(0))
    }
}

/// Directory that relative asset paths in `manifest` are resolved against.
pub fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn resolve_asset(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Detections with `confidence >= tau_det`, order and content untouched.
pub fn filter_detections(persons: &[PersonDetection], tau_det: f64) -> Vec<PersonDetection> {
    persons
        .iter()
        .filter(|p| p.confidence >= tau_det)
        .cloned()
        .collect()
}

fn write_lines<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<(), SceneError> {
    let file = File::create(path).map_err(|e| SceneError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, &rec).map_err(|e| SceneError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| SceneError::io(path, e))?;
    }
    w.flush().map_err(|e| SceneError::io(path, e))
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, SceneError> {
    let file = File::open(path).map_err(|e| SceneError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SceneError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SceneError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, scenes: &[Scene]) -> Result<(), SceneError> {
    write_lines(path, scenes.iter().map(to_record))
}

/// Predicted groups for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneResult {
    pub scene_id: String,
    pub groups: Vec<GroupRegion>,
}

/// One line per scene, sorted by `scene_id`; scenes without groups are kept.
pub fn write_results(path: &Path, results: &[SceneResult]) -> Result<(), SceneError> {
    let mut sorted: Vec<&SceneResult> = results.iter().collect();
    sorted.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    write_lines(
        path,
        sorted.into_iter().map(|r| ResultRecord {
            scene_id: r.scene_id.clone(),
            groups: r
                .groups
                .iter()
                .map(|g| GroupOut {
                    member_ids: g.member_ids.clone(),
                    bbox: g.bbox.to_array(),
                })
                .collect(),
        }),
    )
}

pub fn read_results(path: &Path) -> Result<Vec<SceneResult>, SceneError> {
    let records: Vec<ResultRecord> = read_lines(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let groups = r
                .groups
                .into_iter()
                .map(|g| {
                    let bbox = BBox::try_from(g.bbox).map_err(|e| e.to_string())?;
                    Ok(GroupRegion {
                        member_ids: g.member_ids,
                        bbox,
                    })
                })
                .collect::<Result<Vec<_>, String>>()
                .map_err(|message| SceneError::Validation {
                    path: path.to_path_buf(),
                    line: i + 1,
                    scene_id: r.scene_id.clone(),
                    message,
                })?;
            Ok(SceneResult {
                scene_id: r.scene_id,
                groups,
            })
        })
        .collect()
}

/// Pipeline-labelled records for every classified (unfiltered) pair.
pub fn pair_records(scene_id: &str, matrix: &RelationMatrix) -> Vec<PairAnnotationRecord> {
    let ids = matrix.ids();
    let mut out = Vec::new();
    for i in 0..matrix.len() {
        for j in (i + 1)..matrix.len() {
            if matrix.provenance(i, j) != Provenance::Classified {
                continue;
            }
            let (a, b) = if ids[i] < ids[j] { (ids[i], ids[j]) } else { (ids[j], ids[i]) };
            out.push(PairAnnotationRecord {
                scene_id: scene_id.to_string(),
                person_a: a,
                person_b: b,
                label: matrix.get(i, j),
                annotator_source: AnnotatorSource::Pipeline,
            });
        }
    }
    out.sort_by_key(|r| (r.person_a, r.person_b));
    out
}

/// Write pair records for every scene, ordered by scene id then pair.
pub fn export_pair_records(path: &Path, matrices: &[(String, RelationMatrix)]) -> Result<(), SceneError> {
    let mut sorted: Vec<&(String, RelationMatrix)> = matrices.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    write_lines(
        path,
        sorted.into_iter().flat_map(|(id, m)| pair_records(id, m)),
    )
}

pub fn read_pair_records(path: &Path) -> Result<Vec<PairAnnotationRecord>, SceneError> {
    read_lines(path)
}
