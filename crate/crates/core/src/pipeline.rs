//! End-to-end group detection: confidence filter, depth medians, pair
//! filtering and classification, clustering, group boxes.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use image::RgbImage;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::classifier::{validate_template, ClassifyError, PairClassifier, DEFAULT_PROMPT_TEMPLATE};
use crate::cluster::{extract_groups, greedy_cluster, AgreementWeights, ClusterError};
use crate::depth::{load_depth_map, median_depth, DepthError, DepthMap};
use crate::pair_filter::{build_relation_matrix, FilterCounts, FilterError, FilterParams, QueryAssets, RelationMatrix};
use crate::scene_io::{filter_detections, resolve_asset, Scene, SceneResult};

pub const DEFAULT_TAU_DET: f64 = 0.5;
pub const DEFAULT_PAD_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub tau_det: f64,
    pub filter: FilterParams,
    pub pad_fraction: f64,
    pub weights: AgreementWeights,
    pub template: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau_det: DEFAULT_TAU_DET,
            filter: FilterParams::default(),
            pad_fraction: DEFAULT_PAD_FRACTION,
            weights: AgreementWeights::default(),
            template: DEFAULT_PROMPT_TEMPLATE.to_string(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(0.0..=1.0).contains(&self.tau_det) {
            return Err(PipelineError::Config(format!("tau_det {} outside [0, 1]", self.tau_det)));
        }
        FilterParams::new(self.filter.tau_d, self.filter.tau_z).map_err(PipelineError::Config)?;
        if !(self.pad_fraction.is_finite() && self.pad_fraction >= 0.0) {
            return Err(PipelineError::Config(format!("pad fraction {} is negative", self.pad_fraction)));
        }
        self.weights.validate()?;
        validate_template(&self.template).map_err(|e| PipelineError::Config(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error("scene '{scene_id}': {source}")]
    Depth {
        scene_id: String,
        #[source]
        source: DepthError,
    },
    #[error("scene '{scene_id}': RGB image {path}: {message}")]
    Rgb {
        scene_id: String,
        path: String,
        message: String,
    },
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

impl PipelineError {
    pub fn is_remote_unavailable(&self) -> bool {
        matches!(
            self,
            PipelineError::Filter(f) if matches!(f.classify_error(), Some(ClassifyError::RemoteUnavailable { .. }))
        )
    }
}

/// A scene ready for pair building: confidence-filtered persons with median
/// depths, plus the loaded depth map and (when requested) RGB image.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub scene: Scene,
    pub depth: DepthMap,
    pub rgb: Option<RgbImage>,
}

impl PreparedScene {
    pub fn assets<'a>(&'a self, cfg: &'a PipelineConfig) -> Option<QueryAssets<'a>> {
        self.rgb.as_ref().map(|rgb| QueryAssets {
            rgb,
            depth: &self.depth,
            pad_fraction: cfg.pad_fraction,
            template: &cfg.template,
        })
    }
}

/// Apply the confidence filter and fill median depths from `depth`.
pub fn attach_depths(scene: &Scene, depth: &DepthMap, tau_det: f64) -> Result<Scene, PipelineError> {
    let mut out = scene.clone();
    out.persons = filter_detections(&scene.persons, tau_det);
    for p in &mut out.persons {
        let z = median_depth(depth, &p.bbox).map_err(|source| PipelineError::Depth {
            scene_id: scene.scene_id.clone(),
            source,
        })?;
        p.median_depth = Some(z);
    }
    Ok(out)
}

/// Load a scene's assets from disk (paths relative to `base_dir`).
pub fn prepare_scene(scene: &Scene, base_dir: &Path, tau_det: f64, load_rgb: bool) -> Result<PreparedScene, PipelineError> {
    let depth_path = resolve_asset(base_dir, &scene.depth_path);
    let depth = load_depth_map(&depth_path, scene.image).map_err(|source| PipelineError::Depth {
        scene_id: scene.scene_id.clone(),
        source,
    })?;
    let rgb = if load_rgb {
        let path = resolve_asset(base_dir, &scene.rgb_path);
        let img = image::open(&path).map_err(|e| PipelineError::Rgb {
            scene_id: scene.scene_id.clone(),
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let img = img.to_rgb8();
        if (img.width(), img.height()) != (scene.image.width, scene.image.height) {
            return Err(PipelineError::Rgb {
                scene_id: scene.scene_id.clone(),
                path: path.display().to_string(),
                message: format!(
                    "image is {}x{}, scene declares {}x{}",
                    img.width(),
                    img.height(),
                    scene.image.width,
                    scene.image.height
                ),
            });
        }
        Some(img)
    } else {
        None
    };
    let scene = attach_depths(scene, &depth, tau_det)?;
    Ok(PreparedScene { scene, depth, rgb })
}

/// Output of one scene: predicted groups and the relation matrix behind them.
#[derive(Debug, Clone)]
pub struct SceneOutput {
    pub result: SceneResult,
    pub matrix: RelationMatrix,
    pub counts: FilterCounts,
}

/// Run filtering, classification and clustering on a scene whose persons
/// already carry median depths.
pub fn detect_prepared(
    scene: &Scene,
    assets: Option<&QueryAssets<'_>>,
    cfg: &PipelineConfig,
    backend: &dyn PairClassifier,
) -> Result<SceneOutput, PipelineError> {
    let built = build_relation_matrix(scene, &cfg.filter, backend, assets)?;
    let partition = greedy_cluster(&built.matrix, &cfg.weights);
    let groups = extract_groups(&partition, &scene.persons)?;
    Ok(SceneOutput {
        result: SceneResult {
            scene_id: scene.scene_id.clone(),
            groups,
        },
        matrix: built.matrix,
        counts: built.counts,
    })
}

/// Load assets and detect groups for one scene.
pub fn detect_scene(
    scene: &Scene,
    base_dir: &Path,
    cfg: &PipelineConfig,
    backend: &dyn PairClassifier,
) -> Result<SceneOutput, PipelineError> {
    let prepared = prepare_scene(scene, base_dir, cfg.tau_det, backend.needs_query())?;
    detect_prepared(&prepared.scene, prepared.assets(cfg).as_ref(), cfg, backend)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenes: usize,
    pub failed_scenes: usize,
    pub persons: usize,
    pub pairs: usize,
    pub filtered_distance: usize,
    pub filtered_depth: usize,
    pub classified: usize,
    pub groups: usize,
    pub unparsed_answers: usize,
}

impl RunSummary {
    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("scenes processed:      {}", self.scenes),
            format!("scenes failed:         {}", self.failed_scenes),
            format!("persons (after tau_det): {}", self.persons),
            format!("pairs total:           {}", self.pairs),
            format!("  filtered (distance): {}", self.filtered_distance),
            format!("  filtered (depth):    {}", self.filtered_depth),
            format!("  classified:          {}", self.classified),
            format!("groups detected:       {}", self.groups),
            format!("unparsed answers:      {}", self.unparsed_answers),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct SceneFailure {
    pub scene_id: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Sorted by scene id.
    pub outputs: Vec<SceneOutput>,
    pub failures: Vec<SceneFailure>,
    pub summary: RunSummary,
}

impl RunOutcome {
    pub fn results(&self) -> Vec<SceneResult> {
        self.outputs.iter().map(|o| o.result.clone()).collect()
    }

    pub fn matrices(&self) -> Vec<(String, RelationMatrix)> {
        self.outputs
            .iter()
            .map(|o| (o.result.scene_id.clone(), o.matrix.clone()))
            .collect()
    }
}

/// Detect groups across scenes on up to `jobs` threads.
///
/// Per-scene asset or depth errors are recorded and the scene skipped. An
/// unreachable classifier service aborts the whole run.
pub fn run_detect(
    scenes: &[Scene],
    base_dir: &Path,
    cfg: &PipelineConfig,
    backend: &dyn PairClassifier,
    jobs: usize,
) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let abort = AtomicBool::new(false);
    let per_scene: Vec<Option<Result<SceneOutput, PipelineError>>> = pool.install(|| {
        scenes
            .par_iter()
            .map(|s| {
                if abort.load(Ordering::Relaxed) {
                    return None;
                }
                let r = detect_scene(s, base_dir, cfg, backend);
                if matches!(&r, Err(e) if e.is_remote_unavailable()) {
                    abort.store(true, Ordering::Relaxed);
                }
                Some(r)
            })
            .collect()
    });

    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    for (scene, r) in scenes.iter().zip(per_scene) {
        match r {
            None => {}
            Some(Ok(o)) => outputs.push(o),
            Some(Err(e)) if e.is_remote_unavailable() => return Err(e),
            Some(Err(e)) => {
                log::warn!("skipping scene '{}': {e}", scene.scene_id);
                failures.push(SceneFailure {
                    scene_id: scene.scene_id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    outputs.sort_by(|a, b| a.result.scene_id.cmp(&b.result.scene_id));

    let mut summary = RunSummary {
        scenes: outputs.len(),
        failed_scenes: failures.len(),
        ..RunSummary::default()
    };
    for o in &outputs {
        let n = o.matrix.len();
        summary.persons += n;
        summary.pairs += n * n.saturating_sub(1) / 2;
        summary.filtered_distance += o.counts.filtered_distance;
        summary.filtered_depth += o.counts.filtered_depth;
        summary.classified += o.counts.classified;
        summary.groups += o.result.groups.len();
    }
    Ok(RunOutcome {
        outputs,
        failures,
        summary,
    })
}
