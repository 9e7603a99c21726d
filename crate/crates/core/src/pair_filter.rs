//! Distance and depth pruning of person pairs before classification.
//!
//! For every unordered pair the normalized center distance is checked first,
//! then the median-depth difference. A pair exceeding either threshold is
//! written as `No` without consulting the classifier; the rest are classified.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{build_pair_query, ClassifyError, Judgment, PairClassifier, PairInput};
use crate::depth::{DepthCue, DepthMap};
use crate::geometry::center_distance;
use crate::scene_io::{PersonId, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Default,
    Filtered,
    Classified,
}

/// Symmetric `n × n` table of judgments over a scene's persons, indexed by
/// position in [`RelationMatrix::ids`].
#[derive(Debug, Clone, PartialEq)]
pub struct RelationMatrix {
    ids: Vec<PersonId>,
    entries: Vec<Judgment>,
    provenance: Vec<Provenance>,
}

impl RelationMatrix {
    pub fn new(ids: Vec<PersonId>) -> Self {
        let n = ids.len();
        Self {
            ids,
            entries: vec![Judgment::NotSure; n * n],
            provenance: vec![Provenance::Default; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[PersonId] {
        &self.ids
    }

    pub fn index_of(&self, id: PersonId) -> Option<usize> {
        self.ids.iter().position(|&p| p == id)
    }

    pub fn get(&self, i: usize, j: usize) -> Judgment {
        self.entries[i * self.len() + j]
    }

    pub fn provenance(&self, i: usize, j: usize) -> Provenance {
        self.provenance[i * self.len() + j]
    }

    /// Set both `(i, j)` and `(j, i)`. Panics on the diagonal.
    pub fn set(&mut self, i: usize, j: usize, judgment: Judgment, provenance: Provenance) {
        assert_ne!(i, j, "diagonal entries are fixed");
        let n = self.len();
        for (r, c) in [(i, j), (j, i)] {
            self.entries[r * n + c] = judgment;
            self.provenance[r * n + c] = provenance;
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.len()).all(|i| {
            (0..i).all(|j| self.get(i, j) == self.get(j, i) && self.provenance(i, j) == self.provenance(j, i))
        })
    }

    /// Unordered pairs `(i, j)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.len();
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
    }

    pub fn count_provenance(&self, p: Provenance) -> usize {
        self.pairs().filter(|&(i, j)| self.provenance(i, j) == p).count()
    }
}

/// Number of unordered pairs that were sent to the classifier.
pub fn count_classifier_calls(matrix: &RelationMatrix) -> usize {
    matrix.count_provenance(Provenance::Classified)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Normalized center-distance threshold in `[0, 1]`.
    pub tau_d: f64,
    /// Median-depth difference threshold in `[0, 255]`.
    pub tau_z: u8,
}

impl FilterParams {
    pub fn new(tau_d: f64, tau_z: u8) -> Result<Self, String> {
        if !(0.0..=1.0).contains(&tau_d) {
            return Err(format!("tau_d {tau_d} outside [0, 1]"));
        }
        Ok(Self { tau_d, tau_z })
    }

    /// Thresholds at their maxima: nothing is ever filtered.
    pub fn disabled() -> Self {
        Self { tau_d: 1.0, tau_z: 255 }
    }
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { tau_d: 0.4, tau_z: 80 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterCause {
    Distance,
    Depth,
}

/// Exclusion is strict: a pair exactly at a threshold is kept.
pub fn filter_decision(distance: f64, depth_diff: u8, params: &FilterParams) -> Option<FilterCause> {
    if distance > params.tau_d {
        Some(FilterCause::Distance)
    } else if depth_diff > params.tau_z {
        Some(FilterCause::Depth)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub filtered_distance: usize,
    pub filtered_depth: usize,
    pub classified: usize,
}

impl std::ops::AddAssign for FilterCounts {
    fn add_assign(&mut self, o: Self) {
        self.filtered_distance += o.filtered_distance;
        self.filtered_depth += o.filtered_depth;
        self.classified += o.classified;
    }
}

/// Center distances and depth cues for every pair of a scene.
#[derive(Debug, Clone)]
pub struct PairFeatures {
    n: usize,
    distance: Vec<f64>,
    cue: Vec<DepthCue>,
}

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("scene '{scene_id}': person {person_id} has no median depth")]
    MissingDepth { scene_id: String, person_id: PersonId },
    #[error("scene '{scene_id}', pair ({a}, {b}): {source}")]
    Pair {
        scene_id: String,
        a: PersonId,
        b: PersonId,
        #[source]
        source: ClassifyError,
    },
}

impl FilterError {
    pub fn classify_error(&self) -> Option<&ClassifyError> {
        match self {
            FilterError::Pair { source, .. } => Some(source),
            FilterError::MissingDepth { .. } => None,
        }
    }
}

impl PairFeatures {
    pub fn compute(scene: &Scene) -> Result<Self, FilterError> {
        let n = scene.persons.len();
        let depths = scene
            .persons
            .iter()
            .map(|p| {
                p.median_depth.ok_or_else(|| FilterError::MissingDepth {
                    scene_id: scene.scene_id.clone(),
                    person_id: p.person_id,
                })
            })
            .collect::<Result<Vec<u8>, _>>()?;
        let mut distance = vec![0.0; n * n];
        let mut cue = vec![DepthCue::new(0, 0); n * n];
        for i in 0..n {
            for j in 0..n {
                distance[i * n + j] = center_distance(&scene.persons[i].bbox, &scene.persons[j].bbox, scene.image);
                cue[i * n + j] = DepthCue::new(depths[i], depths[j]);
            }
        }
        Ok(Self { n, distance, cue })
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distance[i * self.n + j]
    }

    pub fn cue(&self, i: usize, j: usize) -> DepthCue {
        self.cue[i * self.n + j]
    }
}

/// Inputs needed to render crops and prompts for query-based backends.
#[derive(Debug, Clone, Copy)]
pub struct QueryAssets<'a> {
    pub rgb: &'a RgbImage,
    pub depth: &'a DepthMap,
    pub pad_fraction: f64,
    pub template: &'a str,
}

/// A built matrix together with its per-cause counters.
#[derive(Debug, Clone)]
pub struct MatrixBuild {
    pub matrix: RelationMatrix,
    pub counts: FilterCounts,
}

fn classify_pairs(
    scene: &Scene,
    features: &PairFeatures,
    jobs: &[(usize, usize)],
    backend: &dyn PairClassifier,
    assets: Option<&QueryAssets<'_>>,
) -> Result<Vec<Judgment>, FilterError> {
    let one = |(i, j): (usize, usize)| -> Result<Judgment, FilterError> {
        let (a, b) = (&scene.persons[i], &scene.persons[j]);
        let wrap = |source| FilterError::Pair {
            scene_id: scene.scene_id.clone(),
            a: a.person_id,
            b: b.person_id,
            source,
        };
        let query = match (backend.needs_query(), assets) {
            (false, _) => None,
            (true, Some(qa)) => Some(
                build_pair_query(scene, qa.rgb, qa.depth, a.person_id, b.person_id, qa.pad_fraction, qa.template)
                    .map_err(wrap)?,
            ),
            (true, None) => {
                return Err(wrap(ClassifyError::Backend(format!(
                    "backend '{}' needs RGB and depth assets",
                    backend.name()
                ))))
            }
        };
        let input = PairInput {
            scene,
            a,
            b,
            distance: features.distance(i, j),
            cue: features.cue(i, j),
            query: query.as_ref(),
        };
        backend.classify(&input).map_err(wrap)
    };

    let workers = backend.max_inflight().min(jobs.len());
    if workers <= 1 {
        return jobs.iter().map(|&p| one(p)).collect();
    }

    // Completion order is irrelevant: each result lands in its job's slot.
    let slots: Vec<Mutex<Option<Result<Judgment, FilterError>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= jobs.len() {
                    break;
                }
                *slots[k].lock().unwrap() = Some(one(jobs[k]));
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every job slot is filled"))
        .collect()
}

fn fill_classified(
    scene: &Scene,
    features: &PairFeatures,
    mut matrix: RelationMatrix,
    jobs: Vec<(usize, usize)>,
    backend: &dyn PairClassifier,
    assets: Option<&QueryAssets<'_>>,
) -> Result<RelationMatrix, FilterError> {
    let judgments = classify_pairs(scene, features, &jobs, backend, assets)?;
    for ((i, j), judgment) in jobs.into_iter().zip(judgments) {
        matrix.set(i, j, judgment, Provenance::Classified);
    }
    Ok(matrix)
}

fn ids(scene: &Scene) -> Vec<PersonId> {
    scene.persons.iter().map(|p| p.person_id).collect()
}

/// Prune pairs by distance then depth and classify the survivors.
///
/// Persons must already carry their median depth.
pub fn build_relation_matrix(
    scene: &Scene,
    params: &FilterParams,
    backend: &dyn PairClassifier,
    assets: Option<&QueryAssets<'_>>,
) -> Result<MatrixBuild, FilterError> {
    let features = PairFeatures::compute(scene)?;
    let mut matrix = RelationMatrix::new(ids(scene));
    let mut counts = FilterCounts::default();
    let mut jobs = Vec::new();
    for (i, j) in matrix.pairs().collect::<Vec<_>>() {
        match filter_decision(features.distance(i, j), features.cue(i, j).abs_diff, params) {
            Some(FilterCause::Distance) => {
                counts.filtered_distance += 1;
                matrix.set(i, j, Judgment::No, Provenance::Filtered);
            }
            Some(FilterCause::Depth) => {
                counts.filtered_depth += 1;
                matrix.set(i, j, Judgment::No, Provenance::Filtered);
            }
            None => jobs.push((i, j)),
        }
    }
    counts.classified = jobs.len();
    let matrix = fill_classified(scene, &features, matrix, jobs, backend, assets)?;
    Ok(MatrixBuild { matrix, counts })
}

/// Classify every unordered pair without consulting any threshold.
pub fn build_unfiltered_matrix(
    scene: &Scene,
    backend: &dyn PairClassifier,
    assets: Option<&QueryAssets<'_>>,
) -> Result<MatrixBuild, FilterError> {
    let features = PairFeatures::compute(scene)?;
    let matrix = RelationMatrix::new(ids(scene));
    let jobs: Vec<_> = matrix.pairs().collect();
    let counts = FilterCounts {
        classified: jobs.len(),
        ..FilterCounts::default()
    };
    let matrix = fill_classified(scene, &features, matrix, jobs, backend, assets)?;
    Ok(MatrixBuild { matrix, counts })
}

/// Re-derive a filtered matrix from fully classified judgments by overwriting
/// pairs that the thresholds would have excluded.
pub fn apply_filter(unfiltered: &RelationMatrix, features: &PairFeatures, params: &FilterParams) -> MatrixBuild {
    let mut matrix = unfiltered.clone();
    let mut counts = FilterCounts::default();
    for (i, j) in unfiltered.pairs() {
        match filter_decision(features.distance(i, j), features.cue(i, j).abs_diff, params) {
            Some(cause) => {
                match cause {
                    FilterCause::Distance => counts.filtered_distance += 1,
                    FilterCause::Depth => counts.filtered_depth += 1,
                }
                matrix.set(i, j, Judgment::No, Provenance::Filtered);
            }
            None => counts.classified += 1,
        }
    }
    MatrixBuild { matrix, counts }
}
