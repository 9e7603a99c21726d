//! Threshold sweep over the distance / depth filter grid.
//!
//! Every pair of a scene is classified once. Each grid point then overwrites
//! the pairs its thresholds would exclude with `No`, re-clusters and
//! re-scores. Filtering never consults the classifier for excluded pairs, so
//! this is equivalent to re-running the filter with those thresholds.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::PairClassifier;
use crate::cluster::{extract_groups, greedy_cluster, AgreementWeights};
use crate::evaluation::Counts;
use crate::geometry::BBox;
use crate::pair_filter::{apply_filter, build_unfiltered_matrix, FilterError, FilterParams, PairFeatures, QueryAssets, RelationMatrix};
use crate::scene_io::Scene;

pub const SWEEP_CSV_HEADER: [&str; 7] = ["tau_d", "tau_z", "miou", "f1", "precision", "recall", "classified_pairs"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub distances: Vec<f64>,
    pub depths: Vec<u8>,
}

impl Default for SweepGrid {
    /// Distances 0.0..=1.0 step 0.1; depths 0..=240 step 20, plus 255.
    fn default() -> Self {
        let distances = (0..=10).map(|k| f64::from(k) / 10.0).collect();
        let mut depths: Vec<u8> = (0..=12u8).map(|k| k * 20).collect();
        depths.push(255);
        Self { distances, depths }
    }
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        self.distances.len() * self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<FilterParams> {
        self.distances
            .iter()
            .flat_map(|&tau_d| self.depths.iter().map(move |&tau_z| FilterParams { tau_d, tau_z }))
            .collect()
    }
}

/// Cached per-scene state: fully classified matrix plus pair features.
#[derive(Debug, Clone)]
pub struct SweepScene {
    pub scene: Scene,
    pub unfiltered: RelationMatrix,
    pub features: PairFeatures,
    pub gt: Vec<BBox>,
}

impl SweepScene {
    /// `scene` must already be confidence-filtered with median depths filled.
    pub fn prepare(
        scene: Scene,
        backend: &dyn PairClassifier,
        assets: Option<&QueryAssets<'_>>,
    ) -> Result<Self, FilterError> {
        let unfiltered = build_unfiltered_matrix(&scene, backend, assets)?.matrix;
        let features = PairFeatures::compute(&scene)?;
        let gt = scene.gt_boxes();
        Ok(Self {
            scene,
            unfiltered,
            features,
            gt,
        })
    }

    /// Evaluation counts and classified-pair count at one threshold setting.
    pub fn evaluate(&self, params: &FilterParams, w: &AgreementWeights, iou_threshold: f64) -> (Counts, usize) {
        let built = apply_filter(&self.unfiltered, &self.features, params);
        let partition = greedy_cluster(&built.matrix, w);
        let groups = extract_groups(&partition, &self.scene.persons).expect("partition built from scene persons");
        let pred: Vec<BBox> = groups.iter().map(|g| g.bbox).collect();
        (Counts::from_scene(&pred, &self.gt, iou_threshold), built.counts.classified)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub tau_d: f64,
    pub tau_z: u8,
    pub miou: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub classified_pairs: usize,
}

pub fn sweep_point(scenes: &[SweepScene], params: &FilterParams, w: &AgreementWeights, iou_threshold: f64) -> SweepRow {
    let mut total = Counts::default();
    let mut classified = 0;
    for s in scenes {
        let (c, k) = s.evaluate(params, w, iou_threshold);
        total += c;
        classified += k;
    }
    SweepRow {
        tau_d: params.tau_d,
        tau_z: params.tau_z,
        miou: total.miou(),
        f1: total.f1(),
        precision: total.precision(),
        recall: total.recall(),
        classified_pairs: classified,
    }
}

/// One row per grid point, distance-major, both axes ascending.
pub fn sweep(scenes: &[SweepScene], grid: &SweepGrid, w: &AgreementWeights, iou_threshold: f64) -> Vec<SweepRow> {
    grid.points()
        .par_iter()
        .map(|p| sweep_point(scenes, p, w, iou_threshold))
        .collect()
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            format!("{:.1}", r.tau_d),
            r.tau_z.to_string(),
            format!("{:.6}", r.miou),
            format!("{:.6}", r.f1),
            format!("{:.6}", r.precision),
            format!("{:.6}", r.recall),
            r.classified_pairs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let g = SweepGrid::default();
        assert_eq!(g.distances.len(), 11);
        assert_eq!(g.depths.len(), 14);
        assert_eq!(g.len(), 154);
        assert_eq!(g.distances[3], 0.3);
        assert_eq!(*g.depths.last().unwrap(), 255);
        assert_eq!(g.depths[12], 240);
        assert!(g.distances.windows(2).all(|w| w[0] < w[1]));
        assert!(g.depths.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn csv_layout() {
        let rows = [SweepRow {
            tau_d: 0.30000000000000004,
            tau_z: 80,
            miou: 0.5,
            f1: 1.0 / 3.0,
            precision: 1.0,
            recall: 0.2,
            classified_pairs: 12,
        }];
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "tau_d,tau_z,miou,f1,precision,recall,classified_pairs\n0.3,80,0.500000,0.333333,1.000000,0.200000,12\n"
        );
    }
}
