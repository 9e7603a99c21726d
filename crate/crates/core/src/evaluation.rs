//! Region-level scoring of predicted group boxes against ground truth.
//!
//! Predictions and ground-truth boxes are matched one-to-one by descending
//! IoU. A match counts as a true positive at `IoU >= threshold`. mIoU is the
//! mean over ground-truth groups of their matched IoU, with unmatched groups
//! contributing 0. Corpus metrics sum per-scene counts before dividing.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{iou, BBox};
use crate::scene_io::{Scene, SceneResult};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Match {
    pub pred_idx: usize,
    pub gt_idx: usize,
    pub iou: f64,
}

/// Greedy one-to-one matching: pairs sorted by IoU descending (ties: smaller
/// gt index, then smaller pred index), accepted when both sides are free and
/// IoU > 0.
pub fn match_groups(pred: &[BBox], gt: &[BBox]) -> Vec<Match> {
    let mut cands: Vec<Match> = pred
        .iter()
        .enumerate()
        .flat_map(|(p, pb)| {
            gt.iter().enumerate().map(move |(g, gb)| Match {
                pred_idx: p,
                gt_idx: g,
                iou: iou(pb, gb),
            })
        })
        .filter(|m| m.iou > 0.0)
        .collect();
    cands.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.gt_idx.cmp(&b.gt_idx))
            .then(a.pred_idx.cmp(&b.pred_idx))
    });
    let mut pred_used = vec![false; pred.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut out = Vec::new();
    for m in cands {
        if !pred_used[m.pred_idx] && !gt_used[m.gt_idx] {
            pred_used[m.pred_idx] = true;
            gt_used[m.gt_idx] = true;
            out.push(m);
        }
    }
    out
}

/// Additive per-scene tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Counts {
    pub n_pred: usize,
    pub n_gt: usize,
    pub n_matched: usize,
    pub tp: usize,
    /// Sum of IoU over matched pairs.
    pub iou_sum: f64,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Self) {
        self.n_pred += o.n_pred;
        self.n_gt += o.n_gt;
        self.n_matched += o.n_matched;
        self.tp += o.tp;
        self.iou_sum += o.iou_sum;
    }
}

impl Counts {
    pub fn from_scene(pred: &[BBox], gt: &[BBox], iou_threshold: f64) -> Self {
        let matches = match_groups(pred, gt);
        Self {
            n_pred: pred.len(),
            n_gt: gt.len(),
            n_matched: matches.len(),
            tp: matches.iter().filter(|m| m.iou >= iou_threshold).count(),
            iou_sum: matches.iter().map(|m| m.iou).sum(),
        }
    }

    fn ratio(num: f64, den: usize) -> f64 {
        if den == 0 {
            0.0
        } else {
            num / den as f64
        }
    }

    pub fn precision(&self) -> f64 {
        Self::ratio(self.tp as f64, self.n_pred)
    }

    pub fn recall(&self) -> f64 {
        Self::ratio(self.tp as f64, self.n_gt)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    /// Mean IoU over ground-truth groups, unmatched groups counting 0.
    pub fn miou(&self) -> f64 {
        Self::ratio(self.iou_sum, self.n_gt)
    }

    /// Mean IoU over matched pairs only.
    pub fn miou_matched(&self) -> f64 {
        Self::ratio(self.iou_sum, self.n_matched)
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneEval {
    pub scene_id: String,
    #[serde(flatten)]
    pub counts: Counts,
    pub miou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub miou: f64,
    pub miou_matched: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_pred: usize,
    pub n_gt: usize,
    pub n_matched: usize,
    pub tp: usize,
    pub per_scene: Vec<SceneEval>,
}

impl EvalReport {
    pub fn from_counts(total: Counts, iou_threshold: f64, per_scene: Vec<SceneEval>) -> Self {
        Self {
            iou_threshold,
            miou: total.miou(),
            miou_matched: total.miou_matched(),
            precision: total.precision(),
            recall: total.recall(),
            f1: total.f1(),
            n_pred: total.n_pred,
            n_gt: total.n_gt,
            n_matched: total.n_matched,
            tp: total.tp,
            per_scene,
        }
    }

    /// Plain-text summary table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:<12} {:>8}\n", "metric", "value"));
        for (k, v) in [
            ("mIoU", self.miou),
            ("precision", self.precision),
            ("recall", self.recall),
            ("F1", self.f1),
        ] {
            s.push_str(&format!("{k:<12} {v:>8.3}\n"));
        }
        for (k, v) in [
            ("predicted", self.n_pred),
            ("ground truth", self.n_gt),
            ("matched", self.n_matched),
            ("TP", self.tp),
        ] {
            s.push_str(&format!("{k:<12} {v:>8}\n"));
        }
        s
    }
}

/// Score a single prediction list against a single ground-truth list.
pub fn score(pred: &[BBox], gt: &[BBox], iou_threshold: f64) -> EvalReport {
    score_corpus([("", pred, gt)], iou_threshold)
}

/// Micro-averaged scores over `(scene_id, predictions, ground truth)` triples.
pub fn score_corpus<'a, I, S>(scenes: I, iou_threshold: f64) -> EvalReport
where
    I: IntoIterator<Item = (S, &'a [BBox], &'a [BBox])>,
    S: AsRef<str>,
{
    let mut total = Counts::default();
    let mut per_scene = Vec::new();
    for (id, pred, gt) in scenes {
        let c = Counts::from_scene(pred, gt, iou_threshold);
        total += c;
        per_scene.push(SceneEval {
            scene_id: id.as_ref().to_string(),
            counts: c,
            miou: c.miou(),
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
        });
    }
    EvalReport::from_counts(total, iou_threshold, per_scene)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("prediction scene ids not in the manifest: {}", .0.join(", "))]
pub struct UnknownScenes(pub Vec<String>);

/// Score pipeline results against the ground truth of `scenes`.
///
/// Every manifest scene is scored; scenes absent from `results` count as
/// having no predictions. Result ids missing from the manifest are an error.
pub fn score_results(scenes: &[Scene], results: &[SceneResult], iou_threshold: f64) -> Result<EvalReport, UnknownScenes> {
    let known: BTreeMap<&str, &Scene> = scenes.iter().map(|s| (s.scene_id.as_str(), s)).collect();
    let mut unknown: Vec<String> = results
        .iter()
        .filter(|r| !known.contains_key(r.scene_id.as_str()))
        .map(|r| r.scene_id.clone())
        .collect();
    if !unknown.is_empty() {
        unknown.sort();
        unknown.dedup();
        return Err(UnknownScenes(unknown));
    }
    let mut preds: BTreeMap<&str, Vec<BBox>> = BTreeMap::new();
    for r in results {
        preds.entry(&r.scene_id).or_default().extend(r.groups.iter().map(|g| g.bbox));
    }
    let rows: Vec<(&str, Vec<BBox>, Vec<BBox>)> = known
        .iter()
        .map(|(id, s)| (*id, preds.remove(id).unwrap_or_default(), s.gt_boxes()))
        .collect();
    Ok(score_corpus(rows.iter().map(|(id, p, g)| (*id, &p[..], &g[..])), iou_threshold))
}
