use serde::{Deserialize, Serialize};

use super::{ClassifyError, Judgment, PairClassifier, PairInput};
use crate::scene_io::{GroupAnnotation, PersonDetection};

/// Answers from ground truth: `Yes` iff both persons belong to the same
/// annotated group.
///
/// Groups with member ids are matched by id. Box-only groups fall back to
/// containment: a person belongs to a box-only group when its box lies inside
/// the group box.
#[derive(Debug, Default, Clone, Copy)]
pub struct OracleBackend;

fn in_group(g: &GroupAnnotation, p: &PersonDetection) -> bool {
    if g.has_members() {
        g.member_ids.contains(&p.person_id)
    } else {
        g.bbox.contains(&p.bbox)
    }
}

impl PairClassifier for OracleBackend {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn classify(&self, input: &PairInput<'_>) -> Result<Judgment, ClassifyError> {
        let groups = input
            .scene
            .gt_groups
            .as_deref()
            .ok_or_else(|| ClassifyError::Backend(format!("scene '{}' has no ground truth", input.scene.scene_id)))?;
        let together = groups.iter().any(|g| in_group(g, input.a) && in_group(g, input.b));
        Ok(if together { Judgment::Yes } else { Judgment::No })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicParams {
    /// Normalized center distance at or below which a pair may be `Yes`.
    pub yes_distance: f64,
    /// Depth difference at or below which a pair may be `Yes`.
    pub yes_depth_diff: u8,
    /// Beyond `margin ×` either threshold the answer is `No`; in between, `NotSure`.
    pub margin: f64,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        Self {
            yes_distance: 0.08,
            yes_depth_diff: 12,
            margin: 1.5,
        }
    }
}

/// Geometric stand-in for a learned classifier.
#[derive(Debug, Default, Clone, Copy)]
pub struct HeuristicBackend {
    pub params: HeuristicParams,
}

impl HeuristicBackend {
    pub fn new(params: HeuristicParams) -> Self {
        Self { params }
    }

    pub fn judge(&self, distance: f64, depth_diff: u8) -> Judgment {
        let p = &self.params;
        let dz = f64::from(depth_diff);
        let zmax = f64::from(p.yes_depth_diff);
        if distance <= p.yes_distance && dz <= zmax {
            Judgment::Yes
        } else if distance <= p.yes_distance * p.margin && dz <= zmax * p.margin {
            Judgment::NotSure
        } else {
            Judgment::No
        }
    }
}

impl PairClassifier for HeuristicBackend {
    fn name(&self) -> &'static str {
        "heuristic"
    }

    fn classify(&self, input: &PairInput<'_>) -> Result<Judgment, ClassifyError> {
        Ok(self.judge(input.distance, input.cue.abs_diff))
    }
}
