//! Greedy agreement clustering of pairwise judgments into social groups.
//!
//! Every person starts as a singleton. At each step the two clusters whose
//! merge adds the most agreement are joined, as long as that gain is strictly
//! positive. Ties go to the pair with the smallest `(min id, min id)`.
//!
//! [`exhaustive_cluster`] enumerates every set partition for small scenes and
//! serves as the reference the greedy result is checked against.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::Judgment;
use crate::geometry::{enclosing_bbox, BBox};
use crate::pair_filter::RelationMatrix;
use crate::scene_io::{PersonDetection, PersonId};

/// Largest scene [`exhaustive_cluster`] will enumerate (Bell(10) = 115 975).
pub const EXHAUSTIVE_MAX: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("partition does not cover exactly the matrix persons")]
    CoverageMismatch,
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("exhaustive search limited to {EXHAUSTIVE_MAX} persons, got {0}")]
    TooLarge(usize),
    #[error("invalid agreement weights: {0}")]
    InvalidWeights(String),
    #[error("person {0} missing from detections")]
    UnknownPerson(PersonId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementWeights {
    pub w_yes: f64,
    pub w_no: f64,
    pub w_notsure: f64,
}

impl Default for AgreementWeights {
    fn default() -> Self {
        Self {
            w_yes: 1.0,
            w_no: -1.0,
            w_notsure: -1.0,
        }
    }
}

impl AgreementWeights {
    pub fn new(w_yes: f64, w_no: f64, w_notsure: f64) -> Result<Self, ClusterError> {
        let w = Self { w_yes, w_no, w_notsure };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        if !(self.w_yes.is_finite() && self.w_no.is_finite() && self.w_notsure.is_finite()) {
            return Err(ClusterError::InvalidWeights("weights must be finite".into()));
        }
        if self.w_yes <= 0.0 {
            return Err(ClusterError::InvalidWeights("w_yes must be > 0".into()));
        }
        if self.w_no > 0.0 || self.w_notsure > 0.0 {
            return Err(ClusterError::InvalidWeights("w_no and w_notsure must be <= 0".into()));
        }
        Ok(())
    }

    pub fn weight(&self, j: Judgment) -> f64 {
        match j {
            Judgment::Yes => self.w_yes,
            Judgment::No => self.w_no,
            Judgment::NotSure => self.w_notsure,
        }
    }
}

/// Disjoint, non-empty clusters of person ids.
///
/// Stored canonically: members ascending, clusters ordered by smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    clusters: Vec<Vec<PersonId>>,
}

impl Partition {
    pub fn new(mut clusters: Vec<Vec<PersonId>>) -> Result<Self, ClusterError> {
        let mut seen = BTreeSet::new();
        for c in &mut clusters {
            if c.is_empty() {
                return Err(ClusterError::InvalidPartition("empty cluster".into()));
            }
            c.sort_unstable();
            for &id in c.iter() {
                if !seen.insert(id) {
                    return Err(ClusterError::InvalidPartition(format!("person {id} appears twice")));
                }
            }
        }
        clusters.sort_unstable_by_key(|c| c[0]);
        Ok(Self { clusters })
    }

    pub fn singletons(ids: &[PersonId]) -> Self {
        Self::new(ids.iter().map(|&i| vec![i]).collect()).expect("distinct ids")
    }

    pub fn clusters(&self) -> &[Vec<PersonId>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn members(&self) -> BTreeSet<PersonId> {
        self.clusters.iter().flatten().copied().collect()
    }

    /// Cluster position of each matrix index.
    fn labels(&self, m: &RelationMatrix) -> Result<Vec<usize>, ClusterError> {
        let mut labels = vec![usize::MAX; m.len()];
        let mut covered = 0;
        for (k, c) in self.clusters.iter().enumerate() {
            for &id in c {
                let i = m.index_of(id).ok_or(ClusterError::CoverageMismatch)?;
                labels[i] = k;
                covered += 1;
            }
        }
        if covered != m.len() {
            return Err(ClusterError::CoverageMismatch);
        }
        Ok(labels)
    }
}

/// Sum of judgment weights over all intra-cluster unordered pairs.
pub fn agreement_score(p: &Partition, m: &RelationMatrix, w: &AgreementWeights) -> Result<f64, ClusterError> {
    let labels = p.labels(m)?;
    Ok(m
        .pairs()
        .filter(|&(i, j)| labels[i] == labels[j])
        .map(|(i, j)| w.weight(m.get(i, j)))
        .sum())
}

/// One accepted merge of the greedy procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeStep {
    /// Smallest member id of each merged cluster, `left < right`.
    pub left: PersonId,
    pub right: PersonId,
    pub gain: f64,
    pub score_after: f64,
}

fn index_partition(m: &RelationMatrix, clusters: &[Vec<usize>]) -> Partition {
    let ids = m.ids();
    Partition::new(
        clusters
            .iter()
            .filter(|c| !c.is_empty())
            .map(|c| c.iter().map(|&i| ids[i]).collect())
            .collect(),
    )
    .expect("greedy clusters are disjoint")
}

/// Greedy clustering that also reports every accepted merge.
pub fn greedy_cluster_traced(m: &RelationMatrix, w: &AgreementWeights) -> (Partition, Vec<MergeStep>) {
    let n = m.len();
    let ids = m.ids();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut min_id: Vec<PersonId> = ids.to_vec();
    let mut alive = vec![true; n];
    // gain[a][b]: score change from merging clusters a and b.
    let mut gain = vec![vec![0.0f64; n]; n];
    for (i, j) in m.pairs() {
        let g = w.weight(m.get(i, j));
        gain[i][j] = g;
        gain[j][i] = g;
    }

    let mut trace = Vec::new();
    let mut score = 0.0;
    loop {
        let mut best: Option<(f64, PersonId, PersonId, usize, usize)> = None;
        for a in (0..n).filter(|&a| alive[a]) {
            for b in (0..n).filter(|&b| alive[b] && min_id[b] > min_id[a]) {
                let cand = (gain[a][b], min_id[a], min_id[b], a, b);
                best = match best {
                    None => Some(cand),
                    Some(cur) => {
                        let better = cand.0 > cur.0 || (cand.0 == cur.0 && (cand.1, cand.2) < (cur.1, cur.2));
                        Some(if better { cand } else { cur })
                    }
                };
            }
        }
        let Some((g, left, right, a, b)) = best else { break };
        if g <= 0.0 {
            break;
        }
        let moved = std::mem::take(&mut clusters[b]);
        clusters[a].extend(moved);
        alive[b] = false;
        for c in 0..n {
            if alive[c] && c != a {
                gain[a][c] += gain[b][c];
                gain[c][a] = gain[a][c];
            }
        }
        min_id[a] = min_id[a].min(min_id[b]);
        score += g;
        trace.push(MergeStep {
            left,
            right,
            gain: g,
            score_after: score,
        });
    }
    (index_partition(m, &clusters), trace)
}

pub fn greedy_cluster(m: &RelationMatrix, w: &AgreementWeights) -> Partition {
    greedy_cluster_traced(m, w).0
}

/// Best-scoring partition over all set partitions of the matrix persons.
///
/// Among equal scores, more clusters win; remaining ties go to the partition
/// whose restricted-growth labelling (persons in ascending id order) is
/// lexicographically smallest.
pub fn exhaustive_cluster(m: &RelationMatrix, w: &AgreementWeights) -> Result<(Partition, f64), ClusterError> {
    let n = m.len();
    if n > EXHAUSTIVE_MAX {
        return Err(ClusterError::TooLarge(n));
    }
    if n == 0 {
        return Ok((Partition::new(vec![]).unwrap(), 0.0));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| m.ids()[i]);
    let weights: Vec<Vec<f64>> = (0..n)
        .map(|r| (0..n).map(|c| if r == c { 0.0 } else { w.weight(m.get(order[r], order[c])) }).collect())
        .collect();

    // Restricted growth strings in lexicographic order; labels[k] is the
    // cluster of the k-th smallest id.
    let mut labels = vec![0usize; n];
    let mut best_labels = labels.clone();
    let mut best = (f64::NEG_INFINITY, 0usize);
    loop {
        let mut score = 0.0;
        for r in 0..n {
            for c in (r + 1)..n {
                if labels[r] == labels[c] {
                    score += weights[r][c];
                }
            }
        }
        let k = labels.iter().max().unwrap() + 1;
        if score > best.0 || (score == best.0 && k > best.1) {
            best = (score, k);
            best_labels.clone_from(&labels);
        }
        // Advance to the next restricted growth string.
        let mut pos = n - 1;
        loop {
            if pos == 0 {
                let mut clusters = vec![Vec::new(); best.1];
                for (r, &l) in best_labels.iter().enumerate() {
                    clusters[l].push(order[r]);
                }
                return Ok((index_partition(m, &clusters), best.0));
            }
            let prefix_max = labels[..pos].iter().max().copied().unwrap();
            if labels[pos] <= prefix_max {
                labels[pos] += 1;
                labels[pos + 1..].iter_mut().for_each(|l| *l = 0);
                break;
            }
            pos -= 1;
        }
    }
}

/// A detected social group: at least two members and their enclosing box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRegion {
    pub member_ids: Vec<PersonId>,
    pub bbox: BBox,
}

/// Turn every cluster with two or more members into a [`GroupRegion`],
/// ordered by smallest member id.
pub fn extract_groups(p: &Partition, persons: &[PersonDetection]) -> Result<Vec<GroupRegion>, ClusterError> {
    p.clusters()
        .iter()
        .filter(|c| c.len() >= 2)
        .map(|c| {
            let boxes = c
                .iter()
                .map(|&id| {
                    persons
                        .iter()
                        .find(|q| q.person_id == id)
                        .map(|q| q.bbox)
                        .ok_or(ClusterError::UnknownPerson(id))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(GroupRegion {
                member_ids: c.clone(),
                bbox: enclosing_bbox(&boxes).expect("cluster has members"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pair_filter::Provenance;
    use Judgment::*;

    fn matrix(ids: &[PersonId], entries: &[(usize, usize, Judgment)]) -> RelationMatrix {
        let mut m = RelationMatrix::new(ids.to_vec());
        for (i, j) in m.pairs().collect::<Vec<_>>() {
            m.set(i, j, No, Provenance::Classified);
        }
        for &(i, j, v) in entries {
            m.set(i, j, v, Provenance::Classified);
        }
        m
    }

    fn part(clusters: &[&[PersonId]]) -> Partition {
        Partition::new(clusters.iter().map(|c| c.to_vec()).collect()).unwrap()
    }

    #[test]
    fn score_fixtures() {
        let w = AgreementWeights::default();
        let m = matrix(&[1, 2, 3], &[(0, 1, Yes), (1, 2, Yes), (0, 2, No)]);
        assert_eq!(agreement_score(&Partition::singletons(&[1, 2, 3]), &m, &w).unwrap(), 0.0);
        assert_eq!(agreement_score(&part(&[&[1, 2, 3]]), &m, &w).unwrap(), 1.0);
        assert_eq!(agreement_score(&part(&[&[1, 2], &[3]]), &m, &w).unwrap(), 1.0);
        assert_eq!(
            agreement_score(&part(&[&[1, 2]]), &m, &w),
            Err(ClusterError::CoverageMismatch)
        );
        assert_eq!(
            agreement_score(&part(&[&[1, 2], &[3, 4]]), &m, &w),
            Err(ClusterError::CoverageMismatch)
        );
    }

    #[test]
    fn greedy_hand_trace() {
        let w = AgreementWeights::default();
        let m = matrix(&[1, 2, 3], &[(0, 1, Yes), (1, 2, Yes), (0, 2, No)]);
        let (p, trace) = greedy_cluster_traced(&m, &w);
        assert_eq!(p, part(&[&[1, 2], &[3]]));
        assert_eq!(trace.len(), 1);
        assert_eq!((trace[0].left, trace[0].right, trace[0].gain), (1, 2, 1.0));
    }

    #[test]
    fn greedy_extremes() {
        let w = AgreementWeights::default();
        let all_no = matrix(&[1, 2, 3, 4], &[]);
        assert_eq!(greedy_cluster(&all_no, &w), Partition::singletons(&[1, 2, 3, 4]));
        let mut all_yes = RelationMatrix::new(vec![1, 2, 3, 4]);
        for (i, j) in all_yes.pairs().collect::<Vec<_>>() {
            all_yes.set(i, j, Yes, Provenance::Classified);
        }
        assert_eq!(greedy_cluster(&all_yes, &w), part(&[&[1, 2, 3, 4]]));
        let empty = RelationMatrix::new(vec![]);
        assert!(greedy_cluster(&empty, &w).is_empty());
    }

    #[test]
    fn softer_notsure_weight_changes_merges() {
        // 1-2 yes, 1-3 yes, 2-3 not sure: with w_notsure = -0.25 the triple merges.
        let m = matrix(&[1, 2, 3], &[(0, 1, Yes), (0, 2, Yes), (1, 2, NotSure)]);
        let hard = greedy_cluster(&m, &AgreementWeights::default());
        assert_eq!(hard, part(&[&[1, 2], &[3]]));
        let soft = greedy_cluster(&m, &AgreementWeights::new(1.0, -1.0, -0.25).unwrap());
        assert_eq!(soft, part(&[&[1, 2, 3]]));
    }

    #[test]
    fn exhaustive_fixtures() {
        let w = AgreementWeights::default();
        let m = matrix(&[1, 2, 3], &[(0, 1, Yes), (1, 2, Yes), (0, 2, No)]);
        let (p, s) = exhaustive_cluster(&m, &w).unwrap();
        assert_eq!(s, 1.0);
        assert_eq!(p, part(&[&[1, 2], &[3]]));

        let all_no = matrix(&[5, 6, 7], &[]);
        let (p, s) = exhaustive_cluster(&all_no, &w).unwrap();
        assert_eq!((p, s), (Partition::singletons(&[5, 6, 7]), 0.0));

        let big = RelationMatrix::new((0..11).collect());
        assert_eq!(exhaustive_cluster(&big, &w), Err(ClusterError::TooLarge(11)));
    }

    #[test]
    fn exhaustive_visits_bell_many_partitions() {
        // With every pair Yes the single cluster is the unique optimum.
        for n in 1..=6u32 {
            let mut m = RelationMatrix::new((0..n).collect());
            for (i, j) in m.pairs().collect::<Vec<_>>() {
                m.set(i, j, Yes, Provenance::Classified);
            }
            let (p, s) = exhaustive_cluster(&m, &AgreementWeights::default()).unwrap();
            assert_eq!(p.len(), 1);
            assert_eq!(s, f64::from(n * (n - 1) / 2));
        }
    }

    #[test]
    fn weights_validation() {
        assert!(AgreementWeights::new(0.0, -1.0, -1.0).is_err());
        assert!(AgreementWeights::new(1.0, 0.5, -1.0).is_err());
        assert!(AgreementWeights::new(1.0, -1.0, 0.1).is_err());
        assert!(AgreementWeights::new(1.0, 0.0, -0.25).is_ok());
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![vec![1], vec![]]).is_err());
        assert!(Partition::new(vec![vec![1, 2], vec![2]]).is_err());
        assert_eq!(part(&[&[3, 1], &[0]]).clusters(), &[vec![0], vec![1, 3]]);
    }

    #[test]
    fn extract_group_boxes() {
        let persons = [
            (1, [10.0, 20.0, 30.0, 60.0]),
            (2, [40.0, 25.0, 55.0, 70.0]),
            (3, [100.0, 0.0, 110.0, 10.0]),
            (4, [200.0, 0.0, 210.0, 10.0]),
            (5, [220.0, 5.0, 230.0, 40.0]),
        ]
        .map(|(id, b)| PersonDetection {
            person_id: id,
            bbox: BBox::try_from(b).unwrap(),
            confidence: 1.0,
            median_depth: None,
        });
        assert!(extract_groups(&Partition::singletons(&[1, 2, 3]), &persons).unwrap().is_empty());
        let groups = extract_groups(&part(&[&[5, 4], &[3], &[2, 1]]), &persons).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].member_ids, vec![1, 2]);
        assert_eq!(groups[0].bbox, BBox::new(10.0, 20.0, 55.0, 70.0).unwrap());
        assert_eq!(groups[1].member_ids, vec![4, 5]);
        assert_eq!(
            extract_groups(&part(&[&[1, 9]]), &persons),
            Err(ClusterError::UnknownPerson(9))
        );
    }
}
