//! Social group region detection.
//!
//! Given person boxes and a depth map per scene, pairs of persons are pruned
//! by image-plane distance and depth difference, the surviving pairs are
//! judged by a [`classifier::PairClassifier`], and persons are clustered by
//! agreement with those judgments. Each cluster of two or more persons yields
//! a group region: the box enclosing its members.

pub mod classifier;
pub mod cli;
pub mod cluster;
pub mod depth;
pub mod evaluation;
pub mod geometry;
pub mod pair_filter;
pub mod pipeline;
pub mod scene_io;
pub mod sweep;
pub mod synth;

pub use classifier::{Judgment, PairClassifier};
pub use cluster::{greedy_cluster, AgreementWeights, GroupRegion, Partition};
pub use geometry::{BBox, ImageGeometry};
pub use pair_filter::{FilterParams, RelationMatrix};
pub use pipeline::{run_detect, PipelineConfig};
pub use scene_io::{PersonId, Scene};
