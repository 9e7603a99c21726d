//! Pairwise affiliation judgments and the backends that produce them.
//!
//! A backend receives a [`PairInput`] describing one unordered person pair
//! and returns a [`Judgment`]. Three backends ship with the crate:
//!
//! - [`RemoteBackend`] posts RGB/depth crops and a prompt to an inference
//!   service over HTTP;
//! - [`HeuristicBackend`] thresholds center distance and depth difference so
//!   the pipeline runs without any network dependency;
//! - [`OracleBackend`] answers from ground-truth group membership.

mod backends;
mod prompt;
mod query;
mod remote;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::DepthCue;
use crate::scene_io::{PersonDetection, PersonId, Scene};

pub use backends::{HeuristicBackend, HeuristicParams, OracleBackend};
pub use prompt::{build_prompt, parse_answer, parse_answer_strict, validate_template, DEFAULT_PROMPT_TEMPLATE};
pub use query::{build_pair_query, PairQuery, FIRST_PERSON_COLOR, SECOND_PERSON_COLOR};
pub use remote::{encode_png_base64, ClassifierEndpoint, RemoteBackend, ENDPOINT_ENV_VAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Judgment {
    Yes,
    No,
    NotSure,
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Judgment::Yes => "Yes",
            Judgment::No => "No",
            Judgment::NotSure => "Not sure",
        })
    }
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("prompt template: {0}")]
    Template(String),
    #[error("person {0} not present in scene")]
    UnknownPerson(PersonId),
    #[error("crop region for persons {0} and {1} is empty")]
    EmptyRegion(PersonId, PersonId),
    #[error("asset {path}: {detail}")]
    MissingAsset { path: PathBuf, detail: String },
    #[error("classifier service unavailable after {attempts} attempts: {last_error}")]
    RemoteUnavailable { attempts: u32, last_error: String },
    #[error("classifier backend error: {0}")]
    Backend(String),
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
}

/// Everything a backend may need to judge one pair.
///
/// `query` is only populated for backends that report [`PairClassifier::needs_query`].
#[derive(Debug, Clone, Copy)]
pub struct PairInput<'a> {
    pub scene: &'a Scene,
    pub a: &'a PersonDetection,
    pub b: &'a PersonDetection,
    pub distance: f64,
    pub cue: DepthCue,
    pub query: Option<&'a PairQuery>,
}

pub trait PairClassifier: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether [`PairInput::query`] must carry rendered crops and a prompt.
    fn needs_query(&self) -> bool {
        false
    }

    /// Upper bound on concurrent `classify` calls worth issuing.
    fn max_inflight(&self) -> usize {
        1
    }

    fn classify(&self, input: &PairInput<'_>) -> Result<Judgment, ClassifyError>;
}
