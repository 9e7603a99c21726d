use log::warn;
use patterns::{answer_regex, not_sure_regex, placeholder_regex};

use super::{ClassifyError, Judgment};
use crate::depth::DepthCue;

/// Template shipped in `prompts/default.txt`.
pub const DEFAULT_PROMPT_TEMPLATE: &str = include_str!("../../prompts/default.txt");

const PLACEHOLDERS: [&str; 3] = ["z_a", "z_b", "z_diff"];

mod patterns {
    use regex::Regex;
    use std::sync::OnceLock;

    pub fn placeholder_regex() -> &'static Regex {
        static RE: OnceLock<Regex> = OnceLock::new();
        RE.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap())
    }

    pub fn not_sure_regex() -> &'static Regex {
        static RE: OnceLock<Regex> = OnceLock::new();
        RE.get_or_init(|| Regex::new(r"(?i)\bnot\s+sure\b").unwrap())
    }

    pub fn answer_regex() -> &'static Regex {
        static RE: OnceLock<Regex> = OnceLock::new();
        RE.get_or_init(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap())
    }
}

/// Check a template without substituting anything.
pub fn validate_template(template: &str) -> Result<(), ClassifyError> {
    let mut seen = [false; 3];
    for cap in placeholder_regex().captures_iter(template) {
        let name = &cap[1];
        match PLACEHOLDERS.iter().position(|p| *p == name) {
            Some(i) => seen[i] = true,
            None => return Err(ClassifyError::Template(format!("unknown placeholder {{{name}}}"))),
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(ClassifyError::Template(format!(
            "missing placeholder {{{}}}",
            PLACEHOLDERS[i]
        )));
    }
    Ok(())
}

/// Substitute `{z_a}`, `{z_b}` and `{z_diff}` with the cue's decimal values.
pub fn build_prompt(template: &str, cue: &DepthCue) -> Result<String, ClassifyError> {
    validate_template(template)?;
    let out = placeholder_regex().replace_all(template, |cap: &regex::Captures<'_>| match &cap[1] {
        "z_a" => cue.z_a.to_string(),
        "z_b" => cue.z_b.to_string(),
        _ => cue.abs_diff.to_string(),
    });
    Ok(out.into_owned())
}

/// Parse a free-text answer. `None` when neither "not sure", "yes" nor "no" occurs.
pub fn parse_answer_strict(raw: &str) -> Option<Judgment> {
    if not_sure_regex().is_match(raw) {
        return Some(Judgment::NotSure);
    }
    let m = answer_regex().find(raw)?;
    if m.as_str().eq_ignore_ascii_case("yes") {
        Some(Judgment::Yes)
    } else {
        Some(Judgment::No)
    }
}

/// Total version of [`parse_answer_strict`]: anything unrecognised is `NotSure`.
pub fn parse_answer(raw: &str) -> Judgment {
    parse_answer_strict(raw).unwrap_or_else(|| {
        warn!("unrecognised classifier answer {raw:?}; treating as not sure");
        Judgment::NotSure
    })
}
