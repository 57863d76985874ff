//! Synthetic error-labeled workloads. Queries instantiated from templates
//! carrying a syntactic marker receive that marker's error class with
//! probability `1 - noise`; everything else is labeled [`NO_ERROR`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{generate_templated_workload, TemplateSpec, Workload};
use crate::error::{Error, Result};
use crate::rng;

const BUILTIN_ERROR_TEMPLATES: &str = include_str!("../../templates/error_corpus.toml");
const BUILTIN_BIG_TABLES: &str = include_str!("../../templates/big_tables.txt");

pub const NO_ERROR: &str = "-1";
pub const OOM: &str = "OOM";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    Window,
    HeavyJoin,
    DeepNesting,
    LargeInList,
}

impl Marker {
    /// Error code used for this marker in the multi-error task.
    pub fn error_code(self) -> &'static str {
        match self {
            Marker::Window => "604",
            Marker::HeavyJoin => "608",
            Marker::DeepNesting => "630",
            Marker::LargeInList => "2031",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorTask {
    /// One class per marker plus [`NO_ERROR`].
    MultiError,
    /// Binary: every marker maps to [`OOM`].
    Oom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTemplateSpec {
    #[serde(default)]
    pub marker: Option<Marker>,
    #[serde(flatten)]
    pub template: TemplateSpec,
}

#[derive(Deserialize)]
struct ErrorTemplateFile {
    #[serde(rename = "template")]
    templates: Vec<ErrorTemplateSpec>,
}

pub fn builtin_error_templates() -> Vec<ErrorTemplateSpec> {
    let file: ErrorTemplateFile =
        toml::from_str(BUILTIN_ERROR_TEMPLATES).expect("built-in error templates parse");
    file.templates
}

pub fn builtin_big_tables() -> Vec<String> {
    BUILTIN_BIG_TABLES
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

/// Generates `plain_n` instances of every unmarked template and `marked_n`
/// of every marked one, then assigns error labels for `task`.
pub fn generate_error_workload(
    templates: &[ErrorTemplateSpec],
    plain_n: usize,
    marked_n: usize,
    task: ErrorTask,
    noise: f64,
    seed: u64,
) -> Result<Workload> {
    if !(0.0..1.0).contains(&noise) {
        return Err(Error::InvalidArgument(format!("label noise must lie in [0, 1), got {noise}")));
    }
    let mut queries = Vec::new();
    for (t, spec) in templates.iter().enumerate() {
        let n = if spec.marker.is_some() { marked_n } else { plain_n };
        if n == 0 {
            continue;
        }
        let base = generate_templated_workload(
            std::slice::from_ref(&spec.template),
            n,
            rng::derive_seed(seed, &[t as u64]),
        )?;
        for (i, mut q) in base.queries.into_iter().enumerate() {
            let label = match spec.marker {
                Some(m) if rng::keyed_rng(seed, &[0xE4404, t as u64, i as u64]).gen::<f64>() >= noise => {
                    match task {
                        ErrorTask::MultiError => m.error_code(),
                        ErrorTask::Oom => OOM,
                    }
                }
                _ => NO_ERROR,
            };
            q.label = Some(label.to_string());
            q.plan_doc = None;
            queries.push(q);
        }
    }
    Workload::new(format!("errors-{seed}"), queries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_error_templates_cover_every_marker() {
        let ts = builtin_error_templates();
        for m in [Marker::Window, Marker::HeavyJoin, Marker::DeepNesting, Marker::LargeInList] {
            assert!(ts.iter().any(|t| t.marker == Some(m)), "{m:?} missing");
        }
        assert!(ts.iter().filter(|t| t.marker.is_none()).count() >= 4);
        for t in &ts {
            t.template.validate().unwrap();
        }
    }

    #[test]
    fn no_error_class_dominates_and_noise_rate_is_close() {
        let ts = builtin_error_templates();
        let w = generate_error_workload(&ts, 150, 100, ErrorTask::Oom, 0.1, 5).unwrap();
        assert_eq!(w.len(), 8 * 150 + 8 * 100);
        let oom = w.queries.iter().filter(|q| q.label.as_deref() == Some(OOM)).count();
        let no_err = w.len() - oom;
        assert!(no_err > oom);
        // 800 marked queries, 10% noise
        assert!((680..=760).contains(&oom), "oom count {oom}");
    }

    #[test]
    fn multi_error_labels_follow_markers() {
        let ts = builtin_error_templates();
        let w = generate_error_workload(&ts, 5, 5, ErrorTask::MultiError, 0.0, 1).unwrap();
        for q in &w.queries {
            let spec = ts.iter().find(|t| q.id.starts_with(&t.template.name)).unwrap();
            let want = spec.marker.map_or(NO_ERROR, Marker::error_code);
            assert_eq!(q.label.as_deref(), Some(want));
        }
    }

    #[test]
    fn big_tables_list() {
        assert_eq!(builtin_big_tables().len(), 5);
    }
}
