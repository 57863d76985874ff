use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Query, Workload};
use crate::error::{Error, Result};
use crate::preprocess;
use crate::rng;

const BUILTIN_TEMPLATES: &str = include_str!("../../templates/tpch_like.toml");

/// Value generator for one placeholder slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlotDomain {
    Int { min: i64, max: i64 },
    Decimal { min: f64, max: f64, scale: u32 },
    /// Inclusive ISO-8601 date range.
    Date { start: String, end: String },
    Pool { values: Vec<String> },
    /// Comma-separated integers, for IN-lists.
    IntList {
        min_len: usize,
        max_len: usize,
        min: i64,
        max: i64,
    },
}

impl SlotDomain {
    fn validate(&self) -> std::result::Result<(), String> {
        match self {
            SlotDomain::Int { min, max } if min > max => Err(format!("int range {min}..{max} is empty")),
            SlotDomain::Decimal { min, max, .. } if !(min <= max) => {
                Err(format!("decimal range {min}..{max} is empty"))
            }
            SlotDomain::Date { start, end } => {
                let (s, e) = (parse_date(start)?, parse_date(end)?);
                if s > e {
                    Err(format!("date range {start}..{end} is empty"))
                } else {
                    Ok(())
                }
            }
            SlotDomain::Pool { values } if values.is_empty() => Err("empty value pool".into()),
            SlotDomain::IntList {
                min_len,
                max_len,
                min,
                max,
            } if min_len > max_len || *min_len == 0 || min > max => {
                Err("int_list needs 1 <= min_len <= max_len and min <= max".into())
            }
            _ => Ok(()),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> String {
        match self {
            SlotDomain::Int { min, max } => rng.gen_range(*min..=*max).to_string(),
            SlotDomain::Decimal { min, max, scale } => {
                let v = if min == max { *min } else { rng.gen_range(*min..*max) };
                format!("{v:.prec$}", prec = *scale as usize)
            }
            SlotDomain::Date { start, end } => {
                let (s, e) = (
                    parse_date(start).expect("validated"),
                    parse_date(end).expect("validated"),
                );
                let span = (e - s).num_days();
                (s + Duration::days(rng.gen_range(0..=span))).format("%Y-%m-%d").to_string()
            }
            SlotDomain::Pool { values } => values[rng.gen_range(0..values.len())].clone(),
            SlotDomain::IntList {
                min_len,
                max_len,
                min,
                max,
            } => {
                let len = rng.gen_range(*min_len..=*max_len);
                (0..len)
                    .map(|_| rng.gen_range(*min..=*max).to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            }
        }
    }
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("bad date `{s}`: {e}"))
}

/// A SQL pattern (and optional plan document pattern) with `{slot}`
/// placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub name: String,
    pub sql: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    #[serde(default)]
    pub slots: BTreeMap<String, SlotDomain>,
}

impl TemplateSpec {
    pub fn new(name: impl Into<String>, sql: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            sql: sql.into(),
            plan: None,
            slots: BTreeMap::new(),
        }
    }

    pub fn with_slot(mut self, slot: impl Into<String>, domain: SlotDomain) -> Self {
        self.slots.insert(slot.into(), domain);
        self
    }

    /// Placeholder names used by the SQL and plan patterns.
    pub fn placeholders(&self) -> Vec<String> {
        let mut names: Vec<String> = placeholders_in(&self.sql);
        if let Some(plan) = &self.plan {
            names.extend(placeholders_in(plan));
        }
        names.sort();
        names.dedup();
        names
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidTemplate {
            template: self.name.clone(),
            message,
        };
        if self.name.trim().is_empty() {
            return Err(invalid("empty template name".into()));
        }
        if self.sql.trim().is_empty() {
            return Err(invalid("empty SQL pattern".into()));
        }
        for p in self.placeholders() {
            if !self.slots.contains_key(&p) {
                return Err(invalid(format!("placeholder `{{{p}}}` has no slot domain")));
            }
        }
        for (slot, domain) in &self.slots {
            domain.validate().map_err(|m| invalid(format!("slot `{slot}`: {m}")))?;
        }
        Ok(())
    }

    /// Draws one value per slot (in slot-name order) and substitutes them
    /// into both patterns.
    pub fn instantiate(&self, rng: &mut ChaCha8Rng) -> (String, Option<String>) {
        let values: BTreeMap<&str, String> = self
            .slots
            .iter()
            .map(|(name, domain)| (name.as_str(), domain.sample(rng)))
            .collect();
        let sql = substitute(self.sql.trim(), &values, false);
        let plan = self.plan.as_deref().map(|p| substitute(p.trim(), &values, true));
        (sql, plan)
    }
}

fn placeholders_in(pattern: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_slot_name(&after[..close]) => {
                out.push(after[..close].to_string());
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_slot_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn substitute(pattern: &str, values: &BTreeMap<&str, String>, xml: bool) -> String {
    let mut out = String::with_capacity(pattern.len() + 32);
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}').filter(|&c| is_slot_name(&after[..c])) {
            Some(close) => {
                let v = &values[&after[..close]];
                if xml {
                    out.push_str(&escape_xml(v));
                } else {
                    out.push_str(v);
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Deserialize)]
struct TemplateFile {
    #[serde(rename = "template", default)]
    templates: Vec<TemplateSpec>,
}

/// Parses a TOML template file (`[[template]]` tables) and validates every
/// entry.
pub fn parse_templates(text: &str) -> Result<Vec<TemplateSpec>> {
    let file: TemplateFile = toml::from_str(text).map_err(|e| Error::InvalidTemplate {
        template: "<file>".into(),
        message: e.to_string(),
    })?;
    for t in &file.templates {
        t.validate()?;
    }
    Ok(file.templates)
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<TemplateSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_templates(&text)
}

/// The 21 analytic templates shipped with the crate.
pub fn builtin_templates() -> Vec<TemplateSpec> {
    parse_templates(BUILTIN_TEMPLATES).expect("built-in templates are valid")
}

/// Instantiates every template `n_per_template` times. Query `i` of template
/// `t` draws from a generator keyed by `(seed, t, i)`, so the output does not
/// depend on iteration order. Ids are `<template>-<i>`; labels are template
/// names.
pub fn generate_templated_workload(
    templates: &[TemplateSpec],
    n_per_template: usize,
    seed: u64,
) -> Result<Workload> {
    if templates.is_empty() {
        return Err(Error::InvalidArgument("no templates given".into()));
    }
    if n_per_template == 0 {
        return Err(Error::InvalidArgument("n_per_template must be at least 1".into()));
    }
    let mut queries = Vec::with_capacity(templates.len() * n_per_template);
    for (t, template) in templates.iter().enumerate() {
        template.validate()?;
        if template.placeholders().is_empty() && n_per_template > 1 {
            log::warn!(
                "template `{}` has no placeholders; its {} instances are identical",
                template.name,
                n_per_template
            );
        }
        for i in 0..n_per_template {
            let mut rng = rng::keyed_rng(seed, &[t as u64, i as u64]);
            let (text, plan_doc) = template.instantiate(&mut rng);
            let lexed = preprocess::lex(&text);
            if !lexed.warnings.is_empty() {
                return Err(Error::InvalidTemplate {
                    template: template.name.clone(),
                    message: format!("instance {i} does not lex cleanly: {:?}", lexed.warnings),
                });
            }
            queries.push(Query {
                id: format!("{}-{i:04}", template.name),
                text,
                label: Some(template.name.clone()),
                plan_doc,
            });
        }
    }
    Workload::new(format!("templated-{seed}"), queries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_set_has_21_templates_with_plans() {
        let ts = builtin_templates();
        assert_eq!(ts.len(), 21);
        assert!(ts.iter().all(|t| t.plan.is_some()));
        let sql: String = ts.iter().map(|t| t.sql.to_uppercase()).collect();
        for construct in [" JOIN ", "GROUP BY", "(SELECT", " OVER ("] {
            assert!(sql.contains(construct), "no template uses {construct}");
        }
        assert!(!sql.contains("CREATE VIEW"));
    }

    #[test]
    fn builtin_plans_parse() {
        let w = generate_templated_workload(&builtin_templates(), 3, 5).unwrap();
        for q in &w.queries {
            roxmltree::Document::parse(q.plan_doc.as_deref().unwrap())
                .unwrap_or_else(|e| panic!("{}: {e}", q.id));
        }
    }

    #[test]
    fn full_size_workload() {
        let w = generate_templated_workload(&builtin_templates(), 200, 1).unwrap();
        assert_eq!(w.len(), 4200);
    }

    #[test]
    fn minimal_workload() {
        let t = TemplateSpec::new("only", "SELECT a FROM t WHERE x = {v}")
            .with_slot("v", SlotDomain::Int { min: 1, max: 9 });
        let w = generate_templated_workload(&[t], 1, 99).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.queries[0].label.as_deref(), Some("only"));
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let ts: Vec<_> = builtin_templates().into_iter().take(3).collect();
        let a = generate_templated_workload(&ts, 50, 7).unwrap().to_jsonl();
        let b = generate_templated_workload(&ts, 50, 7).unwrap().to_jsonl();
        assert_eq!(a, b);
        let c = generate_templated_workload(&ts, 50, 8).unwrap().to_jsonl();
        assert_ne!(a, c);
    }

    #[test]
    fn instance_draws_do_not_depend_on_template_count() {
        let ts = builtin_templates();
        let few = generate_templated_workload(&ts[..2], 4, 3).unwrap();
        let many = generate_templated_workload(&ts, 4, 3).unwrap();
        assert_eq!(few.queries[..], many.queries[..8]);
    }

    #[test]
    fn missing_slot_domain_is_rejected() {
        let t = TemplateSpec::new("bad", "SELECT {a}, {b} FROM t")
            .with_slot("a", SlotDomain::Int { min: 0, max: 1 });
        assert!(matches!(t.validate(), Err(Error::InvalidTemplate { .. })));
    }

    #[test]
    fn constant_template_duplicates_are_allowed() {
        let t = TemplateSpec::new("const", "SELECT 1");
        let w = generate_templated_workload(&[t], 3, 0).unwrap();
        assert_eq!(w.len(), 3);
        assert!(w.queries.iter().all(|q| q.text == "SELECT 1"));
    }

    #[test]
    fn plan_values_are_xml_escaped() {
        let mut t = TemplateSpec::new("x", "SELECT '{v}'")
            .with_slot("v", SlotDomain::Pool { values: vec!["a<b".into()] });
        t.plan = Some("<Filter predicate=\"c = '{v}'\"/>".into());
        let (sql, plan) = t.instantiate(&mut rng::keyed_rng(0, &[]));
        assert_eq!(sql, "SELECT 'a<b'");
        assert_eq!(plan.unwrap(), "<Filter predicate=\"c = 'a&lt;b'\"/>");
    }

    #[test]
    fn int_list_lengths_stay_in_range() {
        let d = SlotDomain::IntList {
            min_len: 3,
            max_len: 5,
            min: 1,
            max: 9,
        };
        let mut r = rng::keyed_rng(4, &[]);
        for _ in 0..50 {
            let n = d.sample(&mut r).split(", ").count();
            assert!((3..=5).contains(&n));
        }
    }
}
