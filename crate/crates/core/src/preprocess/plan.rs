//! Plan-document linearization. A plan is a tree of operator elements; it is
//! flattened by in-order traversal, where an n-ary node emits its first
//! child's subtree, then itself, then the remaining children.

use roxmltree::{Document, Node};

use super::lexer::{strip_literals, tokenize};
use super::{SourceKind, TokenSeq};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanDoc {
    pub query_id: String,
    pub document: String,
}

impl PlanDoc {
    pub fn new(query_id: impl Into<String>, document: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            document: document.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Estimate {
    Rows,
    Cost,
}

fn estimate_kind(attr: &str) -> Option<Estimate> {
    let lower = attr.to_ascii_lowercase();
    if lower.contains("estimat") {
        if lower.contains("row") || lower.contains("card") {
            Some(Estimate::Rows)
        } else {
            Some(Estimate::Cost)
        }
    } else {
        match lower.as_str() {
            "rows" | "cardinality" => Some(Estimate::Rows),
            "cost" | "runtime" => Some(Estimate::Cost),
            _ => None,
        }
    }
}

/// Order-of-magnitude token for an estimate, e.g. 4213 rows -> `ROWS_1E3`.
pub fn bucket_estimate(prefix: &str, raw: &str) -> String {
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => {
            let mut exp = v.log10().floor() as i32;
            // guard against log10 rounding at exact powers of ten
            if 10f64.powi(exp + 1) <= v {
                exp += 1;
            } else if 10f64.powi(exp) > v {
                exp -= 1;
            }
            format!("{prefix}_1E{exp}")
        }
        Ok(v) if v == 0.0 => format!("{prefix}_0"),
        _ => format!("{prefix}_UNK"),
    }
}

/// Comparison operators spelled with angle brackets become words so that
/// linearized plans carry no markup characters.
fn rename_operator(token: String) -> String {
    match token.as_str() {
        "<" => "LT".into(),
        "<=" => "LE".into(),
        ">" => "GT".into(),
        ">=" => "GE".into(),
        "<>" => "NE".into(),
        "->" => "ARROW".into(),
        "=>" => "FATARROW".into(),
        _ => token,
    }
}

fn value_tokens(value: &str, templatize: bool) -> impl Iterator<Item = String> {
    let toks = tokenize(value);
    let toks = if templatize { strip_literals(&toks) } else { toks };
    toks.into_iter().map(rename_operator)
}

fn emit_node(node: Node, templatize: bool, out: &mut Vec<String>) {
    out.push(node.tag_name().name().to_string());
    for attr in node.attributes() {
        match (estimate_kind(attr.name()), templatize) {
            (Some(_), true) => {}
            (Some(kind), false) => {
                out.push(attr.name().to_string());
                let prefix = match kind {
                    Estimate::Rows => "ROWS",
                    Estimate::Cost => "COST",
                };
                out.push(bucket_estimate(prefix, attr.value()));
            }
            (None, _) => {
                out.push(attr.name().to_string());
                out.extend(value_tokens(attr.value(), templatize));
            }
        }
    }
    for text in node.children().filter(|c| c.is_text()) {
        if let Some(t) = text.text() {
            out.extend(value_tokens(t, templatize));
        }
    }
}

fn in_order(node: Node, templatize: bool, out: &mut Vec<String>) {
    let mut children = node.children().filter(|c| c.is_element());
    match children.next() {
        None => emit_node(node, templatize, out),
        Some(first) => {
            in_order(first, templatize, out);
            emit_node(node, templatize, out);
            for child in children {
                in_order(child, templatize, out);
            }
        }
    }
}

/// Linearizes a plan document. With `templatize`, literal attribute values
/// become `LITERAL` and estimate attributes are dropped; otherwise literals
/// are kept verbatim and estimates are bucketed by order of magnitude.
pub fn linearize_plan(plan: &PlanDoc, templatize: bool) -> Result<TokenSeq> {
    let doc = Document::parse(&plan.document).map_err(|e| Error::PlanParse {
        position: format!("{}:{}", e.pos().row, e.pos().col),
        message: e.to_string(),
    })?;
    let mut tokens = Vec::new();
    in_order(doc.root_element(), templatize, &mut tokens);
    Ok(TokenSeq {
        query_id: plan.query_id.clone(),
        tokens,
        source_kind: if templatize {
            SourceKind::PlanTemplate
        } else {
            SourceKind::Plan
        },
        label: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(doc: &str, templatize: bool) -> Vec<String> {
        linearize_plan(&PlanDoc::new("q", doc), templatize).unwrap().tokens
    }

    #[test]
    fn single_node() {
        assert_eq!(lin(r#"<Scan table="t"/>"#, false), ["Scan", "table", "t"]);
    }

    #[test]
    fn two_child_join_in_order() {
        let doc = r#"<Join><Scan table="t1"/><Scan table="t2"/></Join>"#;
        assert_eq!(lin(doc, false), ["Scan", "table", "t1", "Join", "Scan", "table", "t2"]);
    }

    #[test]
    fn nary_node_emits_after_first_child() {
        let doc = "<N><A/><B/><C/></N>";
        assert_eq!(lin(doc, false), ["A", "N", "B", "C"]);
        let doc = "<U><V><W/></V></U>";
        assert_eq!(lin(doc, false), ["W", "V", "U"]);
    }

    #[test]
    fn estimates_are_bucketed_or_dropped() {
        let doc = r#"<Filter predicate="x &lt;= 42" EstimateRows="4213" EstimatedTotalSubtreeCost="0.37"/>"#;
        assert_eq!(
            lin(doc, false),
            ["Filter", "predicate", "x", "LE", "42", "EstimateRows", "ROWS_1E3", "EstimatedTotalSubtreeCost", "COST_1E-1"]
        );
        assert_eq!(lin(doc, true), ["Filter", "predicate", "x", "LE", "LITERAL"]);
    }

    #[test]
    fn bucket_edges() {
        assert_eq!(bucket_estimate("ROWS", "1000"), "ROWS_1E3");
        assert_eq!(bucket_estimate("ROWS", "999.9"), "ROWS_1E2");
        assert_eq!(bucket_estimate("ROWS", "1"), "ROWS_1E0");
        assert_eq!(bucket_estimate("ROWS", "0"), "ROWS_0");
        assert_eq!(bucket_estimate("ROWS", "abc"), "ROWS_UNK");
    }

    #[test]
    fn templatized_output_has_no_digit_only_tokens() {
        let doc = r#"<Top count="100"><Filter predicate="a = 5 AND b = 'x'" EstimateRows="12"><Scan table="t" rows="9"/></Filter></Top>"#;
        let toks = lin(doc, true);
        assert!(toks.iter().all(|t| !t.chars().all(|c| c.is_ascii_digit())), "{toks:?}");
        assert!(toks.iter().all(|t| !t.contains('<') && !t.contains('>')));
    }

    #[test]
    fn attribute_order_is_document_order() {
        assert_eq!(lin(r#"<S b="x" a="y"/>"#, false), ["S", "b", "x", "a", "y"]);
    }

    #[test]
    fn malformed_markup_reports_position() {
        match linearize_plan(&PlanDoc::new("q", "<A><B></A>"), false) {
            Err(Error::PlanParse { position, .. }) => assert!(position.starts_with("1:")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
