use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use query2vec::corpus::{builtin_templates, generate_templated_workload};
use query2vec::preprocess::{
    build_vocabulary, is_literal, lex, linearize_plan, normalize_workload, strip_literals, tokenize, PlanDoc,
    SourceKind, TokenKind, TokenSeq, LITERAL,
};

fn sqlish() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        Just("SELECT".to_string()),
        Just("from".to_string()),
        Just("WHERE".to_string()),
        Just(" ".to_string()),
        Just(",".to_string()),
        Just("(".to_string()),
        Just(")".to_string()),
        Just("=".to_string()),
        Just("<>".to_string()),
        Just("'".to_string()),
        Just("''".to_string()),
        Just("--".to_string()),
        Just("\n".to_string()),
        Just("\"".to_string()),
        "[a-zA-Z_][a-zA-Z0-9_]{0,6}",
        "[0-9]{1,5}(\\.[0-9]{1,3})?([eE][+-]?[0-9]{1,2})?",
        "'[^']{0,6}'",
        any::<char>().prop_map(String::from),
    ];
    prop::collection::vec(piece, 0..30).prop_map(|v| v.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn strip_literals_is_idempotent(sql in sqlish(), extra in prop::collection::vec(".{0,5}", 0..5)) {
        let mut toks = tokenize(&sql);
        toks.extend(extra);
        let once = strip_literals(&toks);
        prop_assert_eq!(strip_literals(&once), once.clone());
        prop_assert_eq!(once.len(), toks.len());
    }

    #[test]
    fn no_literal_survives(sql in sqlish()) {
        let out = strip_literals(&tokenize(&sql));
        for t in &out {
            prop_assert!(!is_literal(t), "{t:?} survived in {out:?}");
        }
        // Everything the lexer calls a literal was replaced, everything else kept.
        let lexed = lex(&sql).tokens;
        prop_assert_eq!(lexed.len(), out.len());
        for (tok, o) in lexed.iter().zip(&out) {
            let literal = matches!(tok.kind, TokenKind::NumberLiteral | TokenKind::StringLiteral);
            if literal {
                prop_assert_eq!(o.as_str(), LITERAL);
            } else {
                prop_assert_eq!(o, &tok.text);
            }
        }
    }

    #[test]
    fn templated_workloads_normalize_without_literals(seed in any::<u64>()) {
        let w = generate_templated_workload(&builtin_templates(), 1, seed).unwrap();
        for kind in [SourceKind::RawSql, SourceKind::Plan, SourceKind::PlanTemplate] {
            for seq in normalize_workload(&w, kind).unwrap() {
                prop_assert!(!seq.tokens.is_empty());
                prop_assert!(seq.tokens.iter().all(|t| !is_literal(t)));
                if kind != SourceKind::RawSql {
                    prop_assert!(seq.tokens.iter().all(|t| !t.contains('<') && !t.contains('>')));
                }
            }
        }
    }
}

/// Ordered trees whose nodes have at most two children.
#[derive(Clone, Debug)]
struct Shape(Vec<Shape>);

impl Shape {
    fn size(&self) -> usize {
        1 + self.0.iter().map(Shape::size).sum::<usize>()
    }

    fn xml(&self, labels: &mut impl Iterator<Item = String>) -> String {
        let name = labels.next().unwrap();
        let inner: String = self.0.iter().map(|c| c.xml(labels)).collect();
        format!("<{name}>{inner}</{name}>")
    }
}

fn shapes(n: usize) -> Vec<Shape> {
    if n == 1 {
        return vec![Shape(vec![])];
    }
    let mut out: Vec<Shape> = shapes(n - 1).into_iter().map(|c| Shape(vec![c])).collect();
    for left in 1..n - 1 {
        for l in shapes(left) {
            for r in shapes(n - 1 - left) {
                out.push(Shape(vec![l.clone(), r]));
            }
        }
    }
    out
}

fn permutations(items: &[String]) -> Vec<Vec<String>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head.clone());
            out.push(p);
        }
    }
    out
}

fn linearize(shape: &Shape, labels: &[String]) -> Vec<String> {
    let doc = shape.xml(&mut labels.iter().cloned());
    linearize_plan(&PlanDoc::new("p", doc), true).unwrap().tokens
}

#[test]
fn labelings_of_one_shape_give_distinct_sequences() {
    // Trees with n nodes are counted by the Motzkin number M(n-1).
    let motzkin = [1, 1, 2, 4, 9];
    for n in 1..=5 {
        let all = shapes(n);
        assert_eq!(all.len(), motzkin[n - 1]);
        let names: Vec<String> = (0..n).map(|i| format!("Op{i}")).collect();
        for shape in &all {
            assert_eq!(shape.size(), n);
            let perms = permutations(&names);
            let seqs: BTreeSet<Vec<String>> = perms.iter().map(|p| linearize(shape, p)).collect();
            assert_eq!(seqs.len(), perms.len(), "shape {shape:?}");
            assert!(seqs.iter().all(|s| s.len() == n));
        }
    }
}

#[test]
fn distinct_shapes_can_share_a_sequence() {
    // X(Y, Z) and Z(X(Y)) both read "Y X Z".
    let a = linearize_plan(&PlanDoc::new("a", "<X><Y/><Z/></X>"), true).unwrap().tokens;
    let b = linearize_plan(&PlanDoc::new("b", "<Z><X><Y/></X></Z>"), true).unwrap().tokens;
    assert_eq!(a, ["Y", "X", "Z"]);
    assert_eq!(a, b);
}

#[test]
fn vocabulary_is_identical_across_runs() {
    let w = generate_templated_workload(&builtin_templates(), 5, 9).unwrap();
    let corpus = normalize_workload(&w, SourceKind::RawSql).unwrap();
    let a = serde_json::to_string(&build_vocabulary(&corpus, 2).unwrap()).unwrap();
    let b = serde_json::to_string(&build_vocabulary(&corpus, 2).unwrap()).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vocabulary_invariants(
        docs in prop::collection::vec(prop::collection::vec("[a-e]{1,2}", 1..8), 1..10),
        min_count in 1u64..4,
    ) {
        let corpus: Vec<TokenSeq> = docs
            .iter()
            .enumerate()
            .map(|(i, d)| TokenSeq::new(format!("d{i}"), d.clone(), SourceKind::RawSql))
            .collect();
        let v = build_vocabulary(&corpus, min_count).unwrap();
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for d in &docs {
            for t in d {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        for i in 0..v.len() {
            prop_assert_eq!(v.index_of(v.token(i)), i);
        }
        for (t, c) in &counts {
            if *c >= min_count {
                prop_assert!(v.contains(t));
                prop_assert_eq!(v.count(t), *c);
            } else {
                prop_assert!(!v.contains(t));
                prop_assert_eq!(v.index_of(t), 0);
            }
        }
        let regular: Vec<(u64, &str)> = (3..v.len()).map(|i| (v.counts()[i], v.token(i))).collect();
        for w in regular.windows(2) {
            prop_assert!(w[0].0 > w[1].0 || (w[0].0 == w[1].0 && w[0].1 < w[1].1));
        }
    }
}
