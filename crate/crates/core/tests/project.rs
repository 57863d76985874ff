use std::collections::HashMap;

use proptest::prelude::*;
use query2vec::linalg::squared_distance;
use query2vec::project::{attach_labels, export_scatter, pca_2d, render_svg, ProjectedPoint, ScatterFormat};
use query2vec::rng::keyed_rng;
use query2vec::QueryVector;
use rand::Rng;

fn random_vectors(n: usize, d: usize, seed: u64) -> Vec<QueryVector> {
    let mut r = keyed_rng(seed, &[]);
    (0..n)
        .map(|i| QueryVector::new(format!("q{i}"), (0..d).map(|_| r.gen_range(-3.0..3.0)).collect()))
        .collect()
}

fn variance(xs: impl Iterator<Item = f64>) -> f64 {
    xs.map(|x| x * x).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn planar_points_keep_their_distances(seed in any::<u64>(), n in 3usize..30, d in 2usize..12) {
        let mut r = keyed_rng(seed, &[]);
        let basis: Vec<Vec<f64>> = (0..2).map(|_| (0..d).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let offset: Vec<f64> = (0..d).map(|_| r.gen_range(-5.0..5.0)).collect();
        let vs: Vec<QueryVector> = (0..n)
            .map(|i| {
                let (a, b): (f64, f64) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
                let values = (0..d).map(|j| offset[j] + a * basis[0][j] + b * basis[1][j]).collect();
                QueryVector::new(format!("q{i}"), values)
            })
            .collect();
        let pts = pca_2d(&vs).unwrap();
        for i in 0..n {
            for j in 0..i {
                let orig = squared_distance(&vs[i].values, &vs[j].values).sqrt();
                let proj = ((pts[i].x - pts[j].x).powi(2) + (pts[i].y - pts[j].y).powi(2)).sqrt();
                prop_assert!((orig - proj).abs() < 1e-9, "{orig} vs {proj}");
            }
        }
    }

    #[test]
    fn centered_and_ordered(seed in any::<u64>(), n in 2usize..40, d in 2usize..20) {
        let pts = pca_2d(&random_vectors(n, d, seed)).unwrap();
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / n as f64;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / n as f64;
        prop_assert!(mx.abs() < 1e-9 && my.abs() < 1e-9);
        prop_assert!(variance(pts.iter().map(|p| p.x)) >= variance(pts.iter().map(|p| p.y)));
        prop_assert!(pts.iter().all(|p| p.x.is_finite() && p.y.is_finite()));
    }
}

#[test]
fn top_component_has_at_least_sample_variance_along_any_axis() {
    let vs = random_vectors(50, 6, 11);
    let pts = pca_2d(&vs).unwrap();
    let v1 = variance(pts.iter().map(|p| p.x));
    let n = vs.len() as f64;
    for j in 0..6 {
        let mean = vs.iter().map(|v| v.values[j]).sum::<f64>() / n;
        let vj = variance(vs.iter().map(|v| v.values[j] - mean));
        assert!(v1 >= vj - 1e-9, "axis {j}: {vj} > {v1}");
    }
}

#[test]
fn collinear_points_have_zero_y() {
    let vs = vec![
        QueryVector::new("a", vec![1.0, 2.0, 3.0]),
        QueryVector::new("b", vec![2.0, 4.0, 6.0]),
        QueryVector::new("c", vec![-1.0, -2.0, -3.0]),
    ];
    let pts = pca_2d(&vs).unwrap();
    assert!(pts.iter().all(|p| p.y.abs() < 1e-9));
}

#[test]
fn csv_has_header_and_one_line_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    let mut pts = pca_2d(&random_vectors(3, 4, 1)).unwrap();
    attach_labels(&mut pts, &HashMap::from([("q0".to_string(), "t1".to_string())]));
    export_scatter(&pts, &path, ScatterFormat::Csv).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "x,y,id,label");
    assert!(lines[1].ends_with(",q0,t1"));
    assert!(lines[2].ends_with(",q1,"));
}

#[test]
fn unlabeled_svg_is_monochrome() {
    let pts = pca_2d(&random_vectors(5, 3, 2)).unwrap();
    let svg = render_svg(&pts);
    assert_eq!(svg.matches("<circle").count(), 5);
    let fills: std::collections::BTreeSet<&str> =
        svg.match_indices("fill=\"#").map(|(i, _)| &svg[i + 6..i + 13]).collect();
    assert_eq!(fills.len(), 1);
    assert!(!svg.contains("<text"));
}

#[test]
fn labeled_svg_has_legend() {
    let mut pts = pca_2d(&random_vectors(6, 3, 3)).unwrap();
    let labels: HashMap<String, String> = (0..6).map(|i| (format!("q{i}"), format!("t{}", i % 2))).collect();
    attach_labels(&mut pts, &labels);
    let svg = render_svg(&pts);
    assert_eq!(svg.matches("<text").count(), 2);
    assert!(svg.contains(">t0</text>") && svg.contains(">t1</text>"));
}

#[test]
fn exports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let vs = random_vectors(40, 8, 4);
    for format in [ScatterFormat::Csv, ScatterFormat::Svg] {
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        export_scatter(&pca_2d(&vs).unwrap(), &a, format).unwrap();
        export_scatter(&pca_2d(&vs).unwrap(), &b, format).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}

#[test]
fn export_errors() {
    let pts: Vec<ProjectedPoint> = Vec::new();
    assert!(export_scatter(&pts, "/tmp/never.csv", ScatterFormat::Csv).is_err());
    let pts = pca_2d(&random_vectors(3, 2, 5)).unwrap();
    assert!(export_scatter(&pts, "/nonexistent-dir/x/p.csv", ScatterFormat::Csv).is_err());
}
