use hmtc_core::evalkit::{
    confusion, fit_quadratic, micro_from_counts, micro_prf, threshold_sweep, LabelConfusion,
};
use hmtc_core::{AssignmentMatrix, ScoreMatrix};
use proptest::prelude::*;

const FIXTURE: &str = include_str!("fixtures/dev_confusion_subtask_a.tsv");

fn fixture(rule: &str) -> Vec<LabelConfusion> {
    FIXTURE
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split('\t').collect::<Vec<_>>())
        .filter(|f| f[0] == rule)
        .map(|f| LabelConfusion {
            label: f[1].to_string(),
            tn: f[2].parse().unwrap(),
            fp: f[3].parse().unwrap(),
            fn_: f[4].parse().unwrap(),
            tp: f[5].parse().unwrap(),
        })
        .collect()
}

#[test]
fn fixture_rows_cover_the_dev_set() {
    for rule in ["t=0", "t=-0.25", "lca"] {
        let cms = fixture(rule);
        assert_eq!(cms.len(), 8);
        assert!(cms.iter().all(|c| c.total() == 2079), "{rule}");
    }
}

#[test]
fn fixture_totals_reproduce_reported_f1() {
    for (rule, totals, f1) in [
        ("t=0", (14225, 177, 482, 1748), 0.8414),
        ("t=-0.25", (14069, 333, 320, 1910), 0.8540),
        ("lca", (14085, 317, 330, 1900), 0.8545),
    ] {
        let cms = fixture(rule);
        let sum = cms.iter().fold((0, 0, 0, 0), |a, c| {
            (a.0 + c.tn, a.1 + c.fp, a.2 + c.fn_, a.3 + c.tp)
        });
        assert_eq!(sum, totals, "{rule}");
        let s = micro_prf(&cms);
        assert!((s.f1 - f1).abs() < 5e-4, "{rule}: {}", s.f1);
    }
}

#[test]
fn counts_only_route_matches() {
    assert!((micro_from_counts(1748, 177, 482).f1 - 0.8414).abs() < 5e-4);
    assert!((micro_from_counts(1910, 333, 320).f1 - 0.8540).abs() < 5e-4);
    assert!((micro_from_counts(1900, 317, 330).f1 - 0.8545).abs() < 5e-4);
    let z = micro_from_counts(0, 0, 0);
    assert_eq!((z.precision, z.recall, z.f1), (0.0, 0.0, 0.0));
    assert!(z.zero_division);
}

fn bool_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), rows * cols)
}

fn assignment(cols: usize, rows: usize, v: Vec<bool>) -> AssignmentMatrix {
    AssignmentMatrix::new((0..cols).map(|c| format!("l{c}")).collect(), rows, v).unwrap()
}

proptest! {
    #[test]
    fn perfect_prediction_scores_one(rows in 1usize..12, cols in 1usize..6, seed in bool_matrix(12, 6)) {
        let mut v: Vec<bool> = seed[..rows * cols].to_vec();
        v[0] = true;
        let g = assignment(cols, rows, v);
        let s = micro_prf(&confusion(&g, &g).unwrap());
        prop_assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn swapping_gold_and_pred(rows in 1usize..12, cols in 1usize..6, a in bool_matrix(12, 6), b in bool_matrix(12, 6)) {
        let g = assignment(cols, rows, a[..rows * cols].to_vec());
        let p = assignment(cols, rows, b[..rows * cols].to_vec());
        let gp = confusion(&g, &p).unwrap();
        let pg = confusion(&p, &g).unwrap();
        for (x, y) in gp.iter().zip(&pg) {
            prop_assert_eq!(x.fp, y.fn_);
            prop_assert_eq!(x.fn_, y.fp);
            prop_assert_eq!(x.total(), rows);
        }
        let s1 = micro_prf(&gp);
        let s2 = micro_prf(&pg);
        prop_assert_eq!(s1.precision, s2.recall);
        prop_assert_eq!(s1.recall, s2.precision);
    }

    #[test]
    fn quadratic_residuals_are_orthogonal(
        pts in prop::collection::vec((-2.0f64..2.0, -1.0f64..1.0), 3..40)
    ) {
        let mut ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        prop_assume!(ts.len() >= 3);
        let fit = fit_quadratic(&pts).unwrap();
        for k in 0..3 {
            let dot: f64 = pts.iter().map(|&(t, y)| (y - fit.eval(t)) * t.powi(k)).sum();
            prop_assert!(dot.abs() < 1e-8, "column t^{}: {}", k, dot);
        }
    }

    #[test]
    fn sweep_recall_is_non_increasing(
        rows in 2usize..20, cols in 1usize..6,
        raw in prop::collection::vec(-2.0f64..2.0, 120),
        gold in bool_matrix(20, 6)
    ) {
        let scores = ScoreMatrix::new(
            (0..cols).map(|c| format!("l{c}")).collect(), rows, raw[..rows * cols].to_vec()).unwrap();
        let g = assignment(cols, rows, gold[..rows * cols].to_vec());
        let grid = hmtc_core::evalkit::linspace(-1.0, 1.0, 20);
        let sweep = threshold_sweep(&scores, &g, &grid).unwrap();
        for w in sweep.points.windows(2) {
            prop_assert!(w[1].recall <= w[0].recall);
            prop_assert!(w[1].cardinality <= w[0].cardinality);
        }
    }
}

#[test]
fn sweep_on_exact_parabola_points() {
    // y = t^2 is convex: no interior maximum
    let fit = fit_quadratic(&[(-1.0, 1.0), (0.0, 0.0), (0.5, 0.25), (1.0, 1.0)]).unwrap();
    assert!(fit.vertex().is_none());
    assert!((fit.a - 1.0).abs() < 1e-12);
}
