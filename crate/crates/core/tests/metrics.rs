mod common;

use proptest::prelude::*;
use skr_core::harness::{compute_metrics, render_csv, render_text, AccuracyMatrix};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

#[test]
fn random_matrices_match_the_formulas() {
    let mut rng = common::rng(99);
    for i in 0..20 {
        let k = 1 + i % 7;
        let rows = common::random_matrix(&mut rng, k);
        let (aa, bwt, fwt) = common::hand_metrics(&rows);
        let m = compute_metrics(&AccuracyMatrix::from_rows(rows)).unwrap();
        assert!(close(m.aa, aa));
        assert_eq!(m.bwt.is_some(), bwt.is_some());
        assert!(m.bwt.zip(bwt).is_none_or(|(a, b)| close(a, b)));
        assert!(m.fwt.zip(fwt).is_none_or(|(a, b)| close(a, b)));
    }
}

#[test]
fn hand_worked_two_task_matrix() {
    // acc(1,0)=.6 acc(1,1)=.8 acc(1,2)=.5 ; acc(2,0)=.4 acc(2,1)=0 acc(2,2)=.7
    let m = AccuracyMatrix::from_rows(vec![vec![0.6, 0.8, 0.5], vec![0.4, 0.0, 0.7]]);
    let r = compute_metrics(&m).unwrap();
    assert!(close(r.aa, 0.6));
    assert!(close(r.bwt.unwrap(), -0.3));
    assert!(close(r.fwt.unwrap(), 0.3));
}

#[test]
fn missing_cells_are_reported() {
    let mut m = AccuracyMatrix::new(2);
    m.set(1, 0, 1.0);
    m.set(1, 1, 1.0);
    m.set(2, 0, 1.0);
    m.set(2, 2, 1.0);
    assert!(!m.is_complete());
    assert!(compute_metrics(&m).is_err());
    m.set(1, 2, 1.0);
    assert!(m.is_complete());
    assert!(compute_metrics(&m).is_ok());
}

#[test]
fn text_and_csv_layouts() {
    let mut m = AccuracyMatrix::new(2);
    for (k, j, v) in [(1, 0, 0.5), (1, 1, 1.0), (1, 2, 0.25), (2, 0, 0.0), (2, 2, 0.75)] {
        m.set(k, j, v);
    }
    let names = vec!["alpha".to_string(), "b".to_string()];
    let metrics = compute_metrics(&m).unwrap();
    let text = render_text("demo", &names, &m, &metrics);
    assert_eq!(
        text,
        "run demo\nAA  50.0\nBWT -75.0\nFWT 75.0\n\ntask     j=0    j=1    j=2\nalpha   50.0  100.0   25.0\nb        0.0      -   75.0\n"
    );
    assert_eq!(render_csv(&names, &m), "task,j0,j1,j2\nalpha,0.5,1,0.25\nb,0,,0.75\n");
}

#[test]
fn matrix_json_round_trip() {
    let m = AccuracyMatrix::from_rows(vec![vec![0.1, 0.2]]);
    let back: AccuracyMatrix = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(back, m);
}

proptest! {
    #[test]
    fn metrics_stay_in_range(seed in any::<u64>(), k in 1usize..9) {
        let rows = common::random_matrix(&mut common::rng(seed), k);
        let m = compute_metrics(&AccuracyMatrix::from_rows(rows)).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.aa));
        if let Some(b) = m.bwt { prop_assert!((-1.0..=1.0).contains(&b)); }
        if let Some(f) = m.fwt { prop_assert!((-1.0..=1.0).contains(&f)); }
    }

    #[test]
    fn constant_rows_have_no_transfer(v in 0.0f64..=1.0, k in 2usize..8) {
        let m = compute_metrics(&AccuracyMatrix::from_rows(vec![vec![v; k + 1]; k])).unwrap();
        prop_assert!(close(m.aa, v));
        prop_assert!(close(m.bwt.unwrap(), 0.0));
        prop_assert!(close(m.fwt.unwrap(), 0.0));
    }
}
