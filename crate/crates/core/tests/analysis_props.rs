use num_rational::Ratio;
use proptest::prelude::*;
use safescore_core::analysis::{
    aggregate_corpus, aggregate_task, consistency_stats, diff_runs, failure_tally, read_annotations,
    FailureAnnotation, FailureCategory,
};
use safescore_core::{GoalVector, IndicatorVectors, ScoreCard};

type R = Ratio<i64>;

/// Exact inclusive quantile over integer quarter-units.
fn oracle_quantile(sorted: &[i64], p: R) -> R {
    let h = R::from_integer(sorted.len() as i64 - 1) * p;
    let lo = h.floor().to_integer() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - h.floor();
    R::from_integer(sorted[lo]) + frac * R::from_integer(sorted[hi] - sorted[lo])
}

fn as_f64(r: R) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn check_against_oracle(quarters: &[i64]) {
    let values: Vec<f64> = quarters.iter().map(|&q| q as f64 / 4.0).collect();
    let st = consistency_stats(&values).unwrap();
    let mut sorted = quarters.to_vec();
    sorted.sort_unstable();
    let quarter = R::new(1, 4);
    let q1 = oracle_quantile(&sorted, R::new(1, 4)) * quarter;
    let med = oracle_quantile(&sorted, R::new(1, 2)) * quarter;
    let q3 = oracle_quantile(&sorted, R::new(3, 4)) * quarter;
    assert_eq!(st.q1, as_f64(q1), "{quarters:?}");
    assert_eq!(st.median, as_f64(med), "{quarters:?}");
    assert_eq!(st.q3, as_f64(q3), "{quarters:?}");
    assert_eq!(st.iqr, as_f64(q3 - q1), "{quarters:?}");
    let k = R::new(3, 2) * (q3 - q1);
    let expected: Vec<u64> = quarters
        .iter()
        .enumerate()
        .filter(|&(_, &v)| {
            let v = R::from_integer(v) * quarter;
            v < q1 - k || v > q3 + k
        })
        .map(|(i, _)| i as u64)
        .collect();
    let got: Vec<u64> = st.outliers.iter().map(|o| o.0).collect();
    assert_eq!(got, expected, "{quarters:?}");
    let n = quarters.len() as i64;
    let mean = R::new(quarters.iter().sum::<i64>(), n) * quarter;
    assert!((st.mean - as_f64(mean)).abs() <= 1e-12);
    let var = quarters
        .iter()
        .map(|&v| {
            let d = R::from_integer(v) * quarter - mean;
            d * d
        })
        .sum::<R>()
        / R::from_integer(n);
    assert!((st.std * st.std - as_f64(var)).abs() <= 1e-12);
}

#[test]
fn quartiles_match_exact_oracle_exhaustively() {
    for len in 1..=6u32 {
        for code in 0..5i64.pow(len) {
            let mut c = code;
            let v: Vec<i64> = (0..len)
                .map(|_| {
                    let d = c % 5;
                    c /= 5;
                    d
                })
                .collect();
            check_against_oracle(&v);
        }
    }
}

fn card(task: &str, trial: u64, g: &[bool], s: &[bool]) -> ScoreCard {
    ScoreCard::from_vectors(
        task,
        trial,
        GoalVector(g.to_vec()),
        IndicatorVectors {
            p: vec![true; g.len()],
            h: vec![true; g.len()],
            s: s.to_vec(),
        },
        vec![],
    )
    .unwrap()
}

fn trial_set() -> impl Strategy<Value = Vec<ScoreCard>> {
    (1..6usize, 1..12usize).prop_flat_map(|(n, trials)| {
        prop::collection::vec(
            (prop::collection::vec(any::<bool>(), n), prop::collection::vec(any::<bool>(), 2)),
            trials,
        )
        .prop_map(|rows| {
            rows.iter()
                .enumerate()
                .map(|(i, (g, s))| card("task", i as u64, g, s))
                .collect::<Vec<_>>()
        })
    })
}

fn annotations() -> impl Strategy<Value = Vec<FailureAnnotation>> {
    prop::collection::btree_set((0..4usize, 0..5u64, 0..FailureCategory::ALL.len(), 0..2u8), 0..30)
        .prop_map(|set| {
            set.into_iter()
                .map(|(t, trial, c, note)| FailureAnnotation {
                    task_id: format!("task{t}"),
                    trial_id: trial,
                    category: FailureCategory::ALL[c],
                    note: format!("n{note}"),
                })
                .collect()
        })
}

proptest! {
    #[test]
    fn quartiles_match_oracle_for_longer_lists(v in prop::collection::vec(0..5i64, 7..40)) {
        check_against_oracle(&v);
    }

    #[test]
    fn stats_are_ordered(v in prop::collection::vec(-1e3f64..1e3, 1..50)) {
        let st = consistency_stats(&v).unwrap();
        prop_assert!(st.min <= st.q1 && st.q1 <= st.median && st.median <= st.q3 && st.q3 <= st.max);
        prop_assert!(st.min <= st.mean && st.mean <= st.max);
        prop_assert!(st.std >= 0.0 && st.iqr >= 0.0);
    }

    #[test]
    fn aggregation_ignores_card_order(cards in trial_set().prop_flat_map(|c| Just(c).prop_shuffle())) {
        let mut sorted = cards.clone();
        sorted.sort_by_key(|c| c.trial_id);
        prop_assert_eq!(aggregate_task(&cards).unwrap(), aggregate_task(&sorted).unwrap());
    }

    #[test]
    fn aggregate_means_stay_in_unit_interval(cards in trial_set()) {
        let s = aggregate_task(&cards).unwrap();
        for v in [s.mean_q, s.mean_sq, s.mean_seq, s.mean_seq_oracle] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(s.mean_sq <= s.mean_q && s.mean_seq <= s.mean_seq_oracle);
        prop_assert_eq!(s.trial_count, cards.len());
    }

    #[test]
    fn self_diff_flags_nothing(a in trial_set(), b in trial_set(), gap in 0.0f64..1.0) {
        let mut b = b;
        for c in &mut b {
            c.task_id = "other".into();
        }
        let all: Vec<_> = a.into_iter().chain(b).collect();
        let rows = aggregate_corpus(&all).unwrap();
        let report = diff_runs(&rows, &rows, gap);
        prop_assert_eq!(report.flagged().count(), 0);
        prop_assert!(report.rows.iter().all(|r| r.gap == 0.0));
        prop_assert!(report.only_a.is_empty() && report.only_b.is_empty());
    }

    #[test]
    fn diff_is_symmetric(a in trial_set(), b in trial_set(), gap in 0.0f64..1.0) {
        let ra = aggregate_task(&a).unwrap();
        let rb = aggregate_task(&b).unwrap();
        let ab = diff_runs(std::slice::from_ref(&ra), std::slice::from_ref(&rb), gap);
        let ba = diff_runs(std::slice::from_ref(&rb), std::slice::from_ref(&ra), gap);
        prop_assert_eq!(ab.rows[0].gap, ba.rows[0].gap);
        prop_assert_eq!(ab.rows[0].flagged, ba.rows[0].flagged);
    }

    #[test]
    fn tally_bounds(ann in annotations()) {
        let tally = failure_tally(&ann);
        prop_assert_eq!(tally.per_task.len(), FailureCategory::ALL.len());
        for c in FailureCategory::ALL {
            let per_task = tally.per_task[&c];
            let total = tally.total[&c];
            prop_assert!(per_task <= total);
            prop_assert!(total <= ann.iter().filter(|a| a.category == c).count());
            prop_assert!(per_task <= 4 && total <= 20);
        }
    }

    #[test]
    fn annotation_csv_round_trip(ann in annotations()) {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(["task_id", "trial_id", "category", "note"]).unwrap();
        for a in &ann {
            w.write_record([a.task_id.as_str(), &a.trial_id.to_string(), a.category.as_str(), &a.note]).unwrap();
        }
        let bytes = w.into_inner().unwrap();
        prop_assert_eq!(read_annotations(bytes.as_slice()).unwrap(), ann);
    }
}

#[test]
fn diff_gap_is_printed_to_six_places() {
    let a = aggregate_task(&[card("t", 0, &[false], &[])]).unwrap();
    let mut b = a.clone();
    b.mean_q = 0.1;
    let (a, b) = ([a], [b]);
    let report = diff_runs(&a, &b, 0.05);
    let mut out = vec![];
    report.write_csv(&mut out, &a, &b).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "t,0.000000,0.100000,0.100000,true");
}
