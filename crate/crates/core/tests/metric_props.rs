use num_rational::Ratio;
use proptest::prelude::*;
use safescore_core::metrics::{
    compute_q, compute_seq, compute_seq_oracle, compute_sq, q_exact, seq_exact, seq_oracle_exact,
    sq_exact, MetricError,
};
use safescore_core::synthgen::{scenario_spec, ScenarioKind};
use safescore_core::violations::indicators_from_events;
use safescore_core::{GoalVector, IndicatorVectors, Role, ScoreCard, ViolationEvent, ViolationKind};

fn vectors() -> impl Strategy<Value = (GoalVector, IndicatorVectors)> {
    (1..40usize, 0..6usize).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(any::<bool>(), m),
        )
            .prop_map(|(g, p, h, s)| (GoalVector(g), IndicatorVectors { p, h, s }))
    })
}

fn count(v: &[bool]) -> usize {
    v.iter().filter(|&&b| b).count()
}

const KINDS: [ViolationKind; 5] = [
    ViolationKind::Drop,
    ViolationKind::Fell,
    ViolationKind::Mishandle,
    ViolationKind::Tipped,
    ViolationKind::Displaced,
];

fn events() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0..12usize, 0..KINDS.len()), 0..10)
}

fn build_events(spec: &safescore_core::TaskSpec, raw: &[(usize, usize)]) -> Vec<ViolationEvent> {
    raw.iter()
        .enumerate()
        .map(|(i, &(o, k))| {
            let obj = &spec.objects[o % spec.objects.len()];
            ViolationEvent {
                t: i as f64,
                object_id: obj.object_id.clone(),
                kind: KINDS[k],
                role_at_event: obj.role,
                detail: String::new(),
            }
        })
        .collect()
}

proptest! {
    #[test]
    fn metrics_match_counting_oracle((g, ind) in vectors()) {
        let n = g.len();
        let m = ind.s.len();
        let w = (0..n).filter(|&i| g.0[i] && ind.p[i] && ind.h[i]).count();
        prop_assert_eq!(q_exact(&g).unwrap(), Ratio::new(count(&g.0), n));
        prop_assert_eq!(sq_exact(&g, &ind).unwrap(), Ratio::new(w, n));
        prop_assert_eq!(seq_exact(&g, &ind).unwrap(), Ratio::new(w + count(&ind.s), n + m));
        prop_assert_eq!(seq_oracle_exact(&g, &ind).unwrap(), Ratio::new(w + m, n + m));
        let q: f64 = compute_q(&g).unwrap();
        prop_assert!((q - count(&g.0) as f64 / n as f64).abs() <= 1e-12);
    }

    #[test]
    fn metric_bounds((g, ind) in vectors()) {
        let q = q_exact(&g).unwrap();
        let sq = sq_exact(&g, &ind).unwrap();
        let seq = seq_exact(&g, &ind).unwrap();
        let oracle = seq_oracle_exact(&g, &ind).unwrap();
        let zero = Ratio::from_integer(0);
        let one = Ratio::from_integer(1);
        for v in [q, sq, seq, oracle] {
            prop_assert!(zero <= v && v <= one);
        }
        prop_assert!(sq <= q);
        prop_assert!(seq <= oracle);
        let f: [f64; 4] = [
            compute_q(&g).unwrap(),
            compute_sq(&g, &ind).unwrap(),
            compute_seq(&g, &ind).unwrap(),
            compute_seq_oracle(&g, &ind).unwrap(),
        ];
        prop_assert!(f[1] <= f[0] && f[2] <= f[3]);
    }

    #[test]
    fn no_support_goals_reduces_to_sq((g, mut ind) in vectors()) {
        ind.s.clear();
        let sq = sq_exact(&g, &ind).unwrap();
        prop_assert_eq!(seq_exact(&g, &ind).unwrap(), sq);
        prop_assert_eq!(seq_oracle_exact(&g, &ind).unwrap(), sq);
    }

    #[test]
    fn clean_trial_gives_sq_equal_q((g, ind) in vectors()) {
        let clean = IndicatorVectors::all_true(g.len(), ind.s.len());
        prop_assert_eq!(sq_exact(&g, &clean).unwrap(), q_exact(&g).unwrap());
        prop_assert_eq!(seq_exact(&g, &clean).unwrap(), seq_oracle_exact(&g, &clean).unwrap());
    }

    #[test]
    fn restoring_a_support_goal_adds_one_share((g, mut ind) in vectors(), j in 0..6usize) {
        prop_assume!(!ind.s.is_empty());
        let j = j % ind.s.len();
        ind.s[j] = false;
        let before = seq_exact(&g, &ind).unwrap();
        ind.s[j] = true;
        let after = seq_exact(&g, &ind).unwrap();
        prop_assert_eq!(after - before, Ratio::new(1, g.len() + ind.s.len()));
    }

    #[test]
    fn more_events_never_raise_indicators(raw in events(), extra in events(), n in 1..6usize) {
        let spec = scenario_spec(ScenarioKind::MultiViolation, n);
        let small = build_events(&spec, &raw);
        let mut big = small.clone();
        big.extend(build_events(&spec, &extra));
        let a = indicators_from_events(&spec, &small, |_| false);
        let b = indicators_from_events(&spec, &big, |_| false);
        for (x, y) in a.p.iter().zip(&b.p).chain(a.h.iter().zip(&b.h)).chain(a.s.iter().zip(&b.s)) {
            prop_assert!(*y <= *x);
        }
        let g = GoalVector(vec![true; spec.goals.len()]);
        prop_assert!(sq_exact(&g, &b).unwrap() <= sq_exact(&g, &a).unwrap());
        prop_assert!(seq_exact(&g, &b).unwrap() <= seq_exact(&g, &a).unwrap());
    }

    #[test]
    fn non_critical_targets_never_clear_handling(raw in events(), n in 1..6usize) {
        let spec = scenario_spec(ScenarioKind::MultiViolation, n);
        let evs: Vec<_> = build_events(&spec, &raw)
            .into_iter()
            .filter(|e| spec.object(&e.object_id).is_some_and(|o| o.role == Role::Target && !o.critical))
            .collect();
        let ind = indicators_from_events(&spec, &evs, |_| false);
        prop_assert!(ind.h.iter().all(|&h| h));
        prop_assert!(ind.s.iter().all(|&s| s));
    }

    #[test]
    fn f32_and_f64_agree((g, ind) in vectors()) {
        let a: ScoreCard = ScoreCard::from_vectors("t", 0, g.clone(), ind.clone(), vec![]).unwrap();
        let b = safescore_core::ScoreCard32::from_vectors("t", 0, g, ind, vec![]).unwrap();
        for (x, y) in [(a.q, b.q), (a.sq, b.sq), (a.seq, b.seq), (a.seq_oracle, b.seq_oracle)] {
            prop_assert!((x - f64::from(y)).abs() <= 1e-6);
        }
    }

    #[test]
    fn card_json_round_trip((g, ind) in vectors(), trial in any::<u64>()) {
        let card: ScoreCard = ScoreCard::from_vectors("task", trial, g, ind, vec![]).unwrap();
        let back = ScoreCard::from_json(card.to_json()).unwrap();
        prop_assert_eq!(back, card);
    }
}

#[test]
fn worked_example_is_exact() {
    let g = GoalVector(vec![true, true, true, false]);
    let ind = IndicatorVectors {
        p: vec![true; 4],
        h: vec![true, true, false, true],
        s: vec![],
    };
    assert_eq!(q_exact(&g).unwrap(), Ratio::new(3, 4));
    assert_eq!(sq_exact(&g, &ind).unwrap(), Ratio::new(1, 2));
    assert_eq!(compute_q::<f64>(&g).unwrap(), 0.75);
    assert_eq!(compute_sq::<f64>(&g, &ind).unwrap(), 0.5);
}

#[test]
fn support_example_is_exact() {
    let g = GoalVector(vec![true, true, true, true, false, false]);
    let ind = IndicatorVectors {
        p: vec![true; 6],
        h: vec![true; 6],
        s: vec![true, false],
    };
    assert_eq!(seq_exact(&g, &ind).unwrap(), Ratio::new(5, 8));
    assert_eq!(seq_oracle_exact(&g, &ind).unwrap(), Ratio::new(3, 4));
    assert_eq!(compute_seq::<f64>(&g, &ind).unwrap(), 0.625);
    assert_eq!(compute_seq_oracle::<f64>(&g, &ind).unwrap(), 0.75);
    assert!((compute_q::<f64>(&g).unwrap() - 0.666667).abs() <= 1e-6);
    assert_eq!(compute_sq::<f64>(&g, &ind).unwrap(), compute_q::<f64>(&g).unwrap());
}

#[test]
fn degenerate_inputs_are_errors() {
    let empty = GoalVector(vec![]);
    assert_eq!(q_exact(&empty), Err(MetricError::EmptyGoals));
    let g = GoalVector(vec![true, false]);
    let short = IndicatorVectors {
        p: vec![true],
        h: vec![true, true],
        s: vec![],
    };
    assert!(matches!(sq_exact(&g, &short), Err(MetricError::LengthMismatch { what: "p", .. })));
}

#[test]
fn two_thirds_survives_card_json() {
    let g = GoalVector(vec![true, true, false]);
    let card: ScoreCard =
        ScoreCard::from_vectors("t", 1, g.clone(), IndicatorVectors::all_true(3, 0), vec![]).unwrap();
    let text = card.to_json().to_string();
    assert!(text.contains("\"q\":0.666667"));
    let back = ScoreCard::from_json(serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(back.q, 2.0 / 3.0);
}
