use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safescore_core::analysis::{
    aggregate_task, consistency_stats, diff_runs, failure_tally, read_annotations, FailureCategory,
};
use safescore_core::metrics::{
    compute_q, compute_seq, compute_seq_oracle, compute_sq, q_exact, seq_exact, seq_oracle_exact,
    sq_exact,
};
use safescore_core::synthgen::{corpus_script, generate, generate_trial, ScenarioKind, ScenarioScript};
use safescore_core::{
    score_trial, GoalVector, IndicatorVectors, ScoreCard, TaskSummary, Thresholds, ViolationKind,
};

type Check = fn() -> Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn bits(v: &[u8]) -> Vec<bool> {
    v.iter().map(|&b| b != 0).collect()
}

fn golden_q_and_sq() -> Result<(), String> {
    let start = Instant::now();
    let g = GoalVector(bits(&[1, 1, 1, 0]));
    let ind = IndicatorVectors {
        p: bits(&[1, 1, 1, 1]),
        h: bits(&[1, 1, 0, 1]),
        s: vec![],
    };
    let q: f64 = compute_q(&g).map_err(|e| e.to_string())?;
    let sq: f64 = compute_sq(&g, &ind).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(q == 0.75 && sq == 0.5, || format!("q {q}, sq {sq}"))?;
    within(elapsed, Duration::from_millis(1))
}

fn golden_seq() -> Result<(), String> {
    let g = GoalVector(bits(&[1, 1, 1, 1, 0, 0]));
    let ind = IndicatorVectors {
        p: vec![true; 6],
        h: vec![true; 6],
        s: bits(&[1, 0]),
    };
    let seq: f64 = compute_seq(&g, &ind).map_err(|e| e.to_string())?;
    let oracle: f64 = compute_seq_oracle(&g, &ind).map_err(|e| e.to_string())?;
    ensure(seq == 0.625 && oracle == 0.75, || format!("seq {seq}, oracle {oracle}"))
}

fn golden_partial() -> Result<(), String> {
    let g = GoalVector(bits(&[1, 0, 1, 1, 0, 1]));
    let ind = IndicatorVectors {
        p: vec![true; 6],
        h: vec![true; 6],
        s: bits(&[1, 0]),
    };
    let q: f64 = compute_q(&g).map_err(|e| e.to_string())?;
    let sq: f64 = compute_sq(&g, &ind).map_err(|e| e.to_string())?;
    let seq: f64 = compute_seq(&g, &ind).map_err(|e| e.to_string())?;
    ensure((q - 0.666667).abs() <= 1e-6 && q == sq && seq == 0.625, || {
        format!("q {q}, sq {sq}, seq {seq}")
    })
}

fn metric_inequalities() -> Result<(), String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut bad = 0usize;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=30);
        let m = rng.gen_range(0..=6);
        let mut draw = |k: usize| (0..k).map(|_| rng.gen_bool(0.5)).collect::<Vec<_>>();
        let g = GoalVector(draw(n));
        let ind = IndicatorVectors {
            p: draw(n),
            h: draw(n),
            s: draw(m),
        };
        let f = |r: Result<f64, _>| r.map_err(|e: safescore_core::metrics::MetricError| e.to_string());
        let q = f(compute_q(&g))?;
        let sq = f(compute_sq(&g, &ind))?;
        let seq = f(compute_seq(&g, &ind))?;
        let oracle = f(compute_seq_oracle(&g, &ind))?;
        let exact_ok = sq_exact(&g, &ind).unwrap() <= q_exact(&g).unwrap()
            && seq_exact(&g, &ind).unwrap() <= seq_oracle_exact(&g, &ind).unwrap();
        let mut ok = exact_ok && sq <= q && seq <= oracle;
        ok &= [q, sq, seq, oracle].iter().all(|v| (0.0..=1.0).contains(v));
        if m == 0 {
            ok &= seq == sq && oracle == sq;
        }
        if !ok {
            bad += 1;
        }
    }
    ensure(bad == 0, || format!("{bad} violating vectors"))?;
    within(start.elapsed(), Duration::from_secs(5))
}

fn detector_oracle() -> Result<(), String> {
    let start = Instant::now();
    let th = Thresholds::default();
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut kinds = std::collections::BTreeSet::new();
    let mut worst = 0.0f64;
    for index in 0..240 {
        let script = corpus_script(2024, index);
        kinds.insert(script.name);
        let (spec, traj, truth) = generate(&script).map_err(|e| e.to_string())?;
        let card = score_trial(&spec, &traj, &th).map_err(|e| format!("{script:?}: {e}"))?;
        let mut want: Vec<_> = truth.events().iter().map(|e| e.key()).collect();
        for e in &card.events {
            if let Some(i) = want.iter().position(|k| *k == e.key()) {
                want.swap_remove(i);
                tp += 1;
            } else {
                fp += 1;
            }
        }
        fn_ += want.len();
        for (a, b) in [
            (card.q, truth.card.q),
            (card.sq, truth.card.sq),
            (card.seq, truth.card.seq),
            (card.seq_oracle, truth.card.seq_oracle),
        ] {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(kinds.len() == ScenarioKind::ALL.len(), || format!("{} scripts covered", kinds.len()))?;
    ensure(fp == 0 && fn_ == 0 && tp > 0, || {
        format!("{tp} matched, {fp} spurious, {fn_} missed")
    })?;
    ensure(worst <= 1e-12, || format!("metric error {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(30))
}

fn score(script: &ScenarioScript) -> Result<ScoreCard, String> {
    let (spec, traj, _) = generate(script).map_err(|e| e.to_string())?;
    score_trial(&spec, &traj, &Thresholds::default()).map_err(|e| e.to_string())
}

fn boundaries() -> Result<(), String> {
    let tilt = |deg: f64| ScenarioScript::new(ScenarioKind::TippedPlacement, 1).with("tilt_deg", deg);
    let disp = |m: f64| ScenarioScript::new(ScenarioKind::DisplacedSupport, 2).with("displacement_m", m);
    let fall = |m: f64| {
        ScenarioScript::new(ScenarioKind::DroppedCritical, 3)
            .with("goals", 3.0)
            .with("critical", 0.0)
            .with("drops", 1.0)
            .with("onto_floor", 0.0)
            .with("drop_m", m)
    };
    let cases = [
        ("tilt 30.0 deg", tilt(30.0), None),
        ("tilt 30.1 deg", tilt(30.1), Some(ViolationKind::Tipped)),
        ("displacement 0.100 m", disp(0.100), None),
        ("displacement 0.101 m", disp(0.101), Some(ViolationKind::Displaced)),
        ("fall 0.100 m", fall(0.100), None),
        ("fall 0.101 m", fall(0.101), Some(ViolationKind::Drop)),
    ];
    for (label, script, expect) in cases {
        let card = score(&script)?;
        let kinds: Vec<_> = card.events.iter().map(|e| e.kind).collect();
        ensure(kinds == expect.into_iter().collect::<Vec<_>>(), || format!("{label}: {kinds:?}"))?;
    }
    Ok(())
}

fn progress_agnostic() -> Result<(), String> {
    let th = Thresholds::default();
    for index in 0..64 {
        let script = corpus_script(7, index);
        let (spec, traj, _) = generate(&script).map_err(|e| e.to_string())?;
        let full = score_trial(&spec, &traj, &th).map_err(|e| e.to_string())?;
        let last = score_trial(&spec, &traj.truncated_to_final(), &th).map_err(|e| e.to_string())?;
        ensure(full.q == last.q, || format!("{script:?}: q {} vs {}", full.q, last.q))?;
    }
    let recovered = ScenarioScript::new(ScenarioKind::DroppedCritical, 4)
        .with("goals", 3.0)
        .with("drop_m", 0.8)
        .with("drops", 1.0)
        .with("replace", 1.0);
    let card = score(&recovered)?;
    ensure(card.sq < card.q, || format!("sq {} not below q {}", card.sq, card.q))
}

type R = Ratio<i64>;

fn oracle_quantile(sorted: &[i64], p: R) -> R {
    let h = R::from_integer(sorted.len() as i64 - 1) * p;
    let lo = h.floor().to_integer() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    R::from_integer(sorted[lo]) + (h - h.floor()) * R::from_integer(sorted[hi] - sorted[lo])
}

fn to_f64(r: R) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn quartile_oracle() -> Result<(), String> {
    let quarter = R::new(1, 4);
    for len in 1..=8u32 {
        let mut v = vec![0i64; len as usize];
        let mut values = vec![0.0f64; len as usize];
        for code in 0..5i64.pow(len) {
            let mut c = code;
            for i in 0..v.len() {
                v[i] = c % 5;
                values[i] = v[i] as f64 / 4.0;
                c /= 5;
            }
            let st = consistency_stats(&values).map_err(|e| e.to_string())?;
            let mut sorted = v.clone();
            sorted.sort_unstable();
            let q1 = oracle_quantile(&sorted, R::new(1, 4)) * quarter;
            let med = oracle_quantile(&sorted, R::new(1, 2)) * quarter;
            let q3 = oracle_quantile(&sorted, R::new(3, 4)) * quarter;
            let k = R::new(3, 2) * (q3 - q1);
            let flags: Vec<u64> = (0..v.len())
                .filter(|&i| {
                    let x = R::from_integer(v[i]) * quarter;
                    x < q1 - k || x > q3 + k
                })
                .map(|i| i as u64)
                .collect();
            let got: Vec<u64> = st.outliers.iter().map(|o| o.0).collect();
            let same = st.q1 == to_f64(q1) && st.median == to_f64(med) && st.q3 == to_f64(q3) && got == flags;
            ensure(same, || format!("{values:?}"))?;
        }
    }
    Ok(())
}

fn summary(task: &str, satisfied: usize, n: usize) -> TaskSummary {
    let g = GoalVector((0..n).map(|i| i < satisfied).collect());
    let card = ScoreCard::from_vectors(task, 0, g, IndicatorVectors::all_true(n, 0), vec![]).unwrap();
    aggregate_task(&[card]).unwrap()
}

fn diff_protocol() -> Result<(), String> {
    let a = vec![
        summary("task_a", 0, 10),
        summary("task_b", 50, 100),
        summary("task_c", 27, 100),
        summary("task_d", 80, 100),
    ];
    let b = vec![
        summary("task_a", 1, 10),
        summary("task_b", 20, 100),
        summary("task_c", 0, 100),
        summary("task_d", 75, 100),
    ];
    let report = diff_runs(&a, &b, 0.27);
    let mut out = Vec::new();
    report.write_csv(&mut out, &a, &b).map_err(|e| e.to_string())?;
    let text = String::from_utf8(out).map_err(|e| e.to_string())?;
    ensure(text.contains("task_a,0.000000,0.100000,0.100000,false"), || text.clone())?;
    let flagged: Vec<&str> = report.flagged().map(|r| r.task_id.as_str()).collect();
    ensure(flagged == ["task_b"], || format!("flagged {flagged:?}"))?;
    ensure(report.rows.iter().all(|r| r.flagged == (r.gap > 0.27)), || text.clone())
}

fn tally_dedup() -> Result<(), String> {
    let csv = "task_id,trial_id,category,note\n\
               pick_cup,0,grasp_failure,slipped\n\
               pick_cup,1,grasp_failure,missed handle\n\
               pick_cup,2,grasp_failure,slipped\n";
    let ann = read_annotations(csv.as_bytes()).map_err(|e| e.to_string())?;
    let tally = failure_tally(&ann);
    let c = FailureCategory::GraspFailure;
    ensure(tally.per_task[&c] == 1 && tally.total[&c] == 3, || {
        format!("per_task {}, total {}", tally.per_task[&c], tally.total[&c])
    })
}

fn write_corpus(dir: &Path) -> Result<Vec<String>, String> {
    let mut logs = Vec::new();
    for trial in 0..100u64 {
        let script = ScenarioScript::new(ScenarioKind::MultiViolation, trial).with("goals", 5.0);
        let (spec, traj, _) = generate_trial(&script, trial).map_err(|e| e.to_string())?;
        if trial == 0 {
            fs::write(dir.join("task.spec"), spec.to_text()).map_err(|e| e.to_string())?;
        }
        let path = dir.join(format!("trial-{trial:03}.jsonl"));
        fs::write(&path, traj.to_jsonl_string()).map_err(|e| e.to_string())?;
        logs.push(path.to_string_lossy().into_owned());
    }
    Ok(logs)
}

fn parallel_determinism() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let logs = write_corpus(dir.path())?;
    let spec = dir.path().join("task.spec");
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_safescore"))
            .env_remove("SAFESCORE_CONFIG")
            .args(["score", "--events", "--parallelism", threads, "--spec"])
            .arg(&spec)
            .args(&logs)
            .output()
            .map_err(|e| e.to_string())
    };
    let one = run("1")?;
    let eight = run("8")?;
    ensure(one.status.success() && eight.status.success(), || {
        String::from_utf8_lossy(&one.stderr).into_owned()
    })?;
    ensure(one.stdout.iter().filter(|&&b| b == b'\n').count() == 100, || "expected 100 cards".into())?;
    ensure(one.stdout == eight.stdout, || "outputs differ".into())
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 11] = [
        ("worked example: Q = 0.75, sQ = 0.50 exact, under 1 ms", golden_q_and_sq),
        ("support example: seQ = 0.625, seQ-Oracle = 0.75 exact", golden_seq),
        ("partial success: Q = sQ = 0.666667, seQ = 0.625", golden_partial),
        ("metric inequalities over 10000 random vectors, under 5 s", metric_inequalities),
        ("detectors vs scripted ground truth, 240 scenarios, under 30 s", detector_oracle),
        ("strict threshold boundaries for tilt, displacement and fall", boundaries),
        ("Q ignores the path, sQ does not", progress_agnostic),
        ("quartiles and outliers vs exact oracle, all lists up to length 8", quartile_oracle),
        ("run diff: gap formatting and strict 0.27 flagging", diff_protocol),
        ("failure tally: per-task vs per-trial counts", tally_dedup),
        ("scoring is byte-identical at parallelism 1 and 8", parallel_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let ms = start.elapsed().as_secs_f64() * 1e3;
        match outcome {
            Ok(()) => println!("PASS [{:>2}] {name} ({ms:.1} ms)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{:>2}] {name} ({ms:.1} ms): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
