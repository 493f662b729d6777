//! Cross-trial aggregation, consistency statistics, run diffs and failure tallies.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::ScoreCard;
use crate::report::f6;
use crate::scalar::{exceeds, from_count, lit, Scalar};

/// Label of the cross-task row appended to aggregate reports.
pub const AVERAGE_ROW: &str = "Average";

/// Header of the aggregate CSV report.
pub const AGGREGATE_HEADER: [&str; 14] = [
    "task_id", "trials", "q", "sq", "seq", "seq_oracle", "tv", "ntv", "std_q", "min_q", "q1",
    "median", "q3", "max_q",
];

/// Header of the diff CSV report.
pub const DIFF_HEADER: [&str; 5] = ["task_id", "q_a", "q_b", "gap", "flagged"];

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no values to aggregate")]
    Empty,
    #[error("value {0} is not finite")]
    NonFinite(String),
    #[error("cards from different tasks: `{0}` and `{1}`")]
    MixedTasks(String, String),
    #[error("task `{task}` mixes trials with {a} and {b} goals")]
    MixedGoalCounts { task: String, a: usize, b: usize },
    #[error("row {row}: unknown failure category `{value}`")]
    UnknownCategory { row: u64, value: String },
    #[error("row {row}: duplicate annotation")]
    DuplicateAnnotation { row: u64 },
    #[error("row {row}: {message}")]
    MalformedRow { row: u64, message: String },
    #[error("aggregate report has an unexpected header")]
    BadHeader,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Spread of a set of per-trial values.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyStats<T> {
    pub mean: T,
    /// Population standard deviation.
    pub std: T,
    pub min: T,
    pub max: T,
    pub q1: T,
    pub median: T,
    pub q3: T,
    pub iqr: T,
    /// `(trial_id, value)` for every value strictly outside the 1.5 IQR fences.
    pub outliers: Vec<(u64, T)>,
}

/// Quantile of ascending `sorted` at `p`, interpolating linearly between the
/// two closest ranks at position `(n - 1) * p`.
pub fn quantile_inclusive<T: Scalar>(sorted: &[T], p: T) -> T {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty slice");
    let h = from_count::<T>(n - 1) * p;
    let lo = h.floor();
    let i = lo.to_usize().unwrap_or(0).min(n - 1);
    let frac = h - lo;
    if frac == T::zero() || i + 1 >= n {
        sorted[i]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}

fn check_finite<T: Scalar>(v: T) -> Result<T, AnalysisError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(AnalysisError::NonFinite(v.to_string()))
    }
}

fn by_value<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

fn mean_of<T: Scalar>(values: impl Iterator<Item = T>, count: usize, lo: T, hi: T) -> T {
    let sum = values.fold(T::zero(), |acc, v| acc + v);
    (sum / from_count(count)).max(lo).min(hi)
}

/// Statistics over `values`, using each value's index as its trial id.
pub fn consistency_stats<T: Scalar>(values: &[T]) -> Result<ConsistencyStats<T>, AnalysisError> {
    let labeled: Vec<(u64, T)> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| (i as u64, v))
        .collect();
    consistency_stats_labeled(&labeled)
}

/// Statistics over `(trial_id, value)` pairs. Outliers keep input order.
pub fn consistency_stats_labeled<T: Scalar>(
    values: &[(u64, T)],
) -> Result<ConsistencyStats<T>, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut sorted = values
        .iter()
        .map(|&(_, v)| check_finite(v))
        .collect::<Result<Vec<_>, _>>()?;
    sorted.sort_by(by_value);
    let n = sorted.len();
    let (min, max) = (sorted[0], sorted[n - 1]);
    let mean = mean_of(values.iter().map(|&(_, v)| v), n, min, max);
    let var = sorted
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .fold(T::zero(), |a, b| a + b)
        / from_count(n);
    let q1 = quantile_inclusive(&sorted, lit(0.25));
    let median = quantile_inclusive(&sorted, lit(0.5));
    let q3 = quantile_inclusive(&sorted, lit(0.75));
    let iqr = q3 - q1;
    let k = lit::<T>(1.5) * iqr;
    let (lo, hi) = (q1 - k, q3 + k);
    let outliers = values
        .iter()
        .filter(|&&(_, v)| v < lo || v > hi)
        .copied()
        .collect();
    Ok(ConsistencyStats {
        mean,
        std: var.sqrt(),
        min,
        max,
        q1,
        median,
        q3,
        iqr,
        outliers,
    })
}

/// One row of an aggregate report.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSummary<T> {
    pub task_id: String,
    pub trial_count: usize,
    pub mean_q: T,
    pub mean_sq: T,
    pub mean_seq: T,
    pub mean_seq_oracle: T,
    pub mean_tv: T,
    pub mean_ntv: T,
    /// Statistics over the per-trial Q values.
    pub stats: ConsistencyStats<T>,
    /// `(trial_id, q)` in trial order; empty when read back from CSV.
    pub values: Vec<(u64, T)>,
}

/// Summarizes the trials of one task. The result does not depend on card order.
pub fn aggregate_task<T: Scalar>(cards: &[ScoreCard<T>]) -> Result<TaskSummary<T>, AnalysisError> {
    let first = cards.first().ok_or(AnalysisError::Empty)?;
    for c in cards {
        if c.task_id != first.task_id {
            return Err(AnalysisError::MixedTasks(
                first.task_id.clone(),
                c.task_id.clone(),
            ));
        }
        if c.n() != first.n() {
            return Err(AnalysisError::MixedGoalCounts {
                task: first.task_id.clone(),
                a: first.n(),
                b: c.n(),
            });
        }
    }
    let key = |c: &ScoreCard<T>| {
        (
            c.trial_id,
            [c.q, c.sq, c.seq, c.seq_oracle],
            c.counts.tv,
            c.counts.ntv,
        )
    };
    let mut ordered: Vec<&ScoreCard<T>> = cards.iter().collect();
    ordered.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0)
            .then_with(|| {
                ka.1.iter()
                    .zip(kb.1.iter())
                    .map(|(x, y)| by_value(x, y))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
            .then(ka.2.cmp(&kb.2))
            .then(ka.3.cmp(&kb.3))
    });
    let values: Vec<(u64, T)> = ordered.iter().map(|c| (c.trial_id, c.q)).collect();
    let stats = consistency_stats_labeled(&values)?;
    let n = ordered.len();
    let mean = |f: &dyn Fn(&ScoreCard<T>) -> T| {
        let vs: Vec<T> = ordered.iter().map(|c| f(c)).collect();
        let lo = vs.iter().copied().fold(T::infinity(), T::min);
        let hi = vs.iter().copied().fold(T::neg_infinity(), T::max);
        mean_of(vs.into_iter(), n, lo, hi)
    };
    Ok(TaskSummary {
        task_id: first.task_id.clone(),
        trial_count: n,
        mean_q: stats.mean,
        mean_sq: mean(&|c| c.sq),
        mean_seq: mean(&|c| c.seq),
        mean_seq_oracle: mean(&|c| c.seq_oracle),
        mean_tv: mean(&|c| from_count(c.counts.tv)),
        mean_ntv: mean(&|c| from_count(c.counts.ntv)),
        stats,
        values,
    })
}

/// Groups cards by task and summarizes each, sorted by task id.
pub fn aggregate_corpus<T: Scalar>(
    cards: &[ScoreCard<T>],
) -> Result<Vec<TaskSummary<T>>, AnalysisError> {
    let mut groups: BTreeMap<&str, Vec<ScoreCard<T>>> = BTreeMap::new();
    for c in cards {
        groups.entry(&c.task_id).or_default().push(c.clone());
    }
    groups.values().map(|g| aggregate_task(g)).collect()
}

/// Cross-task row: unweighted means of the task means. Its statistics are over
/// the task mean Q values, labeled by row position.
pub fn average_row<T: Scalar>(rows: &[TaskSummary<T>]) -> Result<TaskSummary<T>, AnalysisError> {
    if rows.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let n = rows.len();
    let values: Vec<(u64, T)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (i as u64, r.mean_q))
        .collect();
    let stats = consistency_stats_labeled(&values)?;
    let mean = |f: &dyn Fn(&TaskSummary<T>) -> T| {
        let lo = rows.iter().map(f).fold(T::infinity(), T::min);
        let hi = rows.iter().map(f).fold(T::neg_infinity(), T::max);
        mean_of(rows.iter().map(f), n, lo, hi)
    };
    Ok(TaskSummary {
        task_id: AVERAGE_ROW.to_string(),
        trial_count: rows.iter().map(|r| r.trial_count).sum(),
        mean_q: stats.mean,
        mean_sq: mean(&|r| r.mean_sq),
        mean_seq: mean(&|r| r.mean_seq),
        mean_seq_oracle: mean(&|r| r.mean_seq_oracle),
        mean_tv: mean(&|r| r.mean_tv),
        mean_ntv: mean(&|r| r.mean_ntv),
        stats,
        values,
    })
}

impl<T: Scalar> TaskSummary<T> {
    fn csv_record(&self) -> Vec<String> {
        let s = &self.stats;
        vec![
            self.task_id.clone(),
            self.trial_count.to_string(),
            f6(self.mean_q),
            f6(self.mean_sq),
            f6(self.mean_seq),
            f6(self.mean_seq_oracle),
            f6(self.mean_tv),
            f6(self.mean_ntv),
            f6(s.std),
            f6(s.min),
            f6(s.q1),
            f6(s.median),
            f6(s.q3),
            f6(s.max),
        ]
    }

    /// The row as a JSON object: means, statistics and box-plot data.
    pub fn to_json(&self) -> serde_json::Value {
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        let pairs = |v: &[(u64, T)]| {
            v.iter()
                .map(|&(id, x)| TrialValue {
                    trial_id: id,
                    value: f(x),
                })
                .collect()
        };
        let s = &self.stats;
        serde_json::to_value(SummaryRecord {
            task_id: self.task_id.clone(),
            trials: self.trial_count,
            q: f(self.mean_q),
            sq: f(self.mean_sq),
            seq: f(self.mean_seq),
            seq_oracle: f(self.mean_seq_oracle),
            tv: f(self.mean_tv),
            ntv: f(self.mean_ntv),
            std_q: f(s.std),
            min_q: f(s.min),
            q1: f(s.q1),
            median: f(s.median),
            q3: f(s.q3),
            max_q: f(s.max),
            values: pairs(&self.values),
            outliers: pairs(&s.outliers),
        })
        .expect("summary serializes")
    }

    /// Box-plot data for external plotting tools.
    pub fn box_plot_json(&self) -> serde_json::Value {
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        serde_json::to_value(BoxPlot {
            task_id: self.task_id.clone(),
            values: self.values.iter().map(|&(_, v)| f(v)).collect(),
            q1: f(self.stats.q1),
            median: f(self.stats.median),
            q3: f(self.stats.q3),
            outliers: self.stats.outliers.iter().map(|&(_, v)| f(v)).collect(),
        })
        .expect("box plot serializes")
    }
}

#[derive(Serialize)]
struct TrialValue {
    trial_id: u64,
    #[serde(serialize_with = "crate::report::fixed6")]
    value: f64,
}

#[derive(Serialize)]
struct SummaryRecord {
    task_id: String,
    trials: usize,
    #[serde(serialize_with = "crate::report::fixed6")]
    q: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    sq: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    seq: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    seq_oracle: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    tv: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    ntv: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    std_q: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    min_q: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    q1: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    median: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    q3: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    max_q: f64,
    values: Vec<TrialValue>,
    outliers: Vec<TrialValue>,
}

#[derive(Serialize)]
struct BoxPlot {
    task_id: String,
    #[serde(serialize_with = "crate::report::fixed6_seq")]
    values: Vec<f64>,
    #[serde(serialize_with = "crate::report::fixed6")]
    q1: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    median: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    q3: f64,
    #[serde(serialize_with = "crate::report::fixed6_seq")]
    outliers: Vec<f64>,
}

/// Writes the aggregate CSV: header, one line per row, in the given order.
pub fn write_aggregate_csv<T: Scalar, W: Write>(
    rows: &[TaskSummary<T>],
    out: W,
) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an aggregate CSV back, skipping the `Average` row. Per-trial values
/// and outliers are not recoverable and come back empty.
pub fn read_aggregate_csv<T: Scalar, R: Read>(
    input: R,
) -> Result<Vec<TaskSummary<T>>, AnalysisError> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr.headers()?.iter().ne(AGGREGATE_HEADER) {
        return Err(AnalysisError::BadHeader);
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line());
        if &rec[0] == AVERAGE_ROW {
            continue;
        }
        let bad = |message: String| AnalysisError::MalformedRow { row, message };
        let num = |i: usize| -> Result<T, AnalysisError> {
            T::from_str(&rec[i])
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("`{}` is not a number", &rec[i])))
        };
        let trial_count = rec[1]
            .parse::<usize>()
            .map_err(|e| bad(format!("trials: {e}")))?;
        let (q1, q3) = (num(10)?, num(12)?);
        rows.push(TaskSummary {
            task_id: rec[0].to_string(),
            trial_count,
            mean_q: num(2)?,
            mean_sq: num(3)?,
            mean_seq: num(4)?,
            mean_seq_oracle: num(5)?,
            mean_tv: num(6)?,
            mean_ntv: num(7)?,
            stats: ConsistencyStats {
                mean: num(2)?,
                std: num(8)?,
                min: num(9)?,
                max: num(13)?,
                q1,
                median: num(11)?,
                q3,
                iqr: q3 - q1,
                outliers: Vec::new(),
            },
            values: Vec::new(),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffRow<T> {
    pub task_id: String,
    pub q_a: T,
    pub q_b: T,
    pub gap: T,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DiffReport<T> {
    /// Common tasks, largest gap first.
    pub rows: Vec<DiffRow<T>>,
    pub only_a: Vec<String>,
    pub only_b: Vec<String>,
}

impl<T: Scalar> DiffReport<T> {
    pub fn flagged(&self) -> impl Iterator<Item = &DiffRow<T>> {
        self.rows.iter().filter(|r| r.flagged)
    }

    /// Writes the diff CSV. Tasks present in one run only follow the common
    /// tasks with the missing side and the gap left empty and `flagged` set
    /// to `only_a` or `only_b`.
    pub fn write_csv<W: Write>(&self, out: W, a: &[TaskSummary<T>], b: &[TaskSummary<T>]) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(DIFF_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.task_id.as_str(),
                &f6(r.q_a),
                &f6(r.q_b),
                &f6(r.gap),
                if r.flagged { "true" } else { "false" },
            ])?;
        }
        let q_of = |rows: &[TaskSummary<T>], id: &str| {
            rows.iter()
                .find(|r| r.task_id == id)
                .map(|r| f6(r.mean_q))
                .unwrap_or_default()
        };
        for id in &self.only_a {
            w.write_record([id.as_str(), &q_of(a, id), "", "", "only_a"])?;
        }
        for id in &self.only_b {
            w.write_record([id.as_str(), "", &q_of(b, id), "", "only_b"])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Compares mean Q per task between two runs. A task is flagged when its gap
/// exceeds `gap_threshold` strictly.
pub fn diff_runs<T: Scalar>(
    a: &[TaskSummary<T>],
    b: &[TaskSummary<T>],
    gap_threshold: T,
) -> DiffReport<T> {
    let index = |rows: &[TaskSummary<T>]| -> BTreeMap<String, T> {
        rows.iter()
            .filter(|r| r.task_id != AVERAGE_ROW)
            .map(|r| (r.task_id.clone(), r.mean_q))
            .collect()
    };
    let (ia, ib) = (index(a), index(b));
    let mut rows: Vec<DiffRow<T>> = ia
        .iter()
        .filter_map(|(id, &q_a)| {
            ib.get(id).map(|&q_b| {
                let gap = (q_a - q_b).abs();
                DiffRow {
                    task_id: id.clone(),
                    q_a,
                    q_b,
                    gap,
                    flagged: exceeds(gap, gap_threshold),
                }
            })
        })
        .collect();
    rows.sort_by(|x, y| by_value(&y.gap, &x.gap).then_with(|| x.task_id.cmp(&y.task_id)));
    DiffReport {
        rows,
        only_a: ia.keys().filter(|k| !ib.contains_key(*k)).cloned().collect(),
        only_b: ib.keys().filter(|k| !ia.contains_key(*k)).cloned().collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCategory {
    TaskConfusion,
    AbruptTermination,
    SemanticConfusion,
    NavigationFailure,
    ImproperObjectHandling,
    SkillFailure,
    Collision,
    ExecutionOrderConfusion,
    PlacementFailure,
    GraspFailure,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 10] = [
        FailureCategory::TaskConfusion,
        FailureCategory::AbruptTermination,
        FailureCategory::SemanticConfusion,
        FailureCategory::NavigationFailure,
        FailureCategory::ImproperObjectHandling,
        FailureCategory::SkillFailure,
        FailureCategory::Collision,
        FailureCategory::ExecutionOrderConfusion,
        FailureCategory::PlacementFailure,
        FailureCategory::GraspFailure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureCategory::TaskConfusion => "task_confusion",
            FailureCategory::AbruptTermination => "abrupt_termination",
            FailureCategory::SemanticConfusion => "semantic_confusion",
            FailureCategory::NavigationFailure => "navigation_failure",
            FailureCategory::ImproperObjectHandling => "improper_object_handling",
            FailureCategory::SkillFailure => "skill_failure",
            FailureCategory::Collision => "collision",
            FailureCategory::ExecutionOrderConfusion => "execution_order_confusion",
            FailureCategory::PlacementFailure => "placement_failure",
            FailureCategory::GraspFailure => "grasp_failure",
        }
    }
}

impl fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FailureCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct FailureAnnotation {
    pub task_id: String,
    pub trial_id: u64,
    pub category: FailureCategory,
    pub note: String,
}

#[derive(Deserialize)]
struct AnnotationRow {
    task_id: String,
    trial_id: u64,
    category: String,
    #[serde(default)]
    note: String,
}

/// Reads `task_id,trial_id,category,note` rows. Row numbers in errors are
/// file line numbers, the header being line 1.
pub fn read_annotations<R: Read>(input: R) -> Result<Vec<FailureAnnotation>, AnalysisError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line());
        let r: AnnotationRow = rec.deserialize(None).map_err(|e| AnalysisError::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let category = r
            .category
            .parse()
            .map_err(|value| AnalysisError::UnknownCategory { row, value })?;
        let a = FailureAnnotation {
            task_id: r.task_id,
            trial_id: r.trial_id,
            category,
            note: r.note,
        };
        if !seen.insert(a.clone()) {
            return Err(AnalysisError::DuplicateAnnotation { row });
        }
        out.push(a);
    }
    Ok(out)
}

/// Occurrence counts per failure category, every category present.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FailureTally {
    /// Distinct tasks with at least one annotation of the category.
    pub per_task: BTreeMap<FailureCategory, usize>,
    /// Distinct `(task, trial)` pairs with at least one annotation of the category.
    pub total: BTreeMap<FailureCategory, usize>,
}

pub fn failure_tally(annotations: &[FailureAnnotation]) -> FailureTally {
    let tasks: BTreeSet<(FailureCategory, &str)> = annotations
        .iter()
        .map(|a| (a.category, a.task_id.as_str()))
        .collect();
    let trials: BTreeSet<(FailureCategory, &str, u64)> = annotations
        .iter()
        .map(|a| (a.category, a.task_id.as_str(), a.trial_id))
        .collect();
    let count = |c: FailureCategory, keys: &mut dyn Iterator<Item = FailureCategory>| {
        (c, keys.filter(|&k| k == c).count())
    };
    FailureTally {
        per_task: FailureCategory::ALL
            .into_iter()
            .map(|c| count(c, &mut tasks.iter().map(|k| k.0)))
            .collect(),
        total: FailureCategory::ALL
            .into_iter()
            .map(|c| count(c, &mut trials.iter().map(|k| k.0)))
            .collect(),
    }
}
