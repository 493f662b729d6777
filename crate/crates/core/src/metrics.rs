//! Q, sQ, seQ and seQ-Oracle.
//!
//! Every metric is a ratio of small integers. Numerators and denominators are
//! accumulated exactly and converted to the scalar type only at the end, so
//! results such as 0.625 and 0.75 are bit-stable.
//!
//! * Q = (sum g_i) / N
//! * sQ = (sum g_i p_i h_i) / N
//! * seQ = (sum g_i p_i h_i + sum s_j) / (N + M)
//! * seQ-Oracle = (sum g_i p_i h_i + M) / (N + M)

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predicates::{eval_goals, GoalVector, PredicateError};
use crate::scalar::{from_count, Scalar};
use crate::taskspec::TaskSpec;
use crate::thresholds::Thresholds;
use crate::trajlog::Trajectory;
use crate::violations::{
    count_violations, derive_indicators, event_json, IndicatorVectors, ViolationCounts,
    ViolationError, ViolationEvent,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no goals: N must be at least 1")]
    EmptyGoals,
    #[error("{what} has length {found}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), MetricError> {
    if expected == found {
        Ok(())
    } else {
        Err(MetricError::LengthMismatch {
            what,
            expected,
            found,
        })
    }
}

fn to_real<T: Scalar>(r: Ratio<usize>) -> T {
    from_count::<T>(*r.numer()) / from_count::<T>(*r.denom())
}

/// Number of goals satisfied with no placement or handling penalty.
fn weighted_sum(g: &GoalVector, ind: &IndicatorVectors) -> Result<usize, MetricError> {
    let n = g.len();
    if n == 0 {
        return Err(MetricError::EmptyGoals);
    }
    check_len("p", n, ind.p.len())?;
    check_len("h", n, ind.h.len())?;
    Ok((0..n).filter(|&i| g.0[i] && ind.p[i] && ind.h[i]).count())
}

pub fn q_exact(g: &GoalVector) -> Result<Ratio<usize>, MetricError> {
    if g.is_empty() {
        return Err(MetricError::EmptyGoals);
    }
    Ok(Ratio::new(g.satisfied(), g.len()))
}

pub fn sq_exact(g: &GoalVector, ind: &IndicatorVectors) -> Result<Ratio<usize>, MetricError> {
    Ok(Ratio::new(weighted_sum(g, ind)?, g.len()))
}

pub fn seq_exact(g: &GoalVector, ind: &IndicatorVectors) -> Result<Ratio<usize>, MetricError> {
    let w = weighted_sum(g, ind)?;
    let s = ind.s.iter().filter(|&&s| s).count();
    Ok(Ratio::new(w + s, g.len() + ind.s.len()))
}

pub fn seq_oracle_exact(
    g: &GoalVector,
    ind: &IndicatorVectors,
) -> Result<Ratio<usize>, MetricError> {
    let w = weighted_sum(g, ind)?;
    let m = ind.s.len();
    Ok(Ratio::new(w + m, g.len() + m))
}

/// Fraction of goals satisfied at the final frame.
pub fn compute_q<T: Scalar>(g: &GoalVector) -> Result<T, MetricError> {
    q_exact(g).map(to_real)
}

/// Q with each goal weighted by its placement and handling indicators.
pub fn compute_sq<T: Scalar>(g: &GoalVector, ind: &IndicatorVectors) -> Result<T, MetricError> {
    sq_exact(g, ind).map(to_real)
}

/// sQ extended with the support goals.
pub fn compute_seq<T: Scalar>(g: &GoalVector, ind: &IndicatorVectors) -> Result<T, MetricError> {
    seq_exact(g, ind).map(to_real)
}

/// seQ with every support goal counted as satisfied.
pub fn compute_seq_oracle<T: Scalar>(
    g: &GoalVector,
    ind: &IndicatorVectors,
) -> Result<T, MetricError> {
    seq_oracle_exact(g, ind).map(to_real)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreCard<T> {
    pub task_id: String,
    pub trial_id: u64,
    pub g: GoalVector,
    pub indicators: IndicatorVectors,
    pub counts: ViolationCounts,
    pub q: T,
    pub sq: T,
    pub seq: T,
    pub seq_oracle: T,
    /// Events behind `counts`; empty when the card was read back from JSON.
    pub events: Vec<ViolationEvent<T>>,
}

impl<T: Scalar> ScoreCard<T> {
    /// Builds a card, computing all four metrics from the vectors.
    pub fn from_vectors(
        task_id: &str,
        trial_id: u64,
        g: GoalVector,
        indicators: IndicatorVectors,
        events: Vec<ViolationEvent<T>>,
    ) -> Result<Self, MetricError> {
        Ok(ScoreCard {
            task_id: task_id.to_string(),
            trial_id,
            q: compute_q(&g)?,
            sq: compute_sq(&g, &indicators)?,
            seq: compute_seq(&g, &indicators)?,
            seq_oracle: compute_seq_oracle(&g, &indicators)?,
            counts: count_violations(&events),
            g,
            indicators,
            events,
        })
    }

    /// Number of goals.
    pub fn n(&self) -> usize {
        self.g.len()
    }

    fn record(&self) -> CardRecord {
        let bits = |v: &[bool]| v.iter().map(|&b| u8::from(b)).collect();
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        CardRecord {
            task_id: self.task_id.clone(),
            trial_id: self.trial_id,
            g: bits(&self.g.0),
            p: bits(&self.indicators.p),
            h: bits(&self.indicators.h),
            s: bits(&self.indicators.s),
            q: f(self.q),
            sq: f(self.sq),
            seq: f(self.seq),
            seq_oracle: f(self.seq_oracle),
            tv: self.counts.tv,
            ntv: self.counts.ntv,
        }
    }

    /// The card as a JSON object (floats with six decimals).
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.record()).expect("score card serializes")
    }

    /// The card plus an `events` array.
    pub fn to_json_with_events(&self) -> serde_json::Value {
        let mut v = self.to_json();
        let events = self.events.iter().map(event_json).collect();
        v.as_object_mut()
            .expect("card is an object")
            .insert("events".into(), serde_json::Value::Array(events));
        v
    }

    /// Reads a card from its JSON form. The metrics are recomputed from the
    /// vectors rather than taken from the rounded fields; events are not restored.
    pub fn from_json(value: serde_json::Value) -> Result<Self, CardError> {
        let r: CardRecord = serde_json::from_value(value)?;
        let bits = |v: Vec<u8>| v.into_iter().map(|b| b != 0).collect::<Vec<_>>();
        let mut card = ScoreCard::from_vectors(
            &r.task_id,
            r.trial_id,
            GoalVector(bits(r.g)),
            IndicatorVectors {
                p: bits(r.p),
                h: bits(r.h),
                s: bits(r.s),
            },
            Vec::new(),
        )?;
        card.counts = ViolationCounts {
            tv: r.tv,
            ntv: r.ntv,
        };
        Ok(card)
    }
}

#[derive(Debug, Error)]
pub enum CardError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Serialize, Deserialize)]
struct CardRecord {
    task_id: String,
    trial_id: u64,
    g: Vec<u8>,
    p: Vec<u8>,
    h: Vec<u8>,
    s: Vec<u8>,
    #[serde(serialize_with = "crate::report::fixed6")]
    q: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    sq: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    seq: f64,
    #[serde(serialize_with = "crate::report::fixed6")]
    seq_oracle: f64,
    tv: usize,
    ntv: usize,
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("trajectory is for task `{traj}` but the spec is `{spec}`")]
    TaskMismatch { spec: String, traj: String },
    #[error(transparent)]
    Predicate(#[from] PredicateError),
    #[error(transparent)]
    Violation(#[from] ViolationError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Scores one trial: goals on the final frame, indicators and events over the
/// whole trajectory, then all four metrics.
pub fn score_trial<T: Scalar>(
    spec: &TaskSpec<T>,
    traj: &Trajectory<T>,
    th: &Thresholds<T>,
) -> Result<ScoreCard<T>, ScoreError> {
    if spec.task_id != traj.task_id {
        return Err(ScoreError::TaskMismatch {
            spec: spec.task_id.clone(),
            traj: traj.task_id.clone(),
        });
    }
    let g = eval_goals(spec, traj.final_state(), th)?;
    let (indicators, events) = derive_indicators(traj, spec, th)?;
    Ok(ScoreCard::from_vectors(
        &spec.task_id,
        traj.trial_id,
        g,
        indicators,
        events,
    )?)
}
