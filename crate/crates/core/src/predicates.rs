//! Goal predicate evaluation on a single frame.

use thiserror::Error;

use crate::geometry::{interval_overlap, OrientedBox};
use crate::scalar::Scalar;
use crate::taskspec::{GoalPredicate, PredicateKind, TaskSpec};
use crate::thresholds::Thresholds;
use crate::trajlog::Frame;

/// Satisfaction of each goal at the final frame, aligned with `TaskSpec::goals`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct GoalVector(pub Vec<bool>);

impl GoalVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn satisfied(&self) -> usize {
        self.0.iter().filter(|&&g| g).count()
    }
}

impl From<Vec<bool>> for GoalVector {
    fn from(v: Vec<bool>) -> Self {
        GoalVector(v)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredicateError {
    #[error("object `{0}` is not declared in the task spec")]
    UndeclaredObject(String),
    #[error("frame has no state for `{0}`")]
    MissingObjectState(String),
    #[error("object `{object}` has no `{flag}` channel")]
    MissingFlag { object: String, flag: String },
    #[error("object `{0}` has no joint fraction")]
    MissingJointFraction(String),
    #[error("goal {index}: {source}")]
    Goal {
        index: usize,
        #[source]
        source: Box<PredicateError>,
    },
}

fn world_box<T: Scalar>(
    id: &str,
    frame: &Frame<T>,
    spec: &TaskSpec<T>,
) -> Result<OrientedBox<T>, PredicateError> {
    let obj = spec
        .object(id)
        .ok_or_else(|| PredicateError::UndeclaredObject(id.to_string()))?;
    let state = frame
        .states
        .get(id)
        .ok_or_else(|| PredicateError::MissingObjectState(id.to_string()))?;
    Ok(OrientedBox::new(state.position, state.orientation, obj.extents))
}

fn flag<T: Scalar>(frame: &Frame<T>, object: &str, name: &str) -> Result<bool, PredicateError> {
    let state = frame
        .states
        .get(object)
        .ok_or_else(|| PredicateError::MissingObjectState(object.to_string()))?;
    state
        .flags
        .get(name)
        .copied()
        .ok_or_else(|| PredicateError::MissingFlag {
            object: object.to_string(),
            flag: name.to_string(),
        })
}

fn joint_fraction<T: Scalar>(frame: &Frame<T>, object: &str) -> Result<T, PredicateError> {
    let state = frame
        .states
        .get(object)
        .ok_or_else(|| PredicateError::MissingObjectState(object.to_string()))?;
    state
        .joint_fraction
        .ok_or_else(|| PredicateError::MissingJointFraction(object.to_string()))
}

/// `a`'s center lies in `b`'s oriented box and enough of `a` overlaps it.
pub fn inside<T: Scalar>(a: &OrientedBox<T>, b: &OrientedBox<T>, th: &Thresholds<T>) -> bool {
    b.contains_point(a.center) && b.overlap_fraction_of(a) >= th.inside_overlap
}

/// `a` rests on `b`: faces within the gap tolerance and footprints overlapping.
/// Contact corroboration is handled by the caller.
pub fn ontop<T: Scalar>(a: &OrientedBox<T>, b: &OrientedBox<T>, th: &Thresholds<T>) -> bool {
    let ha = a.world_aabb_half();
    let hb = b.world_aabb_half();
    let gap = (a.center.z - ha.z) - (b.center.z + hb.z);
    if gap.abs() > th.ontop_gap_m {
        return false;
    }
    let ox = interval_overlap(
        a.center.x - ha.x,
        a.center.x + ha.x,
        b.center.x - hb.x,
        b.center.x + hb.x,
    );
    let oy = interval_overlap(
        a.center.y - ha.y,
        a.center.y + ha.y,
        b.center.y - hb.y,
        b.center.y + hb.y,
    );
    let footprint = (ha.x + ha.x) * (ha.y + ha.y);
    ox * oy >= th.ontop_footprint * footprint
}

pub fn nextto<T: Scalar>(a: &OrientedBox<T>, b: &OrientedBox<T>, th: &Thresholds<T>) -> bool {
    let ha = a.world_aabb_half();
    let hb = b.world_aabb_half();
    let reach = (ha.x.max(ha.y) + hb.x.max(hb.y)) * th.nextto_scale;
    a.center.horizontal_distance(b.center) <= th.nextto_min_m.max(reach)
}

/// Evaluates one goal predicate on `frame`.
pub fn eval_predicate<T: Scalar>(
    pred: &GoalPredicate,
    frame: &Frame<T>,
    spec: &TaskSpec<T>,
    th: &Thresholds<T>,
) -> Result<bool, PredicateError> {
    let subject = pred.subject.as_str();
    let relation = || -> Result<(OrientedBox<T>, OrientedBox<T>, &str), PredicateError> {
        let reference = pred.reference.as_deref().unwrap_or_default();
        Ok((
            world_box(subject, frame, spec)?,
            world_box(reference, frame, spec)?,
            reference,
        ))
    };
    Ok(match pred.kind {
        PredicateKind::Inside => {
            let (a, b, _) = relation()?;
            inside(&a, &b, th)
        }
        PredicateKind::OnTop => {
            let (a, b, reference) = relation()?;
            let corroborated = frame.contacts.is_empty() || frame.has_contact(subject, reference);
            corroborated && ontop(&a, &b, th)
        }
        PredicateKind::NextTo => {
            let (a, b, _) = relation()?;
            nextto(&a, &b, th)
        }
        PredicateKind::Open => joint_fraction(frame, subject)? >= th.open_jf,
        PredicateKind::Closed => joint_fraction(frame, subject)? <= th.closed_jf,
        PredicateKind::ToggledOn => flag(frame, subject, "toggled_on")?,
        PredicateKind::StateFlag => {
            flag(frame, subject, pred.flag_name.as_deref().unwrap_or_default())?
        }
    })
}

/// Evaluates every goal of `spec` on `frame`.
pub fn eval_goals<T: Scalar>(
    spec: &TaskSpec<T>,
    frame: &Frame<T>,
    th: &Thresholds<T>,
) -> Result<GoalVector, PredicateError> {
    spec.goals
        .iter()
        .enumerate()
        .map(|(index, g)| {
            eval_predicate(g, frame, spec, th).map_err(|e| PredicateError::Goal {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map(GoalVector)
}
