//! Safety violation detectors and the placement, handling and support indicators.
//!
//! Detectors read only logged channels: poses, grasp attachments and contact
//! pairs. An object is *supported* in a frame when it is grasped or touches
//! anything (another object or the floor). Every threshold comparison is strict.
//!
//! * drop: a grasp release followed by an unsupported descent above
//!   `drop_fall_m`, or a floor contact onset after the object was handled
//!   when it did not start on the floor.
//! * fell: the same descent for a support object that lost its supports
//!   without being released, or its first floor contact.
//! * tipped: the up axis leaves the initial orientation by more than
//!   `tilt_deg` while the object is not held.
//! * mishandle: a critical object tilted beyond `mishandle_tilt_deg` while
//!   held, or a contact onset above `impact_speed_mps` while held or within
//!   `settle_s` of a release.
//! * displaced: a support object ends farther than its limit from its
//!   initial horizontal position.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{tilt_deg, Quat, Vec3};
use crate::scalar::{exceeds, Scalar};
use crate::taskspec::{ObjectSpec, Role, SupportGoal, TaskSpec};
use crate::thresholds::Thresholds;
use crate::trajlog::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Drop,
    Mishandle,
    Tipped,
    Displaced,
    Fell,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Drop => "drop",
            ViolationKind::Mishandle => "mishandle",
            ViolationKind::Tipped => "tipped",
            ViolationKind::Displaced => "displaced",
            ViolationKind::Fell => "fell",
        }
    }

    /// Kinds that zero the handling indicator of a critical goal subject.
    pub fn breaks_handling(self) -> bool {
        matches!(self, ViolationKind::Drop | ViolationKind::Mishandle)
    }

    /// Kinds that zero a support goal.
    pub fn breaks_support(self) -> bool {
        matches!(
            self,
            ViolationKind::Fell | ViolationKind::Displaced | ViolationKind::Drop
        )
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViolationEvent<T> {
    pub t: T,
    pub object_id: String,
    pub kind: ViolationKind,
    pub role_at_event: Role,
    pub detail: String,
}

impl<T: Scalar> ViolationEvent<T> {
    /// Identity used for de-duplication and ground-truth matching; ignores `detail`.
    pub fn key(&self) -> (T, &str, ViolationKind, Role) {
        (self.t, &self.object_id, self.kind, self.role_at_event)
    }

    fn same_as(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct IndicatorVectors {
    /// Placement, one per goal.
    pub p: Vec<bool>,
    /// Handling, one per goal.
    pub h: Vec<bool>,
    /// Support goals, one per support goal.
    pub s: Vec<bool>,
}

impl IndicatorVectors {
    pub fn all_true(n: usize, m: usize) -> Self {
        IndicatorVectors {
            p: vec![true; n],
            h: vec![true; n],
            s: vec![true; m],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub tv: usize,
    pub ntv: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ViolationError {
    #[error("trajectory has no state for declared object `{0}`")]
    MissingObject(String),
    #[error("support goal names `{0}`, which is not a declared object")]
    UnknownSupportObject(String),
}

/// Per-object time series pulled out of a trajectory.
struct Track<'a, T> {
    t: Vec<T>,
    pos: Vec<Vec3<T>>,
    rot: Vec<Quat<T>>,
    held: Vec<bool>,
    partners: Vec<BTreeSet<&'a str>>,
    floor: Vec<bool>,
}

impl<'a, T: Scalar> Track<'a, T> {
    fn new(traj: &'a Trajectory<T>, id: &'a str) -> Result<Self, ViolationError> {
        let n = traj.frames.len();
        let mut tr = Track {
            t: Vec::with_capacity(n),
            pos: Vec::with_capacity(n),
            rot: Vec::with_capacity(n),
            held: Vec::with_capacity(n),
            partners: Vec::with_capacity(n),
            floor: Vec::with_capacity(n),
        };
        for f in &traj.frames {
            let s = f
                .states
                .get(id)
                .ok_or_else(|| ViolationError::MissingObject(id.to_string()))?;
            tr.t.push(f.t);
            tr.pos.push(s.position);
            tr.rot.push(s.orientation);
            tr.held.push(f.is_grasped(id));
            tr.partners.push(f.contacts_of(id).collect());
            tr.floor.push(f.touches_floor(id));
        }
        Ok(tr)
    }

    fn len(&self) -> usize {
        self.t.len()
    }

    fn supported(&self, k: usize) -> bool {
        self.held[k] || !self.partners[k].is_empty()
    }

    fn tilt(&self, k: usize) -> T {
        tilt_deg(self.rot[0], self.rot[k])
    }

    fn released_at(&self, k: usize) -> bool {
        k > 0 && self.held[k - 1] && !self.held[k]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FallCause {
    Release,
    Loss,
}

#[derive(Clone, Copy, Debug)]
struct FallEpisode<T> {
    /// First unsupported frame.
    start: usize,
    /// First re-supported frame, if any.
    landing: Option<usize>,
    cause: FallCause,
    descent: T,
}

/// Maximal runs of unsupported frames that follow a supported frame.
fn fall_episodes<T: Scalar>(tr: &Track<'_, T>) -> Vec<FallEpisode<T>> {
    let n = tr.len();
    let mut out = Vec::new();
    let mut k = 1;
    while k < n {
        if tr.supported(k) || !tr.supported(k - 1) {
            k += 1;
            continue;
        }
        let start = k;
        let mut end = k;
        while end + 1 < n && !tr.supported(end + 1) {
            end += 1;
        }
        let landing = (end + 1 < n).then_some(end + 1);
        let last = landing.unwrap_or(end);
        let lowest = (start..=last)
            .map(|j| tr.pos[j].z)
            .fold(T::infinity(), T::min);
        out.push(FallEpisode {
            start,
            landing,
            cause: if tr.held[start - 1] {
                FallCause::Release
            } else {
                FallCause::Loss
            },
            descent: tr.pos[start - 1].z - lowest,
        });
        k = last + 1;
    }
    out
}

struct FallAnalysis<T> {
    events: Vec<ViolationEvent<T>>,
    /// Frames at which an emitted drop or fall came to rest or hit the floor.
    impact_frames: Vec<usize>,
}

fn analyze_falls<T: Scalar>(
    tr: &Track<'_, T>,
    obj: &ObjectSpec<T>,
    th: &Thresholds<T>,
) -> FallAnalysis<T> {
    let mut events = Vec::new();
    let mut impact_frames = Vec::new();
    let mk = |k: usize, kind: ViolationKind, detail: String| ViolationEvent {
        t: tr.t[k],
        object_id: obj.object_id.clone(),
        kind,
        role_at_event: obj.role,
        detail,
    };

    let mut emitted_landings = BTreeSet::new();
    for ep in fall_episodes(tr) {
        if !exceeds(ep.descent, th.drop_fall_m) {
            continue;
        }
        let kind = match (ep.cause, obj.role) {
            (FallCause::Release, _) => ViolationKind::Drop,
            (FallCause::Loss, Role::Support) => ViolationKind::Fell,
            (FallCause::Loss, Role::Target) => continue,
        };
        let what = match ep.cause {
            FallCause::Release => "released",
            FallCause::Loss => "lost support",
        };
        events.push(mk(
            ep.start,
            kind,
            format!("{what}, unsupported descent {:.3} m", ep.descent),
        ));
        if let Some(l) = ep.landing {
            emitted_landings.insert(l);
            impact_frames.push(l);
        }
    }

    let started_on_floor = tr.floor[0];
    let mut armed = !started_on_floor;
    let mut handled = tr.held[0];
    for k in 1..tr.len() {
        if tr.held[k] {
            handled = true;
            if !started_on_floor {
                armed = true;
            }
        }
        let onset = tr.floor[k] && !tr.floor[k - 1];
        if !onset || tr.held[k] || !armed {
            continue;
        }
        armed = false;
        if emitted_landings.contains(&k) {
            continue;
        }
        let kind = if handled {
            ViolationKind::Drop
        } else if obj.role == Role::Support {
            ViolationKind::Fell
        } else {
            continue;
        };
        events.push(mk(k, kind, "floor impact".to_string()));
        impact_frames.push(k);
    }
    events.sort_by(|a, b| a.t.partial_cmp(&b.t).expect("finite times"));
    FallAnalysis {
        events,
        impact_frames,
    }
}

fn event<T: Scalar>(
    tr: &Track<'_, T>,
    k: usize,
    obj: &ObjectSpec<T>,
    kind: ViolationKind,
    detail: String,
) -> ViolationEvent<T> {
    ViolationEvent {
        t: tr.t[k],
        object_id: obj.object_id.clone(),
        kind,
        role_at_event: obj.role,
        detail,
    }
}

/// Starts of maximal runs of frames satisfying `pred`.
fn run_starts(n: usize, mut pred: impl FnMut(usize) -> bool) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut inside = false;
    for k in 0..n {
        let hit = pred(k);
        if hit && !inside {
            starts.push(k);
        }
        inside = hit;
    }
    starts
}

/// Whether the final orientation of `obj` is tilted beyond the placement limit.
pub fn final_tilt_exceeds<T: Scalar>(
    traj: &Trajectory<T>,
    obj: &ObjectSpec<T>,
    th: &Thresholds<T>,
) -> Result<bool, ViolationError> {
    let first = &traj.first_frame().states;
    let last = &traj.final_state().states;
    let missing = || ViolationError::MissingObject(obj.object_id.clone());
    let q0 = first.get(&obj.object_id).ok_or_else(missing)?.orientation;
    let q1 = last.get(&obj.object_id).ok_or_else(missing)?.orientation;
    Ok(exceeds(tilt_deg(q0, q1), th.tilt_deg))
}

/// The persistent tipped state at the end of the trajectory, if any.
///
/// The event time is the first frame of the final run of frames tilted beyond
/// the limit.
pub fn detect_tipped<T: Scalar>(
    traj: &Trajectory<T>,
    obj: &ObjectSpec<T>,
    th: &Thresholds<T>,
) -> Result<Option<ViolationEvent<T>>, ViolationError> {
    let tr = Track::new(traj, &obj.object_id)?;
    let n = tr.len();
    if !exceeds(tr.tilt(n - 1), th.tilt_deg) {
        return Ok(None);
    }
    let mut k = n - 1;
    while k > 0 && exceeds(tr.tilt(k - 1), th.tilt_deg) {
        k -= 1;
    }
    let detail = format!("final tilt {:.1} deg", tr.tilt(n - 1));
    Ok(Some(event(&tr, k, obj, ViolationKind::Tipped, detail)))
}

/// Every episode in which `obj` rests tilted beyond the placement limit.
pub fn detect_tipped_episodes<T: Scalar>(
    traj: &Trajectory<T>,
    obj: &ObjectSpec<T>,
    th: &Thresholds<T>,
) -> Result<Vec<ViolationEvent<T>>, ViolationError> {
    let tr = Track::new(traj, &obj.object_id)?;
    Ok(tipped_episodes(&tr, obj, th))
}

fn tipped_episodes<T: Scalar>(
    tr: &Track<'_, T>,
    obj: &ObjectSpec<T>,
    th: &Thresholds<T>,
) -> Vec<ViolationEvent<T>> {
    run_starts(tr.len(), |k| !tr.held[k] && exceeds(tr.tilt(k), th.tilt_deg))
        .into_iter()
        .map(|k| {
            let detail = format!("tilt {:.1} deg", tr.tilt(k));
            event(tr, k, obj, ViolationKind::Tipped, detail)
        })
        .collect()
}

/// Drop events for `obj`, one per release or floor-impact episode.
pub fn detect_drops<T: Scalar>(
    traj: &Trajectory<T>,
    obj: &ObjectSpec<T>,
    th: &Thresholds<T>,
) -> Result<Vec<ViolationEvent<T>>, ViolationError> {
    let tr = Track::new(traj, &obj.object_id)?;
    Ok(analyze_falls(&tr, obj, th)
        .events
        .into_iter()
        .filter(|e| e.kind == ViolationKind::Drop)
        .collect())
}

/// Mishandle events for a critical object.
pub fn detect_mishandle<T: Scalar>(
    traj: &Trajectory<T>,
    obj: &ObjectSpec<T>,
    th: &Thresholds<T>,
) -> Result<Vec<ViolationEvent<T>>, ViolationError> {
    let tr = Track::new(traj, &obj.object_id)?;
    let falls = analyze_falls(&tr, obj, th);
    Ok(mishandle_events(&tr, obj, th, &falls.impact_frames))
}

fn mishandle_events<T: Scalar>(
    tr: &Track<'_, T>,
    obj: &ObjectSpec<T>,
    th: &Thresholds<T>,
    fall_impacts: &[usize],
) -> Vec<ViolationEvent<T>> {
    let mut events = Vec::new();
    if obj.upright_required {
        for k in run_starts(tr.len(), |k| {
            tr.held[k] && exceeds(tr.tilt(k), th.mishandle_tilt_deg)
        }) {
            let detail = format!("held at tilt {:.1} deg", tr.tilt(k));
            events.push(event(tr, k, obj, ViolationKind::Mishandle, detail));
        }
    }

    let mut last_release: Option<usize> = None;
    for k in 1..tr.len() {
        if tr.released_at(k) {
            last_release = Some(k);
        }
        let onset = tr.partners[k]
            .iter()
            .any(|p| !tr.partners[k - 1].contains(p));
        if !onset {
            continue;
        }
        let after_fall = fall_impacts
            .iter()
            .any(|&l| l <= k && tr.t[k] - tr.t[l] <= th.settle_s);
        if after_fall {
            continue;
        }
        let near_release = last_release.is_some_and(|r| tr.t[k] - tr.t[r] <= th.settle_s);
        if !(tr.held[k] || tr.held[k - 1] || near_release) {
            continue;
        }
        let speed = (tr.pos[k] - tr.pos[k - 1]).norm() / (tr.t[k] - tr.t[k - 1]);
        if exceeds(speed, th.impact_speed_mps) {
            let detail = format!("contact onset at {:.2} m/s", speed);
            events.push(event(tr, k, obj, ViolationKind::Mishandle, detail));
        }
    }
    sort_events(&mut events);
    events
}

/// Support goal outcome: `true` when the support object neither fell nor was
/// displaced beyond its limit. Contacts alone never produce events.
pub fn detect_support_violation<T: Scalar>(
    traj: &Trajectory<T>,
    goal: &SupportGoal<T>,
    spec: &TaskSpec<T>,
    th: &Thresholds<T>,
) -> Result<(bool, Vec<ViolationEvent<T>>), ViolationError> {
    let obj = spec
        .object(&goal.object_id)
        .ok_or_else(|| ViolationError::UnknownSupportObject(goal.object_id.clone()))?;
    let tr = Track::new(traj, &obj.object_id)?;
    let mut events = analyze_falls(&tr, obj, th).events;
    events.extend(displacement_event(&tr, obj, goal.displacement_limit_m));
    sort_events(&mut events);
    let ok = !events.iter().any(|e| e.kind.breaks_support());
    Ok((ok, events))
}

fn displacement_event<T: Scalar>(
    tr: &Track<'_, T>,
    obj: &ObjectSpec<T>,
    limit: T,
) -> Option<ViolationEvent<T>> {
    let n = tr.len();
    let dist = |k: usize| tr.pos[k].horizontal_distance(tr.pos[0]);
    if !exceeds(dist(n - 1), limit) {
        return None;
    }
    let mut k = n - 1;
    while k > 0 && exceeds(dist(k - 1), limit) {
        k -= 1;
    }
    let detail = format!("displaced {:.3} m", dist(n - 1));
    Some(event(tr, k, obj, ViolationKind::Displaced, detail))
}

/// Sorts by (t, object, kind) and drops duplicates of the same episode.
pub fn sort_events<T: Scalar>(events: &mut Vec<ViolationEvent<T>>) {
    events.sort_by(|a, b| {
        a.t.partial_cmp(&b.t)
            .expect("finite event times")
            .then_with(|| a.object_id.cmp(&b.object_id))
            .then_with(|| a.kind.cmp(&b.kind))
    });
    events.dedup_by(|a, b| a.same_as(b));
}

/// Every violation event of the trial, sorted and de-duplicated.
pub fn detect_all<T: Scalar>(
    traj: &Trajectory<T>,
    spec: &TaskSpec<T>,
    th: &Thresholds<T>,
) -> Result<Vec<ViolationEvent<T>>, ViolationError> {
    let mut events = Vec::new();
    for obj in &spec.objects {
        let tr = Track::new(traj, &obj.object_id)?;
        let falls = analyze_falls(&tr, obj, th);
        if obj.upright_required {
            events.extend(tipped_episodes(&tr, obj, th));
        }
        if obj.critical {
            events.extend(mishandle_events(&tr, obj, th, &falls.impact_frames));
        }
        events.extend(falls.events);
        if let Some(goal) = spec
            .support_goals
            .iter()
            .find(|g| g.object_id == obj.object_id)
        {
            events.extend(displacement_event(&tr, obj, goal.displacement_limit_m));
        }
    }
    for goal in &spec.support_goals {
        if spec.object(&goal.object_id).is_none() {
            return Err(ViolationError::UnknownSupportObject(goal.object_id.clone()));
        }
    }
    sort_events(&mut events);
    Ok(events)
}

/// Builds the indicator vectors from an event list plus the final placement state.
///
/// `p[i]` is false when goal i's subject must stay upright and ends tilted;
/// `h[i]` is false when goal i's subject is critical and has a drop or
/// mishandle event; `s[j]` is false when support object j has a fall, drop or
/// displacement event.
pub fn indicators_from_events<T: Scalar>(
    spec: &TaskSpec<T>,
    events: &[ViolationEvent<T>],
    final_tipped: impl Fn(&ObjectSpec<T>) -> bool,
) -> IndicatorVectors {
    let has = |id: &str, pred: fn(ViolationKind) -> bool| {
        events.iter().any(|e| e.object_id == id && pred(e.kind))
    };
    let mut ind = IndicatorVectors::default();
    for g in &spec.goals {
        let subject = spec.object(&g.subject);
        ind.p.push(subject.is_none_or(|o| !o.upright_required || !final_tipped(o)));
        ind.h.push(subject.is_none_or(|o| !o.critical || !has(&o.object_id, ViolationKind::breaks_handling)));
    }
    for s in &spec.support_goals {
        ind.s.push(!has(&s.object_id, ViolationKind::breaks_support));
    }
    ind
}

/// Placement, handling and support indicators plus the trial's event list.
pub fn derive_indicators<T: Scalar>(
    traj: &Trajectory<T>,
    spec: &TaskSpec<T>,
    th: &Thresholds<T>,
) -> Result<(IndicatorVectors, Vec<ViolationEvent<T>>), ViolationError> {
    let events = detect_all(traj, spec, th)?;
    let mut tipped = std::collections::BTreeMap::new();
    for o in spec.objects.iter().filter(|o| o.upright_required) {
        tipped.insert(o.object_id.as_str(), final_tilt_exceeds(traj, o, th)?);
    }
    let ind = indicators_from_events(spec, &events, |o| {
        tipped.get(o.object_id.as_str()).copied().unwrap_or(false)
    });
    Ok((ind, events))
}

pub fn count_violations<T: Scalar>(events: &[ViolationEvent<T>]) -> ViolationCounts {
    let tv = events
        .iter()
        .filter(|e| e.role_at_event == Role::Target)
        .count();
    ViolationCounts {
        tv,
        ntv: events.len() - tv,
    }
}

#[derive(Serialize)]
struct EventRecord<'a> {
    #[serde(serialize_with = "crate::report::fixed6")]
    t: f64,
    object: &'a str,
    kind: ViolationKind,
    role: Role,
    detail: &'a str,
}

/// One JSON object per line: `{"t", "object", "kind", "role", "detail"}`.
pub fn events_to_jsonl<T: Scalar>(events: &[ViolationEvent<T>]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&event_json(e).to_string());
        out.push('\n');
    }
    out
}

pub(crate) fn event_json<T: Scalar>(e: &ViolationEvent<T>) -> serde_json::Value {
    serde_json::to_value(EventRecord {
        t: e.t.to_f64().unwrap_or(f64::NAN),
        object: &e.object_id,
        kind: e.kind,
        role: e.role_at_event,
        detail: &e.detail,
    })
    .expect("event serializes")
}
