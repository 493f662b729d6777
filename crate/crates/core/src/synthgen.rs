//! Scripted scenarios with known ground truth.
//!
//! Every scenario takes place in the same small world: a table resting on the
//! floor, a bin and a crate on the table, and `goals` items whose goal is to
//! end up inside the bin. Items with an even index are critical, items with an
//! index divisible by three must stay upright. The table and the crate carry
//! support goals with a 0.10 m limit.
//!
//! Motion is piecewise linear at a fixed frame period; free falls follow
//! `z = z0 - g t^2 / 2` from rest. Ground truth is derived from the script and
//! assumes default [`Thresholds`](crate::thresholds::Thresholds).
//!
//! Parameters (lengths are rounded to 1 mm, angles to 0.1 deg, speeds to
//! 0.01 m/s; absent parameters are drawn from the seed):
//!
//! | key | scripts | range |
//! |---|---|---|
//! | `goals` | all | 1 to 9 (4 to 9 for `multi_violation`) |
//! | `dt` | all | 0.01 to 0.1 s |
//! | `satisfied` | `partial_goals` | 0 to `goals` |
//! | `tilt_deg` | `tipped_placement`, `multi_violation` | 0 to 90 |
//! | `drop_m` | `dropped_critical`, `multi_violation` | 0.05 to 1.5 |
//! | `drops` | `dropped_critical` | 1 or 2 |
//! | `replace` | `dropped_critical` | 0 or 1 |
//! | `onto_floor` | `dropped_critical` | 0 or 1 |
//! | `critical` | `dropped_critical` | 0 or 1, default 1 |
//! | `displacement_m` | `displaced_support`, `multi_violation` | 0 to 0.5 |
//! | `impact_mps` | `hard_impact` | 0.1 to 3 |
//! | `invert` | `hard_impact` | 0 or 1 |
//! | `invert_deg` | `hard_impact` | 0 to 179.9 |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Quat, Vec3};
use crate::metrics::{MetricError, ScoreCard};
use crate::predicates::GoalVector;
use crate::taskspec::{GoalPredicate, ObjectSpec, PredicateKind, Role, SupportGoal, TaskSpec};
use crate::trajlog::{ContactPair, Frame, ObjectState, Trajectory, FLOOR};
use crate::violations::{sort_events, IndicatorVectors, ViolationEvent, ViolationKind};

pub const GRAVITY: f64 = 9.81;
pub const DEFAULT_DT: f64 = 0.1;

const GRIPPER: &str = "gripper";
const TABLE: &str = "table";
const BIN: &str = "bin";
const CRATE: &str = "crate";
const TABLE_TOP: f64 = 0.75;
const ITEM_HALF: [f64; 3] = [0.03, 0.03, 0.05];
const CRATE_HALF: f64 = 0.1;
const CARRY_Z: f64 = 1.0;
const LIFT_SPEED: f64 = 0.4;
const CARRY_SPEED: f64 = 0.6;
const SLIDE_SPEED: f64 = 0.2;
const SUPPORT_LIMIT: f64 = 0.10;
const TABLE_DROP_SPOT: [f64; 2] = [0.0, -0.1];
const FLOOR_DROP_SPOT: [f64; 2] = [0.0, -0.55];

// Default thresholds the ground truth is written against.
const TILT_LIMIT: f64 = 30.0;
const MISHANDLE_TILT: f64 = 60.0;
const FALL_LIMIT: f64 = 0.10;
const IMPACT_LIMIT: f64 = 1.0;
const SETTLE_S: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    CleanSuccess,
    PartialGoals,
    TippedPlacement,
    DroppedCritical,
    DisplacedSupport,
    FallenSupport,
    MultiViolation,
    HardImpact,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::CleanSuccess,
        ScenarioKind::PartialGoals,
        ScenarioKind::TippedPlacement,
        ScenarioKind::DroppedCritical,
        ScenarioKind::DisplacedSupport,
        ScenarioKind::FallenSupport,
        ScenarioKind::MultiViolation,
        ScenarioKind::HardImpact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::CleanSuccess => "clean_success",
            ScenarioKind::PartialGoals => "partial_goals",
            ScenarioKind::TippedPlacement => "tipped_placement",
            ScenarioKind::DroppedCritical => "dropped_critical",
            ScenarioKind::DisplacedSupport => "displaced_support",
            ScenarioKind::FallenSupport => "fallen_support",
            ScenarioKind::MultiViolation => "multi_violation",
            ScenarioKind::HardImpact => "hard_impact",
        }
    }

    fn params(self) -> &'static [&'static str] {
        match self {
            ScenarioKind::CleanSuccess
            | ScenarioKind::FallenSupport => &[],
            ScenarioKind::PartialGoals => &["satisfied"],
            ScenarioKind::TippedPlacement => &["tilt_deg"],
            ScenarioKind::DroppedCritical => &["drop_m", "drops", "replace", "onto_floor", "critical"],
            ScenarioKind::DisplacedSupport => &["displacement_m"],
            ScenarioKind::MultiViolation => &["tilt_deg", "drop_m", "displacement_m"],
            ScenarioKind::HardImpact => &["impact_mps", "invert", "invert_deg"],
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SynthError::InvalidParams(format!("unknown scenario `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioScript {
    pub name: ScenarioKind,
    pub seed: u64,
    pub params: BTreeMap<String, f64>,
}

impl ScenarioScript {
    pub fn new(name: ScenarioKind, seed: u64) -> Self {
        ScenarioScript {
            name,
            seed,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }
}

/// What the scorer must report for a generated trial.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// Expected card, events included and sorted.
    pub card: ScoreCard<f64>,
}

impl GroundTruth {
    pub fn events(&self) -> &[ViolationEvent<f64>] {
        &self.card.events
    }

    /// Score-card JSON plus an `events` array.
    pub fn to_json(&self) -> serde_json::Value {
        self.card.to_json_with_events()
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

struct Params<'a> {
    script: &'a ScenarioScript,
    rng: ChaCha8Rng,
}

impl Params<'_> {
    fn check_keys(&self) -> Result<(), SynthError> {
        let allowed = self.script.name.params();
        for k in self.script.params.keys() {
            if k != "goals" && k != "dt" && !allowed.contains(&k.as_str()) {
                return Err(SynthError::InvalidParams(format!(
                    "`{k}` does not apply to {}",
                    self.script.name
                )));
            }
        }
        Ok(())
    }

    /// Reads `key` within `[lo, hi]`, or uses the drawn default. The default is
    /// drawn either way so that supplying one parameter leaves the others unchanged.
    fn get(&mut self, key: &str, lo: f64, hi: f64, draw: impl FnOnce(&mut ChaCha8Rng) -> f64) -> Result<f64, SynthError> {
        let drawn = draw(&mut self.rng);
        match self.script.params.get(key) {
            None => Ok(drawn),
            Some(&v) if v.is_finite() && v >= lo && v <= hi => Ok(v),
            Some(&v) => Err(SynthError::InvalidParams(format!(
                "`{key}` = {v} outside [{lo}, {hi}]"
            ))),
        }
    }

    fn flag(&mut self, key: &str) -> Result<bool, SynthError> {
        let v = self.get(key, 0.0, 1.0, |r| f64::from(u8::from(r.gen_bool(0.5))))?;
        if v != 0.0 && v != 1.0 {
            return Err(SynthError::InvalidParams(format!("`{key}` must be 0 or 1")));
        }
        Ok(v == 1.0)
    }

    fn count(&mut self, key: &str, lo: u32, hi: u32, default: (u32, u32)) -> Result<usize, SynthError> {
        let v = self.get(key, f64::from(lo), f64::from(hi), |r| {
            f64::from(r.gen_range(default.0..=default.1))
        })?;
        if v.fract() != 0.0 {
            return Err(SynthError::InvalidParams(format!("`{key}` must be an integer")));
        }
        Ok(v as usize)
    }

    fn length(&mut self, key: &str, lo: f64, hi: f64, default: (u32, u32)) -> Result<f64, SynthError> {
        let v = self.get(key, lo, hi, |r| f64::from(r.gen_range(default.0..=default.1)) / 1000.0)?;
        Ok(round_to(v, 0.001))
    }

    fn angle(&mut self, key: &str, lo: f64, hi: f64, default: (u32, u32)) -> Result<f64, SynthError> {
        let v = self.get(key, lo, hi, |r| f64::from(r.gen_range(default.0..=default.1)) / 10.0)?;
        Ok(round_to(v, 0.1))
    }
}

fn item(i: usize) -> String {
    format!("item{i}")
}

fn is_critical(i: usize) -> bool {
    i.is_multiple_of(2)
}

fn is_upright(i: usize) -> bool {
    i.is_multiple_of(3)
}

fn slot(i: usize) -> [f64; 2] {
    [0.2 + 0.1 * (i % 3) as f64, -0.1 + 0.1 * (i / 3) as f64]
}

fn item_rest_z(surface: &str) -> f64 {
    if surface == FLOOR {
        ITEM_HALF[2]
    } else {
        TABLE_TOP + ITEM_HALF[2]
    }
}

fn about_x(deg: f64) -> Quat<f64> {
    Quat::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), deg.to_radians())
}

/// The task spec shared by every trial of `kind` with `n` goals.
pub fn scenario_spec(kind: ScenarioKind, n: usize) -> TaskSpec<f64> {
    let mut objects = vec![
        ObjectSpec {
            object_id: TABLE.into(),
            role: Role::Support,
            critical: false,
            upright_required: false,
            extents: Vec3::new(0.6, 0.4, TABLE_TOP / 2.0),
        },
        ObjectSpec {
            object_id: BIN.into(),
            role: Role::Target,
            critical: false,
            upright_required: false,
            extents: Vec3::new(0.15, 0.15, 0.1),
        },
        ObjectSpec {
            object_id: CRATE.into(),
            role: Role::Support,
            critical: false,
            upright_required: false,
            extents: Vec3::new(CRATE_HALF, CRATE_HALF, CRATE_HALF),
        },
    ];
    for i in 0..n {
        objects.push(ObjectSpec {
            object_id: item(i),
            role: Role::Target,
            critical: is_critical(i),
            upright_required: is_upright(i),
            extents: Vec3::from_array(ITEM_HALF),
        });
    }
    TaskSpec {
        task_id: format!("synth_{kind}_{n}"),
        name: format!("{kind} with {n} items"),
        instruction: "put every item in the bin".into(),
        objects,
        goals: (0..n)
            .map(|i| GoalPredicate::relation(PredicateKind::Inside, &item(i), BIN))
            .collect(),
        support_goals: [TABLE, CRATE]
            .iter()
            .map(|id| SupportGoal {
                object_id: id.to_string(),
                displacement_limit_m: SUPPORT_LIMIT,
            })
            .collect(),
    }
}

/// Frame recorder with the current world state.
struct Scene {
    dt: f64,
    frames: Vec<Frame<f64>>,
    states: BTreeMap<String, ObjectState<f64>>,
    held: Option<String>,
    contacts: BTreeSet<ContactPair>,
}

impl Scene {
    fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    fn snap(&mut self) -> usize {
        let k = self.frames.len();
        self.frames.push(Frame {
            t: self.t(k),
            states: self.states.clone(),
            grasps: self
                .held
                .iter()
                .map(|id| (GRIPPER.to_string(), id.clone()))
                .collect(),
            contacts: self.contacts.clone(),
        });
        k
    }

    fn wait(&mut self, frames: usize) {
        for _ in 0..frames {
            self.snap();
        }
    }

    fn settle(&mut self) {
        self.wait((SETTLE_S / self.dt).ceil() as usize + 1);
    }

    fn pos(&self, id: &str) -> Vec3<f64> {
        self.states[id].position
    }

    fn set_pos(&mut self, id: &str, p: Vec3<f64>) {
        self.states.get_mut(id).expect("known object").position = p;
    }

    fn set_rot(&mut self, id: &str, q: Quat<f64>) {
        self.states.get_mut(id).expect("known object").orientation = q;
    }

    fn touch(&mut self, a: &str, b: &str) {
        self.contacts.insert(ContactPair::new(a, b));
    }

    fn detach(&mut self, id: &str) {
        self.contacts.retain(|c| !c.involves(id));
    }

    /// Moves `id` in a straight line at no more than `speed`, one frame per
    /// step. `arrive` is touched on the last step.
    fn move_to(&mut self, id: &str, target: Vec3<f64>, speed: f64, arrive: Option<&str>) {
        let start = self.pos(id);
        let dist = (target - start).norm();
        let steps = ((dist / (speed * self.dt)).ceil() as usize).max(1);
        for j in 1..=steps {
            let p = if j == steps {
                target
            } else {
                start + (target - start).scale(j as f64 / steps as f64)
            };
            self.set_pos(id, p);
            if j == steps {
                if let Some(other) = arrive {
                    self.touch(id, other);
                }
            }
            self.snap();
        }
    }

    fn grasp(&mut self, id: &str) {
        self.held = Some(id.to_string());
        self.snap();
    }

    fn lift(&mut self, id: &str) {
        self.detach(id);
        let p = self.pos(id);
        self.move_to(id, Vec3::new(p.x, p.y, CARRY_Z), LIFT_SPEED, None);
    }

    fn carry(&mut self, id: &str, xy: [f64; 2]) {
        let p = self.pos(id);
        self.move_to(id, Vec3::new(xy[0], xy[1], p.z), CARRY_SPEED, None);
    }

    fn release(&mut self) {
        self.held = None;
        self.snap();
    }

    /// Lowers the held item into its bin slot, releases it and lets it settle.
    fn place_in_bin(&mut self, id: &str, i: usize) {
        self.carry(id, slot(i));
        let p = self.pos(id);
        self.move_to(id, Vec3::new(p.x, p.y, item_rest_z(TABLE)), LIFT_SPEED, Some(BIN));
        self.release();
        self.settle();
    }

    /// Unsupported free fall from rest onto `surface` at height `rest_z`.
    /// When `release` is set the held object lets go on the first fall frame.
    fn fall(&mut self, id: &str, rest_z: f64, surface: &str, release: bool) -> Fall {
        let p = self.pos(id);
        if release {
            self.held = None;
        }
        self.detach(id);
        let mut first = None;
        let mut prev_z = p.z;
        for k in 1.. {
            let tk = k as f64 * self.dt;
            let z = p.z - 0.5 * GRAVITY * tk * tk;
            if z <= rest_z {
                self.set_pos(id, Vec3::new(p.x, p.y, rest_z));
                self.touch(id, surface);
                let landing = self.snap();
                return Fall {
                    first,
                    landing,
                    landing_speed: (prev_z - rest_z) / self.dt,
                };
            }
            self.set_pos(id, Vec3::new(p.x, p.y, z));
            let f = self.snap();
            first.get_or_insert(f);
            prev_z = z;
        }
        unreachable!("a fall always lands")
    }
}

struct Fall {
    /// First unsupported frame, if the object was airborne at all.
    first: Option<usize>,
    landing: usize,
    landing_speed: f64,
}

/// Accumulates the scripted outcome.
struct Truth {
    n: usize,
    in_bin: Vec<bool>,
    final_tilt: Vec<f64>,
    events: Vec<ViolationEvent<f64>>,
}

impl Truth {
    fn event(&mut self, t: f64, id: &str, kind: ViolationKind, role: Role, detail: String) {
        self.events.push(ViolationEvent {
            t,
            object_id: id.to_string(),
            kind,
            role_at_event: role,
            detail,
        });
    }

    fn finish(mut self, spec: &TaskSpec<f64>, trial_id: u64) -> Result<GroundTruth, SynthError> {
        sort_events(&mut self.events);
        let has = |id: &str, pred: fn(ViolationKind) -> bool| {
            self.events.iter().any(|e| e.object_id == id && pred(e.kind))
        };
        let indicators = IndicatorVectors {
            p: (0..self.n)
                .map(|i| !(is_upright(i) && self.final_tilt[i] > TILT_LIMIT))
                .collect(),
            h: (0..self.n)
                .map(|i| !(is_critical(i) && has(&item(i), ViolationKind::breaks_handling)))
                .collect(),
            s: spec
                .support_goals
                .iter()
                .map(|g| !has(&g.object_id, ViolationKind::breaks_support))
                .collect(),
        };
        let card = ScoreCard::from_vectors(
            &spec.task_id,
            trial_id,
            GoalVector(self.in_bin.clone()),
            indicators,
            self.events,
        )?;
        Ok(GroundTruth { card })
    }
}

/// Generates one scenario with trial id 0.
pub fn generate(
    script: &ScenarioScript,
) -> Result<(TaskSpec<f64>, Trajectory<f64>, GroundTruth), SynthError> {
    generate_trial(script, 0)
}

/// Generates one scenario. The spec depends only on the scenario kind and the
/// goal count, so trials of the same kind and size can be scored together.
pub fn generate_trial(
    script: &ScenarioScript,
    trial_id: u64,
) -> Result<(TaskSpec<f64>, Trajectory<f64>, GroundTruth), SynthError> {
    use ScenarioKind::*;
    let kind = script.name;
    let mut prm = Params {
        script,
        rng: ChaCha8Rng::seed_from_u64(script.seed),
    };
    prm.check_keys()?;
    let min_goals = if kind == MultiViolation { 4 } else { 1 };
    let n = prm.count("goals", min_goals, 9, (min_goals.max(3), 6))?;
    let dt = prm.get("dt", 0.01, 0.1, |_| DEFAULT_DT)?;
    let spec = scenario_spec(kind, n);

    let mut scene = Scene {
        dt,
        frames: Vec::new(),
        states: BTreeMap::new(),
        held: None,
        contacts: BTreeSet::new(),
    };
    let place = |scene: &mut Scene, id: &str, p: [f64; 3], on: &str| {
        scene
            .states
            .insert(id.to_string(), ObjectState::at(Vec3::from_array(p), Quat::identity()));
        scene.touch(id, on);
    };
    place(&mut scene, TABLE, [0.0, 0.0, TABLE_TOP / 2.0], FLOOR);
    place(&mut scene, BIN, [0.3, 0.0, TABLE_TOP + 0.1], TABLE);
    place(&mut scene, CRATE, [-0.3, 0.25, TABLE_TOP + CRATE_HALF], TABLE);
    for i in 0..n {
        let jx = f64::from(prm.rng.gen_range(-10i32..=10)) / 1000.0;
        let jy = f64::from(prm.rng.gen_range(-10i32..=10)) / 1000.0;
        let x = -0.5 + 0.08 * i as f64 + jx;
        place(&mut scene, &item(i), [x, -0.25 + jy, item_rest_z(TABLE)], TABLE);
    }
    let lead_in = prm.rng.gen_range(1..=3);
    scene.wait(lead_in);

    let mut truth = Truth {
        n,
        in_bin: vec![false; n],
        final_tilt: vec![0.0; n],
        events: Vec::new(),
    };

    let pick_and_place = |scene: &mut Scene, truth: &mut Truth, i: usize| {
        let id = item(i);
        scene.grasp(&id);
        scene.lift(&id);
        scene.place_in_bin(&id, i);
        truth.in_bin[i] = true;
    };

    let tip = |scene: &mut Scene, truth: &mut Truth, i: usize, angle: f64| {
        let id = item(i);
        let mut flagged = false;
        for j in 1..=3 {
            let a = angle * j as f64 / 3.0;
            scene.set_rot(&id, about_x(a));
            let k = scene.snap();
            if a > TILT_LIMIT && !flagged {
                flagged = true;
                truth.event(scene.t(k), &id, ViolationKind::Tipped, Role::Target, format!("tilt {a:.1} deg"));
            }
        }
        truth.final_tilt[i] = angle;
        scene.settle();
    };

    // Carries item `i` over the drop spot and lets go `drop_m` above the surface.
    let drop_item = |scene: &mut Scene, truth: &mut Truth, i: usize, drop_m: f64, onto_floor: bool| {
        let id = item(i);
        let (spot, surface) = if onto_floor {
            (FLOOR_DROP_SPOT, FLOOR)
        } else {
            (TABLE_DROP_SPOT, TABLE)
        };
        let rest = item_rest_z(surface);
        scene.carry(&id, spot);
        let p = scene.pos(&id);
        scene.move_to(&id, Vec3::new(p.x, p.y, rest + drop_m), LIFT_SPEED, None);
        let fall = scene.fall(&id, rest, surface, true);
        if drop_m > FALL_LIMIT {
            let k = fall.first.expect("drops above the limit leave the surface");
            truth.event(scene.t(k), &id, ViolationKind::Drop, Role::Target, format!("released {drop_m:.3} m up"));
        } else if onto_floor {
            truth.event(scene.t(fall.landing), &id, ViolationKind::Drop, Role::Target, "floor impact".into());
        } else if is_critical(i) && fall.landing_speed > IMPACT_LIMIT {
            truth.event(
                scene.t(fall.landing),
                &id,
                ViolationKind::Mishandle,
                Role::Target,
                format!("landed at {:.2} m/s", fall.landing_speed),
            );
        }
        scene.settle();
    };

    // Slides the crate along `dir` by `dist`, touching the table throughout.
    let slide_crate = |scene: &mut Scene, truth: &mut Truth, dir: [f64; 2], dist_mm: u32| {
        let start = scene.pos(CRATE);
        let steps = ((f64::from(dist_mm) / 1000.0 / (SLIDE_SPEED * scene.dt)).ceil() as u32).max(1);
        let mut flagged = false;
        for j in 1..=steps {
            let off_mm = (u64::from(dist_mm) * u64::from(j) + u64::from(steps) / 2) / u64::from(steps);
            let off = off_mm as f64 / 1000.0;
            scene.set_pos(CRATE, Vec3::new(start.x + dir[0] * off, start.y + dir[1] * off, start.z));
            let k = scene.snap();
            if off_mm > (SUPPORT_LIMIT * 1000.0).round() as u64 && !flagged {
                flagged = true;
                truth.event(scene.t(k), CRATE, ViolationKind::Displaced, Role::Support, format!("displaced {off:.3} m"));
            }
        }
        scene.settle();
    };

    match kind {
        CleanSuccess => {
            for i in 0..n {
                pick_and_place(&mut scene, &mut truth, i);
            }
        }
        PartialGoals => {
            let default_hi = n.saturating_sub(1).max(1) as u32;
            let k = prm.count("satisfied", 0, n as u32, (1.min(n as u32), default_hi.min(n as u32)))?;
            if k > n {
                return Err(SynthError::InvalidParams(format!("`satisfied` = {k} exceeds {n} goals")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            for a in (1..n).rev() {
                let b = prm.rng.gen_range(0..=a);
                order.swap(a, b);
            }
            let mut chosen = order[..k].to_vec();
            chosen.sort_unstable();
            for i in chosen {
                pick_and_place(&mut scene, &mut truth, i);
            }
        }
        TippedPlacement => {
            let angle = prm.angle("tilt_deg", 0.0, 90.0, (350, 850))?;
            let uprights: Vec<usize> = (0..n).filter(|&i| is_upright(i)).collect();
            let victim = uprights[prm.rng.gen_range(0..uprights.len())];
            for i in 0..n {
                pick_and_place(&mut scene, &mut truth, i);
                if i == victim {
                    tip(&mut scene, &mut truth, i, angle);
                }
            }
        }
        DroppedCritical => {
            let drop_m = prm.length("drop_m", 0.05, 1.5, (200, 1500))?;
            let drops = prm.count("drops", 1, 2, (1, 2))?;
            let replace = prm.flag("replace")?;
            let onto_floor = prm.flag("onto_floor")?;
            let critical = !prm.script.params.contains_key("critical") || prm.flag("critical")?;
            let pool: Vec<usize> = (0..n).filter(|&i| is_critical(i) == critical).collect();
            if pool.is_empty() {
                return Err(SynthError::InvalidParams(format!("no non-critical item among {n} goals")));
            }
            let victim = pool[prm.rng.gen_range(0..pool.len())];
            for i in (0..n).filter(|&i| i != victim) {
                pick_and_place(&mut scene, &mut truth, i);
            }
            let id = item(victim);
            for _ in 0..drops {
                scene.grasp(&id);
                scene.lift(&id);
                drop_item(&mut scene, &mut truth, victim, drop_m, onto_floor);
            }
            if replace {
                pick_and_place(&mut scene, &mut truth, victim);
            }
        }
        DisplacedSupport => {
            let d = prm.length("displacement_m", 0.0, 0.5, (150, 400))?;
            let at = prm.rng.gen_range(0..=n);
            for i in 0..n {
                if i == at {
                    slide_crate(&mut scene, &mut truth, [1.0, 0.0], (d * 1000.0).round() as u32);
                }
                pick_and_place(&mut scene, &mut truth, i);
            }
            if at == n {
                slide_crate(&mut scene, &mut truth, [1.0, 0.0], (d * 1000.0).round() as u32);
            }
        }
        FallenSupport => {
            for i in 0..n {
                pick_and_place(&mut scene, &mut truth, i);
            }
            // pushed past the table edge, then off it
            slide_crate(&mut scene, &mut truth, [0.0, 1.0], 250);
            let start_z = scene.pos(CRATE).z;
            let first = scene
                .fall(CRATE, CRATE_HALF, FLOOR, false)
                .first
                .expect("crate leaves the table");
            truth.event(
                scene.t(first),
                CRATE,
                ViolationKind::Fell,
                Role::Support,
                format!("fell {:.3} m", start_z - CRATE_HALF),
            );
            scene.settle();
        }
        MultiViolation => {
            let angle = prm.angle("tilt_deg", 0.0, 90.0, (350, 850))?;
            let drop_m = prm.length("drop_m", 0.05, 1.5, (200, 1500))?;
            let d = prm.length("displacement_m", 0.0, 0.5, (150, 400))?;
            pick_and_place(&mut scene, &mut truth, 3);
            tip(&mut scene, &mut truth, 3, angle);
            for i in (1..n).filter(|&i| i != 3) {
                pick_and_place(&mut scene, &mut truth, i);
            }
            scene.grasp(&item(0));
            scene.lift(&item(0));
            drop_item(&mut scene, &mut truth, 0, drop_m, true);
            slide_crate(&mut scene, &mut truth, [1.0, 0.0], (d * 1000.0).round() as u32);
        }
        HardImpact => {
            let speed = round_to(
                prm.get("impact_mps", 0.1, 3.0, |r| f64::from(r.gen_range(120u32..=300)) / 100.0)?,
                0.01,
            );
            let invert = prm.flag("invert")?;
            let invert_deg = prm.angle("invert_deg", 0.0, 179.9, (900, 1700))?;
            let victim = if invert {
                0
            } else {
                let criticals: Vec<usize> = (0..n).filter(|&i| is_critical(i)).collect();
                criticals[prm.rng.gen_range(0..criticals.len())]
            };
            for i in (0..n).filter(|&i| i != victim) {
                pick_and_place(&mut scene, &mut truth, i);
            }
            let id = item(victim);
            scene.grasp(&id);
            scene.lift(&id);
            if invert {
                let ramp = [1.0, 2.0, 3.0, 2.0, 1.0, 0.0];
                let mut flagged = false;
                for j in ramp {
                    let a = invert_deg * j / 3.0;
                    scene.set_rot(&id, about_x(a));
                    let k = scene.snap();
                    if a > MISHANDLE_TILT && !flagged {
                        flagged = true;
                        truth.event(scene.t(k), &id, ViolationKind::Mishandle, Role::Target, format!("held at tilt {a:.1} deg"));
                    }
                    if a <= MISHANDLE_TILT {
                        flagged = false;
                    }
                }
                scene.place_in_bin(&id, victim);
            } else {
                scene.carry(&id, slot(victim));
                let rest = item_rest_z(TABLE);
                let p = scene.pos(&id);
                scene.move_to(&id, Vec3::new(p.x, p.y, rest + speed * dt), LIFT_SPEED, None);
                scene.set_pos(&id, Vec3::new(p.x, p.y, rest));
                scene.touch(&id, BIN);
                let k = scene.snap();
                if speed > IMPACT_LIMIT {
                    truth.event(scene.t(k), &id, ViolationKind::Mishandle, Role::Target, format!("contact onset at {speed:.2} m/s"));
                }
                scene.release();
                scene.settle();
            }
            truth.in_bin[victim] = true;
        }
    }
    scene.wait(2);

    let traj = Trajectory {
        task_id: spec.task_id.clone(),
        trial_id,
        objects: spec.objects.iter().map(|o| o.object_id.clone()).collect(),
        frames: scene.frames,
    };
    let truth = truth.finish(&spec, trial_id)?;
    Ok((spec, traj, truth))
}

/// Seed of scenario `index` in a corpus generated from `seed`.
pub fn scenario_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.next_u64()
}

/// The script used for scenario `index`: kinds cycle in declaration order.
pub fn corpus_script(seed: u64, index: u64) -> ScenarioScript {
    let kind = ScenarioKind::ALL[(index % ScenarioKind::ALL.len() as u64) as usize];
    ScenarioScript::new(kind, scenario_seed(seed, index))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: u64,
    pub name: ScenarioKind,
    pub seed: u64,
    pub dir: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub count: u64,
    pub scenarios: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `count` scenarios under `dir` as `<name>-<index>/{task.spec,
/// trial.jsonl, truth.json}` plus `manifest.json`. Returns the manifest path.
pub fn generate_corpus(seed: u64, count: u64, dir: &Path) -> Result<PathBuf, SynthError> {
    if count == 0 {
        return Err(SynthError::InvalidParams("count must be at least 1".into()));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut scenarios = Vec::new();
    for index in 0..count {
        let script = corpus_script(seed, index);
        let (spec, traj, truth) = generate_trial(&script, index)?;
        let name = format!("{}-{index:04}", script.name);
        let sub = dir.join(&name);
        fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        let write = |file: &str, body: String| {
            let p = sub.join(file);
            fs::write(&p, body).map_err(io_err(&p))
        };
        write("task.spec", spec.to_text())?;
        write("trial.jsonl", traj.to_jsonl_string())?;
        write("truth.json", format!("{}\n", truth.to_json()))?;
        scenarios.push(ManifestEntry {
            index,
            name: script.name,
            seed: script.seed,
            dir: name,
        });
    }
    let manifest = Manifest {
        seed,
        count,
        scenarios,
    };
    let path = dir.join(MANIFEST_FILE);
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, body + "\n").map_err(io_err(&path))?;
    Ok(path)
}
