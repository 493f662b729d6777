//! Per-trial trajectory logs and their JSON Lines encoding.
//!
//! Line 1 is a header `{"task_id", "trial_id", "objects"}`; every following
//! line is one frame with object poses, grasps and contact pairs. Frame 0
//! defines the reference pose of every object.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Quat, Vec3};
use crate::scalar::{lit, Scalar};

/// Reserved contact id for the ground plane.
pub const FLOOR: &str = "floor";

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectState<T> {
    pub position: Vec3<T>,
    pub orientation: Quat<T>,
    /// Normalized articulation, 0 closed and 1 fully open.
    pub joint_fraction: Option<T>,
    pub flags: BTreeMap<String, bool>,
}

impl<T: Scalar> ObjectState<T> {
    pub fn at(position: Vec3<T>, orientation: Quat<T>) -> Self {
        ObjectState {
            position,
            orientation,
            joint_fraction: None,
            flags: BTreeMap::new(),
        }
    }
}

/// Unordered pair of ids, stored with the smaller id first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContactPair(String, String);

impl ContactPair {
    pub fn new(a: &str, b: &str) -> Self {
        if a <= b {
            ContactPair(a.to_string(), b.to_string())
        } else {
            ContactPair(b.to_string(), a.to_string())
        }
    }

    pub fn involves(&self, id: &str) -> bool {
        self.0 == id || self.1 == id
    }

    /// The id paired with `id`, if `id` is part of this pair.
    pub fn other(&self, id: &str) -> Option<&str> {
        if self.0 == id {
            Some(&self.1)
        } else if self.1 == id {
            Some(&self.0)
        } else {
            None
        }
    }

    pub fn ids(&self) -> (&str, &str) {
        (&self.0, &self.1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame<T> {
    pub t: T,
    pub states: BTreeMap<String, ObjectState<T>>,
    /// (gripper id, object id)
    pub grasps: BTreeSet<(String, String)>,
    pub contacts: BTreeSet<ContactPair>,
}

impl<T: Scalar> Frame<T> {
    pub fn is_grasped(&self, object: &str) -> bool {
        self.grasps.iter().any(|(_, o)| o == object)
    }

    pub fn in_contact(&self, object: &str) -> bool {
        self.contacts.iter().any(|c| c.involves(object))
    }

    pub fn has_contact(&self, a: &str, b: &str) -> bool {
        self.contacts.contains(&ContactPair::new(a, b))
    }

    pub fn touches_floor(&self, object: &str) -> bool {
        self.has_contact(object, FLOOR)
    }

    /// Ids in contact with `object` in this frame.
    pub fn contacts_of<'a>(&'a self, object: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.contacts.iter().filter_map(move |c| c.other(object))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub task_id: String,
    pub trial_id: u64,
    /// Object ids in header order.
    pub objects: Vec<String>,
    pub frames: Vec<Frame<T>>,
}

impl<T: Scalar> Trajectory<T> {
    /// The last frame, on which goal predicates are evaluated.
    pub fn final_state(&self) -> &Frame<T> {
        self.frames.last().expect("trajectory has at least one frame")
    }

    pub fn first_frame(&self) -> &Frame<T> {
        &self.frames[0]
    }

    pub fn time_range(&self) -> (T, T) {
        (self.first_frame().t, self.final_state().t)
    }

    /// Copy of this trajectory reduced to its final frame.
    pub fn truncated_to_final(&self) -> Trajectory<T> {
        Trajectory {
            task_id: self.task_id.clone(),
            trial_id: self.trial_id,
            objects: self.objects.clone(),
            frames: vec![self.final_state().clone()],
        }
    }

    /// Serializes to the JSON Lines form accepted by [`read_trajectory`].
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header = Header {
            task_id: self.task_id.clone(),
            trial_id: self.trial_id,
            objects: self.objects.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for f in &self.frames {
            serde_json::to_writer(&mut out, &FrameRecord::from_frame(f))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }
}

/// Frame-0 pose of every object.
pub fn reference_state<T: Scalar>(traj: &Trajectory<T>) -> BTreeMap<String, (Vec3<T>, Quat<T>)> {
    traj.first_frame()
        .states
        .iter()
        .map(|(id, s)| (id.clone(), (s.position, s.orientation)))
        .collect()
}

/// The final frame of `traj`.
pub fn final_state<T: Scalar>(traj: &Trajectory<T>) -> &Frame<T> {
    traj.final_state()
}

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("line {line}: time does not strictly increase")]
    NonMonotoneTime { line: usize },
    #[error("missing header line")]
    MissingHeader,
    #[error("line {line}: quaternion of `{object}` is not unit length")]
    UnnormalizedQuaternion { line: usize, object: String },
    #[error("line {line}: joint fraction of `{object}` outside [0, 1]")]
    JointFractionOutOfRange { line: usize, object: String },
    #[error("line {line}: object set differs from header: {detail}")]
    InconsistentObjectSet { line: usize, detail: String },
    #[error("line {line}: grasp or contact names unknown object `{id}`")]
    UnknownObject { line: usize, id: String },
    #[error("log has a header but no frames")]
    NoFrames,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    task_id: String,
    trial_id: u64,
    objects: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
struct StateRecord<T> {
    p: [T; 3],
    q: [T; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    jf: Option<T>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    flags: BTreeMap<String, bool>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
struct FrameRecord<T> {
    t: T,
    states: BTreeMap<String, StateRecord<T>>,
    #[serde(default)]
    grasps: Vec<(String, String)>,
    #[serde(default)]
    contacts: Vec<(String, String)>,
}

impl<T: Scalar> FrameRecord<T> {
    fn from_frame(f: &Frame<T>) -> Self {
        FrameRecord {
            t: f.t,
            states: f
                .states
                .iter()
                .map(|(id, s)| {
                    (
                        id.clone(),
                        StateRecord {
                            p: s.position.to_array(),
                            q: s.orientation.to_wxyz(),
                            jf: s.joint_fraction,
                            flags: s.flags.clone(),
                        },
                    )
                })
                .collect(),
            grasps: f.grasps.iter().cloned().collect(),
            contacts: f
                .contacts
                .iter()
                .map(|c| (c.0.clone(), c.1.clone()))
                .collect(),
        }
    }
}

/// Reads a trajectory from a JSON Lines stream, one line at a time.
pub fn read_trajectory<T: Scalar, R: BufRead>(source: R) -> Result<Trajectory<T>, TrajError> {
    let mut lines = source.lines().enumerate();
    let header: Header = loop {
        match lines.next() {
            None => return Err(TrajError::MissingHeader),
            Some((_, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line).map_err(|_| TrajError::MissingHeader)?;
            }
        }
    };
    let declared: BTreeSet<&str> = header.objects.iter().map(String::as_str).collect();
    let mut frames: Vec<Frame<T>> = Vec::new();
    let tol = lit::<T>(1e-6);

    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameRecord<T> =
            serde_json::from_str(&line).map_err(|e| TrajError::MalformedRecord {
                line: lineno,
                message: e.to_string(),
            })?;
        if !rec.t.is_finite() {
            return Err(TrajError::MalformedRecord {
                line: lineno,
                message: "non-finite time".into(),
            });
        }
        if let Some(prev) = frames.last() {
            if rec.t.partial_cmp(&prev.t) != Some(std::cmp::Ordering::Greater) {
                return Err(TrajError::NonMonotoneTime { line: lineno });
            }
        }
        let present: BTreeSet<&str> = rec.states.keys().map(String::as_str).collect();
        if present != declared {
            let extra: Vec<&str> = present.difference(&declared).copied().collect();
            let missing: Vec<&str> = declared.difference(&present).copied().collect();
            return Err(TrajError::InconsistentObjectSet {
                line: lineno,
                detail: format!("unexpected {extra:?}, missing {missing:?}"),
            });
        }
        let mut states = BTreeMap::new();
        for (id, s) in rec.states {
            if s.p.iter().chain(s.q.iter()).any(|v| !v.is_finite()) {
                return Err(TrajError::MalformedRecord {
                    line: lineno,
                    message: format!("non-finite pose for `{id}`"),
                });
            }
            let q = Quat::from_wxyz(s.q);
            if (q.norm() - T::one()).abs() > tol {
                return Err(TrajError::UnnormalizedQuaternion {
                    line: lineno,
                    object: id,
                });
            }
            if let Some(jf) = s.jf {
                if !(jf >= T::zero() && jf <= T::one()) {
                    return Err(TrajError::JointFractionOutOfRange {
                        line: lineno,
                        object: id,
                    });
                }
            }
            states.insert(
                id,
                ObjectState {
                    position: Vec3::from_array(s.p),
                    orientation: q,
                    joint_fraction: s.jf,
                    flags: s.flags,
                },
            );
        }
        let known = |id: &str| id == FLOOR || declared.contains(id);
        for (_, obj) in &rec.grasps {
            if obj == FLOOR || !declared.contains(obj.as_str()) {
                return Err(TrajError::UnknownObject {
                    line: lineno,
                    id: obj.clone(),
                });
            }
        }
        let mut contacts = BTreeSet::new();
        for (a, b) in &rec.contacts {
            for id in [a, b] {
                if !known(id) {
                    return Err(TrajError::UnknownObject {
                        line: lineno,
                        id: id.clone(),
                    });
                }
            }
            if a == b {
                return Err(TrajError::MalformedRecord {
                    line: lineno,
                    message: format!("self contact on `{a}`"),
                });
            }
            contacts.insert(ContactPair::new(a, b));
        }
        frames.push(Frame {
            t: rec.t,
            states,
            grasps: rec.grasps.into_iter().collect(),
            contacts,
        });
    }

    if frames.is_empty() {
        return Err(TrajError::NoFrames);
    }
    Ok(Trajectory {
        task_id: header.task_id,
        trial_id: header.trial_id,
        objects: header.objects,
        frames,
    })
}

pub fn read_trajectory_str<T: Scalar>(source: &str) -> Result<Trajectory<T>, TrajError> {
    read_trajectory(source.as_bytes())
}
