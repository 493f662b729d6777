//! Task specifications: scoped objects, goal predicates and support goals.
//!
//! The text form is line oriented:
//!
//! ```text
//! task <task_id> "<name>"
//! instruction "<free text>"
//! object <object_id> role=<target|support> [critical] [upright] extents=<x>,<y>,<z>
//! goal <kind> <subject> [<reference>|flag=<name>]
//! support <object_id> [limit=<meters>]
//! ```
//!
//! `#` starts a comment outside quoted strings. Extents are half-extents in meters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::scalar::{lit, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Target,
    Support,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Target => "target",
            Role::Support => "support",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectSpec<T> {
    pub object_id: String,
    pub role: Role,
    pub critical: bool,
    pub upright_required: bool,
    /// Half-extents of the local bounding box, meters.
    pub extents: Vec3<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredicateKind {
    Inside,
    OnTop,
    NextTo,
    Open,
    Closed,
    ToggledOn,
    StateFlag,
}

impl PredicateKind {
    pub const ALL: [PredicateKind; 7] = [
        PredicateKind::Inside,
        PredicateKind::OnTop,
        PredicateKind::NextTo,
        PredicateKind::Open,
        PredicateKind::Closed,
        PredicateKind::ToggledOn,
        PredicateKind::StateFlag,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            PredicateKind::Inside => "inside",
            PredicateKind::OnTop => "ontop",
            PredicateKind::NextTo => "nextto",
            PredicateKind::Open => "open",
            PredicateKind::Closed => "closed",
            PredicateKind::ToggledOn => "toggled_on",
            PredicateKind::StateFlag => "state_flag",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.keyword() == s)
    }

    /// Relational kinds take a reference object.
    pub fn is_relational(self) -> bool {
        matches!(
            self,
            PredicateKind::Inside | PredicateKind::OnTop | PredicateKind::NextTo
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoalPredicate {
    pub kind: PredicateKind,
    pub subject: String,
    pub reference: Option<String>,
    pub flag_name: Option<String>,
}

impl GoalPredicate {
    pub fn relation(kind: PredicateKind, subject: &str, reference: &str) -> Self {
        GoalPredicate {
            kind,
            subject: subject.to_string(),
            reference: Some(reference.to_string()),
            flag_name: None,
        }
    }

    pub fn state(kind: PredicateKind, subject: &str) -> Self {
        GoalPredicate {
            kind,
            subject: subject.to_string(),
            reference: None,
            flag_name: None,
        }
    }

    pub fn flag(subject: &str, flag: &str) -> Self {
        GoalPredicate {
            kind: PredicateKind::StateFlag,
            subject: subject.to_string(),
            reference: None,
            flag_name: Some(flag.to_string()),
        }
    }
}

impl fmt::Display for GoalPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind.keyword(), self.subject)?;
        if let Some(r) = &self.reference {
            write!(f, " {r}")?;
        }
        if let Some(flag) = &self.flag_name {
            write!(f, " flag={flag}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupportGoal<T> {
    pub object_id: String,
    pub displacement_limit_m: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec<T> {
    pub task_id: String,
    pub name: String,
    pub instruction: String,
    pub objects: Vec<ObjectSpec<T>>,
    pub goals: Vec<GoalPredicate>,
    pub support_goals: Vec<SupportGoal<T>>,
}

impl<T: Scalar> TaskSpec<T> {
    pub fn object(&self, id: &str) -> Option<&ObjectSpec<T>> {
        self.objects.iter().find(|o| o.object_id == id)
    }

    /// Number of goal predicates.
    pub fn n(&self) -> usize {
        self.goals.len()
    }

    /// Number of support goals.
    pub fn m(&self) -> usize {
        self.support_goals.len()
    }

    /// Renders the text form. Parsing the output yields an equal spec.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("task {} {}\n", self.task_id, quote(&self.name)));
        out.push_str(&format!("instruction {}\n", quote(&self.instruction)));
        for o in &self.objects {
            out.push_str(&format!("object {} role={}", o.object_id, o.role));
            if o.critical {
                out.push_str(" critical");
            }
            if o.upright_required {
                out.push_str(" upright");
            }
            out.push_str(&format!(
                " extents={},{},{}\n",
                o.extents.x, o.extents.y, o.extents.z
            ));
        }
        for g in &self.goals {
            out.push_str(&format!("goal {g}\n"));
        }
        for s in &self.support_goals {
            out.push_str(&format!(
                "support {} limit={}\n",
                s.object_id, s.displacement_limit_m
            ));
        }
        out
    }
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

/// Returns true when `s` is a valid object or flag token (`[a-z0-9_.]+`).
pub fn is_valid_token(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'.')
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("line {line}, column {column}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        column: usize,
        expected: String,
        found: String,
    },
    #[error("line {line}: unknown predicate kind `{kind}`")]
    UnknownPredicateKind { line: usize, kind: String },
    #[error("line {line}: reference to undeclared object `{id}`")]
    DanglingObjectReference { line: usize, id: String },
    #[error("line {line}: object `{id}` declared twice")]
    DuplicateObjectId { line: usize, id: String },
    #[error("line {line}: `{kind}` {detail}")]
    Arity {
        line: usize,
        kind: String,
        detail: String,
    },
    #[error("at least one goal required")]
    NoGoals,
    #[error("missing `{0}` statement")]
    MissingStatement(&'static str),
    #[error("invalid task spec: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(message: String) -> Self {
        Diagnostic {
            severity: Severity::Error,
            message,
        }
    }

    fn warning(message: String) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            message,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{s}: {}", self.message)
    }
}

/// Checks every invariant of a spec, one diagnostic per breach.
pub fn validate_task_spec<T: Scalar>(spec: &TaskSpec<T>) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut seen: BTreeMap<&str, &ObjectSpec<T>> = BTreeMap::new();

    for o in &spec.objects {
        if !is_valid_token(&o.object_id) {
            diags.push(Diagnostic::error(format!(
                "object id `{}` does not match [a-z0-9_.]+",
                o.object_id
            )));
        }
        if seen.insert(&o.object_id, o).is_some() {
            diags.push(Diagnostic::error(format!(
                "object `{}` declared twice",
                o.object_id
            )));
        }
        let e = o.extents;
        if !(e.x > T::zero() && e.y > T::zero() && e.z > T::zero()) {
            diags.push(Diagnostic::error(format!(
                "object `{}` extents must be strictly positive",
                o.object_id
            )));
        }
        if o.critical && o.role != Role::Target {
            diags.push(Diagnostic::error(format!(
                "object `{}`: criticality requires target role",
                o.object_id
            )));
        }
    }

    if spec.goals.is_empty() {
        diags.push(Diagnostic::error(format!(
            "task `{}`: at least one goal required",
            spec.task_id
        )));
    }

    for (i, g) in spec.goals.iter().enumerate() {
        let label = format!("goal {} `{}`", i, g);
        if !seen.contains_key(g.subject.as_str()) {
            diags.push(Diagnostic::error(format!(
                "{label}: undeclared object `{}`",
                g.subject
            )));
        }
        match (&g.reference, g.kind.is_relational()) {
            (Some(r), true) => {
                if !seen.contains_key(r.as_str()) {
                    diags.push(Diagnostic::error(format!("{label}: undeclared object `{r}`")));
                }
                if *r == g.subject {
                    diags.push(Diagnostic::error(format!(
                        "{label}: subject and reference are both `{r}`"
                    )));
                }
            }
            (None, true) => diags.push(Diagnostic::error(format!(
                "{label}: `{}` requires a reference object",
                g.kind.keyword()
            ))),
            (Some(r), false) => diags.push(Diagnostic::error(format!(
                "{label}: `{}` takes no reference but got `{r}`",
                g.kind.keyword()
            ))),
            (None, false) => {}
        }
        match (&g.flag_name, g.kind) {
            (None, PredicateKind::StateFlag) => diags.push(Diagnostic::error(format!(
                "{label}: state_flag requires flag=<name>"
            ))),
            (Some(f), PredicateKind::StateFlag) if !is_valid_token(f) => diags.push(
                Diagnostic::error(format!("{label}: flag name `{f}` is not a valid token")),
            ),
            (Some(f), k) if k != PredicateKind::StateFlag => diags.push(Diagnostic::error(
                format!("{label}: `{}` takes no flag but got `{f}`", k.keyword()),
            )),
            _ => {}
        }
    }

    let mut support_seen = BTreeSet::new();
    for s in &spec.support_goals {
        match seen.get(s.object_id.as_str()) {
            None => diags.push(Diagnostic::error(format!(
                "support goal references undeclared object `{}`",
                s.object_id
            ))),
            Some(o) if o.role != Role::Support => diags.push(Diagnostic::error(format!(
                "support goal on `{}` requires support role",
                s.object_id
            ))),
            _ => {}
        }
        if !support_seen.insert(s.object_id.as_str()) {
            diags.push(Diagnostic::error(format!(
                "support goal for `{}` listed twice",
                s.object_id
            )));
        }
        if s.displacement_limit_m.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
            diags.push(Diagnostic::error(format!(
                "support goal for `{}`: limit must be positive",
                s.object_id
            )));
        }
    }

    let all_support = !spec.goals.is_empty()
        && spec.goals.iter().all(|g| {
            seen.get(g.subject.as_str())
                .is_some_and(|o| o.role == Role::Support)
        });
    if all_support {
        diags.push(Diagnostic::warning(format!(
            "task `{}`: every goal subject is a support object; no target progress is scored",
            spec.task_id
        )));
    }

    diags
}

struct Token<'a> {
    text: std::borrow::Cow<'a, str>,
    column: usize,
    quoted: bool,
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Token<'_>>, SpecError> {
    let mut tokens = Vec::new();
    let chars: Vec<(usize, char)> = line.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            break;
        }
        let column = i + 1;
        if c == '"' {
            let mut s = String::new();
            i += 1;
            let mut closed = false;
            while i < chars.len() {
                match chars[i].1 {
                    '\\' if i + 1 < chars.len() => {
                        s.push(chars[i + 1].1);
                        i += 2;
                    }
                    '"' => {
                        closed = true;
                        i += 1;
                        break;
                    }
                    ch => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            if !closed {
                return Err(SpecError::Syntax {
                    line: lineno,
                    column: chars.len() + 1,
                    expected: "closing `\"`".into(),
                    found: "end of line".into(),
                });
            }
            tokens.push(Token {
                text: s.into(),
                column,
                quoted: true,
            });
        } else {
            let mut end = line.len();
            while i < chars.len() {
                let (pos, ch) = chars[i];
                if ch.is_whitespace() || ch == '#' {
                    end = pos;
                    break;
                }
                i += 1;
            }
            tokens.push(Token {
                text: line[start..end].into(),
                column,
                quoted: false,
            });
        }
    }
    Ok(tokens)
}

struct Cursor<'a, 't> {
    tokens: &'t [Token<'a>],
    pos: usize,
    line: usize,
    line_len: usize,
}

impl<'a, 't> Cursor<'a, 't> {
    fn syntax(&self, expected: &str) -> SpecError {
        match self.tokens.get(self.pos) {
            Some(t) => SpecError::Syntax {
                line: self.line,
                column: t.column,
                expected: expected.into(),
                found: format!("`{}`", t.text),
            },
            None => SpecError::Syntax {
                line: self.line,
                column: self.line_len + 1,
                expected: expected.into(),
                found: "end of line".into(),
            },
        }
    }

    fn peek(&self) -> Option<&'t Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn ident(&mut self, expected: &str) -> Result<String, SpecError> {
        match self.peek() {
            Some(t) if !t.quoted && is_valid_token(&t.text) => {
                self.pos += 1;
                Ok(t.text.to_string())
            }
            _ => Err(self.syntax(expected)),
        }
    }

    fn bare(&mut self, expected: &str) -> Result<String, SpecError> {
        match self.peek() {
            Some(t) if !t.quoted => {
                self.pos += 1;
                Ok(t.text.to_string())
            }
            _ => Err(self.syntax(expected)),
        }
    }

    fn quoted(&mut self, expected: &str) -> Result<String, SpecError> {
        match self.peek() {
            Some(t) if t.quoted => {
                self.pos += 1;
                Ok(t.text.to_string())
            }
            _ => Err(self.syntax(expected)),
        }
    }

    fn end(&self) -> Result<(), SpecError> {
        if self.pos < self.tokens.len() {
            Err(self.syntax("end of statement"))
        } else {
            Ok(())
        }
    }
}

fn parse_number<T: Scalar>(cur: &Cursor<'_, '_>, s: &str, column: usize) -> Result<T, SpecError> {
    let ok = !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_digit() || b == b'.' || b == b'-' || b == b'+' || b == b'e' || b == b'E');
    match s.parse::<T>() {
        Ok(v) if ok && v.is_finite() => Ok(v),
        _ => Err(SpecError::Syntax {
            line: cur.line,
            column,
            expected: "decimal number".into(),
            found: format!("`{s}`"),
        }),
    }
}

/// Parses the text form of a task spec.
pub fn parse_task_spec<T: Scalar>(source: &str) -> Result<TaskSpec<T>, SpecError> {
    let mut header: Option<(String, String)> = None;
    let mut instruction: Option<String> = None;
    let mut objects: Vec<ObjectSpec<T>> = Vec::new();
    let mut object_lines: BTreeMap<String, usize> = BTreeMap::new();
    let mut goals: Vec<(usize, GoalPredicate)> = Vec::new();
    let mut supports: Vec<(usize, SupportGoal<T>)> = Vec::new();

    for (idx, raw) in source.lines().enumerate() {
        let lineno = idx + 1;
        let tokens = tokenize(raw, lineno)?;
        if tokens.is_empty() {
            continue;
        }
        let mut cur = Cursor {
            tokens: &tokens,
            pos: 0,
            line: lineno,
            line_len: raw.chars().count(),
        };
        let keyword = cur.bare("statement keyword")?;
        match keyword.as_str() {
            "task" => {
                if header.is_some() {
                    cur.pos = 0;
                    return Err(cur.syntax("a single `task` statement"));
                }
                let id = cur.bare("task id")?;
                let name = cur.quoted("quoted task name")?;
                cur.end()?;
                header = Some((id, name));
            }
            "instruction" => {
                if instruction.is_some() {
                    cur.pos = 0;
                    return Err(cur.syntax("a single `instruction` statement"));
                }
                instruction = Some(cur.quoted("quoted instruction")?);
                cur.end()?;
            }
            "object" => {
                let id = cur.ident("object id matching [a-z0-9_.]+")?;
                let mut role = None;
                let mut critical = false;
                let mut upright = false;
                let mut extents = None;
                while let Some(tok) = cur.peek() {
                    let text = tok.text.to_string();
                    let column = tok.column;
                    if tok.quoted {
                        return Err(cur.syntax("object attribute"));
                    }
                    if let Some(r) = text.strip_prefix("role=") {
                        role = Some(match r {
                            "target" => Role::Target,
                            "support" => Role::Support,
                            _ => return Err(cur.syntax("role=target or role=support")),
                        });
                    } else if text == "critical" {
                        critical = true;
                    } else if text == "upright" {
                        upright = true;
                    } else if let Some(v) = text.strip_prefix("extents=") {
                        let parts: Vec<&str> = v.split(',').collect();
                        if parts.len() != 3 {
                            return Err(cur.syntax("extents=<x>,<y>,<z>"));
                        }
                        let col = column + "extents=".len();
                        extents = Some(Vec3::new(
                            parse_number(&cur, parts[0], col)?,
                            parse_number(&cur, parts[1], col)?,
                            parse_number(&cur, parts[2], col)?,
                        ));
                    } else {
                        return Err(cur.syntax("role=, critical, upright or extents="));
                    }
                    cur.pos += 1;
                }
                let role = role.ok_or_else(|| cur.syntax("role=<target|support>"))?;
                let extents = extents.ok_or_else(|| cur.syntax("extents=<x>,<y>,<z>"))?;
                if object_lines.contains_key(&id) {
                    return Err(SpecError::DuplicateObjectId { line: lineno, id });
                }
                object_lines.insert(id.clone(), lineno);
                objects.push(ObjectSpec {
                    object_id: id,
                    role,
                    critical,
                    upright_required: upright,
                    extents,
                });
            }
            "goal" => {
                let kind_text = cur.bare("predicate kind")?;
                let kind = PredicateKind::from_keyword(&kind_text).ok_or_else(|| {
                    SpecError::UnknownPredicateKind {
                        line: lineno,
                        kind: kind_text.clone(),
                    }
                })?;
                let subject = cur.ident("subject object id")?;
                let mut reference = None;
                let mut flag_name = None;
                if let Some(tok) = cur.peek() {
                    if tok.quoted {
                        return Err(cur.syntax("object id or flag=<name>"));
                    }
                    if let Some(f) = tok.text.strip_prefix("flag=") {
                        if !is_valid_token(f) {
                            return Err(cur.syntax("flag=<name>"));
                        }
                        flag_name = Some(f.to_string());
                        cur.pos += 1;
                    } else {
                        reference = Some(cur.ident("reference object id")?);
                    }
                }
                cur.end()?;
                let arity = |detail: &str| SpecError::Arity {
                    line: lineno,
                    kind: kind.keyword().to_string(),
                    detail: detail.to_string(),
                };
                if kind.is_relational() && reference.is_none() {
                    return Err(arity("requires a reference object"));
                }
                if !kind.is_relational() && reference.is_some() {
                    return Err(arity("takes no reference object"));
                }
                if kind == PredicateKind::StateFlag && flag_name.is_none() {
                    return Err(arity("requires flag=<name>"));
                }
                if kind != PredicateKind::StateFlag && flag_name.is_some() {
                    return Err(arity("takes no flag"));
                }
                goals.push((
                    lineno,
                    GoalPredicate {
                        kind,
                        subject,
                        reference,
                        flag_name,
                    },
                ));
            }
            "support" => {
                let id = cur.ident("support object id")?;
                let mut limit = lit::<T>(0.10);
                if let Some(tok) = cur.peek() {
                    match tok.text.strip_prefix("limit=") {
                        Some(v) if !tok.quoted => {
                            limit = parse_number(&cur, v, tok.column + "limit=".len())?;
                            cur.pos += 1;
                        }
                        _ => return Err(cur.syntax("limit=<meters>")),
                    }
                }
                cur.end()?;
                supports.push((
                    lineno,
                    SupportGoal {
                        object_id: id,
                        displacement_limit_m: limit,
                    },
                ));
            }
            _ => {
                cur.pos = 0;
                return Err(cur.syntax("task, instruction, object, goal or support"));
            }
        }
    }

    let (task_id, name) = header.ok_or(SpecError::MissingStatement("task"))?;
    let instruction = instruction.unwrap_or_default();

    for (line, g) in &goals {
        for id in std::iter::once(&g.subject).chain(g.reference.iter()) {
            if !object_lines.contains_key(id) {
                return Err(SpecError::DanglingObjectReference {
                    line: *line,
                    id: id.clone(),
                });
            }
        }
    }
    for (line, s) in &supports {
        if !object_lines.contains_key(&s.object_id) {
            return Err(SpecError::DanglingObjectReference {
                line: *line,
                id: s.object_id.clone(),
            });
        }
    }
    if goals.is_empty() {
        return Err(SpecError::NoGoals);
    }

    let spec = TaskSpec {
        task_id,
        name,
        instruction,
        objects,
        goals: goals.into_iter().map(|(_, g)| g).collect(),
        support_goals: supports.into_iter().map(|(_, s)| s).collect(),
    };
    let errors: Vec<Diagnostic> = validate_task_spec(&spec)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
    if errors.is_empty() {
        Ok(spec)
    } else {
        Err(SpecError::Invalid(errors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const KITCHEN: &str = r#"
# rearrange kitchen: three appliances into the cabinet, then close it
task rearrange_kitchen "rearrange kitchen"
instruction "put the appliances in the cabinet and close it"
object toaster role=target critical extents=0.12,0.08,0.09
object kettle role=target critical upright extents=0.09,0.09,0.12
object mixer role=target critical extents=0.1,0.08,0.15
object cabinet role=target extents=0.45,0.3,0.4
object counter role=support extents=1.0,0.35,0.45
goal inside toaster cabinet
goal inside kettle cabinet
goal inside mixer cabinet
goal closed cabinet
"#;

    #[test]
    fn parses_kitchen_spec() {
        let spec: TaskSpec<f64> = parse_task_spec(KITCHEN).unwrap();
        assert_eq!(spec.task_id, "rearrange_kitchen");
        assert_eq!(spec.name, "rearrange kitchen");
        assert_eq!(spec.n(), 4);
        assert_eq!(spec.m(), 0);
        assert_eq!(spec.objects.len(), 5);
        assert_eq!(spec.goals[3], GoalPredicate::state(PredicateKind::Closed, "cabinet"));
        assert!(spec.object("kettle").unwrap().upright_required);
        assert!(validate_task_spec(&spec).is_empty());
    }

    #[test]
    fn zero_goals_is_an_error() {
        let src = "task t \"x\"\nobject a role=target extents=1,1,1\n";
        assert_eq!(parse_task_spec::<f64>(src), Err(SpecError::NoGoals));
    }

    #[test]
    fn dangling_reference_names_the_id() {
        let src = "task t \"x\"\nobject jar role=target extents=0.1,0.1,0.1\ngoal inside jar cabinet\n";
        let err = parse_task_spec::<f64>(src).unwrap_err();
        assert_eq!(
            err,
            SpecError::DanglingObjectReference {
                line: 3,
                id: "cabinet".into()
            }
        );
        assert!(err.to_string().contains("cabinet"));
    }

    #[test]
    fn duplicate_object() {
        let src = "task t \"x\"\nobject a role=target extents=1,1,1\nobject a role=support extents=1,1,1\n";
        assert!(matches!(
            parse_task_spec::<f64>(src),
            Err(SpecError::DuplicateObjectId { line: 3, .. })
        ));
    }

    #[test]
    fn relational_goal_needs_reference() {
        let src = "task t \"x\"\nobject a role=target extents=1,1,1\ngoal ontop a\n";
        assert!(matches!(
            parse_task_spec::<f64>(src),
            Err(SpecError::Arity { line: 3, .. })
        ));
        let src = "task t \"x\"\nobject a role=target extents=1,1,1\ngoal state_flag a\n";
        assert!(matches!(
            parse_task_spec::<f64>(src),
            Err(SpecError::Arity { line: 3, .. })
        ));
    }

    #[test]
    fn unknown_kind() {
        let src = "task t \"x\"\nobject a role=target extents=1,1,1\ngoal under a\n";
        assert_eq!(
            parse_task_spec::<f64>(src),
            Err(SpecError::UnknownPredicateKind {
                line: 3,
                kind: "under".into()
            })
        );
    }

    #[test]
    fn syntax_error_has_position() {
        let src = "task t \"x\"\nobject a role=target extents=1,oops,1\n";
        match parse_task_spec::<f64>(src) {
            Err(SpecError::Syntax { line, column, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(column, 30);
            }
            other => panic!("{other:?}"),
        }
        let src = "task t \"unterminated\n";
        assert!(matches!(
            parse_task_spec::<f64>(src),
            Err(SpecError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn support_goal_limits() {
        let src = "task t \"x\"\nobject a role=target extents=1,1,1\nobject table role=support extents=1,1,1\nobject box role=support extents=1,1,1\ngoal ontop a table\nsupport table\nsupport box limit=0.2 # wider\n";
        let spec: TaskSpec<f64> = parse_task_spec(src).unwrap();
        assert_eq!(spec.m(), 2);
        assert_eq!(spec.support_goals[0].displacement_limit_m, 0.10);
        assert_eq!(spec.support_goals[1].displacement_limit_m, 0.2);
    }

    #[test]
    fn critical_support_object_is_an_error() {
        let mut spec: TaskSpec<f64> = parse_task_spec(KITCHEN).unwrap();
        spec.objects[4].critical = true;
        let diags = validate_task_spec(&spec);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Error);
        assert!(diags[0].message.contains("criticality requires target role"));
        assert!(diags[0].message.contains("counter"));
        let text = spec.to_text();
        assert!(matches!(
            parse_task_spec::<f64>(&text),
            Err(SpecError::Invalid(_))
        ));
    }

    #[test]
    fn goals_only_on_support_objects_warns() {
        let src = "task t \"x\"\nobject table role=support extents=1,1,1\nobject box role=support extents=1,1,1\ngoal ontop box table\n";
        let spec: TaskSpec<f64> = parse_task_spec(src).unwrap();
        let diags = validate_task_spec(&spec);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Warning);
    }

    #[test]
    fn quoted_strings_round_trip() {
        let mut spec: TaskSpec<f32> = parse_task_spec(KITCHEN).unwrap();
        spec.instruction = "say \"hi\" # not a comment \\ ok".into();
        let again: TaskSpec<f32> = parse_task_spec(&spec.to_text()).unwrap();
        assert_eq!(again, spec);
    }
}
