//! Abstract attack traces: extraction from a search path, classification,
//! MSC rendering and structured export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{SearchNode, SearchResult};
use crate::spec::parser::parse_term;
use crate::spec::{Goal, ParseError};
use crate::term::{is_submessage, Term, INTRUDER};
use crate::translate::{Event, TransitionSystem};

pub const QUERY: &str = "query";
pub const TUPLE: &str = "tuple";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub sender: String,
    pub receiver: String,
    pub message: Term,
    /// The intruder placed the payload directly in this message.
    pub injected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttackKind {
    AuthBypass(String),
    DataExtraction,
    SecondOrder(Box<AttackKind>),
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackKind::AuthBypass(page) => write!(f, "AuthBypass({page})"),
            AttackKind::DataExtraction => write!(f, "DataExtraction"),
            AttackKind::SecondOrder(inner) => write!(f, "SecondOrder({inner})"),
        }
    }
}

impl AttackKind {
    /// The first-order kind, unwrapping a second-order wrapper.
    pub fn base(&self) -> &AttackKind {
        match self {
            AttackKind::SecondOrder(inner) => inner.base(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackTrace {
    pub steps: Vec<TraceStep>,
    pub goal: String,
    pub classification: AttackKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("search result is not an attack")]
    NotAnAttack,
    #[error("goal '{0}' is neither an authentication bypass nor a data extraction goal")]
    ClassificationAmbiguous(String),
    #[error("goal '{0}' is not declared")]
    UnknownGoal(String),
    #[error("line {line}: {message}")]
    Msc { line: usize, message: String },
}

/// Message exchanges of a search path in firing order. Intruder-sourced
/// receives and all sends become steps; fresh nonces of honest agents are
/// dropped from concatenations.
pub fn extract_steps(path: &[SearchNode], ts: &TransitionSystem) -> Vec<TraceStep> {
    let mut nonces = BTreeSet::new();
    for node in path {
        if let Some(via) = &node.via {
            for v in &ts.rules[via.rule].fresh_vars {
                if let Some(t) = via.subst.get(v) {
                    nonces.insert(t.clone());
                }
            }
        }
    }
    let mut steps = Vec::new();
    for node in path {
        let Some(via) = &node.via else { continue };
        let rule = &ts.rules[via.rule];
        let who = ts.instances[rule.instance].display.clone();
        for ev in &rule.events {
            match ev {
                Event::Receive {
                    msg,
                    via_intruder: true,
                } => {
                    let message = elide(&via.subst.apply(msg), &nonces);
                    let injected = is_injected(&message);
                    steps.push(TraceStep {
                        sender: INTRUDER.into(),
                        receiver: who.clone(),
                        message,
                        injected,
                    });
                }
                Event::Receive { .. } => {}
                Event::Send { to, msg } => {
                    let receiver = ts.agent_display(&via.subst.apply(to));
                    let message = elide(&via.subst.apply(msg), &nonces);
                    steps.push(TraceStep {
                        sender: who.clone(),
                        receiver,
                        message,
                        injected: false,
                    });
                }
            }
        }
    }
    steps
}

fn elide(t: &Term, nonces: &BTreeSet<Term>) -> Term {
    match t {
        Term::Concat(parts) => {
            let kept: Vec<Term> = parts
                .iter()
                .filter(|p| !nonces.contains(p))
                .cloned()
                .collect();
            if kept.is_empty() {
                t.clone()
            } else {
                Term::concat(kept)
            }
        }
        other => other.clone(),
    }
}

fn is_injected(message: &Term) -> bool {
    let sqli = Term::sqli();
    match message {
        Term::Concat(parts) => parts.contains(&sqli),
        other => *other == sqli,
    }
}

/// Builds the trace of an attack found by search.
pub fn build_trace(
    result: &SearchResult,
    ts: &TransitionSystem,
) -> Result<AttackTrace, TraceError> {
    let SearchResult::AttackFound { trace, goal } = result else {
        return Err(TraceError::NotAnAttack);
    };
    let steps = extract_steps(trace, ts);
    let classification = classify(&steps, goal, &ts.goals)?;
    Ok(AttackTrace {
        steps,
        goal: goal.clone(),
        classification,
    })
}

/// Kind of attack witnessed by the steps for the violated goal.
pub fn classify(steps: &[TraceStep], goal: &str, goals: &[Goal]) -> Result<AttackKind, TraceError> {
    let g = goals
        .iter()
        .find(|g| g.name == goal)
        .ok_or_else(|| TraceError::UnknownGoal(goal.into()))?;
    let base = match &g.forbidden {
        Term::Apply(f, arg) if f == TUPLE && matches!(**arg, Term::Wildcard | Term::Var(_)) => {
            AttackKind::DataExtraction
        }
        Term::Const(page) => AttackKind::AuthBypass(page.clone()),
        _ => return Err(TraceError::ClassificationAmbiguous(goal.into())),
    };
    Ok(if is_second_order(steps) {
        AttackKind::SecondOrder(Box::new(base))
    } else {
        base
    })
}

fn query_args(t: &Term, out: &mut Vec<Term>) {
    t.visit(&mut |s| {
        if let Term::Apply(f, a) = s {
            if f == QUERY {
                out.push((**a).clone());
            }
        }
    });
}

/// A payload-bearing query argument is consumed twice and the first
/// database answer never reaches the intruder.
fn is_second_order(steps: &[TraceStep]) -> bool {
    let sqli = Term::sqli();
    let mut first: BTreeMap<Term, usize> = BTreeMap::new();
    for (j, s) in steps.iter().enumerate() {
        let mut args = Vec::new();
        query_args(&s.message, &mut args);
        for a in args.into_iter().filter(|a| is_submessage(&sqli, a)) {
            match first.get(&a) {
                None => {
                    first.insert(a, j);
                }
                Some(&j1) => {
                    let leaked = Term::apply(TUPLE, a.clone());
                    let withheld = steps[j1 + 1..j]
                        .iter()
                        .all(|s| s.receiver != INTRUDER || !is_submessage(&leaked, &s.message));
                    if withheld {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// One numbered line per step with aligned sender and receiver columns.
pub fn render_msc(trace: &AttackTrace) -> String {
    render_steps(&trace.steps)
}

pub fn render_steps(steps: &[TraceStep]) -> String {
    let nw = steps.len().to_string().len();
    let sw = steps.iter().map(|s| s.sender.len()).max().unwrap_or(0);
    let rw = steps.iter().map(|s| s.receiver.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (i, s) in steps.iter().enumerate() {
        out.push_str(&format!(
            "{:>nw$}. {:<sw$} -> {:<rw$} : {}\n",
            i + 1,
            s.sender,
            s.receiver,
            s.message
        ));
    }
    out
}

/// A parsed MSC line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MscLine {
    pub sender: String,
    pub receiver: String,
    pub message: Term,
}

impl From<&TraceStep> for MscLine {
    fn from(s: &TraceStep) -> Self {
        MscLine {
            sender: s.sender.clone(),
            receiver: s.receiver.clone(),
            message: s.message.clone(),
        }
    }
}

/// Parses Alice-and-Bob lines `[n.] A -> B : msg`. Every name in a message
/// is read as a constant.
pub fn parse_msc(text: &str) -> Result<Vec<MscLine>, TraceError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let err = |message: String| TraceError::Msc {
            line: n + 1,
            message,
        };
        let mut line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some((num, rest)) = line.split_once(". ") {
            if !num.is_empty() && num.trim().chars().all(|c| c.is_ascii_digit()) {
                line = rest;
            }
        }
        let (sender, rest) = line
            .split_once("->")
            .ok_or_else(|| err("missing '->'".into()))?;
        let (receiver, msg) = rest
            .split_once(':')
            .ok_or_else(|| err("missing ':'".into()))?;
        let message = parse_term(msg.trim()).map_err(|e: ParseError| err(e.message))?;
        out.push(MscLine {
            sender: sender.trim().into(),
            receiver: receiver.trim().into(),
            message: ground(&message),
        });
    }
    Ok(out)
}

fn ground(t: &Term) -> Term {
    match t {
        Term::Var(v) => Term::Const(v.clone()),
        Term::Concat(parts) => Term::concat(parts.iter().map(ground)),
        Term::Apply(f, a) => Term::apply(f.clone(), ground(a)),
        Term::Enc(p, k) => Term::enc(ground(p), ground(k)),
        other => other.clone(),
    }
}

/// Names invented during search: nonces `n<k>` and intruder atoms
/// `<Name>_<k>`.
pub fn is_generated_name(c: &str) -> bool {
    if let Some(d) = c.strip_prefix('n') {
        if !d.is_empty() && d.chars().all(|c| c.is_ascii_digit()) {
            return true;
        }
    }
    match c.rsplit_once('_') {
        Some((base, d)) => {
            !base.is_empty() && !d.is_empty() && d.chars().all(|c| c.is_ascii_digit())
        }
        None => false,
    }
}

fn term_eq_renaming(
    a: &Term,
    b: &Term,
    fwd: &mut BTreeMap<String, String>,
    back: &mut BTreeMap<String, String>,
) -> bool {
    match (a, b) {
        (Term::Const(x), Term::Const(y)) if is_generated_name(x) && is_generated_name(y) => {
            let ok_f = fwd.get(x).is_none_or(|v| v == y);
            let ok_b = back.get(y).is_none_or(|v| v == x);
            if ok_f && ok_b {
                fwd.insert(x.clone(), y.clone());
                back.insert(y.clone(), x.clone());
            }
            ok_f && ok_b
        }
        (Term::Concat(p), Term::Concat(q)) => {
            p.len() == q.len()
                && p.iter()
                    .zip(q)
                    .all(|(x, y)| term_eq_renaming(x, y, fwd, back))
        }
        (Term::Apply(f, x), Term::Apply(g, y)) => f == g && term_eq_renaming(x, y, fwd, back),
        (Term::Enc(p, k), Term::Enc(q, l)) => {
            term_eq_renaming(p, q, fwd, back) && term_eq_renaming(k, l, fwd, back)
        }
        _ => a == b,
    }
}

/// Step-wise equality where generated names may differ under one
/// consistent bijection.
pub fn equal_up_to_renaming(a: &[MscLine], b: &[MscLine]) -> bool {
    let (mut fwd, mut back) = (BTreeMap::new(), BTreeMap::new());
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.sender == y.sender
                && x.receiver == y.receiver
                && term_eq_renaming(&x.message, &y.message, &mut fwd, &mut back)
        })
}

#[derive(Serialize, Deserialize, Debug, PartialEq, Eq)]
pub struct StructuredHeader {
    pub classification: String,
    pub goal: String,
    pub steps: usize,
}

#[derive(Serialize, Deserialize, Debug, PartialEq, Eq)]
pub struct StructuredStep {
    pub from: String,
    pub index: usize,
    pub injected: bool,
    pub message: String,
    pub to: String,
}

/// Newline-delimited JSON: a header object followed by one object per
/// step, keys in lexicographic order.
pub fn to_structured(trace: &AttackTrace) -> String {
    let header = StructuredHeader {
        classification: trace.classification.to_string(),
        goal: trace.goal.clone(),
        steps: trace.steps.len(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for (i, s) in trace.steps.iter().enumerate() {
        let step = StructuredStep {
            from: s.sender.clone(),
            index: i + 1,
            injected: s.injected,
            message: s.message.to_string(),
            to: s.receiver.clone(),
        };
        out.push_str(&serde_json::to_string(&step).expect("step serializes"));
        out.push('\n');
    }
    out
}
