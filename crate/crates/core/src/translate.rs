//! Compilation of a specification into a transition system of multiset
//! rewriting rules over ground facts.
//!
//! Each behavioral entity instance owns a `state_<Entity>` fact carrying its
//! actor, instance id, step label, parameters and local variables. A rule runs
//! from one step label up to (but not past) the next receive, so every rule
//! consumes at most one message.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::spec::{
    AssignValue, ChannelKind, EntityDecl, Goal, Guard, HornClause, Pattern, Receive, Sort, SpecAst,
    Statement, SymbolKind, DATABASE_ENTITY,
};
use crate::term::{Substitution, Term, INTRUDER, SQLI};

pub const IKNOWS: &str = "iknows";
pub const TRANSIT: &str = "transit";
pub const CHILD: &str = "child";
pub const STATE_PREFIX: &str = "state_";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FactAtom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl FactAtom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        FactAtom {
            predicate: predicate.into(),
            args,
        }
    }

    pub fn iknows(t: Term) -> Self {
        FactAtom::new(IKNOWS, vec![t])
    }

    pub fn transit(from: Term, to: Term, msg: Term) -> Self {
        FactAtom::new(TRANSIT, vec![from, to, msg])
    }

    pub fn is_iknows(&self) -> bool {
        self.predicate == IKNOWS && self.args.len() == 1
    }

    /// State and in-transit facts are consumed by rules; everything else is
    /// persistent or derived.
    pub fn is_linear(&self) -> bool {
        self.predicate.starts_with(STATE_PREFIX) || self.predicate == TRANSIT
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn apply(&self, s: &Substitution) -> FactAtom {
        FactAtom {
            predicate: self.predicate.clone(),
            args: self.args.iter().map(|a| s.apply(a)).collect(),
        }
    }

    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        for a in &self.args {
            for v in a.vars() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    fn map_terms(&self, f: &impl Fn(&Term) -> Term) -> FactAtom {
        FactAtom {
            predicate: self.predicate.clone(),
            args: self.args.iter().map(f).collect(),
        }
    }
}

impl fmt::Display for FactAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// A message-level action of a rule, used to rebuild the attack trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Receive { msg: Term, via_intruder: bool },
    Send { to: Term, msg: Term },
}

impl Event {
    fn map_terms(&self, f: &impl Fn(&Term) -> Term) -> Event {
        match self {
            Event::Receive { msg, via_intruder } => Event::Receive {
                msg: f(msg),
                via_intruder: *via_intruder,
            },
            Event::Send { to, msg } => Event::Send {
                to: f(to),
                msg: f(msg),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionRule {
    pub name: String,
    /// Index into [`TransitionSystem::instances`].
    pub instance: usize,
    pub from_label: usize,
    pub to_label: usize,
    /// True when the rule jumps back to the head of a `while` loop.
    pub back_edge: bool,
    pub consume: Vec<FactAtom>,
    pub forbid: Vec<FactAtom>,
    pub require_eq: Vec<(Term, Term)>,
    pub require_neq: Vec<(Term, Term)>,
    pub fresh_vars: Vec<String>,
    pub produce: Vec<FactAtom>,
    pub events: Vec<Event>,
}

impl TransitionRule {
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut add = |t: &Term| out.extend(t.vars());
        for a in self.consume.iter().chain(&self.forbid).chain(&self.produce) {
            a.args.iter().for_each(&mut add);
        }
        for (l, r) in self.require_eq.iter().chain(&self.require_neq) {
            add(l);
            add(r);
        }
        for e in &self.events {
            match e {
                Event::Receive { msg, .. } => add(msg),
                Event::Send { to, msg } => {
                    add(to);
                    add(msg);
                }
            }
        }
        out.extend(self.fresh_vars.iter().cloned());
        out
    }

    fn map_vars(&self, rename: &impl Fn(&str) -> String) -> TransitionRule {
        let f = |t: &Term| rename_term(t, rename);
        TransitionRule {
            name: self.name.clone(),
            instance: self.instance,
            from_label: self.from_label,
            to_label: self.to_label,
            back_edge: self.back_edge,
            consume: self.consume.iter().map(|a| a.map_terms(&f)).collect(),
            forbid: self.forbid.iter().map(|a| a.map_terms(&f)).collect(),
            require_eq: self.require_eq.iter().map(|(l, r)| (f(l), f(r))).collect(),
            require_neq: self.require_neq.iter().map(|(l, r)| (f(l), f(r))).collect(),
            fresh_vars: self.fresh_vars.iter().map(|v| rename(v)).collect(),
            produce: self.produce.iter().map(|a| a.map_terms(&f)).collect(),
            events: self.events.iter().map(|e| e.map_terms(&f)).collect(),
        }
    }
}

fn rename_term(t: &Term, rename: &impl Fn(&str) -> String) -> Term {
    match t {
        Term::Var(v) => Term::Var(rename(v)),
        Term::Concat(ps) => Term::concat(ps.iter().map(|p| rename_term(p, rename))),
        Term::Apply(f, a) => Term::apply(f.clone(), rename_term(a, rename)),
        Term::Enc(p, k) => Term::enc(rename_term(p, rename), rename_term(k, rename)),
        Term::Const(_) | Term::Wildcard => t.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub iid: usize,
    pub entity: String,
    /// Name used in rendered traces.
    pub display: String,
    pub actor: Option<String>,
    pub parent: Option<usize>,
    pub behavioral: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionSystem {
    pub rules: Vec<TransitionRule>,
    pub initial: BTreeSet<FactAtom>,
    pub horn: Vec<HornClause>,
    pub attack_states: Vec<(String, FactAtom)>,
    pub goals: Vec<Goal>,
    pub instances: Vec<Instance>,
    pub public_functions: BTreeSet<String>,
    /// Constants that occur in intruder-facing patterns; candidate values
    /// for intruder-chosen message parts.
    pub relevant_constants: BTreeSet<String>,
}

impl TransitionSystem {
    /// Trace name for an agent constant: the display name of the instance
    /// it plays, or the intruder.
    pub fn agent_display(&self, t: &Term) -> String {
        if let Term::Const(c) = t {
            if let Some(inst) = self
                .instances
                .iter()
                .find(|i| i.behavioral && i.actor.as_deref() == Some(c))
            {
                return inst.display.clone();
            }
        }
        INTRUDER.to_string()
    }

    pub fn honest_agents(&self) -> BTreeSet<String> {
        self.instances
            .iter()
            .filter(|i| i.behavioral)
            .filter_map(|i| i.actor.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranslationError {
    #[error("entity '{0}' is instantiated but not declared in scope")]
    UnknownEntity(String),
    #[error("entity '{entity}' is instantiated with unknown constant '{name}'")]
    UnknownConstant { entity: String, name: String },
    #[error("entity '{0}' mixes instantiations with behavior")]
    MixedEntity(String),
    #[error("behavioral entity '{0}' has no actor parameter")]
    NoActor(String),
    #[error("receive guards are not allowed in if statements (entity '{0}')")]
    ReceiveInIf(String),
    #[error("'{sender}' never sends to '{receiver}' on a {channel} channel")]
    ChannelNotWritable {
        sender: String,
        receiver: String,
        channel: ChannelKind,
    },
    #[error("wildcards cannot be sent (entity '{0}')")]
    WildcardSent(String),
    #[error("empty while loop in entity '{0}'")]
    EmptyLoop(String),
    #[error("unknown variable '{name}' in entity '{entity}'")]
    UnknownVariable { entity: String, name: String },
}

pub fn dummy(sort: Sort) -> Term {
    Term::Const(format!("dummy_{}", sort.keyword()))
}

pub fn label_term(n: usize) -> Term {
    Term::Const(format!("sl_{n}"))
}

pub fn iid_term(n: usize) -> Term {
    Term::Const(format!("iid_{n}"))
}

fn display_name(entity: &str) -> String {
    if entity == DATABASE_ENTITY {
        "DB".to_string()
    } else {
        entity.to_string()
    }
}

struct InstanceDecl<'a> {
    info: Instance,
    decl: &'a EntityDecl,
    args: BTreeMap<String, String>,
}

/// The parameter naming the agent that plays an entity: `Actor` if
/// declared, otherwise the first parameter.
fn actor_param(e: &EntityDecl) -> Option<&str> {
    if e.params.iter().any(|(n, _)| n == "Actor") {
        Some("Actor")
    } else {
        e.params.first().map(|(n, _)| n.as_str())
    }
}

fn is_behavioral(e: &EntityDecl) -> bool {
    e.body.iter().any(|s| !matches!(s, Statement::New { .. }))
}

fn collect_instances<'a>(
    decl: &'a EntityDecl,
    scope: Vec<&'a EntityDecl>,
    args: BTreeMap<String, String>,
    parent: Option<usize>,
    out: &mut Vec<InstanceDecl<'a>>,
    agents: &BTreeSet<String>,
) -> Result<(), TranslationError> {
    let behavioral = is_behavioral(decl);
    if behavioral && decl.body.iter().any(|s| matches!(s, Statement::New { .. })) {
        return Err(TranslationError::MixedEntity(decl.name.clone()));
    }
    let actor = actor_param(decl).and_then(|p| args.get(p).cloned());
    if behavioral && actor.is_none() {
        return Err(TranslationError::NoActor(decl.name.clone()));
    }
    let iid = out.len();
    out.push(InstanceDecl {
        info: Instance {
            iid,
            entity: decl.name.clone(),
            display: display_name(&decl.name),
            actor,
            parent,
            behavioral,
        },
        decl,
        args: args.clone(),
    });
    if behavioral {
        return Ok(());
    }
    for s in &decl.body {
        let Statement::New {
            entity,
            args: actual,
        } = s
        else {
            unreachable!()
        };
        let child = scope
            .iter()
            .rev()
            .find_map(|e| e.child(entity))
            .ok_or_else(|| TranslationError::UnknownEntity(entity.clone()))?;
        let mut child_args = BTreeMap::new();
        for ((pname, _), a) in child.params.iter().zip(actual) {
            let value = match a {
                Term::Const(c) if agents.contains(c) => c.clone(),
                Term::Var(v) if args.contains_key(v) => args[v].clone(),
                other => {
                    return Err(TranslationError::UnknownConstant {
                        entity: entity.clone(),
                        name: other.to_string(),
                    })
                }
            };
            child_args.insert(pname.clone(), value);
        }
        let mut child_scope = scope.clone();
        child_scope.push(child);
        collect_instances(child, child_scope, child_args, Some(iid), out, agents)?;
    }
    Ok(())
}

/// One frame of a control-flow continuation.
#[derive(Clone, Copy)]
struct Frame<'a> {
    block: &'a [Statement],
    idx: usize,
    is_loop: bool,
}

#[derive(Clone)]
struct Draft {
    consume: Vec<FactAtom>,
    forbid: Vec<FactAtom>,
    eq: Vec<(Term, Term)>,
    neq: Vec<(Term, Term)>,
    fresh: Vec<String>,
    produce: Vec<FactAtom>,
    events: Vec<Event>,
    env: BTreeMap<String, Term>,
    counter: usize,
    received: bool,
    progressed: bool,
}

impl Draft {
    fn fresh_name(&mut self, base: &str) -> String {
        self.counter += 1;
        format!("{base}#{}", self.counter)
    }
}

struct RuleBuilder<'a, 'b> {
    inst: &'b InstanceDecl<'a>,
    locals: Vec<(String, Sort)>,
    labels: HashMap<*const Statement, usize>,
    terminal: usize,
    honest: &'b BTreeSet<String>,
    writes: &'b BTreeSet<(String, String, ChannelKind)>,
    pending: VecDeque<(usize, Vec<Frame<'a>>)>,
    seen: BTreeSet<usize>,
    rules: Vec<TransitionRule>,
}

fn number_statements(
    body: &[Statement],
    next: &mut usize,
    out: &mut HashMap<*const Statement, usize>,
) {
    for s in body {
        out.insert(s as *const Statement, *next);
        *next += 1;
        match s {
            Statement::SelectOn(bs) => bs
                .iter()
                .for_each(|b| number_statements(&b.body, next, out)),
            Statement::IfElse {
                then, otherwise, ..
            } => {
                number_statements(then, next, out);
                number_statements(otherwise, next, out);
            }
            Statement::WhileTrue(b) => number_statements(b, next, out),
            _ => {}
        }
    }
}

impl<'a, 'b> RuleBuilder<'a, 'b> {
    fn entity(&self) -> String {
        self.inst.decl.name.clone()
    }

    /// Normalizes a continuation so that its top frame points at an
    /// executable statement. Returns whether a loop was re-entered.
    fn settle(&self, mut cont: Vec<Frame<'a>>) -> Result<(Vec<Frame<'a>>, bool), TranslationError> {
        let mut wrapped = false;
        loop {
            let Some(top) = cont.last_mut() else {
                return Ok((cont, wrapped));
            };
            if top.idx >= top.block.len() {
                if top.is_loop {
                    if top.block.is_empty() || wrapped {
                        return Err(TranslationError::EmptyLoop(self.entity()));
                    }
                    top.idx = 0;
                    wrapped = true;
                } else {
                    cont.pop();
                }
                continue;
            }
            if let Statement::WhileTrue(body) = &top.block[top.idx] {
                top.idx += 1;
                cont.push(Frame {
                    block: body,
                    idx: 0,
                    is_loop: true,
                });
                continue;
            }
            return Ok((cont, wrapped));
        }
    }

    fn label_of(&self, cont: &[Frame<'a>]) -> usize {
        match cont.last() {
            None => self.terminal,
            Some(f) => self.labels[&(&f.block[f.idx] as *const Statement)],
        }
    }

    fn state_fact(&self, label: usize, locals: Vec<Term>) -> FactAtom {
        let inst = &self.inst;
        let mut args = vec![
            Term::Const(
                inst.info
                    .actor
                    .clone()
                    .expect("behavioral instance has an actor"),
            ),
            iid_term(inst.info.iid),
            label_term(label),
        ];
        let actor_param = actor_param(inst.decl);
        for (p, _) in &inst.decl.params {
            if Some(p.as_str()) != actor_param {
                args.push(Term::Const(inst.args[p].clone()));
            }
        }
        args.extend(locals);
        FactAtom::new(format!("{STATE_PREFIX}{}", inst.decl.name), args)
    }

    fn initial_fact(&self, label: usize) -> FactAtom {
        self.state_fact(label, self.locals.iter().map(|(_, s)| dummy(*s)).collect())
    }

    fn start_draft(&self, label: usize) -> Draft {
        let mut env = BTreeMap::new();
        for (p, _) in &self.inst.decl.params {
            env.insert(p.clone(), Term::Const(self.inst.args[p].clone()));
        }
        for (l, _) in &self.locals {
            env.insert(l.clone(), Term::Var(l.clone()));
        }
        let state = self.state_fact(
            label,
            self.locals
                .iter()
                .map(|(l, _)| Term::Var(l.clone()))
                .collect(),
        );
        Draft {
            consume: vec![state],
            forbid: vec![],
            eq: vec![],
            neq: vec![],
            fresh: vec![],
            produce: vec![],
            events: vec![],
            env,
            counter: 0,
            received: false,
            progressed: false,
        }
    }

    fn subst(&self, d: &Draft, t: &Term) -> Result<Term, TranslationError> {
        Ok(match t {
            Term::Var(v) => match d.env.get(v) {
                Some(x) => x.clone(),
                None => {
                    return Err(TranslationError::UnknownVariable {
                        entity: self.entity(),
                        name: v.clone(),
                    })
                }
            },
            Term::Const(_) | Term::Wildcard => t.clone(),
            Term::Concat(ps) => Term::concat(
                ps.iter()
                    .map(|p| self.subst(d, p))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            Term::Apply(f, a) => Term::apply(f.clone(), self.subst(d, a)?),
            Term::Enc(p, k) => Term::enc(self.subst(d, p)?, self.subst(d, k)?),
        })
    }

    /// Introduces fresh rule variables for the binders of a pattern.
    fn bind_pattern(
        &self,
        d: &mut Draft,
        p: &Pattern,
        wildcards_as_vars: bool,
    ) -> Result<Term, TranslationError> {
        for b in &p.binders {
            let v = d.fresh_name(b);
            d.env.insert(b.clone(), Term::Var(v));
        }
        let t = self.subst(d, &p.term)?;
        if wildcards_as_vars {
            Ok(self.replace_wildcards(d, &t))
        } else {
            Ok(t)
        }
    }

    fn replace_wildcards(&self, d: &mut Draft, t: &Term) -> Term {
        match t {
            Term::Wildcard => Term::Var(d.fresh_name("Any")),
            Term::Concat(ps) => Term::concat(
                ps.iter()
                    .map(|p| self.replace_wildcards(d, p))
                    .collect::<Vec<_>>(),
            ),
            Term::Apply(f, a) => Term::apply(f.clone(), self.replace_wildcards(d, a)),
            Term::Enc(p, k) => {
                Term::enc(self.replace_wildcards(d, p), self.replace_wildcards(d, k))
            }
            _ => t.clone(),
        }
    }

    fn actor(&self) -> Term {
        Term::Const(self.inst.info.actor.clone().unwrap())
    }

    fn apply_receive(&self, d: &mut Draft, r: &Receive) -> Result<(), TranslationError> {
        let sender = match &r.from.term {
            Term::Var(x) if r.from.binders.contains(x) => {
                d.env.insert(x.clone(), Term::constant(INTRUDER));
                Term::constant(INTRUDER)
            }
            Term::Wildcard => Term::constant(INTRUDER),
            other => self.subst(d, other)?,
        };
        let msg = self.bind_pattern(d, &r.msg, true)?;
        let honest = matches!(&sender, Term::Const(c) if self.honest.contains(c));
        if honest && r.channel != ChannelKind::Insecure {
            let Term::Const(s) = &sender else {
                unreachable!()
            };
            let me = self.inst.info.actor.clone().unwrap();
            if !self.writes.contains(&(s.clone(), me.clone(), r.channel)) {
                return Err(TranslationError::ChannelNotWritable {
                    sender: s.clone(),
                    receiver: me,
                    channel: r.channel,
                });
            }
            d.consume
                .push(FactAtom::transit(sender, self.actor(), msg.clone()));
            d.events.push(Event::Receive {
                msg,
                via_intruder: false,
            });
        } else {
            d.consume.push(FactAtom::iknows(msg.clone()));
            d.events.push(Event::Receive {
                msg,
                via_intruder: true,
            });
        }
        d.received = true;
        d.progressed = true;
        Ok(())
    }

    fn apply_guard(
        &self,
        d: &mut Draft,
        g: &Guard,
        positive: bool,
    ) -> Result<(), TranslationError> {
        d.progressed = true;
        match g {
            Guard::Receive(r) => self.apply_receive(d, r),
            Guard::Equality { lhs, rhs } => {
                let l = self.subst(d, lhs)?;
                if positive {
                    let r = self.bind_pattern(d, rhs, false)?;
                    d.eq.push((l, r));
                } else {
                    let r = self.subst(&self.without_binders(d, rhs), &rhs.term)?;
                    d.neq.push((l, r));
                }
                Ok(())
            }
            Guard::Fact {
                predicate,
                arg,
                negated,
            } => {
                if positive != *negated {
                    let a = self.bind_pattern(d, arg, false)?;
                    d.consume.push(FactAtom::new(predicate.clone(), vec![a]));
                } else {
                    let a = self.subst(&self.without_binders(d, arg), &arg.term)?;
                    d.forbid.push(FactAtom::new(predicate.clone(), vec![a]));
                }
                Ok(())
            }
        }
    }

    /// In a negated guard binders bind nothing; they behave as wildcards.
    fn without_binders(&self, d: &Draft, p: &Pattern) -> Draft {
        let mut d = d.clone();
        for b in &p.binders {
            d.env.insert(b.clone(), Term::Wildcard);
        }
        d
    }

    fn apply_send(
        &self,
        d: &mut Draft,
        to: &Term,
        channel: ChannelKind,
        msg: &Term,
    ) -> Result<(), TranslationError> {
        let to = self.subst(d, to)?;
        let msg = self.subst(d, msg)?;
        if msg.contains_wildcard() || to.contains_wildcard() {
            return Err(TranslationError::WildcardSent(self.entity()));
        }
        let honest = matches!(&to, Term::Const(c) if self.honest.contains(c));
        if honest {
            match channel {
                ChannelKind::Secure | ChannelKind::Confidential => d
                    .produce
                    .push(FactAtom::transit(self.actor(), to.clone(), msg.clone())),
                ChannelKind::Authentic => {
                    d.produce
                        .push(FactAtom::transit(self.actor(), to.clone(), msg.clone()));
                    d.produce.push(FactAtom::iknows(msg.clone()));
                }
                ChannelKind::Insecure => d.produce.push(FactAtom::iknows(msg.clone())),
            }
        } else {
            d.produce.push(FactAtom::iknows(msg.clone()));
        }
        d.events.push(Event::Send { to, msg });
        d.progressed = true;
        Ok(())
    }

    fn emit(&mut self, from: usize, mut d: Draft, cont: Vec<Frame<'a>>, back_edge: bool) {
        let to = self.label_of(&cont);
        let locals = self.locals.iter().map(|(l, _)| d.env[l].clone()).collect();
        d.produce.insert(0, self.state_fact(to, locals));
        let alt = self.rules.iter().filter(|r| r.from_label == from).count();
        self.rules.push(TransitionRule {
            name: format!(
                "{}_i{}_sl{}_{}",
                self.inst.decl.name, self.inst.info.iid, from, alt
            ),
            instance: self.inst.info.iid,
            from_label: from,
            to_label: to,
            back_edge,
            consume: d.consume,
            forbid: d.forbid,
            require_eq: d.eq,
            require_neq: d.neq,
            fresh_vars: d.fresh,
            produce: d.produce,
            events: d.events,
        });
        if to != self.terminal && self.seen.insert(to) {
            self.pending.push_back((to, cont));
        }
    }

    fn advance(cont: &[Frame<'a>]) -> Vec<Frame<'a>> {
        let mut c = cont.to_vec();
        c.last_mut().unwrap().idx += 1;
        c
    }

    fn explore(
        &mut self,
        from: usize,
        cont: Vec<Frame<'a>>,
        mut d: Draft,
    ) -> Result<(), TranslationError> {
        let (cont, wrapped) = self.settle(cont)?;
        if wrapped && d.progressed {
            self.emit(from, d, cont, true);
            return Ok(());
        }
        let Some(top) = cont.last() else {
            if d.progressed {
                self.emit(from, d, cont, false);
            }
            return Ok(());
        };
        let stmt: &'a Statement = &top.block[top.idx];
        match stmt {
            Statement::Receive(r) => {
                if d.received {
                    self.emit(from, d, cont, false);
                } else {
                    self.apply_receive(&mut d, r)?;
                    self.explore(from, Self::advance(&cont), d)?;
                }
            }
            Statement::Send { to, channel, msg } => {
                self.apply_send(&mut d, to, *channel, msg)?;
                self.explore(from, Self::advance(&cont), d)?;
            }
            Statement::Assign { var, value } => {
                if !d.env.contains_key(var) {
                    return Err(TranslationError::UnknownVariable {
                        entity: self.entity(),
                        name: var.clone(),
                    });
                }
                let v = match value {
                    AssignValue::Fresh => {
                        let name = d.fresh_name(var);
                        d.fresh.push(name.clone());
                        Term::Var(name)
                    }
                    AssignValue::Term(t) => self.subst(&d, t)?,
                };
                d.env.insert(var.clone(), v);
                d.progressed = true;
                self.explore(from, Self::advance(&cont), d)?;
            }
            Statement::SelectOn(branches) => {
                if d.received
                    && branches
                        .iter()
                        .any(|b| matches!(b.guard, Guard::Receive(_)))
                {
                    self.emit(from, d, cont, false);
                    return Ok(());
                }
                for b in branches {
                    let mut d2 = d.clone();
                    self.apply_guard(&mut d2, &b.guard, true)?;
                    let mut c = Self::advance(&cont);
                    c.push(Frame {
                        block: &b.body,
                        idx: 0,
                        is_loop: false,
                    });
                    self.explore(from, c, d2)?;
                }
            }
            Statement::IfElse {
                guard,
                then,
                otherwise,
            } => {
                if matches!(guard, Guard::Receive(_)) {
                    return Err(TranslationError::ReceiveInIf(self.entity()));
                }
                for (positive, body) in [(true, then), (false, otherwise)] {
                    let mut d2 = d.clone();
                    self.apply_guard(&mut d2, guard, positive)?;
                    let mut c = Self::advance(&cont);
                    c.push(Frame {
                        block: body,
                        idx: 0,
                        is_loop: false,
                    });
                    self.explore(from, c, d2)?;
                }
            }
            Statement::New { .. } => return Err(TranslationError::MixedEntity(self.entity())),
            Statement::WhileTrue(_) => unreachable!("settled"),
        }
        Ok(())
    }

    fn build(mut self) -> Result<(FactAtom, Vec<TransitionRule>), TranslationError> {
        let start = vec![Frame {
            block: &self.inst.decl.body,
            idx: 0,
            is_loop: false,
        }];
        let (start, _) = self.settle(start)?;
        let label = self.label_of(&start);
        self.seen.insert(label);
        self.pending.push_back((label, start));
        while let Some((from, cont)) = self.pending.pop_front() {
            let d = self.start_draft(from);
            self.explore(from, cont, d)?;
        }
        let init = self.initial_fact(label);
        let mut rules = self.rules;
        rules.sort_by_key(|r| r.from_label);
        Ok((init, rules))
    }
}

fn collect_writes(insts: &[InstanceDecl], out: &mut BTreeSet<(String, String, ChannelKind)>) {
    fn walk(
        body: &[Statement],
        inst: &InstanceDecl,
        out: &mut BTreeSet<(String, String, ChannelKind)>,
    ) {
        for s in body {
            match s {
                Statement::Send { to, channel, .. } => {
                    let to = match to {
                        Term::Const(c) => Some(c.clone()),
                        Term::Var(v) => inst.args.get(v).cloned(),
                        _ => None,
                    };
                    if let (Some(to), Some(me)) = (to, &inst.info.actor) {
                        out.insert((me.clone(), to, *channel));
                    }
                }
                Statement::SelectOn(bs) => bs.iter().for_each(|b| walk(&b.body, inst, out)),
                Statement::IfElse {
                    then, otherwise, ..
                } => {
                    walk(then, inst, out);
                    walk(otherwise, inst, out);
                }
                Statement::WhileTrue(b) => walk(b, inst, out),
                _ => {}
            }
        }
    }
    for i in insts.iter().filter(|i| i.info.behavioral) {
        walk(&i.decl.body, i, out);
    }
}

/// Compiles a validated specification.
pub fn translate(ast: &SpecAst) -> Result<TransitionSystem, TranslationError> {
    let mut public_values = BTreeSet::new();
    let mut agents = BTreeSet::new();
    let mut public_functions = BTreeSet::new();
    ast.root.walk(&mut |e| {
        for s in &e.symbols {
            match &s.kind {
                SymbolKind::Value(sort) if !s.is_variable() => {
                    if *sort == Sort::Agent {
                        agents.insert(s.name.clone());
                    }
                    if s.public {
                        public_values.insert(s.name.clone());
                    }
                }
                SymbolKind::Function { ret, .. } if s.public && *ret != Sort::Fact => {
                    public_functions.insert(s.name.clone());
                }
                _ => {}
            }
        }
    });
    public_values.insert(SQLI.to_string());
    agents.insert(INTRUDER.to_string());

    let mut insts = Vec::new();
    collect_instances(
        &ast.root,
        vec![&ast.root],
        BTreeMap::new(),
        None,
        &mut insts,
        &agents,
    )?;
    let honest: BTreeSet<String> = insts
        .iter()
        .filter(|i| i.info.behavioral)
        .filter_map(|i| i.info.actor.clone())
        .collect();
    let mut writes = BTreeSet::new();
    collect_writes(&insts, &mut writes);

    let mut initial = BTreeSet::new();
    let mut rules = Vec::new();
    for inst in &insts {
        if let Some(p) = inst.info.parent {
            initial.insert(FactAtom::new(
                CHILD,
                vec![iid_term(inst.info.iid), iid_term(p)],
            ));
        }
        if !inst.info.behavioral {
            continue;
        }
        let mut labels = HashMap::new();
        let mut next = 0;
        number_statements(&inst.decl.body, &mut next, &mut labels);
        let locals = inst
            .decl
            .symbols
            .iter()
            .filter(|s| s.is_variable())
            .map(|s| match s.kind {
                SymbolKind::Value(sort) => (s.name.clone(), sort),
                _ => unreachable!(),
            })
            .collect();
        let builder = RuleBuilder {
            inst,
            locals,
            labels,
            terminal: next,
            honest: &honest,
            writes: &writes,
            pending: VecDeque::new(),
            seen: BTreeSet::new(),
            rules: Vec::new(),
        };
        let (init, inst_rules) = builder.build()?;
        initial.insert(init);
        rules.extend(inst_rules);
    }
    for c in public_values.iter().chain(&agents) {
        initial.insert(FactAtom::iknows(Term::constant(c.clone())));
    }

    let mut relevant = BTreeSet::new();
    relevant.insert(SQLI.to_string());
    for r in &rules {
        for a in r.consume.iter().filter(|a| a.is_iknows()) {
            relevant.extend(a.args[0].constants());
        }
        for (_, p) in &r.require_eq {
            relevant.extend(p.constants());
        }
    }

    let ts = TransitionSystem {
        rules,
        initial,
        horn: ast.horn_clauses.clone(),
        attack_states: ast
            .goals
            .iter()
            .map(|g| (g.name.clone(), FactAtom::iknows(g.forbidden.clone())))
            .collect(),
        goals: ast.goals.clone(),
        instances: insts.into_iter().map(|i| i.info).collect(),
        public_functions,
        relevant_constants: relevant,
    };
    Ok(rename_apart(&ts))
}

fn strip_rule_suffix(v: &str) -> &str {
    if let Some(pos) = v.rfind("_r") {
        let digits = &v[pos + 2..];
        if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
            return &v[..pos];
        }
    }
    v
}

/// The name a variable had in the source model, without rule-local
/// decorations.
pub fn base_name(v: &str) -> &str {
    let v = strip_rule_suffix(v);
    v.split('#').next().unwrap_or(v)
}

/// Makes the variables of distinct rules disjoint by suffixing each with
/// `_r<rule index>`. Idempotent.
pub fn rename_apart(ts: &TransitionSystem) -> TransitionSystem {
    let mut out = ts.clone();
    out.rules = ts
        .rules
        .iter()
        .enumerate()
        .map(|(i, r)| r.map_vars(&|v: &str| format!("{}_r{i}", strip_rule_suffix(v))))
        .collect();
    out
}

fn atoms_text(atoms: &[FactAtom]) -> String {
    atoms
        .iter()
        .map(|a| a.to_string())
        .collect::<Vec<_>>()
        .join(" . ")
}

/// Structured text dump: one block per rule with LHS/NEG/COND/FRESH/RHS
/// sections, followed by the initial state and attack states.
pub fn emit_ts(ts: &TransitionSystem) -> String {
    let mut out = String::new();
    for r in &ts.rules {
        out.push_str(&format!("rule {}\n", r.name));
        out.push_str(&format!("  LHS: {}\n", atoms_text(&r.consume)));
        out.push_str(&format!("  NEG: {}\n", atoms_text(&r.forbid)));
        let conds: Vec<String> = r
            .require_eq
            .iter()
            .map(|(l, p)| format!("{l} = {p}"))
            .chain(r.require_neq.iter().map(|(l, p)| format!("{l} != {p}")))
            .collect();
        out.push_str(&format!("  COND: {}\n", conds.join(" & ")));
        out.push_str(&format!("  FRESH: {}\n", r.fresh_vars.join(", ")));
        out.push_str(&format!("  RHS: {}\n", atoms_text(&r.produce)));
        out.push('\n');
    }
    out.push_str("initial\n");
    for f in &ts.initial {
        out.push_str(&format!("  {f}\n"));
    }
    out.push_str("attack_states\n");
    for (g, f) in &ts.attack_states {
        out.push_str(&format!("  {g}: {f}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::spec::parse_spec;

    fn ts_of(src: &str) -> TransitionSystem {
        translate(&parse_spec(src).unwrap()).unwrap()
    }

    #[test]
    fn initial_knowledge() {
        let ts = ts_of(fixtures::YAVWA);
        assert!(ts.initial.contains(&FactAtom::iknows(Term::sqli())));
        assert!(ts
            .initial
            .contains(&FactAtom::iknows(Term::constant("webapp"))));
        assert!(ts
            .initial
            .contains(&FactAtom::iknows(Term::constant(INTRUDER))));
        assert!(!ts
            .initial
            .contains(&FactAtom::iknows(Term::constant("secureFolder"))));
        assert!(!ts
            .initial
            .contains(&FactAtom::iknows(Term::constant("dashboard"))));
        assert_eq!(
            ts.attack_states,
            vec![(
                "secureFolder".into(),
                FactAtom::iknows(Term::constant("secureFolder"))
            )]
        );
    }

    #[test]
    fn database_rules() {
        let ts = ts_of(fixtures::YAVWA);
        let db: Vec<_> = ts
            .rules
            .iter()
            .filter(|r| r.name.starts_with("Database"))
            .collect();
        assert_eq!(db.len(), 3);
        assert!(db.iter().all(|r| r.back_edge && r.from_label == r.to_label));
        let sanitized = &db[0];
        assert_eq!(sanitized.require_eq.len(), 1);
        assert_eq!(
            sanitized.require_eq[0].1,
            Term::apply("tuple", Term::Wildcard)
        );
        let positive = &db[1];
        assert!(positive.consume.iter().any(|a| a.predicate == "inDB"));
        let negative = &db[2];
        assert_eq!(negative.forbid.len(), 1);
        assert_eq!(negative.forbid[0].predicate, "inDB");
    }

    #[test]
    fn assignment_rule() {
        let src = fixtures::YAVWA.replace(
            "?IP ->* Actor: ?Username.?Password;",
            "Username := dashboard; ?IP ->* Actor: ?Password;",
        );
        let ts = ts_of(&src);
        let first = &ts.rules[0];
        assert_eq!(first.from_label, 0);
        let state_in = &first.consume[0];
        let state_out = &first.produce[0];
        assert_eq!(state_in.predicate, "state_WebApp");
        assert!(state_out.args.contains(&Term::constant("dashboard")));
    }

    #[test]
    fn secure_channel_stays_private() {
        for (name, src) in fixtures::ALL {
            let ts = ts_of(src);
            for r in &ts.rules {
                for e in &r.events {
                    if let Event::Send {
                        to: Term::Const(c),
                        msg,
                    } = e
                    {
                        if ts.honest_agents().contains(c) {
                            assert!(
                                !r.produce.contains(&FactAtom::iknows(msg.clone())),
                                "{name}: {} leaks {msg}",
                                r.name
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn well_formed_and_labels_monotone() {
        for (name, src) in fixtures::ALL {
            let ts = ts_of(src);
            for r in &ts.rules {
                let mut bound: BTreeSet<String> = r.consume.iter().flat_map(|a| a.vars()).collect();
                for (l, p) in &r.require_eq {
                    bound.extend(l.vars());
                    bound.extend(p.vars());
                }
                bound.extend(r.fresh_vars.iter().cloned());
                for a in &r.produce {
                    for v in a.vars() {
                        assert!(
                            bound.contains(&v),
                            "{name}: {} produces unbound {v}",
                            r.name
                        );
                    }
                }
                if r.back_edge {
                    assert!(r.to_label <= r.from_label);
                } else {
                    assert!(r.to_label > r.from_label, "{name}: {}", r.name);
                }
                assert_eq!(r.produce[0].args[2], label_term(r.to_label));
                assert_eq!(r.consume[0].args[2], label_term(r.from_label));
            }
        }
    }

    #[test]
    fn rename_apart_disjoint_and_idempotent() {
        let ts = ts_of(fixtures::YAVWA);
        let total: usize = ts.rules.iter().map(|r| r.vars().len()).sum();
        let all: BTreeSet<String> = ts.rules.iter().flat_map(|r| r.vars()).collect();
        assert_eq!(all.len(), total);
        assert_eq!(rename_apart(&ts), ts);
        assert_eq!(base_name("Username#3_r12"), "Username");
    }

    #[test]
    fn deterministic() {
        for (_, src) in fixtures::ALL {
            assert_eq!(emit_ts(&ts_of(src)), emit_ts(&ts_of(src)));
        }
    }

    #[test]
    fn unwritable_channel() {
        let src = fixtures::YAVWA.replace(
            "on(Database *->* Actor: no_tuple.?NonceDB):{",
            "on(Database *-> Actor: no_tuple.?NonceDB):{",
        );
        let err = translate(&parse_spec(&src).unwrap()).unwrap_err();
        assert!(matches!(err, TranslationError::ChannelNotWritable { .. }));
    }
}
