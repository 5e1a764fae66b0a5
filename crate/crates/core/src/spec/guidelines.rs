use std::fmt;

use super::ast::*;
use super::database::DATABASE_ENTITY;
use crate::term::Term;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub entity: String,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "warning: entity {}: {}", self.entity, self.message)
    }
}

/// Checks the web-app modeling guidelines: extracted tuples must be
/// forwarded to the client, and queries must carry client-supplied data.
pub fn validate_webapp_model(spec: &SpecAst) -> Vec<Warning> {
    let mut out = Vec::new();
    spec.root.walk(&mut |e| {
        if e.name != DATABASE_ENTITY {
            check_block(e, &e.body, &mut out);
        }
    });
    out
}

fn tuple_args(t: &Term) -> Vec<Term> {
    let mut found = Vec::new();
    t.visit(&mut |s| {
        if let Term::Apply(f, arg) = s {
            if f == "tuple" {
                found.push((**arg).clone());
            }
        }
    });
    found
}

fn received_tuples(g: &Guard) -> Option<(Term, Vec<Term>)> {
    match g {
        Guard::Receive(r) => {
            let ts = tuple_args(&r.msg.term);
            (!ts.is_empty()).then(|| (r.from.term.clone(), ts))
        }
        _ => None,
    }
}

fn check_block(e: &EntityDecl, body: &[Statement], out: &mut Vec<Warning>) {
    let mut pending: Option<(Term, Vec<Term>)> = None;
    for s in body {
        match s {
            Statement::Receive(r) => {
                if let Some(p) = received_tuples(&Guard::Receive(r.clone())) {
                    pending = Some(p);
                }
            }
            Statement::Send { to, msg, .. } => {
                check_query(e, msg, out);
                if let Some((db, tuples)) = &pending {
                    if to != db {
                        forwarded(e, msg, tuples, out);
                        pending = None;
                    }
                }
            }
            Statement::SelectOn(branches) => {
                for b in branches {
                    branch(e, &b.guard, &b.body, out);
                }
            }
            Statement::IfElse {
                guard,
                then,
                otherwise,
            } => {
                branch(e, guard, then, out);
                check_block(e, otherwise, out);
            }
            Statement::WhileTrue(b) => check_block(e, b, out),
            Statement::Assign { .. } | Statement::New { .. } => {}
        }
    }
}

fn branch(e: &EntityDecl, guard: &Guard, body: &[Statement], out: &mut Vec<Warning>) {
    if let Some((db, tuples)) = received_tuples(guard) {
        let mut guarded = vec![Statement::Receive(Receive {
            from: Pattern::ground(db),
            channel: ChannelKind::Secure,
            msg: Pattern::ground(Term::concat(
                tuples.into_iter().map(|t| Term::apply("tuple", t)),
            )),
        })];
        guarded.extend(body.iter().cloned());
        check_block(e, &guarded, out);
    } else {
        check_block(e, body, out);
    }
}

fn forwarded(e: &EntityDecl, msg: &Term, tuples: &[Term], out: &mut Vec<Warning>) {
    let sent = tuple_args(msg);
    for t in tuples {
        if !sent.contains(t) {
            out.push(Warning {
                entity: e.name.clone(),
                message: format!(
                    "response '{msg}' does not forward tuple({t}) received from the database"
                ),
            });
        }
    }
}

fn check_query(e: &EntityDecl, msg: &Term, out: &mut Vec<Warning>) {
    msg.visit(&mut |s| {
        if let Term::Apply(f, arg) = s {
            if (f == "query" || f == "sanitizedQuery") && arg.vars().is_empty() && !arg.contains_wildcard() {
                out.push(Warning {
                    entity: e.name.clone(),
                    message: format!("{f}({arg}) is built from constants only; the database will always reply no_tuple"),
                });
            }
        }
    });
}
