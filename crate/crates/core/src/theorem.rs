//! Exhaustive check of the database entity's behavior: a raw query carrying
//! the payload is answered with its tuple, a sanitized one is never answered
//! with data.

use std::collections::BTreeSet;
use std::fmt;

use crate::engine::{applicable, view, SystemState};
use crate::spec::parse_spec;
use crate::term::Term;
use crate::trace::{QUERY, TUPLE};
use crate::translate::{translate, Event, FactAtom, TransitionSystem};

pub const SANITIZED_QUERY: &str = "sanitizedQuery";
pub const NO_TUPLE: &str = "no_tuple";
pub const DEFAULT_THEOREM_DEPTH: usize = 3;

/// A model holding only the builtin database, driven by the intruder.
const HARNESS: &str = "specification DatabaseHarness
channel_model CCM
entity Environment {
 symbols
  webapp, database: agent;
  nonpublic inDB(message): fact;
  nonpublic sanitizedQuery(message): message;
  nonpublic query(message): message;
  nonpublic tuple(message): message;
  nonpublic no_tuple: text;
  sqli: text;
 clauses
  db_hc_ev(M): inDB(M.sqli);
 goals
  leak: [](!(iknows(tuple(?))));
 body { new Database(webapp, database); }
}
";

const ATOMS: [&str; 3] = ["a", "b", "c"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TheoremReport {
    pub depth: usize,
    /// Queries ending in the payload.
    pub queries: usize,
    /// Payload-free queries checked as a control.
    pub controls: usize,
    pub counterexamples: Vec<String>,
}

impl fmt::Display for TheoremReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "depth: {}", self.depth)?;
        writeln!(f, "injected queries: {}", self.queries)?;
        writeln!(f, "control queries: {}", self.controls)?;
        writeln!(f, "counterexamples: {}", self.counterexamples.len())?;
        for c in &self.counterexamples {
            writeln!(f, "  {c}")?;
        }
        Ok(())
    }
}

/// Ground terms over three constants and `sqli`, closed `depth - 1` times
/// under `tuple` and binary concatenation.
pub fn query_universe(depth: usize) -> BTreeSet<Term> {
    let mut u: BTreeSet<Term> = ATOMS.iter().map(|a| Term::constant(*a)).collect();
    u.insert(Term::sqli());
    for _ in 1..depth {
        let prev: Vec<Term> = u.iter().cloned().collect();
        for x in &prev {
            u.insert(Term::apply(TUPLE, x.clone()));
            for y in &prev {
                u.insert(Term::concat([x.clone(), y.clone()]));
            }
        }
    }
    u
}

fn harness() -> TransitionSystem {
    let spec = parse_spec(HARNESS).expect("database harness parses");
    translate(&spec).expect("database harness translates")
}

/// Messages the database sends after receiving `wrapper(q)` from the
/// intruder, one set per possible firing.
pub fn database_responses(ts: &TransitionSystem, wrapper: &str, q: &Term) -> Vec<BTreeSet<Term>> {
    let mut state = SystemState::initial(ts);
    let msg = Term::concat([Term::constant("nq"), Term::apply(wrapper, q.clone())]);
    state.facts.insert(FactAtom::iknows(msg));
    let v = view(ts, &state, false);
    let mut out = Vec::new();
    for rule in &ts.rules {
        for f in applicable(&v, ts, rule) {
            let received = rule.events.iter().any(|e| match e {
                Event::Receive { msg, .. } => {
                    let m = f.subst.apply(msg);
                    m.parts()
                        .iter()
                        .any(|p| *p == Term::apply(wrapper, q.clone()))
                }
                _ => false,
            });
            if !received {
                continue;
            }
            let sent = rule
                .events
                .iter()
                .filter_map(|e| match e {
                    Event::Send { msg, .. } => Some(f.subst.apply(msg)),
                    _ => None,
                })
                .collect();
            out.push(sent);
        }
    }
    out
}

fn carries(resp: &BTreeSet<Term>, t: &Term) -> bool {
    resp.iter().any(|m| m.parts().contains(t))
}

/// Drives the builtin database with every query of the universe.
pub fn verify_db_theorem(depth: usize) -> TheoremReport {
    let ts = harness();
    let mut report = TheoremReport {
        depth,
        queries: 0,
        controls: 0,
        counterexamples: vec![],
    };
    let sqli = Term::sqli();
    let no_tuple = Term::constant(NO_TUPLE);
    for q in query_universe(depth) {
        let tuple = Term::apply(TUPLE, q.clone());
        let raw = database_responses(&ts, QUERY, &q);
        let sanitized = database_responses(&ts, SANITIZED_QUERY, &q);
        let injected = matches!(q, Term::Concat(_)) && q.ends_with_sqli();
        if injected {
            report.queries += 1;
            if raw.is_empty()
                || !raw
                    .iter()
                    .all(|r| carries(r, &tuple) && !carries(r, &no_tuple))
            {
                report
                    .counterexamples
                    .push(format!("query({q}) is not answered with {tuple}"));
            }
            if !sanitized.is_empty() {
                report
                    .counterexamples
                    .push(format!("{SANITIZED_QUERY}({q}) is answered"));
            }
        } else if !crate::term::is_submessage(&sqli, &q) {
            report.controls += 1;
            if raw.is_empty()
                || raw
                    .iter()
                    .any(|r| carries(r, &tuple) || !carries(r, &no_tuple))
            {
                report.counterexamples.push(format!(
                    "query({q}) without payload is not answered with {NO_TUPLE}"
                ));
            }
            let is_tuple = matches!(&q, Term::Apply(f, _) if f == TUPLE);
            let ok = if is_tuple {
                !sanitized.is_empty() && sanitized.iter().all(|r| carries(r, &no_tuple))
            } else {
                sanitized.is_empty()
            };
            if !ok {
                report
                    .counterexamples
                    .push(format!("{SANITIZED_QUERY}({q}) answered unexpectedly"));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(n: &str) -> Term {
        Term::constant(n)
    }

    #[test]
    fn raw_injected_query_yields_tuple() {
        let ts = harness();
        let q = Term::concat([c("u"), Term::sqli()]);
        let r = database_responses(&ts, QUERY, &q);
        assert!(!r.is_empty());
        assert!(r.iter().all(|x| carries(x, &Term::apply(TUPLE, q.clone()))));
    }

    #[test]
    fn sanitized_tuple_yields_no_tuple() {
        let ts = harness();
        let r = database_responses(&ts, SANITIZED_QUERY, &Term::apply(TUPLE, c("u")));
        assert!(!r.is_empty());
        assert!(r.iter().all(|x| carries(x, &c(NO_TUPLE))));
    }

    #[test]
    fn universe_contents() {
        let u = query_universe(1);
        assert_eq!(u.len(), 4);
        let u = query_universe(2);
        assert_eq!(u.len(), 4 + 4 + 16);
        assert!(u.iter().all(|t| t.depth() <= 2));
    }

    #[test]
    fn depth_two_has_no_counterexample() {
        let r = verify_db_theorem(2);
        assert!(r.counterexamples.is_empty(), "{r}");
        assert!(r.queries > 0 && r.controls > 0);
    }
}
