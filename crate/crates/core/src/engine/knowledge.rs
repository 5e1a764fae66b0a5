//! Intruder knowledge and Horn-clause closure of a state.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};

use super::SystemState;
use crate::spec::HornClause;
use crate::term::{match_term, match_with, Substitution, Term};
use crate::translate::FactAtom;

/// Forward-chaining rounds for clauses with a body.
const MAX_CHAIN_ROUNDS: usize = 32;

/// Decomposition closure of a set of messages: concatenations are split and
/// encryptions opened when their key is derivable.
pub fn analyze(
    msgs: impl IntoIterator<Item = Term>,
    public_functions: &BTreeSet<String>,
) -> BTreeSet<Term> {
    let mut known: BTreeSet<Term> = BTreeSet::new();
    let mut todo: Vec<Term> = msgs.into_iter().collect();
    let mut sealed: Vec<Term> = Vec::new();
    loop {
        while let Some(t) = todo.pop() {
            if !known.insert(t.clone()) {
                continue;
            }
            match &t {
                Term::Concat(parts) => todo.extend(parts.iter().cloned()),
                Term::Enc(..) => sealed.push(t.clone()),
                _ => {}
            }
        }
        let mut opened = false;
        sealed.retain(|t| {
            let Term::Enc(p, k) = t else { unreachable!() };
            if compose(
                k,
                &known,
                public_functions,
                &BTreeSet::new(),
                &mut HashMap::new(),
            ) {
                todo.push((**p).clone());
                opened = true;
                false
            } else {
                true
            }
        });
        if !opened {
            return known;
        }
    }
}

/// Composition check: `t` is known, or built from derivable pieces with
/// concatenation, encryption, or a public function.
pub fn compose(
    t: &Term,
    known: &BTreeSet<Term>,
    public_functions: &BTreeSet<String>,
    extra: &BTreeSet<Term>,
    memo: &mut HashMap<Term, bool>,
) -> bool {
    if known.contains(t) || extra.contains(t) {
        return true;
    }
    if let Some(&r) = memo.get(t) {
        return r;
    }
    let r = match t {
        Term::Concat(parts) => parts
            .iter()
            .all(|p| compose(p, known, public_functions, extra, memo)),
        Term::Apply(f, a) => {
            public_functions.contains(f) && compose(a, known, public_functions, extra, memo)
        }
        Term::Enc(p, k) => {
            compose(p, known, public_functions, extra, memo)
                && compose(k, known, public_functions, extra, memo)
        }
        _ => false,
    };
    memo.insert(t.clone(), r);
    r
}

/// Evaluates body-less clauses as schemas: `pred(t)` holds iff `t` is an
/// instance of the clause head. With `loose`, a head ending in a constant
/// also accepts that constant at any position of a concatenation.
pub fn schema_holds(horn: &[HornClause], predicate: &str, t: &Term, loose: bool) -> bool {
    horn.iter()
        .filter(|c| c.body.is_empty() && c.head.predicate == predicate)
        .any(|c| {
            if match_term(&c.head.arg, t).is_some() {
                return true;
            }
            if loose {
                if let (Term::Concat(hp), Term::Concat(tp)) = (&c.head.arg, t) {
                    if let Some(last @ Term::Const(_)) = hp.last() {
                        return tp.contains(last);
                    }
                }
            }
            false
        })
}

/// Read-only view of a state with its knowledge and derived facts.
pub struct StateView<'a> {
    pub state: &'a SystemState,
    horn: &'a [HornClause],
    public_functions: &'a BTreeSet<String>,
    known: BTreeSet<Term>,
    derived: BTreeSet<FactAtom>,
    loose: bool,
    memo: RefCell<HashMap<Term, bool>>,
}

impl<'a> StateView<'a> {
    pub fn new(
        state: &'a SystemState,
        horn: &'a [HornClause],
        public_functions: &'a BTreeSet<String>,
        loose: bool,
    ) -> Self {
        let mut msgs: Vec<Term> = state
            .facts
            .iter()
            .filter(|f| f.is_iknows())
            .map(|f| f.args[0].clone())
            .collect();
        let mut known = analyze(msgs.iter().cloned(), public_functions);
        let mut derived = BTreeSet::new();
        if horn.iter().any(|c| !c.body.is_empty()) {
            for _ in 0..MAX_CHAIN_ROUNDS {
                let new = chain_round(state, horn, &known, &derived, loose);
                if new.is_empty() {
                    break;
                }
                let mut grew = false;
                for f in new {
                    if f.is_iknows() {
                        msgs.push(f.args[0].clone());
                        grew = true;
                    }
                    derived.insert(f);
                }
                if grew {
                    known = analyze(msgs.iter().cloned(), public_functions);
                }
            }
        }
        StateView {
            state,
            horn,
            public_functions,
            known,
            derived,
            loose,
            memo: RefCell::new(HashMap::new()),
        }
    }

    /// The decomposition closure of the intruder's messages.
    pub fn known(&self) -> &BTreeSet<Term> {
        &self.known
    }

    pub fn derivable(&self, t: &Term) -> bool {
        compose(
            t,
            &self.known,
            self.public_functions,
            &BTreeSet::new(),
            &mut self.memo.borrow_mut(),
        )
    }

    /// Derivability with extra atoms the intruder is about to invent.
    pub fn derivable_with(&self, t: &Term, extra: &BTreeSet<Term>) -> bool {
        if extra.is_empty() {
            return self.derivable(t);
        }
        compose(
            t,
            &self.known,
            self.public_functions,
            extra,
            &mut HashMap::new(),
        )
    }

    /// Truth of a ground non-intruder fact: state facts, chained facts and
    /// schema clauses.
    pub fn holds(&self, atom: &FactAtom) -> bool {
        if atom.is_iknows() {
            return self.derivable(&atom.args[0]);
        }
        if self.state.facts.contains(atom) || self.derived.contains(atom) {
            return true;
        }
        atom.args.len() == 1 && schema_holds(self.horn, &atom.predicate, &atom.args[0], self.loose)
    }

    /// Facts available for matching non-ground atoms.
    pub fn facts(&self) -> impl Iterator<Item = &FactAtom> {
        self.state.facts.iter().chain(self.derived.iter())
    }

    /// Materialized closure: state facts, decomposed knowledge and chained
    /// facts. Schema clauses are not enumerated.
    pub fn closure(&self) -> BTreeSet<FactAtom> {
        let mut out: BTreeSet<FactAtom> = self
            .state
            .facts
            .iter()
            .filter(|f| !f.is_iknows())
            .cloned()
            .collect();
        out.extend(self.known.iter().map(|t| FactAtom::iknows(t.clone())));
        out.extend(self.derived.iter().cloned());
        out
    }

    pub fn loose(&self) -> bool {
        self.loose
    }
}

/// All substitutions under which every atom of `body` holds, matching
/// against state facts, knowledge and already derived facts.
fn body_matches(
    body: &[crate::spec::Atom],
    state: &SystemState,
    horn: &[HornClause],
    known: &BTreeSet<Term>,
    derived: &BTreeSet<FactAtom>,
    loose: bool,
) -> Vec<Substitution> {
    let mut subs = vec![Substitution::new()];
    for atom in body {
        let mut next = Vec::new();
        for s in &subs {
            let pat = s.apply(&atom.arg);
            if pat.is_ground() {
                let fact = FactAtom::new(atom.predicate.clone(), vec![pat.clone()]);
                let ok = if fact.is_iknows() {
                    known.contains(&pat)
                } else {
                    state.facts.contains(&fact)
                        || derived.contains(&fact)
                        || schema_holds(horn, &atom.predicate, &pat, loose)
                };
                if ok {
                    next.push(s.clone());
                }
                continue;
            }
            if atom.predicate == crate::translate::IKNOWS {
                for k in known {
                    if let Some(s2) = match_with(&atom.arg, k, s) {
                        next.push(s2);
                    }
                }
            } else {
                for f in state.facts.iter().chain(derived) {
                    if f.predicate == atom.predicate && f.args.len() == 1 {
                        if let Some(s2) = match_with(&atom.arg, &f.args[0], s) {
                            next.push(s2);
                        }
                    }
                }
            }
        }
        subs = next;
    }
    subs
}

fn chain_round(
    state: &SystemState,
    horn: &[HornClause],
    known: &BTreeSet<Term>,
    derived: &BTreeSet<FactAtom>,
    loose: bool,
) -> Vec<FactAtom> {
    let mut out = Vec::new();
    for c in horn.iter().filter(|c| !c.body.is_empty()) {
        for s in body_matches(&c.body, state, horn, known, derived, loose) {
            let head = s.apply(&c.head.arg);
            if !head.is_ground() {
                continue;
            }
            let fact = FactAtom::new(c.head.predicate.clone(), vec![head]);
            let present = if fact.is_iknows() {
                known.contains(&fact.args[0])
            } else {
                derived.contains(&fact)
            };
            if !present && !out.contains(&fact) {
                out.push(fact);
            }
        }
    }
    out
}
