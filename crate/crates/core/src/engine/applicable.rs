//! Rule applicability and rule firing.

use std::collections::BTreeSet;

use super::knowledge::StateView;
use super::SystemState;
use crate::term::{match_with, term_order, Substitution, Term, SQLI};
use crate::translate::{base_name, FactAtom, TransitionRule, TransitionSystem};

/// A way to fire a rule: the substitution plus the atoms the intruder
/// invented for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Firing {
    pub subst: Substitution,
    pub new_atoms: Vec<Term>,
}

#[derive(Clone)]
struct Partial {
    subst: Substitution,
    atoms: Vec<Term>,
}

struct Synth<'a, 'v> {
    view: &'a StateView<'v>,
    ts: &'a TransitionSystem,
    counter: usize,
}

impl Synth<'_, '_> {
    fn derivable(&self, t: &Term, p: &Partial) -> bool {
        let extra: BTreeSet<Term> = p.atoms.iter().cloned().collect();
        self.view.derivable_with(t, &extra)
    }

    /// Candidate values for an intruder-chosen variable.
    fn candidates(&self, var: &str, p: &Partial, allow_concat: bool) -> Vec<(Term, bool)> {
        let atom = Term::Const(format!(
            "{}_{}",
            base_name(var),
            self.counter + p.atoms.len()
        ));
        let mut base: Vec<(Term, bool)> = vec![(atom, true)];
        for c in &self.ts.relevant_constants {
            let t = Term::constant(c.clone());
            if self.view.derivable(&t) {
                base.push((t, false));
            }
        }
        for k in self.view.known() {
            if !k.is_atomic() && (allow_concat || !matches!(k, Term::Concat(_))) {
                base.push((k.clone(), false));
            }
        }
        let mut out = base.clone();
        if allow_concat {
            for (t, fresh) in base {
                if !t.ends_with_sqli() && t != Term::sqli() {
                    out.push((Term::concat([t, Term::constant(SQLI)]), fresh));
                }
            }
        }
        out
    }

    fn bind(&self, var: &str, value: Term, fresh: bool, p: &Partial) -> Partial {
        let mut q = p.clone();
        if fresh {
            let atom = match &value {
                Term::Concat(parts) => parts[0].clone(),
                other => other.clone(),
            };
            q.atoms.push(atom);
        }
        q.subst.bind(var.to_string(), value);
        q
    }

    fn var_choices(&self, var: &str, p: &Partial, allow_concat: bool) -> Vec<Partial> {
        self.candidates(var, p, allow_concat)
            .into_iter()
            .map(|(t, fresh)| self.bind(var, t, fresh, p))
            .collect()
    }

    /// All extensions of `p` making `pat` ground and derivable.
    fn synth(&self, pat: &Term, p: &Partial) -> Vec<Partial> {
        let inst = p.subst.apply(pat);
        if inst.is_ground() {
            return if self.derivable(&inst, p) {
                vec![p.clone()]
            } else {
                vec![]
            };
        }
        let mut out = Vec::new();
        for k in self.view.known() {
            if let Some(s) = match_with(&inst, k, &p.subst) {
                out.push(Partial {
                    subst: s,
                    atoms: p.atoms.clone(),
                });
            }
        }
        match &inst {
            Term::Var(v) => out.extend(self.var_choices(v, p, true)),
            Term::Concat(parts) => {
                let absorb = parts.iter().rposition(|x| matches!(x, Term::Var(_)));
                let mut states = vec![p.clone()];
                for (i, part) in parts.iter().enumerate() {
                    let mut next = Vec::new();
                    for s in &states {
                        match s.subst.apply(part) {
                            Term::Var(v) => next.extend(self.var_choices(&v, s, Some(i) == absorb)),
                            other => next.extend(self.synth(&other, s)),
                        }
                    }
                    states = next;
                    if states.is_empty() {
                        break;
                    }
                }
                out.extend(states);
            }
            Term::Apply(f, a) if self.ts.public_functions.contains(f) => {
                out.extend(self.synth(a, p))
            }
            Term::Enc(m, k) => {
                for s in self.synth(m, p) {
                    out.extend(self.synth(k, &s));
                }
            }
            _ => {}
        }
        out
    }
}

fn match_fact(pattern: &FactAtom, fact: &FactAtom, s: &Substitution) -> Option<Substitution> {
    if pattern.predicate != fact.predicate || pattern.args.len() != fact.args.len() {
        return None;
    }
    let mut s = s.clone();
    for (p, t) in pattern.args.iter().zip(&fact.args) {
        s = match_with(p, t, &s)?;
    }
    Some(s)
}

/// Orders substitutions by their values, ignoring fresh variables whose
/// names depend on how many atoms the intruder invented.
fn range_cmp(a: &Substitution, b: &Substitution, fresh: &[String]) -> std::cmp::Ordering {
    let chosen = |s: &Substitution| -> Vec<Term> {
        s.iter()
            .filter(|(v, _)| !fresh.contains(v))
            .map(|(_, t)| t.clone())
            .collect()
    };
    let (ra, rb) = (chosen(a), chosen(b));
    for (x, y) in ra.iter().zip(&rb) {
        let o = term_order(x, y);
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    ra.len().cmp(&rb.len())
}

/// Every way `rule` can fire in the viewed state, deterministically
/// ordered by the terms of the substitution.
pub fn applicable(view: &StateView, ts: &TransitionSystem, rule: &TransitionRule) -> Vec<Firing> {
    let synth = Synth {
        view,
        ts,
        counter: view.state.fresh_counter,
    };
    let mut partials = vec![Partial {
        subst: Substitution::new(),
        atoms: vec![],
    }];

    // Stored facts first: these pin down the instance's local variables.
    for atom in rule
        .consume
        .iter()
        .filter(|a| a.is_linear() || a.predicate == crate::translate::CHILD)
    {
        let mut next = Vec::new();
        for p in &partials {
            for f in view
                .state
                .facts
                .iter()
                .filter(|f| f.predicate == atom.predicate)
            {
                if let Some(s) = match_fact(atom, f, &p.subst) {
                    next.push(Partial {
                        subst: s,
                        atoms: p.atoms.clone(),
                    });
                }
            }
        }
        partials = next;
    }
    for atom in rule.consume.iter().filter(|a| a.is_iknows()) {
        partials = partials
            .iter()
            .flat_map(|p| synth.synth(&atom.args[0], p))
            .collect();
    }
    for atom in rule
        .consume
        .iter()
        .filter(|a| !a.is_linear() && !a.is_iknows() && a.predicate != crate::translate::CHILD)
    {
        let mut next = Vec::new();
        for p in &partials {
            let inst = atom.apply(&p.subst);
            if inst.is_ground() {
                if view.holds(&inst) {
                    next.push(p.clone());
                }
            } else {
                for f in view.facts() {
                    if let Some(s) = match_fact(atom, f, &p.subst) {
                        next.push(Partial {
                            subst: s,
                            atoms: p.atoms.clone(),
                        });
                    }
                }
            }
        }
        partials = next;
    }
    for (lhs, pat) in &rule.require_eq {
        partials = partials
            .into_iter()
            .filter_map(|p| {
                let l = p.subst.apply(lhs);
                if !l.is_ground() {
                    return None;
                }
                match_with(pat, &l, &p.subst).map(|s| Partial {
                    subst: s,
                    atoms: p.atoms,
                })
            })
            .collect();
    }
    partials.retain(|p| {
        rule.require_neq.iter().all(|(lhs, pat)| {
            let l = p.subst.apply(lhs);
            l.is_ground() && match_with(&p.subst.apply(pat), &l, &Substitution::new()).is_none()
        })
    });
    partials.retain(|p| {
        rule.forbid
            .iter()
            .all(|atom| !forbidden_instance(view, &atom.apply(&p.subst)))
    });

    let mut firings: Vec<Firing> = partials
        .into_iter()
        .map(|p| {
            let mut subst = p.subst;
            let base = view.state.fresh_counter + p.atoms.len();
            for (i, v) in rule.fresh_vars.iter().enumerate() {
                subst.bind(v.clone(), Term::Const(format!("n{}", base + i)));
            }
            Firing {
                subst,
                new_atoms: p.atoms,
            }
        })
        .collect();
    firings.sort_by(|a, b| range_cmp(&a.subst, &b.subst, &rule.fresh_vars));
    firings.dedup_by(|a, b| a.subst == b.subst);
    firings
}

/// True if some instance of `atom` is in the closure of the viewed state.
fn forbidden_instance(view: &StateView, atom: &FactAtom) -> bool {
    if atom.is_ground() {
        return view.holds(atom);
    }
    if atom.is_iknows() {
        return view
            .known()
            .iter()
            .any(|k| match_with(&atom.args[0], k, &Substitution::new()).is_some());
    }
    view.facts()
        .any(|f| match_fact(atom, f, &Substitution::new()).is_some())
}

/// Fires a rule. Consumed state and in-transit facts are removed; knowledge
/// is never removed.
pub fn step(state: &SystemState, rule: &TransitionRule, firing: &Firing) -> SystemState {
    let mut facts = state.facts.clone();
    for atom in rule.consume.iter().filter(|a| a.is_linear()) {
        facts.remove(&atom.apply(&firing.subst));
    }
    for atom in &rule.produce {
        let f = atom.apply(&firing.subst);
        debug_assert!(f.is_ground(), "rule {} produced non-ground {f}", rule.name);
        facts.insert(f);
    }
    for a in &firing.new_atoms {
        facts.insert(FactAtom::iknows(a.clone()));
    }
    SystemState {
        facts,
        fresh_counter: state.fresh_counter + firing.new_atoms.len() + rule.fresh_vars.len(),
    }
}
