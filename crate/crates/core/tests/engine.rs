mod common;

use std::collections::BTreeSet;

use common::*;
use webinj::engine::{
    applicable, search, step, successors, view, violated_goal, SearchConfig, SearchError,
    SearchResult, SystemState,
};
use webinj::fixtures;
use webinj::spec::parse_spec;
use webinj::term::{is_submessage, Term};
use webinj::translate::{base_name, translate, FactAtom, TransitionRule, TransitionSystem};

fn ts_of(src: &str) -> TransitionSystem {
    translate(&parse_spec(src).unwrap()).unwrap()
}

fn db_rule(
    ts: &TransitionSystem,
    pred: impl Fn(&TransitionRule) -> bool,
) -> &TransitionRule {
    ts.rules
        .iter()
        .find(|r| ts.instances[r.instance].display == "DB" && pred(r))
        .unwrap()
}

fn binding<'a>(s: &'a webinj::term::Substitution, name: &str) -> Option<&'a Term> {
    s.iter().find(|(v, _)| base_name(v) == name).map(|(_, t)| t)
}

fn with_query(ts: &TransitionSystem, q: Term) -> SystemState {
    let mut s = SystemState::initial(ts);
    let msg = Term::concat([c("n99"), Term::apply("query", q)]);
    s.facts
        .insert(FactAtom::transit(c("webapp"), c("database"), msg));
    s
}

#[test]
fn joomla_first_step_injects_listselect() {
    let ts = ts_of(fixtures::JOOMLA);
    let s0 = SystemState::initial(&ts);
    let v = view(&ts, &s0, false);
    let rule = &ts
        .rules
        .iter()
        .find(|r| r.name.starts_with("WebApp") && r.from_label == 0)
        .unwrap();
    let firings = applicable(&v, &ts, rule);
    let expected = Term::apply(
        "query",
        Term::concat([c("com_contenthistory"), c("history"), Term::sqli()]),
    );
    let hit = firings
        .iter()
        .find(|f| binding(&f.subst, "Listselect") == Some(&Term::sqli()))
        .unwrap();
    let next = step(&s0, rule, hit);
    assert!(next
        .facts
        .iter()
        .any(|f| f.predicate == "transit" && is_submessage(&expected, &f.args[2])));
}

#[test]
fn database_raw_branch_on_injected_query() {
    let ts = ts_of(fixtures::JOOMLA);
    let q = Term::concat([c("u"), Term::sqli()]);
    let s = with_query(&ts, q.clone());
    let v = view(&ts, &s, false);
    let pos = db_rule(&ts, |r| r.consume.iter().any(|a| a.predicate == "inDB"));
    let neg = db_rule(&ts, |r| r.forbid.iter().any(|a| a.predicate == "inDB"));
    let firings = applicable(&v, &ts, pos);
    assert_eq!(firings.len(), 1);
    assert_eq!(binding(&firings[0].subst, "SQLquery"), Some(&q));
    assert!(applicable(&v, &ts, neg).is_empty());

    let next = step(&s, pos, &firings[0]);
    let tuple = Term::apply("tuple", q);
    assert!(next
        .facts
        .iter()
        .any(|f| f.predicate == "transit" && f.args[2].parts().contains(&tuple)));
}

#[test]
fn database_raw_branch_without_payload() {
    let ts = ts_of(fixtures::JOOMLA);
    let s = with_query(&ts, Term::concat([c("u"), c("v")]));
    let v = view(&ts, &s, false);
    let pos = db_rule(&ts, |r| r.consume.iter().any(|a| a.predicate == "inDB"));
    let neg = db_rule(&ts, |r| r.forbid.iter().any(|a| a.predicate == "inDB"));
    assert!(applicable(&v, &ts, pos).is_empty());
    assert_eq!(applicable(&v, &ts, neg).len(), 1);
}

#[test]
fn in_db_agrees_with_literal_clause_oracle() {
    let ts = ts_of(fixtures::JOOMLA);
    let s = SystemState::initial(&ts);
    let v = view(&ts, &s, false);
    let atoms = [c("u"), c("v"), Term::sqli()];
    let mut terms: BTreeSet<Term> = atoms.iter().cloned().collect();
    for _ in 0..2 {
        let prev: Vec<Term> = terms.iter().cloned().collect();
        for x in &prev {
            for y in &prev {
                terms.insert(Term::concat([x.clone(), y.clone()]));
            }
        }
    }
    for t in terms.iter().filter(|t| t.depth() <= 3) {
        let fact = FactAtom::new("inDB", vec![t.clone()]);
        assert_eq!(v.holds(&fact), literal_in_db(t), "{t}");
    }
}

#[test]
fn repeated_step_is_idempotent_on_knowledge() {
    let ts = ts_of(fixtures::YAVWA);
    let s0 = SystemState::initial(&ts);
    for (via, next) in successors(&ts, &s0, false) {
        let rule = &ts.rules[via.rule];
        let v = view(&ts, &s0, false);
        let f = applicable(&v, &ts, rule)
            .into_iter()
            .find(|f| f.subst == via.subst)
            .unwrap();
        let again = step(&next, rule, &f);
        let k1: BTreeSet<_> = next.iknows().collect();
        let k2: BTreeSet<_> = again.iknows().collect();
        assert_eq!(k1, k2);
    }
}

#[test]
fn yavwa_first_step_fact_count() {
    let ts = ts_of(fixtures::YAVWA);
    let (result, _) = search(&ts, SearchConfig::default()).unwrap();
    let SearchResult::AttackFound { trace, .. } = result else {
        panic!("no attack")
    };
    let (before, after) = (&trace[0].state, &trace[1].state);
    let via = trace[1].via.as_ref().unwrap();
    let rule = &ts.rules[via.rule];
    let consumed: BTreeSet<FactAtom> = rule
        .consume
        .iter()
        .filter(|a| a.is_linear())
        .map(|a| a.apply(&via.subst))
        .collect();
    let mut produced: BTreeSet<FactAtom> =
        rule.produce.iter().map(|a| a.apply(&via.subst)).collect();
    let invented = after.fresh_counter - before.fresh_counter - rule.fresh_vars.len();
    let atoms: Vec<&FactAtom> = after
        .iknows()
        .filter(|f| !before.facts.contains(f) && !produced.contains(f))
        .collect();
    assert_eq!(atoms.len(), invented);
    produced.extend(atoms.into_iter().cloned());
    assert!(consumed.iter().all(|f| before.facts.contains(f)));
    assert!(produced.iter().all(|f| !before.facts.contains(f)));
    assert_eq!(
        after.facts.len(),
        before.facts.len() + produced.len() - consumed.len()
    );
}

#[test]
fn knowledge_is_monotone_along_traces() {
    for (name, src) in fixtures::ALL {
        let ts = ts_of(src);
        let (result, _) = search(&ts, SearchConfig::default()).unwrap();
        let SearchResult::AttackFound { trace, .. } = result else {
            panic!("{name}: no attack")
        };
        for w in trace.windows(2) {
            let a: BTreeSet<_> = w[0].state.iknows().collect();
            let b: BTreeSet<_> = w[1].state.iknows().collect();
            assert!(a.is_subset(&b), "{name}");
            assert_eq!(w[1].depth, w[0].depth + 1);
        }
        assert!(trace[0].parent.is_none() && trace[0].via.is_none());
        assert_eq!(trace[0].state, SystemState::initial(&ts));
    }
}

#[test]
fn no_goal_holds_initially() {
    for (name, src) in fixtures::ALL {
        let ts = ts_of(src);
        let s = SystemState::initial(&ts);
        let v = view(&ts, &s, false);
        assert_eq!(violated_goal(&ts, &v), None, "{name}");
        for x in ["a", "sqli", "webapp", "Username_0"] {
            assert!(!v.derivable(&Term::apply("tuple", c(x))), "{name}");
        }
    }
}

#[test]
fn joomla_depth_twelve_attack() {
    let ts = ts_of(fixtures::JOOMLA);
    let (r, _) = search(
        &ts,
        SearchConfig {
            max_depth: 12,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(matches!(r, SearchResult::AttackFound { ref goal, .. } if goal == "adminPanel"));
}

#[test]
fn sanitized_joomla_has_no_attack() {
    let ts = ts_of(&fixtures::sanitized(fixtures::JOOMLA));
    let (r, _) = search(
        &ts,
        SearchConfig {
            max_depth: 12,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(
        matches!(
            r,
            SearchResult::Exhausted { safe: true } | SearchResult::SafeUpToDepth(_)
        ),
        "{r}"
    );
}

#[test]
fn zero_depth_rejected() {
    let ts = ts_of(fixtures::JOOMLA);
    assert_eq!(
        search(
            &ts,
            SearchConfig {
                max_depth: 0,
                ..Default::default()
            }
        ),
        Err(SearchError::ZeroDepth)
    );
}

#[test]
fn node_budget_enforced() {
    let ts = ts_of(fixtures::JOOMLA);
    let r = search(
        &ts,
        SearchConfig {
            budget: 50,
            ..Default::default()
        },
    );
    assert_eq!(r, Err(SearchError::ResourceLimit(50)));
}

#[test]
fn search_is_deterministic() {
    for (_, src) in fixtures::ALL {
        let ts = ts_of(src);
        let a = search(&ts, SearchConfig::default()).unwrap().0;
        let b = search(&ts, SearchConfig::default()).unwrap().0;
        assert_eq!(a, b);
    }
}

#[test]
fn derivable_composition_examples() {
    let ts = ts_of(fixtures::JOOMLA);
    let mut s = SystemState::initial(&ts);
    let v = view(&ts, &s, false);
    assert!(v.derivable(&Term::sqli()));
    assert!(!v.derivable(&Term::apply("tuple", c("x"))));
    s.facts.insert(FactAtom::iknows(c("a")));
    s.facts.insert(FactAtom::iknows(c("b")));
    let v = view(&ts, &s, false);
    assert!(v.derivable(&Term::concat([c("a"), c("b"), Term::sqli()])));
}

#[test]
fn derivable_matches_brute_force_on_small_universe() {
    let levels = universe(2);
    let space = &levels[1];
    let ts = ts_of(fixtures::JOOMLA);
    let pf: BTreeSet<String> = [PUBLIC_FN.to_string()].into();
    for k in &levels[0] {
        for k2 in space.iter().take(20) {
            let knowledge: BTreeSet<Term> = [k.clone(), k2.clone()].into();
            let state = SystemState {
                facts: knowledge
                    .iter()
                    .map(|t| FactAtom::iknows(t.clone()))
                    .collect(),
                fresh_counter: 0,
            };
            let v = webinj::engine::StateView::new(&state, &ts.horn, &pf, false);
            let oracle = brute_force_derivable(&knowledge, space);
            for t in space {
                assert_eq!(v.derivable(t), oracle.contains(t), "{t} from {knowledge:?}");
            }
        }
    }
}
