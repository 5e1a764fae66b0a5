//! Execution of a transition system against a Dolev-Yao intruder extended
//! with the `sqli` payload, and bounded search for attack states.

pub mod applicable;
pub mod knowledge;

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use thiserror::Error;

pub use applicable::{applicable, step, Firing};
pub use knowledge::StateView;

use crate::term::{instance_of, Substitution};
use crate::translate::{FactAtom, TransitionSystem};

pub const DEFAULT_MAX_DEPTH: usize = 16;
pub const DEFAULT_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SystemState {
    pub facts: BTreeSet<FactAtom>,
    /// Source of globally unique names for fresh values and intruder atoms.
    pub fresh_counter: usize,
}

impl SystemState {
    pub fn initial(ts: &TransitionSystem) -> Self {
        SystemState {
            facts: ts.initial.clone(),
            fresh_counter: 0,
        }
    }

    pub fn iknows(&self) -> impl Iterator<Item = &FactAtom> {
        self.facts.iter().filter(|f| f.is_iknows())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Via {
    pub rule: usize,
    pub name: String,
    pub subst: Substitution,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchNode {
    pub state: SystemState,
    pub parent: Option<usize>,
    pub via: Option<Via>,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchResult {
    /// The node path from the initial state to the attack state.
    AttackFound {
        trace: Vec<SearchNode>,
        goal: String,
    },
    SafeUpToDepth(usize),
    Exhausted {
        safe: bool,
    },
}

impl std::fmt::Display for SearchResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SearchResult::AttackFound { goal, .. } => write!(f, "AttackFound({goal})"),
            SearchResult::SafeUpToDepth(d) => write!(f, "SafeUpToDepth({d})"),
            SearchResult::Exhausted { safe } => write!(f, "Exhausted(safe={safe})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    pub max_depth: usize,
    pub budget: usize,
    /// Accept `sqli` anywhere in a concatenation for body-less clauses.
    pub loose_indb: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_depth: DEFAULT_MAX_DEPTH,
            budget: DEFAULT_BUDGET,
            loose_indb: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes: usize,
    pub depth: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("node budget of {0} exceeded")]
    ResourceLimit(usize),
    #[error("maximum depth must be at least 1")]
    ZeroDepth,
}

pub fn view<'a>(ts: &'a TransitionSystem, state: &'a SystemState, loose: bool) -> StateView<'a> {
    StateView::new(state, &ts.horn, &ts.public_functions, loose)
}

/// The first goal whose attack state holds in the viewed state.
pub fn violated_goal(ts: &TransitionSystem, v: &StateView) -> Option<String> {
    for (name, atom) in &ts.attack_states {
        let pat = &atom.args[0];
        let hit = if pat.is_ground() {
            v.derivable(pat)
        } else {
            v.known().iter().any(|k| instance_of(pat, k))
        };
        if hit {
            return Some(name.clone());
        }
    }
    None
}

/// All successors of a state in rule order, then substitution order.
pub fn successors(
    ts: &TransitionSystem,
    state: &SystemState,
    loose: bool,
) -> Vec<(Via, SystemState)> {
    let v = view(ts, state, loose);
    let mut out = Vec::new();
    for (i, rule) in ts.rules.iter().enumerate() {
        for f in applicable(&v, ts, rule) {
            let next = step(state, rule, &f);
            out.push((
                Via {
                    rule: i,
                    name: rule.name.clone(),
                    subst: f.subst,
                },
                next,
            ));
        }
    }
    out
}

struct Dfs<'a> {
    ts: &'a TransitionSystem,
    cfg: SearchConfig,
    nodes: usize,
    /// Best remaining depth each state has been explored with.
    visited: HashMap<BTreeSet<FactAtom>, usize>,
    path: Vec<SearchNode>,
    cutoff: bool,
    max_seen: usize,
}

impl Dfs<'_> {
    fn run(
        &mut self,
        state: SystemState,
        via: Option<Via>,
        depth: usize,
        bound: usize,
    ) -> Result<Option<String>, SearchError> {
        self.nodes += 1;
        if self.nodes > self.cfg.budget {
            return Err(SearchError::ResourceLimit(self.cfg.budget));
        }
        self.max_seen = self.max_seen.max(depth);
        let remaining = bound - depth;
        match self.visited.get(&state.facts) {
            Some(&r) if r >= remaining => return Ok(None),
            _ => {}
        }
        self.visited.insert(state.facts.clone(), remaining);
        let parent = self.path.len().checked_sub(1);
        self.path.push(SearchNode {
            state: state.clone(),
            parent,
            via,
            depth,
        });
        let v = view(self.ts, &state, self.cfg.loose_indb);
        if let Some(goal) = violated_goal(self.ts, &v) {
            return Ok(Some(goal));
        }
        drop(v);
        let succ = successors(self.ts, &state, self.cfg.loose_indb);
        if remaining == 0 {
            if !succ.is_empty() {
                self.cutoff = true;
            }
        } else {
            for (via, next) in succ {
                if let Some(g) = self.run(next, Some(via), depth + 1, bound)? {
                    return Ok(Some(g));
                }
            }
        }
        self.path.pop();
        Ok(None)
    }
}

/// Iterative-deepening search for a reachable attack state.
pub fn search(
    ts: &TransitionSystem,
    cfg: SearchConfig,
) -> Result<(SearchResult, SearchStats), SearchError> {
    if cfg.max_depth == 0 {
        return Err(SearchError::ZeroDepth);
    }
    let start = Instant::now();
    let mut nodes = 0;
    let mut max_seen = 0;
    for bound in 0..=cfg.max_depth {
        let mut dfs = Dfs {
            ts,
            cfg: SearchConfig {
                budget: cfg.budget.saturating_sub(nodes),
                ..cfg
            },
            nodes: 0,
            visited: HashMap::new(),
            path: Vec::new(),
            cutoff: false,
            max_seen: 0,
        };
        let found = dfs
            .run(SystemState::initial(ts), None, 0, bound)
            .map_err(|_| SearchError::ResourceLimit(cfg.budget))?;
        nodes += dfs.nodes;
        max_seen = max_seen.max(dfs.max_seen);
        let stats = |depth| SearchStats {
            nodes,
            depth,
            elapsed: start.elapsed(),
        };
        if let Some(goal) = found {
            let depth = dfs.path.len() - 1;
            return Ok((
                SearchResult::AttackFound {
                    trace: dfs.path,
                    goal,
                },
                stats(depth),
            ));
        }
        if !dfs.cutoff {
            return Ok((SearchResult::Exhausted { safe: true }, stats(max_seen)));
        }
    }
    Ok((
        SearchResult::SafeUpToDepth(cfg.max_depth),
        SearchStats {
            nodes,
            depth: max_seen,
            elapsed: start.elapsed(),
        },
    ))
}
