use std::collections::BTreeSet;
use std::fmt;

use crate::term::Term;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    Agent,
    Message,
    Text,
    /// Predicates only; never the sort of a term.
    Fact,
}

impl Sort {
    pub fn keyword(self) -> &'static str {
        match self {
            Sort::Agent => "agent",
            Sort::Message => "message",
            Sort::Text => "text",
            Sort::Fact => "fact",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Sort> {
        Some(match s {
            "agent" => Sort::Agent,
            "message" => Sort::Message,
            "text" => Sort::Text,
            "fact" => Sort::Fact,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelKind {
    Insecure,
    Authentic,
    Confidential,
    Secure,
}

impl ChannelKind {
    pub fn arrow(self) -> &'static str {
        match self {
            ChannelKind::Insecure => "->",
            ChannelKind::Authentic => "*->",
            ChannelKind::Confidential => "->*",
            ChannelKind::Secure => "*->*",
        }
    }

    pub fn from_arrow(s: &str) -> Option<ChannelKind> {
        Some(match s {
            "->" => ChannelKind::Insecure,
            "*->" => ChannelKind::Authentic,
            "->*" => ChannelKind::Confidential,
            "*->*" => ChannelKind::Secure,
            _ => return None,
        })
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.arrow())
    }
}

/// A term together with the variables that are bound (`?X`) by it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub term: Term,
    pub binders: BTreeSet<String>,
}

impl Pattern {
    pub fn new(term: Term, binders: impl IntoIterator<Item = String>) -> Self {
        Pattern {
            term,
            binders: binders.into_iter().collect(),
        }
    }

    pub fn ground(term: Term) -> Self {
        Pattern {
            term,
            binders: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SymbolKind {
    Value(Sort),
    Function { args: Vec<Sort>, ret: Sort },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolDecl {
    pub name: String,
    pub kind: SymbolKind,
    pub public: bool,
}

impl SymbolDecl {
    pub fn value(name: &str, sort: Sort, public: bool) -> Self {
        SymbolDecl {
            name: name.to_string(),
            kind: SymbolKind::Value(sort),
            public,
        }
    }

    pub fn function(name: &str, args: Vec<Sort>, ret: Sort, public: bool) -> Self {
        SymbolDecl {
            name: name.to_string(),
            kind: SymbolKind::Function { args, ret },
            public,
        }
    }

    pub fn is_variable(&self) -> bool {
        matches!(self.kind, SymbolKind::Value(_)) && is_variable_name(&self.name)
    }
}

/// Variables start with an upper-case letter, constants with a lower-case one.
pub fn is_variable_name(name: &str) -> bool {
    name.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receive {
    pub from: Pattern,
    pub channel: ChannelKind,
    pub msg: Pattern,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssignValue {
    Term(Term),
    Fresh,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Guard {
    Receive(Receive),
    Equality {
        lhs: Term,
        rhs: Pattern,
    },
    Fact {
        predicate: String,
        arg: Pattern,
        negated: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    pub guard: Guard,
    pub body: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Send {
        to: Term,
        channel: ChannelKind,
        msg: Term,
    },
    Receive(Receive),
    Assign {
        var: String,
        value: AssignValue,
    },
    SelectOn(Vec<Branch>),
    IfElse {
        guard: Guard,
        then: Vec<Statement>,
        otherwise: Vec<Statement>,
    },
    WhileTrue(Vec<Statement>),
    New {
        entity: String,
        args: Vec<Term>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityDecl {
    pub name: String,
    pub params: Vec<(String, Sort)>,
    pub symbols: Vec<SymbolDecl>,
    pub body: Vec<Statement>,
    pub children: Vec<EntityDecl>,
}

impl EntityDecl {
    pub fn child(&self, name: &str) -> Option<&EntityDecl> {
        self.children.iter().find(|c| c.name == name)
    }

    pub fn symbol(&self, name: &str) -> Option<&SymbolDecl> {
        self.symbols.iter().find(|s| s.name == name)
    }

    /// Depth-first walk over this entity and its descendants.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a EntityDecl)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }
}

/// A fact over a single argument, e.g. `inDB(M.sqli)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub predicate: String,
    pub arg: Term,
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.predicate, self.arg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HornClause {
    pub name: String,
    /// Universally quantified variables.
    pub params: Vec<String>,
    pub head: Atom,
    pub body: Vec<Atom>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Goal {
    pub name: String,
    /// Argument of the globally negated intruder-knowledge predicate.
    pub forbidden: Term,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecAst {
    pub name: String,
    pub channel_model: String,
    pub root: EntityDecl,
    pub horn_clauses: Vec<HornClause>,
    pub goals: Vec<Goal>,
}

impl SpecAst {
    pub fn find_entity(&self, name: &str) -> Option<&EntityDecl> {
        let mut found = None;
        self.root.walk(&mut |e| {
            if found.is_none() && e.name == name {
                found = Some(e);
            }
        });
        found
    }

    pub fn goal(&self, name: &str) -> Option<&Goal> {
        self.goals.iter().find(|g| g.name == name)
    }
}
