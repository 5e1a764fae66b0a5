use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;
use super::ValidationError;
use crate::term::{Term, INTRUDER, SQLI};

/// What a name resolves to inside a scope.
#[derive(Debug, Clone, PartialEq)]
enum Binding {
    Param(Sort),
    Symbol(SymbolDecl),
}

struct Scope<'a> {
    entities: Vec<&'a EntityDecl>,
}

impl<'a> Scope<'a> {
    fn lookup(&self, name: &str) -> Option<Binding> {
        for e in self.entities.iter().rev() {
            if let Some((_, s)) = e.params.iter().find(|(n, _)| n == name) {
                return Some(Binding::Param(*s));
            }
            if let Some(s) = e.symbol(name) {
                return Some(Binding::Symbol(s.clone()));
            }
        }
        builtin_symbol(name).map(Binding::Symbol)
    }

    fn entity(&self, name: &str) -> Option<&'a EntityDecl> {
        self.entities.iter().rev().find_map(|e| e.child(name))
    }

    fn current(&self) -> &'a EntityDecl {
        self.entities.last().expect("non-empty scope")
    }
}

fn builtin_symbol(name: &str) -> Option<SymbolDecl> {
    match name {
        SQLI => Some(SymbolDecl::value(SQLI, Sort::Text, true)),
        INTRUDER => Some(SymbolDecl::value(INTRUDER, Sort::Agent, true)),
        _ => None,
    }
}

/// Constants named like engine-generated fresh values would be confused
/// with them.
pub fn is_reserved_constant(name: &str) -> bool {
    name.len() > 1 && name.starts_with('n') && name[1..].chars().all(|c| c.is_ascii_digit())
}

/// Symbol table spanning every entity, used for clauses and goals which are
/// global.
fn global_symbols(spec: &SpecAst) -> BTreeMap<String, SymbolDecl> {
    let mut out = BTreeMap::new();
    spec.root.walk(&mut |e| {
        for s in &e.symbols {
            out.entry(s.name.clone()).or_insert_with(|| s.clone());
        }
    });
    for b in [SQLI, INTRUDER] {
        out.entry(b.to_string())
            .or_insert_with(|| builtin_symbol(b).unwrap());
    }
    out
}

pub fn validate(spec: &SpecAst) -> Result<(), ValidationError> {
    let mut seen = BTreeSet::new();
    spec.root.walk(&mut |e| {
        for s in &e.symbols {
            if is_reserved_constant(&s.name) {
                seen.insert(s.name.clone());
            }
        }
    });
    if let Some(name) = seen.into_iter().next() {
        return Err(ValidationError::Reserved(name));
    }
    let mut names = BTreeSet::new();
    spec.root.walk(&mut |e| {
        names.insert(e.name.clone());
    });
    let mut count = 0;
    spec.root.walk(&mut |_| count += 1);
    if names.len() != count {
        return Err(ValidationError::DuplicateEntity);
    }

    let mut scope = Scope { entities: vec![] };
    validate_entity(&spec.root, &mut scope)?;

    let globals = global_symbols(spec);
    let predicates: BTreeSet<String> = spec
        .horn_clauses
        .iter()
        .map(|c| c.head.predicate.clone())
        .collect();
    for c in &spec.horn_clauses {
        let params: BTreeSet<&str> = c.params.iter().map(String::as_str).collect();
        for atom in std::iter::once(&c.head).chain(&c.body) {
            check_predicate(&atom.predicate, &globals, &predicates, &c.name)?;
            check_global_term(&atom.arg, &globals, &params, &c.name)?;
        }
        for v in c.head.arg.vars() {
            if !params.contains(v.as_str()) {
                return Err(ValidationError::Undeclared {
                    name: v,
                    context: format!("clause {}", c.name),
                });
            }
        }
    }

    let mut goal_names = BTreeSet::new();
    for g in &spec.goals {
        if !goal_names.insert(g.name.clone()) {
            return Err(ValidationError::DuplicateGoal(g.name.clone()));
        }
        check_global_term(&g.forbidden, &globals, &BTreeSet::new(), &g.name)?;
        if let Some(v) = g.forbidden.vars().into_iter().next() {
            return Err(ValidationError::InvalidGoal {
                goal: g.name.clone(),
                message: format!("variable {v} in goal"),
            });
        }
        for sym in g
            .forbidden
            .constants()
            .into_iter()
            .chain(g.forbidden.symbols())
        {
            if globals.get(&sym).is_some_and(|d| d.public) {
                return Err(ValidationError::InvalidGoal {
                    goal: g.name.clone(),
                    message: format!("public symbol {sym} makes the goal trivially violated"),
                });
            }
        }
    }
    Ok(())
}

fn check_predicate(
    name: &str,
    globals: &BTreeMap<String, SymbolDecl>,
    clause_heads: &BTreeSet<String>,
    context: &str,
) -> Result<(), ValidationError> {
    match globals.get(name) {
        Some(SymbolDecl {
            kind:
                SymbolKind::Function {
                    args,
                    ret: Sort::Fact,
                },
            ..
        }) => {
            if args.len() != 1 {
                return Err(ValidationError::Arity {
                    name: name.into(),
                    expected: args.len(),
                    found: 1,
                });
            }
            Ok(())
        }
        Some(_) => Err(ValidationError::Sort {
            name: name.into(),
            message: "used as a predicate".into(),
        }),
        None if clause_heads.contains(name) => Ok(()),
        None => Err(ValidationError::Undeclared {
            name: name.into(),
            context: context.into(),
        }),
    }
}

fn check_global_term(
    t: &Term,
    globals: &BTreeMap<String, SymbolDecl>,
    params: &BTreeSet<&str>,
    context: &str,
) -> Result<(), ValidationError> {
    let lookup = |name: &str| -> Option<Binding> {
        if params.contains(name) {
            Some(Binding::Param(Sort::Message))
        } else {
            globals.get(name).cloned().map(Binding::Symbol)
        }
    };
    check_term(t, &lookup, context)
}

fn check_term(
    t: &Term,
    lookup: &dyn Fn(&str) -> Option<Binding>,
    context: &str,
) -> Result<(), ValidationError> {
    match t {
        Term::Const(n) | Term::Var(n) => match lookup(n) {
            None => Err(ValidationError::Undeclared {
                name: n.clone(),
                context: context.into(),
            }),
            Some(Binding::Symbol(SymbolDecl {
                kind: SymbolKind::Function { .. },
                ..
            })) => Err(ValidationError::Sort {
                name: n.clone(),
                message: "function symbol used as a value".into(),
            }),
            Some(Binding::Symbol(SymbolDecl {
                kind: SymbolKind::Value(Sort::Fact),
                ..
            }))
            | Some(Binding::Param(Sort::Fact)) => Err(ValidationError::Sort {
                name: n.clone(),
                message: "fact used as a term".into(),
            }),
            Some(_) => Ok(()),
        },
        Term::Wildcard => Ok(()),
        Term::Concat(parts) => parts
            .iter()
            .try_for_each(|p| check_term(p, lookup, context)),
        Term::Apply(f, arg) => {
            match lookup(f) {
                None => {
                    return Err(ValidationError::Undeclared {
                        name: f.clone(),
                        context: context.into(),
                    })
                }
                Some(Binding::Symbol(SymbolDecl {
                    kind: SymbolKind::Function { args, ret },
                    ..
                })) => {
                    if args.len() != 1 {
                        return Err(ValidationError::Arity {
                            name: f.clone(),
                            expected: args.len(),
                            found: 1,
                        });
                    }
                    if ret == Sort::Fact {
                        return Err(ValidationError::Sort {
                            name: f.clone(),
                            message: "fact used as a term".into(),
                        });
                    }
                }
                Some(_) => {
                    return Err(ValidationError::Sort {
                        name: f.clone(),
                        message: "value used as a function".into(),
                    })
                }
            }
            check_term(arg, lookup, context)
        }
        Term::Enc(p, k) => {
            if let Term::Const(n) | Term::Var(n) = k.as_ref() {
                if matches!(lookup(n), Some(Binding::Param(Sort::Agent)))
                    || matches!(
                        lookup(n),
                        Some(Binding::Symbol(SymbolDecl {
                            kind: SymbolKind::Value(Sort::Agent),
                            ..
                        }))
                    )
                {
                    return Err(ValidationError::Sort {
                        name: n.clone(),
                        message: "agent used as an encryption key".into(),
                    });
                }
            }
            check_term(p, lookup, context)?;
            check_term(k, lookup, context)
        }
    }
}

fn validate_entity<'a>(e: &'a EntityDecl, scope: &mut Scope<'a>) -> Result<(), ValidationError> {
    scope.entities.push(e);
    let context = format!("entity {}", e.name);
    for s in &e.symbols {
        if let SymbolKind::Value(Sort::Fact) = s.kind {
            return Err(ValidationError::Sort {
                name: s.name.clone(),
                message: "fact sort is reserved for predicates".into(),
            });
        }
    }
    let mut sc = StmtChecker { scope, context };
    sc.block(&e.body)?;
    for c in &e.children {
        validate_entity(c, scope)?;
    }
    scope.entities.pop();
    Ok(())
}

struct StmtChecker<'s, 'a> {
    scope: &'s Scope<'a>,
    context: String,
}

impl StmtChecker<'_, '_> {
    fn term(&self, t: &Term) -> Result<(), ValidationError> {
        let lookup = |n: &str| self.scope.lookup(n);
        check_term(t, &lookup, &self.context)
    }

    fn pattern(&self, p: &Pattern) -> Result<(), ValidationError> {
        for b in &p.binders {
            self.variable(b)?;
        }
        self.term(&p.term)
    }

    fn variable(&self, name: &str) -> Result<(), ValidationError> {
        match self.scope.lookup(name) {
            Some(Binding::Symbol(SymbolDecl {
                kind: SymbolKind::Value(_),
                ..
            }))
            | Some(Binding::Param(_))
                if is_variable_name(name) =>
            {
                Ok(())
            }
            Some(_) => Err(ValidationError::Sort {
                name: name.into(),
                message: "not an assignable variable".into(),
            }),
            None => Err(ValidationError::Undeclared {
                name: name.into(),
                context: self.context.clone(),
            }),
        }
    }

    fn guard(&self, g: &Guard) -> Result<(), ValidationError> {
        match g {
            Guard::Receive(r) => {
                self.pattern(&r.from)?;
                self.pattern(&r.msg)
            }
            Guard::Equality { lhs, rhs } => {
                self.term(lhs)?;
                self.pattern(rhs)
            }
            Guard::Fact { predicate, arg, .. } => {
                match self.scope.lookup(predicate) {
                    Some(Binding::Symbol(SymbolDecl {
                        kind:
                            SymbolKind::Function {
                                args,
                                ret: Sort::Fact,
                            },
                        ..
                    })) => {
                        if args.len() != 1 {
                            return Err(ValidationError::Arity {
                                name: predicate.clone(),
                                expected: args.len(),
                                found: 1,
                            });
                        }
                    }
                    Some(_) => {
                        return Err(ValidationError::Sort {
                            name: predicate.clone(),
                            message: "used as a predicate".into(),
                        })
                    }
                    None => {
                        return Err(ValidationError::Undeclared {
                            name: predicate.clone(),
                            context: self.context.clone(),
                        })
                    }
                }
                self.pattern(arg)
            }
        }
    }

    fn block(&mut self, body: &[Statement]) -> Result<(), ValidationError> {
        for s in body {
            match s {
                Statement::Send { to, msg, .. } => {
                    self.term(to)?;
                    self.term(msg)?;
                }
                Statement::Receive(r) => self.guard(&Guard::Receive(r.clone()))?,
                Statement::Assign { var, value } => {
                    self.variable(var)?;
                    if let AssignValue::Term(t) = value {
                        self.term(t)?;
                    }
                }
                Statement::SelectOn(branches) => {
                    for b in branches {
                        self.guard(&b.guard)?;
                        self.block(&b.body)?;
                    }
                }
                Statement::IfElse {
                    guard,
                    then,
                    otherwise,
                } => {
                    self.guard(guard)?;
                    self.block(then)?;
                    self.block(otherwise)?;
                }
                Statement::WhileTrue(body) => self.block(body)?,
                Statement::New { entity, args } => {
                    let Some(decl) = self.scope.entity(entity) else {
                        return Err(ValidationError::UnknownEntity(entity.clone()));
                    };
                    if decl.params.len() != args.len() {
                        return Err(ValidationError::Arity {
                            name: entity.clone(),
                            expected: decl.params.len(),
                            found: args.len(),
                        });
                    }
                    let current = self.scope.current();
                    for a in args {
                        let ok = match a {
                            Term::Const(c) => matches!(
                                self.scope.lookup(c),
                                Some(Binding::Symbol(SymbolDecl {
                                    kind: SymbolKind::Value(Sort::Agent),
                                    ..
                                }))
                            ),
                            Term::Var(v) => current
                                .params
                                .iter()
                                .any(|(n, s)| n == v && *s == Sort::Agent),
                            _ => false,
                        };
                        if !ok {
                            return Err(ValidationError::Sort {
                                name: a.to_string(),
                                message: format!("argument of new {entity} must be an agent constant or parameter"),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
