use std::collections::BTreeSet;
use std::fmt::Write;

use super::ast::*;
use crate::term::Term;

/// Pretty-prints a specification in the concrete syntax accepted by the
/// parser. Clauses and goals are emitted in the root entity.
pub fn print_spec(spec: &SpecAst) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "specification {} channel_model {}",
        spec.name, spec.channel_model
    )
    .unwrap();
    print_entity(
        &mut out,
        &spec.root,
        0,
        Some((&spec.horn_clauses, &spec.goals)),
    );
    out
}

pub fn print_entity_decl(e: &EntityDecl) -> String {
    let mut out = String::new();
    print_entity(&mut out, e, 0, None);
    out
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn print_entity(
    out: &mut String,
    e: &EntityDecl,
    level: usize,
    extra: Option<(&Vec<HornClause>, &Vec<Goal>)>,
) {
    indent(out, level);
    write!(out, "entity {}", e.name).unwrap();
    if !e.params.is_empty() {
        let params: Vec<String> = e
            .params
            .iter()
            .map(|(n, s)| format!("{n}: {}", s.keyword()))
            .collect();
        write!(out, "({})", params.join(", ")).unwrap();
    }
    out.push_str(" {\n");
    if !e.symbols.is_empty() {
        indent(out, level + 1);
        out.push_str("symbols\n");
        for s in &e.symbols {
            indent(out, level + 2);
            if !s.public {
                out.push_str("nonpublic ");
            }
            match &s.kind {
                SymbolKind::Value(sort) => {
                    writeln!(out, "{}: {};", s.name, sort.keyword()).unwrap()
                }
                SymbolKind::Function { args, ret } => {
                    let args: Vec<&str> = args.iter().map(|a| a.keyword()).collect();
                    writeln!(out, "{}({}): {};", s.name, args.join(", "), ret.keyword()).unwrap()
                }
            }
        }
    }
    if let Some((clauses, goals)) = extra {
        if !clauses.is_empty() {
            indent(out, level + 1);
            out.push_str("clauses\n");
            for c in clauses {
                indent(out, level + 2);
                write!(out, "{}", c.name).unwrap();
                if !c.params.is_empty() {
                    write!(out, "({})", c.params.join(", ")).unwrap();
                }
                write!(out, ": {}", c.head).unwrap();
                if !c.body.is_empty() {
                    let body: Vec<String> = c.body.iter().map(|a| a.to_string()).collect();
                    write!(out, " :- {}", body.join(" & ")).unwrap();
                }
                out.push_str(";\n");
            }
        }
        if !goals.is_empty() {
            indent(out, level + 1);
            out.push_str("goals\n");
            for g in goals {
                indent(out, level + 2);
                writeln!(out, "{}: [](!(iknows({})));", g.name, g.forbidden).unwrap();
            }
        }
    }
    for c in &e.children {
        print_entity(out, c, level + 1, None);
    }
    if !e.body.is_empty() {
        indent(out, level + 1);
        out.push_str("body {\n");
        print_block(out, &e.body, level + 2);
        indent(out, level + 1);
        out.push_str("}\n");
    }
    indent(out, level);
    out.push_str("}\n");
}

fn print_block(out: &mut String, body: &[Statement], level: usize) {
    for s in body {
        print_statement(out, s, level);
    }
}

fn print_statement(out: &mut String, s: &Statement, level: usize) {
    indent(out, level);
    match s {
        Statement::Send { to, channel, msg } => {
            writeln!(out, "Actor {channel} {to}: {msg};").unwrap()
        }
        Statement::Receive(r) => writeln!(out, "{};", receive_text(r)).unwrap(),
        Statement::Assign { var, value } => match value {
            AssignValue::Fresh => writeln!(out, "{var} := fresh();").unwrap(),
            AssignValue::Term(t) => writeln!(out, "{var} := {t};").unwrap(),
        },
        Statement::New { entity, args } => {
            let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
            writeln!(out, "new {entity}({});", args.join(", ")).unwrap()
        }
        Statement::WhileTrue(body) => {
            out.push_str("while(true) {\n");
            print_block(out, body, level + 1);
            indent(out, level);
            out.push_str("}\n");
        }
        Statement::SelectOn(branches) => {
            out.push_str("select {\n");
            for b in branches {
                indent(out, level + 1);
                writeln!(out, "on({}): {{", guard_text(&b.guard)).unwrap();
                print_block(out, &b.body, level + 2);
                indent(out, level + 1);
                out.push_str("}\n");
            }
            indent(out, level);
            out.push_str("}\n");
        }
        Statement::IfElse {
            guard,
            then,
            otherwise,
        } => {
            writeln!(out, "if({}) {{", guard_text(guard)).unwrap();
            print_block(out, then, level + 1);
            indent(out, level);
            if otherwise.is_empty() {
                out.push_str("}\n");
            } else {
                out.push_str("} else {\n");
                print_block(out, otherwise, level + 1);
                indent(out, level);
                out.push_str("}\n");
            }
        }
    }
}

fn receive_text(r: &Receive) -> String {
    format!(
        "{} {} Actor: {}",
        pattern_text(&r.from),
        r.channel,
        pattern_text(&r.msg)
    )
}

fn guard_text(g: &Guard) -> String {
    match g {
        Guard::Receive(r) => receive_text(r),
        Guard::Equality { lhs, rhs } => format!("{lhs} = {}", pattern_text(rhs)),
        Guard::Fact {
            predicate,
            arg,
            negated,
        } => {
            let atom = format!("{predicate}({})", pattern_text(arg));
            if *negated {
                format!("!({atom})")
            } else {
                atom
            }
        }
    }
}

pub fn pattern_text(p: &Pattern) -> String {
    let mut out = String::new();
    write_pattern(&mut out, &p.term, &p.binders);
    out
}

fn write_pattern(out: &mut String, t: &Term, binders: &BTreeSet<String>) {
    match t {
        Term::Var(v) if binders.contains(v) => write!(out, "?{v}").unwrap(),
        Term::Const(_) | Term::Var(_) | Term::Wildcard => write!(out, "{t}").unwrap(),
        Term::Concat(parts) => {
            for (i, p) in parts.iter().enumerate() {
                if i > 0 {
                    out.push('.');
                }
                write_pattern(out, p, binders);
            }
        }
        Term::Apply(f, arg) => {
            write!(out, "{f}(").unwrap();
            write_pattern(out, arg, binders);
            out.push(')');
        }
        Term::Enc(p, k) => {
            out.push('{');
            write_pattern(out, p, binders);
            out.push_str("}_");
            if k.is_atomic() {
                write_pattern(out, k, binders);
            } else {
                out.push('(');
                write_pattern(out, k, binders);
                out.push(')');
            }
        }
    }
}
