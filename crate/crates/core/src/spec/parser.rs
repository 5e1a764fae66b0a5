use std::collections::BTreeSet;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;
use crate::term::Term;

const SECTION_KEYWORDS: &[&str] = &["symbols", "clauses", "goals", "body", "entity"];

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
    anon_goals: usize,
}

/// Result of parsing a whole specification, before builtin resolution and
/// validation.
pub fn parse_raw(src: &str) -> Result<SpecAst, ParseError> {
    let mut p = Parser::new(src)?;
    let spec = p.spec()?;
    p.expect_eof()?;
    Ok(spec)
}

/// Parses a single entity declaration (clauses and goals are rejected).
pub fn parse_entity(src: &str) -> Result<EntityDecl, ParseError> {
    let mut p = Parser::new(src)?;
    let mut clauses = Vec::new();
    let mut goals = Vec::new();
    let e = p.entity(&mut clauses, &mut goals)?;
    p.expect_eof()?;
    if !clauses.is_empty() || !goals.is_empty() {
        return Err(ParseError {
            line: 1,
            col: 1,
            message: "standalone entity may not declare clauses or goals".into(),
        });
    }
    Ok(e)
}

/// Parses a single standalone term.
pub fn parse_term(src: &str) -> Result<Term, ParseError> {
    let mut p = Parser::new(src)?;
    let (t, _) = p.term()?;
    if *p.peek() != Tok::Eof {
        return p.err(format!("unexpected {} after term", p.describe()));
    }
    Ok(t)
}

impl Parser {
    pub fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: tokenize(src)?,
            pos: 0,
            anon_goals: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let t = &self.toks[self.pos];
        Err(ParseError {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Arrow(a) => format!("'{a}'"),
            Tok::Punct(p) => format!("'{p}'"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.err(format!("expected '{p}', found {}", self.describe()))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected '{kw}', found {}", self.describe()))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.err(format!("expected identifier, found {}", self.describe())),
        }
    }

    fn expect_eof(&self) -> Result<(), ParseError> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.err(format!(
                "unexpected {} after end of specification",
                self.describe()
            ))
        }
    }

    fn spec(&mut self) -> Result<SpecAst, ParseError> {
        self.keyword("specification")?;
        let name = self.ident()?;
        self.keyword("channel_model")?;
        let channel_model = self.ident()?;
        let mut horn_clauses = Vec::new();
        let mut goals = Vec::new();
        let root = self.entity(&mut horn_clauses, &mut goals)?;
        Ok(SpecAst {
            name,
            channel_model,
            root,
            horn_clauses,
            goals,
        })
    }

    fn entity(
        &mut self,
        clauses: &mut Vec<HornClause>,
        goals: &mut Vec<Goal>,
    ) -> Result<EntityDecl, ParseError> {
        self.keyword("entity")?;
        let name = self.ident()?;
        let mut params = Vec::new();
        if self.eat_punct("(") {
            params = self.typed_names(")")?;
            self.punct(")")?;
        }
        self.punct("{")?;
        let mut e = EntityDecl {
            name,
            params,
            symbols: vec![],
            body: vec![],
            children: vec![],
        };
        let mut seen_body = false;
        loop {
            match self.peek().clone() {
                Tok::Punct("}") => {
                    self.bump();
                    break;
                }
                Tok::Ident(kw) if kw == "symbols" => {
                    self.bump();
                    while !self.at_section_end() {
                        self.symbol_decl(&mut e.symbols)?;
                    }
                }
                Tok::Ident(kw) if kw == "clauses" => {
                    self.bump();
                    while !self.at_section_end() {
                        clauses.push(self.clause()?);
                    }
                }
                Tok::Ident(kw) if kw == "goals" => {
                    self.bump();
                    while !self.at_section_end() {
                        goals.push(self.goal()?);
                    }
                }
                Tok::Ident(kw) if kw == "entity" => {
                    let child = self.entity(clauses, goals)?;
                    e.children.push(child);
                }
                Tok::Ident(kw) if kw == "body" => {
                    if seen_body {
                        return self.err("duplicate 'body' section");
                    }
                    seen_body = true;
                    self.bump();
                    self.punct("{")?;
                    e.body = self.statements()?;
                    self.punct("}")?;
                }
                _ => {
                    return self.err(format!(
                        "expected a section keyword or '}}', found {}",
                        self.describe()
                    ))
                }
            }
        }
        Ok(e)
    }

    fn at_section_end(&self) -> bool {
        match self.peek() {
            Tok::Punct("}") | Tok::Eof => true,
            Tok::Ident(s) => SECTION_KEYWORDS.contains(&s.as_str()),
            _ => false,
        }
    }

    /// `A, B: agent, C: text` style lists; names without a sort take the next
    /// sort given.
    fn typed_names(&mut self, close: &str) -> Result<Vec<(String, Sort)>, ParseError> {
        let mut out = Vec::new();
        let mut pending = Vec::new();
        while !self.is_punct(close) {
            pending.push(self.ident()?);
            if self.eat_punct(":") {
                let sort = self.sort()?;
                out.extend(pending.drain(..).map(|n| (n, sort)));
            }
            if !self.eat_punct(",") {
                break;
            }
        }
        if !pending.is_empty() {
            return self.err("parameter without a sort");
        }
        Ok(out)
    }

    fn sort(&mut self) -> Result<Sort, ParseError> {
        let word = self.ident()?;
        match Sort::from_keyword(&word) {
            Some(s) => Ok(s),
            None => {
                self.pos -= 1;
                self.err(format!("unknown sort '{word}'"))
            }
        }
    }

    fn symbol_decl(&mut self, out: &mut Vec<SymbolDecl>) -> Result<(), ParseError> {
        let public = if self.is_kw("nonpublic") {
            self.bump();
            false
        } else {
            true
        };
        let first = self.ident()?;
        if self.eat_punct("(") {
            let mut args = vec![self.sort()?];
            while self.eat_punct(",") {
                args.push(self.sort()?);
            }
            self.punct(")")?;
            self.punct(":")?;
            let ret = self.sort()?;
            self.punct(";")?;
            out.push(SymbolDecl {
                name: first,
                kind: SymbolKind::Function { args, ret },
                public,
            });
            return Ok(());
        }
        let mut names = vec![first];
        while self.eat_punct(",") {
            names.push(self.ident()?);
        }
        self.punct(":")?;
        let sort = self.sort()?;
        self.punct(";")?;
        out.extend(names.into_iter().map(|name| SymbolDecl {
            name,
            kind: SymbolKind::Value(sort),
            public,
        }));
        Ok(())
    }

    fn clause(&mut self) -> Result<HornClause, ParseError> {
        let name = self.ident()?;
        let mut params = Vec::new();
        if self.eat_punct("(") {
            while !self.is_punct(")") {
                params.push(self.ident()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.punct(")")?;
        }
        self.punct(":")?;
        let head = self.atom()?;
        let mut body = Vec::new();
        if self.eat_punct(":-") {
            body.push(self.atom()?);
            while self.eat_punct("&") {
                body.push(self.atom()?);
            }
        }
        self.punct(";")?;
        Ok(HornClause {
            name,
            params,
            head,
            body,
        })
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let predicate = self.ident()?;
        self.punct("(")?;
        let (arg, binders) = self.term()?;
        if !binders.is_empty() {
            return self.err("binders are not allowed in clauses");
        }
        self.punct(")")?;
        Ok(Atom { predicate, arg })
    }

    fn goal(&mut self) -> Result<Goal, ParseError> {
        let name = if matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Punct(":") {
            let n = self.ident()?;
            self.bump();
            n
        } else {
            self.anon_goals += 1;
            format!("goal{}", self.anon_goals)
        };
        if !(self.is_punct("[") && *self.peek_at(1) == Tok::Punct("]")) {
            return self.err("only goals of the form [](!(iknows(M))) are supported");
        }
        self.bump();
        self.bump();
        self.punct("(")?;
        self.punct("!")?;
        self.punct("(")?;
        let pred = self.ident()?;
        if pred != "iknows" && pred != "iknowledge" {
            self.pos -= 1;
            return self.err(format!("goal predicate must be iknows, found '{pred}'"));
        }
        self.punct("(")?;
        let (forbidden, binders) = self.term()?;
        if !binders.is_empty() {
            return self.err("goal patterns may not contain binders");
        }
        self.punct(")")?;
        self.punct(")")?;
        self.punct(")")?;
        self.punct(";")?;
        Ok(Goal { name, forbidden })
    }

    fn statements(&mut self) -> Result<Vec<Statement>, ParseError> {
        let mut out = Vec::new();
        while !self.is_punct("}") && *self.peek() != Tok::Eof {
            out.push(self.statement()?);
        }
        Ok(out)
    }

    fn block(&mut self) -> Result<Vec<Statement>, ParseError> {
        self.punct("{")?;
        let body = self.statements()?;
        self.punct("}")?;
        Ok(body)
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        if self.is_kw("new") {
            self.bump();
            let entity = self.ident()?;
            self.punct("(")?;
            let mut args = Vec::new();
            while !self.is_punct(")") {
                let (t, b) = self.term()?;
                if !b.is_empty() {
                    return self.err("binders are not allowed in entity arguments");
                }
                args.push(t);
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.punct(")")?;
            self.punct(";")?;
            return Ok(Statement::New { entity, args });
        }
        if self.is_kw("select") {
            self.bump();
            self.punct("{")?;
            let mut branches = Vec::new();
            while self.is_kw("on") {
                self.bump();
                self.punct("(")?;
                let guard = self.guard()?;
                self.punct(")")?;
                self.eat_punct(":");
                let body = self.block()?;
                branches.push(Branch { guard, body });
            }
            if branches.is_empty() {
                return self.err("select needs at least one 'on' branch");
            }
            self.punct("}")?;
            return Ok(Statement::SelectOn(branches));
        }
        if self.is_kw("if") {
            self.bump();
            self.punct("(")?;
            let guard = self.guard()?;
            self.punct(")")?;
            let then = self.block()?;
            let otherwise = if self.is_kw("else") {
                self.bump();
                self.block()?
            } else {
                Vec::new()
            };
            return Ok(Statement::IfElse {
                guard,
                then,
                otherwise,
            });
        }
        if self.is_kw("while") {
            self.bump();
            self.punct("(")?;
            self.keyword("true")?;
            self.punct(")")?;
            return Ok(Statement::WhileTrue(self.block()?));
        }
        if matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Punct(":=") {
            let var = self.ident()?;
            self.bump();
            let value = if self.is_kw("fresh") && *self.peek_at(1) == Tok::Punct("(") {
                self.bump();
                self.punct("(")?;
                self.punct(")")?;
                AssignValue::Fresh
            } else {
                let (t, b) = self.term()?;
                if !b.is_empty() {
                    return self.err("binders are not allowed in assignments");
                }
                AssignValue::Term(t)
            };
            self.punct(";")?;
            return Ok(Statement::Assign { var, value });
        }
        let stmt = match self.message()? {
            Msg::Send { to, channel, msg } => Statement::Send { to, channel, msg },
            Msg::Receive(r) => Statement::Receive(r),
        };
        self.punct(";")?;
        Ok(stmt)
    }

    fn message(&mut self) -> Result<Msg, ParseError> {
        let (from, from_binders) = self.term()?;
        self.message_rest(from, from_binders)
    }

    fn message_rest(
        &mut self,
        from: Term,
        from_binders: BTreeSet<String>,
    ) -> Result<Msg, ParseError> {
        let channel = match self.bump() {
            Tok::Arrow(a) => ChannelKind::from_arrow(&a).expect("lexer yields valid arrows"),
            _ => {
                self.pos -= 1;
                return self.err(format!(
                    "expected a channel arrow, found {}",
                    self.describe()
                ));
            }
        };
        let (to, to_binders) = self.term()?;
        self.punct(":")?;
        let (msg, msg_binders) = self.term()?;
        let actor = Term::var("Actor");
        if from == actor {
            if !(to_binders.is_empty() && msg_binders.is_empty() && from_binders.is_empty()) {
                return self.err("send statements may not contain binders");
            }
            Ok(Msg::Send { to, channel, msg })
        } else if to == actor {
            Ok(Msg::Receive(Receive {
                from: Pattern {
                    term: from,
                    binders: from_binders,
                },
                channel,
                msg: Pattern {
                    term: msg,
                    binders: msg_binders,
                },
            }))
        } else {
            self.err("either the sender or the receiver of a message must be Actor")
        }
    }

    fn guard(&mut self) -> Result<Guard, ParseError> {
        if self.eat_punct("!") {
            self.punct("(")?;
            let predicate = self.ident()?;
            self.punct("(")?;
            let (arg, binders) = self.term()?;
            self.punct(")")?;
            self.punct(")")?;
            return Ok(Guard::Fact {
                predicate,
                arg: Pattern { term: arg, binders },
                negated: true,
            });
        }
        let (lhs, lhs_binders) = self.term()?;
        if matches!(self.peek(), Tok::Arrow(_)) {
            return match self.message_rest(lhs, lhs_binders)? {
                Msg::Receive(r) => Ok(Guard::Receive(r)),
                Msg::Send { .. } => self.err("a guard cannot send a message"),
            };
        }
        if self.eat_punct("=") {
            if !lhs_binders.is_empty() {
                return self.err("binders are only allowed on the right of '='");
            }
            let (rhs, binders) = self.term()?;
            return Ok(Guard::Equality {
                lhs,
                rhs: Pattern { term: rhs, binders },
            });
        }
        match lhs {
            Term::Apply(predicate, arg) => Ok(Guard::Fact {
                predicate,
                arg: Pattern {
                    term: *arg,
                    binders: lhs_binders,
                },
                negated: false,
            }),
            _ => self.err("expected a receive, an equality or a fact as guard"),
        }
    }

    /// Parses a (possibly concatenated) term, returning the set of `?X`
    /// binders it contains.
    pub fn term(&mut self) -> Result<(Term, BTreeSet<String>), ParseError> {
        let mut binders = BTreeSet::new();
        let t = self.concat(&mut binders)?;
        Ok((t, binders))
    }

    fn concat(&mut self, binders: &mut BTreeSet<String>) -> Result<Term, ParseError> {
        let mut parts = vec![self.primary(binders)?];
        while self.eat_punct(".") {
            parts.push(self.primary(binders)?);
        }
        Ok(Term::concat(parts))
    }

    fn primary(&mut self, binders: &mut BTreeSet<String>) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Punct("?") => {
                self.bump();
                if let Tok::Ident(name) = self.peek().clone() {
                    if is_variable_name(&name) {
                        self.bump();
                        binders.insert(name.clone());
                        return Ok(Term::Var(name));
                    }
                }
                Ok(Term::Wildcard)
            }
            Tok::Punct("(") => {
                self.bump();
                let t = self.concat(binders)?;
                self.punct(")")?;
                Ok(t)
            }
            Tok::Punct("{") => {
                self.bump();
                let payload = self.concat(binders)?;
                self.punct("}")?;
                self.punct("_")?;
                let key = self.primary(binders)?;
                Ok(Term::enc(payload, key))
            }
            Tok::Ident(name) => {
                self.bump();
                if self.eat_punct("(") {
                    let arg = self.concat(binders)?;
                    if self.is_punct(",") {
                        return self.err("function symbols take exactly one argument");
                    }
                    self.punct(")")?;
                    Ok(Term::apply(name, arg))
                } else if is_variable_name(&name) {
                    Ok(Term::Var(name))
                } else {
                    Ok(Term::Const(name))
                }
            }
            _ => self.err(format!("expected a term, found {}", self.describe())),
        }
    }
}

enum Msg {
    Send {
        to: Term,
        channel: ChannelKind,
        msg: Term,
    },
    Receive(Receive),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_error_at_line_one() {
        let err = parse_raw("").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn receive_with_binders_and_wildcard() {
        let mut p = Parser::new("?IP ->* Actor: com.history.?Listselect;").unwrap();
        let stmt = p.statement().unwrap();
        let Statement::Receive(r) = stmt else {
            panic!("expected receive")
        };
        assert_eq!(r.channel, ChannelKind::Confidential);
        assert!(r.from.binders.contains("IP"));
        assert_eq!(r.msg.term.to_string(), "com.history.Listselect");
        assert!(r.msg.binders.contains("Listselect"));

        let mut p = Parser::new("on(SQLquery = tuple(?))").unwrap();
        p.keyword("on").unwrap();
        p.punct("(").unwrap();
        let Guard::Equality { rhs, .. } = p.guard().unwrap() else {
            panic!()
        };
        assert_eq!(rhs.term, Term::apply("tuple", Term::Wildcard));
    }

    #[test]
    fn send_requires_actor() {
        let mut p = Parser::new("A -> B: m;").unwrap();
        assert!(p.statement().is_err());
    }

    #[test]
    fn negated_fact_guard() {
        let mut p = Parser::new("!(inDB(SQLquery))").unwrap();
        let g = p.guard().unwrap();
        assert_eq!(
            g,
            Guard::Fact {
                predicate: "inDB".into(),
                arg: Pattern::ground(Term::var("SQLquery")),
                negated: true
            }
        );
    }

    #[test]
    fn general_ltl_goal_rejected() {
        let src =
            "specification S channel_model CCM entity Environment { goals g: [](iknows(x)); }";
        assert!(parse_raw(src).is_err());
        let src =
            "specification S channel_model CCM entity Environment { goals g: <>(!(iknows(x))); }";
        assert!(parse_raw(src).is_err());
    }
}
