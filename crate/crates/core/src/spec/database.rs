use super::ast::*;
use super::parser::parse_entity;
use crate::term::Term;

pub const DATABASE_ENTITY: &str = "Database";

/// Source of the database entity inserted when a model instantiates
/// `Database` without declaring it.
pub const DATABASE_SOURCE: &str = "entity Database(WebApp, Actor: agent){
symbols
 NonceWA,NonceDB: text;
 SQLquery: message;
body{
 while(true){
  select{
   on(WebApp *->* Actor: ?NonceWA.sanitizedQuery(?SQLquery)):{
    select{on(SQLquery = tuple(?)):{
     NonceDB := fresh();
     Actor *->* WebApp: no_tuple.NonceDB; } } }
   on(WebApp *->* Actor:
    ?NonceWA.query(?SQLquery)):{
    select{
     on(inDB(SQLquery)):{
      NonceDB := fresh();
      Actor *->* WebApp: tuple(SQLquery).NonceDB; }
     on(!(inDB(SQLquery))):{
      NonceDB := fresh();
      Actor *->* WebApp: no_tuple.NonceDB; }}}}}}}
";

pub fn builtin_database_entity() -> EntityDecl {
    parse_entity(DATABASE_SOURCE).expect("builtin database entity parses")
}

/// The same entity built directly, without the parser.
pub fn database_entity_ast() -> EntityDecl {
    let v = |n: &str| Term::var(n);
    let bound = |t: Term, names: &[&str]| Pattern::new(t, names.iter().map(|n| n.to_string()));
    let receive = |msg: Pattern| Receive {
        from: Pattern::ground(v("WebApp")),
        channel: ChannelKind::Secure,
        msg,
    };
    let reply = |msg: Term| {
        vec![
            Statement::Assign {
                var: "NonceDB".into(),
                value: AssignValue::Fresh,
            },
            Statement::Send {
                to: v("WebApp"),
                channel: ChannelKind::Secure,
                msg: Term::concat([msg, v("NonceDB")]),
            },
        ]
    };
    let in_db = |negated: bool| Guard::Fact {
        predicate: "inDB".into(),
        arg: Pattern::ground(v("SQLquery")),
        negated,
    };
    let sanitized = Branch {
        guard: Guard::Receive(receive(bound(
            Term::concat([v("NonceWA"), Term::apply("sanitizedQuery", v("SQLquery"))]),
            &["NonceWA", "SQLquery"],
        ))),
        body: vec![Statement::SelectOn(vec![Branch {
            guard: Guard::Equality {
                lhs: v("SQLquery"),
                rhs: Pattern::ground(Term::apply("tuple", Term::Wildcard)),
            },
            body: reply(Term::constant("no_tuple")),
        }])],
    };
    let raw = Branch {
        guard: Guard::Receive(receive(bound(
            Term::concat([v("NonceWA"), Term::apply("query", v("SQLquery"))]),
            &["NonceWA", "SQLquery"],
        ))),
        body: vec![Statement::SelectOn(vec![
            Branch {
                guard: in_db(false),
                body: reply(Term::apply("tuple", v("SQLquery"))),
            },
            Branch {
                guard: in_db(true),
                body: reply(Term::constant("no_tuple")),
            },
        ])],
    };
    EntityDecl {
        name: DATABASE_ENTITY.into(),
        params: vec![
            ("WebApp".into(), Sort::Agent),
            ("Actor".into(), Sort::Agent),
        ],
        symbols: vec![
            SymbolDecl::value("NonceWA", Sort::Text, true),
            SymbolDecl::value("NonceDB", Sort::Text, true),
            SymbolDecl::value("SQLquery", Sort::Message, true),
        ],
        body: vec![Statement::WhileTrue(vec![Statement::SelectOn(vec![
            sanitized, raw,
        ])])],
        children: vec![],
    }
}
