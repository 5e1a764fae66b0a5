//! Model language: a small subset of ASLan++ with entities,
//! channel arrows, `select`/`if` guards, Horn clauses and safety goals.

pub mod ast;
pub mod database;
pub mod guidelines;
mod lexer;
pub mod parser;
pub mod printer;
pub mod validate;

use thiserror::Error;

pub use ast::*;
pub use database::{builtin_database_entity, DATABASE_ENTITY};
pub use guidelines::{validate_webapp_model, Warning};
pub use printer::print_spec;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("undeclared symbol '{name}' in {context}")]
    Undeclared { name: String, context: String },
    #[error("'{name}' expects {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("sort mismatch for '{name}': {message}")]
    Sort { name: String, message: String },
    #[error("duplicate goal name '{0}'")]
    DuplicateGoal(String),
    #[error("goal '{goal}': {message}")]
    InvalidGoal { goal: String, message: String },
    #[error("'{0}' is reserved for generated fresh constants")]
    Reserved(String),
    #[error("instantiation of undeclared entity '{0}'")]
    UnknownEntity(String),
    #[error("entity names must be unique")]
    DuplicateEntity,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("invalid specification: {0}")]
    Validation(#[from] ValidationError),
}

/// Parses and validates a specification. A `Database` entity that is
/// instantiated but never declared is supplied from the builtin template.
pub fn parse_spec(text: &str) -> Result<SpecAst, SpecError> {
    let mut spec = parser::parse_raw(text)?;
    insert_builtin_database(&mut spec.root, &[]);
    validate::validate(&spec)?;
    Ok(spec)
}

fn instantiates(body: &[Statement], name: &str) -> bool {
    body.iter().any(|s| match s {
        Statement::New { entity, .. } => entity == name,
        Statement::WhileTrue(b) => instantiates(b, name),
        Statement::IfElse {
            then, otherwise, ..
        } => instantiates(then, name) || instantiates(otherwise, name),
        Statement::SelectOn(branches) => branches.iter().any(|b| instantiates(&b.body, name)),
        _ => false,
    })
}

fn insert_builtin_database(e: &mut EntityDecl, ancestors_have: &[bool]) {
    let visible = ancestors_have.iter().any(|b| *b) || e.child(DATABASE_ENTITY).is_some();
    if !visible && instantiates(&e.body, DATABASE_ENTITY) {
        e.children.push(builtin_database_entity());
    }
    let here = e.child(DATABASE_ENTITY).is_some();
    let mut chain = ancestors_have.to_vec();
    chain.push(here);
    for c in &mut e.children {
        insert_builtin_database(c, &chain);
    }
}
