pub mod cli;
pub mod concretize;
pub mod engine;
pub mod fixtures;
pub mod spec;
pub mod term;
pub mod theorem;
pub mod trace;
pub mod translate;
