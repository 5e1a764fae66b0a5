//! Command-line front end: parse, translate, search, report and
//! concretize.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::concretize::{concretize, Answers, ConcretizeError, FlagAnswers, Interactive};
use crate::engine::{
    search, SearchConfig, SearchError, SearchResult, DEFAULT_BUDGET, DEFAULT_MAX_DEPTH,
};
use crate::spec::{parse_spec, validate_webapp_model, SpecError};
use crate::theorem::{verify_db_theorem, DEFAULT_THEOREM_DEPTH};
use crate::trace::{build_trace, render_msc, to_structured, TraceError};
use crate::translate::{emit_ts, translate, TranslationError};

pub const EXIT_SAFE: i32 = 0;
pub const EXIT_ATTACK: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "webinj",
    version,
    about = "Finds SQL-injection attacks in formal web application models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Search a model for attacks and report the first one found.
    Analyze(AnalyzeArgs),
    /// Check the database entity against every query up to a depth.
    VerifyDb {
        #[arg(long, default_value_t = DEFAULT_THEOREM_DEPTH)]
        depth: usize,
    },
    /// Bundled case-study models.
    Fixtures {
        #[command(subcommand)]
        action: FixturesAction,
    },
}

#[derive(Subcommand, Debug)]
pub enum FixturesAction {
    /// Print the names of the bundled models.
    List,
    /// Print a bundled model.
    Show { name: String },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Msc,
    Structured,
}

#[derive(clap::Args, Debug)]
pub struct AnalyzeArgs {
    /// Model file.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
    pub depth: usize,
    #[arg(long, value_enum, default_value_t = Format::Msc)]
    pub format: Format,
    /// Print the transition system before searching.
    #[arg(long)]
    pub emit_ts: bool,
    /// Never prompt; concretize only from --url and --post.
    #[arg(long)]
    pub non_interactive: bool,
    /// Target URL for an injected trace step, as STEP=URL.
    #[arg(long = "url", value_name = "STEP=URL")]
    pub urls: Vec<String>,
    /// POST parameters as k=v&k2=v2.
    #[arg(long)]
    pub post: Option<String>,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: usize,
    /// Accept the payload anywhere in a query, not only at its end.
    #[arg(long)]
    pub loose_indb: bool,
    #[arg(long)]
    pub webapp: Option<String>,
    #[arg(long)]
    pub database: Option<String>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Translate(#[from] TranslationError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Concretize(#[from] ConcretizeError),
    #[error("invalid --url '{0}': expected STEP=URL")]
    BadUrlFlag(String),
    #[error("unknown fixture '{0}'")]
    UnknownFixture(String),
    #[error("output error: {0}")]
    Output(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

/// Terminal streams handed to [`run`].
pub struct Io<'a> {
    pub input: &'a mut dyn BufRead,
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
    /// Whether prompts may be shown.
    pub tty: bool,
}

/// Parses arguments and runs the command; returns the process exit code.
pub fn run<I, T>(args: I, io: &mut Io) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_ERROR
            } else {
                EXIT_SAFE
            };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(io.err, "{text}")
            } else {
                write!(io.out, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli, io) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(cli: Cli, io: &mut Io) -> Result<i32, CliError> {
    match cli.command {
        Command::Analyze(a) => analyze(&a, io),
        Command::VerifyDb { depth } => {
            let report = verify_db_theorem(depth.max(1));
            write!(io.out, "{report}")?;
            Ok(if report.counterexamples.is_empty() {
                EXIT_SAFE
            } else {
                EXIT_ATTACK
            })
        }
        Command::Fixtures {
            action: FixturesAction::List,
        } => {
            for (name, _) in crate::fixtures::ALL {
                writeln!(io.out, "{name}")?;
            }
            Ok(EXIT_SAFE)
        }
        Command::Fixtures {
            action: FixturesAction::Show { name },
        } => {
            let src = crate::fixtures::by_name(&name).ok_or(CliError::UnknownFixture(name))?;
            write!(io.out, "{src}")?;
            Ok(EXIT_SAFE)
        }
    }
}

fn flag_answers(a: &AnalyzeArgs) -> Result<FlagAnswers, CliError> {
    let mut f = FlagAnswers {
        post: a.post.clone(),
        webapp: a.webapp.clone(),
        database: a.database.clone(),
        ..Default::default()
    };
    for u in &a.urls {
        let (step, url) = u
            .split_once('=')
            .ok_or_else(|| CliError::BadUrlFlag(u.clone()))?;
        let step: usize = step
            .trim()
            .parse()
            .map_err(|_| CliError::BadUrlFlag(u.clone()))?;
        f.urls.insert(step, url.to_string());
    }
    Ok(f)
}

fn analyze(a: &AnalyzeArgs, io: &mut Io) -> Result<i32, CliError> {
    let path = a.spec.display().to_string();
    let src = std::fs::read_to_string(&a.spec).map_err(|e| CliError::Io {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let spec = parse_spec(&src)?;
    for w in validate_webapp_model(&spec) {
        writeln!(io.err, "{w}")?;
    }
    let ts = translate(&spec)?;
    if a.emit_ts {
        write!(io.out, "{}", emit_ts(&ts))?;
        writeln!(io.out)?;
    }
    let cfg = SearchConfig {
        max_depth: a.depth,
        budget: a.budget,
        loose_indb: a.loose_indb,
    };
    let (result, stats) = search(&ts, cfg)?;
    writeln!(
        io.err,
        "nodes: {}, depth: {}, elapsed: {} ms",
        stats.nodes,
        stats.depth,
        stats.elapsed.as_millis()
    )?;
    if !matches!(result, SearchResult::AttackFound { .. }) {
        match a.format {
            Format::Msc => writeln!(io.out, "{result}")?,
            Format::Structured => writeln!(
                io.out,
                "{}",
                serde_json::json!({ "result": result.to_string() })
            )?,
        }
        return Ok(EXIT_SAFE);
    }
    let trace = build_trace(&result, &ts)?;
    match a.format {
        Format::Msc => {
            writeln!(io.out, "GOAL: {} {}", trace.goal, trace.classification)?;
            write!(io.out, "{}", render_msc(&trace))?;
        }
        Format::Structured => write!(io.out, "{}", to_structured(&trace))?,
    }
    let interactive = io.tty && !a.non_interactive;
    if interactive || !a.urls.is_empty() {
        let plan = if interactive {
            let mut ans = Interactive {
                input: &mut *io.input,
                output: &mut *io.out,
            };
            concretize(&trace, &mut ans as &mut dyn Answers)?
        } else {
            concretize(&trace, &mut flag_answers(a)?)?
        };
        if !interactive {
            for cmd in &plan.emitted_commands {
                writeln!(io.out, "{cmd}")?;
            }
        }
    }
    Ok(EXIT_ATTACK)
}
