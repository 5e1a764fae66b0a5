//! Turns an attack trace into curl or sqlmap command lines, asking the
//! operator for the concrete target of every injected step.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::term::{Term, INTRUDER};
use crate::trace::{AttackKind, AttackTrace, TraceStep, TUPLE};

pub const DEFAULT_WEBAPP: &str = "webapplication";
pub const DEFAULT_DATABASE: &str = "database";
const RULE: &str = "----------------";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConcretizeError {
    #[error("aborted by user")]
    AbortedByUser,
    #[error("no answer for: {0}")]
    MissingAnswer(String),
    #[error("malformed POST parameters '{0}': expected key=value pairs joined by '&'")]
    InvalidPost(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Sqlmap,
    Curl,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Question {
    WebAppName,
    DatabaseName,
    /// URL for the injected step with this 1-based index.
    Url {
        step: usize,
        line: String,
    },
    Post {
        step: usize,
    },
}

impl Question {
    fn prompt(&self) -> String {
        match self {
            Question::WebAppName => {
                format!("What's the name of the web app in the model? [DEFAULT {DEFAULT_WEBAPP}, press enter for default]")
            }
            Question::DatabaseName => {
                format!("What's the name of the database in the model? [DEFAULT {DEFAULT_DATABASE}, press enter for default]")
            }
            Question::Url { line, .. } => {
                format!(
                    "Can you give me the URI of the web page under test corresponding to:\n{line}"
                )
            }
            Question::Post { .. } => {
                "Are there any POST parameters (key=value)? [optional, press enter to skip]".into()
            }
        }
    }
}

/// Source of operator answers. `None` means the operator accepted the
/// default or skipped an optional question.
pub trait Answers {
    fn answer(&mut self, q: &Question) -> Result<Option<String>, ConcretizeError>;
    fn note(&mut self, _text: &str) -> Result<(), ConcretizeError> {
        Ok(())
    }
}

/// Answers given up front on the command line.
#[derive(Debug, Clone, Default)]
pub struct FlagAnswers {
    pub urls: BTreeMap<usize, String>,
    pub post: Option<String>,
    pub webapp: Option<String>,
    pub database: Option<String>,
}

impl Answers for FlagAnswers {
    fn answer(&mut self, q: &Question) -> Result<Option<String>, ConcretizeError> {
        match q {
            Question::WebAppName => Ok(self.webapp.clone()),
            Question::DatabaseName => Ok(self.database.clone()),
            Question::Url { step, .. } => self
                .urls
                .get(step)
                .cloned()
                .map(Some)
                .ok_or_else(|| ConcretizeError::MissingAnswer(format!("URL for step {step}"))),
            Question::Post { .. } => Ok(self.post.clone()),
        }
    }
}

/// Line-oriented dialogue. End of input aborts.
pub struct Interactive<R, W> {
    pub input: R,
    pub output: W,
}

impl<R: BufRead, W: Write> Interactive<R, W> {
    fn write(&mut self, text: &str) -> Result<(), ConcretizeError> {
        writeln!(self.output, "{text}").map_err(|e| ConcretizeError::Io(e.to_string()))
    }
}

impl<R: BufRead, W: Write> Answers for Interactive<R, W> {
    fn answer(&mut self, q: &Question) -> Result<Option<String>, ConcretizeError> {
        self.write(&q.prompt())?;
        self.output
            .flush()
            .map_err(|e| ConcretizeError::Io(e.to_string()))?;
        let mut line = String::new();
        let n = self
            .input
            .read_line(&mut line)
            .map_err(|e| ConcretizeError::Io(e.to_string()))?;
        if n == 0 {
            return Err(ConcretizeError::AbortedByUser);
        }
        let line = line.trim();
        if line.is_empty() {
            if let Question::Url { step, .. } = q {
                return Err(ConcretizeError::MissingAnswer(format!(
                    "URL for step {step}"
                )));
            }
            return Ok(None);
        }
        Ok(Some(line.to_string()))
    }

    fn note(&mut self, text: &str) -> Result<(), ConcretizeError> {
        self.write(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcretizationPlan {
    pub kind: AttackKind,
    pub webapp: String,
    pub database: String,
    /// (1-based step index, URL) per injected step.
    pub target_urls: Vec<(usize, String)>,
    pub post_params: Option<Vec<(String, String)>>,
    pub emitted_commands: Vec<String>,
}

/// Command family for an injected step: sqlmap when data is extracted,
/// either as the goal or as material the intruder replays later.
pub fn command_kind(trace: &AttackTrace, step: usize) -> CommandKind {
    if !matches!(trace.classification.base(), AttackKind::AuthBypass(_)) {
        return CommandKind::Sqlmap;
    }
    let replays_extracted = trace.steps[step + 1..]
        .iter()
        .any(|s| s.sender == INTRUDER && contains_tuple(&s.message));
    if replays_extracted {
        CommandKind::Sqlmap
    } else {
        CommandKind::Curl
    }
}

fn contains_tuple(t: &Term) -> bool {
    let mut found = false;
    t.visit(&mut |s| found |= matches!(s, Term::Apply(f, _) if f == TUPLE));
    found
}

pub fn parse_post(text: &str) -> Result<Vec<(String, String)>, ConcretizeError> {
    text.split('&')
        .map(|pair| match pair.split_once('=') {
            Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
            _ => Err(ConcretizeError::InvalidPost(text.to_string())),
        })
        .collect()
}

/// Escapes text for use inside a double-quoted shell word.
pub fn shell_quote(text: &str) -> String {
    let mut out = String::from("\"");
    for ch in text.chars() {
        if matches!(ch, '"' | '\\' | '$' | '`') {
            out.push('\\');
        }
        out.push(ch);
    }
    out.push('"');
    out
}

fn join_post(pairs: &[(String, String)], mask: bool) -> String {
    pairs
        .iter()
        .map(|(k, v)| {
            if mask {
                format!("{k}=?")
            } else {
                format!("{k}={v}")
            }
        })
        .collect::<Vec<_>>()
        .join("&")
}

/// `sqlmap.py -u "<URL>"[ --data "<POST>"] -a`
pub fn sqlmap_command(url: &str, post: Option<&[(String, String)]>) -> String {
    let mut cmd = format!("sqlmap.py -u {}", shell_quote(url));
    if let Some(p) = post {
        cmd.push_str(&format!(" --data {}", shell_quote(&join_post(p, false))));
    }
    cmd.push_str(" -a");
    cmd
}

/// `curl[ -d "<POST>"] "<URL>"`, every POST value replaced by the `?`
/// placeholder the operator fills with the payload.
pub fn curl_command(url: &str, post: Option<&[(String, String)]>) -> String {
    let mut cmd = String::from("curl");
    if let Some(p) = post {
        cmd.push_str(&format!(" -d {}", shell_quote(&join_post(p, true))));
    }
    cmd.push_str(&format!(" {}", shell_quote(url)));
    cmd
}

fn step_line(index: usize, webapp: &str, s: &TraceStep) -> String {
    format!("{index} - <?> ->* {webapp} : {}", s.message)
}

/// Runs the dialogue: entity names, then for each injected step its URL
/// and optional POST parameters, emitting one command per injected step.
pub fn concretize(
    trace: &AttackTrace,
    answers: &mut dyn Answers,
) -> Result<ConcretizationPlan, ConcretizeError> {
    let injected: Vec<usize> = trace
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.injected)
        .map(|(i, _)| i)
        .collect();
    let mut plan = ConcretizationPlan {
        kind: trace.classification.clone(),
        webapp: DEFAULT_WEBAPP.into(),
        database: DEFAULT_DATABASE.into(),
        target_urls: vec![],
        post_params: None,
        emitted_commands: vec![],
    };
    if injected.is_empty() {
        return Ok(plan);
    }
    answers.note("Just a couple of questions.")?;
    if let Some(w) = answers.answer(&Question::WebAppName)? {
        plan.webapp = w;
    }
    if let Some(d) = answers.answer(&Question::DatabaseName)? {
        plan.database = d;
    }
    for i in injected {
        let step = i + 1;
        let line = step_line(step, &plan.webapp, &trace.steps[i]);
        let url = answers
            .answer(&Question::Url {
                step,
                line: line.clone(),
            })?
            .ok_or_else(|| ConcretizeError::MissingAnswer(format!("URL for step {step}")))?;
        answers.note(&format!("{RULE}\n{line}\n{url}\n"))?;
        let kind = command_kind(trace, i);
        answers.note(match kind {
            CommandKind::Sqlmap => "Data extraction command",
            CommandKind::Curl => "Authentication bypass command",
        })?;
        let post = match answers.answer(&Question::Post { step })? {
            Some(p) => Some(parse_post(&p)?),
            None => None,
        };
        let cmd = match kind {
            CommandKind::Sqlmap => sqlmap_command(&url, post.as_deref()),
            CommandKind::Curl => curl_command(&url, post.as_deref()),
        };
        answers.note(&format!("{cmd}\n{RULE}"))?;
        plan.target_urls.push((step, url));
        if post.is_some() {
            plan.post_params = post;
        }
        plan.emitted_commands.push(cmd);
    }
    Ok(plan)
}
