//! Acceptance gate: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::*;
use webinj::engine::{StateView, SystemState};
use webinj::spec::parse_spec;
use webinj::term::Term;
use webinj::trace::{equal_up_to_renaming, parse_msc};
use webinj::translate::FactAtom;

const TRACE_LIMIT: Duration = Duration::from_secs(5);
const THEOREM_LIMIT: Duration = Duration::from_secs(30);
const ORACLE_LIMIT: Duration = Duration::from_secs(60);
const MIN_QUERIES: usize = 100;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

struct Run {
    code: Option<i32>,
    out: String,
    elapsed: Duration,
}

fn run(args: &[&str]) -> Run {
    let t = Instant::now();
    let o = webinj(args);
    Run {
        code: o.status.code(),
        out: stdout(&o),
        elapsed: t.elapsed(),
    }
}

fn analyze(fixture: &str) -> Run {
    run(&[
        "analyze",
        "--spec",
        &format!("fixtures/{fixture}"),
        "--non-interactive",
    ])
}

fn header(out: &str) -> &str {
    out.lines().next().unwrap_or("")
}

fn reproduce(fixture: &str, published: &str, goal_line: &str) -> Result<Run, String> {
    let r = analyze(fixture);
    ensure(r.code == Some(1), format!("exit code {:?}", r.code))?;
    ensure(
        header(&r.out) == goal_line,
        format!("header '{}'", header(&r.out)),
    )?;
    let got = parse_msc(&msc_lines(&r.out)).map_err(|e| e.to_string())?;
    let want = parse_msc(published).map_err(|e| e.to_string())?;
    ensure(
        equal_up_to_renaming(&got, &want),
        format!("trace differs:\n{}", msc_lines(&r.out)),
    )?;
    ensure(r.elapsed < TRACE_LIMIT, format!("took {:?}", r.elapsed))?;
    Ok(r)
}

fn criterion_1() -> Check {
    let r = reproduce(
        "joomla.sqlf",
        JOOMLA_AAT,
        "GOAL: adminPanel AuthBypass(adminPanel)",
    )?;
    let last = msc_lines(&r.out).lines().last().unwrap_or("").to_string();
    ensure(
        last.ends_with("WebApp -> i      : adminPanel"),
        format!("last line '{last}'"),
    )?;
    Ok(format!("8 steps, {:?}", r.elapsed))
}

fn criterion_2() -> Check {
    let r = reproduce(
        "yavwa.sqlf",
        YAVWA_AAT,
        "GOAL: secureFolder AuthBypass(secureFolder)",
    )?;
    let steps = parse_msc(&msc_lines(&r.out)).map_err(|e| e.to_string())?;
    let s4 = &steps[3];
    let delivers_tuple = s4.receiver == "i"
        && s4
            .message
            .parts()
            .iter()
            .any(|p| matches!(p, Term::Apply(f, _) if f == "tuple"));
    ensure(
        delivers_tuple,
        "step 4 does not deliver a tuple to the intruder",
    )?;
    Ok(format!("6 steps, {:?}", r.elapsed))
}

fn criterion_3() -> Check {
    let r = reproduce(
        "second_order.sqlf",
        SECOND_ORDER_AAT,
        "GOAL: data_extraction SecondOrder(DataExtraction)",
    )?;
    let steps = parse_msc(&msc_lines(&r.out)).map_err(|e| e.to_string())?;
    let q2 = &steps[1].message;
    let q6 = &steps[5].message;
    let injected_query = matches!(q2, Term::Apply(f, a) if f == "query" && a.ends_with_sqli());
    ensure(
        injected_query && q2 == q6,
        format!("steps 2 and 6 are {q2} and {q6}"),
    )?;
    Ok(format!("8 steps, {q2} at 2 and 6, {:?}", r.elapsed))
}

fn criterion_4() -> Check {
    let mut times = vec![];
    for (fixture, goal, pattern, line) in [
        (
            "webgoat_auth.sqlf",
            "usersList",
            Term::constant("usersList"),
            "GOAL: usersList AuthBypass(usersList)",
        ),
        (
            "webgoat_extract.sqlf",
            "data_extraction",
            Term::apply("tuple", Term::Wildcard),
            "GOAL: data_extraction DataExtraction",
        ),
    ] {
        let src = std::fs::read_to_string(fixture_path(fixture)).map_err(|e| e.to_string())?;
        let spec = parse_spec(&src).map_err(|e| e.to_string())?;
        let g = spec
            .goal(goal)
            .ok_or(format!("{fixture}: no goal {goal}"))?;
        ensure(
            g.forbidden == pattern,
            format!("{fixture}: goal pattern {}", g.forbidden),
        )?;
        let r = analyze(fixture);
        ensure(
            r.code == Some(1),
            format!("{fixture}: exit code {:?}", r.code),
        )?;
        ensure(
            header(&r.out) == line,
            format!("{fixture}: header '{}'", header(&r.out)),
        )?;
        ensure(
            r.elapsed < TRACE_LIMIT,
            format!("{fixture}: took {:?}", r.elapsed),
        )?;
        times.push(r.elapsed);
    }
    Ok(format!("{:?} / {:?}", times[0], times[1]))
}

fn criterion_5() -> Check {
    let r = run(&["verify-db", "--depth", "3"]);
    let field = |name: &str| -> Option<usize> {
        r.out
            .lines()
            .find_map(|l| l.strip_prefix(name))
            .and_then(|v| v.trim().parse().ok())
    };
    let queries = field("injected queries:").ok_or("no query count")?;
    let cex = field("counterexamples:").ok_or("no counterexample count")?;
    ensure(
        r.code == Some(0) && cex == 0,
        format!("{cex} counterexamples"),
    )?;
    ensure(queries >= MIN_QUERIES, format!("only {queries} queries"))?;
    ensure(r.elapsed < THEOREM_LIMIT, format!("took {:?}", r.elapsed))?;
    Ok(format!(
        "{queries} queries, 0 counterexamples, {:?}",
        r.elapsed
    ))
}

fn criterion_6() -> Check {
    let mut outcomes = vec![];
    for (name, _) in webinj::fixtures::ALL {
        let p = sanitized_fixture(name);
        let r = run(&[
            "analyze",
            "--spec",
            p.to_str().unwrap(),
            "--non-interactive",
        ]);
        let first = header(&r.out).to_string();
        let safe = first == "Exhausted(safe=true)" || first == "SafeUpToDepth(16)";
        ensure(
            r.code == Some(0) && safe,
            format!("{name}: exit {:?}, '{first}'", r.code),
        )?;
        outcomes.push(format!("{name}: {first}"));
    }
    Ok(outcomes.join(", "))
}

fn criterion_7() -> Check {
    let mut commands: Vec<Vec<String>> = vec![];
    for (name, _) in webinj::fixtures::ALL {
        for format in ["msc", "structured"] {
            commands.push(
                [
                    "analyze",
                    "--spec",
                    &format!("fixtures/{name}"),
                    "--non-interactive",
                    "--format",
                    format,
                ]
                .map(String::from)
                .to_vec(),
            );
            let p = sanitized_fixture(name);
            commands.push(
                [
                    "analyze",
                    "--spec",
                    p.to_str().unwrap(),
                    "--non-interactive",
                    "--format",
                    format,
                ]
                .map(String::from)
                .to_vec(),
            );
        }
    }
    commands.push(
        [
            "analyze",
            "--spec",
            "fixtures/joomla.sqlf",
            "--non-interactive",
            "--url",
            &format!("1={JOOMLA_URL}"),
        ]
        .map(String::from)
        .to_vec(),
    );
    commands.push(["verify-db", "--depth", "3"].map(String::from).to_vec());
    for c in &commands {
        let args: Vec<&str> = c.iter().map(String::as_str).collect();
        let (a, b) = (run(&args), run(&args));
        ensure(
            a.out == b.out && a.code == b.code,
            format!("outputs differ for {}", c.join(" ")),
        )?;
    }
    Ok(format!(
        "{} commands run twice, byte-identical",
        commands.len()
    ))
}

fn criterion_8() -> Check {
    let t = Instant::now();
    let levels = universe(3);
    let space = &levels[2];
    let small: Vec<&Term> = levels[1].iter().collect();
    let pf: BTreeSet<String> = [PUBLIC_FN.to_string()].into();
    let mut sets = 0;
    let mut checks = 0;
    for (i, x) in small.iter().enumerate() {
        for y in &small[i..] {
            let knowledge: BTreeSet<Term> = [(*x).clone(), (*y).clone()].into();
            let state = SystemState {
                facts: knowledge
                    .iter()
                    .map(|k| FactAtom::iknows(k.clone()))
                    .collect(),
                fresh_counter: 0,
            };
            let v = StateView::new(&state, &[], &pf, false);
            let oracle = brute_force_derivable(&knowledge, space);
            for probe in space {
                if v.derivable(probe) != oracle.contains(probe) {
                    return Err(format!("disagree on {probe} from {{{x}, {y}}}"));
                }
                checks += 1;
            }
            sets += 1;
        }
    }
    ensure(
        t.elapsed() < ORACLE_LIMIT,
        format!("took {:?}", t.elapsed()),
    )?;
    Ok(format!(
        "{sets} knowledge sets x {} terms = {checks} checks, {:?}",
        space.len(),
        t.elapsed()
    ))
}

/// Replaces `scheme://host` in a command with a fixed marker.
fn without_host(cmd: &str) -> String {
    match cmd.find("://") {
        Some(i) => {
            let start = cmd[..i].rfind('"').map_or(0, |q| q + 1);
            let rest = &cmd[i + 3..];
            let end = rest.find('/').unwrap_or(rest.len());
            format!("{}<host>{}", &cmd[..start], &rest[end..])
        }
        None => cmd.to_string(),
    }
}

fn criterion_9() -> Check {
    let r = run(&[
        "analyze",
        "--spec",
        "fixtures/joomla.sqlf",
        "--non-interactive",
        "--url",
        &format!("1={JOOMLA_URL}"),
    ]);
    let cmd = r.out.lines().last().unwrap_or("").to_string();
    ensure(
        without_host(&cmd) == without_host(JOOMLA_SQLMAP),
        format!("got '{cmd}'"),
    )?;
    Ok(cmd)
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("Joomla! trace reproduction", criterion_1),
        ("YAVWA trace reproduction", criterion_2),
        ("Second-order trace reproduction", criterion_3),
        ("WebGoat goals violated", criterion_4),
        ("database theorem, depth 3", criterion_5),
        ("sanitized variants are safe", criterion_6),
        ("determinism", criterion_7),
        ("derivability oracle equivalence", criterion_8),
        ("Joomla! sqlmap concretization", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
