#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::{Command, Output};

use webinj::term::Term;

/// Published traces. Intruder atoms such as `Username(4)` are written
/// `Username_4`; the client is always the intruder `i`.
pub const JOOMLA_AAT: &str = "\
i -> WebApp  : com_contenthistory.history.sqli
WebApp -> DB : query(com_contenthistory.history.sqli)
DB -> WebApp : tuple(com_contenthistory.history.sqli)
WebApp  -> i : viewHistory.tuple(com_contenthistory.history.sqli)
i ->WebApp   : cookie.tuple(com_contenthistory.history.sqli)
WebApp -> DB : sanitizedQuery(tuple(com_contenthistory.history.sqli))
DB -> WebApp : no_tuple
WebApp  -> i : adminPanel
";

pub const YAVWA_AAT: &str = "\
i -> WebApp: Username_4.sqli
WebApp -> DB  : query(Username_4.sqli)
DB -> WebApp  : tuple(Username_4.sqli)
WebApp -> i   : dashboard.tuple(Username_4.sqli)
i  -> WebApp  : tuple(Username_4.sqli)
WebApp  -> i  : secureFolder
";

pub const SECOND_ORDER_AAT: &str = "\
i -> WebApp: registrationRequest.Username_4.sqli
WebApp -> DB  : query(Username_4.sqli)
DB -> WebApp  : tuple(Username_4.sqli)
WebApp -> i   : registered
i -> WebApp   : requestPage
WebApp -> DB  : query(Username_4.sqli)
DB -> WebApp  : tuple(Username_4.sqli)
WebApp -> i   : page.tuple(Username_4.sqli)
";

pub const JOOMLA_URL: &str =
    "http://target.com/joomla3.4.4/index.php?list[select]=?&view=history&option=com_contenthistory";
pub const JOOMLA_SQLMAP: &str = r#"sqlmap.py -u "https://157.27.244.25/joomla3.4.4/index.php?list[select]=?&view=history&option=com_contenthistory" -a"#;

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture_path(name: &str) -> PathBuf {
    root().join("fixtures").join(name)
}

pub fn webinj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_webinj"))
        .args(args)
        .current_dir(root())
        .stdin(std::process::Stdio::null())
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 output")
}

/// Lines of an MSC block in CLI output.
pub fn msc_lines(text: &str) -> String {
    text.lines()
        .filter(|l| l.contains(" -> "))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Writes the sanitized variant of a fixture to a temporary file.
pub fn sanitized_fixture(name: &str) -> PathBuf {
    let src = std::fs::read_to_string(fixture_path(name)).unwrap();
    let dir = std::env::temp_dir().join(format!("webinj-sanitized-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, webinj::fixtures::sanitized(&src)).unwrap();
    p
}

pub fn c(n: &str) -> Term {
    Term::constant(n)
}

pub const PUBLIC_FN: &str = "hash";
pub const PRIVATE_FN: &str = "tuple";

/// Terms built in `levels` rounds from `a`, `b`, `c`, `sqli` with binary
/// concatenation, encryption, a public and a nonpublic function.
pub fn universe(levels: usize) -> Vec<BTreeSet<Term>> {
    let mut by_level: Vec<BTreeSet<Term>> = Vec::new();
    let mut all: BTreeSet<Term> = ["a", "b", "c"].iter().map(|n| c(n)).collect();
    all.insert(Term::sqli());
    by_level.push(all.clone());
    for _ in 1..levels {
        let prev: Vec<Term> = all.iter().cloned().collect();
        let mut next = all.clone();
        for x in &prev {
            next.insert(Term::apply(PUBLIC_FN, x.clone()));
            next.insert(Term::apply(PRIVATE_FN, x.clone()));
            for y in &prev {
                next.insert(Term::concat([x.clone(), y.clone()]));
                next.insert(Term::enc(x.clone(), y.clone()));
            }
        }
        all = next;
        by_level.push(all.clone());
    }
    by_level
}

fn subterms(t: &Term, out: &mut BTreeSet<Term>) {
    out.insert(t.clone());
    match t {
        Term::Concat(ps) => ps.iter().for_each(|p| subterms(p, out)),
        Term::Apply(_, a) => subterms(a, out),
        Term::Enc(p, k) => {
            subterms(p, out);
            subterms(k, out);
        }
        _ => {}
    }
}

/// Least set of terms from `space` closed under the composition rules,
/// starting from `base`, computed by iteration to a fixpoint.
fn compose_fixpoint(base: &BTreeSet<Term>, space: &BTreeSet<Term>) -> BTreeSet<Term> {
    let mut der: BTreeSet<Term> = base.clone();
    loop {
        let mut grew = false;
        for t in space {
            if der.contains(t) {
                continue;
            }
            let ok = match t {
                Term::Concat(ps) => ps.iter().all(|p| der.contains(p)),
                Term::Apply(f, a) => f == PUBLIC_FN && der.contains(&**a),
                Term::Enc(p, k) => der.contains(&**p) && der.contains(&**k),
                _ => false,
            };
            if ok {
                der.insert(t.clone());
                grew = true;
            }
        }
        if !grew {
            return der;
        }
    }
}

/// Everything in `space` the intruder can obtain from `knowledge`:
/// decomposition to a fixpoint, then composition to a fixpoint.
pub fn brute_force_derivable(knowledge: &BTreeSet<Term>, space: &BTreeSet<Term>) -> BTreeSet<Term> {
    let mut full = space.clone();
    for k in knowledge {
        subterms(k, &mut full);
    }
    let mut dec = knowledge.clone();
    loop {
        let composed = compose_fixpoint(&dec, &full);
        let mut next = dec.clone();
        for t in &dec {
            match t {
                Term::Concat(ps) => next.extend(ps.iter().cloned()),
                Term::Enc(p, k) if composed.contains(&**k) => {
                    next.insert((**p).clone());
                }
                _ => {}
            }
        }
        if next == dec {
            return compose_fixpoint(&dec, &full);
        }
        dec = next;
    }
}

/// The literal reading of `inDB(M.sqli)`: a concatenation whose last
/// part is `sqli`, with `M` matching the remaining prefix.
pub fn literal_in_db(t: &Term) -> bool {
    matches!(t, Term::Concat(ps) if ps.len() >= 2 && ps.last() == Some(&Term::sqli()))
}
