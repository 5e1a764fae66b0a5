//! Message algebra: constants, variables, flattened concatenation,
//! uninterpreted function application and encryption.
//!
//! Terms are immutable values. Concatenation is associative (stored
//! flattened) but not commutative.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

/// The constant standing for any SQL injection payload.
pub const SQLI: &str = "sqli";

/// Name of the intruder in rendered traces and initial knowledge.
pub const INTRUDER: &str = "i";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Const(String),
    Var(String),
    /// Always at least two parts, none of which is itself a `Concat`.
    Concat(Vec<Term>),
    Apply(String, Box<Term>),
    Enc(Box<Term>, Box<Term>),
    /// Matches any ground term without binding. Only meaningful in patterns.
    Wildcard,
}

impl Term {
    pub fn constant(name: impl Into<String>) -> Term {
        Term::Const(name.into())
    }

    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn apply(symbol: impl Into<String>, arg: Term) -> Term {
        Term::Apply(symbol.into(), Box::new(arg))
    }

    pub fn enc(payload: Term, key: Term) -> Term {
        Term::Enc(Box::new(payload), Box::new(key))
    }

    pub fn sqli() -> Term {
        Term::Const(SQLI.to_string())
    }

    /// Builds a canonical concatenation: nested concatenations are spliced
    /// in place and a single part collapses to the part itself.
    ///
    /// Panics on an empty part list.
    pub fn concat<I: IntoIterator<Item = Term>>(parts: I) -> Term {
        let mut flat = Vec::new();
        for part in parts {
            match part {
                Term::Concat(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => panic!("concatenation of zero parts"),
            1 => flat.pop().unwrap(),
            _ => Term::Concat(flat),
        }
    }

    /// The parts of a concatenation, or the term itself as a single part.
    pub fn parts(&self) -> &[Term] {
        match self {
            Term::Concat(parts) => parts,
            other => std::slice::from_ref(other),
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Const(_) => true,
            Term::Var(_) | Term::Wildcard => false,
            Term::Concat(parts) => parts.iter().all(Term::is_ground),
            Term::Apply(_, arg) => arg.is_ground(),
            Term::Enc(p, k) => p.is_ground() && k.is_ground(),
        }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Term::Const(_) | Term::Var(_) | Term::Wildcard)
    }

    /// Re-flattens every concatenation in the term.
    pub fn canonicalize(&self) -> Term {
        match self {
            Term::Concat(parts) => Term::concat(parts.iter().map(Term::canonicalize)),
            Term::Apply(f, arg) => Term::apply(f.clone(), arg.canonicalize()),
            Term::Enc(p, k) => Term::enc(p.canonicalize(), k.canonicalize()),
            other => other.clone(),
        }
    }

    /// Nesting depth: atoms have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Term::Const(_) | Term::Var(_) | Term::Wildcard => 1,
            Term::Concat(parts) => 1 + parts.iter().map(Term::depth).max().unwrap_or(0),
            Term::Apply(_, arg) => 1 + arg.depth(),
            Term::Enc(p, k) => 1 + p.depth().max(k.depth()),
        }
    }

    /// Variables in first-occurrence order, without duplicates.
    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Term::Concat(parts) => parts.iter().for_each(|p| p.collect_vars(out)),
            Term::Apply(_, arg) => arg.collect_vars(out),
            Term::Enc(p, k) => {
                p.collect_vars(out);
                k.collect_vars(out);
            }
            Term::Const(_) | Term::Wildcard => {}
        }
    }

    /// Constant names occurring in the term.
    pub fn constants(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |t| {
            if let Term::Const(c) = t {
                if !out.contains(c) {
                    out.push(c.clone());
                }
            }
        });
        out
    }

    /// Function symbols occurring in the term.
    pub fn symbols(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |t| {
            if let Term::Apply(f, _) = t {
                if !out.contains(f) {
                    out.push(f.clone());
                }
            }
        });
        out
    }

    pub fn contains_wildcard(&self) -> bool {
        let mut found = false;
        self.visit(&mut |t| found |= matches!(t, Term::Wildcard));
        found
    }

    /// Pre-order traversal over every subterm position (concatenation parts
    /// are visited individually).
    pub fn visit<F: FnMut(&Term)>(&self, f: &mut F) {
        f(self);
        match self {
            Term::Concat(parts) => parts.iter().for_each(|p| p.visit(f)),
            Term::Apply(_, arg) => arg.visit(f),
            Term::Enc(p, k) => {
                p.visit(f);
                k.visit(f);
            }
            _ => {}
        }
    }

    /// True if the term is a concatenation whose final part is `sqli`.
    pub fn ends_with_sqli(&self) -> bool {
        matches!(self, Term::Concat(parts) if parts.last() == Some(&Term::sqli()))
    }

    fn rank(&self) -> u8 {
        match self {
            Term::Const(_) => 0,
            Term::Var(_) => 1,
            Term::Apply(..) => 2,
            Term::Enc(..) => 3,
            Term::Concat(_) => 4,
            Term::Wildcard => 5,
        }
    }
}

/// Total order: constructor rank (constant < variable < application <
/// encryption < concatenation < wildcard), then names, then children.
pub fn term_order(a: &Term, b: &Term) -> Ordering {
    a.rank().cmp(&b.rank()).then_with(|| match (a, b) {
        (Term::Const(x), Term::Const(y)) | (Term::Var(x), Term::Var(y)) => x.cmp(y),
        (Term::Apply(f, x), Term::Apply(g, y)) => f.cmp(g).then_with(|| term_order(x, y)),
        (Term::Enc(p1, k1), Term::Enc(p2, k2)) => {
            term_order(p1, p2).then_with(|| term_order(k1, k2))
        }
        (Term::Concat(xs), Term::Concat(ys)) => {
            for (x, y) in xs.iter().zip(ys) {
                let o = term_order(x, y);
                if o != Ordering::Equal {
                    return o;
                }
            }
            xs.len().cmp(&ys.len())
        }
        _ => Ordering::Equal,
    })
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        term_order(self, other)
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) | Term::Var(c) => write!(f, "{c}"),
            Term::Wildcard => write!(f, "?"),
            Term::Concat(parts) => {
                for (i, part) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ".")?;
                    }
                    write!(f, "{part}")?;
                }
                Ok(())
            }
            Term::Apply(sym, arg) => write!(f, "{sym}({arg})"),
            Term::Enc(p, k) => {
                write!(f, "{{{p}}}_")?;
                if k.is_atomic() {
                    write!(f, "{k}")
                } else {
                    write!(f, "({k})")
                }
            }
        }
    }
}

/// Submessage relation on ground terms. Because concatenation is
/// associative, any contiguous run of two or more parts of a concatenation
/// is a submessage of it as well.
pub fn is_submessage(m1: &Term, m2: &Term) -> bool {
    if m1 == m2 {
        return true;
    }
    match m2 {
        Term::Concat(parts) => {
            if let Term::Concat(needle) = m1 {
                if needle.len() < parts.len()
                    && parts.windows(needle.len()).any(|w| w == needle.as_slice())
                {
                    return true;
                }
            }
            parts.iter().any(|p| is_submessage(m1, p))
        }
        Term::Apply(_, arg) => is_submessage(m1, arg),
        Term::Enc(p, k) => is_submessage(m1, p) || is_submessage(m1, k),
        _ => false,
    }
}

/// Finite map from variable names to terms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Substitution(BTreeMap<String, Term>);

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, var: &str) -> Option<&Term> {
        self.0.get(var)
    }

    pub fn contains(&self, var: &str) -> bool {
        self.0.contains_key(var)
    }

    /// Binds `var`, overwriting any previous binding.
    pub fn bind(&mut self, var: impl Into<String>, value: Term) {
        self.0.insert(var.into(), value);
    }

    pub fn with(mut self, var: impl Into<String>, value: Term) -> Self {
        self.bind(var, value);
        self
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Term)> {
        self.0.iter()
    }

    /// Values in variable-name order; used for deterministic ordering.
    pub fn range(&self) -> Vec<&Term> {
        self.0.values().collect()
    }

    pub fn apply(&self, t: &Term) -> Term {
        apply_subst(self, t)
    }
}

impl FromIterator<(String, Term)> for Substitution {
    fn from_iter<I: IntoIterator<Item = (String, Term)>>(iter: I) -> Self {
        Substitution(iter.into_iter().collect())
    }
}

/// Homomorphic replacement of bound variables; the result is re-flattened.
pub fn apply_subst(s: &Substitution, t: &Term) -> Term {
    match t {
        Term::Var(v) => s.get(v).cloned().unwrap_or_else(|| t.clone()),
        Term::Concat(parts) => Term::concat(parts.iter().map(|p| apply_subst(s, p))),
        Term::Apply(f, arg) => Term::apply(f.clone(), apply_subst(s, arg)),
        Term::Enc(p, k) => Term::enc(apply_subst(s, p), apply_subst(s, k)),
        Term::Const(_) | Term::Wildcard => t.clone(),
    }
}

/// Syntactic matching of a pattern against a ground term.
///
/// Unbound variables bind, bound ones must agree, and `Wildcard` accepts
/// anything. Inside a concatenation every flexible part (unbound variable or
/// wildcard) takes exactly one part of the target, except the rightmost
/// flexible part, which absorbs however many parts remain. This keeps the
/// result unique.
pub fn match_term(p: &Term, t: &Term) -> Option<Substitution> {
    match_with(p, t, &Substitution::new())
}

/// Like [`match_term`], extending an existing substitution.
pub fn match_with(p: &Term, t: &Term, base: &Substitution) -> Option<Substitution> {
    let mut s = base.clone();
    if match_into(&apply_subst(base, p), t, &mut s) && instance_of(&apply_subst(&s, p), t) {
        Some(s)
    } else {
        None
    }
}

fn match_into(p: &Term, t: &Term, s: &mut Substitution) -> bool {
    let p = apply_subst(s, p);
    match (&p, t) {
        (Term::Wildcard, _) => true,
        (Term::Var(v), _) => {
            s.bind(v.clone(), t.clone());
            true
        }
        (Term::Const(a), Term::Const(b)) => a == b,
        (Term::Apply(f, x), Term::Apply(g, y)) => f == g && match_into(x, y, s),
        (Term::Enc(p1, k1), Term::Enc(p2, k2)) => match_into(p1, p2, s) && match_into(k1, k2, s),
        (Term::Concat(ps), _) => {
            let ts = t.parts();
            let flexible = |x: &Term| matches!(x, Term::Var(_) | Term::Wildcard);
            let absorb = ps.iter().rposition(flexible);
            if ps.len() > ts.len() || (absorb.is_none() && ps.len() != ts.len()) {
                return false;
            }
            let extra = ts.len() - ps.len();
            for (i, part) in ps.iter().enumerate() {
                let ok = match absorb {
                    Some(a) if i == a => {
                        match_into(part, &Term::concat(ts[i..=i + extra].iter().cloned()), s)
                    }
                    Some(a) if i > a => match_into(part, &ts[i + extra], s),
                    _ => match_into(part, &ts[i], s),
                };
                if !ok {
                    return false;
                }
            }
            true
        }
        _ => false,
    }
}

/// True if `t` is an instance of `p` treating wildcards as "anything"
/// (variables must already be substituted away).
pub fn instance_of(p: &Term, t: &Term) -> bool {
    if !p.contains_wildcard() {
        return p == t;
    }
    match (p, t) {
        (Term::Wildcard, _) => true,
        (Term::Apply(f, x), Term::Apply(g, y)) => f == g && instance_of(x, y),
        (Term::Enc(p1, k1), Term::Enc(p2, k2)) => instance_of(p1, p2) && instance_of(k1, k2),
        (Term::Concat(_), _) => {
            let mut s = Substitution::new();
            match_into(p, t, &mut s) && s.is_empty()
        }
        _ => false,
    }
}
