//! First-order terms, positions, substitutions, the lexicographic path
//! ordering and normalization by a convergent rewrite system.
//!
//! Terms are hash-consed: structurally equal terms share one allocation, so
//! equality is a pointer comparison and subterm sets stay small.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

pub type Name = Arc<str>;

/// A path of 1-based argument indices; empty means the root.
pub type Position = Vec<usize>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TermError {
    #[error("term {0} is not ground")]
    NonGround(String),
    #[error("position {position:?} does not address a subterm of {term}")]
    InvalidPosition { term: String, position: Vec<usize> },
    #[error("rewrite step cap of {0} exceeded")]
    StepCapExceeded(usize),
    #[error("{0} is not a free constant")]
    NotAConstant(String),
    #[error("syntax error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Var(Name),
    Const { name: Name, nonce: bool },
    App { symbol: Name, args: Vec<Term> },
}

struct Node {
    kind: Kind,
    hash: u64,
    size: usize,
    ground: bool,
}

/// A hash-consed first-order term.
#[derive(Clone)]
pub struct Term(Arc<Node>);

fn interner() -> &'static Mutex<HashMap<Kind, Term>> {
    static TABLE: OnceLock<Mutex<HashMap<Kind, Term>>> = OnceLock::new();
    TABLE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Term {
    fn intern(kind: Kind) -> Term {
        let mut table = interner().lock().unwrap_or_else(|e| e.into_inner());
        if let Some(t) = table.get(&kind) {
            return t.clone();
        }
        let mut h = DefaultHasher::new();
        let (size, ground) = match &kind {
            Kind::Var(n) => {
                0u8.hash(&mut h);
                n.hash(&mut h);
                (1, false)
            }
            Kind::Const { name, nonce } => {
                1u8.hash(&mut h);
                name.hash(&mut h);
                nonce.hash(&mut h);
                (1, true)
            }
            Kind::App { symbol, args } => {
                2u8.hash(&mut h);
                symbol.hash(&mut h);
                for a in args {
                    a.0.hash.hash(&mut h);
                }
                (1 + args.iter().map(Term::size).sum::<usize>(), args.iter().all(Term::is_ground))
            }
        };
        let term = Term(Arc::new(Node { kind: kind.clone(), hash: h.finish(), size, ground }));
        table.insert(kind, term.clone());
        term
    }

    pub fn var(name: &str) -> Term {
        Term::intern(Kind::Var(name.into()))
    }

    pub fn constant(name: &str) -> Term {
        Term::intern(Kind::Const { name: name.into(), nonce: false })
    }

    pub fn nonce(name: &str) -> Term {
        Term::intern(Kind::Const { name: name.into(), nonce: true })
    }

    pub fn app(symbol: &str, args: Vec<Term>) -> Term {
        Term::intern(Kind::App { symbol: symbol.into(), args })
    }

    pub fn app_named(symbol: &Name, args: Vec<Term>) -> Term {
        Term::intern(Kind::App { symbol: symbol.clone(), args })
    }

    pub fn kind(&self) -> &Kind {
        &self.0.kind
    }

    pub fn size(&self) -> usize {
        self.0.size
    }

    pub fn is_ground(&self) -> bool {
        self.0.ground
    }

    pub fn is_var(&self) -> bool {
        matches!(self.kind(), Kind::Var(_))
    }

    pub fn is_nonce(&self) -> bool {
        matches!(self.kind(), Kind::Const { nonce: true, .. })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind(), Kind::Const { .. })
    }

    pub fn var_name(&self) -> Option<&Name> {
        match self.kind() {
            Kind::Var(n) => Some(n),
            _ => None,
        }
    }

    pub fn symbol(&self) -> Option<&Name> {
        match self.kind() {
            Kind::App { symbol, .. } => Some(symbol),
            _ => None,
        }
    }

    pub fn args(&self) -> &[Term] {
        match self.kind() {
            Kind::App { args, .. } => args,
            _ => &[],
        }
    }

    /// Rebuilds an application with new arguments; other terms are returned unchanged.
    pub fn with_args(&self, args: Vec<Term>) -> Term {
        match self.kind() {
            Kind::App { symbol, args: old } if *old != args => Term::app_named(symbol, args),
            _ => self.clone(),
        }
    }

    pub fn vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Name>) {
        if self.is_ground() {
            return;
        }
        match self.kind() {
            Kind::Var(n) => {
                out.insert(n.clone());
            }
            Kind::Const { .. } => {}
            Kind::App { args, .. } => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    /// Free constants (including nonces) in left-to-right first-occurrence order.
    pub fn constants_in_order(&self) -> Vec<Term> {
        let mut out = Vec::new();
        self.walk(&mut |t| {
            if t.is_constant() && !out.contains(t) {
                out.push(t.clone());
            }
        });
        out
    }

    /// Pre-order traversal.
    pub fn walk(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        for a in self.args() {
            a.walk(f);
        }
    }

    pub fn contains(&self, needle: &Term) -> bool {
        self == needle || self.args().iter().any(|a| a.contains(needle))
    }

    pub fn subterm_at(&self, position: &[usize]) -> Option<&Term> {
        match position.split_first() {
            None => Some(self),
            Some((&i, rest)) => self.args().get(i.checked_sub(1)?)?.subterm_at(rest),
        }
    }

    /// All positions of the term in pre-order.
    pub fn positions(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for (i, a) in self.args().iter().enumerate() {
            for mut p in a.positions() {
                p.insert(0, i + 1);
                out.push(p);
            }
        }
        out
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl Eq for Term {}

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        if self == other {
            std::cmp::Ordering::Equal
        } else {
            self.kind().cmp(other.kind())
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            Kind::Var(n) => write!(f, "?{n}"),
            Kind::Const { name, nonce: true } => write!(f, "~{name}"),
            Kind::Const { name, nonce: false } => write!(f, "{name}"),
            Kind::App { symbol, args } => {
                write!(f, "{symbol}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    at: usize,
}

impl Parser<'_> {
    fn fail<T>(&self, message: &str) -> Result<T, TermError> {
        Err(TermError::Parse { offset: self.at, message: message.to_string() })
    }

    fn skip_ws(&mut self) {
        while self.src.get(self.at).is_some_and(u8::is_ascii_whitespace) {
            self.at += 1;
        }
    }

    fn ident(&mut self) -> Result<&str, TermError> {
        let start = self.at;
        while self.src.get(self.at).is_some_and(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'@' | b'\'')) {
            self.at += 1;
        }
        if start == self.at {
            return self.fail("expected an identifier");
        }
        Ok(std::str::from_utf8(&self.src[start..self.at]).expect("ascii slice"))
    }

    fn term(&mut self) -> Result<Term, TermError> {
        self.skip_ws();
        match self.src.get(self.at) {
            Some(b'?') => {
                self.at += 1;
                Ok(Term::var(self.ident()?))
            }
            Some(b'~') => {
                self.at += 1;
                Ok(Term::nonce(self.ident()?))
            }
            Some(_) => {
                let name = self.ident()?.to_string();
                self.skip_ws();
                if self.src.get(self.at) != Some(&b'(') {
                    return Ok(Term::constant(&name));
                }
                self.at += 1;
                let mut args = Vec::new();
                self.skip_ws();
                if self.src.get(self.at) == Some(&b')') {
                    self.at += 1;
                    return Ok(Term::app(&name, args));
                }
                loop {
                    args.push(self.term()?);
                    self.skip_ws();
                    match self.src.get(self.at) {
                        Some(b',') => self.at += 1,
                        Some(b')') => {
                            self.at += 1;
                            return Ok(Term::app(&name, args));
                        }
                        _ => return self.fail("expected ',' or ')'"),
                    }
                }
            }
            None => self.fail("unexpected end of input"),
        }
    }
}

impl std::str::FromStr for Term {
    type Err = TermError;

    fn from_str(s: &str) -> Result<Term, TermError> {
        let mut parser = Parser { src: s.as_bytes(), at: 0 };
        let t = parser.term()?;
        parser.skip_ws();
        if parser.at != s.len() {
            return parser.fail("trailing input");
        }
        Ok(t)
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

pub fn subterms(t: &Term) -> BTreeSet<Term> {
    let mut out = BTreeSet::new();
    t.walk(&mut |s| {
        out.insert(s.clone());
    });
    out
}

pub fn replace_at(t: &Term, position: &[usize], s: &Term) -> Result<Term, TermError> {
    let invalid = || TermError::InvalidPosition { term: t.to_string(), position: position.to_vec() };
    match position.split_first() {
        None => Ok(s.clone()),
        Some((&i, rest)) => {
            if i == 0 || i > t.args().len() {
                return Err(invalid());
            }
            let mut args = t.args().to_vec();
            args[i - 1] = replace_at(&args[i - 1], rest, s).map_err(|_| invalid())?;
            Ok(t.with_args(args))
        }
    }
}

/// Replaces every occurrence of the free constant `c` by `s`.
pub fn replace_const(t: &Term, c: &Term, s: &Term) -> Result<Term, TermError> {
    if !c.is_constant() {
        return Err(TermError::NotAConstant(c.to_string()));
    }
    Ok(replace_term(t, c, s))
}

/// Replaces every occurrence of the subterm `from` by `to`.
pub fn replace_term(t: &Term, from: &Term, to: &Term) -> Term {
    if t == from {
        return to.clone();
    }
    if t.args().is_empty() {
        return t.clone();
    }
    t.with_args(t.args().iter().map(|a| replace_term(a, from, to)).collect())
}

/// A finite map from variable names to terms.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Substitution(BTreeMap<Name, Term>);

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (Name, Term)>>(pairs: I) -> Self {
        Substitution(pairs.into_iter().collect())
    }

    pub fn get(&self, var: &str) -> Option<&Term> {
        self.0.get(var)
    }

    pub fn insert(&mut self, var: Name, t: Term) {
        self.0.insert(var, t);
    }

    pub fn remove(&mut self, var: &str) -> Option<Term> {
        self.0.remove(var)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Term)> {
        self.0.iter()
    }

    pub fn domain(&self) -> impl Iterator<Item = &Name> {
        self.0.keys()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, t: &Term) -> Term {
        if t.is_ground() || self.0.is_empty() {
            return t.clone();
        }
        match t.kind() {
            Kind::Var(n) => self.0.get(n).cloned().unwrap_or_else(|| t.clone()),
            Kind::Const { .. } => t.clone(),
            Kind::App { args, .. } => t.with_args(args.iter().map(|a| self.apply(a)).collect()),
        }
    }

    /// `self` followed by `then`: x(self.compose(then)) = (x self) then.
    pub fn compose(&self, then: &Substitution) -> Substitution {
        let mut out: BTreeMap<Name, Term> = self.0.iter().map(|(k, v)| (k.clone(), then.apply(v))).collect();
        for (k, v) in &then.0 {
            out.entry(k.clone()).or_insert_with(|| v.clone());
        }
        out.retain(|k, v| v.var_name() != Some(k));
        Substitution(out)
    }

    pub fn restrict(&self, vars: &BTreeSet<Name>) -> Substitution {
        Substitution(self.0.iter().filter(|(k, _)| vars.contains(*k)).map(|(k, v)| (k.clone(), v.clone())).collect())
    }

    pub fn is_idempotent(&self) -> bool {
        self.0.values().all(|t| t.vars().iter().all(|v| !self.0.contains_key(v)))
    }

    pub fn is_ground(&self) -> bool {
        self.0.values().all(Term::is_ground)
    }

    pub fn map_images(&self, mut f: impl FnMut(&Term) -> Term) -> Substitution {
        Substitution(self.0.iter().map(|(k, v)| (k.clone(), f(v))).collect())
    }
}

impl fmt::Debug for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "?{k}↦{v}")?;
        }
        write!(f, "}}")
    }
}

pub fn apply_subst(sigma: &Substitution, t: &Term) -> Term {
    sigma.apply(t)
}

/// Generator of variables that cannot clash with parsed identifiers.
#[derive(Debug, Clone)]
pub struct Fresh {
    prefix: String,
    next: usize,
}

impl Fresh {
    pub fn new(prefix: &str) -> Self {
        Fresh { prefix: format!("_{prefix}"), next: 0 }
    }

    /// Starts numbering past every name in `taken` that shares the prefix.
    pub fn avoiding<'a>(prefix: &str, taken: impl IntoIterator<Item = &'a Name>) -> Self {
        let mut fresh = Fresh::new(prefix);
        for name in taken {
            if let Some(n) = name.strip_prefix(fresh.prefix.as_str()).and_then(|d| d.parse::<usize>().ok()) {
                fresh.next = fresh.next.max(n);
            }
        }
        fresh
    }

    pub fn var(&mut self) -> Term {
        self.next += 1;
        Term::var(&format!("{}{}", self.prefix, self.next))
    }
}

/// Syntactic matching: extends `theta` so that `pattern theta = term`.
pub fn match_into(pattern: &Term, term: &Term, theta: &mut BTreeMap<Name, Term>) -> bool {
    match pattern.kind() {
        Kind::Var(n) => match theta.get(n) {
            Some(bound) => bound == term,
            None => {
                theta.insert(n.clone(), term.clone());
                true
            }
        },
        Kind::Const { .. } => pattern == term,
        Kind::App { symbol, args } => match term.kind() {
            Kind::App { symbol: s2, args: a2 } if s2 == symbol && a2.len() == args.len() => {
                args.iter().zip(a2).all(|(p, t)| match_into(p, t, theta))
            }
            _ => false,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Symbol {
    pub name: Name,
    pub arity: usize,
    pub public: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub lhs: Term,
    pub rhs: Term,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteSystem {
    pub rules: Vec<Rule>,
    /// Function symbols from least to greatest.
    pub precedence: Vec<Name>,
    pub c_min: Name,
    pub step_cap: usize,
}

pub const DEFAULT_STEP_CAP: usize = 10_000;

impl RewriteSystem {
    pub fn new(rules: Vec<Rule>, precedence: Vec<Name>, c_min: &str) -> Self {
        RewriteSystem { rules, precedence, c_min: c_min.into(), step_cap: DEFAULT_STEP_CAP }
    }

    fn symbol_rank(&self, s: &Name) -> usize {
        self.precedence.iter().position(|p| p == s).unwrap_or(usize::MAX)
    }

    fn const_key<'a>(&self, name: &'a Name, nonce: bool) -> (bool, &'a str, bool) {
        (!(**name == *self.c_min && !nonce), name, nonce)
    }

    pub fn lpo_greater(&self, s: &Term, t: &Term) -> Result<bool, TermError> {
        for u in [s, t] {
            if !u.is_ground() {
                return Err(TermError::NonGround(u.to_string()));
            }
        }
        Ok(self.lpo_gt(s, t))
    }

    fn lpo_gt(&self, s: &Term, t: &Term) -> bool {
        if s == t {
            return false;
        }
        match (s.kind(), t.kind()) {
            (Kind::Const { name: a, nonce: na }, Kind::Const { name: b, nonce: nb }) => {
                self.const_key(a, *na) > self.const_key(b, *nb)
            }
            (Kind::Const { .. }, _) => false,
            (Kind::App { args, .. }, _) if args.iter().any(|a| a == t || self.lpo_gt(a, t)) => true,
            (Kind::App { .. }, Kind::Const { .. }) => true,
            (Kind::App { symbol: f, args: ss }, Kind::App { symbol: g, args: ts }) => {
                let (rf, rg) = (self.symbol_rank(f), self.symbol_rank(g));
                let dominates = || ts.iter().all(|tj| self.lpo_gt(s, tj));
                if rf > rg || (rf == rg && f > g) {
                    dominates()
                } else if f == g {
                    match ss.iter().zip(ts).find(|(a, b)| a != b) {
                        Some((a, b)) => self.lpo_gt(a, b) && dominates(),
                        None => ss.len() > ts.len() && dominates(),
                    }
                } else {
                    false
                }
            }
            _ => false,
        }
    }

    /// Innermost-leftmost normal form of a ground term.
    pub fn normalize(&self, t: &Term) -> Result<Term, TermError> {
        if !t.is_ground() {
            return Err(TermError::NonGround(t.to_string()));
        }
        let mut steps = 0;
        self.rewrite(t, &mut steps)
    }

    /// Normal form of a term whose arguments are already in normal form.
    pub fn normalize_root(&self, t: &Term) -> Result<Term, TermError> {
        let mut steps = 0;
        self.rewrite_root(t.clone(), &mut steps)
    }

    /// Rewrites a possibly non-ground term with the rules, treating variables
    /// as opaque. Sound as an equational step; not a normal-form oracle.
    pub fn simplify(&self, t: &Term) -> Result<Term, TermError> {
        let mut steps = 0;
        self.rewrite(t, &mut steps)
    }

    fn rewrite(&self, t: &Term, steps: &mut usize) -> Result<Term, TermError> {
        if t.args().is_empty() {
            return self.rewrite_root(t.clone(), steps);
        }
        let args = t.args().iter().map(|a| self.rewrite(a, steps)).collect::<Result<Vec<_>, _>>()?;
        self.rewrite_root(t.with_args(args), steps)
    }

    fn rewrite_root(&self, t: Term, steps: &mut usize) -> Result<Term, TermError> {
        for rule in &self.rules {
            let mut theta = BTreeMap::new();
            if match_into(&rule.lhs, &t, &mut theta) {
                *steps += 1;
                if *steps > self.step_cap {
                    return Err(TermError::StepCapExceeded(self.step_cap));
                }
                let reduct = Substitution(theta).apply(&rule.rhs);
                return self.rewrite(&reduct, steps);
            }
        }
        Ok(t)
    }

    pub fn is_normal(&self, t: &Term) -> bool {
        t.args().iter().all(|a| self.is_normal(a))
            && !self.rules.iter().any(|r| match_into(&r.lhs, t, &mut BTreeMap::new()))
    }
}

/// Equational theory given by a convergent rewrite system, together with the
/// signature and its public part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeductionSystem {
    pub symbols: Vec<Symbol>,
    pub rewrite: RewriteSystem,
}

impl DeductionSystem {
    pub fn symbol(&self, name: &str) -> Option<&Symbol> {
        self.symbols.iter().find(|s| &*s.name == name)
    }

    pub fn is_public(&self, name: &str) -> bool {
        self.symbol(name).is_some_and(|s| s.public)
    }

    pub fn public_symbols(&self) -> impl Iterator<Item = &Symbol> {
        self.symbols.iter().filter(|s| s.public)
    }

    pub fn normalize(&self, t: &Term) -> Result<Term, TermError> {
        self.rewrite.normalize(t)
    }

    /// Normal form of `symbol(args)` for arguments already in normal form.
    pub fn apply_normal(&self, symbol: &str, args: Vec<Term>) -> Result<Term, TermError> {
        self.rewrite.normalize_root(&Term::app(symbol, args))
    }

    pub fn simplify(&self, t: &Term) -> Term {
        self.rewrite.simplify(t).unwrap_or_else(|_| t.clone())
    }

    pub fn lpo_greater(&self, s: &Term, t: &Term) -> Result<bool, TermError> {
        self.rewrite.lpo_greater(s, t)
    }

    pub fn c_min(&self) -> Term {
        Term::constant(&self.rewrite.c_min)
    }

    /// Checks `l > r` on a deterministic sample of ground instances of every rule.
    pub fn orientation_failures(&self, samples_per_rule: usize) -> Vec<(Rule, Term, Term)> {
        let mut pool = vec![self.c_min(), Term::constant("a"), Term::constant("b")];
        let base = pool.clone();
        for s in &self.symbols {
            if s.arity == 0 {
                pool.push(Term::app_named(&s.name, vec![]));
            } else {
                let args = (0..s.arity).map(|i| base[i % base.len()].clone()).collect();
                pool.push(Term::app_named(&s.name, args));
            }
        }
        let mut failures = Vec::new();
        for rule in &self.rewrite.rules {
            let vars: Vec<Name> = rule.lhs.vars().into_iter().collect();
            let total = pool.len().checked_pow(vars.len() as u32).unwrap_or(usize::MAX);
            for n in 0..samples_per_rule.min(total.max(1)) {
                let mut k = n;
                let sigma = Substitution::from_pairs(vars.iter().map(|v| {
                    let t = pool[k % pool.len()].clone();
                    k /= pool.len();
                    (v.clone(), t)
                }));
                let (l, r) = (sigma.apply(&rule.lhs), sigma.apply(&rule.rhs));
                if !self.rewrite.lpo_gt(&l, &r) {
                    failures.push((rule.clone(), l, r));
                    break;
                }
            }
        }
        failures
    }
}
