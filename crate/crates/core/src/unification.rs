//! Syntactic unification, equational unification by basic narrowing,
//! satisfaction of unification systems and the instantiation ordering.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::terms::{DeductionSystem, Fresh, Kind, Name, Substitution, Term, TermError};

pub const DEFAULT_NARROWING_DEPTH: usize = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UnifyError {
    #[error("narrowing depth cap of {0} exceeded")]
    DepthCapExceeded(usize),
    #[error("substitution does not ground equation {0}")]
    NonGrounding(String),
    #[error(transparent)]
    Term(#[from] TermError),
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Equation {
    pub left: Term,
    pub right: Term,
}

impl Equation {
    pub fn new(left: Term, right: Term) -> Self {
        Equation { left, right }
    }
}

impl fmt::Debug for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} =? {}", self.left, self.right)
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} =? {}", self.left, self.right)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UnificationSystem(pub Vec<Equation>);

impl UnificationSystem {
    pub fn new(equations: Vec<Equation>) -> Self {
        UnificationSystem(equations)
    }

    pub fn single(left: Term, right: Term) -> Self {
        UnificationSystem(vec![Equation::new(left, right)])
    }

    pub fn vars(&self) -> BTreeSet<Name> {
        self.0.iter().flat_map(|e| e.left.vars().into_iter().chain(e.right.vars())).collect()
    }
}

/// A finite list of unifiers, none an instance of another.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UnifierSet(pub Vec<Substitution>);

impl UnifierSet {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Substitution> {
        self.0.iter()
    }
}

fn occurs(var: &Name, t: &Term) -> bool {
    match t.kind() {
        Kind::Var(n) => n == var,
        Kind::Const { .. } => false,
        Kind::App { args, .. } => !t.is_ground() && args.iter().any(|a| occurs(var, a)),
    }
}

/// Extends the idempotent `sigma` to a most general unifier of `pairs`.
pub(crate) fn unify_into(mut pairs: Vec<(Term, Term)>, sigma: &mut Substitution) -> bool {
    while let Some((a, b)) = pairs.pop() {
        let (a, b) = (sigma.apply(&a), sigma.apply(&b));
        if a == b {
            continue;
        }
        match (a.kind(), b.kind()) {
            (Kind::Var(x), _) => {
                if occurs(x, &b) {
                    return false;
                }
                *sigma = sigma.compose(&Substitution::from_pairs([(x.clone(), b.clone())]));
            }
            (_, Kind::Var(_)) => pairs.push((b, a)),
            (Kind::App { symbol: f, args: xs }, Kind::App { symbol: g, args: ys })
                if f == g && xs.len() == ys.len() =>
            {
                pairs.extend(xs.iter().cloned().zip(ys.iter().cloned()));
            }
            _ => return false,
        }
    }
    true
}

pub fn unify_syntactic(system: &UnificationSystem) -> Option<Substitution> {
    let mut sigma = Substitution::new();
    let pairs = system.0.iter().map(|e| (e.left.clone(), e.right.clone())).collect();
    unify_into(pairs, &mut sigma).then_some(sigma)
}

/// Search state of basic narrowing: the skeleton keeps only positions that
/// stem from the input or from right-hand sides.
struct Narrowing<'a> {
    theory: &'a DeductionSystem,
    cap: usize,
    fresh: Fresh,
    goal_vars: BTreeSet<Name>,
    found: Vec<Substitution>,
    exceeded: bool,
}

impl Narrowing<'_> {
    fn search(&mut self, skeleton: &[(Term, Term)], sigma: &Substitution, depth: usize) {
        let mut answer = sigma.clone();
        let pairs = skeleton.iter().map(|(l, r)| (sigma.apply(l), sigma.apply(r))).collect();
        if unify_into(pairs, &mut answer) {
            let answer = answer.restrict(&self.goal_vars).map_images(|t| self.theory.simplify(t));
            if !self.found.contains(&answer) {
                self.found.push(answer);
            }
        }
        for (eq_index, (l, r)) in skeleton.iter().enumerate() {
            for (side, term) in [(0, l), (1, r)] {
                for position in term.positions() {
                    let sub = term.subterm_at(&position).expect("position from the term itself");
                    if sub.is_var() || sub.args().is_empty() {
                        continue;
                    }
                    for rule_index in 0..self.theory.rewrite.rules.len() {
                        let (lhs, rhs) = self.renamed_rule(rule_index);
                        let mut mu = sigma.clone();
                        if !unify_into(vec![(sigma.apply(sub), lhs)], &mut mu) {
                            continue;
                        }
                        if depth >= self.cap {
                            self.exceeded = true;
                            continue;
                        }
                        let replaced =
                            crate::terms::replace_at(term, &position, &rhs).expect("position from the term itself");
                        let mut next = skeleton.to_vec();
                        if side == 0 {
                            next[eq_index].0 = replaced;
                        } else {
                            next[eq_index].1 = replaced;
                        }
                        self.search(&next, &mu, depth + 1);
                    }
                }
            }
        }
    }

    fn renamed_rule(&mut self, index: usize) -> (Term, Term) {
        let rule = &self.theory.rewrite.rules[index];
        let renaming = Substitution::from_pairs(rule.lhs.vars().into_iter().map(|v| (v, self.fresh.var())));
        (renaming.apply(&rule.lhs), renaming.apply(&rule.rhs))
    }
}

/// A complete, minimized set of E-unifiers computed by basic narrowing.
pub fn e_unify(system: &UnificationSystem, theory: &DeductionSystem) -> Result<UnifierSet, UnifyError> {
    e_unify_with_depth(system, theory, DEFAULT_NARROWING_DEPTH)
}

pub fn e_unify_with_depth(
    system: &UnificationSystem,
    theory: &DeductionSystem,
    depth: usize,
) -> Result<UnifierSet, UnifyError> {
    let goal_vars = system.vars();
    let mut search = Narrowing {
        theory,
        cap: depth,
        fresh: Fresh::avoiding("e", &goal_vars),
        goal_vars,
        found: Vec::new(),
        exceeded: false,
    };
    let skeleton: Vec<(Term, Term)> = system.0.iter().map(|e| (e.left.clone(), e.right.clone())).collect();
    search.search(&skeleton, &Substitution::new(), 0);
    if search.exceeded {
        return Err(UnifyError::DepthCapExceeded(depth));
    }
    Ok(minimize(search.found, theory))
}

fn minimize(candidates: Vec<Substitution>, theory: &DeductionSystem) -> UnifierSet {
    let n = candidates.len();
    let mut keep = vec![true; n];
    for j in 0..n {
        for i in 0..n {
            if i == j || !keep[i] {
                continue;
            }
            if is_more_general(&candidates[i], &candidates[j], theory)
                && (i < j || !is_more_general(&candidates[j], &candidates[i], theory))
            {
                keep[j] = false;
                break;
            }
        }
    }
    UnifierSet(candidates.into_iter().zip(keep).filter_map(|(s, k)| k.then_some(s)).collect())
}

pub fn satisfies(
    sigma: &Substitution,
    system: &UnificationSystem,
    theory: &DeductionSystem,
) -> Result<bool, UnifyError> {
    for eq in &system.0 {
        let (l, r) = (sigma.apply(&eq.left), sigma.apply(&eq.right));
        if !l.is_ground() || !r.is_ground() {
            return Err(UnifyError::NonGrounding(eq.to_string()));
        }
        if theory.normalize(&l)? != theory.normalize(&r)? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn frozen(name: &Name) -> Term {
    Term::constant(&format!("?{name}"))
}

/// Decides whether some θ satisfies σθ =E τ on the variables bound by either
/// substitution. Variables of τ are treated as constants.
pub fn is_more_general(sigma: &Substitution, tau: &Substitution, theory: &DeductionSystem) -> bool {
    let domain: BTreeSet<Name> = sigma.domain().chain(tau.domain()).cloned().collect();
    let freeze = |t: &Term| {
        let mut out = t.clone();
        for v in t.vars() {
            out = crate::terms::replace_term(&out, &Term::var(&v), &frozen(&v));
        }
        out
    };
    let equations = domain
        .iter()
        .map(|x| {
            let var = Term::var(x);
            Equation::new(sigma.apply(&var), freeze(&tau.apply(&var)))
        })
        .collect();
    let system = UnificationSystem(equations);
    if let Some(theta) = unify_syntactic(&system) {
        let _ = theta;
        return true;
    }
    matches!(e_unify_unminimized(&system, theory), Ok(found) if !found.is_empty())
}

fn e_unify_unminimized(system: &UnificationSystem, theory: &DeductionSystem) -> Result<Vec<Substitution>, UnifyError> {
    let goal_vars = system.vars();
    let mut search = Narrowing {
        theory,
        cap: DEFAULT_NARROWING_DEPTH,
        fresh: Fresh::avoiding("e", &goal_vars),
        goal_vars,
        found: Vec::new(),
        exceeded: false,
    };
    let skeleton: Vec<(Term, Term)> = system.0.iter().map(|e| (e.left.clone(), e.right.clone())).collect();
    search.search(&skeleton, &Substitution::new(), 0);
    Ok(search.found)
}
