//! Symbolic derivations: indexed states with a partial order, knowledge,
//! input and output states, and equality tests between states.

mod connect;
mod decompose;
pub(crate) mod json;
mod leq;
mod open;
mod trace;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::terms::{DeductionSystem, Name, Term, TermError};
use crate::unification::{Equation, UnificationSystem};

pub use connect::{connect, Connected, Connection};
pub use decompose::{decompose, Decomposition};
pub use json::{from_json, to_json};
pub use leq::{asd_leq, LeqBudget, LeqCertificate, LeqOutcome};
pub use open::{canonicalize_nonces, isomorphic, open_on};
pub use trace::{trace, trace_along, Evaluation, Trace};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateKind {
    Deduction { symbol: Name, args: Vec<usize> },
    Reuse(usize),
    Memory(Term),
    Reception,
}

impl StateKind {
    pub fn deduction(symbol: &str, args: &[usize]) -> StateKind {
        StateKind::Deduction { symbol: symbol.into(), args: args.to_vec() }
    }

    pub fn is_deduction(&self) -> bool {
        matches!(self, StateKind::Deduction { .. })
    }

    pub fn is_memory(&self) -> bool {
        matches!(self, StateKind::Memory(_))
    }

    pub fn is_reception(&self) -> bool {
        matches!(self, StateKind::Reception)
    }

    /// States this one reads from.
    pub fn sources(&self) -> Vec<usize> {
        match self {
            StateKind::Deduction { args, .. } => args.clone(),
            StateKind::Reuse(j) => vec![*j],
            _ => Vec::new(),
        }
    }
}

/// Which refinement `validate` should additionally enforce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Class {
    Any,
    Honest,
    Attacker,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DerivationError {
    #[error("index {0} is referenced but has no state")]
    UnknownIndex(usize),
    #[error("index {0} is declared twice")]
    DuplicateIndex(usize),
    #[error("the order relation has a cycle through {0}")]
    CyclicOrder(usize),
    #[error("deduction state {state} reads argument {arg} that is not before it")]
    ArgumentNotBefore { state: usize, arg: usize },
    #[error("re-use state {state} points to {target} that is not before it")]
    ReuseNotBefore { state: usize, target: usize },
    #[error("deduction state {state} applies unknown symbol {symbol}")]
    UnknownSymbol { state: usize, symbol: String },
    #[error("deduction state {state} applies private symbol {symbol}")]
    PrivateSymbol { state: usize, symbol: String },
    #[error("deduction state {state}: {symbol} expects {expected} arguments, got {found}")]
    ArityMismatch { state: usize, symbol: String, expected: usize, found: usize },
    #[error("memory state {0} holds a non-ground term")]
    NonGroundMemory(usize),
    #[error("memory state {state} holds {term}, which is not in the knowledge")]
    MemoryNotInKnowledge { state: usize, term: String },
    #[error("knowledge term {0} is not ground")]
    NonGroundKnowledge(String),
    #[error("reception state {0} is not an input")]
    ReceptionNotInput(usize),
    #[error("input {0} is not a reception state")]
    InputNotReception(usize),
    #[error("output {0} has multiplicity zero")]
    ZeroMultiplicity(usize),
    #[error("honest derivation mentions nonce {0}")]
    NonceInHonest(String),
    #[error("attacker derivation orders {0} and {1} only partially")]
    NotTotal(usize, usize),
    #[error("attacker derivation does not output state {0}")]
    MissingOutput(usize),
    #[error("attacker knowledge {0} is not a nonce")]
    NonNonceKnowledge(String),
    #[error("derivation is not closed: state {0} is a reception")]
    NotClosed(usize),
    #[error("connection maps {0} which is not an input")]
    NotAnInput(usize),
    #[error("connection maps onto {0} which is not an output")]
    NotAnOutput(usize),
    #[error("connection uses output {0} more often than its multiplicity")]
    OutputExhausted(usize),
    #[error("connection is not monotone on inputs {0} and {1}")]
    NonMonotone(usize, usize),
    #[error("connection produces a cyclic order")]
    CyclicConnection,
    #[error("cannot open on {0}: {1}")]
    OpenPrecondition(String, String),
    #[error("malformed derivation text: {0}")]
    Json(String),
    #[error(transparent)]
    Term(#[from] TermError),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SymbolicDerivation {
    pub states: BTreeMap<usize, StateKind>,
    /// Generating pairs `(i, j)` meaning `i < j`; the order is their transitive closure.
    pub order: BTreeSet<(usize, usize)>,
    pub knowledge: BTreeSet<Term>,
    pub inputs: BTreeSet<usize>,
    /// Output multiset as index to multiplicity.
    pub outputs: BTreeMap<usize, usize>,
    pub tests: Vec<(usize, usize)>,
}

impl SymbolicDerivation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_index(&self) -> usize {
        self.states.keys().next_back().map_or(0, |m| m + 1)
    }

    /// Adds a state after every source it reads, returning its index.
    pub fn push(&mut self, kind: StateKind) -> usize {
        let index = self.next_index();
        self.insert(index, kind);
        index
    }

    pub fn insert(&mut self, index: usize, kind: StateKind) {
        for source in kind.sources() {
            self.order.insert((source, index));
        }
        match &kind {
            StateKind::Memory(t) => {
                self.knowledge.insert(t.clone());
            }
            StateKind::Reception => {
                self.inputs.insert(index);
            }
            _ => {}
        }
        self.states.insert(index, kind);
    }

    pub fn before(&mut self, earlier: usize, later: usize) {
        self.order.insert((earlier, later));
    }

    /// Chains the given indices into a total order.
    pub fn chain(&mut self, indices: &[usize]) {
        for w in indices.windows(2) {
            self.order.insert((w[0], w[1]));
        }
    }

    pub fn emit(&mut self, index: usize, times: usize) {
        *self.outputs.entry(index).or_insert(0) += times;
    }

    pub fn test(&mut self, left: usize, right: usize) {
        self.tests.push((left, right));
    }

    pub fn kind(&self, index: usize) -> Option<&StateKind> {
        self.states.get(&index)
    }

    pub fn multiplicity(&self, index: usize) -> usize {
        self.outputs.get(&index).copied().unwrap_or(0)
    }

    /// Outputs observable by the attacker (multiplicity at least two).
    pub fn visible_outputs(&self) -> Vec<usize> {
        self.linear_extension().into_iter().filter(|i| self.multiplicity(*i) >= 2).collect()
    }

    pub fn receptions(&self) -> Vec<usize> {
        self.linear_extension().into_iter().filter(|i| self.inputs.contains(i)).collect()
    }

    pub fn is_closed(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn deduction_count(&self) -> usize {
        self.states.values().filter(|k| k.is_deduction()).count()
    }

    /// The state whose variable `index` shares, following re-use links.
    pub fn root(&self, mut index: usize) -> usize {
        let mut steps = 0;
        while let Some(StateKind::Reuse(j)) = self.states.get(&index) {
            index = *j;
            steps += 1;
            if steps > self.states.len() {
                break;
            }
        }
        index
    }

    pub fn var_name(&self, index: usize) -> Name {
        format!("x{}", self.root(index)).into()
    }

    pub fn var(&self, index: usize) -> Term {
        Term::var(&self.var_name(index))
    }

    /// Defining equations of deduction and memory states followed by the tests.
    pub fn system(&self) -> UnificationSystem {
        let mut eqs = Vec::new();
        for (&i, kind) in &self.states {
            match kind {
                StateKind::Deduction { symbol, args } => eqs.push(Equation::new(
                    self.var(i),
                    Term::app_named(symbol, args.iter().map(|a| self.var(*a)).collect()),
                )),
                StateKind::Memory(t) => eqs.push(Equation::new(self.var(i), t.clone())),
                _ => {}
            }
        }
        for &(l, r) in &self.tests {
            eqs.push(Equation::new(self.var(l), self.var(r)));
        }
        UnificationSystem(eqs)
    }

    fn successors(&self) -> BTreeMap<usize, BTreeSet<usize>> {
        let mut succ: BTreeMap<usize, BTreeSet<usize>> = self.states.keys().map(|&i| (i, BTreeSet::new())).collect();
        for &(a, b) in &self.order {
            succ.entry(a).or_default().insert(b);
        }
        succ
    }

    /// Smallest-index-first topological sort, or the index on a cycle.
    pub fn topological(&self) -> Result<Vec<usize>, usize> {
        let succ = self.successors();
        let mut indegree: BTreeMap<usize, usize> = succ.keys().map(|&i| (i, 0)).collect();
        for targets in succ.values() {
            for t in targets {
                *indegree.entry(*t).or_insert(0) += 1;
            }
        }
        let mut ready: BTreeSet<usize> = indegree.iter().filter(|(_, d)| **d == 0).map(|(i, _)| *i).collect();
        let mut out = Vec::with_capacity(indegree.len());
        while let Some(i) = ready.pop_first() {
            out.push(i);
            for t in succ.get(&i).into_iter().flatten() {
                let d = indegree.get_mut(t).expect("successor registered");
                *d -= 1;
                if *d == 0 {
                    ready.insert(*t);
                }
            }
        }
        if out.len() == indegree.len() {
            Ok(out)
        } else {
            Err(*indegree.iter().find(|(i, d)| **d > 0 && !out.contains(i)).map(|(i, _)| i).unwrap_or(&0))
        }
    }

    /// The canonical linear extension; panics only on a cyclic order, which `validate` rejects.
    pub fn linear_extension(&self) -> Vec<usize> {
        self.topological().unwrap_or_else(|_| self.states.keys().copied().collect())
    }

    /// All pairs `(i, j)` with `i < j` in the transitive closure.
    pub fn closure(&self) -> BTreeSet<(usize, usize)> {
        let succ = self.successors();
        let mut out = BTreeSet::new();
        for &start in succ.keys() {
            let mut stack: Vec<usize> = succ[&start].iter().copied().collect();
            let mut seen = BTreeSet::new();
            while let Some(n) = stack.pop() {
                if seen.insert(n) {
                    out.insert((start, n));
                    stack.extend(succ.get(&n).into_iter().flatten().copied());
                }
            }
        }
        out
    }

    pub fn validate(&self, theory: &DeductionSystem, class: Class) -> Result<(), DerivationError> {
        let known = |i: &usize| {
            if self.states.contains_key(i) {
                Ok(())
            } else {
                Err(DerivationError::UnknownIndex(*i))
            }
        };
        for &(a, b) in &self.order {
            known(&a)?;
            known(&b)?;
        }
        self.inputs.iter().try_for_each(known)?;
        self.outputs.keys().try_for_each(known)?;
        for (l, r) in &self.tests {
            known(l)?;
            known(r)?;
        }
        self.topological().map_err(DerivationError::CyclicOrder)?;
        let closure = self.closure();
        for t in &self.knowledge {
            if !t.is_ground() {
                return Err(DerivationError::NonGroundKnowledge(t.to_string()));
            }
        }
        for (&i, kind) in &self.states {
            match kind {
                StateKind::Deduction { symbol, args } => {
                    for &a in args {
                        known(&a)?;
                        if !closure.contains(&(a, i)) {
                            return Err(DerivationError::ArgumentNotBefore { state: i, arg: a });
                        }
                    }
                    let sym = theory
                        .symbol(symbol)
                        .ok_or_else(|| DerivationError::UnknownSymbol { state: i, symbol: symbol.to_string() })?;
                    if sym.arity != args.len() {
                        return Err(DerivationError::ArityMismatch {
                            state: i,
                            symbol: symbol.to_string(),
                            expected: sym.arity,
                            found: args.len(),
                        });
                    }
                    if !sym.public {
                        return Err(DerivationError::PrivateSymbol { state: i, symbol: symbol.to_string() });
                    }
                }
                StateKind::Reuse(j) => {
                    known(j)?;
                    if !closure.contains(&(*j, i)) {
                        return Err(DerivationError::ReuseNotBefore { state: i, target: *j });
                    }
                }
                StateKind::Memory(t) => {
                    if !t.is_ground() {
                        return Err(DerivationError::NonGroundMemory(i));
                    }
                    if !self.knowledge.contains(t) {
                        return Err(DerivationError::MemoryNotInKnowledge { state: i, term: t.to_string() });
                    }
                }
                StateKind::Reception => {
                    if !self.inputs.contains(&i) {
                        return Err(DerivationError::ReceptionNotInput(i));
                    }
                }
            }
        }
        for &i in &self.inputs {
            if !self.states[&i].is_reception() {
                return Err(DerivationError::InputNotReception(i));
            }
        }
        if let Some((&i, _)) = self.outputs.iter().find(|(_, m)| **m == 0) {
            return Err(DerivationError::ZeroMultiplicity(i));
        }
        match class {
            Class::Any => {}
            Class::Honest => {
                if let Some(n) = self.knowledge.iter().flat_map(|t| t.constants_in_order()).find(Term::is_nonce) {
                    return Err(DerivationError::NonceInHonest(n.to_string()));
                }
            }
            Class::Attacker => {
                let order = self.linear_extension();
                for w in order.windows(2) {
                    if !closure.contains(&(w[0], w[1])) {
                        return Err(DerivationError::NotTotal(w[0], w[1]));
                    }
                }
                if let Some(&i) = self.states.keys().find(|i| !self.outputs.contains_key(i)) {
                    return Err(DerivationError::MissingOutput(i));
                }
                if let Some(t) = self.knowledge.iter().find(|t| !t.is_nonce()) {
                    return Err(DerivationError::NonNonceKnowledge(t.to_string()));
                }
            }
        }
        Ok(())
    }

    /// Renumbers states along the canonical linear extension to `0..n`.
    pub fn compact(&self) -> (SymbolicDerivation, BTreeMap<usize, usize>) {
        let map: BTreeMap<usize, usize> =
            self.linear_extension().into_iter().enumerate().map(|(new, old)| (old, new)).collect();
        (self.renumber(&map), map)
    }

    /// Applies an index renaming defined on every state.
    pub fn renumber(&self, map: &BTreeMap<usize, usize>) -> SymbolicDerivation {
        let m = |i: &usize| map.get(i).copied().unwrap_or(*i);
        SymbolicDerivation {
            states: self
                .states
                .iter()
                .map(|(i, k)| {
                    let kind = match k {
                        StateKind::Deduction { symbol, args } => {
                            StateKind::Deduction { symbol: symbol.clone(), args: args.iter().map(m).collect() }
                        }
                        StateKind::Reuse(j) => StateKind::Reuse(m(j)),
                        other => other.clone(),
                    };
                    (m(i), kind)
                })
                .collect(),
            order: self.order.iter().map(|(a, b)| (m(a), m(b))).collect(),
            knowledge: self.knowledge.clone(),
            inputs: self.inputs.iter().map(m).collect(),
            outputs: self.outputs.iter().map(|(i, k)| (m(i), *k)).collect(),
            tests: self.tests.iter().map(|(a, b)| (m(a), m(b))).collect(),
        }
    }

    /// Nonce constants in first-occurrence order along the canonical extension, then the rest of K.
    pub fn nonces(&self) -> Vec<Term> {
        let mut seen = Vec::new();
        let mut note = |t: &Term| {
            for c in t.constants_in_order() {
                if c.is_nonce() && !seen.contains(&c) {
                    seen.push(c);
                }
            }
        };
        for i in self.linear_extension() {
            if let StateKind::Memory(t) = &self.states[&i] {
                note(t);
            }
        }
        for t in &self.knowledge {
            note(t);
        }
        seen
    }
}
