use std::collections::{BTreeMap, BTreeSet};

use super::{connect, isomorphic, open_on, Connection, StateKind, SymbolicDerivation};
use crate::terms::Term;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LeqBudget {
    /// Largest number of deduction states the context derivation may add.
    pub context_deductions: usize,
    /// Search nodes explored before giving up.
    pub node_limit: usize,
}

impl Default for LeqBudget {
    fn default() -> Self {
        LeqBudget { context_deductions: 3, node_limit: 1_000_000 }
    }
}

/// Witness that the smaller derivation, opened on `opened`, connects with
/// `context` into the larger one.
#[derive(Clone, Debug)]
pub struct LeqCertificate {
    /// Each state of the smaller derivation to the state of the larger one it becomes.
    pub embedding: BTreeMap<usize, usize>,
    pub opened: BTreeSet<Term>,
    /// Nonces of kept memory states to their names in the larger derivation.
    pub renaming: BTreeMap<Term, Term>,
    pub context: SymbolicDerivation,
    pub connection: Connection,
}

#[derive(Clone, Debug)]
pub enum LeqOutcome {
    Holds(LeqCertificate),
    Fails,
    Unknown,
}

impl LeqOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, LeqOutcome::Holds(_))
    }
}

fn flatten_outputs(d: &SymbolicDerivation) -> SymbolicDerivation {
    let mut out = d.clone();
    for m in out.outputs.values_mut() {
        *m = 1;
    }
    out
}

fn rename_memory(d: &SymbolicDerivation, renaming: &BTreeMap<Term, Term>) -> SymbolicDerivation {
    let mut out = d.clone();
    for kind in out.states.values_mut() {
        if let StateKind::Memory(t) = kind {
            if let Some(image) = renaming.get(t) {
                *t = image.clone();
            }
        }
    }
    out.knowledge = d.knowledge.iter().map(|t| renaming.get(t).unwrap_or(t).clone()).collect();
    out
}

fn unordered_tests(pairs: impl Iterator<Item = (usize, usize)>) -> Vec<(usize, usize)> {
    let mut v: Vec<(usize, usize)> = pairs.map(|(a, b)| (a.min(b), a.max(b))).collect();
    v.sort();
    v
}

struct Search<'a> {
    small: &'a SymbolicDerivation,
    large: &'a SymbolicDerivation,
    small_seq: Vec<usize>,
    large_seq: Vec<usize>,
    large_tests: Vec<(usize, usize)>,
    embedding: BTreeMap<usize, usize>,
    opened: BTreeSet<Term>,
    renaming: BTreeMap<Term, Term>,
    nodes: usize,
    limit: usize,
    exhausted: bool,
}

impl Search<'_> {
    fn run(&mut self, k: usize, from: usize) -> Option<LeqCertificate> {
        self.nodes += 1;
        if self.nodes > self.limit {
            self.exhausted = true;
            return None;
        }
        if k == self.small_seq.len() {
            let mapped = unordered_tests(self.small.tests.iter().map(|(a, b)| (self.embedding[a], self.embedding[b])));
            if mapped != self.large_tests {
                return None;
            }
            return self.certify();
        }
        let i = self.small_seq[k];
        let remaining = self.small_seq.len() - k;
        for p in from..=self.large_seq.len().saturating_sub(remaining) {
            let j = self.large_seq[p];
            match (&self.small.states[&i], &self.large.states[&j]) {
                (StateKind::Deduction { symbol: f, args: xs }, StateKind::Deduction { symbol: g, args: ys }) => {
                    if f != g
                        || xs.len() != ys.len()
                        || xs.iter().zip(ys).any(|(x, y)| self.embedding.get(x) != Some(y))
                    {
                        continue;
                    }
                }
                (StateKind::Reuse(x), StateKind::Reuse(y)) => {
                    if self.embedding.get(x) != Some(y) {
                        continue;
                    }
                }
                (StateKind::Memory(n), other) => {
                    if let StateKind::Memory(m) = other {
                        let consistent = self.renaming.get(n).is_none_or(|img| img == m)
                            && self.renaming.iter().all(|(a, b)| b != m || a == n);
                        if consistent && n.is_nonce() == m.is_nonce() {
                            let fresh = !self.renaming.contains_key(n);
                            self.renaming.insert(n.clone(), m.clone());
                            self.embedding.insert(i, j);
                            if let Some(c) = self.run(k + 1, p + 1) {
                                return Some(c);
                            }
                            self.embedding.remove(&i);
                            if fresh {
                                self.renaming.remove(n);
                            }
                        }
                    }
                    if n.is_nonce() && !self.renaming.contains_key(n) {
                        let fresh = self.opened.insert(n.clone());
                        self.embedding.insert(i, j);
                        if let Some(c) = self.run(k + 1, p + 1) {
                            return Some(c);
                        }
                        self.embedding.remove(&i);
                        if fresh {
                            self.opened.remove(n);
                        }
                    }
                    continue;
                }
                (StateKind::Reception, _) => {}
                _ => continue,
            }
            self.embedding.insert(i, j);
            if let Some(c) = self.run(k + 1, p + 1) {
                return Some(c);
            }
            self.embedding.remove(&i);
            if self.exhausted {
                return None;
            }
        }
        None
    }

    fn is_fed(&self, i: usize) -> bool {
        match &self.small.states[&i] {
            StateKind::Reception => true,
            StateKind::Memory(n) => self.opened.contains(n),
            _ => false,
        }
    }

    fn certify(&self) -> Option<LeqCertificate> {
        if self.opened.iter().any(|n| self.renaming.contains_key(n)) {
            return None;
        }
        let kept_image: BTreeMap<usize, usize> =
            self.embedding.iter().filter(|(i, _)| !self.is_fed(**i)).map(|(i, j)| (*j, *i)).collect();
        let mut context = SymbolicDerivation::new();
        let mut connection = Connection::empty();
        for &s in &self.large_seq {
            if let Some(&k) = kept_image.get(&s) {
                context.states.insert(s, StateKind::Reception);
                context.inputs.insert(s);
                connection.second.insert(s, k);
            } else {
                let kind = self.large.states[&s].clone();
                match &kind {
                    StateKind::Memory(t) => {
                        context.knowledge.insert(t.clone());
                    }
                    StateKind::Reception => {
                        context.inputs.insert(s);
                    }
                    _ => {}
                }
                context.states.insert(s, kind);
            }
            context.emit(s, 1);
        }
        context.chain(&self.large_seq);
        let kept_nonces: BTreeSet<&Term> = self.renaming.values().collect();
        context.knowledge.extend(self.large.knowledge.iter().filter(|t| !kept_nonces.contains(t)).cloned());
        for (&i, &j) in &self.embedding {
            if self.is_fed(i) {
                connection.first.insert(i, j);
                context.emit(j, 1);
            }
        }
        let opened = open_on(self.small, &self.opened).ok()?;
        let renamed = rename_memory(&opened, &self.renaming);
        let joined = connect(&renamed, &context, &connection).ok()?;
        isomorphic(&flatten_outputs(&joined.derivation), &flatten_outputs(self.large)).then(|| LeqCertificate {
            embedding: self.embedding.clone(),
            opened: self.opened.clone(),
            renaming: self.renaming.clone(),
            context,
            connection,
        })
    }
}

/// Decides whether `large` is obtained from `small` by opening some of its
/// nonces and connecting a context derivation to it. Both must be attacker
/// derivations; output multiplicities are not compared.
pub fn asd_leq(small: &SymbolicDerivation, large: &SymbolicDerivation, budget: LeqBudget) -> LeqOutcome {
    let (d_small, d_large) = (small.deduction_count(), large.deduction_count());
    if d_small > d_large || small.states.len() > large.states.len() {
        return LeqOutcome::Fails;
    }
    if d_large - d_small > budget.context_deductions {
        return LeqOutcome::Unknown;
    }
    let mut search = Search {
        small,
        large,
        small_seq: small.linear_extension(),
        large_seq: large.linear_extension(),
        large_tests: unordered_tests(large.tests.iter().copied()),
        embedding: BTreeMap::new(),
        opened: BTreeSet::new(),
        renaming: BTreeMap::new(),
        nodes: 0,
        limit: budget.node_limit,
        exhausted: false,
    };
    match search.run(0, 0) {
        Some(certificate) => LeqOutcome::Holds(certificate),
        None if search.exhausted => LeqOutcome::Unknown,
        None => LeqOutcome::Fails,
    }
}
