use std::collections::{BTreeMap, BTreeSet};

use crate::terms::{Kind, Term};

use super::{DerivationError, StateKind, SymbolicDerivation};

/// Turns the memory states holding the given nonces into receptions.
pub fn open_on(
    derivation: &SymbolicDerivation,
    nonces: &BTreeSet<Term>,
) -> Result<SymbolicDerivation, DerivationError> {
    let mut out = derivation.clone();
    let order = derivation.linear_extension();
    for c in nonces {
        let fail = |why: &str| Err(DerivationError::OpenPrecondition(c.to_string(), why.to_string()));
        if !c.is_nonce() {
            return fail("not a nonce");
        }
        if !derivation.knowledge.contains(c) {
            return fail("not in the knowledge");
        }
        if derivation.knowledge.iter().any(|k| !nonces.contains(k) && k.contains(c)) {
            return fail("occurs inside another knowledge term");
        }
        let holders: Vec<usize> =
            order.iter().copied().filter(|i| derivation.states[i] == StateKind::Memory(c.clone())).collect();
        if holders.len() > 1 {
            return fail("held by several memory states");
        }
        if let Some(&i) = holders.first() {
            out.states.insert(i, StateKind::Reception);
            out.inputs.insert(i);
        }
        out.knowledge.remove(c);
    }
    Ok(out)
}

fn rename(t: &Term, map: &BTreeMap<Term, Term>) -> Term {
    if let Some(image) = map.get(t) {
        return image.clone();
    }
    match t.kind() {
        Kind::App { args, .. } => t.with_args(args.iter().map(|a| rename(a, map)).collect()),
        _ => t.clone(),
    }
}

/// Renames nonces to `~n1, ~n2, ...` in first-occurrence order.
pub fn canonicalize_nonces(derivation: &SymbolicDerivation) -> SymbolicDerivation {
    let map: BTreeMap<Term, Term> =
        derivation.nonces().into_iter().enumerate().map(|(i, n)| (n, Term::nonce(&format!("n{}", i + 1)))).collect();
    let mut out = derivation.clone();
    for kind in out.states.values_mut() {
        if let StateKind::Memory(t) = kind {
            *t = rename(t, &map);
        }
    }
    out.knowledge = derivation.knowledge.iter().map(|t| rename(t, &map)).collect();
    out
}

fn signature(
    d: &SymbolicDerivation,
    closure: &BTreeSet<(usize, usize)>,
    i: usize,
) -> (u8, String, bool, usize, usize, usize) {
    let (tag, label) = match &d.states[&i] {
        StateKind::Deduction { symbol, args } => (0, format!("{symbol}/{}", args.len())),
        StateKind::Reuse(_) => (1, String::new()),
        StateKind::Memory(t) => (2, t.to_string()),
        StateKind::Reception => (3, String::new()),
    };
    let below = closure.iter().filter(|(_, b)| *b == i).count();
    let above = closure.iter().filter(|(a, _)| *a == i).count();
    (tag, label, d.inputs.contains(&i), d.multiplicity(i), below, above)
}

fn test_multiset(d: &SymbolicDerivation, m: impl Fn(usize) -> usize) -> Vec<(usize, usize)> {
    let mut v: Vec<(usize, usize)> = d
        .tests
        .iter()
        .map(|&(a, b)| {
            let (a, b) = (m(a), m(b));
            (a.min(b), a.max(b))
        })
        .collect();
    v.sort();
    v
}

/// Equality up to a renaming of indices.
pub fn isomorphic(a: &SymbolicDerivation, b: &SymbolicDerivation) -> bool {
    if a.states.len() != b.states.len() || a.knowledge != b.knowledge || a.tests.len() != b.tests.len() {
        return false;
    }
    let (ca, cb) = (a.closure(), b.closure());
    if ca.len() != cb.len() {
        return false;
    }
    let order = a.linear_extension();
    let sig_b: BTreeMap<usize, _> = b.states.keys().map(|&j| (j, signature(b, &cb, j))).collect();
    let candidates: Vec<Vec<usize>> = order
        .iter()
        .map(|&i| {
            let s = signature(a, &ca, i);
            sig_b.iter().filter(|(_, t)| **t == s).map(|(j, _)| *j).collect()
        })
        .collect();
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    let mut used: BTreeSet<usize> = BTreeSet::new();
    fn go(
        k: usize,
        order: &[usize],
        candidates: &[Vec<usize>],
        a: &SymbolicDerivation,
        b: &SymbolicDerivation,
        ca: &BTreeSet<(usize, usize)>,
        cb: &BTreeSet<(usize, usize)>,
        map: &mut BTreeMap<usize, usize>,
        used: &mut BTreeSet<usize>,
    ) -> bool {
        if k == order.len() {
            return test_multiset(a, |i| map[&i]) == test_multiset(b, |j| j);
        }
        let i = order[k];
        for &j in &candidates[k] {
            if used.contains(&j) {
                continue;
            }
            let kinds_match = match (&a.states[&i], &b.states[&j]) {
                (StateKind::Deduction { args: x, .. }, StateKind::Deduction { args: y, .. }) => {
                    x.iter().zip(y).all(|(p, q)| map.get(p) == Some(q))
                }
                (StateKind::Reuse(p), StateKind::Reuse(q)) => map.get(p) == Some(q),
                _ => true,
            };
            if !kinds_match {
                continue;
            }
            let order_match = map.iter().all(|(&p, &q)| {
                ca.contains(&(p, i)) == cb.contains(&(q, j)) && ca.contains(&(i, p)) == cb.contains(&(j, q))
            });
            if !order_match {
                continue;
            }
            map.insert(i, j);
            used.insert(j);
            if go(k + 1, order, candidates, a, b, ca, cb, map, used) {
                return true;
            }
            map.remove(&i);
            used.remove(&j);
        }
        false
    }
    go(0, &order, &candidates, a, b, &ca, &cb, &mut map, &mut used)
}
