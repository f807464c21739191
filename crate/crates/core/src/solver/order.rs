use std::collections::{BTreeMap, BTreeSet};

use super::{handle_index, Solution};
use crate::terms::{match_into, replace_term, DeductionSystem, Name, Substitution, Term};
use crate::unification::{e_unify, Equation, UnificationSystem};

fn defined_symbols(theory: &DeductionSystem) -> BTreeSet<Name> {
    theory.rewrite.rules.iter().filter_map(|r| r.lhs.symbol().cloned()).collect()
}

fn mentions_defined(t: &Term, defined: &BTreeSet<Name>) -> bool {
    let mut hit = false;
    t.walk(&mut |s| hit |= s.symbol().is_some_and(|f| defined.contains(f)));
    hit
}

fn nonce_var(n: &Term) -> Term {
    Term::var(&format!("_{n}").replace('~', ""))
}

/// Whether `large` is an instance of `small`: some assignment of recipes to
/// the nonces of `small`, each computable from the outputs `large` has seen
/// wherever the nonce is sent, turns every recipe of `small` into the
/// corresponding recipe of `large` modulo the theory.
pub fn solution_leq(small: &Solution, large: &Solution, theory: &DeductionSystem) -> bool {
    if small.recipes.keys().ne(large.recipes.keys()) {
        return false;
    }
    let nonces = small.nonces();
    let pattern = |t: &Term| nonces.iter().fold(t.clone(), |acc, n| replace_term(&acc, n, &nonce_var(n)));
    let normal = |t: &Term| theory.normalize(t).unwrap_or_else(|_| t.clone());
    let pairs: Vec<(usize, Term, Term)> =
        small.recipes.iter().map(|(r, t)| (*r, pattern(t), normal(&large.recipes[r]))).collect();

    let mut theta = BTreeMap::new();
    let matched = pairs.iter().all(|(_, p, t)| match_into(p, t, &mut theta));
    let candidates: Vec<Substitution> = if matched {
        vec![Substitution::from_pairs(theta)]
    } else {
        let defined = defined_symbols(theory);
        if !pairs.iter().any(|(_, p, _)| mentions_defined(p, &defined)) {
            return false;
        }
        let system = UnificationSystem(pairs.iter().map(|(_, p, t)| Equation::new(p.clone(), t.clone())).collect());
        match e_unify(&system, theory) {
            Ok(set) => set.0,
            Err(_) => return false,
        }
    };
    candidates.iter().any(|theta| {
        nonces.iter().all(|n| {
            let image = theta.apply(&nonce_var(n));
            if !image.is_ground() {
                return false;
            }
            let handles: BTreeSet<usize> = image.constants_in_order().iter().filter_map(handle_index).collect();
            small.recipes.iter().filter(|(_, t)| t.contains(n)).all(|(r, _)| {
                let seen = large.knowledge.get(r);
                handles.iter().all(|h| seen.is_some_and(|k| k.contains(h)))
            })
        })
    })
}

/// Sorts by size and canonical text, drops duplicates and every solution
/// that is an instance of another one.
pub(super) fn minimize(mut found: Vec<Solution>, theory: &DeductionSystem) -> Vec<Solution> {
    let mut keyed: Vec<(usize, String, Solution)> = found.drain(..).map(|s| (s.asd.states.len(), s.key(), s)).collect();
    keyed.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    keyed.dedup_by(|a, b| a.1 == b.1);
    let list: Vec<Solution> = keyed.into_iter().map(|(_, _, s)| s).collect();
    let n = list.len();
    let mut keep = vec![true; n];
    for j in 0..n {
        for i in 0..n {
            if i == j || !keep[i] {
                continue;
            }
            if solution_leq(&list[i], &list[j], theory) && (i < j || !solution_leq(&list[j], &list[i], theory)) {
                keep[j] = false;
                break;
            }
        }
    }
    list.into_iter().zip(keep).filter_map(|(s, k)| k.then_some(s)).collect()
}
