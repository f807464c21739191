//! Random derivations, substitutions and frames for the acceptance checks.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sdequiv::{Class, DeductionSystem, StateKind, SymbolicDerivation, Term};

pub fn t(text: &str) -> Term {
    text.parse().unwrap_or_else(|e| panic!("{text}: {e}"))
}

const HONEST_MEMORY: [&str; 7] = ["A", "B", "pk(A)", "pk(B)", "inv(pk(A))", "pair(A,B)", "penc(A,pk(B))"];
const HONEST_DEDUCTIONS: [(&str, usize); 7] =
    [("penc", 2), ("pdec", 2), ("pair", 2), ("fst", 1), ("snd", 1), ("f", 1), ("pk", 1)];

/// States that read `source`, directly or through other states.
fn dependents(d: &SymbolicDerivation, source: usize) -> Vec<usize> {
    let closure = d.closure();
    d.states.keys().copied().filter(|&i| i == source || closure.contains(&(source, i))).collect()
}

/// An honest derivation with at most six states, two receptions and two
/// visible outputs. Tests prefer states that depend on a reception.
pub fn small_honest(rng: &mut ChaCha8Rng, theory: &DeductionSystem) -> SymbolicDerivation {
    loop {
        let size = rng.gen_range(3..=6);
        let mut d = SymbolicDerivation::new();
        let (mut receptions, mut visible) = (0, 0);
        for i in 0..size {
            let kind = if i < 2 {
                StateKind::Memory(t(HONEST_MEMORY.choose(rng).unwrap()))
            } else if receptions < 2 && rng.gen_bool(0.35) {
                receptions += 1;
                StateKind::Reception
            } else if rng.gen_bool(0.15) {
                StateKind::Memory(t(HONEST_MEMORY.choose(rng).unwrap()))
            } else {
                let (s, n) = *HONEST_DEDUCTIONS.choose(rng).unwrap();
                StateKind::deduction(s, &(0..n).map(|_| rng.gen_range(0..i)).collect::<Vec<_>>())
            };
            d.push(kind);
            if i > 0 && rng.gen_bool(0.5) {
                d.before(i - 1, i);
            }
            let shown = visible < 2 && rng.gen_bool(0.4);
            visible += usize::from(shown);
            d.emit(i, if shown { 2 } else { 1 });
        }
        if receptions == 0 {
            continue;
        }
        let tests = rng.gen_range(0..=2);
        for _ in 0..tests {
            let r = *d.receptions().choose(rng).unwrap();
            let l = *dependents(&d, r).choose(rng).unwrap();
            let other = rng.gen_range(0..size);
            if l != other {
                d.test(l, other);
            }
        }
        if d.validate(theory, Class::Honest).is_ok() {
            return d;
        }
    }
}

const CLOSED_MEMORY: [&str; 6] = ["A", "B", "pk(A)", "inv(pk(A))", "pair(A,B)", "penc(B,pk(A))"];

/// A closed derivation whose tests compare states of equal value.
pub fn closed_satisfiable(rng: &mut ChaCha8Rng, theory: &DeductionSystem) -> SymbolicDerivation {
    let size = rng.gen_range(4..=10);
    let mut d = SymbolicDerivation::new();
    for i in 0..size {
        let kind = if i < 2 || rng.gen_bool(0.25) {
            StateKind::Memory(t(CLOSED_MEMORY.choose(rng).unwrap()))
        } else if rng.gen_bool(0.15) {
            StateKind::Reuse(rng.gen_range(0..i))
        } else {
            let (s, n) = *HONEST_DEDUCTIONS.choose(rng).unwrap();
            StateKind::deduction(s, &(0..n).map(|_| rng.gen_range(0..i)).collect::<Vec<_>>())
        };
        d.push(kind);
        if i > 0 && rng.gen_bool(0.3) {
            d.before(rng.gen_range(0..i), i);
        }
        d.emit(i, 1);
    }
    let values = sdequiv::trace(&d, theory).expect("closed").trace().values.clone();
    let pairs: Vec<(usize, usize)> = values
        .iter()
        .flat_map(|(i, a)| values.iter().filter(move |(j, b)| i < j && a == *b).map(move |(j, _)| (*i, *j)))
        .collect();
    for &(l, r) in pairs.choose_multiple(rng, 2) {
        d.test(l, r);
    }
    d
}

const SEND_SYMBOLS: [(&str, usize); 7] =
    [("penc", 2), ("pdec", 2), ("pair", 2), ("fst", 1), ("snd", 1), ("f", 1), ("pk", 1)];

/// A ground term over `leaves` with depth at most `depth`.
pub fn ground_term(rng: &mut ChaCha8Rng, leaves: &[&str], depth: usize) -> Term {
    if depth == 0 || rng.gen_bool(0.4) {
        return t(leaves.choose(rng).unwrap());
    }
    let (s, n) = *SEND_SYMBOLS.choose(rng).unwrap();
    Term::app(s, (0..n).map(|_| ground_term(rng, leaves, depth - 1)).collect())
}

/// A term over variables and `leaves` with depth at most `depth`.
pub fn open_term(rng: &mut ChaCha8Rng, vars: &[Term], leaves: &[&str], depth: usize) -> Term {
    if depth == 0 || rng.gen_bool(0.35) {
        return if rng.gen_bool(0.6) { vars.choose(rng).unwrap().clone() } else { t(leaves.choose(rng).unwrap()) };
    }
    let (s, n) = *SEND_SYMBOLS.choose(rng).unwrap();
    Term::app(s, (0..n).map(|_| open_term(rng, vars, leaves, depth - 1)).collect())
}

/// An attacker derivation with receptions, nonces and public deductions only.
pub fn deduction_only(rng: &mut ChaCha8Rng) -> SymbolicDerivation {
    let size = rng.gen_range(2..=8);
    let mut d = SymbolicDerivation::new();
    let mut seq = Vec::new();
    for i in 0..size {
        let kind = if i == 0 || rng.gen_bool(0.25) {
            StateKind::Reception
        } else if rng.gen_bool(0.2) {
            StateKind::Memory(Term::nonce(&format!("n{}", rng.gen_range(1..=2))))
        } else {
            let (s, n) = *SEND_SYMBOLS.choose(rng).unwrap();
            StateKind::deduction(s, &(0..n).map(|_| rng.gen_range(0..i)).collect::<Vec<_>>())
        };
        seq.push(d.push(kind));
        d.emit(i, 1);
    }
    d.chain(&seq);
    d
}

const FRAME_LEAVES: [&str; 3] = ["a", "b", "c"];

/// A closed honest derivation publishing each term once, in order.
pub fn frame(terms: &[Term]) -> SymbolicDerivation {
    let mut d = SymbolicDerivation::new();
    let seq: Vec<usize> = terms.iter().map(|term| d.push(StateKind::Memory(term.clone()))).collect();
    for &i in &seq {
        d.emit(i, 2);
    }
    d.chain(&seq);
    d
}

fn frame_term(rng: &mut ChaCha8Rng) -> Term {
    let leaves: Vec<&str> = FRAME_LEAVES.to_vec();
    match rng.gen_range(0..6) {
        0 => t(leaves.choose(rng).unwrap()),
        1 => Term::app("pk", vec![t(leaves.choose(rng).unwrap())]),
        2 => Term::app("inv", vec![Term::app("pk", vec![t(leaves.choose(rng).unwrap())])]),
        _ => ground_term(rng, &leaves, 2),
    }
}

fn rename(term: &Term, from: &str, to: &str) -> Term {
    sdequiv::terms::replace_term(term, &t(from), &t(to))
}

/// Two frames with the same number of messages: independent, renamed, or
/// differing in a single message.
pub fn frame_pair(rng: &mut ChaCha8Rng, theory: &DeductionSystem) -> (Vec<Term>, Vec<Term>) {
    let normal = |x: Term| theory.normalize(&x).unwrap();
    let size = rng.gen_range(1..=3);
    let left: Vec<Term> = (0..size).map(|_| normal(frame_term(rng))).collect();
    let right = match rng.gen_range(0..3) {
        0 => (0..size).map(|_| normal(frame_term(rng))).collect(),
        1 => {
            let fresh = "d";
            let victim = *FRAME_LEAVES.choose(rng).unwrap();
            left.iter().map(|x| rename(x, victim, fresh)).collect()
        }
        _ => {
            let mut right = left.clone();
            let k = rng.gen_range(0..size);
            right[k] = normal(frame_term(rng));
            right
        }
    };
    (left, right)
}
