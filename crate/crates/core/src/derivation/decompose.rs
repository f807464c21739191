use std::collections::BTreeSet;

use super::{Connection, StateKind, SymbolicDerivation};

/// An attacker derivation split into its deductions and its equality tests.
#[derive(Clone, Debug)]
pub struct Decomposition {
    /// Every state of the input with the tests removed.
    pub deductions: SymbolicDerivation,
    /// One reception per tested state, carrying the tests.
    pub tests: SymbolicDerivation,
    /// Feeds each reception of `tests` from `deductions`.
    pub link: Connection,
}

pub fn decompose(derivation: &SymbolicDerivation) -> Decomposition {
    let mut deductions = derivation.clone();
    deductions.tests.clear();

    let tested: BTreeSet<usize> = derivation.tests.iter().flat_map(|&(a, b)| [a, b]).collect();
    let order: Vec<usize> = derivation.linear_extension().into_iter().filter(|i| tested.contains(i)).collect();
    let mut tests = SymbolicDerivation::new();
    let mut link = Connection::empty();
    let mut local = std::collections::BTreeMap::new();
    for &i in &order {
        let r = tests.push(StateKind::Reception);
        tests.emit(r, 1);
        local.insert(i, r);
        link.second.insert(r, i);
    }
    tests.chain(&(0..order.len()).collect::<Vec<_>>());
    tests.tests = derivation.tests.iter().map(|(a, b)| (local[a], local[b])).collect();
    Decomposition { deductions, tests, link }
}
