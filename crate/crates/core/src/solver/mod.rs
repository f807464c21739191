//! Lazy-intruder constraint solving: complete sets of stutter-free attacker
//! derivations for an honest derivation, membership and satisfiability.

mod layout;
mod order;
mod search;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::derivation::{
    canonicalize_nonces, connect, to_json, trace, Connection, DerivationError, Evaluation, StateKind,
    SymbolicDerivation, Trace,
};
use crate::terms::{DeductionSystem, Kind, Term};

pub use layout::{build_attacker, event_orders, Event, EventOrder};
pub use order::solution_leq;

/// Prefix of recipe atoms standing for an honest output state.
pub const HANDLE_PREFIX: &str = "@";

pub fn handle(output: usize) -> Term {
    Term::constant(&format!("{HANDLE_PREFIX}{output}"))
}

pub fn handle_index(atom: &Term) -> Option<usize> {
    match atom.kind() {
        Kind::Const { name, nonce: false } => name.strip_prefix(HANDLE_PREFIX)?.parse().ok(),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolverConfig {
    /// Largest attacker derivation considered; `None` means visible outputs + inputs + 4.
    pub max_attacker_states: Option<usize>,
    pub narrowing_depth: usize,
    /// Distinct knowledge layouts explored per honest derivation.
    pub max_event_orders: usize,
    /// Search nodes per test unifier and layout.
    pub step_limit: usize,
    /// Knowledge decompositions per search branch.
    pub analysis_depth: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_attacker_states: None,
            narrowing_depth: crate::unification::DEFAULT_NARROWING_DEPTH,
            max_event_orders: 64,
            step_limit: 200_000,
            analysis_depth: 3,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolverError {
    #[error(transparent)]
    Derivation(#[from] DerivationError),
    #[error("honest derivation is not ground: {0}")]
    NotGround(String),
    #[error("equational unification failed: {0}")]
    Unification(String),
}

/// An attacker derivation with its connection to the honest derivation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    pub asd: SymbolicDerivation,
    /// `first`: honest receptions to attacker states; `second`: attacker inputs to honest outputs.
    pub phi: Connection,
    /// Recipe sent to each honest reception, over handles and attacker nonces.
    pub recipes: BTreeMap<usize, Term>,
    /// Honest outputs available to the attacker before each reception.
    pub knowledge: BTreeMap<usize, BTreeSet<usize>>,
}

impl Solution {
    pub fn nonces(&self) -> BTreeSet<Term> {
        self.recipes.values().flat_map(|r| r.constants_in_order()).filter(Term::is_nonce).collect()
    }

    /// Canonical text used for ordering and duplicate removal.
    pub fn key(&self) -> String {
        let mut renamed = self.clone();
        renamed.asd = canonicalize_nonces(&self.asd);
        format!("{}|{:?}|{:?}", to_json(&renamed.asd), self.phi.first, self.phi.second)
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolutionSet {
    pub solutions: Vec<Solution>,
    /// Some bound cut the search short; an empty set is then not a proof of unsatisfiability.
    pub exhausted: bool,
    /// Candidates rejected by the final membership check.
    pub membership_failures: usize,
}

#[derive(Clone, Debug)]
pub enum SatResult {
    Sat(Box<Solution>),
    Unsat,
    Unknown,
}

pub fn membership(
    honest: &SymbolicDerivation,
    attacker: &SymbolicDerivation,
    phi: &Connection,
    theory: &DeductionSystem,
) -> Result<bool, SolverError> {
    let joined = connect(honest, attacker, phi)?;
    Ok(trace(&joined.derivation, theory)?.is_sat())
}

/// Values of the attacker states in the closed connection, when it is satisfiable.
pub fn attacker_values(
    honest: &SymbolicDerivation,
    solution: &Solution,
    theory: &DeductionSystem,
) -> Result<Option<(Trace, BTreeMap<usize, Term>)>, SolverError> {
    let joined = connect(honest, &solution.asd, &solution.phi)?;
    match trace(&joined.derivation, theory)? {
        Evaluation::Sat(tr) => {
            let values = joined.second_map.iter().map(|(a, g)| (*a, tr.values[g].clone())).collect();
            Ok(Some((tr, values)))
        }
        Evaluation::Unsat { .. } => Ok(None),
    }
}

/// A later state with the value of an earlier deduction is a re-use of that
/// deduction, or is neither read by a deduction nor sent.
pub fn well_formed(asd: &SymbolicDerivation, values: &BTreeMap<usize, Term>) -> bool {
    let seq = asd.linear_extension();
    let read: BTreeSet<usize> =
        asd.states.values().filter(|k| k.is_deduction()).flat_map(StateKind::sources).map(|s| asd.root(s)).collect();
    for (p, i) in seq.iter().enumerate() {
        if !asd.states[i].is_deduction() {
            continue;
        }
        for j in &seq[p + 1..] {
            if values.get(j) != values.get(i) || asd.root(*j) == *i {
                continue;
            }
            if read.contains(j) || asd.multiplicity(*j) >= 2 {
                return false;
            }
        }
    }
    true
}

/// Upper bound on attacker states for an honest derivation.
pub fn state_bound(honest: &SymbolicDerivation, cfg: &SolverConfig) -> usize {
    cfg.max_attacker_states.unwrap_or(honest.visible_outputs().len() + honest.inputs.len() + 4)
}

pub fn solve_complete(
    honest: &SymbolicDerivation,
    theory: &DeductionSystem,
    cfg: &SolverConfig,
) -> Result<SolutionSet, SolverError> {
    search::solve(honest, theory, cfg, None)
}

/// Ground values forced on the receptions, when every unifier of the tests agrees on them.
pub fn forced_inputs(
    honest: &SymbolicDerivation,
    theory: &DeductionSystem,
    cfg: &SolverConfig,
) -> Result<BTreeMap<usize, Term>, SolverError> {
    let unifiers = search::test_unifiers(honest, theory, cfg)?;
    let mut forced = BTreeMap::new();
    for &r in &honest.inputs {
        let var = honest.var(r);
        let images: BTreeSet<Term> = unifiers.iter().map(|s| s.apply(&var)).collect();
        match images.into_iter().collect::<Vec<_>>().as_slice() {
            [only] if only.is_ground() => {
                forced.insert(r, only.clone());
            }
            _ => return Err(SolverError::NotGround(format!("input {r} is not fixed by the tests"))),
        }
    }
    Ok(forced)
}

pub fn check_sat(
    honest: &SymbolicDerivation,
    theory: &DeductionSystem,
    cfg: &SolverConfig,
    ground: bool,
) -> Result<SatResult, SolverError> {
    let set = if ground {
        let forced = forced_inputs(honest, theory, cfg)?;
        search::solve(honest, theory, cfg, Some(&forced))?
    } else {
        solve_complete(honest, theory, cfg)?
    };
    Ok(match set.solutions.into_iter().next() {
        Some(s) => SatResult::Sat(Box::new(s)),
        None if set.exhausted => SatResult::Unknown,
        None => SatResult::Unsat,
    })
}
