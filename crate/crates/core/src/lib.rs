//! Symbolic derivations for cryptographic-protocol analysis: term algebra,
//! equational unification, a lazy-intruder constraint solver and a decision
//! procedure for symbolic equivalence of honest derivations.

pub mod derivation;
pub mod equivalence;
pub mod frontend;
pub mod solver;
pub mod terms;
pub mod unification;

pub use derivation::{
    asd_leq, canonicalize_nonces, connect, decompose, from_json, isomorphic, open_on, to_json, trace, Class,
    Connection, DerivationError, Evaluation, LeqBudget, LeqOutcome, StateKind, SymbolicDerivation, Trace,
};
pub use equivalence::{
    check_equiv, check_inclusion, enumerate_probes, ground_check_equiv, make_well_formed, Counterexample, EquivError,
    Inclusion, Probe, Verdict,
};
pub use frontend::{
    compile_narration, parse_narration, parse_theory, parse_witness, serialize_witness, CompiledProtocol,
    FrontendError, NarrationSpec, TheorySpec, Witness,
};
pub use solver::{
    check_sat, membership, solution_leq, solve_complete, SatResult, Solution, SolutionSet, SolverConfig, SolverError,
};
pub use terms::{DeductionSystem, Name, Position, RewriteSystem, Rule, Substitution, Symbol, Term, TermError};
pub use unification::{
    e_unify, is_more_general, satisfies, unify_syntactic, Equation, UnificationSystem, UnifierSet, UnifyError,
};
