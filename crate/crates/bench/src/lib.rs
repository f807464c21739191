//! Inputs shared by the engine benchmarks.

use sdequiv::{compile_narration, parse_narration, parse_theory, DeductionSystem, SymbolicDerivation, Term};

pub fn theory() -> DeductionSystem {
    parse_theory(include_str!("../../core/fixtures/dy.thy")).expect("theory fixture").1
}

fn honest(text: &str, theory: &DeductionSystem) -> SymbolicDerivation {
    let spec = parse_narration(text).expect("narration fixture");
    compile_narration(&spec, theory).and_then(|p| p.honest()).expect("honest derivation")
}

/// The responder run used as the attack-discovery example.
pub fn running_example(theory: &DeductionSystem) -> SymbolicDerivation {
    honest(include_str!("../../core/fixtures/example.prot"), theory)
}

/// Two runs that differ only in a nonce the attacker never learns.
pub fn secret_pair(theory: &DeductionSystem) -> (SymbolicDerivation, SymbolicDerivation) {
    (
        honest(include_str!("../../core/fixtures/secretA.prot"), theory),
        honest(include_str!("../../core/fixtures/secretB.prot"), theory),
    )
}

/// A ground term of the given nesting depth with a decryption redex at every level.
pub fn nested_redex(depth: usize) -> Term {
    let key = Term::app("pk", vec![Term::constant("k")]);
    let secret = Term::app("inv", vec![key.clone()]);
    (0..depth).fold(Term::constant("m"), |inner, _| {
        let wrapped = Term::app("pair", vec![inner, Term::constant("a")]);
        let sealed = Term::app("penc", vec![wrapped, key.clone()]);
        Term::app("fst", vec![Term::app("pdec", vec![sealed, secret.clone()])])
    })
}
