use std::collections::BTreeMap;

use crate::terms::{DeductionSystem, Name, Term};

use super::{DerivationError, StateKind, SymbolicDerivation};

/// Ground normal values of every state of a closed derivation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub values: BTreeMap<usize, Term>,
}

impl Trace {
    pub fn value(&self, index: usize) -> Option<&Term> {
        self.values.get(&index)
    }

    /// The trace keyed by the derivation's variables.
    pub fn by_variable(&self, derivation: &SymbolicDerivation) -> BTreeMap<Name, Term> {
        self.values.iter().map(|(i, t)| (derivation.var_name(*i), t.clone())).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Evaluation {
    Sat(Trace),
    /// The first test, in declaration order, that fails.
    Unsat {
        left: usize,
        right: usize,
        trace: Trace,
    },
}

impl Evaluation {
    pub fn is_sat(&self) -> bool {
        matches!(self, Evaluation::Sat(_))
    }

    pub fn trace(&self) -> &Trace {
        match self {
            Evaluation::Sat(t) | Evaluation::Unsat { trace: t, .. } => t,
        }
    }
}

pub fn trace(derivation: &SymbolicDerivation, theory: &DeductionSystem) -> Result<Evaluation, DerivationError> {
    let order = derivation.topological().map_err(DerivationError::CyclicOrder)?;
    trace_along(derivation, &order, theory)
}

/// Evaluates along a caller-supplied linear extension of the order.
pub fn trace_along(
    derivation: &SymbolicDerivation,
    order: &[usize],
    theory: &DeductionSystem,
) -> Result<Evaluation, DerivationError> {
    if let Some(&i) = derivation.inputs.iter().next() {
        return Err(DerivationError::NotClosed(i));
    }
    let mut values: BTreeMap<usize, Term> = BTreeMap::new();
    let fetch =
        |values: &BTreeMap<usize, Term>, j: &usize| values.get(j).cloned().ok_or(DerivationError::UnknownIndex(*j));
    for &i in order {
        let kind = derivation.states.get(&i).ok_or(DerivationError::UnknownIndex(i))?;
        let value = match kind {
            StateKind::Memory(t) => theory.normalize(t)?,
            StateKind::Deduction { symbol, args } => {
                let args = args.iter().map(|a| fetch(&values, a)).collect::<Result<Vec<_>, _>>()?;
                theory.normalize(&Term::app_named(symbol, args))?
            }
            StateKind::Reuse(j) => fetch(&values, j)?,
            StateKind::Reception => return Err(DerivationError::NotClosed(i)),
        };
        values.insert(i, value);
    }
    let trace = Trace { values };
    for &(left, right) in &derivation.tests {
        if trace.values.get(&left) != trace.values.get(&right) {
            return Ok(Evaluation::Unsat { left, right, trace });
        }
    }
    Ok(Evaluation::Sat(trace))
}
