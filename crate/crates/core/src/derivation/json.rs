use serde::{Deserialize, Serialize};

use crate::terms::Term;

use super::{DerivationError, StateKind, SymbolicDerivation};

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum StateText {
    Deduction { index: usize, symbol: String, args: Vec<usize> },
    Reuse { index: usize, target: usize },
    Memory { index: usize, term: String },
    Reception { index: usize },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct DerivationText {
    states: Vec<StateText>,
    order: Vec<(usize, usize)>,
    knowledge: Vec<String>,
    inputs: Vec<usize>,
    outputs: Vec<(usize, usize)>,
    tests: Vec<(usize, usize)>,
}

pub fn to_json(derivation: &SymbolicDerivation) -> String {
    serde_json::to_string_pretty(&DerivationText::from(derivation)).expect("derivation text always serializes")
}

pub fn from_json(source: &str) -> Result<SymbolicDerivation, DerivationError> {
    let text: DerivationText = serde_json::from_str(source).map_err(|e| DerivationError::Json(e.to_string()))?;
    text.into_derivation()
}

impl From<&SymbolicDerivation> for DerivationText {
    fn from(derivation: &SymbolicDerivation) -> Self {
        DerivationText {
            states: derivation
                .states
                .iter()
                .map(|(&index, kind)| match kind {
                    StateKind::Deduction { symbol, args } => {
                        StateText::Deduction { index, symbol: symbol.to_string(), args: args.clone() }
                    }
                    StateKind::Reuse(target) => StateText::Reuse { index, target: *target },
                    StateKind::Memory(t) => StateText::Memory { index, term: t.to_string() },
                    StateKind::Reception => StateText::Reception { index },
                })
                .collect(),
            order: derivation.order.iter().copied().collect(),
            knowledge: derivation.knowledge.iter().map(Term::to_string).collect(),
            inputs: derivation.inputs.iter().copied().collect(),
            outputs: derivation.outputs.iter().map(|(&i, &m)| (i, m)).collect(),
            tests: derivation.tests.clone(),
        }
    }
}

impl DerivationText {
    pub(crate) fn into_derivation(self) -> Result<SymbolicDerivation, DerivationError> {
        let text = self;
        let mut d = SymbolicDerivation::new();
        for state in text.states {
            let (index, kind) = match state {
                StateText::Deduction { index, symbol, args } => {
                    (index, StateKind::Deduction { symbol: symbol.into(), args })
                }
                StateText::Reuse { index, target } => (index, StateKind::Reuse(target)),
                StateText::Memory { index, term } => (index, StateKind::Memory(term.parse()?)),
                StateText::Reception { index } => (index, StateKind::Reception),
            };
            if d.states.insert(index, kind).is_some() {
                return Err(DerivationError::DuplicateIndex(index));
            }
        }
        d.order = text.order.into_iter().collect();
        d.knowledge = text.knowledge.iter().map(|t| t.parse()).collect::<Result<_, _>>()?;
        d.inputs = text.inputs.into_iter().collect();
        for (i, m) in text.outputs {
            if d.outputs.insert(i, m).is_some() {
                return Err(DerivationError::DuplicateIndex(i));
            }
        }
        d.tests = text.tests;
        Ok(d)
    }
}
