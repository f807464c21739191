use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::FrontendError;
use crate::derivation::json::DerivationText;
use crate::derivation::{connect, trace, Connection, Evaluation, SymbolicDerivation};
use crate::equivalence::{Counterexample, Direction, Failure, Port, Probe, ProbeKind};
use crate::solver::Solution;
use crate::terms::{DeductionSystem, Term};

/// A document explaining a verdict: an attack with the trace it produces,
/// or a distinguishing attack for an equivalence check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Witness {
    Solution { solution: Solution, trace: BTreeMap<usize, Term> },
    Counterexample(Box<Counterexample>),
}

impl Witness {
    /// Pairs a solution with the trace of its connection to `honest`.
    pub fn for_solution(honest: &SymbolicDerivation, solution: Solution, theory: &DeductionSystem) -> Self {
        let trace = connect(honest, &solution.asd, &solution.phi)
            .ok()
            .and_then(|j| trace(&j.derivation, theory).ok())
            .and_then(|e| match e {
                Evaluation::Sat(t) => Some(t.values),
                Evaluation::Unsat { .. } => None,
            })
            .unwrap_or_default();
        Witness::Solution { solution, trace }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConnectionText {
    first: Vec<(usize, usize)>,
    second: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolutionText {
    attacker: DerivationText,
    /// Honest receptions to attacker states, then attacker inputs to honest outputs.
    connection: ConnectionText,
    recipes: Vec<(usize, String)>,
    knowledge: Vec<(usize, Vec<usize>)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeText {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    symbol: Option<String>,
    ports: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum FailureText {
    Test { equation: String, left: usize, right: usize, left_value: String, right_value: String },
    Connection { message: String },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum WitnessText {
    Solution {
        solution: SolutionText,
        trace: Vec<(String, String)>,
    },
    Counterexample {
        direction: String,
        probe_index: usize,
        probe: ProbeText,
        failure: FailureText,
        solution: SolutionText,
        accepting: DerivationText,
        rejecting: DerivationText,
        rejecting_connection: ConnectionText,
    },
}

fn bad(message: impl Into<String>) -> FrontendError {
    FrontendError::Witness(message.into())
}

fn term(text: &str) -> Result<Term, FrontendError> {
    text.parse().map_err(|e| bad(format!("{text}: {e}")))
}

fn connection_text(c: &Connection) -> ConnectionText {
    ConnectionText {
        first: c.first.iter().map(|(&a, &b)| (a, b)).collect(),
        second: c.second.iter().map(|(&a, &b)| (a, b)).collect(),
    }
}

fn connection_from(c: ConnectionText) -> Connection {
    Connection { first: c.first.into_iter().collect(), second: c.second.into_iter().collect() }
}

fn solution_text(s: &Solution) -> SolutionText {
    SolutionText {
        attacker: DerivationText::from(&s.asd),
        connection: connection_text(&s.phi),
        recipes: s.recipes.iter().map(|(&r, t)| (r, t.to_string())).collect(),
        knowledge: s.knowledge.iter().map(|(&r, k)| (r, k.iter().copied().collect())).collect(),
    }
}

fn solution_from(s: SolutionText) -> Result<Solution, FrontendError> {
    Ok(Solution {
        asd: s.attacker.into_derivation().map_err(|e| bad(e.to_string()))?,
        phi: connection_from(s.connection),
        recipes: s.recipes.iter().map(|(r, t)| Ok((*r, term(t)?))).collect::<Result<_, FrontendError>>()?,
        knowledge: s.knowledge.into_iter().map(|(r, k)| (r, k.into_iter().collect())).collect(),
    })
}

fn port_from(text: &str) -> Result<Port, FrontendError> {
    if text == "open" {
        return Ok(Port::Open);
    }
    text.strip_prefix("out")
        .and_then(|n| n.parse().ok())
        .map(Port::Visible)
        .ok_or_else(|| bad(format!("unknown port {text}")))
}

fn probe_text(p: &Probe) -> ProbeText {
    let (kind, symbol) = match &p.kind {
        ProbeKind::Empty => ("empty", None),
        ProbeKind::Equality => ("equality", None),
        ProbeKind::Deduction { symbol, .. } => ("deduction", Some(symbol.to_string())),
    };
    ProbeText { kind: kind.into(), symbol, ports: p.ports.iter().map(ToString::to_string).collect() }
}

fn probe_from(p: ProbeText) -> Result<Probe, FrontendError> {
    let ports = p.ports.iter().map(|s| port_from(s)).collect::<Result<Vec<_>, _>>()?;
    let kind = match (p.kind.as_str(), p.symbol) {
        ("empty", None) => ProbeKind::Empty,
        ("equality", None) if ports.len() == 2 => ProbeKind::Equality,
        ("deduction", Some(symbol)) if !ports.is_empty() => {
            ProbeKind::Deduction { symbol: symbol.into(), arity: ports.len() - 1 }
        }
        (other, _) => return Err(bad(format!("malformed probe of kind {other}"))),
    };
    Ok(Probe { kind, ports })
}

fn witness_text(w: &Witness) -> WitnessText {
    match w {
        Witness::Solution { solution, trace } => WitnessText::Solution {
            solution: solution_text(solution),
            trace: trace.iter().map(|(i, t)| (format!("x{i}"), t.to_string())).collect(),
        },
        Witness::Counterexample(c) => WitnessText::Counterexample {
            direction: match c.direction {
                Direction::LeftInRight => "left-in-right".into(),
                Direction::RightInLeft => "right-in-left".into(),
            },
            probe_index: c.probe_index,
            probe: probe_text(&c.probe),
            failure: match &c.failure {
                Failure::Test { left, right, left_value, right_value } => FailureText::Test {
                    equation: format!("x{left} = x{right}"),
                    left: *left,
                    right: *right,
                    left_value: left_value.to_string(),
                    right_value: right_value.to_string(),
                },
                Failure::Connection(message) => FailureText::Connection { message: message.clone() },
            },
            solution: solution_text(&c.solution),
            accepting: DerivationText::from(&c.accepting),
            rejecting: DerivationText::from(&c.rejecting),
            rejecting_connection: connection_text(&c.rejecting_phi),
        },
    }
}

/// Pretty-printed JSON; the derivation parts use the derivation schema.
pub fn serialize_witness(witness: &Witness) -> String {
    serde_json::to_string_pretty(&witness_text(witness)).expect("witness text always serializes")
}

pub fn parse_witness(source: &str) -> Result<Witness, FrontendError> {
    let text: WitnessText = serde_json::from_str(source).map_err(|e| bad(e.to_string()))?;
    match text {
        WitnessText::Solution { solution, trace } => {
            let mut rows = BTreeMap::new();
            for (name, value) in trace {
                let index = name
                    .strip_prefix('x')
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| bad(format!("bad trace row {name}")))?;
                rows.insert(index, term(&value)?);
            }
            Ok(Witness::Solution { solution: solution_from(solution)?, trace: rows })
        }
        WitnessText::Counterexample {
            direction,
            probe_index,
            probe,
            failure,
            solution,
            accepting,
            rejecting,
            rejecting_connection,
        } => {
            let direction = match direction.as_str() {
                "left-in-right" => Direction::LeftInRight,
                "right-in-left" => Direction::RightInLeft,
                other => return Err(bad(format!("unknown direction {other}"))),
            };
            let failure = match failure {
                FailureText::Test { left, right, left_value, right_value, .. } => {
                    Failure::Test { left, right, left_value: term(&left_value)?, right_value: term(&right_value)? }
                }
                FailureText::Connection { message } => Failure::Connection(message),
            };
            Ok(Witness::Counterexample(Box::new(Counterexample {
                direction,
                probe_index,
                probe: probe_from(probe)?,
                solution: solution_from(solution)?,
                accepting: accepting.into_derivation().map_err(|e| bad(e.to_string()))?,
                rejecting: rejecting.into_derivation().map_err(|e| bad(e.to_string()))?,
                rejecting_phi: connection_from(rejecting_connection),
                failure,
            })))
        }
    }
}
