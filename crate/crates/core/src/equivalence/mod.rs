//! Symbolic equivalence of honest derivations by probing: every minimal
//! attack on one side, extended with at most one deduction and one equality
//! test, must also be an attack on the other side.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::derivation::{connect, trace, Connection, Evaluation, StateKind, SymbolicDerivation, Trace};
use crate::solver::{forced_inputs, solve_complete, Solution, SolverConfig, SolverError};
use crate::terms::{DeductionSystem, Name, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EquivError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("interfaces differ: {0}")]
    Interface(String),
    #[error("trace does not match the attacker derivation: {0}")]
    Inconsistent(String),
}

/// Where a probe input is read from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Port {
    /// The visible honest output at this position.
    Visible(usize),
    /// A value the attacker computes and sends.
    Open,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProbeKind {
    Empty,
    Equality,
    Deduction { symbol: Name, arity: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Probe {
    pub kind: ProbeKind,
    /// Equality: both sides. Deduction: the arguments, then the compared value.
    pub ports: Vec<Port>,
}

impl Probe {
    pub fn empty() -> Self {
        Probe { kind: ProbeKind::Empty, ports: Vec::new() }
    }

    pub fn deductions(&self) -> usize {
        matches!(self.kind, ProbeKind::Deduction { .. }) as usize
    }

    pub fn tests(&self) -> usize {
        !matches!(self.kind, ProbeKind::Empty) as usize
    }
}

impl std::fmt::Display for Port {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Port::Visible(p) => write!(f, "out{p}"),
            Port::Open => write!(f, "open"),
        }
    }
}

impl std::fmt::Display for Probe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let list = |ps: &[Port]| ps.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        match &self.kind {
            ProbeKind::Empty => write!(f, "empty"),
            ProbeKind::Equality => write!(f, "{} = {}", self.ports[0], self.ports[1]),
            ProbeKind::Deduction { symbol, arity } => {
                write!(f, "{symbol}({}) = {}", list(&self.ports[..*arity]), self.ports[*arity])
            }
        }
    }
}

/// Equality probes over pairs of ports, then one deduction probe per public
/// symbol and choice of argument and target ports. A port is a visible output
/// position or an attacker-computed value. Nothing is probed when no output
/// is visible.
pub fn enumerate_probes(honest: &SymbolicDerivation, theory: &DeductionSystem) -> Vec<Probe> {
    let m = honest.visible_outputs().len();
    if m == 0 {
        return Vec::new();
    }
    let ports: Vec<Port> = (0..m).map(Port::Visible).chain([Port::Open]).collect();
    let mut out = Vec::new();
    for i in 0..ports.len() {
        for j in i + 1..ports.len() {
            out.push(Probe { kind: ProbeKind::Equality, ports: vec![ports[i], ports[j]] });
        }
    }
    out.push(Probe { kind: ProbeKind::Equality, ports: vec![Port::Open, Port::Open] });
    for sym in theory.public_symbols() {
        let slots = sym.arity + 1;
        let mut digits = vec![0usize; slots];
        loop {
            out.push(Probe {
                kind: ProbeKind::Deduction { symbol: sym.name.clone(), arity: sym.arity },
                ports: digits.iter().map(|&d| ports[d]).collect(),
            });
            let Some(k) = (0..slots).rev().find(|&k| digits[k] + 1 < ports.len()) else {
                break;
            };
            digits[k] += 1;
            for d in &mut digits[k + 1..] {
                *d = 0;
            }
        }
    }
    out
}

/// Extends the honest derivation with the probe's states. Visible ports read
/// the honest output directly; open ports become receptions after every
/// honest state.
pub fn attach(honest: &SymbolicDerivation, probe: &Probe) -> Result<SymbolicDerivation, EquivError> {
    let visible = honest.visible_outputs();
    let base: Vec<usize> = honest.states.keys().copied().collect();
    let mut d = honest.clone();
    let resolve = |port: Port, d: &mut SymbolicDerivation| -> Result<usize, EquivError> {
        match port {
            Port::Visible(p) => visible
                .get(p)
                .copied()
                .ok_or_else(|| EquivError::Interface(format!("no visible output at position {p}"))),
            Port::Open => {
                let s = d.push(StateKind::Reception);
                for &h in &base {
                    d.before(h, s);
                }
                d.emit(s, 1);
                Ok(s)
            }
        }
    };
    match &probe.kind {
        ProbeKind::Empty => {}
        ProbeKind::Equality => {
            let a = resolve(probe.ports[0], &mut d)?;
            let b = resolve(probe.ports[1], &mut d)?;
            d.test(a, b);
        }
        ProbeKind::Deduction { symbol, arity } => {
            let mut args = Vec::with_capacity(*arity);
            for &p in &probe.ports[..*arity] {
                args.push(resolve(p, &mut d)?);
            }
            let target = resolve(probe.ports[*arity], &mut d)?;
            let x0 = d.push(StateKind::Deduction { symbol: symbol.clone(), args });
            for &h in &base {
                d.before(h, x0);
            }
            d.emit(x0, 1);
            d.test(x0, target);
        }
    }
    Ok(d)
}

/// Moves a solution's connection to another honest derivation by position:
/// the i-th visible output and the i-th reception on each side correspond.
pub fn transfer(
    solution: &Solution,
    from: &SymbolicDerivation,
    to: &SymbolicDerivation,
) -> Result<Connection, EquivError> {
    let (vis_from, vis_to) = (from.visible_outputs(), to.visible_outputs());
    let (rec_from, rec_to) = (from.receptions(), to.receptions());
    if vis_from.len() != vis_to.len() {
        return Err(EquivError::Interface(format!("{} visible outputs against {}", vis_from.len(), vis_to.len())));
    }
    if rec_from.len() != rec_to.len() {
        return Err(EquivError::Interface(format!("{} receptions against {}", rec_from.len(), rec_to.len())));
    }
    let position = |list: &[usize], i: usize| list.iter().position(|&x| x == i);
    let mut phi = Connection::empty();
    for (&a, &o) in &solution.phi.second {
        let p = position(&vis_from, o).ok_or_else(|| EquivError::Interface(format!("state {o} is not visible")))?;
        phi.second.insert(a, vis_to[p]);
    }
    for (&r, &a) in &solution.phi.first {
        let p = position(&rec_from, r).ok_or_else(|| EquivError::Interface(format!("state {r} is not a reception")))?;
        phi.first.insert(rec_to[p], a);
    }
    Ok(phi)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Direction {
    LeftInRight,
    RightInLeft,
}

/// Why the transferred attack fails on the rejecting side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Failure {
    /// Indices in the connected derivation of the failing test.
    Test {
        left: usize,
        right: usize,
        left_value: Term,
        right_value: Term,
    },
    Connection(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub direction: Direction,
    pub probe_index: usize,
    pub probe: Probe,
    pub solution: Solution,
    /// Honest side with the probe, on which the solution succeeds.
    pub accepting: SymbolicDerivation,
    /// Other side with the probe, on which it fails.
    pub rejecting: SymbolicDerivation,
    pub rejecting_phi: Connection,
    pub failure: Failure,
}

impl Counterexample {
    /// Trace of the accepting side.
    pub fn accepting_trace(&self, theory: &DeductionSystem) -> Option<Trace> {
        let joined = connect(&self.accepting, &self.solution.asd, &self.solution.phi).ok()?;
        match trace(&joined.derivation, theory).ok()? {
            Evaluation::Sat(t) => Some(t),
            Evaluation::Unsat { .. } => None,
        }
    }

    /// Evaluation of the rejecting side, when the connection exists.
    pub fn rejecting_evaluation(&self, theory: &DeductionSystem) -> Option<Evaluation> {
        let joined = connect(&self.rejecting, &self.solution.asd, &self.rejecting_phi).ok()?;
        trace(&joined.derivation, theory).ok()
    }

    /// Replays both sides: true when the accepting side succeeds and the rejecting one fails.
    pub fn replays(&self, theory: &DeductionSystem) -> bool {
        self.accepting_trace(theory).is_some() && !matches!(self.rejecting_evaluation(theory), Some(Evaluation::Sat(_)))
    }
}

#[derive(Clone, Debug)]
pub enum Inclusion {
    /// `exhausted` is set when some search bound was reached.
    Included {
        exhausted: bool,
        probes: usize,
    },
    Counterexample(Box<Counterexample>),
}

#[derive(Clone, Debug)]
pub enum Verdict {
    Equivalent {
        probes: usize,
    },
    /// No distinguishing attack was found, but a search bound was reached.
    EquivalentUpToBound {
        probes: usize,
    },
    Counterexample(Box<Counterexample>),
}

fn failure_on(
    rejecting: &SymbolicDerivation,
    solution: &Solution,
    phi: &Connection,
    theory: &DeductionSystem,
) -> Result<Option<Failure>, EquivError> {
    let joined = match connect(rejecting, &solution.asd, phi) {
        Ok(j) => j,
        Err(e) => return Ok(Some(Failure::Connection(e.to_string()))),
    };
    match trace(&joined.derivation, theory).map_err(SolverError::from)? {
        Evaluation::Sat(_) => Ok(None),
        Evaluation::Unsat { left, right, trace } => Ok(Some(Failure::Test {
            left,
            right,
            left_value: trace.values[&left].clone(),
            right_value: trace.values[&right].clone(),
        })),
    }
}

fn check_probe(
    left: &SymbolicDerivation,
    right: &SymbolicDerivation,
    index: usize,
    probe: &Probe,
    theory: &DeductionSystem,
    cfg: &SolverConfig,
    direction: &Direction,
    exhausted: &AtomicBool,
) -> Result<Option<Counterexample>, EquivError> {
    let accepting = attach(left, probe)?;
    let rejecting = attach(right, probe)?;
    let set = solve_complete(&accepting, theory, cfg)?;
    if set.exhausted {
        exhausted.store(true, Ordering::Relaxed);
    }
    for solution in set.solutions {
        let phi = transfer(&solution, &accepting, &rejecting)?;
        if let Some(failure) = failure_on(&rejecting, &solution, &phi, theory)? {
            return Ok(Some(Counterexample {
                direction: direction.clone(),
                probe_index: index,
                probe: probe.clone(),
                solution,
                accepting,
                rejecting,
                rejecting_phi: phi,
                failure,
            }));
        }
    }
    Ok(None)
}

fn check_interface(left: &SymbolicDerivation, right: &SymbolicDerivation) -> Result<(), EquivError> {
    let (vl, vr) = (left.visible_outputs().len(), right.visible_outputs().len());
    if vl != vr {
        return Err(EquivError::Interface(format!("{vl} visible outputs against {vr}")));
    }
    let (rl, rr) = (left.inputs.len(), right.inputs.len());
    if rl != rr {
        return Err(EquivError::Interface(format!("{rl} receptions against {rr}")));
    }
    Ok(())
}

fn inclusion(
    left: &SymbolicDerivation,
    right: &SymbolicDerivation,
    theory: &DeductionSystem,
    cfg: &SolverConfig,
    direction: Direction,
) -> Result<Inclusion, EquivError> {
    check_interface(left, right)?;
    let mut probes = vec![Probe::empty()];
    probes.extend(enumerate_probes(left, theory));
    let exhausted = AtomicBool::new(false);
    let first = probes.par_iter().enumerate().find_map_first(|(k, p)| {
        match check_probe(left, right, k, p, theory, cfg, &direction, &exhausted) {
            Ok(None) => None,
            Ok(Some(c)) => Some(Ok(c)),
            Err(e) => Some(Err(e)),
        }
    });
    match first {
        Some(Ok(c)) => Ok(Inclusion::Counterexample(Box::new(c))),
        Some(Err(e)) => Err(e),
        None => Ok(Inclusion::Included { exhausted: exhausted.load(Ordering::Relaxed), probes: probes.len() }),
    }
}

/// Every minimal attack on `left`, under every probe, is an attack on `right`.
pub fn check_inclusion(
    left: &SymbolicDerivation,
    right: &SymbolicDerivation,
    theory: &DeductionSystem,
    cfg: &SolverConfig,
) -> Result<Inclusion, EquivError> {
    inclusion(left, right, theory, cfg, Direction::LeftInRight)
}

pub fn check_equiv(
    left: &SymbolicDerivation,
    right: &SymbolicDerivation,
    theory: &DeductionSystem,
    cfg: &SolverConfig,
) -> Result<Verdict, EquivError> {
    let mut bounded = false;
    let mut probes = 0;
    for (a, b, dir) in [(left, right, Direction::LeftInRight), (right, left, Direction::RightInLeft)] {
        match inclusion(a, b, theory, cfg, dir)? {
            Inclusion::Counterexample(c) => return Ok(Verdict::Counterexample(c)),
            Inclusion::Included { exhausted, probes: n } => {
                bounded |= exhausted;
                probes += n;
            }
        }
    }
    Ok(if bounded { Verdict::EquivalentUpToBound { probes } } else { Verdict::Equivalent { probes } })
}

/// Equivalence of two honest derivations whose receptions are fixed by their tests.
pub fn ground_check_equiv(
    left: &SymbolicDerivation,
    right: &SymbolicDerivation,
    theory: &DeductionSystem,
    cfg: &SolverConfig,
) -> Result<Verdict, EquivError> {
    forced_inputs(left, theory, cfg)?;
    forced_inputs(right, theory, cfg)?;
    check_equiv(left, right, theory, cfg)
}

/// Turns every later state equal to an earlier deduction into a use of that
/// deduction: duplicate deductions become re-use states, other states get an
/// equality test and lose their readers to the first deducing state.
pub fn make_well_formed(
    asd: &SymbolicDerivation,
    values: &BTreeMap<usize, Term>,
) -> Result<SymbolicDerivation, EquivError> {
    for i in asd.states.keys() {
        if !values.contains_key(i) {
            return Err(EquivError::Inconsistent(format!("no value for state {i}")));
        }
    }
    let seq = asd.linear_extension();
    let mut out = asd.clone();
    let mut first: BTreeMap<Term, usize> = BTreeMap::new();
    let mut redirect: BTreeMap<usize, usize> = BTreeMap::new();
    for &j in &seq {
        let value = &values[&j];
        match first.get(value) {
            Some(&i) if out.root(j) != i => {
                if out.states[&j].is_deduction() {
                    out.states.insert(j, StateKind::Reuse(i));
                    out.before(i, j);
                } else {
                    out.test(i, j);
                    redirect.insert(j, i);
                }
            }
            Some(_) => {}
            None => {
                if asd.states[&j].is_deduction() {
                    first.insert(value.clone(), j);
                }
            }
        }
    }
    for kind in out.states.values_mut() {
        if let StateKind::Deduction { args, .. } = kind {
            for a in args.iter_mut() {
                if let Some(&i) = redirect.get(a) {
                    *a = i;
                }
            }
        }
    }
    Ok(out)
}
