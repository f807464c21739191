use std::collections::BTreeMap;

use super::{DerivationError, StateKind, SymbolicDerivation};

/// Identification of inputs of each derivation with outputs of the other.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Connection {
    /// Inputs of the first derivation to outputs of the second.
    pub first: BTreeMap<usize, usize>,
    /// Inputs of the second derivation to outputs of the first.
    pub second: BTreeMap<usize, usize>,
}

impl Connection {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty() && self.second.is_empty()
    }
}

/// A connected derivation with the index maps from both operands.
#[derive(Clone, Debug)]
pub struct Connected {
    pub derivation: SymbolicDerivation,
    pub first_map: BTreeMap<usize, usize>,
    pub second_map: BTreeMap<usize, usize>,
}

fn check_side(
    inputs_of: &SymbolicDerivation,
    outputs_of: &SymbolicDerivation,
    map: &BTreeMap<usize, usize>,
) -> Result<(), DerivationError> {
    let mut used: BTreeMap<usize, usize> = BTreeMap::new();
    for (&i, &o) in map {
        if !inputs_of.inputs.contains(&i) {
            return Err(DerivationError::NotAnInput(i));
        }
        if outputs_of.multiplicity(o) == 0 {
            return Err(DerivationError::NotAnOutput(o));
        }
        let n = used.entry(o).or_insert(0);
        *n += 1;
        if *n > outputs_of.multiplicity(o) {
            return Err(DerivationError::OutputExhausted(o));
        }
    }
    let before_in = inputs_of.closure();
    let before_out = outputs_of.closure();
    for (&i, &oi) in map {
        for (&j, &oj) in map {
            if before_in.contains(&(i, j)) && before_out.contains(&(oj, oi)) {
                return Err(DerivationError::NonMonotone(i, j));
            }
        }
    }
    Ok(())
}

/// Connects two derivations. Indices of `first` are kept and those of
/// `second` are shifted past them; connected inputs disappear and are
/// identified with the outputs they are mapped to.
pub fn connect(
    first: &SymbolicDerivation,
    second: &SymbolicDerivation,
    phi: &Connection,
) -> Result<Connected, DerivationError> {
    check_side(first, second, &phi.first)?;
    check_side(second, first, &phi.second)?;
    let offset = first.next_index();
    let shift = |j: usize| j + offset;

    let mut link: BTreeMap<usize, usize> = phi.first.iter().map(|(&i, &o)| (i, shift(o))).collect();
    link.extend(phi.second.iter().map(|(&i, &o)| (shift(i), o)));
    let resolve = |mut g: usize| -> Result<usize, DerivationError> {
        let mut steps = 0;
        while let Some(&next) = link.get(&g) {
            g = next;
            steps += 1;
            if steps > link.len() {
                return Err(DerivationError::CyclicConnection);
            }
        }
        Ok(g)
    };

    let mut global = SymbolicDerivation::new();
    let parts = [(first, 0usize), (second, offset)];
    for (part, off) in parts {
        let part = part.renumber(&part.states.keys().map(|&i| (i, i + off)).collect());
        global.states.extend(part.states);
        global.order.extend(part.order);
        global.knowledge.extend(part.knowledge);
        global.inputs.extend(part.inputs);
        global.outputs.extend(part.outputs);
        global.tests.extend(part.tests);
    }
    for &target in link.values() {
        if let Some(m) = global.outputs.get_mut(&target) {
            *m -= 1;
        }
    }

    let mut resolved: BTreeMap<usize, usize> = BTreeMap::new();
    for &g in global.states.keys() {
        resolved.insert(g, resolve(g)?);
    }
    let r = |g: &usize| resolved[g];

    let mut out = SymbolicDerivation::new();
    for (g, kind) in &global.states {
        if link.contains_key(g) {
            continue;
        }
        let kind = match kind {
            StateKind::Deduction { symbol, args } => {
                StateKind::Deduction { symbol: symbol.clone(), args: args.iter().map(r).collect() }
            }
            StateKind::Reuse(j) => StateKind::Reuse(r(j)),
            other => other.clone(),
        };
        out.states.insert(*g, kind);
    }
    for (a, b) in &global.order {
        let (a, b) = (r(a), r(b));
        if a == b {
            return Err(DerivationError::CyclicConnection);
        }
        out.order.insert((a, b));
    }
    out.knowledge = global.knowledge;
    out.inputs = global.inputs.iter().filter(|g| !link.contains_key(g)).copied().collect();
    for (g, m) in &global.outputs {
        if *m > 0 {
            *out.outputs.entry(r(g)).or_insert(0) += m;
        }
    }
    out.tests = global.tests.iter().map(|(a, b)| (r(a), r(b))).collect();
    if out.topological().is_err() {
        return Err(DerivationError::CyclicConnection);
    }

    let first_map = first.states.keys().map(|&i| (i, r(&i))).collect();
    let second_map = second.states.keys().map(|&j| (j, r(&shift(j)))).collect();
    Ok(Connected { derivation: out, first_map, second_map })
}
