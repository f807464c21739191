//! Brute-force enumeration of attacker recipes for small honest derivations.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::rc::Rc;

use sdequiv::solver::{attacker_values, build_attacker, handle, well_formed, Event, EventOrder};
use sdequiv::{asd_leq, solution_leq, Connection, DeductionSystem, LeqBudget, Solution, StateKind};
use sdequiv::{SymbolicDerivation, Term};

/// Interleavings of receptions and visible outputs allowed by the order,
/// one per knowledge assignment that no other assignment extends. Recipes
/// valid under some interleaving stay valid under one that gives every
/// reception at least the same outputs.
pub fn interleavings(honest: &SymbolicDerivation) -> Vec<EventOrder> {
    let closure = honest.closure();
    let mut events: Vec<Event> = honest.receptions().into_iter().map(Event::Receive).collect();
    events.extend(honest.visible_outputs().into_iter().map(Event::Observe));
    let state = |e: &Event| match e {
        Event::Receive(i) | Event::Observe(i) => *i,
    };
    let precedes = |a: &Event, b: &Event| {
        closure.contains(&(state(a), state(b))) || matches!((a, b), (Event::Receive(x), Event::Observe(y)) if x == y)
    };
    let mut found: BTreeMap<BTreeMap<usize, BTreeSet<usize>>, Vec<Event>> = BTreeMap::new();
    let mut stack = vec![(Vec::new(), events)];
    while let Some((placed, left)) = stack.pop() {
        if left.is_empty() {
            let mut seen = BTreeSet::new();
            let mut knowledge = BTreeMap::new();
            for e in &placed {
                match e {
                    Event::Receive(r) => {
                        knowledge.insert(*r, seen.clone());
                    }
                    Event::Observe(o) => {
                        seen.insert(*o);
                    }
                }
            }
            found.entry(knowledge).or_insert(placed);
            continue;
        }
        for (k, e) in left.iter().enumerate() {
            if left.iter().any(|other| precedes(other, e)) {
                continue;
            }
            let mut next = placed.clone();
            next.push(*e);
            let mut rest = left.clone();
            rest.remove(k);
            stack.push((next, rest));
        }
    }
    let extends = |big: &BTreeMap<usize, BTreeSet<usize>>, small: &BTreeMap<usize, BTreeSet<usize>>| {
        big != small && small.iter().all(|(r, k)| k.is_subset(&big[r]))
    };
    found
        .iter()
        .filter(|(k, _)| !found.keys().any(|other| extends(other, k)))
        .map(|(knowledge, events)| EventOrder { events: events.clone(), knowledge: knowledge.clone() })
        .collect()
}

/// A recipe with its value and the application nodes it adds to the
/// shared pool, each with its value.
#[derive(Clone)]
struct Candidate {
    term: Term,
    value: Term,
    new: BTreeMap<Term, Term>,
}

/// Normal recipes over `atoms` adding at most `budget` (at most three) new
/// application nodes beyond `pool`. Atoms and pool nodes come with their
/// values; a node whose value the attacker already holds is never built.
fn recipes(
    atoms: &[(Term, Term)],
    pool: &BTreeMap<Term, Term>,
    budget: usize,
    theory: &DeductionSystem,
) -> Vec<Candidate> {
    assert!(budget <= 3, "pair enumeration below is exact only up to three new nodes");
    let symbols: Vec<(String, usize)> = theory.public_symbols().map(|s| (s.name.to_string(), s.arity)).collect();
    let held: HashSet<Term> = atoms.iter().map(|(a, v)| (a, v)).chain(pool).map(|(_, v)| v.clone()).collect();
    let mut seen: HashSet<Term> = HashSet::new();
    let mut levels: Vec<Vec<Candidate>> = vec![Vec::new()];
    for (a, v) in atoms.iter().map(|(a, v)| (a, v)).chain(pool) {
        if seen.insert(a.clone()) {
            levels[0].push(Candidate { term: a.clone(), value: v.clone(), new: BTreeMap::new() });
        }
    }
    for k in 1..=budget {
        let mut level = Vec::new();
        let mut offer = |symbol: &str, args: [&Candidate; 2], arity: usize, level: &mut Vec<Candidate>| {
            let args = &args[..arity];
            let term = Term::app(symbol, args.iter().map(|c| c.term.clone()).collect());
            if pool.contains_key(&term) || seen.contains(&term) {
                return;
            }
            let mut new: BTreeMap<Term, Term> = BTreeMap::new();
            for c in args {
                new.extend(c.new.iter().map(|(n, v)| (n.clone(), v.clone())));
            }
            if new.len() + 1 != k || theory.normalize(&term).map_or(true, |n| n != term) {
                return;
            }
            let value = theory.normalize(&Term::app(symbol, args.iter().map(|c| c.value.clone()).collect())).unwrap();
            let distinct: HashSet<&Term> = new.values().chain([&value]).collect();
            if held.contains(&value) || distinct.len() != k {
                return;
            }
            seen.insert(term.clone());
            new.insert(term.clone(), value.clone());
            level.push(Candidate { term, value, new });
        };
        for (symbol, arity) in &symbols {
            match arity {
                1 => {
                    for c in &levels[k - 1] {
                        offer(symbol, [c, c], 1, &mut level);
                    }
                }
                2 => {
                    for c1 in 0..k {
                        for a in &levels[c1] {
                            for b in &levels[k - 1 - c1] {
                                offer(symbol, [a, b], 2, &mut level);
                            }
                        }
                    }
                    // Arguments sharing nodes: one argument is a node of the other.
                    for c in &levels[k - 1] {
                        for (node, value) in &c.new {
                            let inner = Candidate { term: node.clone(), value: value.clone(), new: c.new.clone() };
                            offer(symbol, [c, &inner], 2, &mut level);
                            offer(symbol, [&inner, c], 2, &mut level);
                        }
                    }
                }
                _ => panic!("unsupported arity {arity}"),
            }
        }
        levels.push(level);
    }
    levels.into_iter().flatten().collect()
}

fn nonce(k: usize) -> Term {
    Term::nonce(&format!("n{k}"))
}

/// Honest states reading `source`, directly or not, in evaluation order.
fn readers(honest: &SymbolicDerivation, source: usize) -> Vec<usize> {
    let mut reached = BTreeSet::from([source]);
    let mut out = Vec::new();
    for i in honest.linear_extension() {
        if honest.states[&i].sources().iter().any(|s| reached.contains(s)) {
            reached.insert(i);
            out.push(i);
        }
    }
    out
}

/// Receptions each honest state reads, directly or not.
fn reception_inputs(honest: &SymbolicDerivation) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut inputs: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for i in honest.linear_extension() {
        let mut mine: BTreeSet<usize> = honest.states[&i].sources().iter().flat_map(|s| inputs[s].clone()).collect();
        if honest.inputs.contains(&i) {
            mine.insert(i);
        }
        inputs.insert(i, mine);
    }
    inputs
}

fn value_of(kind: &StateKind, values: &BTreeMap<usize, Term>, theory: &DeductionSystem) -> Option<Term> {
    match kind {
        StateKind::Memory(m) => Some(theory.normalize(m).unwrap()),
        StateKind::Reuse(j) => values.get(j).cloned(),
        StateKind::Deduction { symbol, args } => args
            .iter()
            .map(|a| values.get(a).cloned())
            .collect::<Option<Vec<_>>>()
            .map(|xs| theory.normalize(&Term::app_named(symbol, xs)).unwrap()),
        StateKind::Reception => None,
    }
}

#[derive(Default)]
pub struct Coverage {
    /// Satisfying recipe assignments found by enumeration.
    pub candidates: usize,
    pub by_recipes: usize,
    pub by_embedding: usize,
    /// Satisfying assignments whose attacker derivation is not stutter-free.
    pub stuttering: usize,
    /// Satisfying assignments re-deducing a value the attacker already held.
    pub redundant: usize,
    pub misses: Vec<String>,
}

impl Coverage {
    pub fn absorb(&mut self, other: Coverage) {
        self.candidates += other.candidates;
        self.by_recipes += other.by_recipes;
        self.by_embedding += other.by_embedding;
        self.stuttering += other.stuttering;
        self.redundant += other.redundant;
        self.misses.extend(other.misses);
    }
}

/// Some deduction that is read or sent has the value of an earlier state it
/// does not re-use.
fn rededuces(asd: &SymbolicDerivation, values: &BTreeMap<usize, Term>) -> bool {
    let seq = asd.linear_extension();
    let read: BTreeSet<usize> =
        asd.states.values().filter(|k| k.is_deduction()).flat_map(StateKind::sources).map(|s| asd.root(s)).collect();
    seq.iter().enumerate().any(|(p, j)| {
        asd.states[j].is_deduction()
            && (read.contains(j) || asd.multiplicity(*j) >= 2)
            && seq[..p].iter().any(|i| asd.root(*j) != *i && values.get(i) == values.get(j))
    })
}

type RecipeKey = (Vec<(Term, Term)>, Vec<Term>, usize);

struct Search<'a> {
    honest: &'a SymbolicDerivation,
    theory: &'a DeductionSystem,
    solutions: &'a [Solution],
    order: &'a EventOrder,
    receptions: Vec<usize>,
    /// Per position: honest states to recompute, then tests decided there.
    updates: Vec<(Vec<usize>, Vec<(usize, usize)>)>,
    max_deductions: usize,
    cache: HashMap<RecipeKey, Rc<Vec<Candidate>>>,
    /// Recipe-only solution reused for every leaf.
    probe: Solution,
    coverage: Coverage,
}

impl Search<'_> {
    fn extend(
        &mut self,
        sent: &mut BTreeMap<usize, Term>,
        values: &mut BTreeMap<usize, Term>,
        pool: &mut BTreeMap<Term, Term>,
        nonces: usize,
    ) {
        let position = sent.len();
        if position == self.receptions.len() {
            self.leaf(sent);
            return;
        }
        let r = self.receptions[position];
        let mut atoms: Vec<(Term, Term)> = self.order.knowledge[&r]
            .iter()
            .filter(|o| !self.honest.inputs.contains(o))
            .map(|&o| (handle(o), values[&o].clone()))
            .collect();
        atoms.extend((1..=nonces + 1).map(|k| (nonce(k), nonce(k))));
        let budget = self.max_deductions - pool.len();
        let key = (atoms, pool.keys().cloned().collect(), budget);
        let candidates = match self.cache.get(&key) {
            Some(c) => c.clone(),
            None => {
                let c = Rc::new(recipes(&key.0, pool, budget, self.theory));
                self.cache.insert(key, c.clone());
                c
            }
        };
        let (recompute, tests) = self.updates[position].clone();
        for c in candidates.iter() {
            values.insert(r, c.value.clone());
            let mut added = Vec::new();
            for &i in &recompute {
                if let Some(v) = value_of(&self.honest.states[&i], values, self.theory) {
                    values.insert(i, v);
                    added.push(i);
                }
            }
            if tests.iter().all(|(a, b)| values[a] == values[b]) {
                let used = usize::from(c.term.contains(&nonce(nonces + 1)));
                let fresh: Vec<Term> = c.new.keys().filter(|n| !pool.contains_key(*n)).cloned().collect();
                pool.extend(c.new.iter().map(|(n, v)| (n.clone(), v.clone())));
                sent.insert(r, c.term.clone());
                self.extend(sent, values, pool, nonces + used);
                sent.remove(&r);
                for n in fresh {
                    pool.remove(&n);
                }
            }
            for i in added {
                values.remove(&i);
            }
        }
        values.remove(&r);
    }

    fn leaf(&mut self, sent: &BTreeMap<usize, Term>) {
        let cov = &mut self.coverage;
        cov.candidates += 1;
        self.probe.recipes.clone_from(sent);
        if self.solutions.iter().any(|m| solution_leq(m, &self.probe, self.theory)) {
            cov.by_recipes += 1;
            return;
        }
        let Some((asd, phi)) = build_attacker(self.order, sent) else {
            cov.misses.push(format!("cannot lay out recipes {sent:?}"));
            return;
        };
        let large = Solution { asd, phi, ..self.probe.clone() };
        let values = match attacker_values(self.honest, &large, self.theory) {
            Ok(Some((_, values))) => values,
            other => {
                cov.misses.push(format!("enumerated assignment {sent:?} does not connect: {other:?}"));
                return;
            }
        };
        if !well_formed(&large.asd, &values) {
            cov.stuttering += 1;
            return;
        }
        if rededuces(&large.asd, &values) {
            cov.redundant += 1;
            return;
        }
        let budget = LeqBudget { context_deductions: 2, node_limit: 200_000 };
        if self.solutions.iter().any(|m| asd_leq(&m.asd, &large.asd, budget).holds()) {
            cov.by_embedding += 1;
            return;
        }
        cov.misses.push(format!("uncovered recipes {sent:?} with knowledge {:?}", self.order.knowledge));
    }
}

/// A solution sending a distinct fresh nonce to every reception has every
/// other solution as an instance.
fn fully_general(solution: &Solution) -> bool {
    let sent: BTreeSet<&Term> = solution.recipes.values().collect();
    sent.len() == solution.recipes.len() && sent.iter().all(|t| t.is_nonce())
}

/// Checks that every satisfying assignment of normal recipes with at most
/// `max_deductions` shared application nodes is covered by `solutions`.
/// Returns `None` when a fully general solution covers everything outright.
pub fn check_coverage(
    honest: &SymbolicDerivation,
    solutions: &[Solution],
    theory: &DeductionSystem,
    max_deductions: usize,
) -> Option<Coverage> {
    if solutions.iter().any(fully_general) {
        return None;
    }
    let mut total = Coverage::default();
    let mut start = BTreeMap::new();
    for i in honest.linear_extension() {
        if let Some(v) = value_of(&honest.states[&i], &start, theory) {
            start.insert(i, v);
        }
    }
    if honest.tests.iter().any(|(a, b)| matches!((start.get(a), start.get(b)), (Some(x), Some(y)) if x != y)) {
        return Some(total);
    }
    let needs = reception_inputs(honest);
    for order in interleavings(honest) {
        let receptions = order.receptions();
        let updates = receptions
            .iter()
            .enumerate()
            .map(|(p, &r)| {
                let assigned: BTreeSet<usize> = receptions[..=p].iter().copied().collect();
                let decided = |i: &usize| needs[i].is_subset(&assigned) && needs[i].contains(&r);
                let tests = honest
                    .tests
                    .iter()
                    .filter(|(a, b)| needs[a].is_subset(&assigned) && needs[b].is_subset(&assigned))
                    .filter(|(a, b)| decided(a) || decided(b))
                    .copied()
                    .collect();
                (readers(honest, r), tests)
            })
            .collect();
        let mut search = Search {
            honest,
            theory,
            solutions,
            order: &order,
            receptions,
            updates,
            max_deductions,
            cache: HashMap::new(),
            probe: Solution {
                asd: SymbolicDerivation::new(),
                phi: Connection::empty(),
                recipes: BTreeMap::new(),
                knowledge: order.knowledge.clone(),
            },
            coverage: Coverage::default(),
        };
        search.extend(&mut BTreeMap::new(), &mut start.clone(), &mut BTreeMap::new(), 0);
        total.absorb(search.coverage);
    }
    Some(total)
}
