use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::handle_index;
use crate::derivation::{Connection, StateKind, SymbolicDerivation};
use crate::terms::{Kind, Term};

/// An honest state seen from the attacker: a message it must supply or one it observes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Event {
    Receive(usize),
    Observe(usize),
}

impl Event {
    fn state(self) -> usize {
        match self {
            Event::Receive(i) | Event::Observe(i) => i,
        }
    }
}

/// One interleaving of honest receptions and visible outputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventOrder {
    pub events: Vec<Event>,
    /// Visible outputs observed before each reception.
    pub knowledge: BTreeMap<usize, BTreeSet<usize>>,
}

impl EventOrder {
    pub fn receptions(&self) -> Vec<usize> {
        self.events
            .iter()
            .filter_map(|e| match e {
                Event::Receive(r) => Some(*r),
                Event::Observe(_) => None,
            })
            .collect()
    }

    /// Number of receptions placed before each visible output.
    pub fn availability(&self) -> BTreeMap<usize, usize> {
        let mut seen = 0;
        let mut out = BTreeMap::new();
        for e in &self.events {
            match e {
                Event::Receive(_) => seen += 1,
                Event::Observe(o) => {
                    out.insert(*o, seen);
                }
            }
        }
        out
    }
}

struct Enumeration {
    rank: BTreeMap<usize, usize>,
    preds: BTreeMap<Event, BTreeSet<Event>>,
    found: BTreeMap<Vec<BTreeSet<usize>>, Vec<Event>>,
    receptions: Vec<usize>,
    leaves: usize,
    limit: usize,
    exhausted: bool,
}

impl Enumeration {
    fn vector(&self, events: &[Event]) -> Vec<BTreeSet<usize>> {
        let mut seen = BTreeSet::new();
        let mut at: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for e in events {
            match e {
                Event::Observe(o) => {
                    seen.insert(*o);
                }
                Event::Receive(r) => {
                    at.insert(*r, seen.clone());
                }
            }
        }
        self.receptions.iter().map(|r| at.remove(r).unwrap_or_default()).collect()
    }

    fn run(&mut self, placed: &mut Vec<Event>, remaining: &BTreeSet<Event>) {
        if self.leaves >= self.limit {
            self.exhausted = true;
            return;
        }
        let done: BTreeSet<Event> = placed.iter().copied().collect();
        let mut ready: Vec<Event> =
            remaining.iter().copied().filter(|e| self.preds[e].iter().all(|p| done.contains(p))).collect();
        ready.sort_by_key(|e| (self.rank[&e.state()], matches!(e, Event::Observe(_))));
        if let Some(&obs) = ready.iter().find(|e| matches!(e, Event::Observe(_))) {
            let mut rest = remaining.clone();
            rest.remove(&obs);
            placed.push(obs);
            self.run(placed, &rest);
            placed.pop();
            return;
        }
        if remaining.iter().all(|e| matches!(e, Event::Receive(_))) {
            let mut tail: Vec<Event> = remaining.iter().copied().collect();
            tail.sort_by_key(|e| self.rank[&e.state()]);
            let mut full = placed.clone();
            full.extend(tail);
            self.leaves += 1;
            let key = self.vector(&full);
            self.found.entry(key).or_insert(full);
            return;
        }
        for r in ready {
            let mut rest = remaining.clone();
            rest.remove(&r);
            placed.push(r);
            self.run(placed, &rest);
            placed.pop();
        }
    }
}

fn dominated(small: &[BTreeSet<usize>], large: &[BTreeSet<usize>]) -> bool {
    small != large && small.iter().zip(large).all(|(a, b)| a.is_subset(b))
}

/// Interleavings giving the attacker maximal knowledge at each reception,
/// one representative per distinct knowledge assignment. The flag reports
/// that the enumeration limit was reached.
pub fn event_orders(honest: &SymbolicDerivation, limit: usize) -> (Vec<EventOrder>, bool) {
    let seq = honest.linear_extension();
    let rank: BTreeMap<usize, usize> = seq.iter().enumerate().map(|(p, i)| (*i, p)).collect();
    let closure = honest.closure();
    let receptions = honest.receptions();
    let mut events: Vec<Event> = receptions.iter().map(|&r| Event::Receive(r)).collect();
    events.extend(honest.visible_outputs().into_iter().map(Event::Observe));
    let preds = events
        .iter()
        .map(|&e| {
            let before = events
                .iter()
                .copied()
                .filter(|&p| {
                    closure.contains(&(p.state(), e.state()))
                        || (p.state() == e.state() && matches!((p, e), (Event::Receive(_), Event::Observe(_))))
                })
                .collect();
            (e, before)
        })
        .collect();
    let mut search = Enumeration {
        rank,
        preds,
        found: BTreeMap::new(),
        receptions: receptions.clone(),
        leaves: 0,
        limit: limit.max(1),
        exhausted: false,
    };
    search.run(&mut Vec::new(), &events.iter().copied().collect());
    let vectors: Vec<&Vec<BTreeSet<usize>>> = search.found.keys().collect();
    let mut orders = Vec::new();
    for (key, events) in &search.found {
        if vectors.iter().any(|other| dominated(key, other)) {
            continue;
        }
        let knowledge = receptions.iter().cloned().zip(key.iter().cloned()).collect();
        orders.push(EventOrder { events: events.clone(), knowledge });
    }
    (orders, search.exhausted)
}

/// Lays out the attacker derivation sending `recipes` along `order`: one
/// input per observed output that some recipe reads, recipe nodes shared
/// and created just before the emission that first needs them. A node built
/// earlier, or an input, is sent through a fresh re-use state.
pub fn build_attacker(order: &EventOrder, recipes: &BTreeMap<usize, Term>) -> Option<(SymbolicDerivation, Connection)> {
    let used: BTreeSet<usize> =
        recipes.values().flat_map(|r| r.constants_in_order()).filter_map(|a| handle_index(&a)).collect();
    let mut asd = SymbolicDerivation::new();
    let mut phi = Connection::empty();
    let mut nodes: HashMap<Term, usize> = HashMap::new();
    let mut seq = Vec::new();
    for event in &order.events {
        match *event {
            Event::Observe(o) if used.contains(&o) => {
                let s = asd.push(StateKind::Reception);
                asd.emit(s, 1);
                nodes.insert(super::handle(o), s);
                phi.second.insert(s, o);
                seq.push(s);
            }
            Event::Observe(_) => {}
            Event::Receive(r) => {
                let start = asd.next_index();
                let mut s = materialize(recipes.get(&r)?, &mut asd, &mut nodes, &mut seq)?;
                if s < start || asd.states[&s].is_reception() {
                    s = asd.push(StateKind::Reuse(s));
                    asd.emit(s, 1);
                    seq.push(s);
                }
                asd.emit(s, 1);
                phi.first.insert(r, s);
            }
        }
    }
    asd.chain(&seq);
    Some((asd, phi))
}

fn materialize(
    recipe: &Term,
    asd: &mut SymbolicDerivation,
    nodes: &mut HashMap<Term, usize>,
    seq: &mut Vec<usize>,
) -> Option<usize> {
    if let Some(&s) = nodes.get(recipe) {
        return Some(s);
    }
    let s = match recipe.kind() {
        Kind::Const { nonce: true, .. } => asd.push(StateKind::Memory(recipe.clone())),
        Kind::App { symbol, args } => {
            let mut inner = Vec::with_capacity(args.len());
            for a in args {
                inner.push(materialize(a, asd, nodes, seq)?);
            }
            asd.push(StateKind::Deduction { symbol: symbol.clone(), args: inner })
        }
        _ => return None,
    };
    asd.emit(s, 1);
    nodes.insert(recipe.clone(), s);
    seq.push(s);
    Some(s)
}
