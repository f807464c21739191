use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::layout::{build_attacker, event_orders, EventOrder};
use super::order::{minimize, solution_leq};
use super::{attacker_values, handle, state_bound, well_formed, Solution, SolutionSet, SolverConfig, SolverError};
use crate::derivation::{StateKind, SymbolicDerivation};
use crate::terms::{DeductionSystem, Kind, Name, Substitution, Term};
use crate::unification::{e_unify_with_depth, unify_syntactic, Equation, UnificationSystem, UnifyError};

/// Values of every honest state as open terms over the reception variables.
pub(super) fn symbolic_values(honest: &SymbolicDerivation, theory: &DeductionSystem) -> BTreeMap<usize, Term> {
    let mut values: BTreeMap<usize, Term> = BTreeMap::new();
    for i in honest.linear_extension() {
        let value = match &honest.states[&i] {
            StateKind::Memory(t) => t.clone(),
            StateKind::Reception => honest.var(i),
            StateKind::Reuse(j) => values.get(j).cloned().unwrap_or_else(|| honest.var(*j)),
            StateKind::Deduction { symbol, args } => theory.simplify(&Term::app_named(
                symbol,
                args.iter().map(|a| values.get(a).cloned().unwrap_or_else(|| honest.var(*a))).collect(),
            )),
        };
        values.insert(i, value);
    }
    values
}

fn unify(system: UnificationSystem, theory: &DeductionSystem, depth: usize) -> Result<Vec<Substitution>, SolverError> {
    match e_unify_with_depth(&system, theory, depth) {
        Ok(set) => Ok(set.0),
        Err(UnifyError::DepthCapExceeded(d)) => Err(SolverError::Unification(format!("narrowing depth {d} exceeded"))),
        Err(e) => Err(SolverError::Unification(e.to_string())),
    }
}

/// Unifiers of the honest tests over the symbolic state values.
pub(super) fn test_unifiers(
    honest: &SymbolicDerivation,
    theory: &DeductionSystem,
    cfg: &SolverConfig,
) -> Result<Vec<Substitution>, SolverError> {
    let values = symbolic_values(honest, theory);
    if honest.tests.is_empty() {
        return Ok(vec![Substitution::new()]);
    }
    let equations = honest.tests.iter().map(|(l, r)| Equation::new(values[l].clone(), values[r].clone())).collect();
    unify(UnificationSystem(equations), theory, cfg.narrowing_depth)
}

#[derive(Clone, Debug)]
struct Goal {
    term: Term,
    /// Position of the reception whose knowledge applies.
    at: usize,
    slot: Name,
}

#[derive(Clone, Debug)]
struct Item {
    term: Term,
    recipe: Term,
    /// First reception position at which the item is known.
    from: usize,
}

#[derive(Clone, Debug)]
struct Branch {
    goals: Vec<Goal>,
    items: Vec<Item>,
    slots: BTreeMap<Name, Term>,
    analysed: BTreeSet<(Term, usize, usize)>,
    analyses: usize,
    sigma: Substitution,
    counter: usize,
}

impl Branch {
    fn fresh(&mut self, prefix: &str) -> Name {
        self.counter += 1;
        format!("_{prefix}{}", self.counter).into()
    }

    /// Applies a unifier after renaming its auxiliary variables apart from the branch.
    fn apply(&mut self, mu: &Substitution, system_vars: &BTreeSet<Name>, theory: &DeductionSystem) {
        let mut renaming = Substitution::new();
        for (_, image) in mu.iter() {
            for v in image.vars() {
                if !system_vars.contains(&v) && renaming.get(&v).is_none() {
                    let fresh = self.fresh("u");
                    renaming.insert(v, Term::var(&fresh));
                }
            }
        }
        let mu = mu.map_images(|t| renaming.apply(t));
        self.sigma = self.sigma.compose(&mu);
        for g in &mut self.goals {
            g.term = theory.simplify(&mu.apply(&g.term));
        }
        for it in &mut self.items {
            it.term = theory.simplify(&mu.apply(&it.term));
        }
    }
}

/// Destructor positions: rule index, argument index.
fn destructor_positions(theory: &DeductionSystem) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (ri, rule) in theory.rewrite.rules.iter().enumerate() {
        if !rule.rhs.is_var() || !rule.lhs.symbol().is_some_and(|s| theory.is_public(s)) {
            continue;
        }
        for (ai, arg) in rule.lhs.args().iter().enumerate() {
            if !arg.is_var() && arg.contains(&rule.rhs) {
                out.push((ri, ai));
            }
        }
    }
    out
}

struct Search<'a> {
    honest: &'a SymbolicDerivation,
    theory: &'a DeductionSystem,
    cfg: &'a SolverConfig,
    order: &'a EventOrder,
    receptions: Vec<usize>,
    destructors: Vec<(usize, usize)>,
    defined: BTreeSet<Name>,
    bound: usize,
    steps: usize,
    exhausted: bool,
    failures: usize,
    found: Vec<Solution>,
    oversized: Vec<Solution>,
}

impl Search<'_> {
    fn explore(&mut self, b: Branch) {
        if self.steps >= self.cfg.step_limit {
            self.exhausted = true;
            return;
        }
        self.steps += 1;
        let Some(i) = b.goals.iter().position(|g| !g.term.is_var()) else {
            return self.finish(b);
        };
        let goal = b.goals[i].clone();

        for item in b.items.iter().filter(|it| it.from <= goal.at) {
            let system = UnificationSystem::single(goal.term.clone(), item.term.clone());
            let vars = system.vars();
            let unifiers = match unify(system, self.theory, self.cfg.narrowing_depth) {
                Ok(u) => u,
                Err(_) => {
                    self.exhausted = true;
                    continue;
                }
            };
            for mu in unifiers {
                let mut child = b.clone();
                child.goals.remove(i);
                child.slots.insert(goal.slot.clone(), item.recipe.clone());
                child.apply(&mu, &vars, self.theory);
                self.explore(child);
            }
        }

        if let Kind::App { symbol, args } = goal.term.kind() {
            if self.theory.is_public(symbol) {
                let mut child = b.clone();
                child.goals.remove(i);
                let mut slots = Vec::with_capacity(args.len());
                for (k, a) in args.iter().enumerate() {
                    let slot = child.fresh("s");
                    slots.push(Term::var(&slot));
                    child.goals.insert(i + k, Goal { term: a.clone(), at: goal.at, slot });
                }
                child.slots.insert(goal.slot.clone(), Term::app_named(symbol, slots));
                self.explore(child);
            }
        }

        if let Some(stuck) = self.stuck_subterm(&goal.term) {
            for rule in self.theory.rewrite.rules.iter().filter(|r| r.lhs.symbol() == stuck.symbol()) {
                let mut base = b.clone();
                let mut renaming = Substitution::new();
                for v in rule.lhs.vars() {
                    renaming.insert(v, Term::var(&base.fresh("r")));
                }
                let system = UnificationSystem::single(stuck.clone(), renaming.apply(&rule.lhs));
                if let Some(mu) = unify_syntactic(&system) {
                    base.apply(&mu, &system.vars(), self.theory);
                    self.explore(base);
                }
            }
        }

        if b.analyses < self.cfg.analysis_depth {
            self.analyse(&b, i, &goal);
        }
    }

    /// An innermost open subterm headed by a rewrite rule symbol, which only
    /// an instantiation of its variables can reduce.
    fn stuck_subterm(&self, term: &Term) -> Option<Term> {
        let mut found: Vec<Term> = Vec::new();
        term.walk(&mut |s| {
            if !s.is_ground() && s.symbol().is_some_and(|f| self.defined.contains(f)) {
                found.push(s.clone());
            }
        });
        found.iter().find(|s| !found.iter().any(|o| o != *s && s.contains(o))).cloned()
    }

    fn analyse(&mut self, b: &Branch, i: usize, goal: &Goal) {
        for item in b.items.iter().filter(|it| it.from <= goal.at && !it.term.is_var()) {
            for (ri, ai) in self.destructors.clone() {
                let key = (item.recipe.clone(), ri, ai);
                if b.analysed.contains(&key) {
                    continue;
                }
                let mut base = b.clone();
                let rule = &self.theory.rewrite.rules[ri];
                let mut renaming = Substitution::new();
                for v in rule.lhs.vars() {
                    let fresh = base.fresh("r");
                    renaming.insert(v, Term::var(&fresh));
                }
                let lhs = renaming.apply(&rule.lhs);
                let rhs = renaming.apply(&rule.rhs);
                let system = UnificationSystem::single(item.term.clone(), lhs.args()[ai].clone());
                let vars = system.vars();
                let unifiers = match unify(system, self.theory, self.cfg.narrowing_depth) {
                    Ok(u) => u,
                    Err(_) => {
                        self.exhausted = true;
                        continue;
                    }
                };
                for mu in unifiers {
                    let mut child = base.clone();
                    child.analysed.insert(key.clone());
                    child.analyses += 1;
                    let mut recipe_args = Vec::new();
                    let mut subgoals = Vec::new();
                    for (k, arg) in lhs.args().iter().enumerate() {
                        if k == ai {
                            recipe_args.push(item.recipe.clone());
                        } else {
                            let slot = child.fresh("s");
                            recipe_args.push(Term::var(&slot));
                            subgoals.push(Goal { term: arg.clone(), at: goal.at, slot });
                        }
                    }
                    let symbol = lhs.symbol().expect("rule left side is an application").clone();
                    child.items.push(Item {
                        term: rhs.clone(),
                        recipe: Term::app_named(&symbol, recipe_args),
                        from: goal.at,
                    });
                    for (k, g) in subgoals.into_iter().enumerate() {
                        child.goals.insert(i + k, g);
                    }
                    child.apply(&mu, &vars, self.theory);
                    self.explore(child);
                }
            }
        }
    }

    fn resolve(slots: &BTreeMap<Name, Term>, recipe: &Term, depth: usize) -> Option<Term> {
        if depth > 256 {
            return None;
        }
        match recipe.kind() {
            Kind::Var(s) => Self::resolve(slots, slots.get(s)?, depth + 1),
            Kind::Const { .. } => Some(recipe.clone()),
            Kind::App { args, .. } => {
                let inner = args.iter().map(|a| Self::resolve(slots, a, depth + 1)).collect::<Option<Vec<_>>>()?;
                Some(recipe.with_args(inner))
            }
        }
    }

    fn finish(&mut self, mut b: Branch) {
        let mut fill = Substitution::new();
        let mut next = 0;
        let mut assign = |v: Name, fill: &mut Substitution| {
            if fill.get(&v).is_none() {
                next += 1;
                fill.insert(v, Term::nonce(&format!("a{next}")));
            }
        };
        for g in &b.goals {
            assign(g.term.var_name().expect("solved form").clone(), &mut fill);
        }
        for r in &self.receptions {
            for v in b.sigma.apply(&self.honest.var(*r)).vars() {
                assign(v, &mut fill);
            }
        }
        for g in &b.goals {
            b.slots.insert(g.slot.clone(), fill.apply(&g.term));
        }
        let mut recipes = BTreeMap::new();
        for (p, r) in self.receptions.iter().enumerate() {
            let Some(recipe) = Self::resolve(&b.slots, &Term::var(&root_slot(p)), 0) else {
                return;
            };
            recipes.insert(*r, self.theory.simplify(&recipe));
        }
        let Some(solution) = self.realize(recipes) else {
            return;
        };
        if solution.asd.states.len() > self.bound {
            self.oversized.push(solution);
            return;
        }
        match attacker_values(self.honest, &solution, self.theory) {
            Ok(Some((_, values))) => {
                if well_formed(&solution.asd, &values) {
                    self.found.push(solution);
                }
            }
            _ => self.failures += 1,
        }
    }

    /// Builds the attacker derivation and renames its nonces in creation order.
    fn realize(&self, recipes: BTreeMap<usize, Term>) -> Option<Solution> {
        let (asd, _) = build_attacker(self.order, &recipes)?;
        let mut renaming = BTreeMap::new();
        for kind in asd.states.values() {
            if let StateKind::Memory(n) = kind {
                let k = renaming.len() + 1;
                renaming.entry(n.clone()).or_insert_with(|| Term::nonce(&format!("n{k}")));
            }
        }
        let recipes: BTreeMap<usize, Term> = recipes
            .into_iter()
            .map(|(r, t)| (r, renaming.iter().fold(t, |acc, (from, to)| crate::terms::replace_term(&acc, from, to))))
            .collect();
        let (asd, phi) = build_attacker(self.order, &recipes)?;
        Some(Solution { asd, phi, recipes, knowledge: self.order.knowledge.clone() })
    }
}

fn root_slot(position: usize) -> Name {
    format!("_root{position}").into()
}

struct Outcome {
    found: Vec<Solution>,
    oversized: Vec<Solution>,
    exhausted: bool,
    failures: usize,
}

fn run_branch(
    honest: &SymbolicDerivation,
    theory: &DeductionSystem,
    cfg: &SolverConfig,
    order: &EventOrder,
    values: &BTreeMap<usize, Term>,
    sigma: &Substitution,
) -> Outcome {
    let receptions = order.receptions();
    let availability = order.availability();
    let items = honest
        .visible_outputs()
        .into_iter()
        .filter(|o| !honest.inputs.contains(&honest.root(*o)))
        .filter_map(|o| {
            let from = *availability.get(&o)?;
            (from < receptions.len()).then(|| Item {
                term: theory.simplify(&sigma.apply(&values[&o])),
                recipe: handle(o),
                from,
            })
        })
        .collect();
    let goals = receptions
        .iter()
        .enumerate()
        .map(|(p, r)| Goal { term: theory.simplify(&sigma.apply(&values[r])), at: p, slot: root_slot(p) })
        .collect();
    let branch = Branch {
        goals,
        items,
        slots: BTreeMap::new(),
        analysed: BTreeSet::new(),
        analyses: 0,
        sigma: sigma.clone(),
        counter: 0,
    };
    let mut search = Search {
        honest,
        theory,
        cfg,
        order,
        receptions,
        destructors: destructor_positions(theory),
        defined: theory.rewrite.rules.iter().filter_map(|r| r.lhs.symbol().cloned()).collect(),
        bound: state_bound(honest, cfg),
        steps: 0,
        exhausted: false,
        failures: 0,
        found: Vec::new(),
        oversized: Vec::new(),
    };
    search.explore(branch);
    Outcome { found: search.found, oversized: search.oversized, exhausted: search.exhausted, failures: search.failures }
}

pub(super) fn solve(
    honest: &SymbolicDerivation,
    theory: &DeductionSystem,
    cfg: &SolverConfig,
    forced: Option<&BTreeMap<usize, Term>>,
) -> Result<SolutionSet, SolverError> {
    honest.validate(theory, crate::derivation::Class::Honest)?;
    let values = symbolic_values(honest, theory);
    let unifiers = match forced {
        Some(map) => {
            let sigma = Substitution::from_pairs(map.iter().map(|(r, t)| (honest.var_name(*r), t.clone())));
            let holds = honest.tests.iter().all(|(l, r)| {
                let (a, b) = (sigma.apply(&values[l]), sigma.apply(&values[r]));
                matches!((theory.normalize(&a), theory.normalize(&b)), (Ok(x), Ok(y)) if x == y)
            });
            if holds {
                vec![sigma]
            } else {
                Vec::new()
            }
        }
        None => test_unifiers(honest, theory, cfg)?,
    };
    let (orders, mut exhausted) = event_orders(honest, cfg.max_event_orders);
    let jobs: Vec<(&EventOrder, &Substitution)> =
        unifiers.iter().flat_map(|s| orders.iter().map(move |o| (o, s))).collect();
    let outcomes: Vec<Outcome> = jobs.par_iter().map(|(o, s)| run_branch(honest, theory, cfg, o, &values, s)).collect();
    let mut found = Vec::new();
    let mut oversized = Vec::new();
    let mut failures = 0;
    for o in outcomes {
        exhausted |= o.exhausted;
        failures += o.failures;
        found.extend(o.found);
        oversized.extend(o.oversized);
    }
    let solutions = minimize(found, theory);
    exhausted |= oversized.iter().any(|big| !solutions.iter().any(|s| solution_leq(s, big, theory)));
    Ok(SolutionSet { solutions, exhausted, membership_failures: failures })
}
