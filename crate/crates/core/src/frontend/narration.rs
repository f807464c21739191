use std::collections::BTreeMap;

use super::{content_lines, parse_term_at, FrontendError};
use crate::derivation::{connect, Class, Connection, StateKind, SymbolicDerivation};
use crate::terms::{match_into, DeductionSystem, Kind, Name, Substitution, Term};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub line: usize,
    pub from: Name,
    pub to: Name,
    pub term: Term,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Send(Message),
    /// The role compares the copy of `term` it received with one it builds itself.
    Check {
        line: usize,
        role: Name,
        term: Term,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NarrationSpec {
    pub steps: Vec<Step>,
    /// Initial knowledge per role, in declaration order.
    pub knowledge: Vec<(Name, Vec<Term>)>,
    pub fresh: Vec<(Name, Vec<Term>)>,
    /// Values given to the attacker at the start.
    pub publish: Vec<Term>,
    /// Roles taking part in the analysed session; every declared role when empty.
    pub run: Vec<Name>,
}

fn narration_error(line: usize, message: impl Into<String>) -> FrontendError {
    FrontendError::Narration(format!("line {line}: {}", message.into()))
}

/// Splits at commas outside parentheses, returning each piece with its column.
fn split_list(text: &str, column: usize) -> Vec<(&str, usize)> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push((start, i));
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push((start, text.len()));
    out.into_iter()
        .map(|(a, b)| {
            let piece = &text[a..b];
            let trimmed = piece.trim_start();
            (trimmed.trim_end(), column + a + piece.len() - trimmed.len())
        })
        .filter(|(p, _)| !p.is_empty())
        .collect()
}

fn role_name(word: &str, line: usize, column: usize) -> Result<Name, FrontendError> {
    if word.is_empty() || !word.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(FrontendError::Syntax { line, column, message: format!("invalid role name `{word}`") });
    }
    Ok(word.into())
}

fn term_list(text: &str, line: usize, column: usize) -> Result<Vec<Term>, FrontendError> {
    split_list(text, column).into_iter().map(|(p, c)| parse_term_at(p, line, c)).collect()
}

/// Parses a narration:
///
/// ```text
/// A -> B : penc(Na,pk(B))
/// B -> A : penc(f(Na),pk(A))
/// A checks f(Na)
/// where A knows A, B, pk(A), pk(B), sk(A)
/// where B knows A, B, pk(A), pk(B), sk(B)
/// A fresh Na
/// publish A, B, pk(A), pk(B)
/// run A, B
/// ```
pub fn parse_narration(text: &str) -> Result<NarrationSpec, FrontendError> {
    let mut spec = NarrationSpec::default();
    for (line, column, body) in content_lines(text) {
        if let Some(arrow) = body.find("->") {
            let Some(colon) = body.find(':') else {
                return Err(FrontendError::Syntax { line, column, message: "expected `X -> Y : term`".into() });
            };
            if colon < arrow {
                return Err(FrontendError::Syntax { line, column, message: "expected `X -> Y : term`".into() });
            }
            let from = role_name(body[..arrow].trim(), line, column)?;
            let to = role_name(body[arrow + 2..colon].trim(), line, column + arrow + 2)?;
            let rest = &body[colon + 1..];
            let trimmed = rest.trim_start();
            let term = parse_term_at(trimmed, line, column + colon + 1 + rest.len() - trimmed.len())?;
            spec.steps.push(Step::Send(Message { line, from, to, term }));
            continue;
        }
        let mut words = body.split_whitespace().peekable();
        let mut offset = 0;
        if words.peek() == Some(&"where") {
            words.next();
            offset = body.find("where").map_or(0, |p| p + 5);
            if body[offset..].trim().is_empty() {
                continue;
            }
        }
        let tail = &body[offset..];
        let lead = tail.len() - tail.trim_start().len();
        let tail = tail.trim_start();
        let at = column + offset + lead;
        let (first, after) = tail.split_at(tail.find(char::is_whitespace).unwrap_or(tail.len()));
        let after_trim = after.trim_start();
        let after_at = at + first.len() + after.len() - after_trim.len();
        match first {
            "publish" => spec.publish.extend(term_list(after_trim, line, after_at)?),
            "run" => {
                for (name, c) in split_list(after_trim, after_at) {
                    spec.run.push(role_name(name, line, c)?);
                }
            }
            _ => {
                let role = role_name(first, line, at)?;
                let (keyword, rest) =
                    after_trim.split_at(after_trim.find(char::is_whitespace).unwrap_or(after_trim.len()));
                let rest_trim = rest.trim_start();
                let rest_at = after_at + keyword.len() + rest.len() - rest_trim.len();
                match keyword {
                    "knows" => spec.knowledge.push((role, term_list(rest_trim, line, rest_at)?)),
                    "fresh" => spec.fresh.push((role, term_list(rest_trim, line, rest_at)?)),
                    "checks" => {
                        let term = parse_term_at(rest_trim, line, rest_at)?;
                        spec.steps.push(Step::Check { line, role, term });
                    }
                    _ => {
                        return Err(FrontendError::Syntax {
                            line,
                            column: after_at,
                            message: "expected `knows`, `fresh` or `checks`".into(),
                        })
                    }
                }
            }
        }
    }
    Ok(spec)
}

/// Per-role honest derivations, the attacker's initial knowledge and the analysed session.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompiledProtocol {
    pub roles: Vec<(Name, SymbolicDerivation)>,
    /// Published values, every output visible.
    pub public: Option<SymbolicDerivation>,
    pub run: Vec<Name>,
}

impl CompiledProtocol {
    pub fn role(&self, name: &str) -> Option<&SymbolicDerivation> {
        self.roles.iter().find(|(n, _)| &**n == name).map(|(_, d)| d)
    }

    /// The roles of the session placed side by side, followed by the published values.
    pub fn honest(&self) -> Result<SymbolicDerivation, FrontendError> {
        let mut parts: Vec<&SymbolicDerivation> = Vec::new();
        for name in &self.run {
            parts.push(self.role(name).ok_or_else(|| FrontendError::Narration(format!("unknown role {name}")))?);
        }
        parts.extend(self.public.as_ref());
        let mut out = SymbolicDerivation::new();
        for p in parts {
            out =
                connect(&out, p, &Connection::empty()).map_err(|e| FrontendError::Narration(e.to_string()))?.derivation;
        }
        Ok(out)
    }
}

fn desugar(t: &Term, theory: &DeductionSystem) -> Term {
    let sugar = theory.symbol("sk").is_none() && theory.symbol("inv").is_some() && theory.symbol("pk").is_some();
    let args: Vec<Term> = t.args().iter().map(|a| desugar(a, theory)).collect();
    match t.kind() {
        Kind::App { symbol, .. } if sugar && &**symbol == "sk" && args.len() == 1 => {
            Term::app("inv", vec![Term::app("pk", args)])
        }
        Kind::App { .. } => t.with_args(args),
        _ => t.clone(),
    }
}

fn checked(t: &Term, theory: &DeductionSystem, line: usize) -> Result<Term, FrontendError> {
    let t = desugar(t, theory);
    let mut problem = None;
    t.walk(&mut |s| match s.kind() {
        Kind::Var(_) => problem = Some(format!("variable {s} in a narration")),
        Kind::Const { nonce: true, .. } => problem = Some(format!("nonce {s} in a narration")),
        Kind::App { symbol, args } => match theory.symbol(symbol) {
            None => problem = Some(format!("undeclared symbol {symbol}")),
            Some(d) if d.arity != args.len() => problem = Some(format!("{symbol} expects {} arguments", d.arity)),
            Some(_) => {}
        },
        Kind::Const { .. } => {}
    });
    match problem {
        Some(p) => Err(narration_error(line, p)),
        None => Ok(t),
    }
}

struct Role<'a> {
    name: Name,
    theory: &'a DeductionSystem,
    d: SymbolicDerivation,
    seq: Vec<usize>,
    known: BTreeMap<Term, usize>,
    received: BTreeMap<Term, usize>,
    opaque: Vec<(Term, usize)>,
}

impl Role<'_> {
    fn push(&mut self, kind: StateKind) -> usize {
        let i = self.d.push(kind);
        self.d.emit(i, 1);
        self.seq.push(i);
        i
    }

    fn learn(&mut self, t: &Term, state: usize) {
        self.known.entry(t.clone()).or_insert(state);
    }

    fn can_construct(&self, t: &Term) -> bool {
        self.known.contains_key(t)
            || matches!(t.kind(), Kind::App { symbol, args }
                if self.theory.is_public(symbol) && args.iter().all(|a| self.can_construct(a)))
    }

    fn construct(&mut self, t: &Term, line: usize) -> Result<usize, FrontendError> {
        if let Some(&s) = self.known.get(t) {
            return Ok(s);
        }
        match t.kind() {
            Kind::App { symbol, args } if self.theory.is_public(symbol) => {
                let mut inner = Vec::with_capacity(args.len());
                for a in args {
                    inner.push(self.construct(a, line)?);
                }
                let s = self.push(StateKind::Deduction { symbol: symbol.clone(), args: inner });
                self.learn(t, s);
                Ok(s)
            }
            _ => Err(narration_error(line, format!("{} cannot construct {t}", self.name))),
        }
    }

    fn analyse(&mut self, value: Term, state: usize, line: usize) {
        self.received.entry(value.clone()).or_insert(state);
        self.learn(&value, state);
        let theory = self.theory;
        for rule in &theory.rewrite.rules {
            let Some(symbol) = rule.lhs.symbol().filter(|s| theory.is_public(s)) else { continue };
            if !rule.rhs.is_var() {
                continue;
            }
            for (ai, pattern) in rule.lhs.args().iter().enumerate() {
                if pattern.is_var() || !pattern.contains(&rule.rhs) {
                    continue;
                }
                let mut theta = BTreeMap::new();
                if !match_into(pattern, &value, &mut theta) {
                    continue;
                }
                let theta = Substitution::from_pairs(theta);
                let others: Vec<(usize, Term)> = rule
                    .lhs
                    .args()
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != ai)
                    .map(|(k, a)| (k, theta.apply(a)))
                    .collect();
                if others.iter().any(|(_, a)| !a.is_ground() || !self.can_construct(a)) {
                    self.opaque.push((value.clone(), line));
                    continue;
                }
                let result = theta.apply(&rule.rhs);
                if self.received.contains_key(&result) {
                    continue;
                }
                let mut args = vec![state; rule.lhs.args().len()];
                for (k, a) in &others {
                    args[*k] = self.construct(a, line).expect("checked constructible");
                }
                let s = self.push(StateKind::Deduction { symbol: symbol.clone(), args });
                self.analyse(result, s, line);
            }
        }
    }

    fn check(&mut self, t: &Term, line: usize) -> Result<(), FrontendError> {
        let Some(&left) = self.received.get(t) else {
            return Err(narration_error(line, format!("{} never received {t}", self.name)));
        };
        let right = match self.known.get(t) {
            Some(&s) if s != left => s,
            _ => match t.kind() {
                Kind::App { symbol, args } if self.theory.is_public(symbol) => {
                    let mut inner = Vec::with_capacity(args.len());
                    for a in args {
                        inner.push(self.construct(a, line)?);
                    }
                    self.push(StateKind::Deduction { symbol: symbol.clone(), args: inner })
                }
                _ => return Err(narration_error(line, format!("{} cannot rebuild {t} to check it", self.name))),
            },
        };
        self.d.test(left, right);
        self.opaque.retain(|(o, _)| o != t);
        Ok(())
    }

    fn finish(mut self) -> SymbolicDerivation {
        self.d.chain(&self.seq);
        self.d
    }
}

/// Builds one honest derivation per role: memory states for its knowledge
/// and fresh values, deductions composing what it sends and decomposing
/// what it receives, reception states and the annotated tests. Sent
/// messages are visible.
pub fn compile_narration(spec: &NarrationSpec, theory: &DeductionSystem) -> Result<CompiledProtocol, FrontendError> {
    if !spec.steps.iter().any(|s| matches!(s, Step::Send(_))) {
        return Err(FrontendError::Narration("the narration has no messages".into()));
    }
    let mut roles: Vec<Role> = Vec::new();
    for (name, terms) in &spec.knowledge {
        if roles.iter().any(|r| r.name == *name) {
            return Err(FrontendError::Narration(format!("knowledge of {name} declared twice")));
        }
        let mut role = Role {
            name: name.clone(),
            theory,
            d: SymbolicDerivation::new(),
            seq: Vec::new(),
            known: BTreeMap::new(),
            received: BTreeMap::new(),
            opaque: Vec::new(),
        };
        for t in terms {
            let t = checked(t, theory, 0)?;
            if !role.known.contains_key(&t) {
                let s = role.push(StateKind::Memory(t.clone()));
                role.learn(&t, s);
            }
        }
        roles.push(role);
    }
    let index = |roles: &[Role], name: &Name, line: usize| {
        roles
            .iter()
            .position(|r| r.name == *name)
            .ok_or_else(|| narration_error(line, format!("role {name} has no knowledge declaration")))
    };
    for (name, terms) in &spec.fresh {
        let k = index(&roles, name, 0)?;
        for t in terms {
            let t = checked(t, theory, 0)?;
            if !t.is_constant() {
                return Err(FrontendError::Narration(format!("fresh value {t} of {name} is not a name")));
            }
            let s = roles[k].push(StateKind::Memory(t.clone()));
            roles[k].learn(&t, s);
        }
    }
    let settle = |roles: &mut [Role]| -> Result<(), FrontendError> {
        for r in roles.iter() {
            if let Some((t, line)) = r.opaque.first() {
                return Err(narration_error(*line, format!("{} cannot decompose {t} and does not check it", r.name)));
            }
        }
        Ok(())
    };
    for step in &spec.steps {
        match step {
            Step::Send(m) => {
                settle(&mut roles)?;
                let term = checked(&m.term, theory, m.line)?;
                let (from, to) = (index(&roles, &m.from, m.line)?, index(&roles, &m.to, m.line)?);
                let sender = &mut roles[from];
                let start = sender.d.next_index();
                let mut s = sender.construct(&term, m.line)?;
                if s < start {
                    s = sender.push(StateKind::Reuse(s));
                }
                sender.d.emit(s, 1);
                let receiver = &mut roles[to];
                let r = receiver.push(StateKind::Reception);
                receiver.analyse(term, r, m.line);
            }
            Step::Check { line, role, term } => {
                let term = checked(term, theory, *line)?;
                let k = index(&roles, role, *line)?;
                roles[k].check(&term, *line)?;
            }
        }
    }
    settle(&mut roles)?;
    let run = if spec.run.is_empty() { roles.iter().map(|r| r.name.clone()).collect() } else { spec.run.clone() };
    for name in &run {
        index(&roles, name, 0)?;
    }
    let public = if spec.publish.is_empty() {
        None
    } else {
        let mut d = SymbolicDerivation::new();
        let mut seq = Vec::new();
        for t in &spec.publish {
            let s = d.push(StateKind::Memory(checked(t, theory, 0)?));
            d.emit(s, 2);
            seq.push(s);
        }
        d.chain(&seq);
        Some(d)
    };
    let mut out = Vec::new();
    for role in roles {
        let name = role.name.clone();
        let d = role.finish();
        d.validate(theory, Class::Honest).map_err(|e| FrontendError::Narration(format!("role {name}: {e}")))?;
        out.push((name, d));
    }
    Ok(CompiledProtocol { roles: out, public, run })
}
