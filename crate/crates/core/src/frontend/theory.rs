use std::collections::BTreeSet;
use std::fmt;

use super::{content_lines, parse_term_at, FrontendError};
use crate::terms::{DeductionSystem, Kind, Name, RewriteSystem, Rule, Symbol, Term};

/// Samples per rule for the orientation check at load time.
const ORIENTATION_SAMPLES: usize = 256;

/// A theory file as written: declarations, rules, precedence and least constant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TheorySpec {
    pub symbols: Vec<Symbol>,
    pub rules: Vec<Rule>,
    /// Least to greatest.
    pub precedence: Vec<Name>,
    pub c_min: Name,
}

impl TheorySpec {
    pub fn deduction_system(&self) -> DeductionSystem {
        DeductionSystem {
            symbols: self.symbols.clone(),
            rewrite: RewriteSystem::new(self.rules.clone(), self.precedence.clone(), &self.c_min),
        }
    }
}

impl fmt::Display for TheorySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.symbols {
            writeln!(f, "symbol {}/{} {}", s.name, s.arity, if s.public { "public" } else { "private" })?;
        }
        let order: Vec<&str> = self.precedence.iter().map(|n| &**n).collect();
        writeln!(f, "precedence {}", order.join(" "))?;
        writeln!(f, "cmin {}", self.c_min)?;
        for r in &self.rules {
            writeln!(f, "rule {} -> {}", r.lhs, r.rhs)?;
        }
        Ok(())
    }
}

fn split_keyword(text: &str, column: usize) -> (&str, &str, usize) {
    let end = text.find(char::is_whitespace).unwrap_or(text.len());
    let rest = &text[end..];
    let trimmed = rest.trim_start();
    (&text[..end], trimmed, column + end + (rest.len() - trimmed.len()))
}

fn check_symbols(t: &Term, symbols: &[Symbol], line: usize) -> Result<(), FrontendError> {
    let mut result = Ok(());
    t.walk(&mut |s| {
        if result.is_err() {
            return;
        }
        match s.kind() {
            Kind::App { symbol, args } => match symbols.iter().find(|d| d.name == *symbol) {
                None => result = Err(FrontendError::UndeclaredSymbol { line, name: symbol.to_string() }),
                Some(d) if d.arity != args.len() => {
                    result = Err(FrontendError::Invalid {
                        line,
                        message: format!("{symbol} expects {} arguments, found {}", d.arity, args.len()),
                    })
                }
                Some(_) => {}
            },
            Kind::Const { nonce: true, .. } => {
                result = Err(FrontendError::Invalid { line, message: format!("nonce {s} in a rule") })
            }
            _ => {}
        }
    });
    result
}

/// Parses a theory file:
///
/// ```text
/// symbol penc/2 public
/// symbol inv/1 private
/// precedence inv pk penc pdec
/// cmin c0
/// rule pdec(penc(?x,?y),inv(?y)) -> ?x
/// ```
pub fn parse_theory(text: &str) -> Result<(TheorySpec, DeductionSystem), FrontendError> {
    let mut symbols: Vec<Symbol> = Vec::new();
    let mut rules: Vec<(usize, Rule)> = Vec::new();
    let mut precedence: Option<(usize, Vec<Name>)> = None;
    let mut c_min: Option<Name> = None;
    for (line, column, body) in content_lines(text) {
        let (keyword, rest, at) = split_keyword(body, column);
        let syntax = |column: usize, message: &str| FrontendError::Syntax { line, column, message: message.into() };
        match keyword {
            "symbol" => {
                let words: Vec<&str> = rest.split_whitespace().collect();
                let [decl, visibility] = words[..] else {
                    return Err(syntax(at, "expected `symbol name/arity public|private`"));
                };
                let Some((name, arity)) = decl.split_once('/') else {
                    return Err(syntax(at, "expected name/arity"));
                };
                let arity: usize = arity.parse().map_err(|_| syntax(at + name.len() + 1, "arity must be a number"))?;
                let public = match visibility {
                    "public" => true,
                    "private" => false,
                    _ => return Err(syntax(at + decl.len() + 1, "expected public or private")),
                };
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(syntax(at, "invalid symbol name"));
                }
                if symbols.iter().any(|s| &*s.name == name) {
                    return Err(FrontendError::DuplicateSymbol { line, name: name.into() });
                }
                symbols.push(Symbol { name: name.into(), arity, public });
            }
            "precedence" => {
                if precedence.is_some() {
                    return Err(FrontendError::Invalid { line, message: "precedence given twice".into() });
                }
                precedence = Some((line, rest.split_whitespace().map(Name::from).collect()));
            }
            "cmin" => {
                if c_min.is_some() {
                    return Err(FrontendError::Invalid { line, message: "cmin given twice".into() });
                }
                let words: Vec<&str> = rest.split_whitespace().collect();
                let [name] = words[..] else {
                    return Err(syntax(at, "expected one constant name"));
                };
                c_min = Some(name.into());
            }
            "rule" => {
                let Some(arrow) = rest.find("->") else {
                    return Err(syntax(at, "expected `lhs -> rhs`"));
                };
                let lhs_text = rest[..arrow].trim_end();
                let rhs_text = rest[arrow + 2..].trim_start();
                let rhs_at = at + rest.len() - rhs_text.len();
                let lhs = parse_term_at(lhs_text, line, at)?;
                let rhs = parse_term_at(rhs_text, line, rhs_at)?;
                rules.push((line, Rule { lhs, rhs }));
            }
            other => return Err(syntax(column, &format!("unknown declaration `{other}`"))),
        }
    }
    let c_min = c_min.ok_or(FrontendError::Invalid { line: 0, message: "missing cmin declaration".into() })?;
    let precedence = match precedence {
        Some((line, names)) => {
            let mut seen = BTreeSet::new();
            for n in &names {
                if !symbols.iter().any(|s| s.name == *n) {
                    return Err(FrontendError::UndeclaredSymbol { line, name: n.to_string() });
                }
                if !seen.insert(n.clone()) {
                    return Err(FrontendError::Invalid { line, message: format!("{n} listed twice in precedence") });
                }
            }
            names
        }
        None => symbols.iter().map(|s| s.name.clone()).collect(),
    };
    for (line, rule) in &rules {
        check_symbols(&rule.lhs, &symbols, *line)?;
        check_symbols(&rule.rhs, &symbols, *line)?;
        if rule.lhs.is_var() {
            return Err(FrontendError::Invalid { line: *line, message: "rule left side is a variable".into() });
        }
        let lhs_vars = rule.lhs.vars();
        if let Some(v) = rule.rhs.vars().into_iter().find(|v| !lhs_vars.contains(v)) {
            return Err(FrontendError::Invalid {
                line: *line,
                message: format!("variable ?{v} occurs only on the right side"),
            });
        }
    }
    let spec = TheorySpec { symbols, rules: rules.iter().map(|(_, r)| r.clone()).collect(), precedence, c_min };
    let system = spec.deduction_system();
    if let Some((rule, l, r)) = system.orientation_failures(ORIENTATION_SAMPLES).into_iter().next() {
        let line = rules.iter().find(|(_, x)| *x == rule).map_or(0, |(l, _)| *l);
        return Err(FrontendError::Orientation {
            line,
            rule: format!("{} -> {}", rule.lhs, rule.rhs),
            instance: format!("{l} -> {r}"),
        });
    }
    Ok((spec, system))
}
