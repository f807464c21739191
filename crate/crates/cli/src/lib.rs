//! Command-line front end: satisfiability, equivalence, solution sets,
//! traces and normal forms from theory and protocol files.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sdequiv::{
    check_equiv, check_sat, compile_narration, from_json, parse_narration, parse_theory, serialize_witness,
    solve_complete, trace, DeductionSystem, Evaluation, SatResult, SolverConfig, SymbolicDerivation, Term, Verdict,
    Witness,
};

pub const EXIT_YES: i32 = 0;
pub const EXIT_NO: i32 = 1;
pub const EXIT_ERROR: i32 = 2;
pub const EXIT_UNKNOWN: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "sdequiv", version, about = "Symbolic derivation solver and equivalence checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide whether an attacker can run the protocol to completion.
    CheckSat {
        theory: PathBuf,
        protocol: PathBuf,
        /// Require every reception to be fixed by the tests.
        #[arg(long)]
        ground: bool,
        /// Maximum number of attacker states.
        #[arg(long)]
        bound: Option<usize>,
        /// Write the attack as a JSON document.
        #[arg(long)]
        witness: Option<PathBuf>,
    },
    /// Decide symbolic equivalence of two protocols.
    CheckEquiv {
        theory: PathBuf,
        left: PathBuf,
        right: PathBuf,
        #[arg(long)]
        bound: Option<usize>,
        #[arg(long)]
        witness: Option<PathBuf>,
    },
    /// Print the minimal solution set.
    Solve { theory: PathBuf, protocol: PathBuf },
    /// Evaluate a closed derivation given as JSON.
    Trace { theory: PathBuf, derivation: PathBuf },
    /// Print the normal form of a ground term.
    Normalize { theory: PathBuf, term: String },
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn load_theory(path: &Path) -> Result<DeductionSystem, Failure> {
    parse_theory(&read(path)?).map(|(_, d)| d).map_err(|e| Failure(format!("{}:{e}", path.display())))
}

/// A narration, or a derivation in JSON when the file starts with `{`.
fn load_honest(path: &Path, theory: &DeductionSystem) -> Result<SymbolicDerivation, Failure> {
    let text = read(path)?;
    let located = |e: &dyn std::fmt::Display| Failure(format!("{}: {e}", path.display()));
    if text.trim_start().starts_with('{') {
        return from_json(&text).map_err(|e| located(&e));
    }
    let spec = parse_narration(&text).map_err(|e| located(&e))?;
    compile_narration(&spec, theory).and_then(|p| p.honest()).map_err(|e| located(&e))
}

fn config(bound: Option<usize>) -> SolverConfig {
    SolverConfig { max_attacker_states: bound, ..SolverConfig::default() }
}

fn write_witness(path: Option<&PathBuf>, witness: &Witness) -> Result<(), Failure> {
    if let Some(p) = path {
        let mut text = serialize_witness(witness);
        text.push('\n');
        fs::write(p, text).map_err(|e| Failure(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn recipes_lines(out: &mut dyn Write, recipes: &std::collections::BTreeMap<usize, Term>) -> std::io::Result<()> {
    for (r, t) in recipes {
        writeln!(out, "  x{r} <- {t}")?;
    }
    Ok(())
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32, Failure> {
    match command {
        Command::CheckSat { theory, protocol, ground, bound, witness } => {
            let theory = load_theory(&theory)?;
            let honest = load_honest(&protocol, &theory)?;
            match check_sat(&honest, &theory, &config(bound), ground)? {
                SatResult::Sat(solution) => {
                    writeln!(out, "SAT")?;
                    recipes_lines(out, &solution.recipes)?;
                    write_witness(witness.as_ref(), &Witness::for_solution(&honest, *solution, &theory))?;
                    Ok(EXIT_YES)
                }
                SatResult::Unsat => {
                    writeln!(out, "UNSAT")?;
                    Ok(EXIT_NO)
                }
                SatResult::Unknown => {
                    writeln!(out, "UNKNOWN: search bound reached")?;
                    Ok(EXIT_UNKNOWN)
                }
            }
        }
        Command::CheckEquiv { theory, left, right, bound, witness } => {
            let theory = load_theory(&theory)?;
            let (l, r) = (load_honest(&left, &theory)?, load_honest(&right, &theory)?);
            match check_equiv(&l, &r, &theory, &config(bound))? {
                Verdict::Equivalent { probes } => {
                    writeln!(out, "EQUIVALENT ({probes} probes)")?;
                    Ok(EXIT_YES)
                }
                Verdict::EquivalentUpToBound { probes } => {
                    writeln!(out, "EQUIVALENT UP TO BOUND ({probes} probes)")?;
                    Ok(EXIT_UNKNOWN)
                }
                Verdict::Counterexample(c) => {
                    writeln!(out, "INEQUIVALENT")?;
                    writeln!(out, "  direction: {:?}", c.direction)?;
                    writeln!(out, "  probe {}: {}", c.probe_index, c.probe)?;
                    recipes_lines(out, &c.solution.recipes)?;
                    match &c.failure {
                        sdequiv::equivalence::Failure::Test { left, right, left_value, right_value } => {
                            writeln!(out, "  failing test x{left} = x{right}: {left_value} != {right_value}")?
                        }
                        sdequiv::equivalence::Failure::Connection(m) => writeln!(out, "  no connection: {m}")?,
                    }
                    write_witness(witness.as_ref(), &Witness::Counterexample(c))?;
                    Ok(EXIT_NO)
                }
            }
        }
        Command::Solve { theory, protocol } => {
            let theory = load_theory(&theory)?;
            let honest = load_honest(&protocol, &theory)?;
            let set = solve_complete(&honest, &theory, &SolverConfig::default())?;
            let mut solutions = Vec::new();
            for s in set.solutions.iter() {
                let text = serialize_witness(&Witness::for_solution(&honest, s.clone(), &theory));
                solutions.push(serde_json::from_str::<serde_json::Value>(&text)?);
            }
            let doc = serde_json::json!({ "exhausted": set.exhausted, "solutions": solutions });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
            Ok(match (set.solutions.is_empty(), set.exhausted) {
                (false, _) => EXIT_YES,
                (true, false) => EXIT_NO,
                (true, true) => EXIT_UNKNOWN,
            })
        }
        Command::Trace { theory, derivation } => {
            let theory = load_theory(&theory)?;
            let d = from_json(&read(&derivation)?).map_err(|e| Failure(format!("{}: {e}", derivation.display())))?;
            match trace(&d, &theory)? {
                Evaluation::Sat(t) => {
                    for (i, v) in &t.values {
                        writeln!(out, "x{i} = {v}")?;
                    }
                    Ok(EXIT_YES)
                }
                Evaluation::Unsat { left, right, trace } => {
                    writeln!(
                        out,
                        "UNSAT: test x{left} = x{right} fails ({} != {})",
                        trace.values[&left], trace.values[&right]
                    )?;
                    Ok(EXIT_NO)
                }
            }
        }
        Command::Normalize { theory, term } => {
            let theory = load_theory(&theory)?;
            let t: Term = term.parse()?;
            writeln!(out, "{}", theory.normalize(&t)?)?;
            Ok(EXIT_YES)
        }
    }
}

/// Runs one command line and returns its exit status: 0 for SAT or
/// equivalent, 1 for UNSAT or inequivalent, 2 for errors, 3 when a search
/// bound was reached.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_YES };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(Failure(message)) => {
            let _ = writeln!(err, "error: {message}");
            EXIT_ERROR
        }
    }
}
