//! CPLEX LP text format: writer and a reader for the subset the writer emits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::LPProblem;
use crate::error::{file_err, Error, Result};

const TERMS_PER_LINE: usize = 6;

/// 17 significant digits, enough to reproduce every `f64` exactly.
fn number(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_terms<W: Write>(out: &mut W, terms: &[(f64, String)]) -> std::io::Result<()> {
    if terms.is_empty() {
        // An empty expression is written as a zero multiple of a placeholder variable.
        return write!(out, " 0 x_empty");
    }
    for (t, (coef, name)) in terms.iter().enumerate() {
        if t > 0 && t % TERMS_PER_LINE == 0 {
            write!(out, "\n   ")?;
        }
        let sign = if coef.is_sign_negative() { '-' } else { '+' };
        write!(out, " {sign} {} {name}", number(coef.abs()))?;
    }
    Ok(())
}

pub fn write_lp<W: Write>(problem: &LPProblem, mut out: W) -> Result<()> {
    problem.validate()?;
    let names: Vec<String> = (0..problem.num_vars).map(|v| problem.var_name(v)).collect();
    writeln!(out, "\\ sparse multi-kernel hinge-loss training problem")?;
    writeln!(out, "Minimize")?;
    write!(out, " obj:")?;
    let obj: Vec<(f64, String)> = problem
        .objective_coeffs
        .iter()
        .zip(&names)
        .filter(|(c, _)| **c != 0.0)
        .map(|(c, n)| (*c, n.clone()))
        .collect();
    write_terms(&mut out, &obj)?;
    writeln!(out)?;
    writeln!(out, "Subject To")?;
    for (i, row) in problem.constraint_matrix.rows().into_iter().enumerate() {
        write!(out, " c{i}:")?;
        let terms: Vec<(f64, String)> = row
            .iter()
            .zip(&names)
            .filter(|(a, _)| **a != 0.0)
            .map(|(a, n)| (*a, n.clone()))
            .collect();
        write_terms(&mut out, &terms)?;
        writeln!(out, " >= {}", number(problem.rhs[i]))?;
    }
    writeln!(out, "Bounds")?;
    for n in &names {
        writeln!(out, " {n} >= 0")?;
    }
    writeln!(out, "End")?;
    out.flush()?;
    Ok(())
}

pub fn export_lp_file(problem: &LPProblem, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(file_err(path))?;
    write_lp(problem, BufWriter::new(file))
}

/// Contents of an LP file in the written subset: objective terms, `>=` rows and
/// variables with an explicit zero lower bound.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedLp {
    pub objective: Vec<(String, f64)>,
    pub constraints: Vec<(String, Vec<(String, f64)>, f64)>,
    pub nonnegative: Vec<String>,
}

#[derive(PartialEq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Done,
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::Format(format!("line {line}: expected a number, found `{tok}`")))
}

/// Reads signed `coef name` pairs from a token stream.
fn parse_terms(tokens: &[(usize, &str)]) -> Result<Vec<(String, f64)>> {
    let mut terms = Vec::new();
    let mut t = 0;
    while t < tokens.len() {
        let (line, tok) = tokens[t];
        let sign = match tok {
            "+" => 1.0,
            "-" => -1.0,
            _ => return Err(Error::Format(format!("line {line}: expected a sign, found `{tok}`"))),
        };
        let (Some(&(_, c)), Some(&(_, name))) = (tokens.get(t + 1), tokens.get(t + 2)) else {
            return Err(Error::Format(format!("line {line}: truncated term")));
        };
        terms.push((name.to_string(), sign * parse_number(c, line)?));
        t += 3;
    }
    Ok(terms)
}

pub fn parse_lp_text(text: &str) -> Result<ParsedLp> {
    let mut section = Section::Preamble;
    let mut out = ParsedLp::default();
    let mut pending: Option<(usize, String, Vec<(usize, String)>)> = None;

    let flush = |pending: &mut Option<(usize, String, Vec<(usize, String)>)>,
                     section: &Section,
                     out: &mut ParsedLp|
     -> Result<()> {
        let Some((line, name, toks)) = pending.take() else {
            return Ok(());
        };
        let toks: Vec<(usize, &str)> = toks.iter().map(|(l, s)| (*l, s.as_str())).collect();
        match section {
            Section::Objective => {
                if toks.iter().any(|(_, s)| *s == "x_empty") {
                    return Ok(());
                }
                out.objective = parse_terms(&toks)?;
            }
            Section::Constraints => {
                let ge = toks
                    .iter()
                    .position(|(_, s)| *s == ">=")
                    .ok_or_else(|| Error::Format(format!("line {line}: constraint `{name}` has no `>=`")))?;
                if ge + 2 != toks.len() {
                    return Err(Error::Format(format!("line {line}: malformed right-hand side")));
                }
                let terms = if toks[..ge].iter().any(|(_, s)| *s == "x_empty") {
                    Vec::new()
                } else {
                    parse_terms(&toks[..ge])?
                };
                let rhs = parse_number(toks[ge + 1].1, toks[ge + 1].0)?;
                out.constraints.push((name, terms, rhs));
            }
            _ => {}
        }
        Ok(())
    };

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('\\') {
            continue;
        }
        let header = match trimmed.to_ascii_lowercase().as_str() {
            "minimize" => Some(Section::Objective),
            "subject to" => Some(Section::Constraints),
            "bounds" => Some(Section::Bounds),
            "end" => Some(Section::Done),
            _ => None,
        };
        if let Some(next) = header {
            flush(&mut pending, &section, &mut out)?;
            section = next;
            continue;
        }
        match section {
            Section::Preamble | Section::Done => {
                return Err(Error::Format(format!("line {line}: content outside any section")));
            }
            Section::Bounds => {
                let toks: Vec<&str> = trimmed.split_whitespace().collect();
                match toks.as_slice() {
                    [name, ">=", zero] if parse_number(zero, line)? == 0.0 => out.nonnegative.push(name.to_string()),
                    _ => return Err(Error::Format(format!("line {line}: unsupported bound `{trimmed}`"))),
                }
            }
            Section::Objective | Section::Constraints => {
                let mut toks = trimmed.split_whitespace().peekable();
                if let Some(first) = toks.peek() {
                    if let Some(name) = first.strip_suffix(':') {
                        let name = name.to_string();
                        toks.next();
                        flush(&mut pending, &section, &mut out)?;
                        pending = Some((line, name, Vec::new()));
                    }
                }
                let Some((_, _, acc)) = pending.as_mut() else {
                    return Err(Error::Format(format!("line {line}: expression without a label")));
                };
                acc.extend(toks.map(|t| (line, t.to_string())));
            }
        }
    }
    flush(&mut pending, &section, &mut out)?;
    if section != Section::Done {
        return Err(Error::Format("missing `End`".into()));
    }
    Ok(out)
}
