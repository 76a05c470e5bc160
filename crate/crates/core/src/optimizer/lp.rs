//! LP-format export of the assignment program and solution-file import, for
//! handing large instances to an external MILP solver.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use super::{decoupled_upper_bound, objective_value, BackendKind, SolveReport};
use crate::curve::ActionAssignment;
use crate::error::{Error, Result};
use crate::scenario::ScenarioTable;
use crate::util::fmt_g6;

/// The assignment program of a scenario table: binaries `b_i_j`, free
/// continuous `M_t`, `N·H` covering rows and `n` one-hot rows.
#[derive(Debug, Clone, Copy)]
pub struct AssignmentModel<'a> {
    table: &'a ScenarioTable,
}

impl<'a> AssignmentModel<'a> {
    pub fn new(table: &'a ScenarioTable) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &ScenarioTable {
        self.table
    }

    pub fn binaries(&self) -> usize {
        self.table.action_counts().iter().sum()
    }

    pub fn continuous(&self) -> usize {
        self.table.scenarios()
    }

    pub fn covering_rows(&self) -> usize {
        self.table.scenarios() * self.table.horizon()
    }

    pub fn one_hot_rows(&self) -> usize {
        self.table.actors()
    }
}

/// Writes the model in LP format. Names are one-based: `b_i_j`, `M_t`,
/// covering rows `c_t_h`, one-hot rows `one_i`. Coefficients carry six
/// significant digits. The `M_t` are declared free since rewards can be negative.
pub fn export_lp<W: Write>(model: &AssignmentModel<'_>, mut sink: W) -> Result<()> {
    let table = model.table;
    let counts = table.action_counts();
    writeln!(sink, "\\ max-min action assignment program")?;
    writeln!(sink, "Maximize")?;
    let objective: Vec<String> = (1..=table.scenarios()).map(|t| format!("M_{t}")).collect();
    writeln!(sink, " obj: {}", objective.join(" + "))?;
    writeln!(sink, "Subject To")?;
    for t in 0..table.scenarios() {
        for h in 0..table.horizon() {
            write!(sink, " c_{}_{}:", t + 1, h + 1)?;
            let mut first = true;
            for (i, &k) in counts.iter().enumerate() {
                for j in 0..k {
                    let v = table.get(t, i, j, h);
                    let term = fmt_g6(v.abs());
                    match (first, v < 0.0) {
                        (true, false) => write!(sink, " {term} b_{}_{}", i + 1, j + 1)?,
                        (true, true) => write!(sink, " -{term} b_{}_{}", i + 1, j + 1)?,
                        (false, false) => write!(sink, " + {term} b_{}_{}", i + 1, j + 1)?,
                        (false, true) => write!(sink, " - {term} b_{}_{}", i + 1, j + 1)?,
                    }
                    first = false;
                }
            }
            writeln!(sink, " - M_{} >= 0", t + 1)?;
        }
    }
    for (i, &k) in counts.iter().enumerate() {
        let terms: Vec<String> = (1..=k).map(|j| format!("b_{}_{j}", i + 1)).collect();
        writeln!(sink, " one_{}: {} = 1", i + 1, terms.join(" + "))?;
    }
    writeln!(sink, "Bounds")?;
    for t in 1..=table.scenarios() {
        writeln!(sink, " M_{t} free")?;
    }
    writeln!(sink, "Binaries")?;
    for (i, &k) in counts.iter().enumerate() {
        let names: Vec<String> = (1..=k).map(|j| format!("b_{}_{j}", i + 1)).collect();
        writeln!(sink, " {}", names.join(" "))?;
    }
    writeln!(sink, "End")?;
    Ok(())
}

enum VarName {
    Binary(usize, usize),
    Continuous,
}

fn parse_name(name: &str, action_counts: &[usize]) -> Option<VarName> {
    if let Some(rest) = name.strip_prefix("b_") {
        let (i, j) = rest.split_once('_')?;
        let i: usize = i.parse().ok()?;
        let j: usize = j.parse().ok()?;
        if i >= 1 && i <= action_counts.len() && j >= 1 && j <= action_counts[i - 1] {
            return Some(VarName::Binary(i - 1, j - 1));
        }
        return None;
    }
    let t: usize = name.strip_prefix("M_")?.parse().ok()?;
    (t >= 1).then_some(VarName::Continuous)
}

/// Reads `name value` lines. Binary values are rounded at 0.5; each actor
/// must end up with exactly one active action. Blank lines and `#` comments
/// are skipped; `M_t` lines are accepted and ignored.
pub fn import_solution<R: BufRead>(source: R, action_counts: &[usize]) -> Result<ActionAssignment> {
    let mut active: Vec<Vec<usize>> = vec![Vec::new(); action_counts.len()];
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        let [name, value] = tokens[..] else {
            return Err(Error::Parse { line: lineno, msg: format!("expected `name value`, got {trimmed:?}") });
        };
        let value: f64 = value
            .parse()
            .map_err(|e| Error::Parse { line: lineno, msg: format!("bad value {value:?}: {e}") })?;
        match parse_name(name, action_counts) {
            Some(VarName::Binary(i, j)) => {
                if value >= 0.5 {
                    active[i].push(j);
                }
            }
            Some(VarName::Continuous) => {}
            None => {
                return Err(Error::Parse { line: lineno, msg: format!("unknown variable {name:?}") });
            }
        }
    }
    let mut actions = Vec::with_capacity(active.len());
    for (actor, ones) in active.iter().enumerate() {
        match ones.as_slice() {
            [j] => actions.push(*j),
            _ => return Err(Error::InfeasibleSolution { actor, ones: ones.len() }),
        }
    }
    Ok(ActionAssignment::new(actions))
}

/// Runs an external MILP solver through the shell.
///
/// `command` may contain `{lp}` and `{sol}`; they are replaced by the paths of
/// the exported model and of the solution file the solver must write
/// (`name value` lines).
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalSolver {
    pub command: String,
}

static INVOCATION: AtomicU64 = AtomicU64::new(0);

impl ExternalSolver {
    pub fn new(command: impl Into<String>) -> Self {
        Self { command: command.into() }
    }

    pub fn solve(&self, table: &ScenarioTable) -> Result<SolveReport> {
        let started = Instant::now();
        let stem = format!(
            "mblab-{}-{}",
            std::process::id(),
            INVOCATION.fetch_add(1, Ordering::Relaxed)
        );
        let dir = std::env::temp_dir();
        let lp_path: PathBuf = dir.join(format!("{stem}.lp"));
        let sol_path: PathBuf = dir.join(format!("{stem}.sol"));
        export_lp(&AssignmentModel::new(table), fs::File::create(&lp_path)?)?;
        let cmd = self
            .command
            .replace("{lp}", &lp_path.display().to_string())
            .replace("{sol}", &sol_path.display().to_string());
        let status = Command::new("sh").arg("-c").arg(&cmd).status();
        let outcome = match status {
            Ok(s) if s.success() => fs::File::open(&sol_path)
                .map_err(Error::from)
                .and_then(|f| import_solution(BufReader::new(f), table.action_counts())),
            Ok(s) => Err(Error::Solver(format!("`{cmd}` exited with {s}"))),
            Err(e) => Err(Error::Solver(format!("cannot run `{cmd}`: {e}"))),
        };
        let _ = fs::remove_file(&lp_path);
        let _ = fs::remove_file(&sol_path);
        let assignment = outcome?;
        let value = objective_value(table, &assignment)?;
        Ok(SolveReport::new(
            assignment,
            value,
            decoupled_upper_bound(table),
            BackendKind::External,
            started.elapsed(),
            0,
        ))
    }
}
