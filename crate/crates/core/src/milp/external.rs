//! Adapter for external MILP engines.
//!
//! The model is written in LP format to a temporary file and the command is
//! run with that path appended. The command must print the solution on
//! stdout as `name value` lines (one per nonzero variable, others default to
//! zero) and may print `status optimal|infeasible|timeout` and
//! `objective <value>` lines.

use std::process::Command;

use super::lp::{lp_names, write_lp};
use super::{Model, SolveOptions, Solution, Status};
use crate::error::{Error, Result};

pub fn solve_external(model: &Model, command: &str, opts: &SolveOptions) -> Result<Solution> {
    model.validate()?;
    let dir = std::env::temp_dir().join(format!("dfmap-{}-{}", std::process::id(), unique()));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("model.lp");
    std::fs::write(&path, write_lp(model)).map_err(|e| Error::io(&path, e))?;

    let mut parts = command.split_whitespace();
    let program = parts.next().ok_or_else(|| Error::External("empty solver command".into()))?;
    let output = Command::new(program)
        .args(parts)
        .arg(&path)
        .env("DFMAP_TIME_LIMIT", opts.time_limit.as_secs_f64().to_string())
        .output()
        .map_err(|e| Error::External(format!("cannot run `{program}`: {e}")));
    let _ = std::fs::remove_dir_all(&dir);
    let output = output?;
    if !output.status.success() {
        return Err(Error::External(format!(
            "`{command}` exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    parse_solution(model, &String::from_utf8_lossy(&output.stdout))
}

fn unique() -> u64 {
    use std::sync::atomic::{AtomicU64, Ordering};
    static NEXT: AtomicU64 = AtomicU64::new(0);
    NEXT.fetch_add(1, Ordering::Relaxed)
}

pub fn parse_solution(model: &Model, text: &str) -> Result<Solution> {
    let names = lp_names(model);
    let mut values = vec![0.0; model.vars.len()];
    let mut status = None;
    for line in text.lines() {
        let mut it = line.split_whitespace();
        let (Some(key), Some(val)) = (it.next(), it.next()) else { continue };
        match key {
            "status" => {
                status = Some(match val {
                    "optimal" => Status::Optimal,
                    "infeasible" => Status::Infeasible,
                    "timeout" => Status::Timeout,
                    other => return Err(Error::External(format!("unknown status `{other}`"))),
                })
            }
            "objective" => {}
            _ => {
                let Some(idx) = names.iter().position(|n| n == key) else { continue };
                values[idx] = val
                    .parse()
                    .map_err(|_| Error::External(format!("bad value `{val}` for {key}")))?;
            }
        }
    }
    let status = status.unwrap_or(Status::Optimal);
    if status == Status::Infeasible {
        return Ok(Solution { status, objective: f64::INFINITY, values: Vec::new(), nodes: 0 });
    }
    if !model.is_feasible(&values, 1e-6) {
        return Err(Error::External("returned point violates the model".into()));
    }
    let objective = model.objective.as_ref().expect("validated").eval(&values);
    Ok(Solution { status, objective, values, nodes: 0 })
}
