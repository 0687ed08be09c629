//! File-based bridge to an external MILP solver.
//!
//! The model is exported in CPLEX LP format and the configured command is
//! invoked with `{model}` / `{solution}` placeholders substituted by the
//! actual file paths. The solution file is expected to contain one
//! whitespace-separated `variable value` pair per line; lines starting with
//! `#` and unknown variable names are ignored, missing variables default to
//! zero. Most command-line solvers can be adapted with a small wrapper
//! script that converts their native output to this layout.

use super::milp::{extract_schedule_from_values, write_model, MilpModel};
use super::{MilpSolution, MilpStatus, OptimizeError};
use std::collections::HashMap;
use std::path::PathBuf;
use std::process::Command;

/// Invocation template for an external solver binary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalSolverCmd {
    /// Executable to run.
    pub command: String,
    /// Arguments; occurrences of `{model}` and `{solution}` are replaced
    /// by the exported model path and the expected solution path.
    pub args: Vec<String>,
    /// Directory for the exchange files; a fresh temporary directory is
    /// used when absent.
    pub work_dir: Option<PathBuf>,
}

pub(crate) fn solve(
    model: &MilpModel,
    cmd: &ExternalSolverCmd,
) -> Result<MilpSolution, OptimizeError> {
    let dir = match &cmd.work_dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            d.clone()
        }
        None => std::env::temp_dir().join(format!("arbscore-milp-{}", std::process::id())),
    };
    std::fs::create_dir_all(&dir)?;
    let model_path = dir.join("model.lp");
    let solution_path = dir.join("solution.txt");

    {
        let mut file = std::io::BufWriter::new(std::fs::File::create(&model_path)?);
        write_model(model, &mut file)?;
    }
    let _ = std::fs::remove_file(&solution_path);

    let args: Vec<String> = cmd
        .args
        .iter()
        .map(|a| {
            a.replace("{model}", &model_path.to_string_lossy())
                .replace("{solution}", &solution_path.to_string_lossy())
        })
        .collect();
    let output = Command::new(&cmd.command)
        .args(&args)
        .output()
        .map_err(|e| OptimizeError::External(format!("failed to spawn {}: {e}", cmd.command)))?;
    if !output.status.success() {
        return Err(OptimizeError::External(format!(
            "{} exited with {}: {}",
            cmd.command,
            output.status,
            String::from_utf8_lossy(&output.stderr)
        )));
    }

    let text = std::fs::read_to_string(&solution_path).map_err(|e| {
        OptimizeError::External(format!(
            "solution file {} unreadable: {e}",
            solution_path.display()
        ))
    })?;
    let values = parse_solution(&text)?;

    let mut x = vec![0.0; model.lp.n_vars];
    for (col, meaning) in model.meanings.iter().enumerate() {
        if let Some(&v) = values.get(meaning.name().as_str()) {
            x[col] = v;
        }
    }
    Ok(MilpSolution {
        schedule: extract_schedule_from_values(model, &x),
        objective: 0.0, // recomputed by the caller from the schedule
        status: MilpStatus::Optimal,
        gap: 0.0,
    })
}

fn parse_solution(text: &str) -> Result<HashMap<String, f64>, OptimizeError> {
    let mut values = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(name), Some(value)) = (parts.next(), parts.next()) else {
            return Err(OptimizeError::External(format!(
                "malformed solution line {}: {line:?}",
                lineno + 1
            )));
        };
        let value: f64 = value.parse().map_err(|_| {
            OptimizeError::External(format!(
                "non-numeric value on solution line {}: {line:?}",
                lineno + 1
            ))
        })?;
        values.insert(name.to_string(), value);
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_simple_solution_text() {
        let text = "# objective 12\nab_0 10.5\nas_1 9.5\nzb_0 1\n\n";
        let values = parse_solution(text).unwrap();
        assert_eq!(values["ab_0"], 10.5);
        assert_eq!(values["zb_0"], 1.0);
        assert!(parse_solution("junk").is_err());
    }
}
