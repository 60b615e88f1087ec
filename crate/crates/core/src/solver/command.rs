//! Subprocess backend: exchange files plus a configurable command template.

use super::{
    mps::{write_model, MpsVariant},
    RawSolution, SolveError, SolveOptions, SolveStatus, SolutionFormat,
};
use crate::model::MilpModel;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

pub struct CommandBackend {
    template: String,
    format: SolutionFormat,
}

impl CommandBackend {
    pub fn new(template: String, format: SolutionFormat) -> Self {
        CommandBackend { template, format }
    }

    pub fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> Result<RawSolution, SolveError> {
        let started = Instant::now();
        let tmp;
        let dir: &Path = match &opts.work_dir {
            Some(d) => {
                std::fs::create_dir_all(d)?;
                d
            }
            None => {
                tmp = tempdir()?;
                &tmp
            }
        };
        let model_path = dir.join("model.mps");
        let solution_path = dir.join("solution.json");
        let emitted = write_model(model, MpsVariant::Free, &model_path)?;

        let argv = self.render_args(opts, &model_path, &solution_path);
        if argv.is_empty() {
            return Err(SolveError::BackendNotFound("<empty template>".into()));
        }
        let output = Command::new(&argv[0]).args(&argv[1..]).output().map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                SolveError::BackendNotFound(argv[0].clone())
            } else {
                SolveError::Io(e)
            }
        })?;
        if !output.status.success() {
            return Err(SolveError::BackendCrash {
                status: output.status.to_string(),
                stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
            });
        }

        let text = std::fs::read_to_string(&solution_path).map_err(|e| {
            SolveError::Unparseable(format!("cannot read {}: {e}", solution_path.display()))
        })?;
        let mut raw = match self.format {
            SolutionFormat::JsonV1 => parse_json_solution(&text)?,
        };
        // translate file names back to model names (identity for free MPS)
        raw.values = translate(&raw.values, |n| emitted.col_to_model(n).map(str::to_string));
        raw.solve_seconds = started.elapsed().as_secs_f64();
        Ok(raw)
    }

    fn render_args(&self, opts: &SolveOptions, model: &Path, solution: &Path) -> Vec<String> {
        self.template
            .split_whitespace()
            .map(|tok| {
                tok.replace("{model}", &model.display().to_string())
                    .replace("{solution}", &solution.display().to_string())
                    .replace("{rel_gap}", &opts.rel_gap.to_string())
                    .replace("{abs_gap}", &opts.abs_gap.to_string())
                    .replace(
                        "{time_limit}",
                        &opts.time_limit.unwrap_or(1e20).to_string(),
                    )
                    .replace("{threads}", &opts.threads.to_string())
            })
            .collect()
    }
}

fn translate(
    values: &BTreeMap<String, f64>,
    map: impl Fn(&str) -> Option<String>,
) -> BTreeMap<String, f64> {
    values
        .iter()
        .map(|(k, &v)| (map(k).unwrap_or_else(|| k.clone()), v))
        .collect()
}

fn tempdir() -> std::io::Result<std::path::PathBuf> {
    let mut dir = std::env::temp_dir();
    let unique = format!(
        "dam-solve-{}-{:x}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap()
            .as_nanos()
    );
    dir.push(unique);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[derive(Deserialize)]
struct JsonSolution {
    status: String,
    #[serde(default)]
    objective: f64,
    #[serde(default)]
    bound: Option<f64>,
    #[serde(default)]
    seconds: f64,
    #[serde(default)]
    columns: BTreeMap<String, f64>,
    #[serde(default)]
    row_duals: BTreeMap<String, f64>,
}

/// Parses the `json-v1` solution format.
pub fn parse_json_solution(text: &str) -> Result<RawSolution, SolveError> {
    let parsed: JsonSolution =
        serde_json::from_str(text).map_err(|e| SolveError::Unparseable(e.to_string()))?;
    let status = match parsed.status.as_str() {
        "optimal" => SolveStatus::Optimal,
        "feasible" => SolveStatus::Feasible,
        "infeasible" => SolveStatus::Infeasible,
        "timeout" => SolveStatus::Timeout,
        "error" => SolveStatus::Error,
        other => {
            return Err(SolveError::Unparseable(format!(
                "unknown status {other:?}"
            )))
        }
    };
    Ok(RawSolution {
        status,
        objective: parsed.objective,
        best_bound: parsed.bound,
        values: parsed.columns,
        row_duals: parsed.row_duals,
        solve_seconds: parsed.seconds,
        max_violation: 0.0,
        worst_name: String::from("-"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_json_solution() {
        let raw = parse_json_solution(
            r#"{"status":"optimal","objective":5.0,"bound":5.0,"seconds":0.1,
                "columns":{"x":5.0},"row_duals":{"cap":1.0}}"#,
        )
        .unwrap();
        assert_eq!(raw.status, SolveStatus::Optimal);
        assert_eq!(raw.values["x"], 5.0);
        assert_eq!(raw.row_duals["cap"], 1.0);
    }

    #[test]
    fn unknown_status_is_unparseable() {
        assert!(parse_json_solution(r#"{"status":"weird"}"#).is_err());
    }

    #[test]
    fn missing_backend_is_reported() {
        let backend = CommandBackend::new(
            "definitely-not-a-solver {model} {solution}".into(),
            SolutionFormat::JsonV1,
        );
        let model = MilpModel::new(true);
        let err = backend.solve(&model, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, SolveError::BackendNotFound(_)), "{err}");
    }
}
