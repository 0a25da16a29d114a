use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::commands::{Failure, Outcome};

#[derive(Debug)]
pub struct EmitError {
    pub path: PathBuf,
    pub source: io::Error,
}

impl std::fmt::Display for EmitError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.source)
    }
}

impl std::error::Error for EmitError {}

/// Header fields of `report.json`.
pub struct ReportMeta<'a> {
    pub subcommand: &'a str,
    pub name: Option<&'a str>,
    pub seed: Option<u64>,
    pub config: Value,
}

pub fn report_json(meta: &ReportMeta<'_>, outcome: Result<&Outcome, &Failure>) -> Value {
    let (status, body) = match outcome {
        Ok(o) => (json!({ "ok": true, "code": "ok", "message": "", "exit_code": 0 }), o),
        Err(f) => (
            json!({ "ok": false, "code": f.code, "message": f.message, "exit_code": f.exit }),
            &f.partial,
        ),
    };
    json!({
        "tool": "wflab",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": meta.subcommand,
        "name": meta.name,
        "seed": meta.seed,
        "config": meta.config,
        "status": status,
        "result": body.result,
        "rows": body.rows,
        "tables": body.tables.iter().map(|t| t.file).collect::<Vec<_>>(),
    })
}

fn write(path: PathBuf, contents: &[u8]) -> Result<(), EmitError> {
    fs::write(&path, contents).map_err(|source| EmitError { path, source })
}

/// Writes `report.json` and every table of the outcome into `dir`.
pub fn emit_report(dir: &Path, meta: &ReportMeta<'_>, outcome: Result<&Outcome, &Failure>) -> Result<(), EmitError> {
    fs::create_dir_all(dir).map_err(|source| EmitError { path: dir.to_path_buf(), source })?;
    let tables = match outcome {
        Ok(o) => &o.tables,
        Err(f) => &f.partial.tables,
    };
    for t in tables {
        write(dir.join(t.file), t.body.as_bytes())?;
    }
    let mut text = serde_json::to_string_pretty(&report_json(meta, outcome)).expect("report serializes");
    text.push('\n');
    write(dir.join("report.json"), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commands::Table;

    fn meta() -> ReportMeta<'static> {
        ReportMeta { subcommand: "bounds", name: None, seed: Some(3), config: json!({}) }
    }

    #[test]
    fn empty_results_give_valid_json() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(dir.path(), &meta(), Ok(&Outcome::default())).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(v["rows"], json!([]));
        assert_eq!(v["status"]["ok"], json!(true));
        assert_eq!(v["seed"], json!(3));
    }

    #[test]
    fn failures_keep_partial_tables() {
        let dir = tempfile::tempdir().unwrap();
        let partial = Outcome {
            tables: vec![Table { file: "ldp.csv", body: "h\n0.1\n".into() }],
            ..Default::default()
        };
        let f = Failure { exit: 4, code: "insufficient_samples".into(), message: "m".into(), partial };
        emit_report(dir.path(), &meta(), Err(&f)).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("ldp.csv")).unwrap(), "h\n0.1\n");
        let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(v["status"]["exit_code"], json!(4));
    }

    #[test]
    fn io_errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_report(&blocker.join("sub"), &meta(), Ok(&Outcome::default())).unwrap_err();
        assert!(err.to_string().contains("file"));
    }
}
