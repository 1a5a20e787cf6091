//! `replay` and `report` subcommands. Failures carry the stage that broke so
//! the binary can name it.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;
use wayfare_core::clock::SystemClock;
use wayfare_core::eval::{replay_batch, Execution, ReplayScript};
use wayfare_core::orchestrator::Engine;
use wayfare_core::store::{any_state, FileStore, SessionStore};

use crate::config::EngineArgs;
use crate::reports::{build_report, ReportKind};

#[derive(Debug, Error)]
#[error("stage {stage}: {message}")]
pub struct CliError {
    pub stage: String,
    pub message: String,
}

impl CliError {
    pub fn new(stage: impl Into<String>, message: impl ToString) -> Self {
        Self {
            stage: stage.into(),
            message: message.to_string(),
        }
    }
}

pub fn open_store(data_dir: &Path) -> Result<Arc<FileStore>, CliError> {
    FileStore::open(data_dir)
        .map(Arc::new)
        .map_err(|e| CliError::new("store", e))
}

pub fn build_engine(args: &EngineArgs) -> Result<Engine, CliError> {
    let config = args.engine_config().map_err(|e| CliError::new("configuration", e))?;
    let store = open_store(&args.data_dir)?;
    config
        .build_engine(store, Arc::new(SystemClock::new()))
        .map_err(|e| CliError::new("configuration", e))
}

/// A script file, or every `*.json` file in a directory, sorted by name.
pub fn load_scripts(path: &Path) -> Result<Vec<ReplayScript>, CliError> {
    let load = |p: &Path| ReplayScript::load(p).map_err(|e| CliError::new("load_script", e));
    if !path.is_dir() {
        return Ok(vec![load(path)?]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| CliError::new("load_script", format!("{}: {e}", path.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::new(
            "load_script",
            format!("no scripts in {}", path.display()),
        ));
    }
    files.iter().map(|p| load(p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplaySummary {
    pub scenario_key: String,
    pub session_id: String,
    pub state: String,
    pub strategy: Option<String>,
    pub chosen: Option<String>,
    pub alternative: Option<String>,
}

pub fn run_replay(args: &EngineArgs, script: &Path) -> Result<Vec<ReplaySummary>, CliError> {
    let scripts = load_scripts(script)?;
    let engine = build_engine(args)?;
    let mut out = Vec::new();
    for (script, result) in scripts
        .iter()
        .zip(replay_batch(&engine, &scripts, Execution::Sequential))
    {
        let s = result.map_err(|e| CliError::new(e.stage().unwrap_or("replay").to_owned(), e))?;
        let bundle = s.bundle.as_ref();
        out.push(ReplaySummary {
            scenario_key: script.scenario_key.clone(),
            session_id: s.id.to_string(),
            state: s.state.name().to_owned(),
            strategy: bundle.map(|b| b.strategy.as_str().to_owned()),
            chosen: bundle.map(|b| b.chosen.city.clone()),
            alternative: bundle.map(|b| b.alternative.city.clone()),
        });
    }
    Ok(out)
}

pub fn run_report(kind: ReportKind, data_dir: &Path, out: &Path) -> Result<serde_json::Value, CliError> {
    let store = open_store(data_dir)?;
    let sessions = store.load_all(&any_state).map_err(|e| CliError::new("store", e))?;
    let report = build_report(kind, &sessions).map_err(|e| CliError::new(format!("report {kind}"), e))?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::new("write_output", e))?;
    }
    std::fs::write(out, text + "\n").map_err(|e| CliError::new("write_output", format!("{}: {e}", out.display())))?;
    Ok(report)
}
