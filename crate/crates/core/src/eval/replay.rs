use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Execution;
use crate::domain::{Choice, FeedbackRecord, Query, QuerySource, MAX_QUESTIONS};
use crate::orchestrator::{Answer, Engine, EngineError, NextAction, Session, SessionId};

/// One scripted answer: a string, or `null` to skip the question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptAnswer {
    Text(String),
    Skip,
}

impl From<&ScriptAnswer> for Answer {
    fn from(a: &ScriptAnswer) -> Self {
        match a {
            ScriptAnswer::Text(t) => Answer::Text(t.clone()),
            ScriptAnswer::Skip => Answer::Skip,
        }
    }
}

/// A simulated user. Questions beyond the scripted answers are skipped and
/// surplus answers are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayScript {
    pub scenario_key: String,
    pub query: String,
    #[serde(default)]
    pub answers: Vec<ScriptAnswer>,
    pub choice: Choice,
    #[serde(default)]
    pub feedback: Option<FeedbackRecord>,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("invalid script {key}: {message}")]
    Script { key: String, message: String },
    #[error("cannot read script {path}: {message}")]
    Load { path: String, message: String },
    #[error("{key}: {stage} failed: {source}")]
    Engine {
        key: String,
        stage: String,
        #[source]
        source: EngineError,
    },
}

impl ReplayError {
    /// Pipeline stage or engine operation that failed, when known.
    pub fn stage(&self) -> Option<&str> {
        match self {
            ReplayError::Engine { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

impl ReplayScript {
    pub fn validate(&self) -> Result<(), ReplayError> {
        let bad = |message: String| ReplayError::Script {
            key: self.scenario_key.clone(),
            message,
        };
        if self.answers.len() > MAX_QUESTIONS {
            return Err(bad(format!("{} answers, at most {MAX_QUESTIONS}", self.answers.len())));
        }
        if self.query.trim().is_empty() {
            return Err(bad("empty query".into()));
        }
        if let Some(f) = &self.feedback {
            if f.chosen_option != self.choice {
                return Err(bad("feedback.chosen_option differs from choice".into()));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, ReplayError> {
        let script: ReplayScript = serde_json::from_str(text).map_err(|e| ReplayError::Load {
            path: origin.to_owned(),
            message: e.to_string(),
        })?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReplayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ReplayError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text, &path.display().to_string())
    }
}

fn step<T>(key: &str, operation: &str, r: Result<T, EngineError>) -> Result<T, ReplayError> {
    r.map_err(|source| ReplayError::Engine {
        key: key.to_owned(),
        stage: match &source {
            EngineError::StageFailed { stage, .. } => stage.to_string(),
            _ => operation.to_owned(),
        },
        source,
    })
}

/// Drives one session from query to feedback and returns it as persisted.
/// A rejected query ends the replay early with the rejected session.
pub fn replay(engine: &Engine, script: &ReplayScript) -> Result<Session, ReplayError> {
    script.validate()?;
    let key = script.scenario_key.as_str();
    let id: SessionId = step(key, "start_session", engine.start_session())?.id;
    let query = step(
        key,
        "submit_query",
        Query::new(&script.query, QuerySource::PredefinedScenario, engine.clock().now()).map_err(EngineError::from),
    )?;
    let mut next = step(key, "submit_query", engine.submit_query(&id, query))?;
    let mut answers = script.answers.iter();
    loop {
        next = match next {
            NextAction::Ask { .. } => {
                let answer = answers.next().map(Answer::from).unwrap_or(Answer::Skip);
                step(key, "submit_answer", engine.submit_answer(&id, answer))?
            }
            NextAction::Present { .. } => step(key, "record_choice", engine.record_choice(&id, script.choice))?,
            NextAction::CollectFeedback => match &script.feedback {
                Some(f) => step(key, "record_feedback", engine.record_feedback(&id, f.clone()))?,
                None => break,
            },
            NextAction::Reject { .. } | NextAction::Done => break,
        };
    }
    step(key, "get_session", engine.get_session(&id))
}

/// Replays each script in its own session; results keep input order.
pub fn replay_batch(engine: &Engine, scripts: &[ReplayScript], exec: Execution) -> Vec<Result<Session, ReplayError>> {
    exec.map(scripts, |s| replay(engine, s))
}
