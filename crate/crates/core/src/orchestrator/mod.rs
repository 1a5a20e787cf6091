//! Per-session pipeline engine.
//!
//! The [`Engine`] loads a session, checks the requested operation against
//! the [`transition`] table, runs the agents the step needs and persists the
//! result. After the last clarifying answer it runs intent classification,
//! both recommenders and the explanation in one step.

mod session;
mod state;

use std::collections::HashSet;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use session::{EventLogEntry, EventStage, Session, SessionId, SessionSummary};
pub use state::{transition, Event, IllegalTransition, SessionState};

use crate::agents::{AgentError, AgentOutput, Agents};
use crate::clock::{millis, Clock};
use crate::domain::{
    Choice, ClarifyingQuestion, DomainError, ExplanationBundle, FeedbackRecord, Query, Strategy, TranscriptEntry,
};
use crate::store::{SessionStore, StoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum NextAction {
    Ask {
        question: ClarifyingQuestion,
        /// 1-based position of this question.
        index: u8,
        total: u8,
    },
    Present {
        bundle: Box<ExplanationBundle>,
    },
    Reject {
        reason: String,
    },
    CollectFeedback,
    Done,
}

/// A user's response to the current clarifying question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Text(String),
    Skip,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("session {0} not found")]
    NotFound(SessionId),
    #[error("session {0} has an operation in flight")]
    Busy(SessionId),
    #[error("{operation} is not allowed while the session is {state}")]
    InvalidState {
        operation: &'static str,
        state: SessionState,
    },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("stage {stage} failed: {message}")]
    StageFailed { stage: EventStage, message: String },
    #[error(transparent)]
    Persistence(#[from] StoreError),
}

impl From<DomainError> for EngineError {
    fn from(e: DomainError) -> Self {
        EngineError::Validation(e.to_string())
    }
}

/// Text shown when a query falls outside single-city European trips.
pub const SCOPE_MESSAGE: &str =
    "I can only help plan trips to a single city in Europe. Please describe a city trip, or pick one of the suggested scenarios.";

/// Removes the id from the in-flight set when dropped.
struct BusyGuard<'a> {
    set: &'a Mutex<HashSet<SessionId>>,
    id: SessionId,
}

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.set.lock().expect("in-flight lock").remove(&self.id);
    }
}

pub struct Engine {
    store: Arc<dyn SessionStore>,
    agents: Agents,
    clock: Arc<dyn Clock>,
    in_flight: Mutex<HashSet<SessionId>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("agents", &self.agents)
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(store: Arc<dyn SessionStore>, agents: Agents, clock: Arc<dyn Clock>) -> Self {
        Self {
            store,
            agents,
            clock,
            in_flight: Mutex::new(HashSet::new()),
        }
    }

    pub fn store(&self) -> &Arc<dyn SessionStore> {
        &self.store
    }

    pub fn agents(&self) -> &Agents {
        &self.agents
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Number of sessions with an operation currently running.
    pub fn in_flight(&self) -> usize {
        self.in_flight.lock().expect("in-flight lock").len()
    }

    fn acquire(&self, id: &SessionId) -> Result<BusyGuard<'_>, EngineError> {
        let mut set = self.in_flight.lock().expect("in-flight lock");
        if !set.insert(id.clone()) {
            return Err(EngineError::Busy(id.clone()));
        }
        Ok(BusyGuard {
            set: &self.in_flight,
            id: id.clone(),
        })
    }

    fn load(&self, id: &SessionId) -> Result<Session, EngineError> {
        self.store.get(id)?.ok_or_else(|| EngineError::NotFound(id.clone()))
    }

    pub fn get_session(&self, id: &SessionId) -> Result<Session, EngineError> {
        self.load(id)
    }

    fn log<'s>(
        &self,
        s: &'s mut Session,
        stage: EventStage,
        started: Duration,
        detail: impl Into<String>,
    ) -> &'s mut EventLogEntry {
        let elapsed = self.clock.monotonic().saturating_sub(started);
        s.event_log.push(EventLogEntry {
            timestamp: self.clock.now(),
            stage,
            duration_ms: millis(elapsed),
            detail: detail.into(),
            provider_ms: None,
            question_index: None,
        });
        s.event_log.last_mut().expect("just pushed")
    }

    fn log_agent<T>(
        &self,
        s: &mut Session,
        stage: EventStage,
        started: Duration,
        out: &AgentOutput<T>,
        detail: impl Into<String>,
    ) {
        let mut detail = detail.into();
        if out.attempts > 1 {
            detail.push_str(&format!(" (after {} attempts)", out.attempts));
        }
        let e = self.log(s, stage, started, detail);
        e.provider_ms = Some(out.provider_ms);
    }

    fn apply(&self, s: &mut Session, operation: &'static str, event: Event) -> Result<(), EngineError> {
        s.state = transition(&s.state, &event).map_err(|e| EngineError::InvalidState {
            operation,
            state: e.state,
        })?;
        Ok(())
    }

    fn guard_state(s: &Session, operation: &'static str, ok: bool) -> Result<(), EngineError> {
        if ok {
            Ok(())
        } else {
            Err(EngineError::InvalidState {
                operation,
                state: s.state.clone(),
            })
        }
    }

    /// Marks the session failed, keeping everything computed so far.
    fn fail(&self, s: &mut Session, stage: EventStage, err: AgentError) -> EngineError {
        let message = err.to_string();
        tracing::error!(session = %s.id, %stage, error = %message, "stage failed");
        let reason = format!("{stage}: {message}");
        let started = self.clock.monotonic();
        self.log(s, EventStage::Failed, started, reason.clone());
        if let Ok(next) = transition(&s.state, &Event::StageFailed(reason)) {
            s.state = next;
        }
        if let Err(e) = self.store.put(s) {
            return EngineError::Persistence(e);
        }
        EngineError::StageFailed { stage, message }
    }

    pub fn start_session(&self) -> Result<Session, EngineError> {
        let started = self.clock.monotonic();
        let mut s = Session::new(SessionId::random(), self.clock.now());
        self.apply(&mut s, "start_session", Event::Start)?;
        self.log(&mut s, EventStage::Created, started, "session created");
        self.store.put(&s)?;
        Ok(s)
    }

    fn ask(&self, s: &mut Session, index: u8) -> NextAction {
        let question = s.questions[usize::from(index) - 1].clone();
        let started = self.clock.monotonic();
        let e = self.log(s, EventStage::QuestionAsked, started, question.text.clone());
        e.question_index = Some(index);
        NextAction::Ask {
            question,
            index,
            total: s.questions.len() as u8,
        }
    }

    pub fn submit_query(&self, id: &SessionId, q: Query) -> Result<NextAction, EngineError> {
        let _busy = self.acquire(id)?;
        let mut s = self.load(id)?;
        Self::guard_state(&s, "submit_query", s.state == SessionState::AwaitingQuery)?;
        let agents = self.agents.for_session(id.to_string());
        s.query = Some(q.clone());

        let started = self.clock.monotonic();
        let classification = match agents.classify_query(&q) {
            Ok(c) => c,
            Err(e) => return Err(self.fail(&mut s, EventStage::QueryClassified, e)),
        };
        self.log_agent(
            &mut s,
            EventStage::QueryClassified,
            started,
            &classification,
            classification.value.verdict.as_str(),
        );
        let classification = classification.value;
        s.classification = Some(classification.clone());

        if classification.is_rejected() {
            self.apply(&mut s, "submit_query", Event::QueryRejected)?;
            let started = self.clock.monotonic();
            self.log(
                &mut s,
                EventStage::QueryRejected,
                started,
                classification.reason.clone(),
            );
            self.store.put(&s)?;
            return Ok(NextAction::Reject {
                reason: SCOPE_MESSAGE.to_owned(),
            });
        }

        let started = self.clock.monotonic();
        let questions = match agents.generate_clarifying_questions(&q, &classification) {
            Ok(qs) => qs,
            Err(e) => return Err(self.fail(&mut s, EventStage::QuestionsGenerated, e)),
        };
        self.log_agent(
            &mut s,
            EventStage::QuestionsGenerated,
            started,
            &questions,
            format!("{} questions", questions.value.len()),
        );
        s.questions = questions.value;
        self.apply(&mut s, "submit_query", Event::QueryAccepted)?;
        let action = self.ask(&mut s, 1);
        self.store.put(&s)?;
        Ok(action)
    }

    pub fn submit_answer(&self, id: &SessionId, answer: Answer) -> Result<NextAction, EngineError> {
        let _busy = self.acquire(id)?;
        let mut s = self.load(id)?;
        let SessionState::Clarifying {
            next_question_index: index,
        } = s.state
        else {
            return Err(EngineError::InvalidState {
                operation: "submit_answer",
                state: s.state.clone(),
            });
        };
        let (text, skipped) = match answer {
            Answer::Skip => (String::new(), true),
            Answer::Text(t) if t.trim().is_empty() => {
                return Err(EngineError::Validation(
                    "answer text is empty; send a skip instead".into(),
                ))
            }
            Answer::Text(t) => (t.trim().to_owned(), false),
        };
        let started = self.clock.monotonic();
        let question = s
            .questions
            .get(usize::from(index) - 1)
            .cloned()
            .ok_or_else(|| EngineError::Validation(format!("no question {index}")))?;
        s.transcript.push(TranscriptEntry {
            question,
            answer: text,
            skipped,
        })?;
        let total = s.questions.len() as u8;
        self.apply(&mut s, "submit_answer", Event::Answer { total })?;
        let e = self.log(
            &mut s,
            EventStage::AnswerRecorded,
            started,
            if skipped { "skipped" } else { "answered" },
        );
        e.question_index = Some(index);

        match s.state {
            SessionState::Clarifying { next_question_index } => {
                let action = self.ask(&mut s, next_question_index);
                self.store.put(&s)?;
                Ok(action)
            }
            _ => {
                self.store.put(&s)?;
                let bundle = self.run_pipeline(&mut s)?;
                Ok(NextAction::Present {
                    bundle: Box::new(bundle),
                })
            }
        }
    }

    /// Runs intent classification, both recommenders and the explanation for
    /// a session in the profiling state.
    pub fn finalize_recommendation(&self, id: &SessionId) -> Result<ExplanationBundle, EngineError> {
        let _busy = self.acquire(id)?;
        let mut s = self.load(id)?;
        self.run_pipeline(&mut s)
    }

    fn run_pipeline(&self, s: &mut Session) -> Result<ExplanationBundle, EngineError> {
        Self::guard_state(s, "finalize_recommendation", s.state == SessionState::Profiling)?;
        let agents = self.agents.for_session(s.id.to_string());
        let q = s.query.clone().expect("profiling implies a query");

        let started = self.clock.monotonic();
        let intent = match agents.classify_intent(&s.transcript, &q) {
            Ok(o) => o,
            Err(e) => return Err(self.fail(s, EventStage::Intent, e)),
        };
        self.log_agent(
            s,
            EventStage::Intent,
            started,
            &intent,
            format!("signals: {}", intent.value.signals.tags().join(",")),
        );
        let intent = intent.value;
        s.persona = Some(intent.persona.clone());
        s.wtc = Some(intent.wtc);
        s.signals = Some(intent.signals.clone());
        self.apply(s, "finalize_recommendation", Event::ProfileReady)?;
        self.store.put(s)?;

        let started = self.clock.monotonic();
        let r0 = match agents.recommend_baseline(&q) {
            Ok(o) => o,
            Err(e) => return Err(self.fail(s, EventStage::RecBaseline, e)),
        };
        self.log_agent(s, EventStage::RecBaseline, started, &r0, r0.value.primary.city.clone());
        s.r0 = Some(r0.value);

        let started = self.clock.monotonic();
        let r1 = match agents.recommend_sustainable(&q, &intent.persona, &s.transcript, &intent.signals) {
            Ok(o) => o,
            Err(e) => return Err(self.fail(s, EventStage::RecSustainable, e)),
        };
        self.log_agent(
            s,
            EventStage::RecSustainable,
            started,
            &r1,
            r1.value.primary.city.clone(),
        );
        s.r1 = Some(r1.value);
        self.apply(s, "finalize_recommendation", Event::RecommendationsReady)?;
        self.store.put(s)?;

        let started = self.clock.monotonic();
        let (r0, r1) = (s.r0.as_ref().expect("set above"), s.r1.as_ref().expect("set above"));
        let bundle = match agents.explain(r0, r1, &intent.persona, &intent.wtc) {
            Ok(o) => o,
            Err(e) => return Err(self.fail(s, EventStage::Explain, e)),
        };
        self.log_agent(s, EventStage::Explain, started, &bundle, bundle.value.strategy.as_str());
        s.bundle = Some(bundle.value.clone());
        self.apply(s, "finalize_recommendation", Event::ExplanationReady)?;
        self.store.put(s)?;
        Ok(bundle.value)
    }

    pub fn record_choice(&self, id: &SessionId, choice: Choice) -> Result<NextAction, EngineError> {
        let _busy = self.acquire(id)?;
        let mut s = self.load(id)?;
        Self::guard_state(&s, "record_choice", s.state == SessionState::AwaitingChoice)?;
        let started = self.clock.monotonic();
        let strategy = s.bundle.as_ref().map(|b| b.strategy);
        s.choice = Some(choice);
        s.nudge_switch = Some(strategy == Some(Strategy::CounterfactualNudging) && choice == Choice::Alternative);
        self.apply(&mut s, "record_choice", Event::ChoiceRecorded)?;
        let detail = serde_json::to_value(choice)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        self.log(&mut s, EventStage::Choice, started, detail);
        self.store.put(&s)?;
        Ok(NextAction::CollectFeedback)
    }

    pub fn record_feedback(&self, id: &SessionId, feedback: FeedbackRecord) -> Result<NextAction, EngineError> {
        let _busy = self.acquire(id)?;
        let mut s = self.load(id)?;
        Self::guard_state(&s, "record_feedback", s.state == SessionState::AwaitingFeedback)?;
        if s.choice != Some(feedback.chosen_option) {
            return Err(EngineError::Validation(format!(
                "chosen_option {:?} does not match the recorded choice {:?}",
                feedback.chosen_option, s.choice
            )));
        }
        let started = self.clock.monotonic();
        s.feedback = Some(feedback);
        self.apply(&mut s, "record_feedback", Event::FeedbackRecorded)?;
        self.log(&mut s, EventStage::Feedback, started, "feedback recorded");
        self.store.put(&s)?;
        Ok(NextAction::Done)
    }
}
