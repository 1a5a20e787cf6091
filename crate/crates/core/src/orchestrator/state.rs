//! Session lifecycle as a pure transition table.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::MAX_QUESTIONS;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SessionState {
    Created,
    AwaitingQuery,
    Rejected,
    Clarifying { next_question_index: u8 },
    Profiling,
    Recommending,
    Explaining,
    AwaitingChoice,
    AwaitingFeedback,
    Completed,
    Failed { reason: String },
}

impl SessionState {
    pub fn name(&self) -> &'static str {
        match self {
            SessionState::Created => "created",
            SessionState::AwaitingQuery => "awaiting_query",
            SessionState::Rejected => "rejected",
            SessionState::Clarifying { .. } => "clarifying",
            SessionState::Profiling => "profiling",
            SessionState::Recommending => "recommending",
            SessionState::Explaining => "explaining",
            SessionState::AwaitingChoice => "awaiting_choice",
            SessionState::AwaitingFeedback => "awaiting_feedback",
            SessionState::Completed => "completed",
            SessionState::Failed { .. } => "failed",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            SessionState::Rejected | SessionState::Completed | SessionState::Failed { .. }
        )
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionState::Clarifying { next_question_index } => write!(f, "clarifying({next_question_index})"),
            SessionState::Failed { reason } => write!(f, "failed({reason})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Event {
    Start,
    QueryRejected,
    QueryAccepted,
    /// An answer (or skip) to the current question; `total` is the number of
    /// questions generated for the session.
    Answer {
        total: u8,
    },
    ProfileReady,
    RecommendationsReady,
    ExplanationReady,
    ChoiceRecorded,
    FeedbackRecorded,
    StageFailed(String),
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::Start => "start",
            Event::QueryRejected => "query_rejected",
            Event::QueryAccepted => "query_accepted",
            Event::Answer { .. } => "answer",
            Event::ProfileReady => "profile_ready",
            Event::RecommendationsReady => "recommendations_ready",
            Event::ExplanationReady => "explanation_ready",
            Event::ChoiceRecorded => "choice_recorded",
            Event::FeedbackRecorded => "feedback_recorded",
            Event::StageFailed(_) => "stage_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IllegalTransition {
    pub state: SessionState,
    pub event: &'static str,
}

impl fmt::Display for IllegalTransition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "event {} not allowed in state {}", self.event, self.state)
    }
}

impl std::error::Error for IllegalTransition {}

/// Total over every `(state, event)` pair; illegal pairs come back as `Err`.
pub fn transition(state: &SessionState, event: &Event) -> Result<SessionState, IllegalTransition> {
    use SessionState as S;
    let reject = || IllegalTransition {
        state: state.clone(),
        event: event.name(),
    };
    if state.is_terminal() {
        return Err(reject());
    }
    let next = match (state, event) {
        (_, Event::StageFailed(reason)) if !matches!(state, S::Created) => S::Failed { reason: reason.clone() },
        (S::Created, Event::Start) => S::AwaitingQuery,
        (S::AwaitingQuery, Event::QueryRejected) => S::Rejected,
        (S::AwaitingQuery, Event::QueryAccepted) => S::Clarifying { next_question_index: 1 },
        (S::Clarifying { next_question_index: i }, Event::Answer { total })
            if (1..=MAX_QUESTIONS as u8).contains(total) && (1..=*total).contains(i) =>
        {
            if i < total {
                S::Clarifying {
                    next_question_index: i + 1,
                }
            } else {
                S::Profiling
            }
        }
        (S::Profiling, Event::ProfileReady) => S::Recommending,
        (S::Recommending, Event::RecommendationsReady) => S::Explaining,
        (S::Explaining, Event::ExplanationReady) => S::AwaitingChoice,
        (S::AwaitingChoice, Event::ChoiceRecorded) => S::AwaitingFeedback,
        (S::AwaitingFeedback, Event::FeedbackRecorded) => S::Completed,
        _ => return Err(reject()),
    };
    Ok(next)
}
