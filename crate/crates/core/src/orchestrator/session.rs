use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::state::SessionState;
use crate::agents::{QueryClassification, SustainabilitySignals};
use crate::domain::{
    Choice, ClarificationTranscript, ClarifyingQuestion, ExplanationBundle, FeedbackRecord, Query, RecommendationSet,
    TravelPersona, WtcVector,
};

/// Opaque session identifier (a random UUID in hyphenated form).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SessionId(uuid::Uuid);

impl SessionId {
    pub fn random() -> Self {
        Self(uuid::Uuid::new_v4())
    }

    pub fn nil() -> Self {
        Self(uuid::Uuid::nil())
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.hyphenated().fmt(f)
    }
}

impl FromStr for SessionId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        uuid::Uuid::parse_str(s.trim())
            .map(Self)
            .map_err(|_| format!("invalid session id {s:?}"))
    }
}

impl TryFrom<String> for SessionId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SessionId> for String {
    fn from(id: SessionId) -> String {
        id.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventStage {
    Created,
    QueryClassified,
    QueryRejected,
    QuestionsGenerated,
    QuestionAsked,
    AnswerRecorded,
    Intent,
    RecBaseline,
    RecSustainable,
    Explain,
    Choice,
    Feedback,
    Failed,
}

impl EventStage {
    /// The four model-backed stages that run after the last answer.
    pub const PIPELINE: [EventStage; 4] = [
        EventStage::Intent,
        EventStage::RecBaseline,
        EventStage::RecSustainable,
        EventStage::Explain,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EventStage::Created => "created",
            EventStage::QueryClassified => "query_classified",
            EventStage::QueryRejected => "query_rejected",
            EventStage::QuestionsGenerated => "questions_generated",
            EventStage::QuestionAsked => "question_asked",
            EventStage::AnswerRecorded => "answer_recorded",
            EventStage::Intent => "intent",
            EventStage::RecBaseline => "rec_baseline",
            EventStage::RecSustainable => "rec_sustainable",
            EventStage::Explain => "explain",
            EventStage::Choice => "choice",
            EventStage::Feedback => "feedback",
            EventStage::Failed => "failed",
        }
    }
}

impl fmt::Display for EventStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogEntry {
    pub timestamp: DateTime<Utc>,
    pub stage: EventStage,
    pub duration_ms: f64,
    pub detail: String,
    /// Time spent inside the provider, for model-backed stages.
    #[serde(default)]
    pub provider_ms: Option<f64>,
    /// 1-based question index for question and answer events.
    #[serde(default)]
    pub question_index: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: SessionId,
    pub state: SessionState,
    pub created_at: DateTime<Utc>,
    pub query: Option<Query>,
    pub classification: Option<QueryClassification>,
    pub questions: Vec<ClarifyingQuestion>,
    pub transcript: ClarificationTranscript,
    pub persona: Option<TravelPersona>,
    pub wtc: Option<WtcVector>,
    pub signals: Option<SustainabilitySignals>,
    pub r0: Option<RecommendationSet>,
    pub r1: Option<RecommendationSet>,
    pub bundle: Option<ExplanationBundle>,
    pub choice: Option<Choice>,
    /// True when a counterfactual explanation was followed by choosing the
    /// alternative.
    pub nudge_switch: Option<bool>,
    pub feedback: Option<FeedbackRecord>,
    pub event_log: Vec<EventLogEntry>,
}

impl Session {
    pub fn new(id: SessionId, created_at: DateTime<Utc>) -> Self {
        Self {
            id,
            state: SessionState::Created,
            created_at,
            query: None,
            classification: None,
            questions: Vec::new(),
            transcript: ClarificationTranscript::default(),
            persona: None,
            wtc: None,
            signals: None,
            r0: None,
            r1: None,
            bundle: None,
            choice: None,
            nudge_switch: None,
            feedback: None,
            event_log: Vec::new(),
        }
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            state: self.state.clone(),
            created_at: self.created_at,
            query: self.query.as_ref().map(|q| q.text.clone()),
            events: self.event_log.len(),
        }
    }

    /// Number of `question_asked` events, i.e. questions actually delivered.
    pub fn questions_asked(&self) -> usize {
        self.event_log
            .iter()
            .filter(|e| e.stage == EventStage::QuestionAsked)
            .count()
    }

    /// Copy with id and every timestamp replaced by fixed values, used to
    /// compare replays.
    pub fn without_identity(&self) -> Session {
        let epoch = DateTime::<Utc>::UNIX_EPOCH;
        let mut s = self.clone();
        s.id = SessionId::nil();
        s.created_at = epoch;
        if let Some(q) = s.query.as_mut() {
            q.timestamp = epoch;
        }
        for e in &mut s.event_log {
            e.timestamp = epoch;
        }
        s
    }

    /// Structural invariants every stored session must satisfy.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.questions.len() > crate::domain::MAX_QUESTIONS {
            return Err(format!("{} questions", self.questions.len()));
        }
        if self.transcript.len() > self.questions.len() {
            return Err("transcript longer than question list".into());
        }
        if self.bundle.is_some() && (self.r0.is_none() || self.r1.is_none()) {
            return Err("bundle without both recommendation sets".into());
        }
        if self.event_log.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return Err("event log timestamps decrease".into());
        }
        if let Some(b) = &self.bundle {
            if b.chosen.same_city(&b.alternative) {
                return Err("chosen and alternative are the same city".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: SessionId,
    pub state: SessionState,
    pub created_at: DateTime<Utc>,
    pub query: Option<String>,
    pub events: usize,
}
