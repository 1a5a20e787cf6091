use serde::{Deserialize, Serialize};

use crate::domain::dedup_in_place;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    ValidVague,
    InvalidScope,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Valid => "valid",
            Verdict::ValidVague => "valid_vague",
            Verdict::InvalidScope => "invalid_scope",
        }
    }
}

/// Guardrail outcome for an incoming query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryClassification {
    pub verdict: Verdict,
    pub reason: String,
    pub needs_general_questions: bool,
}

impl QueryClassification {
    /// Enforces `valid_vague => needs_general_questions`. Returns `None` for an
    /// out-of-scope verdict without a reason.
    pub fn new(verdict: Verdict, reason: impl Into<String>, needs_general_questions: bool) -> Option<Self> {
        let reason = reason.into().trim().to_owned();
        if verdict == Verdict::InvalidScope && reason.is_empty() {
            return None;
        }
        Some(Self {
            verdict,
            reason,
            needs_general_questions: needs_general_questions || verdict == Verdict::ValidVague,
        })
    }

    pub fn is_rejected(&self) -> bool {
        self.verdict == Verdict::InvalidScope
    }
}

/// Sustainability-related tags extracted from the clarification answers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct SustainabilitySignals {
    tags: Vec<String>,
}

impl From<Vec<String>> for SustainabilitySignals {
    fn from(tags: Vec<String>) -> Self {
        Self::new(tags)
    }
}

impl From<SustainabilitySignals> for Vec<String> {
    fn from(s: SustainabilitySignals) -> Self {
        s.tags
    }
}

impl SustainabilitySignals {
    pub fn new<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tags: Vec<String> = tags
            .into_iter()
            .map(|t| t.into().trim().to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        dedup_in_place(&mut tags);
        Self { tags }
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn merged(&self, other: &SustainabilitySignals) -> Self {
        Self::new(self.tags.iter().chain(other.tags.iter()).cloned())
    }
}
