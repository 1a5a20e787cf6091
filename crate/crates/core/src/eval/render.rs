//! Canonical text forms fed to the embedder. Similarity values depend on
//! these, so the layout is fixed:
//!
//! Conversation:
//! ```text
//! query: <query text>
//! q1: <question text>
//! a1: <answer, or "(skipped)">
//! ...
//! ```
//!
//! Intent:
//! ```text
//! interests: <a>, <b>
//! budget: <low|medium|high|unspecified>
//! style: <travel style>
//! origin: <city or unspecified>
//! constraints: <a>, <b>
//! wtc: emissions=<x.xx> congestion=<x.xx> seasonality=<x.xx>
//! signals: <tag>, <tag>
//! ```
//! Empty lists render as `none`. Lines are joined with `\n`, no trailing newline.

use crate::agents::SustainabilitySignals;
use crate::domain::{BudgetLevel, ClarificationTranscript, TravelPersona, WtcVector, UNSPECIFIED};

pub const SKIPPED_ANSWER: &str = "(skipped)";

fn list(items: &[String]) -> String {
    if items.is_empty() {
        "none".to_owned()
    } else {
        items.join(", ")
    }
}

pub fn conversation_text(query: &str, transcript: &ClarificationTranscript) -> String {
    let mut lines = vec![format!("query: {query}")];
    for e in transcript.entries() {
        let id = e.question.id;
        lines.push(format!("q{id}: {}", e.question.text));
        let answer = if e.skipped { SKIPPED_ANSWER } else { e.answer.as_str() };
        lines.push(format!("a{id}: {answer}"));
    }
    lines.join("\n")
}

pub fn intent_text(persona: &TravelPersona, wtc: &WtcVector, signals: &SustainabilitySignals) -> String {
    let budget = match persona.budget_level {
        BudgetLevel::Low => "low",
        BudgetLevel::Medium => "medium",
        BudgetLevel::High => "high",
        BudgetLevel::Unspecified => UNSPECIFIED,
    };
    [
        format!("interests: {}", list(&persona.interests)),
        format!("budget: {budget}"),
        format!("style: {}", persona.travel_style),
        format!("origin: {}", persona.origin_city.as_deref().unwrap_or(UNSPECIFIED)),
        format!("constraints: {}", list(&persona.constraints)),
        format!(
            "wtc: emissions={:.2} congestion={:.2} seasonality={:.2}",
            wtc.emissions(),
            wtc.congestion(),
            wtc.seasonality()
        ),
        format!("signals: {}", list(signals.tags())),
    ]
    .join("\n")
}
