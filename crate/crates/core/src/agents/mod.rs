//! The reasoning agents: query screening, clarifying questions, intent
//! classification, the two recommenders and the explanation generator.
//!
//! Each agent renders its prompt template, calls the gateway and validates
//! the structured reply. Everything the model is not trusted with (question
//! bounds, WTC clamping, the strategy choice, the counterfactual marker) is
//! enforced here after the call.

mod types;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

pub use types::{QueryClassification, SustainabilitySignals, Verdict};

use crate::domain::{
    decide_strategy, ClarificationTranscript, ClarifyingQuestion, DeltaProvenance, DomainError, ExplanationBundle,
    MetricComponent, MetricsDelta, Query, QuestionTopic, Recommendation, RecommendationSet, SetKind, Strategy,
    TravelPersona, WtcVector, DEFAULT_WTC_THRESHOLD, MAX_QUESTIONS,
};
use crate::gateway::structured::{parse_persona_wtc_clamped, IntentOutput, RecommendationDraft};
use crate::gateway::{
    parse_structured, CompletionRequest, Gateway, GatewayError, PromptError, PromptRegistry, SchemaId, Stage,
    Structured, StructuredError, DEFAULT_MAX_OUTPUT_TOKENS,
};
use crate::metrics::MetricsTable;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("{stage}: {source}")]
    Gateway {
        stage: Stage,
        #[source]
        source: GatewayError,
    },
    #[error("{stage}: {source}")]
    Prompt {
        stage: Stage,
        #[source]
        source: PromptError,
    },
    #[error("{stage}: unusable reply after retry: {source}")]
    Parse {
        stage: Stage,
        #[source]
        source: StructuredError,
    },
    #[error("{stage}: {source}")]
    Domain {
        stage: Stage,
        #[source]
        source: DomainError,
    },
    #[error("{stage}: {0}", stage = .1)]
    Precondition(String, Stage),
}

impl AgentError {
    pub fn stage(&self) -> Stage {
        match self {
            AgentError::Gateway { stage, .. }
            | AgentError::Prompt { stage, .. }
            | AgentError::Parse { stage, .. }
            | AgentError::Domain { stage, .. } => *stage,
            AgentError::Precondition(_, stage) => *stage,
        }
    }
}

/// A validated agent result plus the provider time spent producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutput<T> {
    pub value: T,
    pub provider_ms: f64,
    /// Provider calls made, including the re-prompt if one was needed.
    pub attempts: u32,
}

impl<T> AgentOutput<T> {
    fn local(value: T) -> Self {
        Self {
            value,
            provider_ms: 0.0,
            attempts: 0,
        }
    }

    fn map<U>(self, f: impl FnOnce(T) -> U) -> AgentOutput<U> {
        AgentOutput {
            value: f(self.value),
            provider_ms: self.provider_ms,
            attempts: self.attempts,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub wtc_threshold: f64,
    pub max_output_tokens: u32,
    pub temperatures: BTreeMap<Stage, f32>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            wtc_threshold: DEFAULT_WTC_THRESHOLD,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            temperatures: BTreeMap::new(),
        }
    }
}

pub const CANONICAL_TRADEOFF_QUESTION: &str =
    "Would you consider a lesser-known destination instead of a popular, crowded one if it offered a similar experience?";
pub const CANONICAL_BUDGET_QUESTION: &str = "What budget do you have in mind for this trip: low, medium or high?";

const RETRY_SUFFIX: &str = "\n\nYour previous reply could not be used. Reply again with exactly one fenced json block matching the format above.";

/// Lowercase ASCII slug used as the stub fixture key.
pub fn fixture_key(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
        } else if !out.is_empty() && !out.ends_with('-') {
            out.push('-');
        }
    }
    if out.len() > 80 {
        out.truncate(80);
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        out.push_str("empty");
    }
    out
}

/// Fixture key for the explanation stage.
pub fn explain_key(chosen: &str, alternative: &str, strategy: Strategy) -> String {
    fixture_key(&format!("{chosen} vs {alternative} {strategy}"))
}

fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'!' | b'?') && bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace()) {
            out.push(text[start..=i].trim());
            start = i + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

const CONDITIONAL_OPENERS: [&str; 5] = ["had you", "if you had", "if you'd", "were you", "if you were"];

/// The counterfactual contract: some sentence opens with a conditional
/// clause, names `alternative_city` verbatim and says what "would have"
/// happened.
pub fn has_counterfactual_marker(text: &str, alternative_city: &str) -> bool {
    let city = alternative_city.trim();
    !city.is_empty()
        && sentences(text).into_iter().any(|s| {
            let lower = s.to_lowercase();
            CONDITIONAL_OPENERS.iter().any(|o| lower.starts_with(o)) && s.contains(city) && lower.contains("would have")
        })
}

fn interest_phrase(c: Option<MetricComponent>) -> &'static str {
    match c {
        Some(MetricComponent::Co2Index) => "lower-emission travel",
        Some(MetricComponent::VisitorPressure) => "avoiding crowds",
        Some(MetricComponent::SeasonalityIndex) => "travelling outside the peak season",
        Some(MetricComponent::Walkability) => "walkable, low-impact destinations",
        None => "lower environmental impact",
    }
}

fn improvement_phrase(c: MetricComponent) -> String {
    if c.higher_is_better() {
        format!("better {}", c.phrase())
    } else {
        format!("lower {}", c.phrase())
    }
}

fn join_phrases(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Canonical counterfactual sentence; `gain` is `M(alternative) - M(chosen)`.
pub fn counterfactual_sentence(alternative: &str, gain: Option<&MetricsDelta>) -> String {
    let improved = gain.map(MetricsDelta::improved_components).unwrap_or_default();
    let reason = if improved.is_empty() {
        "it is a lower-impact option that still matches what you asked for".to_owned()
    } else {
        let phrases: Vec<String> = improved.iter().take(2).map(|c| improvement_phrase(*c)).collect();
        format!("it offers {}", join_phrases(&phrases))
    };
    format!(
        "Had you expressed interest in {}, {alternative} would have been recommended because {reason}.",
        interest_phrase(improved.first().copied())
    )
}

fn with_sentence(text: &str, sentence: &str) -> String {
    let text = text.trim_end();
    if text.is_empty() {
        sentence.to_owned()
    } else if text.ends_with(['.', '!', '?']) {
        format!("{text} {sentence}")
    } else {
        format!("{text}. {sentence}")
    }
}

fn cites_improvement(text: &str, delta: &MetricsDelta) -> bool {
    let lower = text.to_lowercase();
    delta.improved_components().iter().any(|c| {
        let phrase = c.phrase().to_lowercase();
        lower.contains(&phrase)
            || lower.contains(&c.field().replace('_', " "))
            || (*c == MetricComponent::Co2Index && (lower.contains("co₂") || lower.contains("emission")))
            || (*c == MetricComponent::VisitorPressure && lower.contains("crowd"))
    })
}

const NEGATIONS: [&str; 7] = ["no", "not", "don't", "do not", "rather not", "wouldn't", "never"];

fn is_negative(answer: &str) -> bool {
    let lower = answer.trim().to_lowercase();
    let first = lower
        .split(|c: char| !c.is_alphanumeric() && c != '\'')
        .next()
        .unwrap_or("");
    first == "no" || first == "not" || first == "never" || NEGATIONS[2..].iter().any(|n| lower.contains(n))
}

/// Keyword signals read directly off non-negative answers.
pub fn keyword_signals(transcript: &ClarificationTranscript) -> SustainabilitySignals {
    const RULES: [(&str, &[&str]); 4] = [
        (
            "prefers_train",
            &["train", "rail", "no flight", "not fly", "avoid flying"],
        ),
        (
            "avoids_crowds",
            &[
                "crowd",
                "lesser-known",
                "lesser known",
                "less touristy",
                "quieter",
                "off the beaten",
            ],
        ),
        (
            "off_season_ok",
            &[
                "off-season",
                "off season",
                "shoulder season",
                "outside peak",
                "outside the peak",
                "avoid peak",
            ],
        ),
        ("prefers_walkable", &["walkable", "on foot", "walking"]),
    ];
    let mut tags = Vec::new();
    for e in transcript.entries().iter().filter(|e| !e.skipped) {
        let lower = e.answer.to_lowercase();
        // "no flights" is a positive train signal even though it opens with "no".
        let negative = is_negative(&e.answer) && !lower.contains("no flight");
        if negative {
            continue;
        }
        for (tag, words) in RULES {
            if words.iter().any(|w| lower.contains(w)) {
                tags.push(tag);
            }
        }
    }
    SustainabilitySignals::new(tags)
}

/// Fraction of sustainability questions the user skipped (0 when none were asked).
pub fn skipped_tradeoff_share(transcript: &ClarificationTranscript) -> f64 {
    let tradeoff: Vec<_> = transcript
        .entries()
        .iter()
        .filter(|e| e.question.topic == QuestionTopic::SustainabilityTradeoff)
        .collect();
    if tradeoff.is_empty() {
        return 0.0;
    }
    tradeoff.iter().filter(|e| e.skipped).count() as f64 / tradeoff.len() as f64
}

/// Enforces the question-list contract on untrusted model output.
pub fn enforce_question_contract(
    mut questions: Vec<ClarifyingQuestion>,
    classification: &QueryClassification,
) -> Vec<ClarifyingQuestion> {
    if questions.len() > MAX_QUESTIONS {
        tracing::warn!(
            received = questions.len(),
            kept = MAX_QUESTIONS,
            "truncating clarifying questions"
        );
        questions.truncate(MAX_QUESTIONS);
    }
    let place = |qs: &mut Vec<ClarifyingQuestion>, q: ClarifyingQuestion, protect: Option<QuestionTopic>| {
        if qs.len() < MAX_QUESTIONS {
            qs.push(q);
        } else if let Some(i) = qs.iter().rposition(|x| Some(x.topic) != protect) {
            qs[i] = q;
        }
    };
    if !questions
        .iter()
        .any(|q| q.topic == QuestionTopic::SustainabilityTradeoff)
    {
        place(
            &mut questions,
            ClarifyingQuestion {
                id: 0,
                text: CANONICAL_TRADEOFF_QUESTION.into(),
                topic: QuestionTopic::SustainabilityTradeoff,
            },
            None,
        );
    }
    if classification.needs_general_questions
        && !questions
            .iter()
            .any(|q| matches!(q.topic, QuestionTopic::Budget | QuestionTopic::Interests))
    {
        place(
            &mut questions,
            ClarifyingQuestion {
                id: 0,
                text: CANONICAL_BUDGET_QUESTION.into(),
                topic: QuestionTopic::Budget,
            },
            Some(QuestionTopic::SustainabilityTradeoff),
        );
    }
    for (i, q) in questions.iter_mut().enumerate() {
        q.id = i as u8 + 1;
    }
    questions
}

fn render_transcript(t: &ClarificationTranscript) -> String {
    if t.is_empty() {
        return "(no questions asked)".into();
    }
    t.entries()
        .iter()
        .map(|e| {
            let answer = if e.skipped { "(skipped)" } else { e.answer.as_str() };
            format!(
                "Q{} [{}]: {}\nA: {}",
                e.question.id,
                topic_name(e.question.topic),
                e.question.text,
                answer
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn topic_name(t: QuestionTopic) -> String {
    serde_json::to_value(t)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn render_signals(s: &SustainabilitySignals) -> String {
    if s.is_empty() {
        "none".into()
    } else {
        s.tags().join(", ")
    }
}

fn render_wtc(w: &WtcVector) -> String {
    format!(
        "emissions {:.2}, congestion {:.2}, seasonality {:.2}",
        w.emissions(),
        w.congestion(),
        w.seasonality()
    )
}

fn render_delta(d: Option<&MetricsDelta>) -> String {
    match d {
        Some(d) => MetricComponent::ALL
            .iter()
            .map(|c| format!("{} {:+.2}", c.field(), d.get(*c)))
            .collect::<Vec<_>>()
            .join(", "),
        None => "not available; compare qualitatively".into(),
    }
}

fn bindings<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
}

/// Fallback parser applied to a second unusable reply.
type Lenient<T> = dyn Fn(&str) -> Result<T, StructuredError>;

#[derive(Clone)]
pub struct Agents {
    gateway: Gateway,
    prompts: Arc<PromptRegistry>,
    metrics: Arc<MetricsTable>,
    config: AgentConfig,
    session_id: Option<String>,
}

impl std::fmt::Debug for Agents {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agents")
            .field("gateway", &self.gateway)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Agents {
    pub fn new(
        gateway: Gateway,
        prompts: Arc<PromptRegistry>,
        metrics: Arc<MetricsTable>,
        config: AgentConfig,
    ) -> Self {
        Self {
            gateway,
            prompts,
            metrics,
            config,
            session_id: None,
        }
    }

    /// Tags every provider request with `session_id` for tracing.
    pub fn for_session(&self, session_id: impl Into<String>) -> Self {
        Self {
            session_id: Some(session_id.into()),
            ..self.clone()
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn metrics(&self) -> &MetricsTable {
        &self.metrics
    }

    pub fn provider_name(&self) -> &str {
        self.gateway.provider_name()
    }

    fn request(&self, stage: Stage, prompt: String) -> Result<CompletionRequest, AgentError> {
        let gw = |source| AgentError::Gateway { stage, source };
        let mut req = CompletionRequest::new(prompt, stage)
            .map_err(gw)?
            .with_max_output_tokens(self.config.max_output_tokens)
            .map_err(gw)?;
        if let Some(t) = self.config.temperatures.get(&stage) {
            req = req.with_temperature(*t).map_err(gw)?;
        }
        if let Some(id) = &self.session_id {
            req = req.with_session(id.clone());
        }
        Ok(req)
    }

    /// Renders, calls and parses, with one re-prompt on an unusable reply.
    /// `lenient` handles a second failure before it becomes an error.
    fn call<T>(
        &self,
        stage: Stage,
        vars: BTreeMap<String, String>,
        parse: impl Fn(&str) -> Result<T, StructuredError>,
        lenient: Option<&Lenient<T>>,
    ) -> Result<AgentOutput<T>, AgentError> {
        let prompt = self
            .prompts
            .render(stage, &vars)
            .map_err(|source| AgentError::Prompt { stage, source })?;
        let first = self
            .gateway
            .complete(&self.request(stage, prompt.clone())?)
            .map_err(|source| AgentError::Gateway { stage, source })?;
        let mut provider_ms = first.elapsed_ms;
        let err = match parse(&first.text) {
            Ok(value) => {
                return Ok(AgentOutput {
                    value,
                    provider_ms,
                    attempts: 1,
                })
            }
            Err(e) => e,
        };
        tracing::warn!(%stage, error = %err, "re-prompting after unusable reply");
        let second = self
            .gateway
            .complete(&self.request(stage, format!("{prompt}{RETRY_SUFFIX}"))?)
            .map_err(|source| AgentError::Gateway { stage, source })?;
        provider_ms += second.elapsed_ms;
        let value = match (parse(&second.text), lenient) {
            (Ok(v), _) => v,
            (Err(_), Some(lenient)) => lenient(&second.text).map_err(|source| AgentError::Parse { stage, source })?,
            (Err(source), None) => return Err(AgentError::Parse { stage, source }),
        };
        Ok(AgentOutput {
            value,
            provider_ms,
            attempts: 2,
        })
    }

    pub fn classify_query(&self, q: &Query) -> Result<AgentOutput<QueryClassification>, AgentError> {
        let vars = bindings([("query", q.text.clone()), ("fixture_key", fixture_key(&q.text))]);
        self.call(
            Stage::Guardrail,
            vars,
            |text| match parse_structured(text, SchemaId::GuardrailVerdict)? {
                Structured::GuardrailVerdict(c) => Ok(c),
                _ => unreachable!("schema dispatch"),
            },
            None,
        )
    }

    pub fn generate_clarifying_questions(
        &self,
        q: &Query,
        classification: &QueryClassification,
    ) -> Result<AgentOutput<Vec<ClarifyingQuestion>>, AgentError> {
        let stage = Stage::CqAgent;
        if classification.is_rejected() {
            return Err(AgentError::Precondition(
                "query was rejected by the guardrail".into(),
                stage,
            ));
        }
        let screening = format!(
            "{} (general questions needed: {})",
            classification.verdict.as_str(),
            if classification.needs_general_questions {
                "yes"
            } else {
                "no"
            }
        );
        let vars = bindings([
            ("query", q.text.clone()),
            ("classification", screening),
            ("fixture_key", fixture_key(&q.text)),
        ]);
        let out = self.call(
            stage,
            vars,
            |text| match parse_structured(text, SchemaId::QuestionList)? {
                Structured::QuestionList(qs) => Ok(qs),
                _ => unreachable!("schema dispatch"),
            },
            None,
        )?;
        Ok(out.map(|qs| enforce_question_contract(qs, classification)))
    }

    pub fn classify_intent(
        &self,
        transcript: &ClarificationTranscript,
        q: &Query,
    ) -> Result<AgentOutput<IntentOutput>, AgentError> {
        if transcript.all_skipped() {
            return Ok(AgentOutput::local(IntentOutput {
                persona: TravelPersona::unspecified(),
                wtc: WtcVector::neutral(),
                signals: SustainabilitySignals::default(),
            }));
        }
        let vars = bindings([
            ("query", q.text.clone()),
            ("transcript", render_transcript(transcript)),
            ("fixture_key", fixture_key(&q.text)),
        ]);
        let strict = |text: &str| match parse_structured(text, SchemaId::PersonaWtc)? {
            Structured::PersonaWtc(o) => Ok(o),
            _ => unreachable!("schema dispatch"),
        };
        let lenient = |text: &str| {
            parse_structured(text, SchemaId::PersonaWtc).map(|_| ()).or_else(|e| {
                if e.only_wtc_range() {
                    Ok(())
                } else {
                    Err(e)
                }
            })?;
            parse_persona_wtc_clamped(text)
        };
        let out = self.call(Stage::IntentAgent, vars, strict, Some(&lenient))?;
        let share = skipped_tradeoff_share(transcript);
        let keywords = keyword_signals(transcript);
        Ok(out.map(|o| IntentOutput {
            wtc: o.wtc.shrink_toward_neutral(share),
            signals: o.signals.merged(&keywords),
            persona: o.persona,
        }))
    }

    fn recommendation_set(
        &self,
        kind: SetKind,
        draft: RecommendationDraft,
        stage: Stage,
    ) -> Result<RecommendationSet, AgentError> {
        let enrich = |r: Recommendation| {
            let m = self.metrics.lookup(&r.city).or(r.metrics);
            r.with_metrics(m)
        };
        RecommendationSet::normalized(
            kind,
            enrich(draft.primary),
            draft.runner_ups.into_iter().map(enrich).collect(),
        )
        .map_err(|source| AgentError::Domain { stage, source })
    }

    fn parse_draft(text: &str) -> Result<RecommendationDraft, StructuredError> {
        match parse_structured(text, SchemaId::RecommendationSet)? {
            Structured::RecommendationSet(d) => Ok(d),
            _ => unreachable!("schema dispatch"),
        }
    }

    /// Baseline set; the prompt sees only the query.
    pub fn recommend_baseline(&self, q: &Query) -> Result<AgentOutput<RecommendationSet>, AgentError> {
        let stage = Stage::RecBaseline;
        let vars = bindings([("query", q.text.clone()), ("fixture_key", fixture_key(&q.text))]);
        let out = self.call(stage, vars, Self::parse_draft, None)?;
        let set = self.recommendation_set(SetKind::Baseline, out.value, stage)?;
        Ok(AgentOutput {
            value: set,
            provider_ms: out.provider_ms,
            attempts: out.attempts,
        })
    }

    pub fn recommend_sustainable(
        &self,
        q: &Query,
        persona: &TravelPersona,
        transcript: &ClarificationTranscript,
        signals: &SustainabilitySignals,
    ) -> Result<AgentOutput<RecommendationSet>, AgentError> {
        let stage = Stage::RecSustainable;
        let vars = bindings([
            ("query", q.text.clone()),
            ("persona", serde_json::to_string(persona).expect("persona serializes")),
            ("transcript", render_transcript(transcript)),
            ("signals", render_signals(signals)),
            ("fixture_key", fixture_key(&q.text)),
        ]);
        let out = self.call(stage, vars, Self::parse_draft, None)?;
        let set = self.recommendation_set(SetKind::ContextAware, out.value, stage)?;
        Ok(AgentOutput {
            value: set,
            provider_ms: out.provider_ms,
            attempts: out.attempts,
        })
    }

    /// Picks the strategy and the (chosen, alternative) pair without calling
    /// the model.
    pub fn plan_explanation(
        &self,
        r0: &RecommendationSet,
        r1: &RecommendationSet,
        wtc: &WtcVector,
    ) -> Result<(Strategy, Recommendation, Recommendation), AgentError> {
        if !r0.primary.same_city(&r1.primary) {
            let strategy = decide_strategy(wtc, self.config.wtc_threshold);
            return Ok(match strategy {
                Strategy::DirectAlignment => (strategy, r1.primary.clone(), r0.primary.clone()),
                Strategy::CounterfactualNudging => (strategy, r0.primary.clone(), r1.primary.clone()),
            });
        }
        let chosen = r1.primary.clone();
        r1.runner_ups
            .iter()
            .chain(r0.runner_ups.iter())
            .find(|r| !r.same_city(&chosen))
            .map(|alt| (Strategy::DirectAlignment, chosen.clone(), alt.clone()))
            .ok_or_else(|| {
                AgentError::Precondition(
                    format!(
                        "both sets recommend {} and neither offers a different runner-up",
                        chosen.city
                    ),
                    Stage::ExplainAgent,
                )
            })
    }

    pub fn explain(
        &self,
        r0: &RecommendationSet,
        r1: &RecommendationSet,
        persona: &TravelPersona,
        wtc: &WtcVector,
    ) -> Result<AgentOutput<ExplanationBundle>, AgentError> {
        let stage = Stage::ExplainAgent;
        let (strategy, chosen, alternative) = self.plan_explanation(r0, r1, wtc)?;
        // Delta is always the sustainability-aware side minus the other side.
        let (green, other) = match strategy {
            Strategy::DirectAlignment => (&chosen, &alternative),
            Strategy::CounterfactualNudging => (&alternative, &chosen),
        };
        let delta = self.metrics.compare(&green.city, &other.city);
        let chosen_minus_alt = self.metrics.compare(&chosen.city, &alternative.city);
        let vars = bindings([
            ("strategy", strategy.as_str().to_owned()),
            ("chosen", chosen.city.clone()),
            ("alternative", alternative.city.clone()),
            ("persona", serde_json::to_string(persona).expect("persona serializes")),
            ("wtc", render_wtc(wtc)),
            ("comparison", render_delta(chosen_minus_alt.as_ref())),
            ("fixture_key", explain_key(&chosen.city, &alternative.city, strategy)),
        ]);
        let out = self.call(
            stage,
            vars,
            |text| match parse_structured(text, SchemaId::ExplanationBundle)? {
                Structured::ExplanationBundle(d) => Ok(d),
                _ => unreachable!("schema dispatch"),
            },
            None,
        )?;

        let mut text = out.value.explanation_text.trim().to_owned();
        match strategy {
            Strategy::CounterfactualNudging => {
                if !has_counterfactual_marker(&text, &alternative.city) {
                    tracing::warn!(alternative = %alternative.city, "explanation lacked the counterfactual sentence");
                    text = with_sentence(&text, &counterfactual_sentence(&alternative.city, delta.as_ref()));
                }
            }
            Strategy::DirectAlignment => {
                if let Some(d) = chosen_minus_alt.filter(|d| !d.improved_components().is_empty()) {
                    if !cites_improvement(&text, &d) {
                        let best = improvement_phrase(d.improved_components()[0]);
                        text = with_sentence(
                            &text,
                            &format!("Compared with {}, {} has {best}.", alternative.city, chosen.city),
                        );
                    }
                }
            }
        }
        let delta_provenance = if delta.is_some() {
            DeltaProvenance::MetricsTable
        } else {
            DeltaProvenance::Qualitative
        };
        Ok(AgentOutput {
            value: ExplanationBundle {
                chosen,
                explanation_text: text,
                alternative,
                strategy,
                delta,
                delta_provenance,
            },
            provider_ms: out.provider_ms,
            attempts: out.attempts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TranscriptEntry;

    fn q(id: u8, topic: QuestionTopic) -> ClarifyingQuestion {
        ClarifyingQuestion {
            id,
            text: format!("question {id}"),
            topic,
        }
    }

    fn valid() -> QueryClassification {
        QueryClassification::new(Verdict::Valid, "ok", false).unwrap()
    }

    #[test]
    fn slugs() {
        assert_eq!(
            fixture_key("Seaside weekend city trip from Munich"),
            "seaside-weekend-city-trip-from-munich"
        );
        assert_eq!(
            fixture_key("  I want to travel in Europe!  "),
            "i-want-to-travel-in-europe"
        );
        assert_eq!(
            explain_key("Valencia", "Barcelona", Strategy::DirectAlignment),
            "valencia-vs-barcelona-direct-alignment"
        );
        assert!(fixture_key(&"x ".repeat(200)).len() <= 80);
        assert_eq!(fixture_key("???"), "empty");
    }

    #[test]
    fn marker_predicate() {
        let cf = "Barcelona suits you. Had you expressed interest in avoiding crowds, Valencia would have been recommended because it is calmer.";
        assert!(has_counterfactual_marker(cf, "Valencia"));
        assert!(!has_counterfactual_marker(cf, "Porto"));
        assert!(!has_counterfactual_marker("Valencia would have been nice.", "Valencia"));
        assert!(has_counterfactual_marker(
            "If you had wanted quiet, Graz would have fit.",
            "Graz"
        ));
        assert!(has_counterfactual_marker(
            &counterfactual_sentence("Ljubljana", None),
            "Ljubljana"
        ));
    }

    #[test]
    fn questions_truncated_and_tradeoff_guaranteed() {
        let seven: Vec<_> = (1..=7).map(|i| q(i, QuestionTopic::Interests)).collect();
        let out = enforce_question_contract(seven, &valid());
        assert_eq!(out.len(), 5);
        assert!(out.iter().any(|x| x.topic == QuestionTopic::SustainabilityTradeoff));
        assert_eq!(out.iter().map(|x| x.id).collect::<Vec<_>>(), [1, 2, 3, 4, 5]);

        let vague = QueryClassification::new(Verdict::ValidVague, "vague", true).unwrap();
        let out = enforce_question_contract(vec![q(1, QuestionTopic::SustainabilityTradeoff)], &vague);
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].topic, QuestionTopic::Budget);

        let out = enforce_question_contract(vec![], &vague);
        assert_eq!(out.len(), 2);
        let full: Vec<_> = (1..=5)
            .map(|i| {
                q(
                    i,
                    if i == 5 {
                        QuestionTopic::SustainabilityTradeoff
                    } else {
                        QuestionTopic::Duration
                    },
                )
            })
            .collect();
        let out = enforce_question_contract(full, &vague);
        assert_eq!(out.len(), 5);
        assert!(out.iter().any(|x| x.topic == QuestionTopic::SustainabilityTradeoff));
        assert!(out.iter().any(|x| x.topic == QuestionTopic::Budget));
    }

    fn transcript(rows: &[(QuestionTopic, &str, bool)]) -> ClarificationTranscript {
        let mut t = ClarificationTranscript::default();
        for (i, (topic, answer, skipped)) in rows.iter().enumerate() {
            t.push(TranscriptEntry {
                question: q(i as u8 + 1, *topic),
                answer: answer.to_string(),
                skipped: *skipped,
            })
            .unwrap();
        }
        t
    }

    #[test]
    fn keyword_extraction() {
        let t = transcript(&[
            (QuestionTopic::SustainabilityTradeoff, "Train only, no flights", false),
            (
                QuestionTopic::SustainabilityTradeoff,
                "No, I want the famous lesser-known... no, the famous one",
                false,
            ),
            (QuestionTopic::Other, "Happy to go off-season", false),
            (QuestionTopic::Other, "quieter places", true),
        ]);
        let s = keyword_signals(&t);
        assert_eq!(s.tags(), ["prefers_train", "off_season_ok"]);
    }

    #[test]
    fn skipped_share() {
        let t = transcript(&[
            (QuestionTopic::SustainabilityTradeoff, "", true),
            (QuestionTopic::SustainabilityTradeoff, "yes", false),
            (QuestionTopic::Budget, "", true),
        ]);
        assert_eq!(skipped_tradeoff_share(&t), 0.5);
        assert_eq!(
            skipped_tradeoff_share(&transcript(&[(QuestionTopic::Budget, "", true)])),
            0.0
        );
    }

    #[test]
    fn sentence_split() {
        assert_eq!(sentences("A b. C d! E"), ["A b.", "C d!", "E"]);
        assert_eq!(sentences("Costs 2.5 euros. Ok"), ["Costs 2.5 euros.", "Ok"]);
    }
}
