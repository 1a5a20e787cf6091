//! Domain vocabulary shared by every stage of the pipeline, plus the pure
//! decision rules (strategy selection and the sustainability delta).
//!
//! Everything here is an immutable value once constructed. Constructors
//! validate; serde deserialization of range-bounded values goes through the
//! same checks.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on the length of a user query, in characters.
pub const MAX_QUERY_CHARS: usize = 2000;
/// Upper bound on clarifying questions per session.
pub const MAX_QUESTIONS: usize = 5;
/// Upper bound on runner-up destinations in a recommendation set.
pub const MAX_RUNNER_UPS: usize = 2;
/// Default openness threshold for [`decide_strategy`].
pub const DEFAULT_WTC_THRESHOLD: f64 = 0.5;
/// Neutral willingness-to-compromise value for unanswered dimensions.
pub const NEUTRAL_WTC: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("{0} not finite")]
    NonFinite(&'static str),
    #[error("{field} = {value} outside [{min}, {max}]")]
    OutOfRange {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("query text is empty")]
    EmptyQuery,
    #[error("query text has {0} characters, limit is {MAX_QUERY_CHARS}")]
    QueryTooLong(usize),
    #[error("likert score {0} outside 1..5")]
    Likert(i64),
    #[error("city name is empty")]
    EmptyCity,
    #[error("invalid transcript: {0}")]
    Transcript(String),
    #[error("invalid recommendation set: {0}")]
    RecommendationSet(String),
    #[error("invalid explanation bundle: {0}")]
    Bundle(String),
}

fn check_unit(field: &'static str, value: f64) -> Result<f64, DomainError> {
    check_range(field, value, 0.0, 1.0)
}

fn check_range(field: &'static str, value: f64, min: f64, max: f64) -> Result<f64, DomainError> {
    if !value.is_finite() {
        return Err(DomainError::NonFinite(field));
    }
    if value < min || value > max {
        return Err(DomainError::OutOfRange { field, value, min, max });
    }
    Ok(value)
}

// ---------------------------------------------------------------------------
// Query

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySource {
    FreeText,
    PredefinedScenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuery")]
pub struct Query {
    pub text: String,
    pub source: QuerySource,
    pub timestamp: DateTime<Utc>,
}

#[derive(Deserialize)]
struct RawQuery {
    text: String,
    source: QuerySource,
    timestamp: DateTime<Utc>,
}

impl TryFrom<RawQuery> for Query {
    type Error = DomainError;
    fn try_from(raw: RawQuery) -> Result<Self, Self::Error> {
        Query::new(raw.text, raw.source, raw.timestamp)
    }
}

impl Query {
    /// Builds a query, trimming surrounding whitespace.
    pub fn new(text: impl AsRef<str>, source: QuerySource, timestamp: DateTime<Utc>) -> Result<Self, DomainError> {
        let text = text.as_ref().trim();
        if text.is_empty() {
            return Err(DomainError::EmptyQuery);
        }
        let len = text.chars().count();
        if len > MAX_QUERY_CHARS {
            return Err(DomainError::QueryTooLong(len));
        }
        Ok(Self {
            text: text.to_owned(),
            source,
            timestamp,
        })
    }
}

// ---------------------------------------------------------------------------
// Clarification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionTopic {
    SustainabilityTradeoff,
    Budget,
    Interests,
    Duration,
    Origin,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClarifyingQuestion {
    pub id: u8,
    pub text: String,
    pub topic: QuestionTopic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub question: ClarifyingQuestion,
    pub answer: String,
    pub skipped: bool,
}

/// The user's responses to the clarifying questions, in question order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTranscript")]
pub struct ClarificationTranscript {
    entries: Vec<TranscriptEntry>,
}

#[derive(Deserialize)]
struct RawTranscript {
    entries: Vec<TranscriptEntry>,
}

impl TryFrom<RawTranscript> for ClarificationTranscript {
    type Error = DomainError;
    fn try_from(raw: RawTranscript) -> Result<Self, Self::Error> {
        let mut t = ClarificationTranscript::default();
        for e in raw.entries {
            t.push(e)?;
        }
        Ok(t)
    }
}

impl ClarificationTranscript {
    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn all_skipped(&self) -> bool {
        self.entries.iter().all(|e| e.skipped)
    }

    /// Appends an entry. Skipped entries have their answer cleared.
    pub fn push(&mut self, mut entry: TranscriptEntry) -> Result<(), DomainError> {
        if self.entries.len() >= MAX_QUESTIONS {
            return Err(DomainError::Transcript(format!("more than {MAX_QUESTIONS} entries")));
        }
        if let Some(last) = self.entries.last() {
            if entry.question.id <= last.question.id {
                return Err(DomainError::Transcript(format!(
                    "question {} after question {}",
                    entry.question.id, last.question.id
                )));
            }
        }
        if entry.skipped {
            entry.answer.clear();
        }
        self.entries.push(entry);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Persona and willingness to compromise

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetLevel {
    Low,
    Medium,
    High,
    #[default]
    Unspecified,
}

pub const UNSPECIFIED: &str = "unspecified";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TravelPersona {
    pub interests: Vec<String>,
    pub budget_level: BudgetLevel,
    pub travel_style: String,
    pub origin_city: Option<String>,
    pub constraints: Vec<String>,
}

impl Default for TravelPersona {
    fn default() -> Self {
        Self::unspecified()
    }
}

impl TravelPersona {
    pub fn unspecified() -> Self {
        Self {
            interests: Vec::new(),
            budget_level: BudgetLevel::Unspecified,
            travel_style: UNSPECIFIED.to_owned(),
            origin_city: None,
            constraints: Vec::new(),
        }
    }

    pub fn is_unspecified(&self) -> bool {
        *self == Self::unspecified()
    }

    /// Deduplicates interests and constraints, keeping first occurrences.
    pub fn normalized(mut self) -> Self {
        dedup_in_place(&mut self.interests);
        dedup_in_place(&mut self.constraints);
        if self.travel_style.trim().is_empty() {
            self.travel_style = UNSPECIFIED.to_owned();
        }
        self
    }
}

pub(crate) fn dedup_in_place(items: &mut Vec<String>) {
    let mut seen = std::collections::HashSet::new();
    items.retain(|s| seen.insert(s.trim().to_lowercase()));
}

/// Willingness to compromise on each sustainability dimension, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WtcFields", into = "WtcFields")]
pub struct WtcVector {
    emissions: f64,
    congestion: f64,
    seasonality: f64,
}

#[derive(Serialize, Deserialize)]
struct WtcFields {
    emissions: f64,
    congestion: f64,
    seasonality: f64,
}

impl From<WtcVector> for WtcFields {
    fn from(w: WtcVector) -> Self {
        Self {
            emissions: w.emissions,
            congestion: w.congestion,
            seasonality: w.seasonality,
        }
    }
}

impl TryFrom<WtcFields> for WtcVector {
    type Error = DomainError;
    fn try_from(f: WtcFields) -> Result<Self, Self::Error> {
        WtcVector::new(f.emissions, f.congestion, f.seasonality)
    }
}

impl WtcVector {
    pub const DIMENSIONS: [&'static str; 3] = ["emissions", "congestion", "seasonality"];

    /// Strict constructor: every component must already lie in `[0, 1]`.
    pub fn new(emissions: f64, congestion: f64, seasonality: f64) -> Result<Self, DomainError> {
        Ok(Self {
            emissions: check_unit("emissions", emissions)?,
            congestion: check_unit("congestion", congestion)?,
            seasonality: check_unit("seasonality", seasonality)?,
        })
    }

    pub fn neutral() -> Self {
        Self {
            emissions: NEUTRAL_WTC,
            congestion: NEUTRAL_WTC,
            seasonality: NEUTRAL_WTC,
        }
    }

    pub fn emissions(&self) -> f64 {
        self.emissions
    }
    pub fn congestion(&self) -> f64 {
        self.congestion
    }
    pub fn seasonality(&self) -> f64 {
        self.seasonality
    }

    pub fn components(&self) -> [f64; 3] {
        [self.emissions, self.congestion, self.seasonality]
    }

    /// Moves every component toward the neutral value by `weight` in `[0, 1]`
    /// (`0` leaves the vector unchanged, `1` yields the neutral vector).
    pub fn shrink_toward_neutral(&self, weight: f64) -> Self {
        let w = weight.clamp(0.0, 1.0);
        let pull = |x: f64| x + (NEUTRAL_WTC - x) * w;
        Self {
            emissions: pull(self.emissions),
            congestion: pull(self.congestion),
            seasonality: pull(self.seasonality),
        }
    }
}

/// Normalizes raw intent-classifier output into a [`WtcVector`], clamping
/// each component into `[0, 1]`.
pub fn validate_wtc(raw: [f64; 3]) -> Result<WtcVector, DomainError> {
    for (value, name) in raw.iter().zip(WtcVector::DIMENSIONS) {
        if !value.is_finite() {
            return Err(DomainError::NonFinite(name));
        }
    }
    let [e, c, s] = raw.map(|x| x.clamp(0.0, 1.0));
    WtcVector::new(e, c, s)
}

/// Scalar openness score: the arithmetic mean of the three components.
pub fn wtc_openness(wtc: &WtcVector) -> f64 {
    (wtc.emissions + wtc.congestion + wtc.seasonality) / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    DirectAlignment,
    CounterfactualNudging,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::DirectAlignment => "direct_alignment",
            Strategy::CounterfactualNudging => "counterfactual_nudging",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Direct alignment iff openness reaches the threshold (inclusive).
pub fn decide_strategy(wtc: &WtcVector, threshold: f64) -> Strategy {
    if wtc_openness(wtc) >= threshold {
        Strategy::DirectAlignment
    } else {
        Strategy::CounterfactualNudging
    }
}

// ---------------------------------------------------------------------------
// Sustainability metrics

/// One component of the sustainability metric vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricComponent {
    Co2Index,
    VisitorPressure,
    SeasonalityIndex,
    Walkability,
}

impl MetricComponent {
    pub const ALL: [MetricComponent; 4] = [
        MetricComponent::Co2Index,
        MetricComponent::VisitorPressure,
        MetricComponent::SeasonalityIndex,
        MetricComponent::Walkability,
    ];

    pub fn field(&self) -> &'static str {
        match self {
            MetricComponent::Co2Index => "co2_index",
            MetricComponent::VisitorPressure => "visitor_pressure",
            MetricComponent::SeasonalityIndex => "seasonality_index",
            MetricComponent::Walkability => "walkability",
        }
    }

    /// Human-readable phrase used in explanation text.
    pub fn phrase(&self) -> &'static str {
        match self {
            MetricComponent::Co2Index => "CO2 emissions",
            MetricComponent::VisitorPressure => "visitor pressure",
            MetricComponent::SeasonalityIndex => "seasonal crowding",
            MetricComponent::Walkability => "walkability",
        }
    }

    /// Whether a larger value of this component is the sustainable direction.
    pub fn higher_is_better(&self) -> bool {
        matches!(self, MetricComponent::Walkability)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MetricFields", into = "MetricFields")]
pub struct SustainabilityMetrics {
    co2_index: f64,
    visitor_pressure: f64,
    seasonality_index: f64,
    walkability: f64,
}

#[derive(Serialize, Deserialize)]
struct MetricFields {
    co2_index: f64,
    visitor_pressure: f64,
    seasonality_index: f64,
    walkability: f64,
}

impl From<SustainabilityMetrics> for MetricFields {
    fn from(m: SustainabilityMetrics) -> Self {
        Self {
            co2_index: m.co2_index,
            visitor_pressure: m.visitor_pressure,
            seasonality_index: m.seasonality_index,
            walkability: m.walkability,
        }
    }
}

impl TryFrom<MetricFields> for SustainabilityMetrics {
    type Error = DomainError;
    fn try_from(f: MetricFields) -> Result<Self, Self::Error> {
        SustainabilityMetrics::new(f.co2_index, f.visitor_pressure, f.seasonality_index, f.walkability)
    }
}

impl SustainabilityMetrics {
    pub fn new(
        co2_index: f64,
        visitor_pressure: f64,
        seasonality_index: f64,
        walkability: f64,
    ) -> Result<Self, DomainError> {
        Ok(Self {
            co2_index: check_unit("co2_index", co2_index)?,
            visitor_pressure: check_unit("visitor_pressure", visitor_pressure)?,
            seasonality_index: check_unit("seasonality_index", seasonality_index)?,
            walkability: check_unit("walkability", walkability)?,
        })
    }

    pub fn get(&self, c: MetricComponent) -> f64 {
        match c {
            MetricComponent::Co2Index => self.co2_index,
            MetricComponent::VisitorPressure => self.visitor_pressure,
            MetricComponent::SeasonalityIndex => self.seasonality_index,
            MetricComponent::Walkability => self.walkability,
        }
    }

    pub fn co2_index(&self) -> f64 {
        self.co2_index
    }
    pub fn visitor_pressure(&self) -> f64 {
        self.visitor_pressure
    }
    pub fn seasonality_index(&self) -> f64 {
        self.seasonality_index
    }
    pub fn walkability(&self) -> f64 {
        self.walkability
    }
}

/// Component-wise difference of two metric vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MetricFields", into = "MetricFields")]
pub struct MetricsDelta {
    co2_index: f64,
    visitor_pressure: f64,
    seasonality_index: f64,
    walkability: f64,
}

impl From<MetricsDelta> for MetricFields {
    fn from(m: MetricsDelta) -> Self {
        Self {
            co2_index: m.co2_index,
            visitor_pressure: m.visitor_pressure,
            seasonality_index: m.seasonality_index,
            walkability: m.walkability,
        }
    }
}

impl TryFrom<MetricFields> for MetricsDelta {
    type Error = DomainError;
    fn try_from(f: MetricFields) -> Result<Self, Self::Error> {
        Ok(Self {
            co2_index: check_range("co2_index", f.co2_index, -1.0, 1.0)?,
            visitor_pressure: check_range("visitor_pressure", f.visitor_pressure, -1.0, 1.0)?,
            seasonality_index: check_range("seasonality_index", f.seasonality_index, -1.0, 1.0)?,
            walkability: check_range("walkability", f.walkability, -1.0, 1.0)?,
        })
    }
}

impl MetricsDelta {
    pub fn get(&self, c: MetricComponent) -> f64 {
        match c {
            MetricComponent::Co2Index => self.co2_index,
            MetricComponent::VisitorPressure => self.visitor_pressure,
            MetricComponent::SeasonalityIndex => self.seasonality_index,
            MetricComponent::Walkability => self.walkability,
        }
    }

    pub fn components(&self) -> [f64; 4] {
        MetricComponent::ALL.map(|c| self.get(c))
    }

    pub fn is_zero(&self) -> bool {
        self.components().iter().all(|x| *x == 0.0)
    }

    /// Components that moved in the sustainable direction, largest gain first.
    pub fn improved_components(&self) -> Vec<MetricComponent> {
        let mut gains: Vec<(MetricComponent, f64)> = MetricComponent::ALL
            .iter()
            .map(|&c| {
                let d = self.get(c);
                (c, if c.higher_is_better() { d } else { -d })
            })
            .filter(|(_, gain)| *gain > 0.0)
            .collect();
        // Gains equal up to rounding noise keep component order.
        gains.sort_by_key(|(_, gain)| std::cmp::Reverse((gain * 1e9).round() as i64));
        gains.into_iter().map(|(c, _)| c).collect()
    }
}

/// Element-wise `m1 - m0`.
pub fn delta_s(m1: &SustainabilityMetrics, m0: &SustainabilityMetrics) -> MetricsDelta {
    MetricsDelta {
        co2_index: m1.co2_index - m0.co2_index,
        visitor_pressure: m1.visitor_pressure - m0.visitor_pressure,
        seasonality_index: m1.seasonality_index - m0.seasonality_index,
        walkability: m1.walkability - m0.walkability,
    }
}

// ---------------------------------------------------------------------------
// Recommendations

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub city: String,
    pub country: String,
    pub rationale: String,
    #[serde(default)]
    pub metrics: Option<SustainabilityMetrics>,
}

impl Recommendation {
    pub fn new(
        city: impl Into<String>,
        country: impl Into<String>,
        rationale: impl Into<String>,
    ) -> Result<Self, DomainError> {
        let city = city.into().trim().to_owned();
        if city.is_empty() {
            return Err(DomainError::EmptyCity);
        }
        Ok(Self {
            city,
            country: country.into().trim().to_owned(),
            rationale: rationale.into(),
            metrics: None,
        })
    }

    pub fn with_metrics(mut self, metrics: Option<SustainabilityMetrics>) -> Self {
        self.metrics = metrics;
        self
    }

    pub fn same_city(&self, other: &Recommendation) -> bool {
        self.city.trim().eq_ignore_ascii_case(other.city.trim())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    Baseline,
    ContextAware,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSet")]
pub struct RecommendationSet {
    pub kind: SetKind,
    pub primary: Recommendation,
    pub runner_ups: Vec<Recommendation>,
}

#[derive(Deserialize)]
struct RawSet {
    kind: SetKind,
    primary: Recommendation,
    #[serde(default)]
    runner_ups: Vec<Recommendation>,
}

impl TryFrom<RawSet> for RecommendationSet {
    type Error = DomainError;
    fn try_from(raw: RawSet) -> Result<Self, Self::Error> {
        RecommendationSet::new(raw.kind, raw.primary, raw.runner_ups)
    }
}

impl RecommendationSet {
    /// Strict constructor used for stored documents.
    pub fn new(kind: SetKind, primary: Recommendation, runner_ups: Vec<Recommendation>) -> Result<Self, DomainError> {
        if primary.city.trim().is_empty() || runner_ups.iter().any(|r| r.city.trim().is_empty()) {
            return Err(DomainError::EmptyCity);
        }
        if runner_ups.len() > MAX_RUNNER_UPS {
            return Err(DomainError::RecommendationSet(format!(
                "{} runner-ups, limit is {MAX_RUNNER_UPS}",
                runner_ups.len()
            )));
        }
        if runner_ups.iter().any(|r| r.same_city(&primary)) {
            return Err(DomainError::RecommendationSet(format!(
                "primary city {} repeated among runner-ups",
                primary.city
            )));
        }
        Ok(Self {
            kind,
            primary,
            runner_ups,
        })
    }

    /// Lenient constructor for model output: drops runner-ups that repeat the
    /// primary or each other, then truncates to the runner-up limit.
    pub fn normalized(
        kind: SetKind,
        primary: Recommendation,
        runner_ups: Vec<Recommendation>,
    ) -> Result<Self, DomainError> {
        let mut kept: Vec<Recommendation> = Vec::new();
        for r in runner_ups {
            if r.city.trim().is_empty() || r.same_city(&primary) || kept.iter().any(|k| k.same_city(&r)) {
                continue;
            }
            kept.push(r);
        }
        kept.truncate(MAX_RUNNER_UPS);
        Self::new(kind, primary, kept)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Recommendation> {
        std::iter::once(&self.primary).chain(self.runner_ups.iter())
    }

    pub fn contains_city(&self, city: &str) -> bool {
        self.iter().any(|r| r.city.trim().eq_ignore_ascii_case(city.trim()))
    }
}

/// Where the sustainability comparison in an explanation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaProvenance {
    MetricsTable,
    Qualitative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationBundle {
    pub chosen: Recommendation,
    pub explanation_text: String,
    pub alternative: Recommendation,
    pub strategy: Strategy,
    pub delta: Option<MetricsDelta>,
    pub delta_provenance: DeltaProvenance,
}

// ---------------------------------------------------------------------------
// Feedback

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Primary,
    Alternative,
    None,
}

/// A 5-point rating, 1 = "Not at all" through 5 = "Extremely".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Likert(u8);

impl Likert {
    pub const LOW_ANCHOR: &'static str = "Not at all";
    pub const HIGH_ANCHOR: &'static str = "Extremely";

    pub fn new(score: i64) -> Result<Self, DomainError> {
        if (1..=5).contains(&score) {
            Ok(Self(score as u8))
        } else {
            Err(DomainError::Likert(score))
        }
    }

    pub fn get(&self) -> u8 {
        self.0
    }
}

impl TryFrom<i64> for Likert {
    type Error = DomainError;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Likert::new(v)
    }
}

impl From<Likert> for u8 {
    fn from(l: Likert) -> u8 {
        l.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub chosen_option: Choice,
    pub cq_quality: Likert,
    pub explanation_quality: Likert,
    pub reconsideration: Likert,
    #[serde(default)]
    pub free_text: Option<String>,
}

impl FeedbackRecord {
    pub fn new(
        chosen_option: Choice,
        cq_quality: i64,
        explanation_quality: i64,
        reconsideration: i64,
        free_text: Option<String>,
    ) -> Result<Self, DomainError> {
        Ok(Self {
            chosen_option,
            cq_quality: Likert::new(cq_quality)?,
            explanation_quality: Likert::new(explanation_quality)?,
            reconsideration: Likert::new(reconsideration)?,
            free_text,
        })
    }
}
