//! Extraction and validation of the fenced JSON blocks agents emit.
//!
//! The first well-formed JSON value in the completion text is taken as the
//! block (fenced blocks are tried before bare braces). Validation collects
//! every failing field rather than stopping at the first.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::agents::{QueryClassification, SustainabilitySignals, Verdict};
use crate::domain::{
    validate_wtc, BudgetLevel, ClarifyingQuestion, QuestionTopic, Recommendation, SustainabilityMetrics, TravelPersona,
    WtcVector, UNSPECIFIED,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaId {
    QuestionList,
    PersonaWtc,
    RecommendationSet,
    ExplanationBundle,
    GuardrailVerdict,
}

impl SchemaId {
    pub const ALL: [SchemaId; 5] = [
        SchemaId::QuestionList,
        SchemaId::PersonaWtc,
        SchemaId::RecommendationSet,
        SchemaId::ExplanationBundle,
        SchemaId::GuardrailVerdict,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchemaId::QuestionList => "question_list",
            SchemaId::PersonaWtc => "persona_wtc",
            SchemaId::RecommendationSet => "recommendation_set",
            SchemaId::ExplanationBundle => "explanation_bundle",
            SchemaId::GuardrailVerdict => "guardrail_verdict",
        }
    }
}

impl fmt::Display for SchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueKind {
    Missing,
    WrongType,
    OutOfRange,
    InvalidValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldIssue {
    pub path: String,
    pub kind: IssueKind,
    pub message: String,
}

impl fmt::Display for FieldIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructuredError {
    #[error("no structured block found for {schema}")]
    NoBlock { schema: SchemaId, raw: String },
    #[error("{schema} failed validation: {}", issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Validation { schema: SchemaId, issues: Vec<FieldIssue> },
}

impl StructuredError {
    /// True when every issue is a WTC component outside `[0, 1]`.
    pub fn only_wtc_range(&self) -> bool {
        match self {
            StructuredError::Validation { issues, .. } => {
                !issues.is_empty()
                    && issues
                        .iter()
                        .all(|i| i.kind == IssueKind::OutOfRange && i.path.starts_with("wtc."))
            }
            StructuredError::NoBlock { .. } => false,
        }
    }
}

/// Output of the intent classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentOutput {
    pub persona: TravelPersona,
    pub wtc: WtcVector,
    pub signals: SustainabilitySignals,
}

/// Recommendation set as emitted by a model; the agent assigns the kind and
/// normalizes runner-ups.
#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationDraft {
    pub primary: Recommendation,
    pub runner_ups: Vec<Recommendation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationDraft {
    pub explanation_text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Structured {
    QuestionList(Vec<ClarifyingQuestion>),
    PersonaWtc(IntentOutput),
    RecommendationSet(RecommendationDraft),
    ExplanationBundle(ExplanationDraft),
    GuardrailVerdict(QueryClassification),
}

impl Structured {
    pub fn schema(&self) -> SchemaId {
        match self {
            Structured::QuestionList(_) => SchemaId::QuestionList,
            Structured::PersonaWtc(_) => SchemaId::PersonaWtc,
            Structured::RecommendationSet(_) => SchemaId::RecommendationSet,
            Structured::ExplanationBundle(_) => SchemaId::ExplanationBundle,
            Structured::GuardrailVerdict(_) => SchemaId::GuardrailVerdict,
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            Structured::QuestionList(qs) => json!({ "questions": qs }),
            Structured::PersonaWtc(o) => json!({ "persona": o.persona, "wtc": o.wtc, "signals": o.signals }),
            Structured::RecommendationSet(d) => json!({ "primary": d.primary, "runner_ups": d.runner_ups }),
            Structured::ExplanationBundle(d) => json!({ "explanation_text": d.explanation_text }),
            Structured::GuardrailVerdict(c) => json!(c),
        }
    }

    /// Renders the value as a fenced block, the form agents are asked to emit.
    pub fn to_block(&self) -> String {
        format!(
            "```json\n{}\n```",
            serde_json::to_string_pretty(&self.to_value()).expect("json values serialize")
        )
    }
}

/// Finds the first well-formed JSON object or array in `text`.
pub fn extract_block(text: &str) -> Option<Value> {
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let Some(close) = after.find("```") else { break };
        let inner = &after[..close];
        let inner = inner.find('\n').map_or(inner, |nl| {
            let tag = inner[..nl].trim();
            if tag.chars().all(|c| c.is_ascii_alphanumeric()) {
                &inner[nl + 1..]
            } else {
                inner
            }
        });
        if let Ok(v @ (Value::Object(_) | Value::Array(_))) = serde_json::from_str::<Value>(inner.trim()) {
            return Some(v);
        }
        rest = &after[close + 3..];
    }
    for (i, ch) in text.char_indices() {
        if ch == '{' || ch == '[' {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
            if let Some(Ok(v)) = stream.next() {
                return Some(v);
            }
        }
    }
    None
}

pub fn parse_structured(text: &str, schema: SchemaId) -> Result<Structured, StructuredError> {
    parse_with(text, schema, false)
}

/// Like [`parse_structured`] for `persona_wtc`, but out-of-range WTC components
/// are clamped through [`validate_wtc`] instead of failing.
pub fn parse_persona_wtc_clamped(text: &str) -> Result<IntentOutput, StructuredError> {
    match parse_with(text, SchemaId::PersonaWtc, true)? {
        Structured::PersonaWtc(o) => Ok(o),
        _ => unreachable!("schema dispatch"),
    }
}

fn parse_with(text: &str, schema: SchemaId, clamp_wtc: bool) -> Result<Structured, StructuredError> {
    let value = extract_block(text).ok_or_else(|| StructuredError::NoBlock {
        schema,
        raw: text.to_owned(),
    })?;
    let mut v = Validator::default();
    let out = match schema {
        SchemaId::QuestionList => v.questions(&value).map(Structured::QuestionList),
        SchemaId::PersonaWtc => v.intent(&value, clamp_wtc).map(Structured::PersonaWtc),
        SchemaId::RecommendationSet => v.recommendations(&value).map(Structured::RecommendationSet),
        SchemaId::ExplanationBundle => v.explanation(&value).map(Structured::ExplanationBundle),
        SchemaId::GuardrailVerdict => v.guardrail(&value).map(Structured::GuardrailVerdict),
    };
    match out {
        Some(s) if v.issues.is_empty() => Ok(s),
        _ => Err(StructuredError::Validation {
            schema,
            issues: v.issues,
        }),
    }
}

#[derive(Default)]
struct Validator {
    issues: Vec<FieldIssue>,
}

impl Validator {
    fn issue(&mut self, path: &str, kind: IssueKind, message: impl Into<String>) {
        self.issues.push(FieldIssue {
            path: path.to_owned(),
            kind,
            message: message.into(),
        });
    }

    fn object<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a Map<String, Value>> {
        match v.as_object() {
            Some(o) => Some(o),
            None => {
                self.issue(path, IssueKind::WrongType, "expected an object");
                None
            }
        }
    }

    fn string(&mut self, o: &Map<String, Value>, key: &str, path: &str, required: bool) -> Option<String> {
        let p = join(path, key);
        match o.get(key) {
            Some(Value::String(s)) => Some(s.clone()),
            Some(Value::Null) | None if !required => None,
            None | Some(Value::Null) => {
                self.issue(&p, IssueKind::Missing, "required string");
                None
            }
            Some(_) => {
                self.issue(&p, IssueKind::WrongType, "expected a string");
                None
            }
        }
    }

    fn string_list(&mut self, o: &Map<String, Value>, key: &str, path: &str) -> Vec<String> {
        let p = join(path, key);
        match o.get(key) {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .filter_map(|(i, item)| match item.as_str() {
                    Some(s) => Some(s.to_owned()),
                    None => {
                        self.issue(&format!("{p}[{i}]"), IssueKind::WrongType, "expected a string");
                        None
                    }
                })
                .collect(),
            Some(_) => {
                self.issue(&p, IssueKind::WrongType, "expected an array of strings");
                Vec::new()
            }
        }
    }

    fn enum_value<T: for<'de> Deserialize<'de>>(&mut self, raw: &str, path: &str) -> Option<T> {
        match serde_json::from_value(Value::String(raw.to_owned())) {
            Ok(t) => Some(t),
            Err(_) => {
                self.issue(path, IssueKind::InvalidValue, format!("unknown value {raw:?}"));
                None
            }
        }
    }

    fn questions(&mut self, value: &Value) -> Option<Vec<ClarifyingQuestion>> {
        let items = match value {
            Value::Array(a) => a,
            Value::Object(o) => match o.get("questions") {
                Some(Value::Array(a)) => a,
                _ => {
                    self.issue("questions", IssueKind::Missing, "expected an array of questions");
                    return None;
                }
            },
            _ => unreachable!("blocks are objects or arrays"),
        };
        let mut out = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let path = format!("questions[{i}]");
            let Some(o) = self.object(item, &path) else { continue };
            let id = match o.get("id") {
                None | Some(Value::Null) => Some(i as u8 + 1),
                Some(v) => match v.as_u64() {
                    Some(n @ 1..=255) => Some(n as u8),
                    _ => {
                        self.issue(
                            &join(&path, "id"),
                            IssueKind::InvalidValue,
                            "expected a positive integer",
                        );
                        None
                    }
                },
            };
            let text = self.string(o, "text", &path, true);
            if text.as_deref().is_some_and(|t| t.trim().is_empty()) {
                self.issue(&join(&path, "text"), IssueKind::InvalidValue, "empty question");
            }
            let topic = match self.string(o, "topic", &path, false) {
                Some(t) => self.enum_value::<QuestionTopic>(&t, &join(&path, "topic")),
                None => Some(QuestionTopic::Other),
            };
            if let (Some(id), Some(text), Some(topic)) = (id, text, topic) {
                out.push(ClarifyingQuestion { id, text, topic });
            }
        }
        Some(out)
    }

    fn persona(&mut self, value: Option<&Value>) -> Option<TravelPersona> {
        let Some(value) = value else {
            self.issue("persona", IssueKind::Missing, "required object");
            return None;
        };
        let o = self.object(value, "persona")?;
        let budget_level = match self.string(o, "budget_level", "persona", false) {
            Some(b) => self.enum_value::<BudgetLevel>(&b, "persona.budget_level")?,
            None => BudgetLevel::Unspecified,
        };
        let travel_style = self
            .string(o, "travel_style", "persona", false)
            .unwrap_or_else(|| UNSPECIFIED.to_owned());
        let origin_city = self
            .string(o, "origin_city", "persona", false)
            .filter(|c| !c.trim().is_empty() && c.trim() != UNSPECIFIED);
        Some(
            TravelPersona {
                interests: self.string_list(o, "interests", "persona"),
                budget_level,
                travel_style,
                origin_city,
                constraints: self.string_list(o, "constraints", "persona"),
            }
            .normalized(),
        )
    }

    fn wtc(&mut self, value: Option<&Value>, clamp: bool) -> Option<WtcVector> {
        let raw: Vec<Option<&Value>> = match value {
            Some(Value::Object(o)) => WtcVector::DIMENSIONS.iter().map(|d| o.get(*d)).collect(),
            Some(Value::Array(a)) if a.len() == 3 => a.iter().map(Some).collect(),
            Some(_) => {
                self.issue(
                    "wtc",
                    IssueKind::WrongType,
                    "expected an object with emissions, congestion, seasonality",
                );
                return None;
            }
            None => {
                self.issue("wtc", IssueKind::Missing, "required object");
                return None;
            }
        };
        let mut nums = [0.0; 3];
        let mut ok = true;
        for ((slot, v), name) in nums.iter_mut().zip(raw).zip(WtcVector::DIMENSIONS) {
            let path = format!("wtc.{name}");
            match v.and_then(Value::as_f64) {
                Some(x) => {
                    if !clamp && !(0.0..=1.0).contains(&x) {
                        self.issue(&path, IssueKind::OutOfRange, format!("{x} outside [0, 1]"));
                        ok = false;
                    }
                    *slot = x;
                }
                None => {
                    self.issue(&path, IssueKind::Missing, "required number");
                    ok = false;
                }
            }
        }
        if !ok {
            return None;
        }
        match validate_wtc(nums) {
            Ok(w) => Some(w),
            Err(e) => {
                self.issue("wtc", IssueKind::InvalidValue, e.to_string());
                None
            }
        }
    }

    fn intent(&mut self, value: &Value, clamp_wtc: bool) -> Option<IntentOutput> {
        let o = self.object(value, "$")?;
        let persona = self.persona(o.get("persona"));
        let wtc = self.wtc(o.get("wtc"), clamp_wtc);
        let signals = SustainabilitySignals::new(self.string_list(o, "signals", ""));
        Some(IntentOutput {
            persona: persona?,
            wtc: wtc?,
            signals,
        })
    }

    fn recommendation(&mut self, value: &Value, path: &str) -> Option<Recommendation> {
        let o = self.object(value, path)?;
        let city = self.string(o, "city", path, true);
        if city.as_deref().is_some_and(|c| c.trim().is_empty()) {
            self.issue(&join(path, "city"), IssueKind::InvalidValue, "empty city");
            return None;
        }
        let country = self.string(o, "country", path, false).unwrap_or_default();
        let rationale = self.string(o, "rationale", path, false).unwrap_or_default();
        let metrics = match o.get("metrics") {
            None | Some(Value::Null) => None,
            Some(m) => match serde_json::from_value::<SustainabilityMetrics>(m.clone()) {
                Ok(m) => Some(m),
                Err(e) => {
                    self.issue(&join(path, "metrics"), IssueKind::InvalidValue, e.to_string());
                    None
                }
            },
        };
        let rec = Recommendation::new(city?, country, rationale).ok()?;
        Some(rec.with_metrics(metrics))
    }

    fn recommendations(&mut self, value: &Value) -> Option<RecommendationDraft> {
        let o = self.object(value, "$")?;
        let primary = match o.get("primary") {
            Some(p) => self.recommendation(p, "primary"),
            None => {
                self.issue("primary", IssueKind::Missing, "required object");
                None
            }
        };
        let runner_ups = match o.get("runner_ups") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .filter_map(|(i, r)| self.recommendation(r, &format!("runner_ups[{i}]")))
                .collect(),
            Some(_) => {
                self.issue("runner_ups", IssueKind::WrongType, "expected an array");
                Vec::new()
            }
        };
        Some(RecommendationDraft {
            primary: primary?,
            runner_ups,
        })
    }

    fn explanation(&mut self, value: &Value) -> Option<ExplanationDraft> {
        let o = self.object(value, "$")?;
        let text = self.string(o, "explanation_text", "", true)?;
        if text.trim().is_empty() {
            self.issue("explanation_text", IssueKind::InvalidValue, "empty explanation");
            return None;
        }
        Some(ExplanationDraft { explanation_text: text })
    }

    fn guardrail(&mut self, value: &Value) -> Option<QueryClassification> {
        let o = self.object(value, "$")?;
        let verdict = self
            .string(o, "verdict", "", true)
            .and_then(|v| self.enum_value::<Verdict>(&v, "verdict"));
        let reason = self.string(o, "reason", "", false).unwrap_or_default();
        let needs = match o.get("needs_general_questions") {
            None | Some(Value::Null) => false,
            Some(Value::Bool(b)) => *b,
            Some(_) => {
                self.issue("needs_general_questions", IssueKind::WrongType, "expected a boolean");
                false
            }
        };
        let verdict = verdict?;
        match QueryClassification::new(verdict, reason, needs) {
            Some(c) => Some(c),
            None => {
                self.issue("reason", IssueKind::Missing, "invalid_scope requires a reason");
                None
            }
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() || path == "$" {
        key.to_owned()
    } else {
        format!("{path}.{key}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SustainabilityMetrics;
    use proptest::prelude::*;

    #[test]
    fn persona_wtc_block() {
        let text = r#"Here is the profile:
```json
{"persona": {"interests": ["beaches", "food", "beaches"], "budget_level": "medium", "travel_style": "relaxed", "origin_city": "Munich", "constraints": []},
 "wtc": {"emissions": 0.7, "congestion": 0.4, "seasonality": 0.6},
 "signals": ["avoids_crowds"]}
```
Thanks!"#;
        let Structured::PersonaWtc(out) = parse_structured(text, SchemaId::PersonaWtc).unwrap() else {
            panic!("wrong variant")
        };
        assert_eq!(out.wtc, WtcVector::new(0.7, 0.4, 0.6).unwrap());
        assert_eq!(out.persona.interests, ["beaches", "food"]);
        assert_eq!(out.persona.origin_city.as_deref(), Some("Munich"));
    }

    #[test]
    fn refusal_has_no_block() {
        let err = parse_structured("I am sorry, I cannot help", SchemaId::PersonaWtc).unwrap_err();
        match err {
            StructuredError::NoBlock { raw, .. } => assert_eq!(raw, "I am sorry, I cannot help"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wtc_out_of_range_then_clamped() {
        let text =
            r#"{"persona": {}, "wtc": {"emissions": 1.4, "congestion": 0.4, "seasonality": 0.6}, "signals": []}"#;
        let err = parse_structured(text, SchemaId::PersonaWtc).unwrap_err();
        assert!(err.only_wtc_range(), "{err}");
        assert!(err.to_string().contains("wtc.emissions"));
        let clamped = parse_persona_wtc_clamped(text).unwrap();
        assert_eq!(clamped.wtc, WtcVector::new(1.0, 0.4, 0.6).unwrap());
        assert!(clamped.persona.is_unspecified());
    }

    #[test]
    fn validation_lists_every_failed_field() {
        let text = r#"{"questions": [{"text": "", "topic": "weather"}, {"topic": "budget"}]}"#;
        match parse_structured(text, SchemaId::QuestionList).unwrap_err() {
            StructuredError::Validation { issues, .. } => {
                let paths: Vec<_> = issues.iter().map(|i| i.path.as_str()).collect();
                assert_eq!(paths, ["questions[0].text", "questions[0].topic", "questions[1].text"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bare_json_and_fence_precedence() {
        let text = "Sure {not json} then ```json\n{\"explanation_text\": \"fenced\"}\n``` and {\"explanation_text\": \"bare\"}";
        match parse_structured(text, SchemaId::ExplanationBundle).unwrap() {
            Structured::ExplanationBundle(d) => assert_eq!(d.explanation_text, "fenced"),
            _ => panic!(),
        }
        let text = "verdict follows {\"verdict\": \"invalid_scope\", \"reason\": \"movies\"} done";
        match parse_structured(text, SchemaId::GuardrailVerdict).unwrap() {
            Structured::GuardrailVerdict(c) => assert_eq!(c.verdict, Verdict::InvalidScope),
            _ => panic!(),
        }
    }

    #[test]
    fn invalid_scope_requires_reason() {
        let err = parse_structured(r#"{"verdict": "invalid_scope"}"#, SchemaId::GuardrailVerdict).unwrap_err();
        assert!(matches!(err, StructuredError::Validation { .. }));
    }

    fn arb_text() -> impl Strategy<Value = String> {
        "[A-Za-z][A-Za-z ,.'!?-]{0,40}"
    }

    fn arb_unit() -> impl Strategy<Value = f64> {
        0.0f64..=1.0
    }

    fn arb_recommendation() -> impl Strategy<Value = Recommendation> {
        (
            arb_text(),
            arb_text(),
            arb_text(),
            proptest::option::of((arb_unit(), arb_unit(), arb_unit(), arb_unit())),
        )
            .prop_map(|(city, country, rationale, m)| {
                Recommendation::new(city, country, rationale)
                    .unwrap()
                    .with_metrics(m.map(|(a, b, c, d)| SustainabilityMetrics::new(a, b, c, d).unwrap()))
            })
    }

    fn arb_topic() -> impl Strategy<Value = QuestionTopic> {
        prop_oneof![
            Just(QuestionTopic::SustainabilityTradeoff),
            Just(QuestionTopic::Budget),
            Just(QuestionTopic::Interests),
            Just(QuestionTopic::Duration),
            Just(QuestionTopic::Origin),
            Just(QuestionTopic::Other),
        ]
    }

    fn arb_structured() -> impl Strategy<Value = Structured> {
        let questions = proptest::collection::vec((arb_text(), arb_topic()), 0..7).prop_map(|qs| {
            Structured::QuestionList(
                qs.into_iter()
                    .enumerate()
                    .map(|(i, (text, topic))| ClarifyingQuestion {
                        id: i as u8 + 1,
                        text,
                        topic,
                    })
                    .collect(),
            )
        });
        let intent = (
            proptest::collection::vec("[a-z]{1,8}", 0..4),
            prop_oneof![
                Just(BudgetLevel::Low),
                Just(BudgetLevel::Medium),
                Just(BudgetLevel::High),
                Just(BudgetLevel::Unspecified)
            ],
            "[a-z]{1,10}",
            proptest::option::of("[A-Z][a-z]{2,10}"),
            (arb_unit(), arb_unit(), arb_unit()),
            proptest::collection::vec("[a-z_]{1,12}", 0..4),
        )
            .prop_map(
                |(interests, budget_level, travel_style, origin_city, (e, c, s), signals)| {
                    Structured::PersonaWtc(IntentOutput {
                        persona: TravelPersona {
                            interests,
                            budget_level,
                            travel_style,
                            origin_city,
                            constraints: vec![],
                        }
                        .normalized(),
                        wtc: WtcVector::new(e, c, s).unwrap(),
                        signals: SustainabilitySignals::new(signals),
                    })
                },
            );
        let recs = (
            arb_recommendation(),
            proptest::collection::vec(arb_recommendation(), 0..3),
        )
            .prop_map(|(primary, runner_ups)| {
                Structured::RecommendationSet(RecommendationDraft { primary, runner_ups })
            });
        let expl = arb_text().prop_map(|t| Structured::ExplanationBundle(ExplanationDraft { explanation_text: t }));
        let verdict = (
            prop_oneof![
                Just(Verdict::Valid),
                Just(Verdict::ValidVague),
                Just(Verdict::InvalidScope)
            ],
            arb_text(),
            any::<bool>(),
        )
            .prop_map(|(v, r, n)| Structured::GuardrailVerdict(QueryClassification::new(v, r, n).unwrap()));
        prop_oneof![questions, intent, recs, expl, verdict]
    }

    proptest! {
        #[test]
        fn parse_inverts_serialize(value in arb_structured()) {
            let block = value.to_block();
            let back = parse_structured(&format!("Answer:\n{block}\n"), value.schema()).unwrap();
            prop_assert_eq!(back, value);
        }
    }
}
