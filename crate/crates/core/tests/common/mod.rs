#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;
use wayfare_core::agents::{QueryClassification, SustainabilitySignals, Verdict};
use wayfare_core::clock::ManualClock;
use wayfare_core::domain::{
    BudgetLevel, Choice, ClarificationTranscript, ClarifyingQuestion, DeltaProvenance, ExplanationBundle,
    FeedbackRecord, Query, QuerySource, QuestionTopic, Recommendation, RecommendationSet, SetKind,
    Strategy as Rhetoric, SustainabilityMetrics, TranscriptEntry, TravelPersona, WtcVector,
};
use wayfare_core::eval::ReplayScript;
use wayfare_core::orchestrator::{Engine, EventLogEntry, EventStage, Session, SessionId, SessionState};
use wayfare_core::runtime::EngineConfig;
use wayfare_core::store::SessionStore;

pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 5, 1, 9, 0, 0).unwrap()
}

pub fn manual_clock() -> Arc<ManualClock> {
    Arc::new(ManualClock::new(epoch()))
}

pub fn stub_engine(store: Arc<dyn SessionStore>) -> Engine {
    EngineConfig::bundled_stub()
        .build_engine(store, manual_clock())
        .unwrap()
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn script(key: &str) -> ReplayScript {
    ReplayScript::load(fixtures_dir().join("scripts").join(format!("{key}.json"))).unwrap()
}

pub fn all_scripts() -> Vec<ReplayScript> {
    let mut paths: Vec<_> = std::fs::read_dir(fixtures_dir().join("scripts"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    paths.into_iter().map(|p| ReplayScript::load(p).unwrap()).collect()
}

#[derive(serde::Deserialize)]
pub struct QueryFixtures {
    pub in_scope: Vec<String>,
    pub out_of_scope: Vec<String>,
}

pub fn query_fixtures() -> QueryFixtures {
    let text = std::fs::read_to_string(fixtures_dir().join("queries.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn rec(city: &str) -> Recommendation {
    Recommendation::new(city, "Testland", format!("{city} rationale")).unwrap()
}

/// A completed session with the given outcome, built without any agents.
pub fn synthetic_session(
    n: u32,
    choice: Choice,
    strategy: Rhetoric,
    chosen_in_r1: bool,
    ratings: Option<(i64, i64, i64)>,
) -> Session {
    let mut s = Session::new(SessionId::random(), epoch() + Duration::seconds(n as i64));
    s.state = if ratings.is_some() {
        SessionState::Completed
    } else {
        SessionState::AwaitingFeedback
    };
    s.query = Some(Query::new(format!("trip {n}"), QuerySource::FreeText, s.created_at).unwrap());
    let r0 = RecommendationSet::new(SetKind::Baseline, rec("Barcelona"), vec![rec("Nice")]).unwrap();
    let r1 = RecommendationSet::new(SetKind::ContextAware, rec("Valencia"), vec![rec("Gdansk")]).unwrap();
    let (chosen, alternative) = if chosen_in_r1 {
        (r1.primary.clone(), r0.primary.clone())
    } else {
        (r0.primary.clone(), r1.primary.clone())
    };
    s.bundle = Some(ExplanationBundle {
        chosen,
        explanation_text: format!("Explanation {n}"),
        alternative,
        strategy,
        delta: None,
        delta_provenance: DeltaProvenance::Qualitative,
    });
    s.r0 = Some(r0);
    s.r1 = Some(r1);
    s.choice = Some(choice);
    s.feedback = ratings.map(|(a, b, c)| FeedbackRecord::new(choice, a, b, c, None).unwrap());
    s
}

// ---------------------------------------------------------------------------
// Arbitrary sessions for persistence properties

fn arb_text() -> impl Strategy<Value = String> {
    "[ -~àéıßΔ漢]{1,24}".prop_map(|s| format!("x{s}"))
}

fn arb_unit() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), Just(0.5), 0.0..=1.0f64]
}

fn arb_wtc() -> impl Strategy<Value = WtcVector> {
    (arb_unit(), arb_unit(), arb_unit()).prop_map(|(a, b, c)| WtcVector::new(a, b, c).unwrap())
}

fn arb_metrics() -> impl Strategy<Value = SustainabilityMetrics> {
    (arb_unit(), arb_unit(), arb_unit(), arb_unit())
        .prop_map(|(a, b, c, d)| SustainabilityMetrics::new(a, b, c, d).unwrap())
}

fn arb_rec(city: String) -> impl Strategy<Value = Recommendation> {
    (arb_text(), prop::option::of(arb_metrics())).prop_map(move |(why, m)| {
        Recommendation::new(city.clone(), "Country", why)
            .unwrap()
            .with_metrics(m)
    })
}

fn arb_set(kind: SetKind, base: usize) -> BoxedStrategy<RecommendationSet> {
    (0usize..=2)
        .prop_flat_map(move |n| {
            let cities: Vec<String> = (0..=n).map(|i| format!("City{}", base + i)).collect();
            let primary = arb_rec(cities[0].clone());
            let others: Vec<_> = cities[1..].iter().cloned().map(arb_rec).collect();
            (primary, others).prop_map(move |(p, r)| RecommendationSet::new(kind, p, r).unwrap())
        })
        .boxed()
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

fn arb_state() -> impl Strategy<Value = SessionState> {
    prop_oneof![
        Just(SessionState::Created),
        Just(SessionState::AwaitingQuery),
        Just(SessionState::Rejected),
        (1u8..=5).prop_map(|i| SessionState::Clarifying { next_question_index: i }),
        Just(SessionState::Profiling),
        Just(SessionState::Recommending),
        Just(SessionState::Explaining),
        Just(SessionState::AwaitingChoice),
        Just(SessionState::AwaitingFeedback),
        Just(SessionState::Completed),
        arb_text().prop_map(|reason| SessionState::Failed { reason }),
    ]
}

fn arb_stage() -> impl Strategy<Value = EventStage> {
    prop::sample::select(vec![
        EventStage::Created,
        EventStage::QueryClassified,
        EventStage::QuestionAsked,
        EventStage::AnswerRecorded,
        EventStage::Intent,
        EventStage::RecBaseline,
        EventStage::RecSustainable,
        EventStage::Explain,
        EventStage::Choice,
        EventStage::Feedback,
        EventStage::Failed,
    ])
}

fn arb_choice() -> impl Strategy<Value = Choice> {
    prop_oneof![Just(Choice::Primary), Just(Choice::Alternative), Just(Choice::None)]
}

pub fn arb_session() -> BoxedStrategy<Session> {
    let questions = prop::collection::vec((arb_text(), arb_topic()), 0..=5).boxed();
    let answers = prop::collection::vec((arb_text(), any::<bool>()), 0..=5).boxed();
    let events = prop::collection::vec(
        (
            0i64..5_000,
            arb_stage(),
            0.0..5_000.0f64,
            prop::option::of(0.0..100.0f64),
        ),
        0..12,
    )
    .boxed();
    let persona = (
        prop::collection::vec(arb_text(), 0..3),
        prop::option::of(arb_text()),
        arb_text(),
    )
        .boxed();
    let outcome = (
        prop::option::of((arb_wtc(), prop::collection::vec("[a-z_]{3,12}", 0..3))).boxed(),
        prop::option::of((
            arb_set(SetKind::Baseline, 0).boxed(),
            arb_set(SetKind::ContextAware, 10).boxed(),
            any::<bool>(),
        ))
        .boxed(),
        prop::option::of((arb_choice(), 1i64..=5, 1i64..=5, 1i64..=5, prop::option::of(arb_text()))).boxed(),
    )
        .boxed();
    (
        arb_state(),
        0i64..1_000_000_000,
        prop::option::of(arb_text()),
        questions,
        answers,
        persona,
        outcome,
        events,
    )
        .prop_map(|(state, offset, query, questions, answers, persona, outcome, events)| {
            let created = epoch() + Duration::milliseconds(offset);
            let mut s = Session::new(SessionId::random(), created);
            s.state = state;
            s.query = query.map(|q| Query::new(q, QuerySource::FreeText, created).unwrap());
            if s.query.is_some() {
                s.classification = QueryClassification::new(Verdict::Valid, "fine", false);
            }
            s.questions = questions
                .into_iter()
                .enumerate()
                .map(|(i, (text, topic))| ClarifyingQuestion {
                    id: i as u8 + 1,
                    text,
                    topic,
                })
                .collect();
            let mut t = ClarificationTranscript::default();
            for (q, (answer, skipped)) in s.questions.iter().zip(answers) {
                t.push(TranscriptEntry {
                    question: q.clone(),
                    answer,
                    skipped,
                })
                .unwrap();
            }
            s.transcript = t;
            let (wtc, sets, feedback) = outcome;
            if let Some((w, tags)) = wtc {
                let (interests, origin, style) = persona;
                s.persona = Some(TravelPersona {
                    interests,
                    budget_level: BudgetLevel::Medium,
                    travel_style: style,
                    origin_city: origin,
                    constraints: vec![],
                });
                s.wtc = Some(w);
                s.signals = Some(SustainabilitySignals::new(tags));
            }
            if let Some((r0, r1, direct)) = sets {
                let (chosen, alternative, strategy) = if direct {
                    (r1.primary.clone(), r0.primary.clone(), Rhetoric::DirectAlignment)
                } else {
                    (r0.primary.clone(), r1.primary.clone(), Rhetoric::CounterfactualNudging)
                };
                s.bundle = Some(ExplanationBundle {
                    chosen,
                    explanation_text: "text".into(),
                    alternative,
                    strategy,
                    delta: None,
                    delta_provenance: DeltaProvenance::Qualitative,
                });
                s.r0 = Some(r0);
                s.r1 = Some(r1);
                if let Some((choice, a, b, c, free)) = feedback {
                    s.choice = Some(choice);
                    s.nudge_switch = Some(!direct && choice == Choice::Alternative);
                    s.feedback = Some(FeedbackRecord::new(choice, a, b, c, free).unwrap());
                }
            }
            let mut at = created;
            for (gap, stage, duration_ms, provider_ms) in events {
                at += Duration::microseconds(gap);
                s.event_log.push(EventLogEntry {
                    timestamp: at,
                    stage,
                    duration_ms,
                    detail: format!("{stage}"),
                    provider_ms: provider_ms.map(|p| p.min(duration_ms)),
                    question_index: None,
                });
            }
            s
        })
        .boxed()
}
