mod common;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use common::{epoch, manual_clock, script, stub_engine};
use wayfare_core::agents::{fixture_key, AgentConfig, Agents};
use wayfare_core::clock::{Clock, SystemClock};
use wayfare_core::domain::{Choice, FeedbackRecord, Query, QuerySource, Strategy, TravelPersona, WtcVector};
use wayfare_core::gateway::{
    CompletionRequest, Gateway, GatewayError, PromptRegistry, Provider, ProviderReply, Stage, StubProvider,
};
use wayfare_core::metrics::MetricsTable;
use wayfare_core::orchestrator::{Answer, Engine, EngineError, EventStage, NextAction, SessionState};
use wayfare_core::runtime::bundled_fixture_dir;
use wayfare_core::store::{MemoryStore, SessionStore};

/// Stub fixtures with per-(stage, key) overrides, an optional delay and a
/// call log.
struct ScriptedProvider {
    stub: StubProvider,
    overrides: HashMap<(Stage, String), String>,
    delay: Duration,
    calls: Mutex<Vec<Stage>>,
}

impl ScriptedProvider {
    fn new() -> Self {
        Self {
            stub: StubProvider::new(bundled_fixture_dir()),
            overrides: HashMap::new(),
            delay: Duration::ZERO,
            calls: Mutex::new(Vec::new()),
        }
    }

    fn with(mut self, stage: Stage, key: &str, text: &str) -> Self {
        self.overrides.insert((stage, key.to_owned()), text.to_owned());
        self
    }
}

impl Provider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<ProviderReply, GatewayError> {
        self.calls.lock().unwrap().push(request.stage());
        std::thread::sleep(self.delay);
        let key = StubProvider::request_key(&request.prompt)
            .unwrap_or_default()
            .to_owned();
        if let Some(text) = self.overrides.get(&(request.stage(), key)) {
            return Ok(ProviderReply {
                text: text.clone(),
                token_estimate: None,
            });
        }
        self.stub.complete(request)
    }
}

fn engine_with(provider: Arc<ScriptedProvider>, clock: Arc<dyn Clock>) -> Engine {
    let agents = Agents::new(
        Gateway::with_provider(provider, clock.clone()),
        Arc::new(PromptRegistry::builtin()),
        Arc::new(MetricsTable::bundled()),
        AgentConfig::default(),
    );
    Engine::new(Arc::new(MemoryStore::new()), agents, clock)
}

fn query(text: &str) -> Query {
    Query::new(text, QuerySource::FreeText, epoch()).unwrap()
}

const SEASIDE: &str = "Seaside weekend city trip from Munich";

#[test]
fn fig2_walkthrough_step_by_step() {
    let engine = stub_engine(Arc::new(MemoryStore::new()));
    let id = engine.start_session().unwrap().id;
    assert_eq!(engine.get_session(&id).unwrap().state, SessionState::AwaitingQuery);
    let answers = script("seaside-munich").answers;
    let mut next = engine.submit_query(&id, query(SEASIDE)).unwrap();
    for (i, a) in answers.iter().enumerate() {
        let NextAction::Ask { index, total, .. } = next else {
            panic!("expected question, got {next:?}")
        };
        assert_eq!((index as usize, total), (i + 1, 4));
        let s = engine.get_session(&id).unwrap();
        assert_eq!(
            s.state,
            SessionState::Clarifying {
                next_question_index: index
            }
        );
        assert_eq!(s.transcript.len(), i);
        next = engine.submit_answer(&id, a.into()).unwrap();
    }
    let NextAction::Present { bundle } = next else {
        panic!("expected bundle")
    };
    assert_eq!(bundle.strategy, Strategy::DirectAlignment);
    assert_eq!(
        (bundle.chosen.city.as_str(), bundle.alternative.city.as_str()),
        ("Valencia", "Barcelona")
    );
    assert!(bundle.delta.is_some());

    let s = engine.get_session(&id).unwrap();
    let pipeline: Vec<EventStage> = s
        .event_log
        .iter()
        .map(|e| e.stage)
        .filter(|st| EventStage::PIPELINE.contains(st))
        .collect();
    assert_eq!(pipeline, EventStage::PIPELINE);
    assert!(s.signals.as_ref().unwrap().contains("avoids_crowds"));

    assert_eq!(
        engine.record_choice(&id, Choice::Primary).unwrap(),
        NextAction::CollectFeedback
    );
    let mismatched = FeedbackRecord::new(Choice::Alternative, 4, 5, 3, None).unwrap();
    assert!(matches!(
        engine.record_feedback(&id, mismatched),
        Err(EngineError::Validation(_))
    ));
    let fb = FeedbackRecord::new(Choice::Primary, 4, 5, 3, None).unwrap();
    assert_eq!(engine.record_feedback(&id, fb).unwrap(), NextAction::Done);
    let s = engine.get_session(&id).unwrap();
    assert_eq!(s.state, SessionState::Completed);
    assert_eq!(s.nudge_switch, Some(false));
    s.check_invariants().unwrap();
}

#[test]
fn operations_out_of_order_are_invalid_state() {
    let engine = stub_engine(Arc::new(MemoryStore::new()));
    let id = engine.start_session().unwrap().id;
    assert!(matches!(
        engine.submit_answer(&id, Answer::Skip),
        Err(EngineError::InvalidState {
            operation: "submit_answer",
            ..
        })
    ));
    assert!(matches!(
        engine.record_choice(&id, Choice::Primary),
        Err(EngineError::InvalidState { .. })
    ));
    assert!(matches!(
        engine.finalize_recommendation(&id),
        Err(EngineError::InvalidState { .. })
    ));
    engine.submit_query(&id, query(SEASIDE)).unwrap();
    assert!(matches!(
        engine.submit_query(&id, query(SEASIDE)),
        Err(EngineError::InvalidState { .. })
    ));
    assert!(matches!(
        engine.submit_answer(&id, Answer::Text("   ".into())),
        Err(EngineError::Validation(_))
    ));
    let unknown = wayfare_core::orchestrator::SessionId::random();
    assert!(matches!(engine.get_session(&unknown), Err(EngineError::NotFound(_))));
    assert!(matches!(
        engine.submit_query(&unknown, query(SEASIDE)),
        Err(EngineError::NotFound(_))
    ));
}

#[test]
fn movie_query_is_rejected_and_terminal() {
    let engine = stub_engine(Arc::new(MemoryStore::new()));
    let id = engine.start_session().unwrap().id;
    let next = engine
        .submit_query(&id, query("Recommend some movies to watch this weekend"))
        .unwrap();
    assert!(matches!(next, NextAction::Reject { .. }));
    let s = engine.get_session(&id).unwrap();
    assert_eq!(s.state, SessionState::Rejected);
    assert!(s.questions.is_empty());
    assert!(matches!(
        engine.submit_answer(&id, Answer::Skip),
        Err(EngineError::InvalidState { .. })
    ));
}

#[test]
fn all_skipped_gives_neutral_profile_without_intent_call() {
    let provider = Arc::new(ScriptedProvider::new());
    let engine = engine_with(provider.clone(), manual_clock());
    let id = engine.start_session().unwrap().id;
    let mut next = engine.submit_query(&id, query(SEASIDE)).unwrap();
    while let NextAction::Ask { .. } = next {
        next = engine.submit_answer(&id, Answer::Skip).unwrap();
    }
    let s = engine.get_session(&id).unwrap();
    assert_eq!(s.wtc, Some(WtcVector::neutral()));
    assert_eq!(s.persona, Some(TravelPersona::unspecified()));
    assert!(!provider.calls.lock().unwrap().contains(&Stage::IntentAgent));
    // Neutral openness sits on the threshold, so the green option leads.
    assert_eq!(s.bundle.unwrap().strategy, Strategy::DirectAlignment);
}

#[test]
fn missing_fixture_fails_with_stage_name() {
    let engine = stub_engine(Arc::new(MemoryStore::new()));
    let id = engine.start_session().unwrap().id;
    let err = engine
        .submit_query(&id, query("A query nobody wrote a fixture for"))
        .unwrap_err();
    match err {
        EngineError::StageFailed { stage, message } => {
            assert_eq!(stage, EventStage::QueryClassified);
            assert!(message.contains("a-query-nobody-wrote-a-fixture-for"), "{message}");
        }
        other => panic!("unexpected {other}"),
    }
    let s = engine.get_session(&id).unwrap();
    assert!(matches!(s.state, SessionState::Failed { .. }));
    assert_eq!(s.event_log.last().unwrap().stage, EventStage::Failed);
}

#[test]
fn unusable_reply_is_retried_once_then_fails() {
    let key = fixture_key(SEASIDE);
    let provider = Arc::new(ScriptedProvider::new().with(Stage::RecBaseline, &key, "Sorry, I cannot help with that."));
    let engine = engine_with(provider.clone(), manual_clock());
    let id = engine.start_session().unwrap().id;
    let mut next = engine.submit_query(&id, query(SEASIDE)).unwrap();
    let mut result = Ok(next.clone());
    while let NextAction::Ask { .. } = next {
        result = engine.submit_answer(&id, Answer::Text("yes".into()));
        match &result {
            Ok(n) => next = n.clone(),
            Err(_) => break,
        }
    }
    assert!(matches!(
        result,
        Err(EngineError::StageFailed {
            stage: EventStage::RecBaseline,
            ..
        })
    ));
    let calls = provider.calls.lock().unwrap();
    assert_eq!(calls.iter().filter(|s| **s == Stage::RecBaseline).count(), 2);
    let s = engine.get_session(&id).unwrap();
    assert!(s.persona.is_some(), "intent output kept after a later failure");
    assert!(matches!(s.state, SessionState::Failed { ref reason } if reason.starts_with("rec_baseline")));
}

fn set_json(primary: &str, runner_ups: &[&str]) -> String {
    let rec = |c: &str| serde_json::json!({"city": c, "country": "Portugal", "rationale": "fits"});
    let v = serde_json::json!({"primary": rec(primary), "runner_ups": runner_ups.iter().map(|c| rec(c)).collect::<Vec<_>>()});
    format!("```json\n{v}\n```")
}

#[test]
fn identical_primaries_fall_back_to_runner_ups() {
    let key = fixture_key("Affordable sunny city break in Portugal");
    let answers = [
        Answer::Text("Four days".into()),
        Answer::Text("Food".into()),
        Answer::Text("Sure".into()),
    ];
    let run = |r0: &[&str], r1: &[&str]| {
        let provider = ScriptedProvider::new()
            .with(Stage::RecBaseline, &key, &set_json("Lisbon", r0))
            .with(Stage::RecSustainable, &key, &set_json("Lisbon", r1))
            .with(
                Stage::ExplainAgent,
                "lisbon-vs-faro-direct-alignment",
                "```json\n{\"explanation_text\": \"Lisbon it is.\"}\n```",
            );
        let engine = engine_with(Arc::new(provider), manual_clock());
        let id = engine.start_session().unwrap().id;
        engine
            .submit_query(&id, query("Affordable sunny city break in Portugal"))
            .unwrap();
        let mut out = None;
        for a in &answers {
            out = Some(engine.submit_answer(&id, a.clone()));
        }
        out.unwrap()
    };
    let NextAction::Present { bundle } = run(&[], &["Porto"]).unwrap() else {
        panic!()
    };
    assert_eq!(
        (bundle.strategy, bundle.alternative.city.as_str()),
        (Strategy::DirectAlignment, "Porto")
    );
    let NextAction::Present { bundle } = run(&["Faro"], &[]).unwrap() else {
        panic!()
    };
    assert_eq!(bundle.alternative.city, "Faro");
    assert!(matches!(
        run(&[], &[]),
        Err(EngineError::StageFailed {
            stage: EventStage::Explain,
            ..
        })
    ));
}

#[test]
fn concurrent_operation_on_one_session_is_busy() {
    let mut provider = ScriptedProvider::new();
    provider.delay = Duration::from_millis(300);
    let engine = Arc::new(engine_with(Arc::new(provider), Arc::new(SystemClock::new())));
    let id = engine.start_session().unwrap().id;
    let (e2, id2) = (engine.clone(), id.clone());
    let slow = std::thread::spawn(move || e2.submit_query(&id2, query(SEASIDE)));
    std::thread::sleep(Duration::from_millis(100));
    assert!(matches!(
        engine.submit_query(&id, query(SEASIDE)),
        Err(EngineError::Busy(_))
    ));
    assert_eq!(engine.in_flight(), 1);
    assert!(matches!(slow.join().unwrap(), Ok(NextAction::Ask { .. })));
    assert_eq!(engine.in_flight(), 0);
}

#[test]
fn store_outage_surfaces_as_persistence_error() {
    let store = Arc::new(MemoryStore::new());
    let engine = stub_engine(store.clone());
    let id = engine.start_session().unwrap().id;
    let before = store.get(&id).unwrap().unwrap();
    store.set_offline(true);
    assert!(matches!(
        engine.submit_query(&id, query(SEASIDE)),
        Err(EngineError::Persistence(_))
    ));
    store.set_offline(false);
    assert_eq!(store.get(&id).unwrap().unwrap(), before);
    assert!(matches!(
        engine.submit_query(&id, query(SEASIDE)),
        Ok(NextAction::Ask { .. })
    ));
}
