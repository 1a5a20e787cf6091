use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::embed::{cosine_similarity, Embedder};
use super::render::{conversation_text, intent_text};
use super::{EvalError, Execution};
use crate::domain::{Choice, Likert, Strategy};
use crate::orchestrator::{EventStage, Session};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub embedder: String,
    pub sim_conv_explanation: f64,
    pub sim_conv_intent: f64,
    pub sim_intent_explanation: f64,
    pub session_count: usize,
    /// Sessions left out because they never reached an explanation.
    pub skipped_sessions: usize,
}

/// Per-session similarities: (conversation, explanation), (conversation,
/// intent), (intent, explanation).
pub type PairScores = [f64; 3];

/// The three texts compared for one session, or `None` when the session has
/// no explanation yet.
pub fn alignment_texts(s: &Session) -> Option<[String; 3]> {
    let query = s.query.as_ref()?;
    let bundle = s.bundle.as_ref()?;
    let persona = s.persona.as_ref()?;
    let wtc = s.wtc.as_ref()?;
    let signals = s.signals.clone().unwrap_or_default();
    Some([
        conversation_text(&query.text, &s.transcript),
        intent_text(persona, wtc, &signals),
        bundle.explanation_text.clone(),
    ])
}

fn session_scores(s: &Session, texts: &[String; 3], embedder: &dyn Embedder) -> Result<PairScores, EvalError> {
    let [conv, intent, expl] = texts.each_ref().map(|t| embedder.embed(t));
    let cos = |a: &[f64], b: &[f64]| {
        cosine_similarity(a, b).map_err(|source| EvalError::Similarity {
            session: s.id.to_string(),
            source,
        })
    };
    Ok([cos(&conv, &expl)?, cos(&conv, &intent)?, cos(&intent, &expl)?])
}

pub fn alignment_report(sessions: &[Session], embedder: &dyn Embedder) -> Result<AlignmentReport, EvalError> {
    alignment_report_with(sessions, embedder, Execution::Sequential)
}

/// Means of the per-session cosine similarities. Scores are summed in input
/// order whichever execution mode computed them.
pub fn alignment_report_with(
    sessions: &[Session],
    embedder: &dyn Embedder,
    exec: Execution,
) -> Result<AlignmentReport, EvalError> {
    let eligible: Vec<(&Session, [String; 3])> = sessions
        .iter()
        .filter_map(|s| alignment_texts(s).map(|t| (s, t)))
        .collect();
    if eligible.is_empty() {
        return Err(EvalError::NoSessions);
    }
    let scores = exec.map(&eligible, |(s, t)| session_scores(s, t, embedder));
    let mut sums = [0.0; 3];
    for score in scores {
        let score = score?;
        for (acc, v) in sums.iter_mut().zip(score) {
            *acc += v;
        }
    }
    let n = eligible.len() as f64;
    Ok(AlignmentReport {
        embedder: embedder.name().to_owned(),
        sim_conv_explanation: sums[0] / n,
        sim_conv_intent: sums[1] / n,
        sim_intent_explanation: sums[2] / n,
        session_count: eligible.len(),
        skipped_sessions: sessions.len() - eligible.len(),
    })
}

/// Counts per rating 1..=5 (index 0 holds the count of 1s).
pub type Histogram = [usize; 5];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertHistograms {
    pub cq_quality: Histogram,
    pub explanation_quality: Histogram,
    pub reconsideration: Histogram,
}

/// Choice and rating analytics over sessions with a recorded choice.
///
/// Denominators:
/// - `primary_selection_rate`: all `n` sessions with a choice.
/// - `r1_as_primary_rate`: sessions that chose the primary; numerator counts
///   those whose presented primary belongs to the context-aware set.
/// - `nudge_switch_rate`: sessions that received a counterfactual
///   explanation; numerator counts those that picked the alternative.
///
/// A rate whose denominator is zero is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub n: usize,
    pub primary_selection_rate: f64,
    pub r1_as_primary_rate: Option<f64>,
    pub nudge_switch_rate: Option<f64>,
    pub primary_count: usize,
    pub r1_as_primary_count: usize,
    pub nudge_sessions: usize,
    pub nudge_switches: usize,
    pub likert_histograms: LikertHistograms,
    /// Sessions with a choice but no feedback form; histograms sum to
    /// `n - omitted_responses`.
    pub omitted_responses: usize,
}

fn rate(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn bump(h: &mut Histogram, l: Likert) {
    h[usize::from(l.get()) - 1] += 1;
}

pub fn feedback_report(sessions: &[Session]) -> Result<FeedbackReport, EvalError> {
    let mut n = 0;
    let (mut primary, mut r1_primary, mut nudged, mut switched, mut omitted) = (0, 0, 0, 0, 0);
    let mut hist = LikertHistograms::default();
    for s in sessions {
        let Some(choice) = s.choice else { continue };
        n += 1;
        let strategy = s.bundle.as_ref().map(|b| b.strategy);
        if choice == Choice::Primary {
            primary += 1;
            let in_r1 = match (&s.bundle, &s.r1) {
                (Some(b), Some(r1)) => r1.contains_city(&b.chosen.city),
                _ => false,
            };
            if in_r1 {
                r1_primary += 1;
            }
        }
        if strategy == Some(Strategy::CounterfactualNudging) {
            nudged += 1;
            if choice == Choice::Alternative {
                switched += 1;
            }
        }
        match &s.feedback {
            Some(f) => {
                bump(&mut hist.cq_quality, f.cq_quality);
                bump(&mut hist.explanation_quality, f.explanation_quality);
                bump(&mut hist.reconsideration, f.reconsideration);
            }
            None => omitted += 1,
        }
    }
    if n == 0 {
        return Err(EvalError::NoSessions);
    }
    Ok(FeedbackReport {
        n,
        primary_selection_rate: primary as f64 / n as f64,
        r1_as_primary_rate: rate(r1_primary, primary),
        nudge_switch_rate: rate(switched, nudged),
        primary_count: primary,
        r1_as_primary_count: r1_primary,
        nudge_sessions: nudged,
        nudge_switches: switched,
        likert_histograms: hist,
        omitted_responses: omitted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub stage: EventStage,
    pub count: usize,
    pub mean_ms: f64,
    pub max_ms: f64,
    pub provider_mean_ms: f64,
    /// Duration minus provider time, per event.
    pub overhead_mean_ms: f64,
    pub overhead_max_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Sessions with at least one logged event. Zero means every other
    /// field is zero too.
    pub session_count: usize,
    pub stages: Vec<StageLatency>,
    /// Sum of the intent, recommendation and explanation stages per session,
    /// over sessions that ran any of them.
    pub end_to_end_mean_ms: f64,
    pub end_to_end_max_ms: f64,
    pub end_to_end_sessions: usize,
    pub total_ms: f64,
    pub provider_ms: f64,
    pub overhead_ms: f64,
}

#[derive(Default)]
struct StageAcc {
    count: usize,
    total: f64,
    max: f64,
    provider: f64,
    overhead_total: f64,
    overhead_max: f64,
}

pub fn latency_report(sessions: &[Session]) -> LatencyReport {
    let mut acc: BTreeMap<EventStage, StageAcc> = BTreeMap::new();
    let mut report = LatencyReport::default();
    let mut e2e = Vec::new();
    for s in sessions.iter().filter(|s| !s.event_log.is_empty()) {
        report.session_count += 1;
        let mut pipeline = None;
        for e in &s.event_log {
            let provider = e.provider_ms.unwrap_or(0.0);
            let overhead = e.duration_ms - provider;
            let a = acc.entry(e.stage).or_default();
            a.count += 1;
            a.total += e.duration_ms;
            a.max = a.max.max(e.duration_ms);
            a.provider += provider;
            a.overhead_total += overhead;
            a.overhead_max = a.overhead_max.max(overhead);
            report.total_ms += e.duration_ms;
            report.provider_ms += provider;
            if EventStage::PIPELINE.contains(&e.stage) {
                *pipeline.get_or_insert(0.0) += e.duration_ms;
            }
        }
        e2e.extend(pipeline);
    }
    report.overhead_ms = report.total_ms - report.provider_ms;
    report.stages = acc
        .into_iter()
        .map(|(stage, a)| {
            let n = a.count as f64;
            StageLatency {
                stage,
                count: a.count,
                mean_ms: a.total / n,
                max_ms: a.max,
                provider_mean_ms: a.provider / n,
                overhead_mean_ms: a.overhead_total / n,
                overhead_max_ms: a.overhead_max,
            }
        })
        .collect();
    if !e2e.is_empty() {
        report.end_to_end_sessions = e2e.len();
        report.end_to_end_mean_ms = e2e.iter().sum::<f64>() / e2e.len() as f64;
        report.end_to_end_max_ms = e2e.iter().copied().fold(0.0, f64::max);
    }
    report
}
