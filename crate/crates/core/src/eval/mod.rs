//! Offline evaluation: scripted replays and the alignment, feedback and
//! latency reports computed over stored sessions.

mod embed;
pub mod reference;
mod render;
mod replay;
mod report;

use thiserror::Error;

pub use embed::{
    cosine_similarity, fnv1a, tokens, ConstantEmbedder, Embedder, HashedBagOfWords, SimilarityError, DEFAULT_DIMENSION,
};
pub use render::{conversation_text, intent_text, SKIPPED_ANSWER};
pub use replay::{replay, replay_batch, ReplayError, ReplayScript, ScriptAnswer};
pub use report::{
    alignment_report, alignment_report_with, alignment_texts, feedback_report, latency_report, AlignmentReport,
    FeedbackReport, Histogram, LatencyReport, LikertHistograms, PairScores, StageLatency,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no eligible sessions")]
    NoSessions,
    #[error("session {session}: {source}")]
    Similarity {
        session: String,
        #[source]
        source: SimilarityError,
    },
}

/// How batch work is scheduled. `Parallel` uses the rayon pool when the
/// `parallel` feature is enabled and runs sequentially otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    Parallel,
}

impl Execution {
    /// Maps `f` over `items`, preserving order.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }
}
