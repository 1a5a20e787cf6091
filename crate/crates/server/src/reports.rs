use std::fmt;
use std::str::FromStr;

use clap::ValueEnum;
use serde_json::Value;
use wayfare_core::eval::{
    alignment_report_with, feedback_report, latency_report, EvalError, Execution, HashedBagOfWords,
};
use wayfare_core::orchestrator::Session;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    Alignment,
    Feedback,
    Latency,
}

impl ReportKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReportKind::Alignment => "alignment",
            ReportKind::Feedback => "feedback",
            ReportKind::Latency => "latency",
        }
    }
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReportKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Self as ValueEnum>::from_str(s, true).map_err(|_| format!("unknown report kind {s:?}"))
    }
}

pub fn build_report(kind: ReportKind, sessions: &[Session]) -> Result<Value, EvalError> {
    let value = match kind {
        ReportKind::Alignment => serde_json::to_value(alignment_report_with(
            sessions,
            &HashedBagOfWords::default(),
            Execution::Parallel,
        )?),
        ReportKind::Feedback => serde_json::to_value(feedback_report(sessions)?),
        ReportKind::Latency => serde_json::to_value(latency_report(sessions)),
    };
    Ok(value.expect("reports serialize"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_by_name() {
        for kind in [ReportKind::Alignment, ReportKind::Feedback, ReportKind::Latency] {
            assert_eq!(kind.as_str().parse::<ReportKind>().unwrap(), kind);
        }
        assert!("Latency".parse::<ReportKind>().is_ok());
        assert!("popularity".parse::<ReportKind>().is_err());
        assert!(matches!(
            build_report(ReportKind::Feedback, &[]),
            Err(EvalError::NoSessions)
        ));
        assert_eq!(build_report(ReportKind::Latency, &[]).unwrap()["session_count"], 0);
    }
}
