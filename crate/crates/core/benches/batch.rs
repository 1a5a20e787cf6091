use std::path::PathBuf;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wayfare_core::clock::ManualClock;
use wayfare_core::eval::{alignment_report_with, replay_batch, Execution, HashedBagOfWords, ReplayScript};
use wayfare_core::orchestrator::{Engine, Session};
use wayfare_core::runtime::EngineConfig;
use wayfare_core::store::MemoryStore;

fn engine() -> Engine {
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2025, 5, 1, 9, 0, 0).unwrap()));
    EngineConfig::bundled_stub()
        .build_engine(Arc::new(MemoryStore::new()), clock)
        .expect("stub engine")
}

fn scripts(copies: usize) -> Vec<ReplayScript> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/scripts");
    let mut paths: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    let base: Vec<ReplayScript> = paths.iter().map(|p| ReplayScript::load(p).unwrap()).collect();
    base.iter().cycle().take(base.len() * copies).cloned().collect()
}

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_replay(c: &mut Criterion) {
    let engine = engine();
    let scripts = scripts(8);
    let mut group = c.benchmark_group("replay_batch");
    group.sample_size(20);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::new(name, scripts.len()), &mode, |b, &mode| {
            b.iter(|| replay_batch(&engine, &scripts, mode))
        });
    }
    group.finish();
}

fn bench_alignment(c: &mut Criterion) {
    let engine = engine();
    let sessions: Vec<Session> = replay_batch(&engine, &scripts(64), Execution::Parallel)
        .into_iter()
        .map(Result::unwrap)
        .collect();
    let embedder = HashedBagOfWords::default();
    let mut group = c.benchmark_group("alignment_report");
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::new(name, sessions.len()), &mode, |b, &mode| {
            b.iter(|| alignment_report_with(&sessions, &embedder, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_replay, bench_alignment);
criterion_main!(benches);
