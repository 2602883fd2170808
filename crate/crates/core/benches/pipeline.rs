use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use linelist_core::address::{GeocodeCache, Gazetteer, Geocoder, StubGeocoder};
use linelist_core::anonymizer::{AnonConfig, HashCost};
use linelist_core::ingest::ingest_reader;
use linelist_core::synth::{generate_corpus, SynthOptions, SYNTH_CONFIG};
use linelist_core::{run_pipeline, CleanConfig, ExecMode, Resources, YearContext};

const RECORDS: usize = 4_000;

fn modes() -> Vec<(&'static str, ExecMode)> {
    let mut modes = vec![("sequential", ExecMode::Sequential)];
    if cfg!(feature = "parallel") {
        modes.push(("parallel-4", ExecMode::with_workers(4)));
    }
    modes
}

fn resources(exec: ExecMode) -> Resources {
    Resources {
        gazetteer: Gazetteer::bundled(),
        geocoder: Geocoder::new(Some(Box::new(StubGeocoder::synthetic())), GeocodeCache::new()),
        anon: AnonConfig::new("bench-key-0123456789", HashCost::default(), 16, "batch-2019").unwrap(),
        exec,
    }
}

fn clean(c: &mut Criterion) {
    let corpus = generate_corpus(&SynthOptions::new(RECORDS, 2019, 1), &Gazetteer::bundled(), ExecMode::Sequential)
        .unwrap();
    let config = CleanConfig::parse(SYNTH_CONFIG).unwrap();
    let ingested = ingest_reader(corpus.csv.as_bytes(), &config.mapping, "bench.csv").unwrap();
    let ctx = YearContext::new(2019).unwrap();

    let mut group = c.benchmark_group("clean");
    group.sample_size(10);
    group.throughput(Throughput::Elements(RECORDS as u64));
    for (name, mode) in modes() {
        // Fresh cache per mode so neither run benefits from the other's lookups.
        let res = resources(mode);
        group.bench_with_input(BenchmarkId::from_parameter(name), &res, |b, res| {
            b.iter(|| black_box(run_pipeline(&ingested, &ctx, &config, res).unwrap()))
        });
    }
    group.finish();
}

fn synth(c: &mut Criterion) {
    let g = Gazetteer::bundled();
    let opts = SynthOptions::new(RECORDS, 2019, 1);
    let mut group = c.benchmark_group("synth");
    group.sample_size(10);
    group.throughput(Throughput::Elements(RECORDS as u64));
    for (name, mode) in modes() {
        group.bench_function(name, |b| b.iter(|| black_box(generate_corpus(&opts, &g, mode).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, clean, synth);
criterion_main!(benches);
