use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use plaquekit::pipeline::{analyze_image, detect_wells, PipelineConfig, ProbSource, WellSource};
use plaquekit::titration::SchemeSpec;
use plaquekit_bench::plate;

fn plate_analysis(c: &mut Criterion) {
    let p = plate(0);
    let layout = p.truth.layout;
    let scheme = SchemeSpec::from_json(r#"{"volume_ml": 0.1, "start_exponent": 1, "fold": 10, "replicates": 4}"#)
        .unwrap()
        .to_scheme(layout)
        .unwrap();
    let cfg = PipelineConfig::default();
    let mut g = c.benchmark_group("plate_3x4");
    g.sample_size(10);
    g.bench_function("detect_wells", |b| {
        b.iter(|| detect_wells(black_box(&p.image), &WellSource::Classical, Some(layout), &cfg.wells).unwrap())
    });
    g.bench_function("analyze_image", |b| {
        b.iter(|| {
            analyze_image(
                "bench",
                black_box(&p.image),
                layout,
                &scheme,
                &WellSource::Classical,
                &ProbSource::Classical,
                &cfg,
            )
            .unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, plate_analysis);
criterion_main!(benches);
