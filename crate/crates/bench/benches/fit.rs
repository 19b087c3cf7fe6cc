use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use editlight::lightfit::{fit_panorama, refine_adam, AdamConfig, FitConfig, FitContext};
use editlight::render::{RenderSettings, Scene};
use editlight::synthetic::DiskLight;
use editlight::{Direction, ParametricLight};

fn fit(c: &mut Criterion) {
    let disk = DiskLight {
        direction: Direction::from_angles(-1.2, 0.6),
        angular_radius: 0.12,
        radiance: [50.0; 3],
        ambient: [0.25; 3],
    };
    let pano = disk.render(128).unwrap();
    let cfg = FitConfig::default();
    let ctx = FitContext::new(
        Scene::grid3x3(),
        &pano,
        RenderSettings::square(cfg.resolution, cfg.spp, cfg.seed),
        cfg.reference_spp,
    )
    .unwrap();
    let start = ParametricLight::from_angular_radius(
        Direction::from_angles(-1.1, 0.65),
        3.0,
        0.15,
        [40.0; 3],
        [0.2; 3],
    )
    .unwrap();

    let mut g = c.benchmark_group("fit");
    g.sample_size(10);
    g.bench_function("loss", |b| b.iter(|| ctx.loss(black_box(&start)).unwrap()));
    let one = AdamConfig { iters: 1, ..AdamConfig::default() };
    g.bench_function("adam_step", |b| b.iter(|| refine_adam(&ctx, black_box(&start), &one).unwrap()));
    let quick = FitConfig { adam: AdamConfig { iters: 20, ..AdamConfig::default() }, ..FitConfig::default() };
    g.bench_function("panorama_20_iters", |b| b.iter(|| fit_panorama(black_box(&pano), None, &quick).unwrap()));
    g.finish();
}

criterion_group!(benches, fit);
criterion_main!(benches);
