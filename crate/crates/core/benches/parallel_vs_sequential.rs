use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use faceforge_core::distance::{pairwise_distances, DistanceOptions};
use faceforge_core::normals::compute_normals;
use faceforge_core::render::{make_three_channel, ImageSpec};
use faceforge_core::synthetic;
use faceforge_core::views::{render_view, CameraPose};

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let all = rayon::current_num_threads();
    let mut v = vec![("sequential".to_string(), 1)];
    if all > 1 {
        v.push((format!("parallel-{all}"), all));
    }
    v.into_iter()
        .map(|(name, n)| (name, rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()))
        .collect()
}

fn distances(c: &mut Criterion) {
    let set = synthetic::face_set(12, 1, 24, 1);
    let opts = DistanceOptions { subsample_size: 150, seed: 1, ..Default::default() };
    let mut g = c.benchmark_group("pairwise_distances");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| pool.install(|| pairwise_distances(&set, &opts).unwrap()))
        });
    }
    g.finish();
}

fn views(c: &mut Criterion) {
    let scan = synthetic::face_set(1, 1, 100, 2).into_faces().remove(0).cloud;
    let pose = CameraPose::new(30.0, 15.0, 800.0).unwrap();
    let mut g = c.benchmark_group("view_and_image");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("hpr", &name), |b| {
            b.iter(|| pool.install(|| render_view(&scan, &pose, 2.0, "s").unwrap()))
        });
        let mut view = render_view(&scan, &pose, 2.0, "s").unwrap();
        g.bench_function(BenchmarkId::new("normals", &name), |b| {
            b.iter(|| pool.install(|| compute_normals(&view.cloud, 12).unwrap()))
        });
        view.cloud = compute_normals(&view.cloud, 12).unwrap().cloud;
        g.bench_function(BenchmarkId::new("image", &name), |b| {
            b.iter(|| pool.install(|| make_three_channel(&view, &ImageSpec::default(), None).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, distances, views);
criterion_main!(benches);
