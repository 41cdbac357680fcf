use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dissipon_core::bcf::spectral_factorization;
use dissipon_core::fitter::{fit_physical, BcfSamples, FitConfig};
use dissipon_core::fixtures::{chain_counterexample, sigma_x, sigma_z};
use dissipon_core::fock::HilbertLayout;
use dissipon_core::heom::build_generator;
use dissipon_core::hops::{propagate_nuhops, HopsSystem, NoiseGenerator};
use dissipon_core::integrate::{uniform_grid, Integrator};
use dissipon_core::lindblad::{build_liouvillian, LindbladProblem};
use dissipon_core::linalg::{c, CMat};
use dissipon_core::pseudomode::assemble_pseudomode;

fn seeded_state(dim: usize) -> CMat {
    CMat::from_fn(dim, dim, |i, j| c(((i * 7 + j * 3) % 11) as f64 * 0.01, ((i + 2 * j) % 5) as f64 * 0.01))
}

fn heom_apply(cr: &mut Criterion) {
    let bcf = chain_counterexample();
    for depth in [4, 8] {
        let layout = HilbertLayout::excitation(2, 2, depth).unwrap();
        let gen = build_generator(&(sigma_x() * c(0.5, 0.0)), &sigma_z(), &bcf, &layout).unwrap();
        let rho = seeded_state(layout.dim());
        cr.bench_function(&format!("heom_apply/depth{depth}"), |b| b.iter(|| gen.apply(black_box(&rho))));
    }
}

fn lindblad_apply(cr: &mut Criterion) {
    let model = assemble_pseudomode(&spectral_factorization(&chain_counterexample()).unwrap()).unwrap();
    for cap in [4, 6] {
        let prob = LindbladProblem {
            h_sys: sigma_x() * c(0.5, 0.0),
            s_op: sigma_z(),
            model: model.clone(),
            layout: HilbertLayout::boxed(2, vec![cap, cap]).unwrap(),
        };
        let l = build_liouvillian(&prob).unwrap();
        let rho = seeded_state(prob.layout.dim());
        cr.bench_function(&format!("lindblad_apply/cap{cap}"), |b| b.iter(|| l.apply(black_box(&rho))));
    }
}

fn fit(cr: &mut Criterion) {
    let samples = BcfSamples::from_bcf(&chain_counterexample(), uniform_grid(10.0, 199)).unwrap();
    let config = FitConfig { restarts: 4, ..FitConfig::default() };
    let mut group = cr.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("physical_n2", |b| b.iter(|| fit_physical(black_box(&samples), 2, &config).unwrap()));
    group.finish();
}

fn noise(cr: &mut Criterion) {
    let p = spectral_factorization(&chain_counterexample()).unwrap();
    let gen = NoiseGenerator::new(&p, 0.01).unwrap();
    let mut stream = 0u64;
    cr.bench_function("noise/500_steps", |b| {
        b.iter(|| {
            stream += 1;
            gen.sample(500, 1, stream)
        })
    });
}

fn nuhops(cr: &mut Criterion) {
    let bcf = chain_counterexample();
    let p = spectral_factorization(&bcf).unwrap();
    let system = HopsSystem::new(
        &(sigma_x() * c(0.5, 0.0)),
        &sigma_z(),
        &bcf,
        &HilbertLayout::excitation(2, 2, 6).unwrap(),
    )
    .unwrap();
    let path = NoiseGenerator::new(&p, 0.01).unwrap().sample(500, 1, 0);
    let psi0 = [c(1.0, 0.0), c(0.0, 0.0)];
    let mut group = cr.benchmark_group("nuhops");
    group.sample_size(20);
    group.bench_function("trajectory_t5", |b| {
        b.iter(|| propagate_nuhops(&system, &psi0, black_box(&path), Integrator::default(), 50).unwrap())
    });
    group.finish();
}

criterion_group!(benches, heom_apply, lindblad_apply, fit, noise, nuhops);
criterion_main!(benches);
