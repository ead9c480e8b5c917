use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use hiercontrol::control::{LaxMilgram, LinearData};
use hiercontrol::exec::Exec;
use hiercontrol::scenario::{Scenario, ScenarioConfig};
use hiercontrol::study::{convergence_study, StudyMode};
use hiercontrol::weights::weights_for;

fn scenario(n_interior: usize, m_steps: usize) -> Scenario {
    Scenario::from_config(ScenarioConfig::reference()).unwrap().resampled(n_interior, m_steps).unwrap()
}

fn lax_milgram_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("lax_milgram_apply");
    for (n, m) in [(49, 100), (99, 200)] {
        let sc = scenario(n, m);
        let (_, _, ws) = weights_for(&sc).unwrap();
        for exec in [Exec::Sequential, Exec::Parallel] {
            let lm = LaxMilgram::new(&sc, &ws, exec);
            let z: Vec<f64> = (0..lm.len()).map(|k| (k as f64 * 0.37).sin()).collect();
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), format!("{n}x{m}")), &z, |b, z| {
                b.iter(|| lm.apply(black_box(z)))
            });
        }
    }
    group.finish();
}

fn lax_milgram_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("lax_milgram_solve");
    group.sample_size(10);
    let sc = scenario(49, 100);
    let (_, _, ws) = weights_for(&sc).unwrap();
    let data = LinearData::from_scenario(&sc);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let lm = LaxMilgram::new(&sc, &ws, exec);
        group.bench_function(format!("{exec:?}"), |b| b.iter(|| lm.solve(black_box(&data), None).unwrap()));
    }
    group.finish();
}

fn study_levels(c: &mut Criterion) {
    let mut group = c.benchmark_group("convergence_study");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| convergence_study(0.5, 0.5, 49, 100, 3, StudyMode::Combined, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, lax_milgram_apply, lax_milgram_solve, study_levels);
criterion_main!(benches);
