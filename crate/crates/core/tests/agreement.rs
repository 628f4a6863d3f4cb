//! Finite-graph simulation against the limiting system.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use sparse_mfc::degree::DegreeDistribution;
use sparse_mfc::graphs::{partition_classes, sample_chung_lu_from, Graph};
use sparse_mfc::meanfield::{rollout, LimitModel, PolicyEnsemble, StepMode};
use sparse_mfc::problems::problem_by_name;
use sparse_mfc::seeding;
use sparse_mfc::simulate::{empirical_mf, estimate_objective, init_system, sim_step};

/// Uniform simple k-regular graph by rejection on the pairing model.
fn regular(n: usize, k: usize, seed: u64) -> Graph {
    let mut rng = seeding::stream(&[seed]);
    loop {
        let mut stubs: Vec<u32> = (0..n).flat_map(|i| std::iter::repeat_n(i as u32, k)).collect();
        stubs.shuffle(&mut rng);
        let mut edges = BTreeSet::new();
        let simple = stubs.chunks(2).all(|c| {
            let (a, b) = (c[0].min(c[1]), c[0].max(c[1]));
            a != b && edges.insert((a, b))
        });
        if simple {
            return Graph::from_edges(n, edges).unwrap();
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// Initial states are i.i.d., so one step on any fixed 3-regular graph has the
// limiting law in expectation.
#[test]
fn one_step_on_a_regular_graph_matches_the_limit() {
    let p = problem_by_name("sis").unwrap();
    let n = 20_000;
    let g = regular(n, 3, 1);
    let part = partition_classes(&g, 4).unwrap();
    let model = LimitModel::new(&DegreeDistribution::point_mass(3).unwrap(), 4).unwrap();
    let pi = PolicyEnsemble::uniform(4, 2, 2);
    let lim = rollout(&[pi.clone()], &p, &model, StepMode::Exact).unwrap();
    let s0 = init_system(&g, &p, 7);
    let (s1, _) = sim_step(&g, &part, &s0, &pi, &p).unwrap();
    let emp = empirical_mf(&s1, &part, 2);
    let dev = max_abs_diff(emp.per_class[2].as_ref().unwrap(), lim.trajectory[1].class(2));
    // five binomial standard deviations at p ≈ 0.5
    assert!(dev < 5.0 * (0.25 / n as f64).sqrt(), "deviation {dev}");
}

// Rewiring the graph every step removes the dynamical correlations a fixed
// graph builds up, which leaves only sampling noise over the whole horizon.
#[test]
fn annealed_regular_graph_tracks_the_limit_over_the_horizon() {
    let p = problem_by_name("sis").unwrap();
    let pi = PolicyEnsemble::uniform(4, 2, 2);
    let model = LimitModel::new(&DegreeDistribution::point_mass(3).unwrap(), 4).unwrap();
    let lim = rollout(&[pi.clone()], &p, &model, StepMode::Exact).unwrap();
    let worst = |n: usize| {
        let g0 = regular(n, 3, 1);
        let part = partition_classes(&g0, 4).unwrap();
        let mut state = init_system(&g0, &p, 7);
        let mut worst: f64 = 0.0;
        for t in 0..p.horizon {
            let g = regular(n, 3, 100 + t as u64);
            state = sim_step(&g, &part, &state, &pi, &p).unwrap().0;
            let emp = empirical_mf(&state, &part, 2);
            worst = worst.max(max_abs_diff(emp.per_class[2].as_ref().unwrap(), lim.trajectory[t + 1].class(2)));
        }
        worst
    };
    let large = worst(20_000);
    assert!(large < 0.025, "max deviation {large} at N=20000");
    let small = worst(1_250);
    assert!(small > large, "deviation did not shrink with N: {small} vs {large}");
}

// Always protecting susceptible agents keeps the epidemic small, where the
// finite objective sits within Monte Carlo error of the limiting one.
#[test]
fn protective_policy_objective_matches_the_limit_at_n_4000() {
    let p = problem_by_name("sis").unwrap();
    let k_star = 10;
    let protect = PolicyEnsemble::constant(k_star, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let dist = DegreeDistribution::zeta(2.5).unwrap();
    let mut gaps = Vec::new();
    for seed in 0..5u64 {
        let g = sample_chung_lu_from(&dist, 4000, 100 + seed).unwrap();
        let part = partition_classes(&g, k_star as u32).unwrap();
        let model = LimitModel::new(&g.degree_distribution().unwrap(), k_star as u32).unwrap();
        let j = rollout(&[protect.clone()], &p, &model, StepMode::Exact).unwrap().objective;
        let est = estimate_objective(&g, &part, &[protect.clone()], &p, 20, 7 + seed).unwrap();
        let band = 3.0 * est.std / (20f64).sqrt();
        gaps.push((est.mean - j, band));
    }
    let (gap, band) = gaps.iter().fold((0.0, 0.0), |(a, b), (g, s)| (a + g / 5.0, b + s / 5.0));
    assert!(gap.abs() <= band, "mean gap {gap}, band {band}, per graph {gaps:?}");
}
