mod common;

use common::*;
use icdmp::baselines::{dmprec_gradient, ml_learn, ml_objective, Dmprec, MlConfig};
use icdmp::cascades::{apply_mask, simulate_many, InitialScheme, ObservationMask};
use icdmp::graph::{EdgeParams, Topology};
use icdmp::seeding::{stream_rng, Stream};
use icdmp::slicer::{learn, learn_with, Adjoint, GradientOracle, LearnConfig};
use rand::Rng;

#[test]
fn dmprec_and_adjoint_gradients_coincide() {
    for (k, xi) in [(0u64, 0.0), (1, 0.25), (2, 0.25)] {
        let inst = instance(&Topology::RandomRegular { degree: 3, nodes: 20 }, 5, 300, xi, 200 + k);
        let mut rng = stream_rng(k, Stream::Init, 0);
        let at: Vec<f64> = (0..inst.graph.num_edges()).map(|_| rng.gen_range(0.05..0.95)).collect();
        let params = EdgeParams::new(&inst.graph, at).unwrap();
        let (o1, g1) = Adjoint
            .objective_and_gradient(&inst.graph, &params, &inst.stats)
            .unwrap();
        let (o2, g2) = Dmprec
            .objective_and_gradient(&inst.graph, &params, &inst.stats)
            .unwrap();
        assert!((o1 - o2).abs() <= 1e-12 * o1.abs());
        assert!(max_relative_error(&g1, &g2) < 1e-8);
        assert_eq!(dmprec_gradient(&inst.graph, &params, &inst.stats).unwrap(), g2);
    }
}

#[test]
fn dmprec_and_adjoint_learn_the_same_parameters() {
    let inst = instance(&Topology::RandomRegular { degree: 3, nodes: 12 }, 4, 400, 0.25, 5);
    let config = LearnConfig {
        max_iterations: 300,
        ..LearnConfig::default()
    };
    let a = learn::<f64>(&inst.graph, &inst.stats, &config).unwrap();
    let b = learn_with::<f64, _>(&inst.graph, &inst.stats, &config, &Dmprec).unwrap();
    let linf = a
        .params
        .values()
        .iter()
        .zip(b.params.values())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(linf < 1e-4, "{linf}");
}

fn full_cascades(
    topology: &Topology,
    m: usize,
    seed: u64,
) -> (
    icdmp::graph::Graph,
    EdgeParams<f64>,
    Vec<icdmp::cascades::ObservedCascade>,
) {
    let inst = instance(topology, 5, 1, 0.0, seed);
    let cascades = simulate_many(&inst.graph, &inst.truth, &InitialScheme::UniformSource, 5, m, seed).unwrap();
    let mask = ObservationMask::all(inst.graph.num_nodes());
    let observed = cascades.iter().map(|c| apply_mask(c, &mask)).collect();
    (inst.graph, inst.truth, observed)
}

#[test]
fn ml_objective_is_midpoint_convex() {
    let (g, _, data) = full_cascades(&Topology::RandomRegular { degree: 3, nodes: 14 }, 200, 8);
    let mut rng = stream_rng(8, Stream::Init, 0);
    for _ in 0..20 {
        let a: Vec<f64> = (0..g.num_edges()).map(|_| rng.gen_range(0.01..0.99)).collect();
        let b: Vec<f64> = (0..g.num_edges()).map(|_| rng.gen_range(0.01..0.99)).collect();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let f = |v: &[f64]| ml_objective(&data, &g, &EdgeParams::new(&g, v.to_vec()).unwrap()).unwrap();
        assert!(f(&mid) <= 0.5 * (f(&a) + f(&b)) + 1e-9);
    }
}

#[test]
fn ml_error_shrinks_with_more_cascades() {
    let topo = Topology::RegularTree { degree: 3, nodes: 20 };
    let mut errors = Vec::new();
    for m in [200usize, 20_000] {
        let (g, truth, data) = full_cascades(&topo, m, 21);
        let out = ml_learn(&data, &g, &MlConfig::default()).unwrap();
        assert!(out.converged);
        let err: f64 = out
            .params
            .values()
            .iter()
            .zip(truth.values())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / g.num_edges() as f64;
        errors.push(err);
    }
    assert!(errors[1] < errors[0], "{errors:?}");
    assert!(errors[1] < 0.05);
}
