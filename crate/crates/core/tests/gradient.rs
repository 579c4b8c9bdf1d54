#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use icdmp::graph::{EdgeParams, Topology};
use icdmp::slicer::{
    adjoint_backward, forward_all, gradient, gradient_with_path, Adjoint, GradientOracle, GradientPath,
};

#[test]
fn adjoint_gradient_matches_finite_differences() {
    for (k, xi) in [(0u64, 0.0), (1, 0.25), (2, 0.25)] {
        let inst = instance(&Topology::RandomRegular { degree: 3, nodes: 20 }, 5, 500, xi, 100 + k);
        let at: Vec<f64> = inst.truth.values().iter().map(|a| a.clamp(0.05, 0.95)).collect();
        let params = EdgeParams::new(&inst.graph, at.clone()).unwrap();
        let (_, g) = Adjoint
            .objective_and_gradient(&inst.graph, &params, &inst.stats)
            .unwrap();
        let fd = central_differences(&at, 1e-5, |v| objective_at(&inst.graph, v, &inst.stats));
        let err = max_relative_error(&g, &fd);
        assert!(err < 1e-5, "xi={xi}: relative error {err}");
    }
}

#[test]
fn fast_and_full_paths_agree() {
    let inst = instance(&Topology::SquareLattice { side: 5 }, 6, 400, 0.2, 7);
    let at: Vec<f64> = inst.truth.values().iter().map(|a| 0.05 + 0.9 * a).collect();
    let params = EdgeParams::new(&inst.graph, at).unwrap();
    let states = forward_all(&inst.graph, &params, &inst.stats).unwrap();
    let adjoints: Vec<_> = states
        .iter()
        .zip(&inst.stats.classes)
        .map(|(s, c)| adjoint_backward(&inst.graph, &params, s, c).unwrap())
        .collect();
    let fast = gradient_with_path(&inst.graph, &params, &states, &adjoints, GradientPath::Fast).unwrap();
    let full = gradient_with_path(&inst.graph, &params, &states, &adjoints, GradientPath::Full).unwrap();
    assert!(max_relative_error(&fast, &full) < 1e-10);
    assert_eq!(gradient(&inst.graph, &params, &states, &adjoints).unwrap(), fast);
}

#[test]
fn zero_alpha_uses_product_form() {
    use icdmp::cascades::{apply_mask, build_class_stats, simulate_many, InitialScheme, ObservationMask};
    // data generated with the two edges closed, so the evaluation point is feasible
    let inst = instance(&Topology::RandomRegular { degree: 3, nodes: 12 }, 4, 1, 0.0, 3);
    let mut at: Vec<f64> = inst.truth.values().iter().map(|a| 0.1 + 0.8 * a).collect();
    at[0] = 0.0;
    at[3] = 0.0;
    let params = EdgeParams::new(&inst.graph, at.clone()).unwrap();
    let cascades = simulate_many(&inst.graph, &params, &InitialScheme::UniformSource, 4, 300, 3).unwrap();
    let mask = ObservationMask::all(12);
    let observed: Vec<_> = cascades.iter().map(|c| apply_mask(c, &mask)).collect();
    let stats = build_class_stats(&observed, 12, 4).unwrap();
    let (_, g) = Adjoint.objective_and_gradient(&inst.graph, &params, &stats).unwrap();
    // one-sided difference at the boundary
    let h = 1e-7;
    let f0 = objective_at(&inst.graph, &at, &stats);
    for e in [0, 3] {
        let mut up = at.clone();
        up[e] += h;
        let fd = (objective_at(&inst.graph, &up, &stats) - f0) / h;
        assert!(
            (g[e] - fd).abs() < 1e-4 * fd.abs().max(1.0),
            "edge {e}: {} vs {fd}",
            g[e]
        );
    }
}

#[test]
fn message_multipliers_match_perturb_and_replay() {
    // dO/d pm[d](t) with the forward recursion replayed from the perturbed message on.
    use icdmp::cascades::InitialCondition;
    use icdmp::graph::Graph;
    let g = Graph::from_edges(&[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
    let alpha = [0.7, 0.4, 0.6, 0.5];
    let horizon = 4;
    let params = EdgeParams::new(&g, alpha.to_vec()).unwrap();
    // on a path node k activates at time k or never
    let inst_counts = [
        [0u64, 0, 0, 0, 20],
        [0, 14, 0, 0, 6],
        [0, 0, 8, 0, 12],
        [0, 0, 0, 4, 16],
        [0, 0, 0, 0, 20],
    ];
    let class = icdmp::cascades::CascadeClass {
        initial: InitialCondition::SingleSource(0),
        num_cascades: 20,
        nodes: (1..5)
            .map(|i| icdmp::cascades::NodeCounts {
                node: i,
                counts: inst_counts[i].to_vec(),
            })
            .collect(),
    };
    let state = icdmp::dmp::dmp_forward(&g, &params, &class.initial, horizon).unwrap();
    let adj = adjoint_backward(&g, &params, &state, &class).unwrap();

    // replay: messages from t0 on, with pm[d](t0) overridden
    let replay = |d0: usize, t0: usize, delta: f64| -> f64 {
        let n = 5;
        let mut pm = vec![vec![0.0; horizon + 1]; g.num_directed()];
        let mut p = vec![vec![0.0; horizon + 1]; n];
        for d in 0..g.num_directed() {
            pm[d] = state.message_row(d).to_vec();
        }
        for i in 0..n {
            p[i] = state.marginal_row(i).to_vec();
        }
        pm[d0][t0] += delta;
        for t in t0 + 1..=horizon {
            for j in 0..n {
                let incs = g.incidences(j);
                let f: Vec<f64> = incs
                    .iter()
                    .map(|x| 1.0 - alpha[x.edge] * pm[x.incoming()][t - 1])
                    .collect();
                let stay = 1.0 - state.init_prob(j);
                p[j][t] = 1.0 - stay * f.iter().product::<f64>();
                for (k, x) in incs.iter().enumerate() {
                    if t == t0 && x.out == d0 {
                        continue;
                    }
                    let rest: f64 = f.iter().enumerate().filter(|&(m, _)| m != k).map(|(_, v)| v).product();
                    pm[x.out][t] = 1.0 - stay * rest;
                }
            }
        }
        let mut obj = 0.0;
        for nc in &class.nodes {
            for (tau, &m) in nc.counts.iter().enumerate() {
                if m > 0 {
                    let mu = if tau < horizon { p[nc.node][tau] } else { 1.0 }
                        - if tau > 0 { p[nc.node][tau - 1] } else { 0.0 };
                    obj += m as f64 * mu.ln();
                }
            }
        }
        obj
    };
    let h = 1e-6;
    for d in 0..g.num_directed() {
        for t in 0..horizon {
            let fd = (replay(d, t, h) - replay(d, t, -h)) / (2.0 * h);
            // multipliers carry the sign of -dO/dstate
            let lam = -adj.msg(d, t);
            assert!(
                (lam - fd).abs() < 1e-6 * fd.abs().max(1.0),
                "d={d} t={t}: {lam} vs {fd}"
            );
        }
        assert_eq!(adj.msg(d, horizon), 0.0);
    }
}

#[test]
fn node_multipliers_vanish_off_observed_times() {
    let inst = instance(&Topology::RandomRegular { degree: 3, nodes: 16 }, 5, 1, 0.25, 9);
    let params = EdgeParams::constant(&inst.graph, 0.4f64);
    let states = forward_all(&inst.graph, &params, &inst.stats).unwrap();
    let class = &inst.stats.classes[0];
    let adj = adjoint_backward(&inst.graph, &params, &states[0], class).unwrap();
    for i in 0..16 {
        let observed = class.nodes.iter().find(|nc| nc.node == i);
        for t in 0..=5 {
            let allowed = observed.is_some_and(|nc| nc.counts[t] > 0 || (t < 5 && nc.counts[t + 1] > 0));
            if !allowed {
                assert_eq!(adj.node(i, t), 0.0, "node {i} t {t}");
            }
        }
        if !inst.mask.is_observed(i) {
            assert!((0..=5).all(|t| adj.node(i, t) == 0.0));
        }
    }
}
