//! Oracles shared by the integration tests. Nothing here calls into the
//! adjoint or sensitivity code paths it is used to check.
#![allow(dead_code, clippy::needless_range_loop)]

use icdmp::cascades::{
    apply_mask, build_class_stats, simulate_many, ClassStats, HiddenPlacement, InitialCondition, InitialScheme,
    ObservationMask,
};
use icdmp::graph::{generate, sample_uniform_params, EdgeParams, Graph, Topology};
use icdmp::seeding::{stream_rng, Stream};
use icdmp::slicer::{forward_all, objective};

pub struct Instance {
    pub graph: Graph,
    pub truth: EdgeParams<f64>,
    pub stats: ClassStats,
    pub mask: ObservationMask,
}

/// Graph, uniform parameters, `m` single-source cascades and a random mask hiding `floor(xi N)` nodes.
pub fn instance(topology: &Topology, horizon: usize, m: usize, xi: f64, seed: u64) -> Instance {
    let graph = generate(topology, &mut stream_rng(seed, Stream::Graph, 0)).unwrap();
    let truth = sample_uniform_params(&graph, &mut stream_rng(seed, Stream::Params, 0));
    let mask = ObservationMask::sample(
        &graph,
        xi,
        HiddenPlacement::Random,
        &mut stream_rng(seed, Stream::Mask, 0),
    )
    .unwrap();
    let cascades = simulate_many(&graph, &truth, &InitialScheme::UniformSource, horizon, m, seed).unwrap();
    let observed: Vec<_> = cascades.iter().map(|c| apply_mask(c, &mask)).collect();
    let stats = build_class_stats(&observed, graph.num_nodes(), horizon).unwrap();
    Instance {
        graph,
        truth,
        stats,
        mask,
    }
}

pub fn objective_at(graph: &Graph, values: &[f64], stats: &ClassStats) -> f64 {
    let params = EdgeParams::new(graph, values.to_vec()).unwrap();
    let states = forward_all(graph, &params, stats).unwrap();
    objective(stats, &states).unwrap()
}

/// Central differences of an arbitrary objective.
pub fn central_differences(values: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut work = values.to_vec();
    (0..values.len())
        .map(|e| {
            work[e] = values[e] + h;
            let up = f(&work);
            work[e] = values[e] - h;
            let down = f(&work);
            work[e] = values[e];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max |a - b| / max |b|`.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Exact `P(node active by t)` by enumerating every outcome of every directed
/// transmission coin. Node activation time is the BFS distance from the seeds
/// along successful directed edges. Deterministic seeds only.
pub fn exact_marginals(graph: &Graph, alpha: &[f64], seeds: &[usize], horizon: usize) -> Vec<Vec<f64>> {
    let n = graph.num_nodes();
    let nd = graph.num_directed();
    assert!(nd <= 22, "enumeration over 2^{nd} outcomes is too large");
    let mut p = vec![vec![0.0; horizon + 1]; n];
    let mut dist = vec![usize::MAX; n];
    let mut queue = Vec::with_capacity(n);
    for mask in 0u64..(1u64 << nd) {
        let mut weight = 1.0;
        for d in 0..nd {
            let a = alpha[d / 2];
            weight *= if mask >> d & 1 == 1 { a } else { 1.0 - a };
        }
        if weight == 0.0 {
            continue;
        }
        dist.iter_mut().for_each(|x| *x = usize::MAX);
        queue.clear();
        for &s in seeds {
            dist[s] = 0;
            queue.push(s);
        }
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            for v in graph.neighbors(u) {
                let d = graph.directed_id(u, v).unwrap();
                if dist[v] == usize::MAX && mask >> d & 1 == 1 {
                    dist[v] = dist[u] + 1;
                    queue.push(v);
                }
            }
        }
        for i in 0..n {
            if dist[i] <= horizon {
                for t in dist[i]..=horizon {
                    p[i][t] += weight;
                }
            }
        }
    }
    p
}

/// Random labelled tree on `n` nodes (random attachment).
pub fn random_tree(n: usize, seed: u64) -> Graph {
    use rand::Rng;
    let mut rng = stream_rng(seed, Stream::Graph, 1);
    let edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    Graph::from_edges(&edges).unwrap()
}

pub fn seeds_of(ic: &InitialCondition) -> Vec<usize> {
    match ic {
        InitialCondition::SingleSource(s) => vec![*s],
        InitialCondition::SeedSet(v) => v.clone(),
        InitialCondition::Stochastic(_) => panic!("stochastic initial conditions are not enumerable here"),
    }
}
