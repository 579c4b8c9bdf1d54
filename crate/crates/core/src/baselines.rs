//! Reference learners.
//!
//! [`Dmprec`] differentiates the DMP recursion forward in time, carrying
//! `phi[e][d](t) = d pm_d(t) / d a_e` for every edge. It costs `O(|E|^2 T)` per
//! class and is meant for small validation graphs.
//!
//! [`ml_learn`] maximises the exact IC likelihood of fully observed cascades.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::cascades::{ClassStats, ObservedCascade};
use crate::dmp::{dmp_forward, DmpState};
use crate::error::{Error, Result};
use crate::graph::{EdgeParams, Graph};
use crate::scalar::Scalar;
use crate::slicer::{GradientOracle, MU_FLOOR};

/// `phi[e][d][t] = d pm_d(t) / d a_e` and `psi[e][i][t] = d p_i(t) / d a_e` for one class.
#[derive(Debug, Clone)]
pub struct SensitivityState<S> {
    horizon: usize,
    num_directed: usize,
    num_nodes: usize,
    phi: Vec<S>,
    psi: Vec<S>,
}

impl<S: Scalar> SensitivityState<S> {
    #[inline]
    pub fn phi(&self, edge: usize, d: usize, t: usize) -> S {
        self.phi[(edge * self.num_directed + d) * (self.horizon + 1) + t]
    }

    #[inline]
    pub fn psi(&self, edge: usize, node: usize, t: usize) -> S {
        self.psi[(edge * self.num_nodes + node) * (self.horizon + 1) + t]
    }
}

/// Forward sensitivities of every message and marginal to every edge parameter.
pub fn sensitivities<S: Scalar>(
    graph: &Graph,
    params: &EdgeParams<S>,
    state: &DmpState<S>,
) -> Result<SensitivityState<S>> {
    params.validate_for(graph)?;
    if state.num_nodes() != graph.num_nodes() || state.num_directed() != graph.num_directed() {
        return Err(Error::StateMismatch("state was computed on a different graph".into()));
    }
    let horizon = state.horizon();
    let width = horizon + 1;
    let (n, nd, ne) = (graph.num_nodes(), graph.num_directed(), graph.num_edges());
    let alpha = params.values();
    let mut phi = vec![S::zero(); ne * nd * width];
    let mut psi = vec![S::zero(); ne * n * width];
    for target in 0..ne {
        let phi_e = &mut phi[target * nd * width..(target + 1) * nd * width];
        let psi_e = &mut psi[target * n * width..(target + 1) * n * width];
        for t in 1..=horizon {
            for i in 0..n {
                let incs = graph.incidences(i);
                let stay = S::one() - state.init_prob(i);
                // factor and its derivative for each incoming message
                let f: Vec<S> = incs
                    .iter()
                    .map(|x| S::one() - alpha[x.edge] * state.pm(x.incoming(), t - 1))
                    .collect();
                let df: Vec<S> = incs
                    .iter()
                    .map(|x| {
                        let d_in = x.incoming();
                        let mut v = alpha[x.edge] * phi_e[d_in * width + t - 1];
                        if x.edge == target {
                            v += state.pm(d_in, t - 1);
                        }
                        v
                    })
                    .collect();
                // d(1 - stay prod f) = stay sum_k df_k prod_{m != k} f_m
                let excluding = |skip: Option<usize>| {
                    let mut total = S::zero();
                    for (k, &dk) in df.iter().enumerate() {
                        if Some(k) == skip {
                            continue;
                        }
                        let mut prod = dk;
                        for (m, &fm) in f.iter().enumerate() {
                            if m != k && Some(m) != skip {
                                prod *= fm;
                            }
                        }
                        total += prod;
                    }
                    stay * total
                };
                psi_e[i * width + t] = excluding(None);
                for (k, x) in incs.iter().enumerate() {
                    phi_e[x.out * width + t] = excluding(Some(k));
                }
            }
        }
    }
    Ok(SensitivityState {
        horizon,
        num_directed: nd,
        num_nodes: n,
        phi,
        psi,
    })
}

/// Gradient of `sum m log mu` by forward sensitivities.
pub fn dmprec_gradient<S: Scalar>(graph: &Graph, params: &EdgeParams<S>, stats: &ClassStats) -> Result<Vec<S>> {
    Dmprec.objective_and_gradient(graph, params, stats).map(|(_, g)| g)
}

/// Sensitivity-propagation gradient oracle.
#[derive(Debug, Clone, Copy, Default)]
pub struct Dmprec;

impl<S: Scalar> GradientOracle<S> for Dmprec {
    fn objective_and_gradient(&self, graph: &Graph, params: &EdgeParams<S>, stats: &ClassStats) -> Result<(S, Vec<S>)> {
        params.validate_for(graph)?;
        let horizon = stats.horizon;
        let floor = S::of(MU_FLOOR);
        let per_class: Vec<(S, Vec<S>)> = stats
            .classes
            .par_iter()
            .map(|class| {
                let state = dmp_forward(graph, params, &class.initial, horizon)?;
                let sens = sensitivities(graph, params, &state)?;
                let mut obj = S::zero();
                let mut grad = vec![S::zero(); graph.num_edges()];
                for nc in &class.nodes {
                    let i = nc.node;
                    if i >= graph.num_nodes() || nc.counts.len() != horizon + 1 {
                        return Err(Error::StateMismatch(format!(
                            "counts for node {i} do not fit the graph or horizon"
                        )));
                    }
                    let row = state.marginal_row(i);
                    for (tau, &m) in nc.counts.iter().enumerate() {
                        if m == 0 {
                            continue;
                        }
                        let upper = if tau < horizon { row[tau] } else { S::one() };
                        let lower = if tau > 0 { row[tau - 1] } else { S::zero() };
                        let mu = (upper - lower).max(floor);
                        let w = S::of_count(m) / mu;
                        obj += S::of_count(m) * mu.ln();
                        for (e, g) in grad.iter_mut().enumerate() {
                            let mut dmu = S::zero();
                            if tau < horizon {
                                dmu += sens.psi(e, i, tau);
                            }
                            if tau > 0 {
                                dmu -= sens.psi(e, i, tau - 1);
                            }
                            *g += w * dmu;
                        }
                    }
                }
                Ok((obj, grad))
            })
            .collect::<Result<_>>()?;
        let mut obj = S::zero();
        let mut grad = vec![S::zero(); graph.num_edges()];
        for (o, g) in per_class {
            obj += o;
            grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        Ok((obj, grad))
    }
}

/// Sufficient statistics of the full-observation likelihood.
///
/// ```text
/// -log P = sum_e fail[e] * -log(1 - a_e) + sum_S n_S * -log(1 - prod_{e in S} (1 - a_e))
/// ```
/// `fail[e]` counts attempts over `e` that did not transmit; each set `S` lists the
/// edges that attempted a node at the step it activated.
#[derive(Debug, Clone, PartialEq)]
pub struct MlData {
    num_edges: usize,
    num_cascades: usize,
    fail: Vec<u64>,
    success: Vec<(Vec<usize>, u64)>,
}

impl MlData {
    pub fn new(graph: &Graph, cascades: &[ObservedCascade]) -> Result<Self> {
        let n = graph.num_nodes();
        let mut fail = vec![0u64; graph.num_edges()];
        let mut success: HashMap<Vec<usize>, u64> = HashMap::new();
        let mut set = Vec::new();
        for c in cascades {
            let tau = c.complete_times(n).ok_or_else(|| {
                Error::PartialObservation("maximum likelihood needs every node observed in every cascade".into())
            })?;
            let horizon = c.horizon;
            for i in 0..n {
                if tau[i] == 0 {
                    continue;
                }
                set.clear();
                for inc in graph.incidences(i) {
                    let tk = tau[inc.neighbor];
                    if tk + 2 <= tau[i] {
                        fail[inc.edge] += 1;
                    } else if tk + 1 == tau[i] && tau[i] < horizon {
                        set.push(inc.edge);
                    }
                }
                if tau[i] < horizon {
                    set.sort_unstable();
                    *success.entry(set.clone()).or_insert(0) += 1;
                }
            }
        }
        let mut success: Vec<_> = success.into_iter().collect();
        success.sort();
        Ok(Self {
            num_edges: graph.num_edges(),
            num_cascades: cascades.len(),
            fail,
            success,
        })
    }

    pub fn num_cascades(&self) -> usize {
        self.num_cascades
    }

    /// `-log P`; infinite when the data are impossible under `alpha`.
    pub fn neg_log_likelihood(&self, alpha: &[f64]) -> f64 {
        let mut total = 0.0;
        for (e, &c) in self.fail.iter().enumerate() {
            if c > 0 {
                total -= c as f64 * (1.0 - alpha[e]).ln();
            }
        }
        for (set, c) in &self.success {
            let q: f64 = set.iter().map(|&e| 1.0 - alpha[e]).product();
            total -= *c as f64 * (1.0 - q).ln();
        }
        total
    }

    fn gradient(&self, alpha: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for (e, &c) in self.fail.iter().enumerate() {
            if c > 0 {
                out[e] += c as f64 / (1.0 - alpha[e]);
            }
        }
        for (set, c) in &self.success {
            let q: f64 = set.iter().map(|&e| 1.0 - alpha[e]).product();
            for (k, &e) in set.iter().enumerate() {
                let rest: f64 = set
                    .iter()
                    .enumerate()
                    .filter(|&(m, _)| m != k)
                    .map(|(_, &x)| 1.0 - alpha[x])
                    .product();
                out[e] -= *c as f64 * rest / (1.0 - q);
            }
        }
    }
}

/// Negative log-likelihood of fully observed cascades.
pub fn ml_objective<S: Scalar>(cascades: &[ObservedCascade], graph: &Graph, params: &EdgeParams<S>) -> Result<f64> {
    params.validate_for(graph)?;
    let alpha: Vec<f64> = params.values().iter().map(|a| a.as_f64()).collect();
    Ok(MlData::new(graph, cascades)?.neg_log_likelihood(&alpha))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlConfig {
    /// Stop once `max |P(a - grad) - a|` falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub init: f64,
}

impl Default for MlConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 20_000,
            init: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlOutcome {
    pub params: EdgeParams<f64>,
    /// Per-cascade negative log-likelihood at the solution.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Projected gradient descent on the per-cascade negative log-likelihood over
/// `[0, 1]^E`, with Barzilai-Borwein steps and Armijo backtracking.
pub fn ml_learn(cascades: &[ObservedCascade], graph: &Graph, config: &MlConfig) -> Result<MlOutcome> {
    if !(config.tolerance > 0.0 && (0.0..=1.0).contains(&config.init)) {
        return Err(Error::InvalidConfig(format!("ml config {config:?}")));
    }
    let data = MlData::new(graph, cascades)?;
    let ne = graph.num_edges();
    let mut x = vec![config.init; ne];
    if data.num_cascades == 0 {
        return Ok(MlOutcome {
            params: EdgeParams::from_raw(x),
            objective: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let scale = 1.0 / data.num_cascades as f64;
    let f = |a: &[f64]| data.neg_log_likelihood(a) * scale;
    let grad = |a: &[f64], out: &mut [f64]| {
        data.gradient(a, out);
        out.iter_mut().for_each(|g| *g *= scale);
    };
    let mut fx = f(&x);
    let mut g = vec![0.0; ne];
    grad(&x, &mut g);
    let mut step = 1.0;
    let mut trial = vec![0.0; ne];
    let mut g_new = vec![0.0; ne];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let pg = x
            .iter()
            .zip(&g)
            .fold(0.0f64, |m, (a, d)| m.max((project(a - d) - a).abs()));
        if pg < config.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let mut s = step;
        loop {
            for e in 0..ne {
                trial[e] = project(x[e] - s * g[e]);
            }
            let ft = f(&trial);
            let decrease: f64 = x.iter().zip(&trial).zip(&g).map(|((a, b), d)| d * (a - b)).sum();
            if ft.is_finite() && ft <= fx - 1e-4 * decrease {
                fx = ft;
                break;
            }
            s *= 0.5;
            if s < 1e-20 {
                return Ok(MlOutcome {
                    params: EdgeParams::from_raw(x),
                    objective: fx,
                    iterations,
                    converged: false,
                });
            }
        }
        grad(&trial, &mut g_new);
        let (mut sy, mut ss) = (0.0, 0.0);
        for e in 0..ne {
            let de = trial[e] - x[e];
            sy += de * (g_new[e] - g[e]);
            ss += de * de;
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { 1.0 };
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
    }
    Ok(MlOutcome {
        params: EdgeParams::from_raw(x),
        objective: fx,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascades::{CascadeClass, InitialCondition, NodeCounts};
    use crate::slicer::Adjoint;

    fn edge_cascade(tau1: u32, horizon: u32) -> ObservedCascade {
        ObservedCascade {
            initial: InitialCondition::SingleSource(0),
            horizon,
            observations: vec![(0, 0), (1, tau1)],
        }
    }

    #[test]
    fn single_edge_likelihood_terms() {
        let g = Graph::from_edges(&[(0, 1)]).unwrap();
        let p = EdgeParams::constant(&g, 0.3f64);
        let a = ml_objective(&[edge_cascade(1, 3)], &g, &p).unwrap();
        assert!((a + 0.3f64.ln()).abs() < 1e-15);
        let b = ml_objective(&[edge_cascade(3, 3)], &g, &p).unwrap();
        assert!((b + 0.7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn deterministic_path_has_probability_one() {
        let g = Graph::from_edges(&[(0, 1), (1, 2)]).unwrap();
        let c = ObservedCascade {
            initial: InitialCondition::SingleSource(0),
            horizon: 4,
            observations: vec![(0, 0), (1, 1), (2, 2)],
        };
        assert_eq!(ml_objective(&[c], &g, &EdgeParams::constant(&g, 1.0f64)).unwrap(), 0.0);
    }

    #[test]
    fn hidden_entries_are_rejected() {
        let g = Graph::from_edges(&[(0, 1)]).unwrap();
        let c = ObservedCascade {
            initial: InitialCondition::SingleSource(0),
            horizon: 3,
            observations: vec![(0, 0)],
        };
        assert!(matches!(
            ml_objective(std::slice::from_ref(&c), &g, &EdgeParams::constant(&g, 0.5f64)),
            Err(Error::PartialObservation(_))
        ));
        assert!(ml_learn(&[c], &g, &MlConfig::default()).is_err());
    }

    #[test]
    fn bernoulli_mle() {
        let g = Graph::from_edges(&[(0, 1)]).unwrap();
        let mut data: Vec<_> = (0..30).map(|_| edge_cascade(1, 3)).collect();
        data.extend((0..70).map(|_| edge_cascade(3, 3)));
        let out = ml_learn(&data, &g, &MlConfig::default()).unwrap();
        assert!(out.converged);
        assert!((out.params.get(0) - 0.3).abs() < 1e-6);
    }

    #[test]
    fn never_transmitting_edge_goes_to_zero() {
        let g = Graph::from_edges(&[(0, 1)]).unwrap();
        let data: Vec<_> = (0..50).map(|_| edge_cascade(3, 3)).collect();
        let out = ml_learn(&data, &g, &MlConfig::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.params.get(0), 0.0);
    }

    #[test]
    fn dmprec_matches_closed_form_on_one_edge() {
        let g = Graph::from_edges(&[(0, 1)]).unwrap();
        let (m1, m2) = (30u64, 70u64);
        let stats = ClassStats {
            horizon: 2,
            num_nodes: 2,
            classes: vec![CascadeClass {
                initial: InitialCondition::SingleSource(0),
                num_cascades: 100,
                nodes: vec![NodeCounts {
                    node: 1,
                    counts: vec![0, m1, m2],
                }],
            }],
        };
        let a = 0.4f64;
        let grad = dmprec_gradient(&g, &EdgeParams::constant(&g, a), &stats).unwrap();
        let expected = m1 as f64 / a - m2 as f64 / (1.0 - a);
        assert!((grad[0] - expected).abs() < 1e-10);
        let (_, adj) = Adjoint
            .objective_and_gradient(&g, &EdgeParams::constant(&g, a), &stats)
            .unwrap();
        assert!((grad[0] - adj[0]).abs() < 1e-10);
    }

    #[test]
    fn sensitivities_vanish_at_time_zero() {
        let g = Graph::from_edges(&[(0, 1), (1, 2), (0, 2)]).unwrap();
        let p = EdgeParams::new(&g, vec![0.2, 0.5, 0.7]).unwrap();
        let st = dmp_forward(&g, &p, &InitialCondition::SingleSource(0), 3).unwrap();
        let sens = sensitivities(&g, &p, &st).unwrap();
        for e in 0..3 {
            for d in 0..6 {
                assert_eq!(sens.phi(e, d, 0), 0.0);
            }
        }
    }
}
