//! Forward dynamic message passing for the independent cascade model.
//!
//! For every directed edge `i -> j` the message `pm[i->j](t)` is the probability
//! that `i` is active at `t` on the graph with `j` removed:
//!
//! ```text
//! p_i(t)      = 1 - (1 - p_i(0)) * prod_{k in N(i)}     (1 - a_ki pm[k->i](t-1))
//! pm[i->j](t) = 1 - (1 - p_i(0)) * prod_{k in N(i)\j}   (1 - a_ki pm[k->i](t-1))
//! ```
//!
//! Each time step is evaluated once, in order; nothing is iterated to a fixed point.

use std::io::Write;

use crate::cascades::{check_horizon, InitialCondition};
use crate::error::{Error, Result};
use crate::graph::{DirEdgeId, EdgeParams, Graph, NodeId};
use crate::products::leave_one_out;
use crate::scalar::Scalar;

/// Marginals and messages for one initial condition, stored `[entity][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DmpState<S> {
    horizon: usize,
    initial: InitialCondition,
    init_probs: Vec<S>,
    marginals: Vec<S>,
    messages: Vec<S>,
}

impl<S: Scalar> DmpState<S> {
    #[inline]
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial(&self) -> &InitialCondition {
        &self.initial
    }

    pub fn num_nodes(&self) -> usize {
        self.init_probs.len()
    }

    pub fn num_directed(&self) -> usize {
        self.messages.len() / (self.horizon + 1)
    }

    /// `p_i(0)`.
    #[inline]
    pub fn init_prob(&self, node: NodeId) -> S {
        self.init_probs[node]
    }

    #[inline]
    pub fn p(&self, node: NodeId, t: usize) -> S {
        self.marginals[node * (self.horizon + 1) + t]
    }

    #[inline]
    pub fn pm(&self, d: DirEdgeId, t: usize) -> S {
        self.messages[d * (self.horizon + 1) + t]
    }

    pub fn marginal_row(&self, node: NodeId) -> &[S] {
        let w = self.horizon + 1;
        &self.marginals[node * w..(node + 1) * w]
    }

    pub fn message_row(&self, d: DirEdgeId) -> &[S] {
        let w = self.horizon + 1;
        &self.messages[d * w..(d + 1) * w]
    }

    /// Activation-time law without bounds checks.
    #[inline]
    pub(crate) fn mu(&self, node: NodeId, tau: usize) -> S {
        let row = self.marginal_row(node);
        let t_max = self.horizon;
        let mut v = if tau < t_max { row[tau] } else { S::one() };
        if tau > 0 {
            v -= row[tau - 1];
        }
        v
    }

    /// Writes `node,t,p`.
    pub fn write_marginals_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "node,t,p")?;
        for i in 0..self.num_nodes() {
            for t in 0..=self.horizon {
                writeln!(w, "{i},{t},{}", self.p(i, t))?;
            }
        }
        Ok(())
    }

    /// Writes `edge_from,edge_to,t,pm`.
    pub fn write_messages_csv<W: Write>(&self, graph: &Graph, mut w: W) -> Result<()> {
        writeln!(w, "edge_from,edge_to,t,pm")?;
        for d in 0..self.num_directed() {
            let (a, b) = graph.endpoints(d);
            for t in 0..=self.horizon {
                writeln!(w, "{a},{b},{t},{}", self.pm(d, t))?;
            }
        }
        Ok(())
    }
}

/// Runs the forward recursion for `t = 1..=horizon`.
pub fn dmp_forward<S: Scalar>(
    graph: &Graph,
    params: &EdgeParams<S>,
    initial: &InitialCondition,
    horizon: usize,
) -> Result<DmpState<S>> {
    check_horizon(horizon)?;
    params.validate_for(graph)?;
    initial.validate(graph.num_nodes())?;
    let n = graph.num_nodes();
    let width = horizon + 1;
    let init_probs: Vec<S> = initial.initial_probs(n);
    let mut marginals = vec![S::zero(); n * width];
    let mut messages = vec![S::zero(); graph.num_directed() * width];
    for i in 0..n {
        marginals[i * width] = init_probs[i];
        for inc in graph.incidences(i) {
            messages[inc.out * width] = init_probs[i];
        }
    }

    let alpha = params.values();
    let mut factors: Vec<S> = Vec::with_capacity(graph.max_degree());
    let mut loo: Vec<S> = Vec::with_capacity(graph.max_degree());
    for t in 1..width {
        for j in 0..n {
            let incs = graph.incidences(j);
            factors.clear();
            factors.extend(
                incs.iter()
                    .map(|inc| S::one() - alpha[inc.edge] * messages[inc.incoming() * width + t - 1]),
            );
            let full = leave_one_out(&factors, &mut loo);
            let stay = S::one() - init_probs[j];
            marginals[j * width + t] = (S::one() - stay * full).clamp_to(S::zero(), S::one());
            for (inc, &rest) in incs.iter().zip(&loo) {
                messages[inc.out * width + t] = (S::one() - stay * rest).clamp_to(S::zero(), S::one());
            }
        }
    }
    Ok(DmpState {
        horizon,
        initial: initial.clone(),
        init_probs,
        marginals,
        messages,
    })
}

/// Probability that `node` activates exactly at `tau` (`tau == T` meaning "not before T").
pub fn activation_time_marginal<S: Scalar>(state: &DmpState<S>, node: NodeId, tau: usize) -> Result<S> {
    if node >= state.num_nodes() {
        return Err(Error::NodeOutOfRange {
            node,
            num_nodes: state.num_nodes(),
        });
    }
    if tau > state.horizon {
        return Err(Error::TimeOutOfRange {
            tau,
            horizon: state.horizon,
        });
    }
    Ok(state.mu(node, tau))
}

/// Expected spread `sum_i p_i(T)`.
pub fn influence<S: Scalar>(state: &DmpState<S>) -> S {
    (0..state.num_nodes()).map(|i| state.p(i, state.horizon)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, sample_uniform_params, Topology};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_edge_hand_values() {
        let g = Graph::from_edges(&[(0, 1)]).unwrap();
        let p = EdgeParams::constant(&g, 0.5f64);
        let s = dmp_forward(&g, &p, &InitialCondition::SingleSource(0), 2).unwrap();
        assert_eq!(s.marginal_row(1), &[0.0, 0.5, 0.5]);
        assert_eq!(s.message_row(g.directed_id(0, 1).unwrap()), &[1.0, 1.0, 1.0]);
        let mus: Vec<f64> = (0..=2).map(|t| activation_time_marginal(&s, 1, t).unwrap()).collect();
        assert_eq!(mus, vec![0.0, 0.5, 0.5]);
        let src: Vec<f64> = (0..=2).map(|t| activation_time_marginal(&s, 0, t).unwrap()).collect();
        assert_eq!(src, vec![1.0, 0.0, 0.0]);
        assert!(activation_time_marginal(&s, 1, 3).is_err());
        assert!(activation_time_marginal(&s, 2, 0).is_err());
    }

    #[test]
    fn deterministic_front() {
        let g = Graph::from_edges(&[(0, 1), (1, 2)]).unwrap();
        let p = EdgeParams::constant(&g, 1.0f64);
        let s = dmp_forward(&g, &p, &InitialCondition::SingleSource(0), 2).unwrap();
        assert_eq!(s.marginal_row(2), &[0.0, 0.0, 1.0]);
        assert_eq!(influence(&s), 3.0);
    }

    #[test]
    fn influence_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = generate(&Topology::SquareLattice { side: 4 }, &mut rng).unwrap();
        let zero = dmp_forward(
            &g,
            &EdgeParams::constant(&g, 0.0f64),
            &InitialCondition::SingleSource(5),
            6,
        )
        .unwrap();
        assert_eq!(influence(&zero), 1.0);
        let one = dmp_forward(
            &g,
            &EdgeParams::constant(&g, 1.0f64),
            &InitialCondition::SingleSource(0),
            6,
        )
        .unwrap();
        assert_eq!(influence(&one), 16.0);
    }

    #[test]
    fn rejects_out_of_range_params() {
        let g = Graph::from_edges(&[(0, 1)]).unwrap();
        let bad = EdgeParams::from_raw(vec![1.2f64]);
        assert!(dmp_forward(&g, &bad, &InitialCondition::SingleSource(0), 2).is_err());
        assert!(dmp_forward(
            &g,
            &EdgeParams::constant(&g, 0.5f64),
            &InitialCondition::SingleSource(0),
            0
        )
        .is_err());
    }

    #[test]
    fn normalization_and_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = generate(&Topology::RandomRegular { degree: 3, nodes: 30 }, &mut rng).unwrap();
        let p: EdgeParams<f64> = sample_uniform_params(&g, &mut rng);
        for init in [
            InitialCondition::SingleSource(4),
            InitialCondition::stochastic_uniform(30, 0.1),
        ] {
            let s = dmp_forward(&g, &p, &init, 7).unwrap();
            for i in 0..30 {
                let total: f64 = (0..=7).map(|t| s.mu(i, t)).sum();
                assert!((total - 1.0).abs() < 1e-12);
                assert!((0..=7).all(|t| s.mu(i, t) >= -1e-15));
                assert!(s.marginal_row(i).windows(2).all(|w| w[1] >= w[0]));
                assert_eq!(s.p(i, 0), s.init_prob(i));
            }
            for d in 0..g.num_directed() {
                assert!(s.message_row(d).windows(2).all(|w| w[1] >= w[0]));
            }
        }
    }

    #[test]
    fn f32_matches_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = generate(&Topology::SquareLattice { side: 5 }, &mut rng).unwrap();
        let p64: EdgeParams<f64> = sample_uniform_params(&g, &mut rng);
        let p32: EdgeParams<f32> = p64.cast();
        let a = dmp_forward(&g, &p64, &InitialCondition::SingleSource(12), 8).unwrap();
        let b = dmp_forward(&g, &p32, &InitialCondition::SingleSource(12), 8).unwrap();
        for i in 0..25 {
            for t in 0..=8 {
                assert!((a.p(i, t) - b.p(i, t) as f64).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn csv_dumps() {
        let g = Graph::from_edges(&[(0, 1)]).unwrap();
        let s = dmp_forward(
            &g,
            &EdgeParams::constant(&g, 0.5f64),
            &InitialCondition::SingleSource(0),
            1,
        )
        .unwrap();
        let mut buf = Vec::new();
        s.write_marginals_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "node,t,p\n0,0,1\n0,1,1\n1,0,0\n1,1,0.5\n"
        );
        let mut buf = Vec::new();
        s.write_messages_csv(&g, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("edge_from,edge_to,t,pm\n0,1,0,1\n"));
    }
}
