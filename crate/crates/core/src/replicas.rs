//! Uniform mixtures of IC models on one topology.
//!
//! The mixture predicts `mu(i, tau) = 1/R sum_r mu_r(i, tau)` and is trained on
//! `sum m log mu`. Each replica keeps its own forward and multiplier states; the
//! node multipliers of every replica share the mixture law in the denominator.

use rand::Rng;
use rayon::prelude::*;

use crate::cascades::{CascadeClass, ClassStats, InitialCondition};
use crate::dmp::{dmp_forward, DmpState};
use crate::error::{Error, Result};
use crate::graph::{EdgeParams, Graph, NodeId};
use crate::scalar::Scalar;
use crate::slicer::{
    accumulate_class_gradient, ascend, backward_from_node_multipliers, check_class_state, class_objective_with,
    node_multipliers_with, AdjointState, GradientPath, LearnConfig, TraceRow,
};

/// Default relative noise used to break symmetry between copied replicas.
pub const DEFAULT_PERTURBATION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaModel<S> {
    replicas: Vec<EdgeParams<S>>,
}

impl<S: Scalar> ReplicaModel<S> {
    pub fn new(graph: &Graph, replicas: Vec<EdgeParams<S>>) -> Result<Self> {
        if replicas.is_empty() {
            return Err(Error::InvalidConfig("a mixture needs at least one replica".into()));
        }
        for r in &replicas {
            r.validate_for(graph)?;
        }
        Ok(Self { replicas })
    }

    pub fn single(params: EdgeParams<S>) -> Self {
        Self { replicas: vec![params] }
    }

    /// `count` copies of `params`.
    pub fn repeated(params: &EdgeParams<S>, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidConfig("a mixture needs at least one replica".into()));
        }
        Ok(Self {
            replicas: vec![params.clone(); count],
        })
    }

    /// Independent uniform parameters for each of `count` replicas.
    pub fn random<R: Rng + ?Sized>(graph: &Graph, count: usize, rng: &mut R) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidConfig("a mixture needs at least one replica".into()));
        }
        let replicas = (0..count)
            .map(|_| crate::graph::sample_uniform_params(graph, rng))
            .collect();
        Ok(Self { replicas })
    }

    pub fn num_replicas(&self) -> usize {
        self.replicas.len()
    }

    pub fn num_edges(&self) -> usize {
        self.replicas[0].len()
    }

    pub fn replica(&self, r: usize) -> &EdgeParams<S> {
        &self.replicas[r]
    }

    pub fn replicas(&self) -> &[EdgeParams<S>] {
        &self.replicas
    }

    pub fn into_replicas(self) -> Vec<EdgeParams<S>> {
        self.replicas
    }

    /// Replica-major flattening, `[r * |E| + e]`.
    pub fn flatten(&self) -> Vec<S> {
        self.replicas.iter().flat_map(|p| p.values().iter().copied()).collect()
    }

    fn from_flat(values: &[S], num_edges: usize) -> Self {
        let replicas = values
            .chunks(num_edges)
            .map(|c| EdgeParams::from_raw(c.to_vec()))
            .collect();
        Self { replicas }
    }

    pub fn cast<T: Scalar>(&self) -> ReplicaModel<T> {
        ReplicaModel {
            replicas: self.replicas.iter().map(|p| p.cast()).collect(),
        }
    }
}

/// Forward states of every replica for one initial condition.
#[derive(Debug, Clone)]
pub struct MixtureState<S> {
    states: Vec<DmpState<S>>,
}

impl<S: Scalar> MixtureState<S> {
    pub fn replica(&self, r: usize) -> &DmpState<S> {
        &self.states[r]
    }

    pub fn states(&self) -> &[DmpState<S>] {
        &self.states
    }

    pub fn horizon(&self) -> usize {
        self.states[0].horizon()
    }

    pub fn initial(&self) -> &InitialCondition {
        self.states[0].initial()
    }

    pub fn num_nodes(&self) -> usize {
        self.states[0].num_nodes()
    }

    /// Mixture activation-time law.
    pub fn mu(&self, node: NodeId, tau: usize) -> S {
        let sum: S = self.states.iter().map(|s| s.mu(node, tau)).sum();
        sum / S::of_count(self.states.len() as u64)
    }

    /// Mixture cumulative marginal `P(node active by t)`.
    pub fn p(&self, node: NodeId, t: usize) -> S {
        let sum: S = self.states.iter().map(|s| s.p(node, t)).sum();
        sum / S::of_count(self.states.len() as u64)
    }
}

pub fn mixture_marginals<S: Scalar>(
    model: &ReplicaModel<S>,
    graph: &Graph,
    initial: &InitialCondition,
    horizon: usize,
) -> Result<MixtureState<S>> {
    let states = model
        .replicas
        .iter()
        .map(|p| dmp_forward(graph, p, initial, horizon))
        .collect::<Result<_>>()?;
    Ok(MixtureState { states })
}

/// Mixture states for every class, in class order.
pub fn mixture_forward_all<S: Scalar>(
    model: &ReplicaModel<S>,
    graph: &Graph,
    stats: &ClassStats,
) -> Result<Vec<MixtureState<S>>> {
    stats
        .classes
        .par_iter()
        .map(|c| mixture_marginals(model, graph, &c.initial, stats.horizon))
        .collect()
}

fn check_mixture_state<S: Scalar>(states: &MixtureState<S>, class: &CascadeClass) -> Result<()> {
    if states.initial() != &class.initial {
        return Err(Error::StateMismatch(
            "state and class have different initial conditions".into(),
        ));
    }
    Ok(())
}

/// `sum m log(1/R sum_r mu_r)` with `states[k]` belonging to `stats.classes[k]`.
pub fn mixture_objective<S: Scalar>(stats: &ClassStats, states: &[MixtureState<S>]) -> Result<S> {
    if states.len() != stats.classes.len() {
        return Err(Error::ClassCountMismatch {
            expected: stats.classes.len(),
            got: states.len(),
        });
    }
    let mut total = S::zero();
    for (class, st) in stats.classes.iter().zip(states) {
        check_mixture_state(st, class)?;
        total += class_objective_with(class, |i, tau| st.mu(i, tau));
    }
    Ok(total)
}

/// Multiplier states of every replica for one class.
pub fn mixture_adjoint<S: Scalar>(
    graph: &Graph,
    model: &ReplicaModel<S>,
    states: &MixtureState<S>,
    class: &CascadeClass,
) -> Result<Vec<AdjointState<S>>> {
    check_mixture_state(states, class)?;
    if states.states.len() != model.num_replicas() {
        return Err(Error::StateMismatch("state count differs from replica count".into()));
    }
    let horizon = states.horizon();
    let scale = S::one() / S::of_count(model.num_replicas() as u64);
    let lambda = node_multipliers_with(class, graph.num_nodes(), horizon, |i, tau| states.mu(i, tau), scale);
    model
        .replicas
        .iter()
        .zip(&states.states)
        .map(|(params, state)| {
            params.validate_for(graph)?;
            check_class_state(graph, state, class)?;
            Ok(backward_from_node_multipliers(graph, params, state, lambda.clone()))
        })
        .collect()
}

/// `dO/da^r_e`, indexed `[r][e]`.
pub fn mixture_gradient<S: Scalar>(
    graph: &Graph,
    model: &ReplicaModel<S>,
    stats: &ClassStats,
    states: &[MixtureState<S>],
) -> Result<Vec<Vec<S>>> {
    if states.len() != stats.classes.len() {
        return Err(Error::ClassCountMismatch {
            expected: stats.classes.len(),
            got: states.len(),
        });
    }
    let mut grad = vec![vec![S::zero(); graph.num_edges()]; model.num_replicas()];
    for (class, st) in stats.classes.iter().zip(states) {
        let adjoints = mixture_adjoint(graph, model, st, class)?;
        for (r, adj) in adjoints.iter().enumerate() {
            accumulate_class_gradient(
                graph,
                &model.replicas[r],
                &st.states[r],
                adj,
                GradientPath::Fast,
                &mut grad[r],
            );
        }
    }
    Ok(grad)
}

/// Objective and replica-major flattened gradient in one parallel pass over classes.
pub fn mixture_objective_and_gradient<S: Scalar>(
    graph: &Graph,
    model: &ReplicaModel<S>,
    stats: &ClassStats,
) -> Result<(S, Vec<S>)> {
    for r in &model.replicas {
        r.validate_for(graph)?;
    }
    let ne = graph.num_edges();
    let per_class: Vec<(S, Vec<S>)> = stats
        .classes
        .par_iter()
        .map(|class| {
            let st = mixture_marginals(model, graph, &class.initial, stats.horizon)?;
            let adjoints = mixture_adjoint(graph, model, &st, class)?;
            let obj = class_objective_with(class, |i, tau| st.mu(i, tau));
            let mut grad = vec![S::zero(); ne * model.num_replicas()];
            for (r, adj) in adjoints.iter().enumerate() {
                let slot = &mut grad[r * ne..(r + 1) * ne];
                accumulate_class_gradient(graph, &model.replicas[r], &st.states[r], adj, GradientPath::Fast, slot);
            }
            Ok((obj, grad))
        })
        .collect::<Result<_>>()?;
    let mut obj = S::zero();
    let mut grad = vec![S::zero(); ne * model.num_replicas()];
    for (o, g) in per_class {
        obj += o;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    Ok((obj, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureOutcome<S> {
    pub model: ReplicaModel<S>,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub halvings: usize,
}

/// Gradient ascent on the mixture objective starting from `init`.
///
/// The step is `R` times the single-model step, so a mixture of identical
/// replicas moves exactly like the single model it copies.
pub fn learn_mixture<S: Scalar>(
    graph: &Graph,
    stats: &ClassStats,
    init: ReplicaModel<S>,
    config: &LearnConfig,
) -> Result<MixtureOutcome<S>> {
    config.validate()?;
    for r in &init.replicas {
        r.validate_for(graph)?;
    }
    if stats.num_nodes != graph.num_nodes() {
        return Err(Error::StateMismatch(format!(
            "statistics cover {} nodes, graph has {}",
            stats.num_nodes,
            graph.num_nodes()
        )));
    }
    let ne = graph.num_edges();
    let lo = S::of(config.alpha_min);
    let hi = S::of(config.alpha_max);
    let start: Vec<S> = init.flatten().into_iter().map(|a| a.clamp_to(lo, hi)).collect();
    let total = stats.total_cascades();
    if total == 0 {
        return Ok(MixtureOutcome {
            model: ReplicaModel::from_flat(&start, ne),
            trace: Vec::new(),
            converged: true,
            halvings: 0,
        });
    }
    let eps = config.epsilon(graph.num_nodes(), total, stats.horizon) * init.num_replicas() as f64;
    let run = ascend(start, eps, config, |vals| {
        mixture_objective_and_gradient(graph, &ReplicaModel::from_flat(vals, ne), stats)
    })?;
    Ok(MixtureOutcome {
        model: ReplicaModel::from_flat(&run.values, ne),
        trace: run.trace,
        converged: run.converged,
        halvings: run.halvings,
    })
}

/// `a <- clamp(a (1 + u))`, `u ~ Uniform(-sigma, sigma)`, independently per replica and edge.
pub fn perturb<S: Scalar, R: Rng + ?Sized>(
    model: &ReplicaModel<S>,
    sigma: f64,
    alpha_min: f64,
    alpha_max: f64,
    rng: &mut R,
) -> Result<ReplicaModel<S>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "perturbation {sigma} must be positive, otherwise replicas stay identical"
        )));
    }
    let lo = S::of(alpha_min);
    let hi = S::of(alpha_max);
    let replicas = model
        .replicas
        .iter()
        .map(|p| {
            let v = p
                .values()
                .iter()
                .map(|&a| (a * S::of(1.0 + rng.gen_range(-sigma..sigma))).clamp_to(lo, hi))
                .collect();
            EdgeParams::from_raw(v)
        })
        .collect();
    Ok(ReplicaModel { replicas })
}

/// Scores a model against an external marginal oracle.
pub type Evaluator<'a, S> = &'a mut dyn FnMut(&ReplicaModel<S>) -> Result<f64>;

/// One rung of the ladder.
#[derive(Debug, Clone)]
pub struct LadderRung<S> {
    pub outcome: MixtureOutcome<S>,
    /// Caller-evaluated prediction error of the perturbed starting point.
    pub delta_p_start: Option<f64>,
    /// Caller-evaluated prediction error of the trained model.
    pub delta_p: Option<f64>,
}

/// Grows `base` by one replica: copies the base solution into `target` replicas,
/// perturbs every parameter by `sigma` and trains. `evaluate`, when given, scores a
/// model against an external marginal oracle.
#[allow(clippy::too_many_arguments)]
pub fn learn_ladder<S: Scalar, R: Rng + ?Sized>(
    graph: &Graph,
    stats: &ClassStats,
    base: &ReplicaModel<S>,
    target: usize,
    sigma: f64,
    config: &LearnConfig,
    rng: &mut R,
    mut evaluate: Option<Evaluator<'_, S>>,
) -> Result<LadderRung<S>> {
    if target != base.num_replicas() + 1 {
        return Err(Error::InvalidConfig(format!(
            "ladder grows one replica per rung: base has {}, target {target}",
            base.num_replicas()
        )));
    }
    config.validate()?;
    // replica r copies base replica r, the new one copies the last
    let mut copies = base.replicas.clone();
    copies.push(base.replicas[base.num_replicas() - 1].clone());
    let start = perturb(
        &ReplicaModel { replicas: copies },
        sigma,
        config.alpha_min,
        config.alpha_max,
        rng,
    )?;
    let delta_p_start = match evaluate.as_mut() {
        Some(f) => Some(f(&start)?),
        None => None,
    };
    let outcome = learn_mixture(graph, stats, start, config)?;
    let delta_p = match evaluate.as_mut() {
        Some(f) => Some(f(&outcome.model)?),
        None => None,
    };
    Ok(LadderRung {
        outcome,
        delta_p_start,
        delta_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascades::NodeCounts;
    use crate::seeding::{stream_rng, Stream};
    use crate::slicer::{forward_all, gradient, objective, Adjoint, GradientOracle};

    fn edge() -> Graph {
        Graph::from_edges(&[(0, 1)]).unwrap()
    }

    fn stats_on_path() -> (Graph, ClassStats) {
        let g = Graph::from_edges(&[(0, 1), (1, 2), (1, 3)]).unwrap();
        let class = CascadeClass {
            initial: InitialCondition::SingleSource(0),
            num_cascades: 10,
            nodes: vec![
                NodeCounts {
                    node: 1,
                    counts: vec![0, 7, 0, 3],
                },
                NodeCounts {
                    node: 2,
                    counts: vec![0, 0, 4, 6],
                },
                NodeCounts {
                    node: 3,
                    counts: vec![0, 0, 2, 8],
                },
            ],
        };
        let class2 = CascadeClass {
            initial: InitialCondition::SingleSource(2),
            num_cascades: 5,
            nodes: vec![
                NodeCounts {
                    node: 0,
                    counts: vec![0, 0, 1, 4],
                },
                NodeCounts {
                    node: 1,
                    counts: vec![0, 3, 0, 2],
                },
            ],
        };
        (
            g,
            ClassStats {
                horizon: 3,
                num_nodes: 4,
                classes: vec![class, class2],
            },
        )
    }

    #[test]
    fn mixture_of_zero_and_one() {
        let g = edge();
        let model = ReplicaModel::new(&g, vec![EdgeParams::constant(&g, 0.0), EdgeParams::constant(&g, 1.0)]).unwrap();
        let st = mixture_marginals(&model, &g, &InitialCondition::SingleSource(0), 2).unwrap();
        assert_eq!(st.mu(1, 1), 0.5);
        assert_eq!(st.mu(1, 2), 0.5);
        assert_eq!(st.p(1, 1), 0.5);
    }

    #[test]
    fn single_replica_reduces_to_slicer() {
        let (g, stats) = stats_on_path();
        let params = EdgeParams::new(&g, vec![0.6f64, 0.3, 0.45]).unwrap();
        let model = ReplicaModel::single(params.clone());
        let mix = mixture_forward_all(&model, &g, &stats).unwrap();
        let single = forward_all(&g, &params, &stats).unwrap();
        assert_eq!(
            mixture_objective(&stats, &mix).unwrap(),
            objective(&stats, &single).unwrap()
        );
        let adj: Vec<_> = single
            .iter()
            .zip(&stats.classes)
            .map(|(s, c)| crate::slicer::adjoint_backward(&g, &params, s, c).unwrap())
            .collect();
        let expected = gradient(&g, &params, &single, &adj).unwrap();
        assert_eq!(mixture_gradient(&g, &model, &stats, &mix).unwrap()[0], expected);
        let (o, flat) = mixture_objective_and_gradient(&g, &model, &stats).unwrap();
        let (o1, g1) = Adjoint.objective_and_gradient(&g, &params, &stats).unwrap();
        assert_eq!(o, o1);
        assert_eq!(flat, g1);
    }

    #[test]
    fn identical_replicas_share_objective_and_gradient() {
        let (g, stats) = stats_on_path();
        let params = EdgeParams::new(&g, vec![0.6f64, 0.3, 0.45]).unwrap();
        let one = mixture_objective_and_gradient(&g, &ReplicaModel::single(params.clone()), &stats).unwrap();
        let three = mixture_objective_and_gradient(&g, &ReplicaModel::repeated(&params, 3).unwrap(), &stats).unwrap();
        assert!((one.0 - three.0).abs() < 1e-12);
        for r in 0..3 {
            for e in 0..3 {
                assert!((three.1[r * 3 + e] - one.1[e] / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permuting_replicas_permutes_gradients() {
        let (g, stats) = stats_on_path();
        let a = EdgeParams::new(&g, vec![0.6f64, 0.3, 0.45]).unwrap();
        let b = EdgeParams::new(&g, vec![0.2, 0.8, 0.5]).unwrap();
        let ab =
            mixture_objective_and_gradient(&g, &ReplicaModel::new(&g, vec![a.clone(), b.clone()]).unwrap(), &stats)
                .unwrap();
        let ba = mixture_objective_and_gradient(&g, &ReplicaModel::new(&g, vec![b, a]).unwrap(), &stats).unwrap();
        assert!((ab.0 - ba.0).abs() < 1e-12);
        for e in 0..3 {
            assert!((ab.1[e] - ba.1[3 + e]).abs() < 1e-12);
            assert!((ab.1[3 + e] - ba.1[e]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_perturbation_is_rejected() {
        let g = edge();
        let model = ReplicaModel::single(EdgeParams::constant(&g, 0.5f64));
        let mut rng = stream_rng(0, Stream::Perturbation, 0);
        assert!(perturb(&model, 0.0, 1e-6, 1.0 - 1e-6, &mut rng).is_err());
        let p = perturb(&model, 0.1, 1e-6, 1.0 - 1e-6, &mut rng).unwrap();
        let a = p.replica(0).get(0);
        assert!(a != 0.5 && (a - 0.5).abs() <= 0.05);
    }

    #[test]
    fn ladder_requires_one_extra_replica() {
        let (g, stats) = stats_on_path();
        let base = ReplicaModel::single(EdgeParams::constant(&g, 0.5f64));
        let mut rng = stream_rng(0, Stream::Perturbation, 0);
        let config = LearnConfig {
            max_iterations: 5,
            ..LearnConfig::default()
        };
        assert!(learn_ladder(&g, &stats, &base, 3, 0.05, &config, &mut rng, None).is_err());
        let mut calls = 0;
        let mut eval = |m: &ReplicaModel<f64>| {
            calls += 1;
            Ok(m.num_replicas() as f64)
        };
        let rung = learn_ladder(&g, &stats, &base, 2, 0.05, &config, &mut rng, Some(&mut eval)).unwrap();
        assert_eq!(rung.outcome.model.num_replicas(), 2);
        assert_eq!(rung.delta_p, Some(2.0));
        assert_eq!(calls, 2);
    }

    #[test]
    fn empty_model_is_rejected() {
        let g = edge();
        assert!(ReplicaModel::<f64>::new(&g, Vec::new()).is_err());
        assert!(ReplicaModel::repeated(&EdgeParams::constant(&g, 0.5f64), 0).is_err());
    }
}
