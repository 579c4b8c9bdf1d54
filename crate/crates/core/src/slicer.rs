//! Adjoint-gradient learner for the DMP activation-time objective
//!
//! ```text
//! O = sum_s sum_{i observed} sum_tau m_s[i][tau] * log mu_s[i](tau)
//! ```
//!
//! One step runs DMP forward per class, a backward sweep for the Lagrange
//! multipliers of the marginal and message equations, and accumulates
//! `dO/da_ij` from the multipliers. Cost per class is linear in `|E| T`.

use std::collections::VecDeque;
use std::io::Write;

use rayon::prelude::*;

use crate::cascades::{CascadeClass, ClassStats};
use crate::dmp::{dmp_forward, DmpState};
use crate::error::{Error, Result};
use crate::graph::{DirEdgeId, EdgeParams, Graph, NodeId};
use crate::products::{leave_one_out, leave_two_out_weighted};
use crate::scalar::Scalar;

/// Lower bound applied to activation-time probabilities inside logs and denominators.
pub const MU_FLOOR: f64 = 1e-12;

/// Parameters at or below this use the product-form gradient instead of dividing by alpha.
pub const FAST_PATH_MIN_ALPHA: f64 = 1e-6;

/// Multipliers for one class, stored `[entity][t]` like [`DmpState`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState<S> {
    horizon: usize,
    lambda_node: Vec<S>,
    lambda_msg: Vec<S>,
}

impl<S: Scalar> AdjointState<S> {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn node(&self, node: NodeId, t: usize) -> S {
        self.lambda_node[node * (self.horizon + 1) + t]
    }

    #[inline]
    pub fn msg(&self, d: DirEdgeId, t: usize) -> S {
        self.lambda_msg[d * (self.horizon + 1) + t]
    }
}

pub(crate) fn check_class_state<S: Scalar>(graph: &Graph, state: &DmpState<S>, class: &CascadeClass) -> Result<()> {
    if state.num_nodes() != graph.num_nodes() || state.num_directed() != graph.num_directed() {
        return Err(Error::StateMismatch("state was computed on a different graph".into()));
    }
    if state.initial() != &class.initial {
        return Err(Error::StateMismatch(
            "state and class have different initial conditions".into(),
        ));
    }
    let width = state.horizon() + 1;
    for nc in &class.nodes {
        if nc.counts.len() != width {
            return Err(Error::StateMismatch(format!(
                "counts for node {} span {} times, state spans {width}",
                nc.node,
                nc.counts.len()
            )));
        }
        if nc.node >= graph.num_nodes() {
            return Err(Error::NodeOutOfRange {
                node: nc.node,
                num_nodes: graph.num_nodes(),
            });
        }
    }
    Ok(())
}

/// `sum m log max(mu, floor)` for one class under an arbitrary activation-time law.
pub(crate) fn class_objective_with<S: Scalar>(class: &CascadeClass, law: impl Fn(NodeId, usize) -> S) -> S {
    let floor = S::of(MU_FLOOR);
    let mut total = S::zero();
    for nc in &class.nodes {
        for (tau, &m) in nc.counts.iter().enumerate() {
            if m > 0 {
                total += S::of_count(m) * law(nc.node, tau).max(floor).ln();
            }
        }
    }
    total
}

/// Node multipliers `lambda_i(t) = -dO/dp_i(t)`, nonzero only at `t in {tau, tau - 1}`.
///
/// `scale` multiplies every data term; a uniform mixture of `R` replicas passes the
/// mixture law and `1/R`.
pub(crate) fn node_multipliers_with<S: Scalar>(
    class: &CascadeClass,
    num_nodes: usize,
    horizon: usize,
    law: impl Fn(NodeId, usize) -> S,
    scale: S,
) -> Vec<S> {
    let width = horizon + 1;
    let floor = S::of(MU_FLOOR);
    let mut lambda = vec![S::zero(); num_nodes * width];
    for nc in &class.nodes {
        let row = &mut lambda[nc.node * width..(nc.node + 1) * width];
        for (tau, &m) in nc.counts.iter().enumerate() {
            if m == 0 {
                continue;
            }
            // d mu(tau) / d p(tau) = +1 for tau < T, d mu(tau) / d p(tau - 1) = -1 for tau > 0
            let w = scale * S::of_count(m) / law(nc.node, tau).max(floor);
            if tau < horizon {
                row[tau] -= w;
            }
            if tau > 0 {
                row[tau - 1] += w;
            }
        }
    }
    lambda
}

/// For every node `j` and step `t -> t + 1`, calls `emit(d_in, bracket)` for each
/// incoming message `d_in = i -> j`, where
///
/// ```text
/// bracket = (1 - p_j(0)) * [ lambda_j(t+1) prod_{m in N(j)\i} f_m
///                           + sum_{k in N(j)\i} lambda_{j->k}(t+1) prod_{m in N(j)\{i,k}} f_m ]
/// ```
/// with `f_m = 1 - a_mj pm[m->j](t)`. Then `lambda_{i->j}(t) = a_ij * bracket` and
/// `dO/da_ij` collects `-pm[i->j](t) * bracket`.
struct BracketScratch<S> {
    factors: Vec<S>,
    weights: Vec<S>,
    loo: Vec<S>,
    l2o: Vec<S>,
}

impl<S: Scalar> BracketScratch<S> {
    fn new(cap: usize) -> Self {
        Self {
            factors: Vec::with_capacity(cap),
            weights: Vec::with_capacity(cap),
            loo: Vec::with_capacity(cap),
            l2o: Vec::with_capacity(cap),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn node_step(
        &mut self,
        graph: &Graph,
        alpha: &[S],
        state: &DmpState<S>,
        lambda_node: &[S],
        lambda_msg: &[S],
        j: NodeId,
        t: usize,
        mut emit: impl FnMut(DirEdgeId, S),
    ) {
        let width = state.horizon() + 1;
        let incs = graph.incidences(j);
        self.factors.clear();
        self.weights.clear();
        for inc in incs {
            self.factors
                .push(S::one() - alpha[inc.edge] * state.pm(inc.incoming(), t));
            self.weights.push(lambda_msg[inc.out * width + t + 1]);
        }
        leave_one_out(&self.factors, &mut self.loo);
        leave_two_out_weighted(&self.factors, &self.weights, &mut self.l2o);
        let stay = S::one() - state.init_prob(j);
        let lam_j = lambda_node[j * width + t + 1];
        for (k, inc) in incs.iter().enumerate() {
            emit(inc.incoming(), stay * (lam_j * self.loo[k] + self.l2o[k]));
        }
    }
}

pub(crate) fn backward_from_node_multipliers<S: Scalar>(
    graph: &Graph,
    params: &EdgeParams<S>,
    state: &DmpState<S>,
    lambda_node: Vec<S>,
) -> AdjointState<S> {
    let horizon = state.horizon();
    let width = horizon + 1;
    let alpha = params.values();
    let mut lambda_msg = vec![S::zero(); graph.num_directed() * width];
    let mut scratch = BracketScratch::new(graph.max_degree());
    let mut pending: Vec<(DirEdgeId, S)> = Vec::with_capacity(graph.max_degree());
    // lambda_msg(T) = 0; lambda_msg(t) needs only lambda(t + 1)
    for t in (0..horizon).rev() {
        for j in 0..graph.num_nodes() {
            pending.clear();
            scratch.node_step(graph, alpha, state, &lambda_node, &lambda_msg, j, t, |d_in, bracket| {
                pending.push((d_in, alpha[Graph::undirected_of(d_in)] * bracket));
            });
            for &(d_in, v) in &pending {
                lambda_msg[d_in * width + t] = v;
            }
        }
    }
    AdjointState {
        horizon,
        lambda_node,
        lambda_msg,
    }
}

/// Backward multiplier sweep for one class.
pub fn adjoint_backward<S: Scalar>(
    graph: &Graph,
    params: &EdgeParams<S>,
    state: &DmpState<S>,
    class: &CascadeClass,
) -> Result<AdjointState<S>> {
    params.validate_for(graph)?;
    check_class_state(graph, state, class)?;
    let lambda_node = node_multipliers_with(
        class,
        graph.num_nodes(),
        state.horizon(),
        |i, tau| state.mu(i, tau),
        S::one(),
    );
    Ok(backward_from_node_multipliers(graph, params, state, lambda_node))
}

/// Sum of `m log mu` over classes; `states[k]` must belong to `stats.classes[k]`.
pub fn objective<S: Scalar>(stats: &ClassStats, states: &[DmpState<S>]) -> Result<S> {
    if states.len() != stats.classes.len() {
        return Err(Error::ClassCountMismatch {
            expected: stats.classes.len(),
            got: states.len(),
        });
    }
    let mut total = S::zero();
    for (class, state) in stats.classes.iter().zip(states) {
        if state.initial() != &class.initial {
            return Err(Error::StateMismatch(
                "state and class have different initial conditions".into(),
            ));
        }
        total += class_objective_with(class, |i, tau| state.mu(i, tau));
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientPath {
    /// `-1/a * sum_t lambda_msg pm` where `a > FAST_PATH_MIN_ALPHA`, product form elsewhere.
    Fast,
    /// Product form everywhere.
    Full,
}

/// Adds one class's contribution to `grad`.
pub(crate) fn accumulate_class_gradient<S: Scalar>(
    graph: &Graph,
    params: &EdgeParams<S>,
    state: &DmpState<S>,
    adj: &AdjointState<S>,
    path: GradientPath,
    grad: &mut [S],
) {
    let horizon = state.horizon();
    let alpha = params.values();
    let min_alpha = S::of(FAST_PATH_MIN_ALPHA);
    let use_fast = |e: usize| path == GradientPath::Fast && alpha[e] > min_alpha;

    if path == GradientPath::Fast {
        for (e, g) in grad.iter_mut().enumerate() {
            if !use_fast(e) {
                continue;
            }
            let mut acc = S::zero();
            for d in [2 * e, 2 * e + 1] {
                for t in 0..horizon {
                    acc += adj.msg(d, t) * state.pm(d, t);
                }
            }
            *g -= acc / alpha[e];
        }
        if alpha.iter().all(|&a| a > min_alpha) {
            return;
        }
    }

    let mut scratch = BracketScratch::new(graph.max_degree());
    for t in 0..horizon {
        for j in 0..graph.num_nodes() {
            scratch.node_step(
                graph,
                alpha,
                state,
                &adj.lambda_node,
                &adj.lambda_msg,
                j,
                t,
                |d_in, bracket| {
                    let e = Graph::undirected_of(d_in);
                    if !use_fast(e) {
                        grad[e] -= state.pm(d_in, t) * bracket;
                    }
                },
            );
        }
    }
}

/// `dO/da` per undirected edge, summed over both directions, classes and times.
pub fn gradient<S: Scalar>(
    graph: &Graph,
    params: &EdgeParams<S>,
    states: &[DmpState<S>],
    adjoints: &[AdjointState<S>],
) -> Result<Vec<S>> {
    gradient_with_path(graph, params, states, adjoints, GradientPath::Fast)
}

pub fn gradient_with_path<S: Scalar>(
    graph: &Graph,
    params: &EdgeParams<S>,
    states: &[DmpState<S>],
    adjoints: &[AdjointState<S>],
    path: GradientPath,
) -> Result<Vec<S>> {
    params.validate_for(graph)?;
    if states.len() != adjoints.len() {
        return Err(Error::ClassCountMismatch {
            expected: states.len(),
            got: adjoints.len(),
        });
    }
    let mut grad = vec![S::zero(); graph.num_edges()];
    for (state, adj) in states.iter().zip(adjoints) {
        if state.horizon() != adj.horizon() || state.num_directed() != graph.num_directed() {
            return Err(Error::StateMismatch("forward and adjoint states disagree".into()));
        }
        accumulate_class_gradient(graph, params, state, adj, path, &mut grad);
    }
    Ok(grad)
}

/// DMP states for every class, computed in parallel and returned in class order.
pub fn forward_all<S: Scalar>(graph: &Graph, params: &EdgeParams<S>, stats: &ClassStats) -> Result<Vec<DmpState<S>>> {
    stats
        .classes
        .par_iter()
        .map(|c| dmp_forward(graph, params, &c.initial, stats.horizon))
        .collect()
}

/// Objective and its gradient with respect to every edge parameter.
pub trait GradientOracle<S: Scalar>: Sync {
    fn objective_and_gradient(&self, graph: &Graph, params: &EdgeParams<S>, stats: &ClassStats) -> Result<(S, Vec<S>)>;
}

/// The adjoint (backward multiplier) gradient.
#[derive(Debug, Clone, Copy, Default)]
pub struct Adjoint;

impl<S: Scalar> GradientOracle<S> for Adjoint {
    fn objective_and_gradient(&self, graph: &Graph, params: &EdgeParams<S>, stats: &ClassStats) -> Result<(S, Vec<S>)> {
        params.validate_for(graph)?;
        let per_class: Vec<(S, Vec<S>)> = stats
            .classes
            .par_iter()
            .map(|class| {
                let state = dmp_forward(graph, params, &class.initial, stats.horizon)?;
                let adj = adjoint_backward(graph, params, &state, class)?;
                let obj = class_objective_with(class, |i, tau| state.mu(i, tau));
                let mut grad = vec![S::zero(); graph.num_edges()];
                accumulate_class_gradient(graph, params, &state, &adj, GradientPath::Fast, &mut grad);
                Ok((obj, grad))
            })
            .collect::<Result<_>>()?;
        // fixed class order keeps the reduction independent of scheduling
        let mut obj = S::zero();
        let mut grad = vec![S::zero(); graph.num_edges()];
        for (o, g) in per_class {
            obj += o;
            grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        Ok((obj, grad))
    }
}

/// Starting point for gradient ascent.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Constant(f64),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    /// `c` in the step size `eps = c N / (M T)`.
    pub step_constant: f64,
    pub max_iterations: usize,
    /// Stop once `max |delta alpha|` falls below this.
    pub tolerance: f64,
    pub init: Init,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// The step is halved once this many of the last `2 patience` iterates
    /// fall below the best objective so far.
    pub patience: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            step_constant: 1.0 / 80.0,
            max_iterations: 10_000,
            tolerance: 1e-6,
            init: Init::Constant(0.5),
            alpha_min: 1e-6,
            alpha_max: 1.0 - 1e-6,
            patience: 25,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step_constant > 0.0
            && self.step_constant.is_finite()
            && self.alpha_min > 0.0
            && self.alpha_min < self.alpha_max
            && self.alpha_max < 1.0
            && self.tolerance >= 0.0
            && self.patience > 0;
        if !ok {
            return Err(Error::InvalidConfig(format!("learn config {self:?}")));
        }
        match &self.init {
            Init::Constant(a) if !(0.0..=1.0).contains(a) => {
                Err(Error::InvalidConfig(format!("initial alpha {a} outside [0, 1]")))
            }
            Init::Values(v) if v.iter().any(|a| !(0.0..=1.0).contains(a)) => {
                Err(Error::InvalidConfig("initial alpha outside [0, 1]".into()))
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn initial_values<S: Scalar>(&self, num_edges: usize) -> Result<Vec<S>> {
        let raw = match &self.init {
            Init::Constant(a) => vec![*a; num_edges],
            Init::Values(v) if v.len() == num_edges => v.clone(),
            Init::Values(v) => {
                return Err(Error::ParamMismatch {
                    expected: num_edges,
                    got: v.len(),
                })
            }
        };
        Ok(raw
            .into_iter()
            .map(|a| S::of(a.clamp(self.alpha_min, self.alpha_max)))
            .collect())
    }

    /// `eps = c N / (M T)`.
    pub fn epsilon(&self, num_nodes: usize, num_cascades: u64, horizon: usize) -> f64 {
        self.step_constant * num_nodes as f64 / (num_cascades as f64 * horizon as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// Objective at the parameters before this step.
    pub objective: f64,
    pub max_delta_alpha: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOutcome<S> {
    pub params: EdgeParams<S>,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    /// Times the step size was halved after sustained objective decrease.
    pub halvings: usize,
}

pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TraceRow]) -> Result<()> {
    writeln!(w, "iter,objective,max_delta_alpha,epsilon")?;
    for r in trace {
        writeln!(w, "{},{},{},{}", r.iter, r.objective, r.max_delta_alpha, r.epsilon)?;
    }
    Ok(())
}

pub(crate) struct Ascent<S> {
    pub values: Vec<S>,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub halvings: usize,
}

/// Fixed-step gradient ascent inside `[alpha_min, alpha_max]`, shared by the single and mixture learners.
pub(crate) fn ascend<S: Scalar>(
    mut values: Vec<S>,
    epsilon: f64,
    config: &LearnConfig,
    mut eval: impl FnMut(&[S]) -> Result<(S, Vec<S>)>,
) -> Result<Ascent<S>> {
    let lo = S::of(config.alpha_min);
    let hi = S::of(config.alpha_max);
    let half = S::of(0.5);
    let mut eps = epsilon;
    let mut trace = Vec::new();
    let mut halvings = 0;
    let mut recent = VecDeque::with_capacity(2 * config.patience + 1);
    let mut best: Option<(S, Vec<S>)> = None;
    let mut converged = false;
    for iter in 0..config.max_iterations {
        let (mut obj, mut grad) = eval(&values)?;
        let below = matches!(&best, Some((b, _)) if obj < *b);
        if !below {
            best = Some((obj, values.clone()));
        }
        recent.push_back(below);
        if recent.len() > 2 * config.patience {
            recent.pop_front();
        }
        if recent.iter().filter(|&&b| b).count() >= config.patience {
            // the step overshoots: shrink it and resume from the best iterate
            eps *= 0.5;
            halvings += 1;
            recent.clear();
            let (_, v) = best.as_ref().expect("set on the first iteration");
            values.clone_from(v);
            (obj, grad) = eval(&values)?;
        }
        let step = S::of(eps);
        let mut max_delta = S::zero();
        for (a, g) in values.iter_mut().zip(&grad) {
            // a single step covers at most half the distance to either bound
            let floor = *a - (*a - lo) * half;
            let ceil = *a + (hi - *a) * half;
            let next = (*a + step * *g).clamp_to(floor, ceil);
            max_delta = max_delta.max((next - *a).abs());
            *a = next;
        }
        trace.push(TraceRow {
            iter,
            objective: obj.as_f64(),
            max_delta_alpha: max_delta.as_f64(),
            epsilon: eps,
        });
        if max_delta.as_f64() < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(Ascent {
        values,
        trace,
        converged,
        halvings,
    })
}

/// Gradient ascent on the DMP objective with step `c N / (M T)`.
pub fn learn<S: Scalar>(graph: &Graph, stats: &ClassStats, config: &LearnConfig) -> Result<LearnOutcome<S>> {
    learn_with(graph, stats, config, &Adjoint)
}

/// [`learn`] with an arbitrary gradient oracle.
pub fn learn_with<S: Scalar, O: GradientOracle<S>>(
    graph: &Graph,
    stats: &ClassStats,
    config: &LearnConfig,
    oracle: &O,
) -> Result<LearnOutcome<S>> {
    config.validate()?;
    if stats.num_nodes != graph.num_nodes() {
        return Err(Error::StateMismatch(format!(
            "statistics cover {} nodes, graph has {}",
            stats.num_nodes,
            graph.num_nodes()
        )));
    }
    let init = config.initial_values::<S>(graph.num_edges())?;
    let total = stats.total_cascades();
    if total == 0 {
        return Ok(LearnOutcome {
            params: EdgeParams::from_raw(init),
            trace: Vec::new(),
            converged: true,
            halvings: 0,
        });
    }
    let eps = config.epsilon(graph.num_nodes(), total, stats.horizon);
    let run = ascend(init, eps, config, |vals| {
        let params = EdgeParams::from_raw(vals.to_vec());
        oracle.objective_and_gradient(graph, &params, stats)
    })?;
    Ok(LearnOutcome {
        params: EdgeParams::from_raw(run.values),
        trace: run.trace,
        converged: run.converged,
        halvings: run.halvings,
    })
}
