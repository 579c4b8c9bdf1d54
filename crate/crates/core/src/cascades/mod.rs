//! Independent cascade simulation, observation masks and per-class statistics.

pub mod io;

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{DirEdgeId, EdgeParams, Graph, NodeId};
use crate::scalar::Scalar;
use crate::seeding::{stream_rng, Stream};

/// Initial state of a cascade.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    SingleSource(NodeId),
    /// Several deterministic seeds, sorted and deduplicated.
    SeedSet(Vec<NodeId>),
    /// Node `i` is active at `t = 0` independently with probability `law[i]`.
    Stochastic(Arc<Vec<f64>>),
}

impl InitialCondition {
    /// Normalizes a seed list; a single seed becomes `SingleSource`.
    pub fn seeds(mut nodes: Vec<NodeId>) -> Self {
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.len() == 1 {
            InitialCondition::SingleSource(nodes[0])
        } else {
            InitialCondition::SeedSet(nodes)
        }
    }

    pub fn stochastic_uniform(num_nodes: usize, p: f64) -> Self {
        InitialCondition::Stochastic(Arc::new(vec![p; num_nodes]))
    }

    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        match self {
            InitialCondition::SingleSource(s) => check_node(*s, num_nodes),
            InitialCondition::SeedSet(v) => v.iter().try_for_each(|&s| check_node(s, num_nodes)),
            InitialCondition::Stochastic(law) => {
                if law.len() != num_nodes {
                    return Err(Error::InvalidConfig(format!(
                        "stochastic law has {} entries for {num_nodes} nodes",
                        law.len()
                    )));
                }
                match law.iter().position(|p| !(0.0..=1.0).contains(p)) {
                    Some(i) => Err(Error::InvalidConfig(format!(
                        "initial probability {} on node {i}",
                        law[i]
                    ))),
                    None => Ok(()),
                }
            }
        }
    }

    /// Per-node `p(0)`.
    pub fn initial_probs<S: Scalar>(&self, num_nodes: usize) -> Vec<S> {
        match self {
            InitialCondition::SingleSource(s) => {
                let mut v = vec![S::zero(); num_nodes];
                v[*s] = S::one();
                v
            }
            InitialCondition::SeedSet(seeds) => {
                let mut v = vec![S::zero(); num_nodes];
                for &s in seeds {
                    v[s] = S::one();
                }
                v
            }
            InitialCondition::Stochastic(law) => law.iter().map(|&p| S::of(p)).collect(),
        }
    }

    fn same_class(&self, other: &Self) -> bool {
        match (self, other) {
            (InitialCondition::Stochastic(a), InitialCondition::Stochastic(b)) => Arc::ptr_eq(a, b) || a == b,
            _ => self == other,
        }
    }
}

fn check_node(node: NodeId, num_nodes: usize) -> Result<()> {
    if node < num_nodes {
        Ok(())
    } else {
        Err(Error::NodeOutOfRange { node, num_nodes })
    }
}

/// How each simulated cascade picks its initial condition.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialScheme {
    /// One seed drawn uniformly per cascade.
    UniformSource,
    /// `size` distinct seeds drawn uniformly per cascade.
    UniformSeedSet { size: usize },
    /// Every node seeded independently with probability `mean_seeds / N`.
    Stochastic { mean_seeds: f64 },
}

impl InitialScheme {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        match *self {
            InitialScheme::UniformSource if num_nodes > 0 => Ok(()),
            InitialScheme::UniformSeedSet { size } if size >= 1 && size <= num_nodes => Ok(()),
            InitialScheme::Stochastic { mean_seeds } if mean_seeds >= 0.0 && mean_seeds <= num_nodes as f64 => Ok(()),
            _ => Err(Error::InvalidConfig(format!(
                "initial scheme {self:?} on {num_nodes} nodes"
            ))),
        }
    }

    /// Shared stochastic law, if any; reuse it across cascades so they form one class.
    pub fn shared_law(&self, num_nodes: usize) -> Option<InitialCondition> {
        match *self {
            InitialScheme::Stochastic { mean_seeds } => Some(InitialCondition::stochastic_uniform(
                num_nodes,
                mean_seeds / num_nodes as f64,
            )),
            _ => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        num_nodes: usize,
        shared: Option<&InitialCondition>,
        rng: &mut R,
    ) -> InitialCondition {
        match *self {
            InitialScheme::UniformSource => InitialCondition::SingleSource(rng.gen_range(0..num_nodes)),
            InitialScheme::UniformSeedSet { size } => {
                InitialCondition::seeds(rand::seq::index::sample(rng, num_nodes, size).into_vec())
            }
            InitialScheme::Stochastic { .. } => shared
                .cloned()
                .unwrap_or_else(|| self.shared_law(num_nodes).expect("stochastic scheme has a law")),
        }
    }
}

/// Activation times of one realization; `tau[i] == horizon` means not active before `horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    pub initial: InitialCondition,
    pub tau: Vec<u32>,
    pub horizon: u32,
}

pub(crate) const NEVER: u32 = u32::MAX;

/// Reusable simulation buffers.
pub struct Simulator<'g> {
    graph: &'g Graph,
    alpha: Vec<f64>,
    activation: Vec<u32>,
    front: Vec<NodeId>,
    next: Vec<NodeId>,
}

impl<'g> Simulator<'g> {
    pub fn new<S: Scalar>(graph: &'g Graph, params: &EdgeParams<S>) -> Result<Self> {
        params.validate_for(graph)?;
        Ok(Self {
            graph,
            alpha: params.values().iter().map(|a| a.as_f64()).collect(),
            activation: vec![NEVER; graph.num_nodes()],
            front: Vec::new(),
            next: Vec::new(),
        })
    }

    /// First activation times up to and including `horizon`; [`NEVER`] otherwise.
    /// `on_attempt` sees every directed transmission attempt.
    pub fn run_with<R: Rng + ?Sized>(
        &mut self,
        initial: &InitialCondition,
        horizon: u32,
        rng: &mut R,
        mut on_attempt: impl FnMut(DirEdgeId),
    ) -> &[u32] {
        self.activation.fill(NEVER);
        self.front.clear();
        match initial {
            InitialCondition::SingleSource(s) => self.front.push(*s),
            InitialCondition::SeedSet(seeds) => self.front.extend_from_slice(seeds),
            InitialCondition::Stochastic(law) => {
                for (i, &p) in law.iter().enumerate() {
                    if rng.gen::<f64>() < p {
                        self.front.push(i);
                    }
                }
            }
        }
        for &s in &self.front {
            self.activation[s] = 0;
        }
        for t in 0..horizon {
            self.next.clear();
            for &u in &self.front {
                for inc in self.graph.incidences(u) {
                    let v = inc.neighbor;
                    if self.activation[v] != NEVER {
                        continue;
                    }
                    on_attempt(inc.out);
                    if rng.gen::<f64>() < self.alpha[inc.edge] {
                        self.activation[v] = t + 1;
                        self.next.push(v);
                    }
                }
            }
            std::mem::swap(&mut self.front, &mut self.next);
            if self.front.is_empty() {
                break;
            }
        }
        &self.activation
    }

    pub fn simulate<R: Rng + ?Sized>(&mut self, initial: &InitialCondition, horizon: u32, rng: &mut R) -> Cascade {
        let tau = self
            .run_with(initial, horizon, rng, |_| {})
            .iter()
            .map(|&a| a.min(horizon))
            .collect();
        Cascade {
            initial: initial.clone(),
            tau,
            horizon,
        }
    }
}

/// One discrete-time IC realization truncated at `horizon`.
pub fn simulate_ic<S: Scalar, R: Rng + ?Sized>(
    graph: &Graph,
    params: &EdgeParams<S>,
    initial: &InitialCondition,
    horizon: usize,
    rng: &mut R,
) -> Result<Cascade> {
    check_horizon(horizon)?;
    initial.validate(graph.num_nodes())?;
    Ok(Simulator::new(graph, params)?.simulate(initial, horizon as u32, rng))
}

pub(crate) fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 || horizon > u32::MAX as usize / 2 {
        return Err(Error::InvalidHorizon(format!("T = {horizon}, need T >= 1")));
    }
    Ok(())
}

/// `count` cascades; cascade `c` draws everything from its own stream of `master_seed`.
pub fn simulate_many<S: Scalar>(
    graph: &Graph,
    params: &EdgeParams<S>,
    scheme: &InitialScheme,
    horizon: usize,
    count: usize,
    master_seed: u64,
) -> Result<Vec<Cascade>> {
    check_horizon(horizon)?;
    params.validate_for(graph)?;
    scheme.validate(graph.num_nodes())?;
    let shared = scheme.shared_law(graph.num_nodes());
    const CHUNK: usize = 1024;
    let chunks: Vec<Vec<Cascade>> = (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut sim = Simulator::new(graph, params).expect("validated");
            let lo = chunk * CHUNK;
            (lo..count.min(lo + CHUNK))
                .map(|c| {
                    let mut rng = stream_rng(master_seed, Stream::Cascades, c as u64);
                    let initial = scheme.sample(graph.num_nodes(), shared.as_ref(), &mut rng);
                    sim.simulate(&initial, horizon as u32, &mut rng)
                })
                .collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// Where hidden nodes are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiddenPlacement {
    Random,
    HighDegree,
    LowDegree,
}

impl std::str::FromStr for HiddenPlacement {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(HiddenPlacement::Random),
            "high_degree" => Ok(HiddenPlacement::HighDegree),
            "low_degree" => Ok(HiddenPlacement::LowDegree),
            _ => Err(Error::InvalidConfig(format!("unknown hidden placement '{s}'"))),
        }
    }
}

impl std::fmt::Display for HiddenPlacement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HiddenPlacement::Random => "random",
            HiddenPlacement::HighDegree => "high_degree",
            HiddenPlacement::LowDegree => "low_degree",
        })
    }
}

/// Nodes whose activation times are observed, fixed across all cascades.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMask {
    observed: Vec<bool>,
}

impl ObservationMask {
    pub fn all(num_nodes: usize) -> Self {
        Self {
            observed: vec![true; num_nodes],
        }
    }

    pub fn from_flags(observed: Vec<bool>) -> Self {
        Self { observed }
    }

    pub fn from_hidden(num_nodes: usize, hidden: &[NodeId]) -> Result<Self> {
        let mut observed = vec![true; num_nodes];
        for &h in hidden {
            check_node(h, num_nodes)?;
            observed[h] = false;
        }
        Ok(Self { observed })
    }

    /// Hides exactly `floor(xi * N)` nodes.
    pub fn sample<R: Rng + ?Sized>(graph: &Graph, xi: f64, placement: HiddenPlacement, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::InvalidConfig(format!("hidden fraction {xi} outside [0, 1]")));
        }
        let n = graph.num_nodes();
        let hidden_count = hidden_count(n, xi);
        let mut order: Vec<NodeId> = (0..n).collect();
        order.shuffle(rng);
        match placement {
            HiddenPlacement::Random => {}
            HiddenPlacement::HighDegree => order.sort_by_key(|&v| std::cmp::Reverse(graph.degree(v))),
            HiddenPlacement::LowDegree => order.sort_by_key(|&v| graph.degree(v)),
        }
        Self::from_hidden(n, &order[..hidden_count])
    }

    #[inline]
    pub fn is_observed(&self, node: NodeId) -> bool {
        self.observed[node]
    }

    pub fn num_nodes(&self) -> usize {
        self.observed.len()
    }

    pub fn num_observed(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn flags(&self) -> &[bool] {
        &self.observed
    }
}

pub fn hidden_count(num_nodes: usize, xi: f64) -> usize {
    ((xi * num_nodes as f64) + 1e-9).floor() as usize
}

/// A cascade restricted to its observed `(node, tau)` entries, sorted by node.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedCascade {
    pub initial: InitialCondition,
    pub horizon: u32,
    pub observations: Vec<(NodeId, u32)>,
}

impl ObservedCascade {
    pub fn full(cascade: &Cascade) -> Self {
        Self {
            initial: cascade.initial.clone(),
            horizon: cascade.horizon,
            observations: cascade.tau.iter().copied().enumerate().collect(),
        }
    }

    /// Activation times for every node, or `None` if any node is hidden.
    pub fn complete_times(&self, num_nodes: usize) -> Option<Vec<u32>> {
        if self.observations.len() != num_nodes {
            return None;
        }
        let mut tau = vec![0; num_nodes];
        for (k, &(node, t)) in self.observations.iter().enumerate() {
            if node != k {
                return None;
            }
            tau[node] = t;
        }
        Some(tau)
    }
}

pub fn apply_mask(cascade: &Cascade, mask: &ObservationMask) -> ObservedCascade {
    ObservedCascade {
        initial: cascade.initial.clone(),
        horizon: cascade.horizon,
        observations: cascade
            .tau
            .iter()
            .copied()
            .enumerate()
            .filter(|&(i, _)| mask.is_observed(i))
            .collect(),
    }
}

/// Histogram of observed activation times of one node within one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeCounts {
    pub node: NodeId,
    /// `counts[tau]` for `tau` in `0..=T`.
    pub counts: Vec<u64>,
}

impl NodeCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// All cascades sharing one initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeClass {
    pub initial: InitialCondition,
    pub num_cascades: u64,
    /// Observed nodes, sorted by id.
    pub nodes: Vec<NodeCounts>,
}

/// Sufficient statistics for learning.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub horizon: usize,
    pub num_nodes: usize,
    pub classes: Vec<CascadeClass>,
}

impl ClassStats {
    pub fn total_cascades(&self) -> u64 {
        self.classes.iter().map(|c| c.num_cascades).sum()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Nodes observed in at least one class.
    pub fn observed_nodes(&self) -> Vec<bool> {
        let mut seen = vec![false; self.num_nodes];
        for c in &self.classes {
            for nc in &c.nodes {
                seen[nc.node] = true;
            }
        }
        seen
    }

    pub fn initial_conditions(&self) -> Vec<InitialCondition> {
        self.classes.iter().map(|c| c.initial.clone()).collect()
    }
}

/// Groups cascades by initial condition and counts observed activation times.
///
/// Deterministic seed classes are ordered by their seed lists; stochastic laws
/// follow in order of first appearance.
pub fn build_class_stats(observed: &[ObservedCascade], num_nodes: usize, horizon: usize) -> Result<ClassStats> {
    check_horizon(horizon)?;
    let mut seeded: HashMap<Vec<NodeId>, usize> = HashMap::new();
    let mut stochastic: Vec<usize> = Vec::new();
    let mut classes: Vec<(CascadeClass, HashMap<NodeId, Vec<u64>>)> = Vec::new();

    for oc in observed {
        if oc.horizon as usize != horizon {
            return Err(Error::MixedHorizons(horizon, oc.horizon as usize));
        }
        oc.initial.validate(num_nodes)?;
        let idx = match &oc.initial {
            InitialCondition::SingleSource(s) => class_slot(&mut seeded, &mut classes, vec![*s], &oc.initial),
            InitialCondition::SeedSet(v) => class_slot(&mut seeded, &mut classes, v.clone(), &oc.initial),
            InitialCondition::Stochastic(_) => {
                match stochastic
                    .iter()
                    .find(|&&k| classes[k].0.initial.same_class(&oc.initial))
                {
                    Some(&k) => k,
                    None => {
                        classes.push((new_class(&oc.initial), HashMap::new()));
                        stochastic.push(classes.len() - 1);
                        classes.len() - 1
                    }
                }
            }
        };
        let (class, counts) = &mut classes[idx];
        class.num_cascades += 1;
        for &(node, tau) in &oc.observations {
            check_node(node, num_nodes)?;
            if tau as usize > horizon {
                return Err(Error::TimeOutOfRange {
                    tau: tau as usize,
                    horizon,
                });
            }
            counts.entry(node).or_insert_with(|| vec![0; horizon + 1])[tau as usize] += 1;
        }
    }

    let mut out: Vec<CascadeClass> = classes
        .into_iter()
        .map(|(mut class, counts)| {
            let mut nodes: Vec<NodeCounts> = counts
                .into_iter()
                .map(|(node, counts)| NodeCounts { node, counts })
                .collect();
            nodes.sort_unstable_by_key(|n| n.node);
            class.nodes = nodes;
            class
        })
        .collect();
    out.sort_by_key(|c| class_order(&c.initial));
    Ok(ClassStats {
        horizon,
        num_nodes,
        classes: out,
    })
}

fn class_order(ic: &InitialCondition) -> (u8, Vec<NodeId>) {
    match ic {
        InitialCondition::SingleSource(s) => (0, vec![*s]),
        InitialCondition::SeedSet(v) => (0, v.clone()),
        InitialCondition::Stochastic(_) => (1, Vec::new()),
    }
}

fn new_class(initial: &InitialCondition) -> CascadeClass {
    CascadeClass {
        initial: initial.clone(),
        num_cascades: 0,
        nodes: Vec::new(),
    }
}

fn class_slot(
    seeded: &mut HashMap<Vec<NodeId>, usize>,
    classes: &mut Vec<(CascadeClass, HashMap<NodeId, Vec<u64>>)>,
    key: Vec<NodeId>,
    initial: &InitialCondition,
) -> usize {
    *seeded.entry(key).or_insert_with(|| {
        classes.push((new_class(initial), HashMap::new()));
        classes.len() - 1
    })
}

/// Monte Carlo estimate of `P(node active by t)`.
#[derive(Debug, Clone)]
pub struct McMarginals {
    pub num_nodes: usize,
    pub horizon: usize,
    pub samples: usize,
    /// Row-major `[node][t]`.
    pub p: Vec<f64>,
    /// Binomial standard error of each entry.
    pub stderr: Vec<f64>,
}

impl McMarginals {
    #[inline]
    pub fn at(&self, node: NodeId, t: usize) -> f64 {
        self.p[node * (self.horizon + 1) + t]
    }

    #[inline]
    pub fn stderr_at(&self, node: NodeId, t: usize) -> f64 {
        self.stderr[node * (self.horizon + 1) + t]
    }

    pub fn influence(&self) -> f64 {
        (0..self.num_nodes).map(|i| self.at(i, self.horizon)).sum()
    }
}

/// Marginals from `num_samples` independent cascades. Work is split into fixed-size
/// chunks seeded from one draw of `rng`, so the result does not depend on thread count.
pub fn mc_marginals<S: Scalar, R: Rng + ?Sized>(
    graph: &Graph,
    params: &EdgeParams<S>,
    initial: &InitialCondition,
    horizon: usize,
    num_samples: usize,
    rng: &mut R,
) -> Result<McMarginals> {
    check_horizon(horizon)?;
    initial.validate(graph.num_nodes())?;
    params.validate_for(graph)?;
    if num_samples == 0 {
        return Err(Error::InvalidConfig("Monte Carlo needs at least one sample".into()));
    }
    let base = rng.gen::<u64>();
    let n = graph.num_nodes();
    let width = horizon + 1;
    const CHUNK: usize = 4096;
    let counts = (0..num_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut sim = Simulator::new(graph, params).expect("validated");
            let mut rng = stream_rng(base, Stream::Oracle, chunk as u64);
            let mut counts = vec![0u64; n * width];
            let lo = chunk * CHUNK;
            for _ in lo..num_samples.min(lo + CHUNK) {
                for (i, &a) in sim
                    .run_with(initial, horizon as u32, &mut rng, |_| {})
                    .iter()
                    .enumerate()
                {
                    if a != NEVER {
                        counts[i * width + a as usize] += 1;
                    }
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; n * width],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let total = num_samples as f64;
    let mut p = vec![0.0; n * width];
    let mut stderr = vec![0.0; n * width];
    for i in 0..n {
        let mut cum = 0u64;
        for t in 0..width {
            cum += counts[i * width + t];
            let q = cum as f64 / total;
            p[i * width + t] = q;
            stderr[i * width + t] = (q * (1.0 - q) / total).sqrt();
        }
    }
    Ok(McMarginals {
        num_nodes: n,
        horizon,
        samples: num_samples,
        p,
        stderr,
    })
}
