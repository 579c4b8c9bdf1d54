//! Building blocks shared by the subcommands and the recipes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use icdmp::baselines::{ml_learn, Dmprec, MlConfig};
use icdmp::cascades::{
    apply_mask, build_class_stats, simulate_many, ClassStats, HiddenPlacement, InitialCondition, InitialScheme,
    ObservationMask, ObservedCascade,
};
use icdmp::dmp::dmp_forward;
use icdmp::graph::io::{read_edge_list, EdgeListFile};
use icdmp::graph::{degree_dependent_params, generate, sample_uniform_params, EdgeParams, Graph, Topology};
use icdmp::metrics::MarginalTable;
use icdmp::replicas::{learn_ladder, mixture_marginals, ReplicaModel};
use icdmp::seeding::{derive_seed, stream_rng, Stream};
use icdmp::slicer::{learn, learn_with, LearnConfig, TraceRow};

use crate::config::{Learner, ParamScheme};

pub struct Instance {
    pub graph: Graph,
    pub truth: EdgeParams<f64>,
    pub labels: Option<Vec<String>>,
}

pub fn read_edges(path: &Path) -> Result<EdgeListFile> {
    let f = File::open(path).with_context(|| format!("cannot open edge list {}", path.display()))?;
    read_edge_list(BufReader::new(f)).with_context(|| format!("cannot parse edge list {}", path.display()))
}

/// Reads an edge list that must carry one alpha column.
pub fn read_params(path: &Path) -> Result<(EdgeListFile, EdgeParams<f64>)> {
    let file = read_edges(path)?;
    let params = file
        .params()?
        .ok_or_else(|| anyhow!("{} carries no alpha values", path.display()))?;
    Ok((file, params))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Network and parameters of repetition `rep`; repetition `k` pairs network `k` with parameter set `k`.
pub fn build_instance(topology: &Topology, scheme: &ParamScheme, seed: u64, rep: u64) -> Result<Instance> {
    if let ParamScheme::File(path) = scheme {
        let (file, truth) = read_params(path)?;
        return Ok(Instance {
            graph: file.graph,
            truth,
            labels: file.labels,
        });
    }
    let graph = generate(topology, &mut stream_rng(seed, Stream::Graph, rep))?;
    let truth = params_for(&graph, scheme, seed, rep)?;
    Ok(Instance {
        graph,
        truth,
        labels: None,
    })
}

pub fn params_for(graph: &Graph, scheme: &ParamScheme, seed: u64, rep: u64) -> Result<EdgeParams<f64>> {
    Ok(match scheme {
        ParamScheme::Uniform => sample_uniform_params(graph, &mut stream_rng(seed, Stream::Params, rep)),
        ParamScheme::DegreeDependent => degree_dependent_params(graph),
        ParamScheme::File(path) => {
            let (file, params) = read_params(path)?;
            if file.graph.edges() != graph.edges() {
                bail!("{} describes a different network", path.display());
            }
            params
        }
    })
}

pub struct Simulation {
    pub mask: ObservationMask,
    pub observed: Vec<ObservedCascade>,
}

/// `count` masked cascades; a smaller count yields a prefix of a larger one.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    graph: &Graph,
    truth: &EdgeParams<f64>,
    initial: &InitialScheme,
    horizon: usize,
    count: usize,
    xi: f64,
    placement: HiddenPlacement,
    seed: u64,
    rep: u64,
) -> Result<Simulation> {
    let mask = ObservationMask::sample(graph, xi, placement, &mut stream_rng(seed, Stream::Mask, rep))?;
    let cascades = simulate_many(
        graph,
        truth,
        initial,
        horizon,
        count,
        derive_seed(seed, Stream::Cascades, rep),
    )?;
    let observed = cascades.iter().map(|c| apply_mask(c, &mask)).collect();
    Ok(Simulation { mask, observed })
}

pub fn class_stats(graph: &Graph, observed: &[ObservedCascade], horizon: usize) -> Result<ClassStats> {
    Ok(build_class_stats(observed, graph.num_nodes(), horizon)?)
}

/// Observed nodes as recorded in a cascade file.
pub fn mask_from_cascades(num_nodes: usize, observed: &[ObservedCascade]) -> ObservationMask {
    let mut flags = vec![false; num_nodes];
    for c in observed {
        for &(i, _) in &c.observations {
            if i < num_nodes {
                flags[i] = true;
            }
        }
    }
    ObservationMask::from_flags(flags)
}

pub struct Learned {
    pub model: ReplicaModel<f64>,
    /// One trace per rung; a single entry unless the replica ladder ran.
    pub traces: Vec<Vec<TraceRow>>,
    pub metadata: BTreeMap<String, String>,
}

impl Learned {
    pub fn params(&self) -> &EdgeParams<f64> {
        self.model.replica(0)
    }
}

pub fn learn_model(
    graph: &Graph,
    observed: &[ObservedCascade],
    horizon: usize,
    learner: Learner,
    config: &LearnConfig,
    seed: u64,
) -> Result<Learned> {
    let mut metadata = BTreeMap::new();
    metadata.insert("learner".to_string(), learner.to_string());
    if learner == Learner::Ml {
        let out = ml_learn(observed, graph, &MlConfig::default()).map_err(|e| match e {
            icdmp::Error::PartialObservation(_) => {
                anyhow!("learner 'ml' needs fully observed cascades, but the data hides some nodes")
            }
            other => other.into(),
        })?;
        metadata.insert("iterations".into(), out.iterations.to_string());
        metadata.insert("converged".into(), out.converged.to_string());
        metadata.insert("neg_log_likelihood".into(), out.objective.to_string());
        return Ok(Learned {
            model: ReplicaModel::single(out.params),
            traces: vec![Vec::new()],
            metadata,
        });
    }
    let stats = class_stats(graph, observed, horizon)?;
    let single = match learner {
        Learner::Dmprec => learn_with(graph, &stats, config, &Dmprec)?,
        _ => learn(graph, &stats, config)?,
    };
    metadata.insert("converged".into(), single.converged.to_string());
    metadata.insert("iterations".into(), single.trace.len().to_string());
    let mut traces = vec![single.trace];
    let mut model = ReplicaModel::single(single.params);
    if let Learner::Replicas { count, sigma } = learner {
        for r in 2..=count {
            let mut rng = stream_rng(seed, Stream::Perturbation, r as u64);
            let rung = learn_ladder(graph, &stats, &model, r, sigma, config, &mut rng, None)?;
            metadata.insert(format!("converged_r{r}"), rung.outcome.converged.to_string());
            traces.push(rung.outcome.trace);
            model = rung.outcome.model;
        }
    }
    Ok(Learned {
        model,
        traces,
        metadata,
    })
}

/// DMP marginals of a (possibly mixed) model for every initial condition.
pub fn predicted_marginals(
    graph: &Graph,
    model: &ReplicaModel<f64>,
    initials: &[InitialCondition],
    horizon: usize,
) -> icdmp::Result<MarginalTable> {
    if model.num_replicas() == 1 {
        let states = initials
            .iter()
            .map(|c| dmp_forward(graph, model.replica(0), c, horizon))
            .collect::<icdmp::Result<Vec<_>>>()?;
        MarginalTable::from_states(&states)
    } else {
        let states = initials
            .iter()
            .map(|c| mixture_marginals(model, graph, c, horizon))
            .collect::<icdmp::Result<Vec<_>>>()?;
        MarginalTable::from_mixture(&states)
    }
}

pub fn oracle_marginals(
    graph: &Graph,
    truth: &EdgeParams<f64>,
    initials: &[InitialCondition],
    horizon: usize,
    samples: usize,
    seed: u64,
    rep: u64,
) -> Result<MarginalTable> {
    let mut rng = stream_rng(seed, Stream::Oracle, rep);
    Ok(MarginalTable::monte_carlo(
        graph, truth, initials, horizon, samples, &mut rng,
    )?)
}

pub fn single_sources(num_nodes: usize) -> Vec<InitialCondition> {
    (0..num_nodes).map(InitialCondition::SingleSource).collect()
}

pub fn write_lines<W: Write>(mut w: W, lines: impl IntoIterator<Item = String>) -> Result<()> {
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}
