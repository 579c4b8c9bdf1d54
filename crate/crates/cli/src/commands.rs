use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use icdmp::cascades::io::{read_cascades, write_cascades};
use icdmp::graph::io::{write_edge_list, write_label_map};
use icdmp::graph::EdgeParams;
use icdmp::metrics::{
    marginal_distance, param_l1_error, residuals, unobserved_leaf_edges, write_report_csv, write_residuals_csv,
    EvalReport,
};
use icdmp::replicas::ReplicaModel;
use icdmp::slicer::write_trace_csv;

use crate::config::{ExperimentConfig, OracleSpec, ParamScheme};
use crate::experiment::{
    build_instance, create, learn_model, mask_from_cascades, oracle_marginals, params_for, predicted_marginals,
    read_edges, read_params, simulate as simulate_cascades, single_sources,
};

fn seed_metadata(config: &ExperimentConfig) -> BTreeMap<String, String> {
    BTreeMap::from([("seed".to_string(), config.seed.to_string())])
}

pub fn generate(config: &ExperimentConfig, graph_file: Option<&Path>) -> Result<()> {
    let inst = match graph_file {
        Some(path) => {
            let file = read_edges(path)?;
            let truth = params_for(&file.graph, &config.params, config.seed, 0)?;
            crate::experiment::Instance {
                graph: file.graph,
                truth,
                labels: file.labels,
            }
        }
        None => build_instance(&config.topology.0, &config.params, config.seed, 0)?,
    };
    let mut meta = seed_metadata(config);
    if graph_file.is_none() && !matches!(config.params, ParamScheme::File(_)) {
        meta.insert("topology".into(), config.topology.to_string());
    }
    write_edge_list::<_, f64>(create(&config.out.join("graph.edges"))?, &inst.graph, &[], &meta)?;
    meta.insert("params".into(), config.params.to_string());
    write_edge_list(
        create(&config.out.join("truth.edges"))?,
        &inst.graph,
        &[&inst.truth],
        &meta,
    )?;
    if let Some(labels) = &inst.labels {
        write_label_map(create(&config.out.join("labels.txt"))?, labels)?;
    }
    Ok(())
}

pub fn simulate(config: &ExperimentConfig, graph: &Path, truth: Option<&Path>) -> Result<()> {
    let (file, params) = read_params(truth.unwrap_or(graph))?;
    if truth.is_some() && read_edges(graph)?.graph.edges() != file.graph.edges() {
        bail!("truth file describes a different network than {}", graph.display());
    }
    config.initial.0.validate(file.graph.num_nodes())?;
    let sim = simulate_cascades(
        &file.graph,
        &params,
        &config.initial.0,
        config.horizon,
        config.cascades,
        config.xi,
        config.placement.0,
        config.seed,
        0,
    )?;
    write_cascades(create(&config.out.join("cascades.txt"))?, config.horizon, &sim.observed)?;
    Ok(())
}

pub fn learn(config: &ExperimentConfig, graph: &Path, cascade_file: &Path) -> Result<()> {
    let file = read_edges(graph)?;
    let f = std::fs::File::open(cascade_file).with_context(|| format!("cannot open {}", cascade_file.display()))?;
    let (horizon, observed) = read_cascades(std::io::BufReader::new(f))
        .with_context(|| format!("cannot parse {}", cascade_file.display()))?;
    let learned = learn_model(
        &file.graph,
        &observed,
        horizon,
        config.learner,
        &config.learn.to_config(),
        config.seed,
    )?;
    let mut meta = learned.metadata.clone();
    meta.extend(seed_metadata(config));
    let columns: Vec<&EdgeParams<f64>> = learned.model.replicas().iter().collect();
    write_edge_list(create(&config.out.join("learned.edges"))?, &file.graph, &columns, &meta)?;
    for (k, trace) in learned.traces.iter().enumerate() {
        let name = if k == 0 {
            "trace.csv".to_string()
        } else {
            format!("trace_r{}.csv", k + 1)
        };
        write_trace_csv(create(&config.out.join(name))?, trace)?;
    }
    Ok(())
}

pub fn evaluate(config: &ExperimentConfig, learned: &Path, truth: &Path, cascade_file: Option<&Path>) -> Result<()> {
    if !truth.exists() {
        bail!("truth file {} does not exist", truth.display());
    }
    let (truth_file, truth_params) = read_params(truth)?;
    let learned_file = read_edges(learned)?;
    if learned_file.graph.edges() != truth_file.graph.edges() {
        bail!(
            "{} and {} describe different networks",
            learned.display(),
            truth.display()
        );
    }
    let graph = &truth_file.graph;
    let model = ReplicaModel::new(graph, learned_file.all_params()?)
        .with_context(|| format!("{} carries no usable alpha values", learned.display()))?;
    let (horizon, initials, excluded) = match cascade_file {
        Some(path) => {
            let f = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            let (horizon, observed) = read_cascades(std::io::BufReader::new(f))
                .with_context(|| format!("cannot parse {}", path.display()))?;
            let stats = crate::experiment::class_stats(graph, &observed, horizon)?;
            let mask = mask_from_cascades(graph.num_nodes(), &observed);
            (horizon, stats.initial_conditions(), unobserved_leaf_edges(graph, &mask))
        }
        None => (config.horizon, single_sources(graph.num_nodes()), Vec::new()),
    };
    let param_l1 = match model.num_replicas() {
        1 => Some(param_l1_error(model.replica(0), &truth_params, &excluded)?),
        _ => None,
    };
    let mut report = EvalReport {
        param_l1,
        delta_p: None,
        excluded_edges: excluded,
        residuals: Vec::new(),
    };
    if let OracleSpec::MonteCarlo(samples) = config.oracle {
        let oracle = oracle_marginals(graph, &truth_params, &initials, horizon, samples, config.seed, 0)?;
        let predicted = predicted_marginals(graph, &model, &initials, horizon)?;
        report.delta_p = Some(marginal_distance(&predicted, &oracle)?);
        report.residuals = residuals(&predicted, &oracle)?;
        write_residuals_csv(create(&config.out.join("residuals.csv"))?, &report.residuals)?;
    }
    write_report_csv(create(&config.out.join("report.csv"))?, &report.rows())?;
    Ok(())
}
