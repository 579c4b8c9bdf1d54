//! Desk-scale versions of the published experiments.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Result};
use icdmp::cascades::{HiddenPlacement, InitialScheme};
use icdmp::graph::{EdgeParams, Graph, Topology};
use icdmp::metrics::{
    marginal_distance, mean_stderr, param_l1_error, residuals, unobserved_leaf_edges, write_residuals_csv,
    MarginalTable,
};
use icdmp::replicas::{learn_ladder, learn_mixture, ReplicaModel};
use icdmp::seeding::{stream_rng, Stream};
use icdmp::slicer::{learn, Adjoint, GradientOracle, LearnConfig};

use crate::config::{ExperimentConfig, Learner, ParamScheme};
use crate::experiment::{
    build_instance, class_stats, create, learn_model, oracle_marginals, predicted_marginals, simulate, single_sources,
    write_lines,
};

pub struct Recipe {
    pub id: &'static str,
    pub summary: &'static str,
    pub published_scale: &'static str,
    pub reduction: &'static str,
    run: fn(&Ctx) -> Result<()>,
}

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    smoke: bool,
}

impl Ctx<'_> {
    fn seed(&self) -> u64 {
        self.config.seed
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.out.join(name)
    }

    fn learn_config(&self) -> LearnConfig {
        let mut c = self.config.learn.to_config();
        if self.smoke {
            c.max_iterations = c.max_iterations.min(200);
        }
        c
    }

    fn pick<T>(&self, desk: T, smoke: T) -> T {
        if self.smoke {
            smoke
        } else {
            desk
        }
    }
}

const RECIPES: &[Recipe] = &[
    Recipe {
        id: "fig1a-desk",
        summary: "parameter error against the number of cascades for slicer, dmprec and ml",
        published_scale: "3-regular tree, N=20, T=5, five parameter sets",
        reduction: "M in {1e2, 1e3, 1e4}, five paired repetitions",
        run: fig1a,
    },
    Recipe {
        id: "fig2a-desk",
        summary: "parameter error against M under full observation, T=5, five topologies",
        published_scale: "N=100, T=5, M up to 1e6, 5 networks x 5 parameter sets",
        reduction: "M in {1e2, 1e3, 1e4}, two paired network/parameter repetitions",
        run: fig2a,
    },
    Recipe {
        id: "fig2b-desk",
        summary: "parameter error against M under full observation, T=10, five topologies",
        published_scale: "N=100, T=10, M up to 1e6, 5 networks x 5 parameter sets",
        reduction: "M in {1e2, 1e3, 1e4}, two paired network/parameter repetitions",
        run: fig2b,
    },
    Recipe {
        id: "fig3-desk",
        summary: "parameter error against M with hidden nodes on regular trees and random regular graphs",
        published_scale: "N=100, T in {5, 10}, random hidden nodes, 5 networks x 5 parameter sets",
        reduction: "xi in {0.15, 0.25}, M in {1e3, 1e4}, two paired repetitions",
        run: fig3,
    },
    Recipe {
        id: "fig5-desk",
        summary: "effective model: marginal error of DMP with learned against true parameters",
        published_scale: "10x10 lattice, T=20, M=1e6, oracle 1e6 Monte Carlo cascades per source",
        reduction: "6x6 lattice, T=12, M=1e5, oracle 1e4 cascades per source",
        run: fig5,
    },
    Recipe {
        id: "fig6-desk",
        summary: "replica ladder and the effect of the perturbation size on a 2-replica model",
        published_scale: "10x10 lattice, T=20, M=1e6, xi in {0, 0.15}",
        reduction: "6x6 lattice, T=12, M=1e5, oracle 1e4 cascades per source, up to 3 replicas",
        run: fig6,
    },
    Recipe {
        id: "figA2-desk",
        summary: "gradient step time against the horizon T, with a zero-intercept linear fit",
        published_scale: "random 3-regular graph, N=100, M=100, five networks",
        reduction: "T in {5, 10, 20, 40}, three networks, 20 timed steps each",
        run: fig_a2,
    },
    Recipe {
        id: "figA3-desk",
        summary: "gradient step time against the number of cascades M",
        published_scale: "random 3-regular graph, N=100, T=10, five networks",
        reduction: "M in {1e1, 1e2, 1e3, 1e4}, three networks, 20 timed steps each",
        run: fig_a3,
    },
    Recipe {
        id: "figA4-desk",
        summary: "gradient step time against the network size N, with a zero-intercept linear fit",
        published_scale: "random 3-regular graphs, M=100, T=10, five networks per size",
        reduction: "N in {100, 200, 400, 800}, three networks, 20 timed steps each",
        run: fig_a4,
    },
];

pub fn lookup(id: &str) -> Result<&'static Recipe> {
    match RECIPES.iter().find(|r| r.id == id) {
        Some(r) => Ok(r),
        None => {
            let ids: Vec<&str> = RECIPES.iter().map(|r| r.id).collect();
            bail!("unknown recipe '{id}'; available recipes: {}", ids.join(", "))
        }
    }
}

pub fn reproduce(config: &ExperimentConfig, id: &str, smoke: bool) -> Result<()> {
    let recipe = lookup(id)?;
    let ctx = Ctx { config, smoke };
    write_lines(
        create(&ctx.path("recipe.txt"))?,
        [
            format!("recipe: {}", recipe.id),
            format!("what: {}", recipe.summary),
            format!("published scale: {}", recipe.published_scale),
            format!("desk scale: {}", recipe.reduction),
            format!("smoke: {smoke}"),
            format!("seed: {}", config.seed),
        ],
    )?;
    (recipe.run)(&ctx)
}

fn fmt_row(fields: &[String]) -> String {
    fields.join(",")
}

struct Curve<'a> {
    name: &'a str,
    topologies: Vec<Topology>,
    horizons: Vec<usize>,
    xis: Vec<f64>,
    ms: Vec<usize>,
    reps: u64,
    learners: Vec<Learner>,
}

/// Parameter error against M; the cascades of a smaller M are a prefix of a larger one.
fn error_curves(ctx: &Ctx, curve: Curve) -> Result<()> {
    let config = ctx.learn_config();
    let max_m = *curve.ms.iter().max().expect("non-empty grid");
    let mut rows = vec!["topology,horizon,xi,learner,m,rep,param_l1,converged".to_string()];
    let mut summary = vec!["topology,horizon,xi,learner,m,mean,stderr,n_instances".to_string()];
    for topo in &curve.topologies {
        for &horizon in &curve.horizons {
            for &xi in &curve.xis {
                let mut errors = vec![vec![Vec::new(); curve.ms.len()]; curve.learners.len()];
                for rep in 0..curve.reps {
                    let inst = build_instance(topo, &ParamScheme::Uniform, ctx.seed(), rep)?;
                    let sim = simulate(
                        &inst.graph,
                        &inst.truth,
                        &InitialScheme::UniformSource,
                        horizon,
                        max_m,
                        xi,
                        HiddenPlacement::Random,
                        ctx.seed(),
                        rep,
                    )?;
                    let excluded = unobserved_leaf_edges(&inst.graph, &sim.mask);
                    for (li, &learner) in curve.learners.iter().enumerate() {
                        for (mi, &m) in curve.ms.iter().enumerate() {
                            let out =
                                learn_model(&inst.graph, &sim.observed[..m], horizon, learner, &config, ctx.seed())?;
                            let err = param_l1_error(out.params(), &inst.truth, &excluded)?;
                            errors[li][mi].push(err);
                            rows.push(fmt_row(&[
                                topo.to_string(),
                                horizon.to_string(),
                                xi.to_string(),
                                learner.to_string(),
                                m.to_string(),
                                rep.to_string(),
                                err.to_string(),
                                out.metadata["converged"].clone(),
                            ]));
                        }
                    }
                }
                for (li, learner) in curve.learners.iter().enumerate() {
                    for (mi, m) in curve.ms.iter().enumerate() {
                        let (mean, se) = mean_stderr(&errors[li][mi])?;
                        summary.push(fmt_row(&[
                            topo.to_string(),
                            horizon.to_string(),
                            xi.to_string(),
                            learner.to_string(),
                            m.to_string(),
                            mean.to_string(),
                            se.to_string(),
                            errors[li][mi].len().to_string(),
                        ]));
                    }
                }
            }
        }
    }
    write_lines(create(&ctx.path(&format!("{}.csv", curve.name)))?, rows)?;
    write_lines(create(&ctx.path(&format!("{}_summary.csv", curve.name)))?, summary)
}

fn fig1a(ctx: &Ctx) -> Result<()> {
    error_curves(
        ctx,
        Curve {
            name: "fig1a",
            topologies: vec![Topology::RegularTree { degree: 3, nodes: 20 }],
            horizons: vec![5],
            xis: vec![0.0],
            ms: ctx.pick(vec![100, 1000, 10000], vec![50, 200]),
            reps: ctx.pick(5, 1),
            learners: vec![Learner::Slicer, Learner::Dmprec, Learner::Ml],
        },
    )
}

fn five_topologies(n_side: usize) -> Vec<Topology> {
    let n = n_side * n_side;
    vec![
        Topology::RegularTree { degree: 3, nodes: n },
        Topology::ScaleFreeTree { nodes: n },
        Topology::RandomRegular { degree: 3, nodes: n },
        Topology::ErdosRenyi {
            nodes: n,
            avg_degree: 3.0,
        },
        Topology::SquareLattice { side: n_side },
    ]
}

fn full_observation(ctx: &Ctx, name: &str, horizon: usize) -> Result<()> {
    error_curves(
        ctx,
        Curve {
            name,
            topologies: five_topologies(ctx.pick(10, 4)),
            horizons: vec![horizon],
            xis: vec![0.0],
            ms: ctx.pick(vec![100, 1000, 10000], vec![100]),
            reps: ctx.pick(2, 1),
            learners: vec![Learner::Slicer],
        },
    )
}

fn fig2a(ctx: &Ctx) -> Result<()> {
    full_observation(ctx, "fig2a", 5)
}

fn fig2b(ctx: &Ctx) -> Result<()> {
    full_observation(ctx, "fig2b", 10)
}

fn fig3(ctx: &Ctx) -> Result<()> {
    let n = ctx.pick(100, 16);
    error_curves(
        ctx,
        Curve {
            name: "fig3",
            topologies: vec![
                Topology::RegularTree { degree: 3, nodes: n },
                Topology::RandomRegular { degree: 3, nodes: n },
            ],
            horizons: vec![5, 10],
            xis: vec![0.15, 0.25],
            ms: ctx.pick(vec![1000, 10000], vec![200]),
            reps: ctx.pick(2, 1),
            learners: vec![Learner::Slicer],
        },
    )
}

struct Lattice {
    graph: Graph,
    truth: EdgeParams<f64>,
    horizon: usize,
    oracle: MarginalTable,
}

fn lattice(ctx: &Ctx) -> Result<(Lattice, usize)> {
    let side = ctx.pick(6, 3);
    let horizon = ctx.pick(12, 6);
    let samples = ctx.pick(10_000, 500);
    let m = ctx.pick(100_000, 2_000);
    let inst = build_instance(&Topology::SquareLattice { side }, &ParamScheme::Uniform, ctx.seed(), 0)?;
    let sources = single_sources(inst.graph.num_nodes());
    let oracle = oracle_marginals(&inst.graph, &inst.truth, &sources, horizon, samples, ctx.seed(), 0)?;
    Ok((
        Lattice {
            graph: inst.graph,
            truth: inst.truth,
            horizon,
            oracle,
        },
        m,
    ))
}

impl Lattice {
    fn delta_p(&self, model: &ReplicaModel<f64>) -> icdmp::Result<f64> {
        let sources = single_sources(self.graph.num_nodes());
        let predicted = predicted_marginals(&self.graph, model, &sources, self.horizon)?;
        marginal_distance(&predicted, &self.oracle)
    }

    fn residuals_to(&self, model: &ReplicaModel<f64>, path: &Path) -> Result<()> {
        let sources = single_sources(self.graph.num_nodes());
        let predicted = predicted_marginals(&self.graph, model, &sources, self.horizon)?;
        write_residuals_csv(create(path)?, &residuals(&predicted, &self.oracle)?)?;
        Ok(())
    }
}

fn fig5(ctx: &Ctx) -> Result<()> {
    let (lat, m) = lattice(ctx)?;
    let sim = simulate(
        &lat.graph,
        &lat.truth,
        &InitialScheme::UniformSource,
        lat.horizon,
        m,
        0.0,
        HiddenPlacement::Random,
        ctx.seed(),
        0,
    )?;
    let stats = class_stats(&lat.graph, &sim.observed, lat.horizon)?;
    let learned = learn(&lat.graph, &stats, &ctx.learn_config())?;
    let truth = ReplicaModel::single(lat.truth.clone());
    let fitted = ReplicaModel::single(learned.params.clone());
    write_lines(
        create(&ctx.path("fig5.csv"))?,
        [
            "model,delta_p".to_string(),
            format!("true_parameters,{}", lat.delta_p(&truth)?),
            format!("learned_parameters,{}", lat.delta_p(&fitted)?),
        ],
    )?;
    let params = std::iter::once("edge,u,v,true_alpha,learned_alpha".to_string()).chain(
        lat.graph
            .edges()
            .iter()
            .enumerate()
            .map(|(e, &(u, v))| format!("{e},{u},{v},{},{}", lat.truth.get(e), learned.params.get(e))),
    );
    write_lines(create(&ctx.path("fig5_params.csv"))?, params)?;
    lat.residuals_to(&truth, &ctx.path("fig5_residuals_true.csv"))?;
    lat.residuals_to(&fitted, &ctx.path("fig5_residuals_learned.csv"))
}

fn fig6(ctx: &Ctx) -> Result<()> {
    let (lat, m) = lattice(ctx)?;
    let config = ctx.learn_config();
    let max_r = ctx.pick(3, 2);
    let mut ladder = vec!["xi,replicas,delta_p_start,delta_p,converged".to_string()];
    let mut sweep = vec!["sigma,delta_p_single,delta_p_two,improvement".to_string()];
    for (k, &xi) in [0.0, 0.15].iter().enumerate() {
        let sim = simulate(
            &lat.graph,
            &lat.truth,
            &InitialScheme::UniformSource,
            lat.horizon,
            m,
            xi,
            HiddenPlacement::Random,
            ctx.seed(),
            k as u64,
        )?;
        let stats = class_stats(&lat.graph, &sim.observed, lat.horizon)?;
        let single = learn(&lat.graph, &stats, &config)?;
        let base = ReplicaModel::single(single.params);
        let base_delta = lat.delta_p(&base)?;
        ladder.push(format!("{xi},1,,{base_delta},{}", single.converged));
        let mut model = base.clone();
        for r in 2..=max_r {
            let mut rng = stream_rng(ctx.seed(), Stream::Perturbation, r as u64);
            let mut eval = |m: &ReplicaModel<f64>| lat.delta_p(m);
            let rung = learn_ladder(
                &lat.graph,
                &stats,
                &model,
                r,
                icdmp::replicas::DEFAULT_PERTURBATION,
                &config,
                &mut rng,
                Some(&mut eval),
            )?;
            ladder.push(format!(
                "{xi},{r},{},{},{}",
                rung.delta_p_start.unwrap_or(f64::NAN),
                rung.delta_p.unwrap_or(f64::NAN),
                rung.outcome.converged
            ));
            model = rung.outcome.model;
        }
        if xi > 0.0 {
            continue;
        }
        let sigmas: Vec<f64> = ctx.pick(vec![0.01, 0.05, 0.1, 0.2], vec![0.05]);
        for (s, &sigma) in sigmas.iter().enumerate() {
            let mut rng = stream_rng(ctx.seed(), Stream::Perturbation, 100 + s as u64);
            let rung = learn_ladder(&lat.graph, &stats, &base, 2, sigma, &config, &mut rng, None)?;
            let two = lat.delta_p(&rung.outcome.model)?;
            sweep.push(format!("{sigma},{base_delta},{two},{}", base_delta - two));
        }
        let cold_start = ReplicaModel::random(&lat.graph, 2, &mut stream_rng(ctx.seed(), Stream::Init, 2))?;
        let cold = learn_mixture(&lat.graph, &stats, cold_start, &config)?;
        let two = lat.delta_p(&cold.model)?;
        sweep.push(format!("cold,{base_delta},{two},{}", base_delta - two));
    }
    write_lines(create(&ctx.path("fig6_replicas.csv"))?, ladder)?;
    write_lines(create(&ctx.path("fig6_perturbation.csv"))?, sweep)
}

/// Mean seconds per objective-and-gradient evaluation on a random 3-regular graph.
fn step_seconds(ctx: &Ctx, nodes: usize, horizon: usize, m: usize, rep: u64, steps: usize) -> Result<f64> {
    let topo = Topology::RandomRegular { degree: 3, nodes };
    let inst = build_instance(&topo, &ParamScheme::Uniform, ctx.seed(), rep)?;
    let sim = simulate(
        &inst.graph,
        &inst.truth,
        &InitialScheme::UniformSource,
        horizon,
        m,
        0.0,
        HiddenPlacement::Random,
        ctx.seed(),
        rep,
    )?;
    let stats = class_stats(&inst.graph, &sim.observed, horizon)?;
    let params = EdgeParams::constant(&inst.graph, ctx.config.learn.init);
    Adjoint.objective_and_gradient(&inst.graph, &params, &stats)?;
    let start = Instant::now();
    for _ in 0..steps {
        std::hint::black_box(Adjoint.objective_and_gradient(&inst.graph, &params, &stats)?);
    }
    Ok(start.elapsed().as_secs_f64() / steps as f64)
}

/// Times one axis of (N, T, M); writes the table and, if asked, a zero-intercept fit.
fn timing(
    ctx: &Ctx,
    name: &str,
    axis: &str,
    points: &[usize],
    at: impl Fn(usize) -> (usize, usize, usize),
    fit: bool,
) -> Result<()> {
    let reps = ctx.pick(3, 1);
    let steps = ctx.pick(20, 2);
    let mut rows = vec![format!("{axis},seconds_per_step,stderr,n_instances")];
    let mut xy = Vec::new();
    for &x in points {
        let (n, t, m) = at(x);
        let times = (0..reps)
            .map(|rep| step_seconds(ctx, n, t, m, rep, steps))
            .collect::<Result<Vec<_>>>()?;
        let (mean, se) = mean_stderr(&times)?;
        rows.push(format!("{x},{mean},{se},{reps}"));
        xy.push((x as f64, mean));
    }
    write_lines(create(&ctx.path(&format!("{name}.csv")))?, rows)?;
    if fit {
        let slope = xy.iter().map(|(x, y)| x * y).sum::<f64>() / xy.iter().map(|(x, _)| x * x).sum::<f64>();
        let ss_res: f64 = xy.iter().map(|(x, y)| (y - slope * x).powi(2)).sum();
        let ss_tot: f64 = xy.iter().map(|(_, y)| y * y).sum();
        write_lines(
            create(&ctx.path(&format!("{name}_fit.csv")))?,
            [
                "slope,intercept,r2_uncentered".to_string(),
                format!("{slope},0,{}", 1.0 - ss_res / ss_tot),
            ],
        )?;
    }
    Ok(())
}

fn fig_a2(ctx: &Ctx) -> Result<()> {
    let n = ctx.pick(100, 20);
    let m = ctx.pick(100, 20);
    timing(
        ctx,
        "figA2",
        "horizon",
        &ctx.pick(vec![5, 10, 20, 40], vec![5, 10]),
        |t| (n, t, m),
        true,
    )
}

fn fig_a3(ctx: &Ctx) -> Result<()> {
    let n = ctx.pick(100, 20);
    timing(
        ctx,
        "figA3",
        "cascades",
        &ctx.pick(vec![10, 100, 1000, 10000], vec![10, 100]),
        |m| (n, 10, m),
        false,
    )
}

fn fig_a4(ctx: &Ctx) -> Result<()> {
    let m = ctx.pick(100, 20);
    timing(
        ctx,
        "figA4",
        "nodes",
        &ctx.pick(vec![100, 200, 400, 800], vec![20, 40]),
        |n| (n, 10, m),
        true,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_unique_and_listed() {
        let mut ids: Vec<&str> = RECIPES.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), RECIPES.len());
        let msg = lookup("fig9").err().unwrap().to_string();
        assert!(RECIPES.iter().all(|r| msg.contains(r.id)));
    }
}
