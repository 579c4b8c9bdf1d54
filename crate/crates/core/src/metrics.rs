//! Parameter-recovery and marginal-prediction metrics.

use std::io::Write;

use rand::Rng;

use crate::cascades::{mc_marginals, InitialCondition, ObservationMask};
use crate::dmp::DmpState;
use crate::error::{Error, Result};
use crate::graph::{EdgeParams, Graph};
use crate::replicas::MixtureState;
use crate::scalar::Scalar;
use crate::seeding::{stream_rng, Stream};

/// Mean `|a - a*|` over edges not listed in `excluded`.
pub fn param_l1_error<S: Scalar>(learned: &EdgeParams<S>, truth: &EdgeParams<S>, excluded: &[usize]) -> Result<f64> {
    if learned.len() != truth.len() {
        return Err(Error::ParamMismatch {
            expected: truth.len(),
            got: learned.len(),
        });
    }
    let mut skip = vec![false; truth.len()];
    for &e in excluded {
        if e >= skip.len() {
            return Err(Error::ParamMismatch {
                expected: truth.len(),
                got: e + 1,
            });
        }
        skip[e] = true;
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for (e, (a, b)) in learned.values().iter().zip(truth.values()).enumerate() {
        if !skip[e] {
            sum += (a.as_f64() - b.as_f64()).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyAverage("every edge is excluded".into()));
    }
    Ok(sum / count as f64)
}

/// Edges touching a hidden node of degree one.
pub fn unobserved_leaf_edges(graph: &Graph, mask: &ObservationMask) -> Vec<usize> {
    let mut out: Vec<usize> = (0..graph.num_nodes())
        .filter(|&i| graph.degree(i) == 1 && !mask.is_observed(i))
        .map(|i| graph.incidences(i)[0].edge)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Cumulative marginals `p[class][node][t]` with optional per-entry standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    horizon: usize,
    num_nodes: usize,
    p: Vec<f64>,
    stderr: Option<Vec<f64>>,
}

impl MarginalTable {
    fn index(&self, class: usize, node: usize, t: usize) -> usize {
        (class * self.num_nodes + node) * (self.horizon + 1) + t
    }

    pub fn from_fn(
        num_classes: usize,
        num_nodes: usize,
        horizon: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Self {
        let mut p = Vec::with_capacity(num_classes * num_nodes * (horizon + 1));
        for c in 0..num_classes {
            for i in 0..num_nodes {
                for t in 0..=horizon {
                    p.push(f(c, i, t));
                }
            }
        }
        Self {
            horizon,
            num_nodes,
            p,
            stderr: None,
        }
    }

    pub fn from_states<S: Scalar>(states: &[DmpState<S>]) -> Result<Self> {
        let first = states.first().ok_or_else(|| Error::EmptyAverage("no states".into()))?;
        let (n, horizon) = (first.num_nodes(), first.horizon());
        if states.iter().any(|s| s.num_nodes() != n || s.horizon() != horizon) {
            return Err(Error::StateMismatch("states differ in size".into()));
        }
        Ok(Self::from_fn(states.len(), n, horizon, |c, i, t| {
            states[c].p(i, t).as_f64()
        }))
    }

    pub fn from_mixture<S: Scalar>(states: &[MixtureState<S>]) -> Result<Self> {
        let first = states.first().ok_or_else(|| Error::EmptyAverage("no states".into()))?;
        let (n, horizon) = (first.num_nodes(), first.horizon());
        if states.iter().any(|s| s.num_nodes() != n || s.horizon() != horizon) {
            return Err(Error::StateMismatch("states differ in size".into()));
        }
        Ok(Self::from_fn(states.len(), n, horizon, |c, i, t| {
            states[c].p(i, t).as_f64()
        }))
    }

    /// Monte Carlo oracle with `samples` cascades per initial condition.
    pub fn monte_carlo<S: Scalar, R: Rng + ?Sized>(
        graph: &Graph,
        params: &EdgeParams<S>,
        initials: &[InitialCondition],
        horizon: usize,
        samples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let base = rng.gen::<u64>();
        let n = graph.num_nodes();
        let width = horizon + 1;
        let mut p = Vec::with_capacity(initials.len() * n * width);
        let mut stderr = Vec::with_capacity(p.capacity());
        for (c, initial) in initials.iter().enumerate() {
            let mc = mc_marginals(
                graph,
                params,
                initial,
                horizon,
                samples,
                &mut stream_rng(base, Stream::Oracle, c as u64),
            )?;
            p.extend_from_slice(&mc.p);
            stderr.extend_from_slice(&mc.stderr);
        }
        Ok(Self {
            horizon,
            num_nodes: n,
            p,
            stderr: Some(stderr),
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_classes(&self) -> usize {
        self.p.len() / (self.num_nodes * (self.horizon + 1)).max(1)
    }

    pub fn at(&self, class: usize, node: usize, t: usize) -> f64 {
        self.p[self.index(class, node, t)]
    }

    pub fn stderr_at(&self, class: usize, node: usize, t: usize) -> Option<f64> {
        self.stderr.as_ref().map(|s| s[self.index(class, node, t)])
    }

    fn check_aligned(&self, other: &Self) -> Result<()> {
        if self.horizon != other.horizon || self.num_nodes != other.num_nodes || self.p.len() != other.p.len() {
            return Err(Error::StateMismatch("marginal tables are not aligned".into()));
        }
        Ok(())
    }
}

/// `<|p - p*|> / <p*>` over every class, node and `t = 1..T`.
pub fn marginal_distance(predicted: &MarginalTable, oracle: &MarginalTable) -> Result<f64> {
    predicted.check_aligned(oracle)?;
    let (mut num, mut den) = (0.0, 0.0);
    for c in 0..oracle.num_classes() {
        for i in 0..oracle.num_nodes {
            for t in 1..=oracle.horizon {
                num += (predicted.at(c, i, t) - oracle.at(c, i, t)).abs();
                den += oracle.at(c, i, t);
            }
        }
    }
    if den == 0.0 {
        return Err(Error::EmptyAverage("oracle marginals are all zero".into()));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub class: usize,
    pub node: usize,
    pub t: usize,
    pub predicted: f64,
    pub oracle: f64,
    pub oracle_stderr: f64,
}

pub fn residuals(predicted: &MarginalTable, oracle: &MarginalTable) -> Result<Vec<Residual>> {
    predicted.check_aligned(oracle)?;
    let mut out = Vec::with_capacity(oracle.p.len());
    for class in 0..oracle.num_classes() {
        for node in 0..oracle.num_nodes {
            for t in 1..=oracle.horizon {
                out.push(Residual {
                    class,
                    node,
                    t,
                    predicted: predicted.at(class, node, t),
                    oracle: oracle.at(class, node, t),
                    oracle_stderr: oracle.stderr_at(class, node, t).unwrap_or(0.0),
                });
            }
        }
    }
    Ok(out)
}

pub fn write_residuals_csv<W: Write>(mut w: W, rows: &[Residual]) -> Result<()> {
    writeln!(w, "class,node,t,predicted,oracle,oracle_stderr")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.class, r.node, r.t, r.predicted, r.oracle, r.oracle_stderr
        )?;
    }
    Ok(())
}

/// Sample mean and standard error of the mean; the error is 0 for one value.
pub fn mean_stderr(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyAverage("no values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub n_instances: usize,
}

impl ReportRow {
    /// Mean and standard error over instance repetitions.
    pub fn over(metric: impl Into<String>, values: &[f64]) -> Result<Self> {
        let (value, stderr) = mean_stderr(values)?;
        Ok(Self {
            metric: metric.into(),
            value,
            stderr,
            n_instances: values.len(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub param_l1: Option<f64>,
    pub delta_p: Option<f64>,
    pub excluded_edges: Vec<usize>,
    pub residuals: Vec<Residual>,
}

impl EvalReport {
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows = Vec::new();
        if let Some(v) = self.param_l1 {
            rows.push(ReportRow {
                metric: "param_l1".into(),
                value: v,
                stderr: 0.0,
                n_instances: 1,
            });
        }
        if let Some(v) = self.delta_p {
            let stderr = delta_p_stderr(&self.residuals).unwrap_or(0.0);
            rows.push(ReportRow {
                metric: "delta_p".into(),
                value: v,
                stderr,
                n_instances: 1,
            });
        }
        rows
    }
}

/// First-order propagation of oracle noise into `delta_p`.
fn delta_p_stderr(rows: &[Residual]) -> Option<f64> {
    let den: f64 = rows.iter().map(|r| r.oracle).sum();
    if rows.is_empty() || den == 0.0 {
        return None;
    }
    let num: f64 = rows.iter().map(|r| (r.predicted - r.oracle).abs()).sum();
    let ratio = num / den;
    // d delta / d p*_k = (-sign(p - p*) - delta) / den
    let var: f64 = rows
        .iter()
        .map(|r| {
            let s = if r.predicted > r.oracle {
                1.0
            } else if r.predicted < r.oracle {
                -1.0
            } else {
                0.0
            };
            ((-s - ratio) / den * r.oracle_stderr).powi(2)
        })
        .sum();
    Some(var.sqrt())
}

pub fn write_report_csv<W: Write>(mut w: W, rows: &[ReportRow]) -> Result<()> {
    writeln!(w, "metric,value,stderr,n_instances")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.metric, r.value, r.stderr, r.n_instances)?;
    }
    Ok(())
}
