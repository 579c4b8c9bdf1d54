//! Whitespace edge lists: `i j [alpha ...]`, `#` comments.
//!
//! Writers add `# nodes=<N>` so isolated nodes survive a round trip, and
//! `replicas=<R>` when more than one alpha column is present. Other
//! `# key=value` comment lines are kept as metadata.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use super::{EdgeParams, Graph, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct EdgeListFile {
    pub graph: Graph,
    /// One column per replica, each indexed by undirected edge id. Empty when the
    /// file carries no alpha values.
    pub alphas: Vec<Vec<f64>>,
    /// Original labels by dense node id, present when the file used non-integer labels.
    pub labels: Option<Vec<String>>,
    pub metadata: BTreeMap<String, String>,
}

impl EdgeListFile {
    /// The first alpha column as parameters.
    pub fn params<S: Scalar>(&self) -> Result<Option<EdgeParams<S>>> {
        match self.alphas.first() {
            None => Ok(None),
            Some(col) => EdgeParams::new(&self.graph, col.iter().map(|&a| S::of(a)).collect()).map(Some),
        }
    }

    pub fn all_params<S: Scalar>(&self) -> Result<Vec<EdgeParams<S>>> {
        self.alphas
            .iter()
            .map(|col| EdgeParams::new(&self.graph, col.iter().map(|&a| S::of(a)).collect()))
            .collect()
    }
}

fn parse_directive(line: &str) -> Option<(String, String)> {
    let body = line.trim_start_matches('#').trim();
    let (k, v) = body.split_once('=')?;
    let k = k.trim();
    if k.is_empty() || k.contains(char::is_whitespace) {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}

pub fn read_edge_list<R: BufRead>(reader: R) -> Result<EdgeListFile> {
    let mut metadata = BTreeMap::new();
    let mut rows: Vec<(String, String, Vec<f64>, usize)> = Vec::new();
    let mut declared_replicas: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            if let Some((k, v)) = parse_directive(trimmed) {
                metadata.insert(k, v);
            }
            continue;
        }
        if let Some(r) = trimmed.strip_prefix("replicas=") {
            let r = r.trim().parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: "bad replicas header".into(),
            })?;
            declared_replicas = Some(r);
            continue;
        }
        let mut tok = trimmed.split_whitespace();
        let (a, b) = match (tok.next(), tok.next()) {
            (Some(a), Some(b)) => (a.to_string(), b.to_string()),
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "expected 'i j [alpha]'".into(),
                })
            }
        };
        let alphas = tok
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
        rows.push((a, b, alphas, lineno));
    }

    let width = rows.first().map_or(0, |r| r.2.len());
    if let Some((.., lineno)) = rows.iter().find(|r| r.2.len() != width) {
        return Err(Error::Parse {
            line: *lineno,
            msg: format!("expected {width} alpha columns"),
        });
    }
    if let Some(r) = declared_replicas {
        if !rows.is_empty() && r != width {
            return Err(Error::Parse {
                line: 1,
                msg: format!("replicas={r} but rows have {width} alpha columns"),
            });
        }
    }

    let numeric = rows
        .iter()
        .all(|(a, b, ..)| a.parse::<usize>().is_ok() && b.parse::<usize>().is_ok());
    let mut pairs = Vec::with_capacity(rows.len());
    let labels = if numeric {
        for (a, b, ..) in &rows {
            pairs.push((a.parse::<NodeId>().unwrap(), b.parse::<NodeId>().unwrap()));
        }
        None
    } else {
        let mut index: HashMap<String, NodeId> = HashMap::new();
        let mut labels = Vec::new();
        let mut id_of = |s: &str| {
            *index.entry(s.to_string()).or_insert_with(|| {
                labels.push(s.to_string());
                labels.len() - 1
            })
        };
        for (a, b, ..) in &rows {
            let ia = id_of(a);
            let ib = id_of(b);
            pairs.push((ia, ib));
        }
        Some(labels)
    };

    let inferred = pairs.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
    let num_nodes = match metadata.get("nodes") {
        Some(v) => {
            let n: usize = v.parse().map_err(|_| Error::Parse {
                line: 1,
                msg: "bad nodes header".into(),
            })?;
            n.max(inferred)
        }
        None => inferred,
    };
    let graph = Graph::with_nodes(num_nodes, &pairs)?;

    // rows arrive in file order; map each onto its canonical edge id
    let mut alphas = vec![vec![0.0; graph.num_edges()]; width];
    for ((a, b), (.., vals, _)) in pairs.iter().zip(&rows) {
        let e = graph.edge_id(*a, *b).expect("edge was just inserted");
        for (col, &v) in alphas.iter_mut().zip(vals) {
            col[e] = v;
        }
    }
    for (r, col) in alphas.iter().enumerate() {
        if let Some((e, &v)) = col.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parse {
                line: 0,
                msg: format!("alpha {v} on edge {e} (column {r}) outside [0, 1]"),
            });
        }
    }
    metadata.remove("nodes");
    Ok(EdgeListFile {
        graph,
        alphas,
        labels,
        metadata,
    })
}

/// Writes edges in canonical sorted order with one alpha column per entry of `columns`.
pub fn write_edge_list<W: Write, S: Scalar>(
    mut w: W,
    graph: &Graph,
    columns: &[&EdgeParams<S>],
    metadata: &BTreeMap<String, String>,
) -> Result<()> {
    for p in columns {
        p.validate_for(graph)?;
    }
    if columns.len() > 1 {
        writeln!(w, "replicas={}", columns.len())?;
    }
    writeln!(w, "# nodes={}", graph.num_nodes())?;
    for (k, v) in metadata {
        writeln!(w, "# {k}={v}")?;
    }
    for (e, &(a, b)) in graph.edges().iter().enumerate() {
        write!(w, "{a} {b}")?;
        for p in columns {
            write!(w, " {}", p.get(e))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_label_map<W: Write>(mut w: W, labels: &[String]) -> Result<()> {
    writeln!(w, "# node_id label")?;
    for (i, l) in labels.iter().enumerate() {
        writeln!(w, "{i} {l}")?;
    }
    Ok(())
}
