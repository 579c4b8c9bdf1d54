//! Text formats for observed cascades and class statistics.
//!
//! Cascade file:
//! ```text
//! T=5
//! #law 0 uniform 0.1
//! #init 0 source 3
//! #init 1 seeds 2,7
//! #init 2 stochastic 0
//! 0 3 0
//! 0 4 1
//! ```
//! Data rows are `cascade_id node_id tau`; a missing `(cascade, node)` row means
//! the node is hidden. Class-statistics files use the same directives keyed by
//! class id, a `#size <class> <count>` line per class and rows
//! `class_id node_id tau count`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use super::{CascadeClass, ClassStats, InitialCondition, NodeCounts, ObservedCascade};
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

struct LawTable {
    laws: Vec<Arc<Vec<f64>>>,
}

impl LawTable {
    fn id_of(&mut self, law: &Arc<Vec<f64>>) -> usize {
        if let Some(k) = self.laws.iter().position(|l| Arc::ptr_eq(l, law) || l == law) {
            return k;
        }
        self.laws.push(law.clone());
        self.laws.len() - 1
    }

    fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        for (k, law) in self.laws.iter().enumerate() {
            match law.first() {
                Some(&p0) if law.iter().all(|&p| p == p0) => writeln!(w, "#law {k} uniform {p0} {}", law.len())?,
                _ => {
                    write!(w, "#law {k} vector")?;
                    for p in law.iter() {
                        write!(w, " {p}")?;
                    }
                    writeln!(w)?;
                }
            }
        }
        Ok(())
    }
}

fn init_directive(ic: &InitialCondition, laws: &mut LawTable) -> String {
    match ic {
        InitialCondition::SingleSource(s) => format!("source {s}"),
        InitialCondition::SeedSet(v) => {
            format!(
                "seeds {}",
                v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
            )
        }
        InitialCondition::Stochastic(law) => format!("stochastic {}", laws.id_of(law)),
    }
}

fn collect_laws<'a>(initials: impl Iterator<Item = &'a InitialCondition>) -> LawTable {
    let mut laws = LawTable { laws: Vec::new() };
    for ic in initials {
        if let InitialCondition::Stochastic(law) = ic {
            laws.id_of(law);
        }
    }
    laws
}

pub fn write_cascades<W: Write>(mut w: W, horizon: usize, cascades: &[ObservedCascade]) -> Result<()> {
    writeln!(w, "T={horizon}")?;
    let mut laws = collect_laws(cascades.iter().map(|c| &c.initial));
    laws.write(&mut w)?;
    for (c, oc) in cascades.iter().enumerate() {
        writeln!(w, "#init {c} {}", init_directive(&oc.initial, &mut laws))?;
    }
    for (c, oc) in cascades.iter().enumerate() {
        for &(node, tau) in &oc.observations {
            writeln!(w, "{c} {node} {tau}")?;
        }
    }
    Ok(())
}

#[derive(Default)]
struct Directives {
    horizon: Option<usize>,
    laws: BTreeMap<usize, Arc<Vec<f64>>>,
    inits: BTreeMap<u64, InitialCondition>,
    sizes: BTreeMap<u64, u64>,
    rows: Vec<(u64, Vec<u64>, usize)>,
}

fn parse_init(parts: &[&str], laws: &BTreeMap<usize, Arc<Vec<f64>>>, line: usize) -> Result<InitialCondition> {
    match parts {
        ["source", s] => Ok(InitialCondition::SingleSource(
            s.parse().map_err(|_| parse_err(line, "bad source"))?,
        )),
        ["seeds", list] => {
            let seeds = list
                .split(',')
                .map(|x| x.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| parse_err(line, "bad seed list"))?;
            Ok(InitialCondition::seeds(seeds))
        }
        ["stochastic", id] => {
            let id: usize = id.parse().map_err(|_| parse_err(line, "bad law id"))?;
            laws.get(&id)
                .map(|l| InitialCondition::Stochastic(l.clone()))
                .ok_or_else(|| parse_err(line, format!("law {id} used before definition")))
        }
        _ => Err(parse_err(line, "unknown initial condition")),
    }
}

fn read_directives<R: BufRead>(reader: R, row_width: usize) -> Result<Directives> {
    let mut d = Directives::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(h) = t.strip_prefix("T=") {
            d.horizon = Some(h.trim().parse().map_err(|_| parse_err(lineno, "bad horizon"))?);
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            match parts.as_slice() {
                ["law", id, "uniform", p, n] => {
                    let id = id.parse().map_err(|_| parse_err(lineno, "bad law id"))?;
                    let p: f64 = p.parse().map_err(|_| parse_err(lineno, "bad probability"))?;
                    let n: usize = n.parse().map_err(|_| parse_err(lineno, "bad law size"))?;
                    d.laws.insert(id, Arc::new(vec![p; n]));
                }
                ["law", id, "vector", probs @ ..] => {
                    let id = id.parse().map_err(|_| parse_err(lineno, "bad law id"))?;
                    let v = probs
                        .iter()
                        .map(|p| p.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| parse_err(lineno, "bad probability"))?;
                    d.laws.insert(id, Arc::new(v));
                }
                ["init", id, spec @ ..] | ["class", id, spec @ ..] => {
                    let id = id.parse().map_err(|_| parse_err(lineno, "bad id"))?;
                    let ic = parse_init(spec, &d.laws, lineno)?;
                    d.inits.insert(id, ic);
                }
                ["size", id, n] => {
                    let id = id.parse().map_err(|_| parse_err(lineno, "bad id"))?;
                    d.sizes
                        .insert(id, n.parse().map_err(|_| parse_err(lineno, "bad size"))?);
                }
                _ => {}
            }
            continue;
        }
        let vals = t
            .split_whitespace()
            .map(|x| x.parse::<u64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| parse_err(lineno, "expected non-negative integers"))?;
        if vals.len() != row_width {
            return Err(parse_err(lineno, format!("expected {row_width} columns")));
        }
        d.rows.push((vals[0], vals[1..].to_vec(), lineno));
    }
    if d.horizon.is_none() {
        return Err(parse_err(1, "missing T=<int> header"));
    }
    Ok(d)
}

/// Reads a cascade file; cascades are returned in ascending id order.
pub fn read_cascades<R: BufRead>(reader: R) -> Result<(usize, Vec<ObservedCascade>)> {
    let d = read_directives(reader, 3)?;
    let horizon = d.horizon.unwrap();
    let mut by_id: BTreeMap<u64, ObservedCascade> = d
        .inits
        .into_iter()
        .map(|(id, initial)| {
            (
                id,
                ObservedCascade {
                    initial,
                    horizon: horizon as u32,
                    observations: Vec::new(),
                },
            )
        })
        .collect();
    for (id, rest, lineno) in d.rows {
        let oc = by_id
            .get_mut(&id)
            .ok_or_else(|| parse_err(lineno, format!("cascade {id} has no #init line")))?;
        let tau = rest[1];
        if tau as usize > horizon {
            return Err(parse_err(lineno, format!("tau {tau} exceeds T={horizon}")));
        }
        oc.observations.push((rest[0] as usize, tau as u32));
    }
    let mut out: Vec<ObservedCascade> = by_id.into_values().collect();
    for oc in &mut out {
        oc.observations.sort_unstable();
        if oc.observations.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(parse_err(0, "node listed twice in one cascade"));
        }
    }
    Ok((horizon, out))
}

pub fn write_class_stats<W: Write>(mut w: W, stats: &ClassStats) -> Result<()> {
    writeln!(w, "T={}", stats.horizon)?;
    writeln!(w, "# nodes={}", stats.num_nodes)?;
    let mut laws = collect_laws(stats.classes.iter().map(|c| &c.initial));
    laws.write(&mut w)?;
    for (k, class) in stats.classes.iter().enumerate() {
        writeln!(w, "#class {k} {}", init_directive(&class.initial, &mut laws))?;
        writeln!(w, "#size {k} {}", class.num_cascades)?;
    }
    for (k, class) in stats.classes.iter().enumerate() {
        for nc in &class.nodes {
            for (tau, &m) in nc.counts.iter().enumerate() {
                if m > 0 {
                    writeln!(w, "{k} {} {tau} {m}", nc.node)?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_class_stats<R: BufRead>(reader: R, num_nodes: usize) -> Result<ClassStats> {
    let d = read_directives(reader, 4)?;
    let horizon = d.horizon.unwrap();
    let mut classes: BTreeMap<u64, (CascadeClass, BTreeMap<usize, Vec<u64>>)> = BTreeMap::new();
    for (id, initial) in d.inits {
        let num_cascades = *d
            .sizes
            .get(&id)
            .ok_or_else(|| parse_err(0, format!("class {id} has no #size line")))?;
        classes.insert(
            id,
            (
                CascadeClass {
                    initial,
                    num_cascades,
                    nodes: Vec::new(),
                },
                BTreeMap::new(),
            ),
        );
    }
    for (id, rest, lineno) in d.rows {
        let (_, counts) = classes
            .get_mut(&id)
            .ok_or_else(|| parse_err(lineno, format!("unknown class {id}")))?;
        let (node, tau, m) = (rest[0] as usize, rest[1] as usize, rest[2]);
        if node >= num_nodes || tau > horizon {
            return Err(parse_err(lineno, "node or tau out of range"));
        }
        counts.entry(node).or_insert_with(|| vec![0; horizon + 1])[tau] += m;
    }
    let classes = classes
        .into_values()
        .map(|(mut class, counts)| {
            class.nodes = counts
                .into_iter()
                .map(|(node, counts)| NodeCounts { node, counts })
                .collect();
            class
        })
        .collect();
    Ok(ClassStats {
        horizon,
        num_nodes,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascades::{build_class_stats, simulate_many, InitialScheme, ObservationMask};
    use crate::graph::{EdgeParams, Graph};

    #[test]
    fn cascade_file_round_trip() {
        let law = Arc::new(vec![0.1, 0.2, 0.3]);
        let data = vec![
            ObservedCascade {
                initial: InitialCondition::SingleSource(2),
                horizon: 4,
                observations: vec![(0, 4), (2, 0)],
            },
            ObservedCascade {
                initial: InitialCondition::SeedSet(vec![0, 1]),
                horizon: 4,
                observations: vec![],
            },
            ObservedCascade {
                initial: InitialCondition::Stochastic(law.clone()),
                horizon: 4,
                observations: vec![(1, 0), (2, 1)],
            },
            ObservedCascade {
                initial: InitialCondition::Stochastic(law),
                horizon: 4,
                observations: vec![(0, 3)],
            },
        ];
        let mut buf = Vec::new();
        write_cascades(&mut buf, 4, &data).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.matches("#law").count(), 1);
        let (h, back) = read_cascades(buf.as_slice()).unwrap();
        assert_eq!(h, 4);
        assert_eq!(back, data);
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_cascades("0 1 2\n".as_bytes()).is_err());
        assert!(read_cascades("T=3\n0 1 2\n".as_bytes()).is_err());
        assert!(read_cascades("T=3\n#init 0 source 1\n0 1 9\n".as_bytes()).is_err());
        assert!(read_cascades("T=3\n#init 0 source 1\n0 1\n".as_bytes()).is_err());
    }

    #[test]
    fn class_stats_round_trip() {
        let g = Graph::from_edges(&[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let p = EdgeParams::constant(&g, 0.5f64);
        let mask = ObservationMask::from_hidden(4, &[2]).unwrap();
        let cascades = simulate_many(&g, &p, &InitialScheme::UniformSource, 3, 50, 4).unwrap();
        let observed: Vec<_> = cascades.iter().map(|c| crate::cascades::apply_mask(c, &mask)).collect();
        let stats = build_class_stats(&observed, 4, 3).unwrap();
        let mut buf = Vec::new();
        write_class_stats(&mut buf, &stats).unwrap();
        assert_eq!(read_class_stats(buf.as_slice(), 4).unwrap(), stats);
    }
}
