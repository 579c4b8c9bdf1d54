use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Graph, NodeId};
use crate::error::{Error, Result};

const MAX_ATTEMPTS: usize = 100_000;

/// Synthetic topology families used by the experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    /// Breadth-first regular tree: the root has `degree` children, every other
    /// internal node `degree - 1`, truncated at `nodes`.
    RegularTree {
        degree: usize,
        nodes: usize,
    },
    /// Preferential-attachment tree, one edge per new node.
    ScaleFreeTree {
        nodes: usize,
    },
    RandomRegular {
        degree: usize,
        nodes: usize,
    },
    /// `G(N, M)` with `M = round(N * avg_degree / 2)`, conditioned on connectivity.
    ErdosRenyi {
        nodes: usize,
        avg_degree: f64,
    },
    /// `side x side` grid with open boundaries.
    SquareLattice {
        side: usize,
    },
}

/// Node count of a complete regular tree of the given depth.
pub fn regular_tree_size(degree: usize, depth: usize) -> usize {
    let mut total = 1;
    let mut level = 1;
    for d in 0..depth {
        level *= if d == 0 { degree } else { degree.saturating_sub(1) };
        total += level;
    }
    total
}

impl Topology {
    pub fn num_nodes(&self) -> usize {
        match *self {
            Topology::RegularTree { nodes, .. }
            | Topology::ScaleFreeTree { nodes }
            | Topology::RandomRegular { nodes, .. }
            | Topology::ErdosRenyi { nodes, .. } => nodes,
            Topology::SquareLattice { side } => side * side,
        }
    }

    pub fn is_tree(&self) -> bool {
        matches!(self, Topology::RegularTree { .. } | Topology::ScaleFreeTree { .. })
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::RegularTree { degree, nodes } => write!(f, "regular_tree:{degree}:{nodes}"),
            Topology::ScaleFreeTree { nodes } => write!(f, "scale_free_tree:{nodes}"),
            Topology::RandomRegular { degree, nodes } => write!(f, "random_regular:{degree}:{nodes}"),
            Topology::ErdosRenyi { nodes, avg_degree } => write!(f, "erdos_renyi:{nodes}:{avg_degree}"),
            Topology::SquareLattice { side } => write!(f, "square_lattice:{side}"),
        }
    }
}

impl FromStr for Topology {
    type Err = Error;

    /// Parses `kind:arg[:arg]`, e.g. `random_regular:3:100` or `square_lattice:10`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::InvalidConfig(format!("cannot parse topology '{s}'"));
        let int = |i: usize| parts.get(i).and_then(|p| p.parse::<usize>().ok()).ok_or_else(bad);
        let topo = match parts[0] {
            "regular_tree" if parts.len() == 3 => Topology::RegularTree {
                degree: int(1)?,
                nodes: int(2)?,
            },
            "scale_free_tree" if parts.len() == 2 => Topology::ScaleFreeTree { nodes: int(1)? },
            "random_regular" if parts.len() == 3 => Topology::RandomRegular {
                degree: int(1)?,
                nodes: int(2)?,
            },
            "erdos_renyi" if parts.len() == 3 => Topology::ErdosRenyi {
                nodes: int(1)?,
                avg_degree: parts[2].parse().map_err(|_| bad())?,
            },
            "square_lattice" if parts.len() == 2 => Topology::SquareLattice { side: int(1)? },
            _ => return Err(bad()),
        };
        Ok(topo)
    }
}

pub fn generate<R: Rng + ?Sized>(topology: &Topology, rng: &mut R) -> Result<Graph> {
    match *topology {
        Topology::RegularTree { degree, nodes } => regular_tree(degree, nodes),
        Topology::ScaleFreeTree { nodes } => scale_free_tree(nodes, rng),
        Topology::RandomRegular { degree, nodes } => random_regular(degree, nodes, rng),
        Topology::ErdosRenyi { nodes, avg_degree } => erdos_renyi(nodes, avg_degree, rng),
        Topology::SquareLattice { side } => square_lattice(side),
    }
}

fn regular_tree(degree: usize, nodes: usize) -> Result<Graph> {
    if nodes == 0 || (degree < 2 && nodes > 2) {
        return Err(Error::InfeasibleTopology(format!(
            "regular tree of degree {degree} with {nodes} nodes"
        )));
    }
    let mut edges = Vec::with_capacity(nodes.saturating_sub(1));
    let mut next = 1;
    let mut parent = 0;
    while next < nodes {
        let children = if parent == 0 { degree } else { degree - 1 };
        for _ in 0..children {
            if next == nodes {
                break;
            }
            edges.push((parent, next));
            next += 1;
        }
        parent += 1;
    }
    Graph::with_nodes(nodes, &edges)
}

fn scale_free_tree<R: Rng + ?Sized>(nodes: usize, rng: &mut R) -> Result<Graph> {
    if nodes == 0 {
        return Err(Error::InfeasibleTopology("empty scale-free tree".into()));
    }
    let mut edges = Vec::with_capacity(nodes - 1);
    // every endpoint occurrence, so a uniform pick is degree-proportional
    let mut endpoints: Vec<NodeId> = Vec::with_capacity(2 * nodes);
    for v in 1..nodes {
        let target = if endpoints.is_empty() {
            0
        } else {
            endpoints[rng.gen_range(0..endpoints.len())]
        };
        edges.push((target, v));
        endpoints.push(target);
        endpoints.push(v);
    }
    Graph::with_nodes(nodes, &edges)
}

fn random_regular<R: Rng + ?Sized>(degree: usize, nodes: usize, rng: &mut R) -> Result<Graph> {
    if (nodes * degree) % 2 == 1 || degree >= nodes || degree == 0 {
        return Err(Error::InfeasibleTopology(format!(
            "random {degree}-regular graph on {nodes} nodes"
        )));
    }
    let mut stubs: Vec<NodeId> = (0..nodes).flat_map(|v| std::iter::repeat_n(v, degree)).collect();
    'attempt: for _ in 0..MAX_ATTEMPTS {
        stubs.shuffle(rng);
        let mut seen = HashSet::with_capacity(stubs.len() / 2);
        let mut edges = Vec::with_capacity(stubs.len() / 2);
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b || !seen.insert((a, b)) {
                continue 'attempt;
            }
            edges.push((a, b));
        }
        let g = Graph::with_nodes(nodes, &edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::GeneratorExhausted(MAX_ATTEMPTS))
}

fn erdos_renyi<R: Rng + ?Sized>(nodes: usize, avg_degree: f64, rng: &mut R) -> Result<Graph> {
    let max_edges = nodes * nodes.saturating_sub(1) / 2;
    let m = (nodes as f64 * avg_degree / 2.0).round() as usize;
    if nodes < 2 || m > max_edges || m + 1 < nodes || !avg_degree.is_finite() {
        return Err(Error::InfeasibleTopology(format!(
            "connected Erdos-Renyi graph with {nodes} nodes and average degree {avg_degree}"
        )));
    }
    for _ in 0..MAX_ATTEMPTS {
        let mut seen = HashSet::with_capacity(m);
        while seen.len() < m {
            let a = rng.gen_range(0..nodes);
            let b = rng.gen_range(0..nodes);
            if a != b {
                seen.insert((a.min(b), a.max(b)));
            }
        }
        let mut edges: Vec<_> = seen.into_iter().collect();
        edges.sort_unstable();
        let g = Graph::with_nodes(nodes, &edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::GeneratorExhausted(MAX_ATTEMPTS))
}

fn square_lattice(side: usize) -> Result<Graph> {
    if side == 0 {
        return Err(Error::InfeasibleTopology("empty lattice".into()));
    }
    let mut edges = Vec::with_capacity(2 * side * (side - 1));
    for r in 0..side {
        for c in 0..side {
            let v = r * side + c;
            if c + 1 < side {
                edges.push((v, v + 1));
            }
            if r + 1 < side {
                edges.push((v, v + side));
            }
        }
    }
    Graph::with_nodes(side * side, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn lattice_counts() {
        let g = generate(&Topology::SquareLattice { side: 2 }, &mut rng()).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges()), (4, 4));
        assert!((0..4).all(|v| g.degree(v) == 2));
        let g = generate(&Topology::SquareLattice { side: 10 }, &mut rng()).unwrap();
        assert_eq!(g.num_edges(), 180);
    }

    #[test]
    fn regular_tree_shape() {
        let n = regular_tree_size(3, 2);
        assert_eq!(n, 10);
        let g = generate(&Topology::RegularTree { degree: 3, nodes: n }, &mut rng()).unwrap();
        assert_eq!(g.num_edges(), 9);
        assert_eq!(g.degree(0), 3);
        assert_eq!((1..4).map(|v| g.degree(v)).collect::<Vec<_>>(), vec![3, 3, 3]);
        assert!((4..10).all(|v| g.degree(v) == 1));
        let g = generate(&Topology::RegularTree { degree: 3, nodes: 20 }, &mut rng()).unwrap();
        assert_eq!(g.num_edges(), 19);
        assert!(g.is_connected());
        assert!(g.max_degree() <= 3);
    }

    #[test]
    fn random_regular_degrees() {
        let g = generate(&Topology::RandomRegular { degree: 3, nodes: 100 }, &mut rng()).unwrap();
        assert_eq!(g.num_edges(), 150);
        assert!((0..100).all(|v| g.degree(v) == 3));
        assert!(g.is_connected());
        assert!(generate(&Topology::RandomRegular { degree: 3, nodes: 11 }, &mut rng()).is_err());
    }

    #[test]
    fn scale_free_is_tree() {
        let g = generate(&Topology::ScaleFreeTree { nodes: 100 }, &mut rng()).unwrap();
        assert_eq!(g.num_edges(), 99);
        assert!(g.is_connected());
    }

    #[test]
    fn erdos_renyi_mean_degree() {
        let g = generate(
            &Topology::ErdosRenyi {
                nodes: 100,
                avg_degree: 3.0,
            },
            &mut rng(),
        )
        .unwrap();
        assert!(g.is_connected());
        let mean = 2.0 * g.num_edges() as f64 / 100.0;
        assert!((mean - 3.0).abs() <= 0.3);
    }

    #[test]
    fn topology_strings_round_trip() {
        for t in [
            Topology::RegularTree { degree: 3, nodes: 20 },
            Topology::ScaleFreeTree { nodes: 50 },
            Topology::RandomRegular { degree: 3, nodes: 100 },
            Topology::ErdosRenyi {
                nodes: 100,
                avg_degree: 3.0,
            },
            Topology::SquareLattice { side: 6 },
        ] {
            assert_eq!(t.to_string().parse::<Topology>().unwrap(), t);
        }
        assert!("hypercube:4".parse::<Topology>().is_err());
    }
}
