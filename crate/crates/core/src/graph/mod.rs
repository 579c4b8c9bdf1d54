//! Undirected network topology with a dense directed-message index.
//!
//! Undirected edge `e = {i, j}` with `i < j` owns the directed ids `2e` (`i -> j`)
//! and `2e + 1` (`j -> i`), so reversing a message is `d ^ 1`.

mod generate;
pub mod io;

use std::collections::HashSet;

use rand::Rng;

pub use generate::{generate, regular_tree_size, Topology};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type NodeId = usize;
pub type EdgeId = usize;
pub type DirEdgeId = usize;

/// One entry of a node's neighbor list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub neighbor: NodeId,
    pub edge: EdgeId,
    /// Directed id of `node -> neighbor`; the incoming message is `out ^ 1`.
    pub out: DirEdgeId,
}

impl Incidence {
    #[inline]
    pub fn incoming(&self) -> DirEdgeId {
        self.out ^ 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(NodeId, NodeId)>,
    offsets: Vec<usize>,
    incidences: Vec<Incidence>,
}

impl Graph {
    /// Builds a graph whose node count is `1 + max id`.
    pub fn from_edges(pairs: &[(NodeId, NodeId)]) -> Result<Self> {
        let n = pairs.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
        Self::with_nodes(n, pairs)
    }

    /// Builds a graph with an explicit node count, allowing isolated trailing nodes.
    pub fn with_nodes(num_nodes: usize, pairs: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut edges = Vec::with_capacity(pairs.len());
        let mut seen = HashSet::with_capacity(pairs.len());
        for &(a, b) in pairs {
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            let hi = a.max(b);
            if hi >= num_nodes {
                return Err(Error::NodeOutOfRange { node: hi, num_nodes });
            }
            let key = (a.min(b), hi);
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge(a, b));
            }
            edges.push(key);
        }
        edges.sort_unstable();

        let mut degree = vec![0usize; num_nodes];
        for &(a, b) in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..num_nodes].to_vec();
        let placeholder = Incidence {
            neighbor: 0,
            edge: 0,
            out: 0,
        };
        let mut incidences = vec![placeholder; offsets[num_nodes]];
        for (e, &(a, b)) in edges.iter().enumerate() {
            incidences[fill[a]] = Incidence {
                neighbor: b,
                edge: e,
                out: 2 * e,
            };
            fill[a] += 1;
            incidences[fill[b]] = Incidence {
                neighbor: a,
                edge: e,
                out: 2 * e + 1,
            };
            fill[b] += 1;
        }
        for i in 0..num_nodes {
            incidences[offsets[i]..offsets[i + 1]].sort_unstable_by_key(|x| x.neighbor);
        }
        Ok(Self {
            num_nodes,
            edges,
            offsets,
            incidences,
        })
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn num_directed(&self) -> usize {
        2 * self.edges.len()
    }

    /// Canonical `(min, max)` pairs sorted lexicographically.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    #[inline]
    pub fn edge(&self, e: EdgeId) -> (NodeId, NodeId) {
        self.edges[e]
    }

    #[inline]
    pub fn incidences(&self, node: NodeId) -> &[Incidence] {
        &self.incidences[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn neighbors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.incidences(node).iter().map(|x| x.neighbor)
    }

    #[inline]
    pub fn degree(&self, node: NodeId) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    /// `(from, to)` endpoints of a directed message id.
    #[inline]
    pub fn endpoints(&self, d: DirEdgeId) -> (NodeId, NodeId) {
        let (a, b) = self.edges[d / 2];
        if d.is_multiple_of(2) {
            (a, b)
        } else {
            (b, a)
        }
    }

    #[inline]
    pub fn undirected_of(d: DirEdgeId) -> EdgeId {
        d / 2
    }

    pub fn edge_id(&self, a: NodeId, b: NodeId) -> Option<EdgeId> {
        self.edges.binary_search(&(a.min(b), a.max(b))).ok()
    }

    pub fn directed_id(&self, from: NodeId, to: NodeId) -> Option<DirEdgeId> {
        self.edge_id(from, to)
            .map(|e| if from < to { 2 * e } else { 2 * e + 1 })
    }

    pub fn is_connected(&self) -> bool {
        if self.num_nodes == 0 {
            return true;
        }
        let mut seen = vec![false; self.num_nodes];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.num_nodes
    }
}

/// One transmission probability per undirected edge, used in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeParams<S> {
    values: Vec<S>,
}

impl<S: Scalar> EdgeParams<S> {
    pub fn new(graph: &Graph, values: Vec<S>) -> Result<Self> {
        if values.len() != graph.num_edges() {
            return Err(Error::ParamMismatch {
                expected: graph.num_edges(),
                got: values.len(),
            });
        }
        let params = Self { values };
        params.validate_range()?;
        Ok(params)
    }

    pub fn constant(graph: &Graph, alpha: S) -> Self {
        Self {
            values: vec![alpha; graph.num_edges()],
        }
    }

    pub fn validate_for(&self, graph: &Graph) -> Result<()> {
        if self.values.len() != graph.num_edges() {
            return Err(Error::ParamMismatch {
                expected: graph.num_edges(),
                got: self.values.len(),
            });
        }
        self.validate_range()
    }

    fn validate_range(&self) -> Result<()> {
        for (edge, &a) in self.values.iter().enumerate() {
            if !(a >= S::zero() && a <= S::one()) {
                return Err(Error::ParamOutOfRange {
                    edge,
                    value: a.as_f64(),
                });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, e: EdgeId) -> S {
        self.values[e]
    }

    #[inline]
    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn from_raw(values: Vec<S>) -> Self {
        Self { values }
    }

    pub fn cast<T: Scalar>(&self) -> EdgeParams<T> {
        EdgeParams {
            values: self.values.iter().map(|v| T::of(v.as_f64())).collect(),
        }
    }
}

/// I.i.d. `Uniform[0, 1]` transmission probabilities.
pub fn sample_uniform_params<S: Scalar, R: Rng + ?Sized>(graph: &Graph, rng: &mut R) -> EdgeParams<S> {
    EdgeParams::from_raw((0..graph.num_edges()).map(|_| S::of(rng.gen::<f64>())).collect())
}

/// `alpha_ij = max(k_i, k_j)^(-1/2)`.
pub fn degree_dependent_params<S: Scalar>(graph: &Graph) -> EdgeParams<S> {
    let values = graph
        .edges()
        .iter()
        .map(|&(a, b)| {
            let k = graph.degree(a).max(graph.degree(b)) as f64;
            S::of(k.powf(-0.5))
        })
        .collect();
    EdgeParams::from_raw(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smallest_graph() {
        let g = Graph::from_edges(&[(0, 1)]).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.num_directed(), 2);
        assert_eq!(g.endpoints(0), (0, 1));
        assert_eq!(g.endpoints(1), (1, 0));
    }

    #[test]
    fn duplicate_and_self_loop_rejected() {
        assert!(matches!(
            Graph::from_edges(&[(0, 1), (1, 0)]),
            Err(Error::DuplicateEdge(1, 0))
        ));
        assert!(matches!(Graph::from_edges(&[(2, 2)]), Err(Error::SelfLoop(2))));
    }

    #[test]
    fn triangle_neighbors() {
        let g = Graph::from_edges(&[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(g.num_edges(), 3);
        assert_eq!(g.neighbors(1).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn directed_index_is_a_bijection() {
        let g = Graph::from_edges(&[(3, 1), (1, 2), (0, 2), (0, 3)]).unwrap();
        let mut hit = vec![false; g.num_directed()];
        for i in 0..g.num_nodes() {
            for inc in g.incidences(i) {
                assert_eq!(g.endpoints(inc.out), (i, inc.neighbor));
                assert_eq!(g.endpoints(inc.incoming()), (inc.neighbor, i));
                assert_ne!(inc.out, inc.incoming());
                assert_eq!(Graph::undirected_of(inc.out), Graph::undirected_of(inc.incoming()));
                assert_eq!(g.directed_id(i, inc.neighbor), Some(inc.out));
                assert!(!hit[inc.out]);
                hit[inc.out] = true;
            }
        }
        assert!(hit.into_iter().all(|h| h));
    }

    #[test]
    fn uniform_params_range_and_determinism() {
        let g = Graph::from_edges(&[(0, 1), (1, 2), (2, 3)]).unwrap();
        let a: EdgeParams<f64> = sample_uniform_params(&g, &mut ChaCha8Rng::seed_from_u64(9));
        let b: EdgeParams<f64> = sample_uniform_params(&g, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!(a.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let empty = Graph::from_edges(&[]).unwrap();
        assert!(sample_uniform_params::<f32, _>(&empty, &mut ChaCha8Rng::seed_from_u64(1)).is_empty());
    }

    #[test]
    fn degree_dependent_values() {
        let single = Graph::from_edges(&[(0, 1)]).unwrap();
        assert_eq!(degree_dependent_params::<f64>(&single).get(0), 1.0);
        let star = Graph::from_edges(&[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        assert!(degree_dependent_params::<f64>(&star).values().iter().all(|&a| a == 0.5));
        let path = Graph::from_edges(&[(0, 1), (1, 2)]).unwrap();
        for &a in degree_dependent_params::<f64>(&path).values() {
            assert!((a - 0.5f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn params_validation() {
        let g = Graph::from_edges(&[(0, 1)]).unwrap();
        assert!(EdgeParams::new(&g, vec![0.5, 0.5]).is_err());
        assert!(matches!(
            EdgeParams::new(&g, vec![1.5]),
            Err(Error::ParamOutOfRange { .. })
        ));
        assert!(EdgeParams::new(&g, vec![f64::NAN]).is_err());
    }
}
