//! Directed acyclic triangulated sensing topologies.
//!
//! A [`SensingGraph`] stores directed edges `(source, sink)`: the source agent
//! measures the bearing of the sink. Agents are numbered from 1. Agent 1 is the
//! leader, agent 2 senses agent 1, agent 3 senses agents 1 and 2, and every
//! agent `l >= 4` senses exactly three lower-indexed, mutually adjacent agents.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 1-based agent index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub usize);

impl AgentId {
    pub const LEADER: AgentId = AgentId(1);

    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn role(self) -> AgentRole {
        match self.0 {
            1 => AgentRole::Leader,
            2 => AgentRole::FirstFollower,
            3 => AgentRole::SecondFollower,
            _ => AgentRole::OrdinaryFollower,
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentRole {
    Leader,
    FirstFollower,
    SecondFollower,
    OrdinaryFollower,
}

/// Malformed input, independent of the hierarchy rules.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph needs at least 3 agents, got {0}")]
    TooFewAgents(usize),
    #[error("edge ({from}, {to}) references an agent outside 1..={n}")]
    OutOfRange { from: usize, to: usize, n: usize },
    #[error("edge ({0}, {0}) is a self-loop")]
    SelfLoop(usize),
    #[error("edge ({from}, {to}) appears more than once")]
    Duplicate { from: usize, to: usize },
    #[error("edges ({a}, {b}) and ({b}, {a}) are antiparallel")]
    Antiparallel { a: usize, b: usize },
    #[error("graph violates the sensing hierarchy: {0}")]
    Invalid(ValidationReport),
    #[error("neighbor triple ({0}, {1}, {2}) must be strictly increasing agents of the graph")]
    BadTriple(usize, usize, usize),
    #[error("neighbor triple ({i}, {j}, {k}) is not mutually adjacent, missing edge ({from}, {to})")]
    NotMutuallyAdjacent {
        i: usize,
        j: usize,
        k: usize,
        from: usize,
        to: usize,
    },
}

/// One broken clause of the hierarchy assumption.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "clause", rename_all = "snake_case")]
pub enum Violation {
    /// Clause (i): out-degree must be `i - 1` for `i <= 3`, else 3.
    OutDegree {
        vertex: usize,
        expected: usize,
        actual: usize,
    },
    /// Clause (ii): edges must point from higher to lower index.
    Direction { source: usize, sink: usize },
    /// Clause (iii): `(k, i), (k, j)` present but `(j, i)` missing.
    Triangulation { source: usize, lower: usize, upper: usize },
    /// Consequence of (i)-(ii): `|E| = 3n - 6`.
    EdgeCount { expected: usize, actual: usize },
}

impl Violation {
    pub fn clause(&self) -> &'static str {
        match self {
            Violation::OutDegree { .. } => "i",
            Violation::Direction { .. } => "ii",
            Violation::Triangulation { .. } => "iii",
            Violation::EdgeCount { .. } => "edge-count",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutDegree {
                vertex,
                expected,
                actual,
            } => write!(
                f,
                "clause (i): agent {vertex} has out-degree {actual}, expected {expected}"
            ),
            Violation::Direction { source, sink } => write!(
                f,
                "clause (ii): edge ({source}, {sink}) points from a lower to a higher index"
            ),
            Violation::Triangulation { source, lower, upper } => write!(
                f,
                "clause (iii): agent {source} senses {lower} and {upper} but edge ({upper}, {lower}) is missing"
            ),
            Violation::EdgeCount { expected, actual } => {
                write!(f, "edge count {actual}, expected 3n-6 = {expected}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_clause(&self, clause: &str) -> bool {
        self.violations.iter().any(|v| v.clause() == clause)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (idx, v) in self.violations.iter().enumerate() {
            if idx > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A tetrahedral subgraph `i < j < k < l` where `l` senses `i`, `j`, `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TetrahedronRef {
    pub vertices: [usize; 4],
    /// Position in the stacked-volume vector.
    pub index: usize,
}

impl TetrahedronRef {
    pub fn follower(&self) -> usize {
        self.vertices[3]
    }

    pub fn base(&self) -> [usize; 3] {
        [self.vertices[0], self.vertices[1], self.vertices[2]]
    }
}

/// Directed sensing topology. Structurally well formed by construction; use
/// [`validate_graph`] or [`SensingGraph::validated`] for the hierarchy rules.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SensingGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    // out_neighbors[v - 1] sorted ascending
    out_neighbors: Vec<Vec<usize>>,
}

impl SensingGraph {
    /// Builds a graph after structural checks only.
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        if n < 3 {
            return Err(GraphError::TooFewAgents(n));
        }
        let mut seen = BTreeSet::new();
        for &(source, sink) in &edges {
            if source == 0 || sink == 0 || source > n || sink > n {
                return Err(GraphError::OutOfRange {
                    from: source,
                    to: sink,
                    n,
                });
            }
            if source == sink {
                return Err(GraphError::SelfLoop(source));
            }
            if !seen.insert((source, sink)) {
                return Err(GraphError::Duplicate { from: source, to: sink });
            }
            if seen.contains(&(sink, source)) {
                return Err(GraphError::Antiparallel { a: sink, b: source });
            }
        }
        let mut out_neighbors = vec![Vec::new(); n];
        for &(source, sink) in &edges {
            out_neighbors[source - 1].push(sink);
        }
        for list in &mut out_neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            edges,
            out_neighbors,
        })
    }

    /// Builds a graph and requires it to satisfy the sensing hierarchy.
    pub fn validated(n: usize, edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        let g = Self::new(n, edges)?;
        let report = validate_graph(&g);
        if report.is_ok() {
            Ok(g)
        } else {
            Err(GraphError::Invalid(report))
        }
    }

    /// The 3-agent seed `{(2,1), (3,1), (3,2)}`.
    pub fn seed() -> Self {
        Self::new(3, vec![(2, 1), (3, 1), (3, 2)]).expect("seed graph is well formed")
    }

    /// Builds a valid graph by repeated insertion from the seed.
    pub fn from_triples(triples: &[(usize, usize, usize)]) -> Result<Self, GraphError> {
        triples.iter().try_fold(Self::seed(), |g, &t| henneberg_grow(&g, t))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, source: usize, sink: usize) -> bool {
        source >= 1 && source <= self.n && self.out_neighbors[source - 1].binary_search(&sink).is_ok()
    }

    /// Sorted sinks of `agent`'s outgoing edges.
    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.out_neighbors[agent - 1]
    }

    /// Sorted neighbor triple of an ordinary follower.
    pub fn neighbor_triple(&self, agent: usize) -> Option<[usize; 3]> {
        match self.neighbors(agent) {
            &[i, j, k] if agent >= 4 => Some([i, j, k]),
            _ => None,
        }
    }

    /// Graph induced on agents `1..=m`. For graphs grown by insertion this is
    /// the graph as it stood after agent `m` joined.
    pub fn prefix(&self, m: usize) -> Result<Self, GraphError> {
        let edges = self.edges.iter().copied().filter(|&(s, t)| s <= m && t <= m).collect();
        Self::new(m, edges)
    }
}

/// Checks every clause of the hierarchy assumption and the edge-count identity.
pub fn validate_graph(g: &SensingGraph) -> ValidationReport {
    let mut violations = Vec::new();
    for v in 1..=g.n {
        let expected = if v <= 3 { v - 1 } else { 3 };
        let actual = g.neighbors(v).len();
        if actual != expected {
            violations.push(Violation::OutDegree {
                vertex: v,
                expected,
                actual,
            });
        }
    }
    for &(source, sink) in &g.edges {
        if source < sink {
            violations.push(Violation::Direction { source, sink });
        }
    }
    for k in 1..=g.n {
        let outs = g.neighbors(k);
        for (a, &lower) in outs.iter().enumerate() {
            for &upper in &outs[a + 1..] {
                if !g.has_edge(upper, lower) {
                    violations.push(Violation::Triangulation {
                        source: k,
                        lower,
                        upper,
                    });
                }
            }
        }
    }
    let expected = 3 * g.n - 6;
    if g.edges.len() != expected {
        violations.push(Violation::EdgeCount {
            expected,
            actual: g.edges.len(),
        });
    }
    ValidationReport { violations }
}

/// Henneberg type I insertion: adds agent `n + 1` sensing the mutually
/// adjacent agents `i < j < k`.
pub fn henneberg_grow(g: &SensingGraph, (i, j, k): (usize, usize, usize)) -> Result<SensingGraph, GraphError> {
    if !(1 <= i && i < j && j < k && k <= g.n) {
        return Err(GraphError::BadTriple(i, j, k));
    }
    for (source, sink) in [(j, i), (k, i), (k, j)] {
        if !g.has_edge(source, sink) {
            return Err(GraphError::NotMutuallyAdjacent {
                i,
                j,
                k,
                from: source,
                to: sink,
            });
        }
    }
    let new = g.n + 1;
    let mut edges = g.edges.clone();
    edges.extend([(new, i), (new, j), (new, k)]);
    SensingGraph::new(new, edges)
}

/// Tetrahedral subgraphs, one per ordinary follower, ordered by follower.
pub fn tetrahedra(g: &SensingGraph) -> Vec<TetrahedronRef> {
    (4..=g.n)
        .filter_map(|l| g.neighbor_triple(l))
        .zip(4..)
        .enumerate()
        .map(|(index, ([i, j, k], l))| TetrahedronRef {
            vertices: [i, j, k, l],
            index,
        })
        .collect()
}

/// Sensing graph of the six-agent octahedron scenario.
pub fn octahedron_graph() -> SensingGraph {
    SensingGraph::from_triples(&[(1, 2, 3), (2, 3, 4), (3, 4, 5)]).expect("octahedron graph is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    const OCTAHEDRON_EDGES: [(usize, usize); 12] = [
        (2, 1),
        (3, 1),
        (3, 2),
        (4, 1),
        (4, 2),
        (4, 3),
        (5, 2),
        (5, 3),
        (5, 4),
        (6, 3),
        (6, 4),
        (6, 5),
    ];

    #[test]
    fn octahedron_edge_set_is_valid() {
        let g = SensingGraph::new(6, OCTAHEDRON_EDGES.to_vec()).unwrap();
        assert!(validate_graph(&g).is_ok());
    }

    #[test]
    fn reversed_first_edge_violates_direction() {
        let mut edges = OCTAHEDRON_EDGES.to_vec();
        edges[0] = (1, 2);
        let g = SensingGraph::new(6, edges).unwrap();
        let report = validate_graph(&g);
        assert!(report.has_clause("ii"));
        assert!(report.violations.contains(&Violation::Direction { source: 1, sink: 2 }));
    }

    #[test]
    fn missing_edge_reports_degree_and_triangulation() {
        // agent 5 senses only 2 and 4; 4 senses 1, 2, 3
        let edges = vec![(2, 1), (3, 1), (3, 2), (4, 1), (4, 2), (4, 3), (5, 2), (5, 4)];
        let g = SensingGraph::new(5, edges).unwrap();
        let report = validate_graph(&g);
        assert!(report.violations.contains(&Violation::OutDegree {
            vertex: 5,
            expected: 3,
            actual: 2
        }));
        assert!(report.has_clause("edge-count"));

        // agent 5 senses 2, 3, 4 but (4, 2) is missing
        let edges = vec![(2, 1), (3, 1), (3, 2), (4, 1), (4, 3), (5, 2), (5, 3), (5, 4)];
        let g = SensingGraph::new(5, edges).unwrap();
        let report = validate_graph(&g);
        assert!(report.violations.contains(&Violation::Triangulation {
            source: 5,
            lower: 2,
            upper: 4
        }));
        assert!(report.has_clause("i"));
    }

    #[test]
    fn structural_errors_are_distinct() {
        assert_eq!(
            SensingGraph::new(3, vec![(2, 1), (4, 1)]),
            Err(GraphError::OutOfRange { from: 4, to: 1, n: 3 })
        );
        assert_eq!(SensingGraph::new(3, vec![(2, 2)]), Err(GraphError::SelfLoop(2)));
        assert_eq!(
            SensingGraph::new(3, vec![(2, 1), (2, 1)]),
            Err(GraphError::Duplicate { from: 2, to: 1 })
        );
        assert_eq!(
            SensingGraph::new(3, vec![(2, 1), (1, 2)]),
            Err(GraphError::Antiparallel { a: 2, b: 1 })
        );
    }

    #[test]
    fn grow_seed_to_tetrahedron() {
        let g = henneberg_grow(&SensingGraph::seed(), (1, 2, 3)).unwrap();
        assert_eq!(g.n(), 4);
        assert!(validate_graph(&g).is_ok());
        assert_eq!(g.neighbor_triple(4), Some([1, 2, 3]));
    }

    #[test]
    fn grow_to_octahedron_graph() {
        let g = octahedron_graph();
        let mut edges = g.edges().to_vec();
        edges.sort_unstable();
        let mut expected = OCTAHEDRON_EDGES.to_vec();
        expected.sort_unstable();
        assert_eq!(edges, expected);
    }

    #[test]
    fn grow_rejects_non_adjacent_triple() {
        // (5,2) exists but (2,1) does not
        let g = SensingGraph::new(5, vec![(3, 1), (3, 2), (4, 1), (4, 2), (4, 3), (5, 2), (5, 3), (5, 4)]).unwrap();
        let err = henneberg_grow(&g, (1, 2, 5)).unwrap_err();
        assert!(matches!(err, GraphError::NotMutuallyAdjacent { from: 2, to: 1, .. }));
        assert_eq!(
            henneberg_grow(&octahedron_graph(), (3, 2, 4)).unwrap_err(),
            GraphError::BadTriple(3, 2, 4)
        );
    }

    #[test]
    fn tetrahedra_listing() {
        let t: Vec<_> = tetrahedra(&octahedron_graph()).iter().map(|t| t.vertices).collect();
        assert_eq!(t, vec![[1, 2, 3, 4], [2, 3, 4, 5], [3, 4, 5, 6]]);

        let g4 = SensingGraph::from_triples(&[(1, 2, 3)]).unwrap();
        assert_eq!(tetrahedra(&g4)[0].vertices, [1, 2, 3, 4]);

        let g5 = SensingGraph::from_triples(&[(1, 2, 3), (1, 3, 4)]).unwrap();
        let t: Vec<_> = tetrahedra(&g5).iter().map(|t| t.vertices).collect();
        assert_eq!(t, vec![[1, 2, 3, 4], [1, 3, 4, 5]]);
        assert!(tetrahedra(&SensingGraph::seed()).is_empty());
    }

    #[test]
    fn prefix_of_grown_graph_is_valid() {
        let g = octahedron_graph();
        for m in 3..=6 {
            let p = g.prefix(m).unwrap();
            assert!(validate_graph(&p).is_ok(), "prefix {m}");
        }
    }
}
