//! The mating graph: one node per piece edge, piece links between
//! consecutive edges of a piece, and weighted mating links between edges of
//! different pieces that might abut in the solution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Piece;
use crate::geometry::Polygon;

/// Slack added to the `4ε` length window so that noiseless matings survive
/// floating-point round-off in the shuffled frames.
pub const LENGTH_TOL: f64 = 1e-6;

/// Identifies edge `edge` of piece `piece`; ordered lexicographically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeRef {
    pub piece: usize,
    pub edge: usize,
}

impl EdgeRef {
    pub const fn new(piece: usize, edge: usize) -> Self {
        Self { piece, edge }
    }
}

impl fmt::Display for EdgeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.piece, self.edge)
    }
}

/// Unordered pair of edges, stored with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Mating {
    pub a: EdgeRef,
    pub b: EdgeRef,
}

impl Mating {
    pub fn new(x: EdgeRef, y: EdgeRef) -> Self {
        if x <= y {
            Self { a: x, b: y }
        } else {
            Self { a: y, b: x }
        }
    }

    pub fn contains(&self, e: EdgeRef) -> bool {
        self.a == e || self.b == e
    }

    /// The endpoint that is not `e`.
    pub fn other(&self, e: EdgeRef) -> EdgeRef {
        if self.a == e {
            self.b
        } else {
            self.a
        }
    }
}

impl fmt::Display for Mating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} - {}", self.a, self.b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeNode {
    pub piece: usize,
    pub edge_index: usize,
    pub length: f64,
}

impl EdgeNode {
    pub fn edge_ref(&self) -> EdgeRef {
        EdgeRef::new(self.piece, self.edge_index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatingLink {
    pub mating: Mating,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatingGraph {
    nodes: Vec<EdgeNode>,
    /// Index of each piece's first node; one extra entry at the end.
    offsets: Vec<usize>,
    links: BTreeMap<Mating, f64>,
}

impl MatingGraph {
    /// Nodes and piece links for every edge, plus the complete set of
    /// cross-piece mating links (weight 1).
    pub fn build(pieces: &[Piece]) -> Self {
        let polys: Vec<&Polygon> = pieces.iter().map(|p| &p.polygon).collect();
        Self::from_polygons(&polys)
    }

    pub fn from_polygons(polys: &[&Polygon]) -> Self {
        let mut g = Self::without_matings(polys);
        for a in 0..g.nodes.len() {
            for b in a + 1..g.nodes.len() {
                if g.nodes[a].piece != g.nodes[b].piece {
                    g.links
                        .insert(Mating::new(g.nodes[a].edge_ref(), g.nodes[b].edge_ref()), 1.0);
                }
            }
        }
        g
    }

    /// Nodes and piece links only.
    pub fn without_matings(polys: &[&Polygon]) -> Self {
        let mut nodes = Vec::new();
        let mut offsets = Vec::with_capacity(polys.len() + 1);
        for (pi, poly) in polys.iter().enumerate() {
            offsets.push(nodes.len());
            for e in 0..poly.len() {
                nodes.push(EdgeNode {
                    piece: pi,
                    edge_index: e,
                    length: poly.edge_length(e),
                });
            }
        }
        offsets.push(nodes.len());
        Self {
            nodes,
            offsets,
            links: BTreeMap::new(),
        }
    }

    /// Same nodes, with the given mating links replacing the current ones.
    pub fn with_links(&self, links: impl IntoIterator<Item = (Mating, f64)>) -> Self {
        Self {
            nodes: self.nodes.clone(),
            offsets: self.offsets.clone(),
            links: links.into_iter().collect(),
        }
    }

    pub fn nodes(&self) -> &[EdgeNode] {
        &self.nodes
    }

    pub fn n_pieces(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_edges(&self, piece: usize) -> usize {
        self.offsets[piece + 1] - self.offsets[piece]
    }

    pub fn index(&self, e: EdgeRef) -> usize {
        self.offsets[e.piece] + e.edge
    }

    pub fn node(&self, e: EdgeRef) -> &EdgeNode {
        &self.nodes[self.index(e)]
    }

    pub fn contains_edge(&self, e: EdgeRef) -> bool {
        e.piece < self.n_pieces() && e.edge < self.n_edges(e.piece)
    }

    /// Next edge counter-clockwise around the same piece.
    pub fn successor(&self, e: EdgeRef) -> EdgeRef {
        EdgeRef::new(e.piece, (e.edge + 1) % self.n_edges(e.piece))
    }

    pub fn predecessor(&self, e: EdgeRef) -> EdgeRef {
        let n = self.n_edges(e.piece);
        EdgeRef::new(e.piece, (e.edge + n - 1) % n)
    }

    /// All piece links as unordered pairs.
    pub fn piece_links(&self) -> BTreeSet<Mating> {
        self.nodes
            .iter()
            .map(|n| {
                let e = n.edge_ref();
                Mating::new(e, self.successor(e))
            })
            .collect()
    }

    pub fn n_mating_links(&self) -> usize {
        self.links.len()
    }

    pub fn mating_links(&self) -> impl Iterator<Item = MatingLink> + '_ {
        self.links.iter().map(|(&mating, &weight)| MatingLink { mating, weight })
    }

    pub fn matings(&self) -> impl Iterator<Item = Mating> + '_ {
        self.links.keys().copied()
    }

    pub fn has_link(&self, m: &Mating) -> bool {
        self.links.contains_key(m)
    }

    pub fn weight(&self, m: &Mating) -> Option<f64> {
        self.links.get(m).copied()
    }

    pub fn set_weight(&mut self, m: &Mating, w: f64) {
        if let Some(x) = self.links.get_mut(m) {
            *x = w;
        }
    }

    /// Sorted mating neighbours of every node, indexed like `nodes()`.
    pub fn mate_lists(&self) -> Vec<Vec<EdgeRef>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for m in self.links.keys() {
            adj[self.index(m.a)].push(m.b);
            adj[self.index(m.b)].push(m.a);
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        adj
    }

    pub fn mating_degree(&self, e: EdgeRef) -> usize {
        self.links.keys().filter(|m| m.contains(e)).count()
    }

    /// Number of mating links touching any edge of each piece.
    pub fn piece_mating_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_pieces()];
        for m in self.links.keys() {
            counts[m.a.piece] += 1;
            counts[m.b.piece] += 1;
        }
        counts
    }

    /// Keeps only mating links whose edge lengths differ by at most `4ε`.
    pub fn geometric_filter(&self, epsilon: f64) -> Self {
        let bound = 4.0 * epsilon + LENGTH_TOL;
        self.retain(|m, _| (self.node(m.a).length - self.node(m.b).length).abs() <= bound)
    }

    /// Keeps mating links with `weight >= threshold`.
    pub fn filter_by_weight(&self, threshold: f64) -> Self {
        self.retain(|_, w| w >= threshold)
    }

    pub fn retain(&self, mut keep: impl FnMut(&Mating, f64) -> bool) -> Self {
        self.with_links(self.links.iter().filter(|(m, &w)| keep(m, w)).map(|(&m, &w)| (m, w)))
    }

    /// Nodes without any mating link.
    pub fn boundary_nodes(&self) -> BTreeSet<EdgeRef> {
        let mut mated = BTreeSet::new();
        for m in self.links.keys() {
            mated.insert(m.a);
            mated.insert(m.b);
        }
        self.nodes
            .iter()
            .map(EdgeNode::edge_ref)
            .filter(|e| !mated.contains(e))
            .collect()
    }

    /// Every node carries at most one mating link.
    pub fn is_monogamous(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.links.keys().all(|m| seen.insert(m.a) && seen.insert(m.b))
    }

    /// Structured-text dump: node table followed by the link lists.
    pub fn to_toml(&self) -> String {
        #[derive(Serialize)]
        struct Dump {
            nodes: Vec<NodeRow>,
            piece_links: Vec<[usize; 4]>,
            mating_links: Vec<LinkRow>,
        }
        #[derive(Serialize)]
        struct NodeRow {
            piece: usize,
            edge: usize,
            length: f64,
        }
        #[derive(Serialize)]
        struct LinkRow {
            a: [usize; 2],
            b: [usize; 2],
            weight: f64,
        }
        let dump = Dump {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRow {
                    piece: n.piece,
                    edge: n.edge_index,
                    length: n.length,
                })
                .collect(),
            piece_links: self
                .piece_links()
                .into_iter()
                .map(|m| [m.a.piece, m.a.edge, m.b.piece, m.b.edge])
                .collect(),
            mating_links: self
                .mating_links()
                .map(|l| LinkRow {
                    a: [l.mating.a.piece, l.mating.a.edge],
                    b: [l.mating.b.piece, l.mating.b.edge],
                    weight: l.weight,
                })
                .collect(),
        };
        toml::to_string(&dump).expect("graph dump is always serializable")
    }
}
