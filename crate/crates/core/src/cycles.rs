//! Cycles of alternating mating and piece links, which hypothesise the
//! pieces meeting at one internal vertex, and their scoring by trial
//! reconstruction.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::{area_covered_by_union, Polygon, RigidTransform};
use crate::mating_graph::{EdgeRef, Mating, MatingGraph};
use crate::spring::{relax, springs_for, SimConfig};

pub const DEFAULT_MAX_MATINGS: usize = 8;
pub const DEFAULT_TAU: f64 = 50.0;
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Cycle {
    /// Walk order: `nodes[2i]` and `nodes[2i + 1]` are joined by a mating
    /// link, `nodes[2i + 1]` and `nodes[2i + 2]` by a piece link (wrapping).
    pub nodes: Vec<EdgeRef>,
    pub pieces: BTreeSet<usize>,
    pub score_ol: f64,
    pub score_td: f64,
    pub score_total: f64,
}

impl Cycle {
    fn from_walk(nodes: Vec<EdgeRef>) -> Self {
        let pieces = nodes.iter().map(|n| n.piece).collect();
        Self {
            nodes,
            pieces,
            score_ol: 0.0,
            score_td: 0.0,
            score_total: 0.0,
        }
    }

    pub fn matings(&self) -> Vec<Mating> {
        self.nodes.chunks(2).map(|p| Mating::new(p[0], p[1])).collect()
    }

    pub fn n_matings(&self) -> usize {
        self.nodes.len() / 2
    }

    /// Node list rotated to start at its smallest node, read in the
    /// direction whose second node is smaller.
    pub fn canonical(&self) -> Vec<EdgeRef> {
        canonical_form(&self.nodes)
    }
}

pub fn canonical_form(nodes: &[EdgeRef]) -> Vec<EdgeRef> {
    let n = nodes.len();
    if n == 0 {
        return Vec::new();
    }
    let i = (0..n).min_by_key(|&k| nodes[k]).unwrap_or(0);
    let fwd: Vec<EdgeRef> = (0..n).map(|k| nodes[(i + k) % n]).collect();
    let bwd: Vec<EdgeRef> = (0..n).map(|k| nodes[(i + n - k) % n]).collect();
    if n > 1 && bwd[1] < fwd[1] {
        bwd
    } else {
        fwd
    }
}

/// Enumerates every cycle with between 3 and `max_matings` mating links
/// that visits each of its pieces once. A walk crosses a mating link and
/// then the piece link to the next counter-clockwise edge, and closes when
/// that piece link lands on its start node. Each cycle is reported once,
/// starting on its lowest piece id.
pub fn find_cycles(g: &MatingGraph, max_matings: usize) -> Vec<Cycle> {
    let mates = g.mate_lists();
    let mut out = Vec::new();
    let mut used = vec![false; g.n_pieces()];
    for node in g.nodes() {
        let start = node.edge_ref();
        used[start.piece] = true;
        let mut path = vec![start];
        walk(g, &mates, max_matings, start, &mut path, &mut used, &mut out);
        used[start.piece] = false;
    }
    out
}

fn walk(
    g: &MatingGraph,
    mates: &[Vec<EdgeRef>],
    max_matings: usize,
    start: EdgeRef,
    path: &mut Vec<EdgeRef>,
    used: &mut [bool],
    out: &mut Vec<Cycle>,
) {
    let cur = *path.last().expect("walk starts from a node");
    let n_matings = path.len() / 2 + 1;
    for &m in &mates[g.index(cur)] {
        if m.piece == start.piece {
            if n_matings >= 3 && g.successor(m) == start {
                let mut nodes = path.clone();
                nodes.push(m);
                out.push(Cycle::from_walk(nodes));
            }
            continue;
        }
        if m.piece < start.piece || used[m.piece] || n_matings >= max_matings {
            continue;
        }
        used[m.piece] = true;
        path.push(m);
        path.push(g.successor(m));
        walk(g, mates, max_matings, start, path, used, out);
        path.truncate(path.len() - 2);
        used[m.piece] = false;
    }
}

/// `Q_ol`: summed fraction of each piece's area covered by the others.
pub fn overlap_score(polys: &[Polygon]) -> f64 {
    (0..polys.len())
        .map(|i| {
            let others: Vec<&Polygon> = polys.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| p).collect();
            area_covered_by_union(&polys[i], &others) / polys[i].area()
        })
        .sum()
}

/// `Q_td`: summed squared distances between mating vertices.
pub fn tightness(polys: &[Polygon], transforms: &[RigidTransform], matings: &[Mating]) -> f64 {
    springs_for(matings, polys)
        .iter()
        .map(|s| {
            let a = transforms[s.a.piece].apply(polys[s.a.piece].vertex(s.a.vertex));
            let b = transforms[s.b.piece].apply(polys[s.b.piece].vertex(s.b.vertex));
            (a - b).norm_sq()
        })
        .sum()
}

/// `Q_cycle = α Q_ol + (1 − α) Q_td`.
pub fn cycle_score(score_ol: f64, score_td: f64, alpha: f64) -> f64 {
    alpha * score_ol + (1.0 - alpha) * score_td
}

/// The cycle's pieces (ascending ids) and its matings renumbered into them.
pub fn cycle_subproblem(c: &Cycle, polys: &[Polygon]) -> (Vec<Polygon>, Vec<Mating>) {
    let ids: Vec<usize> = c.pieces.iter().copied().collect();
    let local = |e: EdgeRef| EdgeRef::new(ids.binary_search(&e.piece).expect("cycle piece"), e.edge);
    let sub = ids.iter().map(|&i| polys[i].clone()).collect();
    let matings = c.matings().iter().map(|m| Mating::new(local(m.a), local(m.b))).collect();
    (sub, matings)
}

/// Runs the solver on the cycle's pieces alone. `Q_ol` is taken from the
/// collision-free poses, `Q_td` from the final ones.
pub fn score_cycle(c: &Cycle, polys: &[Polygon], alpha: f64, sim: &SimConfig) -> Result<Cycle> {
    let (sub, matings) = cycle_subproblem(c, polys);
    let r = relax(&sub, &matings, sim)?;
    let placed1: Vec<Polygon> = sub.iter().zip(&r.phase1).map(|(p, t)| p.transformed(t)).collect();
    let score_ol = overlap_score(&placed1);
    let score_td = tightness(&sub, &r.transforms, &matings);
    Ok(Cycle {
        score_ol,
        score_td,
        score_total: cycle_score(score_ol, score_td, alpha),
        ..c.clone()
    })
}

pub fn score_cycles(cycles: &[Cycle], polys: &[Polygon], alpha: f64, sim: &SimConfig) -> Result<Vec<Cycle>> {
    cycles.par_iter().map(|c| score_cycle(c, polys, alpha, sim)).collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankedList {
    pub cycles: Vec<Cycle>,
    /// Pieces in no kept cycle, ranked after every cycle.
    pub individuals: Vec<usize>,
}

/// Sorts by ascending score (ties by canonical form) and keeps the prefix
/// before the first gap larger than `tau`.
pub fn rank_cycles(mut cycles: Vec<Cycle>, tau: f64) -> Vec<Cycle> {
    cycles.sort_by(|a, b| {
        a.score_total
            .total_cmp(&b.score_total)
            .then_with(|| a.canonical().cmp(&b.canonical()))
    });
    let cut = cycles
        .windows(2)
        .position(|w| (w[1].score_total - w[0].score_total).abs() > tau)
        .map_or(cycles.len(), |i| i + 1);
    cycles.truncate(cut);
    cycles
}

/// Ranks and cuts `cycles`; pieces of `0..n_pieces` left in no kept cycle
/// become individuals.
pub fn rank_and_cut(cycles: Vec<Cycle>, n_pieces: usize, tau: f64) -> RankedList {
    let cycles = rank_cycles(cycles, tau);
    RankedList {
        individuals: individuals(n_pieces, &cycles),
        cycles,
    }
}

/// Pieces of `0..n_pieces` that appear in none of `cycles`.
pub fn individuals(n_pieces: usize, cycles: &[Cycle]) -> Vec<usize> {
    let covered: BTreeSet<usize> = cycles.iter().flat_map(|c| c.pieces.iter().copied()).collect();
    (0..n_pieces).filter(|p| !covered.contains(p)).collect()
}

/// Keeps the mating links of kept cycles and every link touching an
/// individual piece.
pub fn prune_graph(g: &MatingGraph, kept: &RankedList) -> MatingGraph {
    let in_cycles: BTreeSet<Mating> = kept.cycles.iter().flat_map(Cycle::matings).collect();
    let singles: BTreeSet<usize> = kept.individuals.iter().copied().collect();
    g.retain(|m, _| in_cycles.contains(m) || singles.contains(&m.a.piece) || singles.contains(&m.b.piece))
}

/// Ranked table of cycles as TOML.
pub fn cycle_report(cycles: &[Cycle]) -> String {
    #[derive(Serialize)]
    struct Report {
        cycle: Vec<Row>,
    }
    #[derive(Serialize)]
    struct Row {
        rank: usize,
        pieces: Vec<usize>,
        matings: Vec<[usize; 4]>,
        score_ol: f64,
        score_td: f64,
        score_total: f64,
    }
    let report = Report {
        cycle: cycles
            .iter()
            .enumerate()
            .map(|(rank, c)| Row {
                rank,
                pieces: c.pieces.iter().copied().collect(),
                matings: c.matings().iter().map(|m| [m.a.piece, m.a.edge, m.b.piece, m.b.edge]).collect(),
                score_ol: c.score_ol,
                score_td: c.score_td,
                score_total: c.score_total,
            })
            .collect(),
    };
    toml::to_string(&report).expect("cycle report is always serializable")
}
