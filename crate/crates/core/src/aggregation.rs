//! Greedy merging of ranked cycles into aggregates and resolution of their
//! conflicting mating links into a monogamous graph.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::cycles::{Cycle, RankedList};
use crate::mating_graph::{EdgeRef, Mating, MatingGraph};

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub nodes: BTreeSet<EdgeRef>,
    pub matings: BTreeSet<Mating>,
    pub piece_links: BTreeSet<Mating>,
    /// Position in formation order.
    pub origin_rank: usize,
    /// Built from an individual piece rather than from cycles.
    pub individual: bool,
}

impl Aggregate {
    pub fn from_cycle(c: &Cycle, origin_rank: usize) -> Self {
        let n = c.nodes.len();
        Self {
            nodes: c.nodes.iter().copied().collect(),
            matings: c.matings().into_iter().collect(),
            piece_links: (0..n / 2)
                .map(|i| Mating::new(c.nodes[2 * i + 1], c.nodes[(2 * i + 2) % n]))
                .collect(),
            origin_rank,
            individual: false,
        }
    }

    /// All surviving mating links of `piece`, with both endpoints as nodes.
    pub fn from_individual(piece: usize, g: &MatingGraph, origin_rank: usize) -> Self {
        let matings: BTreeSet<Mating> = g
            .matings()
            .filter(|m| m.a.piece == piece || m.b.piece == piece)
            .collect();
        let mut nodes: BTreeSet<EdgeRef> = (0..g.n_edges(piece)).map(|e| EdgeRef::new(piece, e)).collect();
        nodes.extend(matings.iter().flat_map(|m| [m.a, m.b]));
        Self {
            nodes,
            matings,
            piece_links: BTreeSet::new(),
            origin_rank,
            individual: true,
        }
    }

    pub fn pieces(&self) -> BTreeSet<usize> {
        self.nodes.iter().map(|n| n.piece).collect()
    }

    /// No node carries two mating links or more than three links overall.
    pub fn is_consistent(&self) -> bool {
        degrees_ok(self.matings.iter().chain(&self.piece_links), &self.matings)
    }

    fn absorb(&mut self, other: &Aggregate) {
        self.nodes.extend(other.nodes.iter().copied());
        self.matings.extend(other.matings.iter().copied());
        self.piece_links.extend(other.piece_links.iter().copied());
    }
}

fn degrees_ok<'a>(links: impl Iterator<Item = &'a Mating>, matings: &BTreeSet<Mating>) -> bool {
    let mut degree: BTreeMap<EdgeRef, usize> = BTreeMap::new();
    for l in links {
        for n in [l.a, l.b] {
            *degree.entry(n).or_default() += 1;
        }
    }
    let mut mated = BTreeSet::new();
    matings.iter().all(|m| mated.insert(m.a) && mated.insert(m.b)) && degree.values().all(|&d| d <= 3)
}

/// Node sets differ, they share a node, and their union keeps every node at
/// one mating link and degree at most three.
pub fn can_merge(a: &Aggregate, b: &Aggregate) -> bool {
    if a.nodes == b.nodes || a.nodes.is_disjoint(&b.nodes) {
        return false;
    }
    let matings: BTreeSet<Mating> = a.matings.union(&b.matings).copied().collect();
    let piece_links: BTreeSet<Mating> = a.piece_links.union(&b.piece_links).copied().collect();
    degrees_ok(matings.iter().chain(&piece_links), &matings)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Aggregation {
    pub aggregates: Vec<Aggregate>,
    /// `can_merge` evaluations made by each iteration.
    pub merge_checks: Vec<usize>,
}

/// The ranked queue procedure: pop the top cycle, scan the rest top to
/// bottom for a mergeable cycle, merge it and restart the scan, until a full
/// scan merges nothing. Individual pieces follow as aggregates of their own.
pub fn aggregate_all(ranked: &RankedList, g: &MatingGraph) -> Aggregation {
    let mut queue: VecDeque<Aggregate> = ranked
        .cycles
        .iter()
        .enumerate()
        .map(|(i, c)| Aggregate::from_cycle(c, i))
        .collect();
    let mut out = Aggregation::default();
    while let Some(mut current) = queue.pop_front() {
        current.origin_rank = out.aggregates.len();
        let mut checks = 0;
        let mut i = 0;
        while i < queue.len() {
            checks += 1;
            if can_merge(&current, &queue[i]) {
                let other = queue.remove(i).expect("index in range");
                current.absorb(&other);
                i = 0;
            } else {
                i += 1;
            }
        }
        out.merge_checks.push(checks);
        out.aggregates.push(current);
    }
    for &p in &ranked.individuals {
        let rank = out.aggregates.len();
        out.aggregates.push(Aggregate::from_individual(p, g, rank));
    }
    out
}

/// Admits mating links aggregate by aggregate, skipping any link with an
/// endpoint already claimed. Within an aggregate links go by descending
/// weight in `g`.
pub fn resolve(aggregates: &[Aggregate], g: &MatingGraph) -> MatingGraph {
    let mut claimed = BTreeSet::new();
    let mut kept = Vec::new();
    for agg in aggregates {
        let mut links: Vec<(Mating, f64)> = agg
            .matings
            .iter()
            .filter_map(|m| g.weight(m).map(|w| (*m, w)))
            .collect();
        links.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        for (m, w) in links {
            if !claimed.contains(&m.a) && !claimed.contains(&m.b) {
                claimed.insert(m.a);
                claimed.insert(m.b);
                kept.push((m, w));
            }
        }
    }
    g.with_links(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles::{find_cycles, individuals};
    use crate::geometry::Polygon;
    use crate::partition::{generate_partition, internal_vertices, random_partition, ConvexPartition, PartitionSpec};
    use crate::geometry::Point2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gt_graph(part: &ConvexPartition) -> MatingGraph {
        let refs: Vec<&Polygon> = part.faces.iter().collect();
        MatingGraph::without_matings(&refs).with_links(
            part.adjacency
                .iter()
                .map(|s| (Mating::new(EdgeRef::new(s.face_a, s.edge_a), EdgeRef::new(s.face_b, s.edge_b)), 1.0)),
        )
    }

    fn ranked(cycles: Vec<Cycle>, n_pieces: usize) -> RankedList {
        let ind = individuals(n_pieces, &cycles);
        RankedList {
            cycles,
            individuals: ind,
        }
    }

    #[test]
    fn merge_conditions() {
        // two internal vertices sharing an edge
        let seeds = vec![
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 0.0),
            Point2::new(20.0, 0.0),
            Point2::new(20.0, 10.0),
            Point2::new(10.0, 10.0),
            Point2::new(0.0, 10.0),
            Point2::new(8.0, 5.0),
            Point2::new(13.0, 4.0),
        ];
        let part = generate_partition(&seeds, 0.0, 0).unwrap();
        assert_eq!(internal_vertices(&part).len(), 2);
        let g = gt_graph(&part);
        let cycles = find_cycles(&g, 12);
        let ivs = internal_vertices(&part);
        let pick = |k: usize| {
            let faces: BTreeSet<usize> = ivs[k].incident_faces.iter().copied().collect();
            cycles.iter().find(|c| c.pieces == faces).unwrap().clone()
        };
        let (a, b) = (Aggregate::from_cycle(&pick(0), 0), Aggregate::from_cycle(&pick(1), 1));
        assert!(a.is_consistent() && b.is_consistent());
        assert!(!can_merge(&a, &a));
        assert!(can_merge(&a, &b));
        let mut u = a.clone();
        u.absorb(&b);
        assert!(u.is_consistent());
    }

    #[test]
    fn disjoint_and_conflicting_cycles_do_not_merge() {
        let part = random_partition(&PartitionSpec::default(), 6).unwrap();
        let g = gt_graph(&part);
        let cycles = find_cycles(&g, 12);
        let aggs: Vec<Aggregate> = cycles.iter().enumerate().map(|(i, c)| Aggregate::from_cycle(c, i)).collect();
        let mut disjoint = 0;
        for a in &aggs {
            for b in &aggs {
                if a.nodes.is_disjoint(&b.nodes) {
                    assert!(!can_merge(a, b));
                    disjoint += 1;
                }
            }
        }
        assert!(disjoint > 0);
        // same nodes as a GT cycle but with a competing mating on one node
        let c = &cycles[0];
        let mut bad = Aggregate::from_cycle(c, 0);
        let m = *bad.matings.iter().next().unwrap();
        bad.matings.remove(&m);
        let other = g.nodes().iter().map(|n| n.edge_ref()).find(|e| e.piece != m.a.piece && !bad.nodes.contains(e)).unwrap();
        bad.matings.insert(Mating::new(m.a, other));
        bad.nodes.insert(other);
        assert!(!can_merge(&Aggregate::from_cycle(c, 0), &bad));
    }

    #[test]
    fn ground_truth_cycles_form_one_aggregate() {
        for seed in 0..5 {
            let part = random_partition(&PartitionSpec::default(), seed).unwrap();
            let g = gt_graph(&part);
            let cycles = find_cycles(&g, 12);
            let r = ranked(cycles.clone(), part.faces.len());
            let agg = aggregate_all(&r, &g);
            let cycle_aggs: Vec<&Aggregate> = agg.aggregates.iter().filter(|a| !a.individual).collect();
            // one aggregate per group of cycles connected through shared nodes
            let mut group: Vec<usize> = (0..cycles.len()).collect();
            fn root(g: &mut Vec<usize>, i: usize) -> usize {
                if g[i] != i {
                    let r = root(g, g[i]);
                    g[i] = r;
                }
                g[i]
            }
            for i in 0..cycles.len() {
                for j in 0..i {
                    if cycles[i].nodes.iter().any(|n| cycles[j].nodes.contains(n)) {
                        let (a, b) = (root(&mut group, i), root(&mut group, j));
                        group[a] = b;
                    }
                }
            }
            let n_groups = (0..cycles.len()).filter(|&i| root(&mut group, i) == i).count();
            assert_eq!(cycle_aggs.len(), n_groups, "seed {seed}");
            let internal: BTreeSet<Mating> = cycles.iter().flat_map(|c| c.matings()).collect();
            let merged: BTreeSet<Mating> = cycle_aggs.iter().flat_map(|a| a.matings.iter().copied()).collect();
            assert_eq!(merged, internal);
            let fin: BTreeSet<Mating> = resolve(&agg.aggregates, &g).matings().collect();
            assert!(internal.is_subset(&fin));
        }
    }

    #[test]
    fn unmergeable_cycles_stay_in_rank_order() {
        let part = random_partition(&PartitionSpec::default(), 2).unwrap();
        let g = gt_graph(&part);
        let cycles = find_cycles(&g, 12);
        let mut chosen: Vec<Cycle> = Vec::new();
        for c in &cycles {
            if chosen.iter().all(|d| d.pieces.is_disjoint(&c.pieces)) {
                chosen.push(c.clone());
            }
        }
        assert!(chosen.len() >= 2);
        let agg = aggregate_all(
            &RankedList {
                cycles: chosen.clone(),
                individuals: vec![],
            },
            &g,
        );
        assert_eq!(agg.aggregates.len(), chosen.len());
        for (a, c) in agg.aggregates.iter().zip(&chosen) {
            assert_eq!(a, &Aggregate::from_cycle(c, a.origin_rank));
        }
    }

    #[test]
    fn merge_checks_quadratic() {
        // a chain of cycles where each one only merges with its predecessor,
        // ranked in reverse so every scan succeeds on the last entry
        let part = random_partition(
            &PartitionSpec {
                n_seeds: 60,
                ..Default::default()
            },
            9,
        )
        .unwrap();
        let g = gt_graph(&part);
        let mut cycles = find_cycles(&g, 12);
        let n = cycles.len();
        cycles.reverse();
        let agg = aggregate_all(
            &RankedList {
                cycles,
                individuals: vec![],
            },
            &g,
        );
        assert!(agg.merge_checks.len() <= n);
        let mut remaining = n;
        for &c in &agg.merge_checks {
            remaining -= 1;
            assert!(c <= (remaining + 1) * (remaining + 1), "{c} checks with {remaining} queued");
        }
        let total: usize = agg.merge_checks.iter().sum();
        assert!(total > n, "fixture never restarted a scan");
    }

    #[test]
    fn earlier_aggregate_wins() {
        let a = EdgeRef::new(0, 0);
        let (b, c) = (EdgeRef::new(1, 0), EdgeRef::new(2, 0));
        let mk = |m: Mating, rank: usize| Aggregate {
            nodes: [m.a, m.b].into_iter().collect(),
            matings: [m].into_iter().collect(),
            piece_links: BTreeSet::new(),
            origin_rank: rank,
            individual: false,
        };
        let tri = Polygon::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)]).unwrap();
        let g = MatingGraph::from_polygons(&[&tri, &tri, &tri]);
        let (m1, m2) = (Mating::new(a, b), Mating::new(a, c));
        let fin = resolve(&[mk(m2, 0), mk(m1, 1)], &g);
        assert_eq!(fin.matings().collect::<Vec<_>>(), vec![m2]);
        let fin = resolve(&[mk(m1, 0)], &g);
        assert_eq!(fin.matings().collect::<Vec<_>>(), vec![m1]);
    }

    #[test]
    fn resolve_is_monogamous_subset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..20 {
            let part = random_partition(&PartitionSpec::default(), seed).unwrap();
            let refs: Vec<&Polygon> = part.faces.iter().collect();
            let full = MatingGraph::from_polygons(&refs);
            let g = full.retain(|_, _| rng.gen_bool(0.05));
            let g = g.with_links(g.matings().map(|m| (m, rng.gen::<f64>())).collect::<Vec<_>>());
            let mut cycles = find_cycles(&g, 6);
            cycles.truncate(200);
            let r = ranked(cycles, part.faces.len());
            let agg = aggregate_all(&r, &g);
            for a in agg.aggregates.iter().filter(|a| !a.individual) {
                assert!(a.is_consistent());
            }
            let fin = resolve(&agg.aggregates, &g);
            assert!(fin.is_monogamous());
            for m in fin.matings() {
                assert!(g.has_link(&m));
            }
            assert_eq!(aggregate_all(&r, &g), agg);
        }
    }

    #[test]
    fn individual_keeps_best_link() {
        let tri = Polygon::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)]).unwrap();
        let base = MatingGraph::from_polygons(&[&tri, &tri, &tri]);
        let a = EdgeRef::new(0, 0);
        let g = base.with_links([
            (Mating::new(a, EdgeRef::new(1, 0)), 0.6),
            (Mating::new(a, EdgeRef::new(2, 1)), 0.9),
            (Mating::new(EdgeRef::new(0, 2), EdgeRef::new(2, 2)), 0.7),
        ]);
        let agg = aggregate_all(
            &RankedList {
                cycles: vec![],
                individuals: vec![0],
            },
            &g,
        );
        let fin = resolve(&agg.aggregates, &g);
        let got: BTreeSet<Mating> = fin.matings().collect();
        assert_eq!(
            got,
            BTreeSet::from([Mating::new(a, EdgeRef::new(2, 1)), Mating::new(EdgeRef::new(0, 2), EdgeRef::new(2, 2))])
        );
    }
}
