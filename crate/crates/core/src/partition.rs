//! Convex partitions of a seed set: Delaunay triangulation followed by a
//! randomized greedy merge of adjacent faces whose union stays convex.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{convex_hull, orient, Point2, Polygon, GEOM_EPS};

/// An internal edge shared by two faces: edge `edge_a` of `face_a` runs in
/// the opposite direction of edge `edge_b` of `face_b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SharedEdge {
    pub face_a: usize,
    pub edge_a: usize,
    pub face_b: usize,
    pub edge_b: usize,
}

#[derive(Clone, Debug)]
pub struct ConvexPartition {
    pub seeds: Vec<Point2>,
    pub faces: Vec<Polygon>,
    /// Seed indices of each face's vertices, in the same order as `faces`.
    pub face_vertices: Vec<Vec<usize>>,
    pub adjacency: Vec<SharedEdge>,
    /// `(face, edge)` pairs on the convex hull.
    pub hull_edges: BTreeSet<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InternalVertex {
    pub seed: usize,
    pub location: Point2,
    /// Incident faces in counter-clockwise angular order around `location`.
    pub incident_faces: Vec<usize>,
}

impl ConvexPartition {
    pub fn hull(&self) -> Polygon {
        convex_hull(&self.seeds).expect("partition seeds span an area")
    }

    pub fn total_area(&self) -> f64 {
        self.faces.iter().map(Polygon::area).sum()
    }

    /// Smallest interior angle over all faces, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        self.faces
            .iter()
            .flat_map(|f| (0..f.len()).map(move |i| f.interior_angle(i)))
            .fold(f64::INFINITY, f64::min)
            .to_degrees()
    }

    pub fn min_edge_length(&self) -> f64 {
        self.faces
            .iter()
            .flat_map(|f| (0..f.len()).map(move |i| f.edge_length(i)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Triangulates `seeds` (Delaunay) and then removes internal edges in a
/// seeded random order, each with probability `merge_probability`, whenever
/// the union of the two incident faces is strictly convex.
pub fn generate_partition(
    seeds: &[Point2],
    merge_probability: f64,
    rng_seed: u64,
) -> Result<ConvexPartition> {
    if !(0.0..=1.0).contains(&merge_probability) {
        return Err(Error::InvalidParameter(format!(
            "merge probability {merge_probability} outside [0, 1]"
        )));
    }
    if seeds.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 seeds, got {}", seeds.len())));
    }
    // validates non-collinearity
    convex_hull(seeds)?;

    let triangles = delaunay(seeds)?;
    let mut faces: Vec<Option<Vec<usize>>> = triangles.into_iter().map(|t| Some(t.to_vec())).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    if merge_probability > 0.0 {
        let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            let f = f.as_ref().unwrap();
            for k in 0..f.len() {
                owner.insert((f[k], f[(k + 1) % f.len()]), fi);
            }
        }
        let mut internal: Vec<(usize, usize)> = Vec::new();
        for f in faces.iter().flatten() {
            for k in 0..f.len() {
                let (u, v) = (f[k], f[(k + 1) % f.len()]);
                if u < v && owner.contains_key(&(v, u)) {
                    internal.push((u, v));
                }
            }
        }
        internal.shuffle(&mut rng);
        for (u, v) in internal {
            if !rng.gen_bool(merge_probability) {
                continue;
            }
            let (Some(&fa), Some(&fb)) = (owner.get(&(u, v)), owner.get(&(v, u))) else {
                continue;
            };
            if fa == fb {
                continue;
            }
            let a = faces[fa].as_ref().unwrap();
            let b = faces[fb].as_ref().unwrap();
            let Some(merged) = try_merge(seeds, a, b, u, v) else {
                continue;
            };
            owner.remove(&(u, v));
            owner.remove(&(v, u));
            for k in 0..merged.len() {
                owner.insert((merged[k], merged[(k + 1) % merged.len()]), fa);
            }
            faces[fa] = Some(merged);
            faces[fb] = None;
        }
    }

    let face_vertices: Vec<Vec<usize>> = faces.into_iter().flatten().collect();
    build_partition(seeds, face_vertices)
}

/// Merges face `a` (containing directed edge u→v) with face `b` (containing
/// v→u) if the result is strictly convex at `u` and `v`.
fn try_merge(seeds: &[Point2], a: &[usize], b: &[usize], u: usize, v: usize) -> Option<Vec<usize>> {
    let rot = |f: &[usize], start: usize| -> Vec<usize> {
        let i = f.iter().position(|&x| x == start).unwrap();
        f[i..].iter().chain(f[..i].iter()).copied().collect()
    };
    // a rotated to start at v ends at u; b rotated to start at u ends at v
    let ra = rot(a, v);
    let rb = rot(b, u);
    if *ra.last().unwrap() != u || *rb.last().unwrap() != v {
        return None;
    }
    let mut merged = ra.clone();
    merged.extend_from_slice(&rb[1..rb.len() - 1]);

    let turn = |p: usize, q: usize, r: usize| {
        let (p, q, r) = (seeds[p], seeds[q], seeds[r]);
        orient(p, q, r) / ((q - p).norm() * (r - q).norm())
    };
    let at_u = turn(ra[ra.len() - 2], u, rb[1]);
    let at_v = turn(rb[rb.len() - 2], v, ra[1]);
    if at_u > GEOM_EPS && at_v > GEOM_EPS {
        Some(merged)
    } else {
        None
    }
}

/// Assembles a partition from face vertex cycles (seed indices, CCW).
pub fn build_partition(seeds: &[Point2], face_vertices: Vec<Vec<usize>>) -> Result<ConvexPartition> {
    let faces = face_vertices
        .iter()
        .map(|f| Polygon::new(f.iter().map(|&i| seeds[i]).collect()))
        .collect::<Result<Vec<_>>>()?;
    let mut owner: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    for (fi, f) in face_vertices.iter().enumerate() {
        for k in 0..f.len() {
            owner.insert((f[k], f[(k + 1) % f.len()]), (fi, k));
        }
    }
    let mut adjacency = Vec::new();
    let mut hull_edges = BTreeSet::new();
    for (fi, f) in face_vertices.iter().enumerate() {
        for k in 0..f.len() {
            let (u, v) = (f[k], f[(k + 1) % f.len()]);
            match owner.get(&(v, u)) {
                Some(&(gj, j)) => {
                    if fi < gj {
                        adjacency.push(SharedEdge {
                            face_a: fi,
                            edge_a: k,
                            face_b: gj,
                            edge_b: j,
                        });
                    }
                }
                None => {
                    hull_edges.insert((fi, k));
                }
            }
        }
    }
    Ok(ConvexPartition {
        seeds: seeds.to_vec(),
        faces,
        face_vertices,
        adjacency,
        hull_edges,
    })
}

/// Seeds strictly inside the hull where three or more faces meet.
pub fn internal_vertices(partition: &ConvexPartition) -> Vec<InternalVertex> {
    let hull = partition.hull();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); partition.seeds.len()];
    for (fi, f) in partition.face_vertices.iter().enumerate() {
        for &s in f {
            incident[s].push(fi);
        }
    }
    let on_boundary = |p: Point2| {
        (0..hull.len()).any(|i| {
            let (a, b) = hull.edge(i);
            orient(a, b, p).abs() <= GEOM_EPS * a.dist(b)
        })
    };
    let mut out = Vec::new();
    for (s, faces) in incident.into_iter().enumerate() {
        let loc = partition.seeds[s];
        if faces.len() < 3 || !hull.contains(loc, 0.0) || on_boundary(loc) {
            continue;
        }
        let mut keyed: Vec<(f64, usize)> = faces
            .into_iter()
            .map(|f| {
                let c = partition.faces[f].centroid() - loc;
                (c.y.atan2(c.x), f)
            })
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        out.push(InternalVertex {
            seed: s,
            location: loc,
            incident_faces: keyed.into_iter().map(|(_, f)| f).collect(),
        });
    }
    out
}

/// Parameters for sampling a random partition inside a rectangle.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub n_seeds: usize,
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub merge_probability: f64,
    pub min_angle_deg: f64,
    pub min_area_fraction: f64,
    /// Shortest acceptable face edge, world units.
    pub min_edge_length: f64,
    pub max_attempts: usize,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            n_seeds: 20,
            width: 512.0,
            height: 512.0,
            margin: 8.0,
            merge_probability: 0.5,
            min_angle_deg: 1.0,
            min_area_fraction: 1e-6,
            min_edge_length: 0.0,
            max_attempts: 100,
        }
    }
}

/// Samples seeds uniformly in the inner rectangle and partitions them,
/// resampling when a face is near-degenerate.
pub fn random_partition(spec: &PartitionSpec, rng_seed: u64) -> Result<ConvexPartition> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut last_err = Error::Degenerate("no attempt made".into());
    for _ in 0..spec.max_attempts.max(1) {
        let seeds: Vec<Point2> = (0..spec.n_seeds)
            .map(|_| {
                Point2::new(
                    rng.gen_range(spec.margin..spec.width - spec.margin),
                    rng.gen_range(spec.margin..spec.height - spec.margin),
                )
            })
            .collect();
        let part = match generate_partition(&seeds, spec.merge_probability, rng.gen()) {
            Ok(p) => p,
            Err(e) => {
                last_err = e;
                continue;
            }
        };
        let hull_area = part.hull().area();
        let min_area = part.faces.iter().map(Polygon::area).fold(f64::INFINITY, f64::min);
        if part.min_angle_deg() < spec.min_angle_deg {
            last_err = Error::Degenerate("sliver face".into());
            continue;
        }
        if min_area < spec.min_area_fraction * hull_area {
            last_err = Error::Degenerate("tiny face".into());
            continue;
        }
        if part.min_edge_length() < spec.min_edge_length {
            last_err = Error::Degenerate("short edge".into());
            continue;
        }
        return Ok(part);
    }
    Err(last_err)
}

/// Bowyer–Watson Delaunay triangulation. Returns CCW triangles as seed
/// index triples; the union of the triangles is the convex hull.
fn delaunay(pts: &[Point2]) -> Result<Vec<[usize; 3]>> {
    let n = pts.len();
    let (mut lo, mut hi) = (pts[0], pts[0]);
    for p in pts {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let center = (lo + hi) * 0.5;
    let span = (hi - lo).norm().max(1.0) * 1e4;
    let mut all: Vec<Point2> = pts.to_vec();
    all.push(center + Point2::new(-span, -span));
    all.push(center + Point2::new(span, -span));
    all.push(center + Point2::new(0.0, span));

    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
    for i in 0..n {
        let p = all[i];
        let mut bad = Vec::new();
        let mut good = Vec::with_capacity(tris.len());
        for t in tris.drain(..) {
            if in_circumcircle(&all, t, p) {
                bad.push(t);
            } else {
                good.push(t);
            }
        }
        tris = good;
        // cavity boundary: directed edges of bad triangles without a twin
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &bad {
            for k in 0..3 {
                *edges.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        let mut boundary: Vec<(usize, usize)> = edges
            .keys()
            .filter(|&&(a, b)| !edges.contains_key(&(b, a)))
            .copied()
            .collect();
        boundary.sort_unstable();
        for (a, b) in boundary {
            tris.push([a, b, i]);
        }
    }
    tris.retain(|t| t.iter().all(|&v| v < n));
    tris.retain(|t| orient(pts[t[0]], pts[t[1]], pts[t[2]]) > 0.0);
    fill_hull_pockets(pts, &mut tris);
    tris.sort_unstable();
    Ok(tris)
}

fn in_circumcircle(pts: &[Point2], t: [usize; 3], p: Point2) -> bool {
    let a = pts[t[0]] - p;
    let b = pts[t[1]] - p;
    let c = pts[t[2]] - p;
    let det = (a.norm_sq()) * b.cross(c) - (b.norm_sq()) * a.cross(c) + (c.norm_sq()) * a.cross(b);
    det > 0.0
}

/// Removing the super-triangle can leave concave notches on the boundary
/// when hull points are nearly collinear; close them with ear triangles.
fn fill_hull_pockets(pts: &[Point2], tris: &mut Vec<[usize; 3]>) {
    loop {
        let mut directed: BTreeSet<(usize, usize)> = BTreeSet::new();
        for t in tris.iter() {
            for k in 0..3 {
                directed.insert((t[k], t[(k + 1) % 3]));
            }
        }
        let boundary: HashMap<usize, usize> = directed
            .iter()
            .filter(|&&(a, b)| !directed.contains(&(b, a)))
            .map(|&(a, b)| (a, b))
            .collect();
        let mut starts: Vec<usize> = boundary.keys().copied().collect();
        starts.sort_unstable();
        let mut added = false;
        for a in starts {
            let b = boundary[&a];
            let Some(&c) = boundary.get(&b) else { continue };
            if orient(pts[a], pts[b], pts[c]) < 0.0 {
                tris.push([a, c, b]);
                added = true;
                break;
            }
        }
        if !added {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_with_center() -> Vec<Point2> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 0.0),
            Point2::new(4.0, 9.0),
            Point2::new(4.5, 3.0),
        ]
    }

    fn check_invariants(p: &ConvexPartition) {
        let hull_area = p.hull().area();
        assert!((p.total_area() - hull_area).abs() <= 1e-6 * hull_area);
        for f in &p.faces {
            assert!(f.is_convex());
        }
        for i in 0..p.faces.len() {
            for j in i + 1..p.faces.len() {
                let ov = crate::geometry::intersection_area(&p.faces[i], &p.faces[j]);
                assert!(ov < GEOM_EPS * p.faces[i].area().max(1.0), "faces {i},{j} overlap {ov}");
            }
        }
        for (s, &pt) in p.seeds.iter().enumerate() {
            for (fi, f) in p.faces.iter().enumerate() {
                if p.face_vertices[fi].contains(&s) {
                    continue;
                }
                // strictly inside: positive distance to every edge
                let strictly = (0..f.len()).all(|k| {
                    let (a, b) = f.edge(k);
                    orient(a, b, pt) > 1e-9 * a.dist(b)
                });
                assert!(!strictly, "seed {s} inside face {fi}");
            }
        }
        let mut seen = BTreeSet::new();
        for a in &p.adjacency {
            assert!(seen.insert((a.face_a, a.edge_a)));
            assert!(seen.insert((a.face_b, a.edge_b)));
        }
        for &h in &p.hull_edges {
            assert!(!seen.contains(&h));
        }
        let total_edges: usize = p.faces.iter().map(Polygon::len).sum();
        assert_eq!(seen.len() + p.hull_edges.len(), total_edges);
    }

    #[test]
    fn three_points_single_triangle() {
        let pts = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)];
        let p = generate_partition(&pts, 0.0, 1).unwrap();
        assert_eq!(p.faces.len(), 1);
        assert!(p.adjacency.is_empty());
        assert_eq!(p.hull_edges.len(), 3);
        assert!(internal_vertices(&p).is_empty());
    }

    #[test]
    fn interior_point_gives_three_faces() {
        // the only triangulation of a triangle plus an interior point is the fan
        let p = generate_partition(&square_with_center(), 0.0, 1).unwrap();
        assert_eq!(p.faces.len(), 3);
        check_invariants(&p);
        let iv = internal_vertices(&p);
        assert_eq!(iv.len(), 1);
        assert_eq!(iv[0].seed, 3);
        assert_eq!(iv[0].incident_faces.len(), 3);
    }

    #[test]
    fn collinear_rejected() {
        let pts: Vec<Point2> = (0..5).map(|i| Point2::new(i as f64, 2.0 * i as f64)).collect();
        assert!(generate_partition(&pts, 0.0, 0).is_err());
    }

    #[test]
    fn random_partitions_satisfy_invariants() {
        for seed in 0..10 {
            let spec = PartitionSpec {
                n_seeds: 30,
                merge_probability: 0.0,
                ..Default::default()
            };
            let p = random_partition(&spec, seed).unwrap();
            check_invariants(&p);
            let h = p.hull().len();
            assert!(p.faces.len() <= 2 * 30 - h - 2);
            assert!(p.faces.iter().all(|f| f.len() == 3));

            let merged = random_partition(
                &PartitionSpec {
                    merge_probability: 0.7,
                    ..spec
                },
                seed,
            )
            .unwrap();
            check_invariants(&merged);
            let hull = merged.hull();
            for v in internal_vertices(&merged) {
                assert!(v.incident_faces.len() >= 3);
                let strictly = (0..hull.len()).all(|k| {
                    let (a, b) = hull.edge(k);
                    orient(a, b, v.location) > 0.0
                });
                assert!(strictly);
            }
        }
    }

    #[test]
    fn deterministic() {
        let spec = PartitionSpec::default();
        let a = random_partition(&spec, 42).unwrap();
        let b = random_partition(&spec, 42).unwrap();
        assert_eq!(a.face_vertices, b.face_vertices);
        assert_eq!(a.seeds, b.seeds);
    }

    #[test]
    fn incident_faces_are_angularly_ordered() {
        let p = random_partition(&PartitionSpec::default(), 3).unwrap();
        for v in internal_vertices(&p) {
            let angles: Vec<f64> = v
                .incident_faces
                .iter()
                .map(|&f| {
                    let c = p.faces[f].centroid() - v.location;
                    c.y.atan2(c.x)
                })
                .collect();
            assert!(angles.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
