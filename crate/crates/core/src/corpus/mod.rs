//! Puzzle synthesis: crop piece imagery from a partition, erode the pieces,
//! shuffle them into random local frames, and read/write on-disk bundles.

mod bundle;
mod synth;

use std::collections::{BTreeMap, BTreeSet};

use image::{Rgba, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{diameter, Point2, Polygon, RigidTransform};
use crate::mating_graph::{EdgeRef, Mating};
use crate::partition::ConvexPartition;
use crate::raster::{to_rgba, MaskedRaster};

pub use bundle::{read_bundle, write_bundle, MANIFEST_FILE};
pub(crate) use bundle::TransformEntry;
pub use synth::{synthesize, synthetic_image, SynthSpec};

/// One puzzle piece, expressed in its own local frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub id: usize,
    pub polygon: Polygon,
    pub raster: MaskedRaster,
    /// Face of the generating partition this piece was cut from.
    pub source_face: usize,
}

impl Piece {
    pub fn n_edges(&self) -> usize {
        self.polygon.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    /// Maps each piece's local frame onto the assembled puzzle.
    pub transforms: Vec<RigidTransform>,
    pub matings: BTreeSet<Mating>,
}

impl GroundTruth {
    /// Checks that no `(piece, edge)` appears in more than one mating.
    pub fn is_monogamous(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.matings.iter().all(|m| seen.insert(m.a) && seen.insert(m.b))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Noise magnitude as a fraction of the puzzle diameter.
    pub xi: f64,
    /// Maximal vertex displacement, `xi * diameter`.
    pub epsilon: f64,
    pub rng_seed: u64,
}

impl NoiseSpec {
    pub fn new(xi: f64, diameter: f64, rng_seed: u64) -> Self {
        Self {
            xi,
            epsilon: xi * diameter,
            rng_seed,
        }
    }

    pub fn none() -> Self {
        Self {
            xi: 0.0,
            epsilon: 0.0,
            rng_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PuzzleMeta {
    pub name: String,
    /// Diameter `D` of the assembled, noiseless puzzle.
    pub diameter: f64,
    pub noise: NoiseSpec,
    /// Edges on the convex hull: they have no mate.
    pub hull_edges: BTreeSet<EdgeRef>,
    pub provenance: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Puzzle {
    pub pieces: Vec<Piece>,
    pub ground_truth: GroundTruth,
    pub meta: PuzzleMeta,
}

impl Puzzle {
    pub fn total_area(&self) -> f64 {
        self.pieces.iter().map(|p| p.polygon.area()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.pieces.len() < 2 {
            return Err(Error::TooFewPieces(self.pieces.len()));
        }
        for (i, p) in self.pieces.iter().enumerate() {
            if p.id != i {
                return Err(Error::DanglingReference(format!("piece id {} at position {i}", p.id)));
            }
        }
        let check = |e: &EdgeRef| -> Result<()> {
            match self.pieces.get(e.piece) {
                Some(p) if e.edge < p.n_edges() => Ok(()),
                _ => Err(Error::DanglingReference(format!("edge {e}"))),
            }
        };
        for m in &self.ground_truth.matings {
            check(&m.a)?;
            check(&m.b)?;
        }
        for e in &self.meta.hull_edges {
            check(e)?;
        }
        if self.ground_truth.transforms.len() != self.pieces.len() {
            return Err(Error::DanglingReference(format!(
                "{} ground-truth transforms for {} pieces",
                self.ground_truth.transforms.len(),
                self.pieces.len()
            )));
        }
        Ok(())
    }
}

/// Cuts one piece per face, cropping imagery under the face mask. Pieces are
/// left in the world frame, so every ground-truth transform is the identity.
pub fn make_puzzle(partition: &ConvexPartition, image: &RgbImage) -> Result<Puzzle> {
    let hull = partition.hull();
    let (lo, hi) = hull.bbox();
    if lo.x < 0.0 || lo.y < 0.0 || hi.x > image.width() as f64 || hi.y > image.height() as f64 {
        return Err(Error::InvalidParameter(format!(
            "image {}x{} does not cover the partition bounding box {lo:?}..{hi:?}",
            image.width(),
            image.height()
        )));
    }
    let mut pieces = Vec::with_capacity(partition.faces.len());
    for (fi, face) in partition.faces.iter().enumerate() {
        let mut raster = MaskedRaster::covering(face, 0);
        let (ox, oy) = (raster.origin.x as i64, raster.origin.y as i64);
        for j in 0..raster.height() {
            for i in 0..raster.width() {
                if !face.contains(raster.pixel_center(i, j), 0.0) {
                    continue;
                }
                let (sx, sy) = (ox + i as i64, oy + j as i64);
                if sx < 0 || sy < 0 || sx >= image.width() as i64 || sy >= image.height() as i64 {
                    continue;
                }
                let c = image.get_pixel(sx as u32, sy as u32);
                raster.image.put_pixel(i, j, Rgba([c[0], c[1], c[2], 255]));
            }
        }
        pieces.push(Piece {
            id: fi,
            polygon: face.clone(),
            raster,
            source_face: fi,
        });
    }
    let matings = partition
        .adjacency
        .iter()
        .map(|s| Mating::new(EdgeRef::new(s.face_a, s.edge_a), EdgeRef::new(s.face_b, s.edge_b)))
        .collect();
    let hull_edges = partition
        .hull_edges
        .iter()
        .map(|&(f, e)| EdgeRef::new(f, e))
        .collect();
    Ok(Puzzle {
        ground_truth: GroundTruth {
            transforms: vec![RigidTransform::IDENTITY; pieces.len()],
            matings,
        },
        meta: PuzzleMeta {
            name: String::from("puzzle"),
            diameter: diameter(&partition.seeds)?,
            noise: NoiseSpec::none(),
            hull_edges,
            provenance: BTreeMap::new(),
        },
        pieces,
    })
}

/// Pushes every vertex inward along its interior-angle bisector by an
/// independent `U(0, ε)` distance and re-clips the imagery.
pub fn erode(pieces: &[Piece], spec: &NoiseSpec) -> Result<Vec<Piece>> {
    if spec.epsilon < 0.0 || !spec.epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!("epsilon {}", spec.epsilon)));
    }
    if spec.epsilon == 0.0 {
        return Ok(pieces.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut out = Vec::with_capacity(pieces.len());
    for piece in pieces {
        let poly = &piece.polygon;
        let n = poly.len();
        let moved: Vec<Point2> = (0..n)
            .map(|k| {
                let v = poly.vertex(k);
                let to_prev = (poly.vertex(k + n - 1) - v).normalized();
                let to_next = (poly.vertex(k + 1) - v).normalized();
                let bisector = (to_prev + to_next).normalized();
                let d = rng.gen_range(0.0..spec.epsilon);
                v + bisector * d
            })
            .collect();
        let fail = |reason: String| Error::ErodedPiece {
            piece: piece.id,
            reason,
        };
        let eroded = Polygon::new(moved).map_err(|e| fail(e.to_string()))?;
        if eroded.area() < 0.1 * poly.area() {
            return Err(fail(format!(
                "area {:.3} is below 10% of the original {:.3}",
                eroded.area(),
                poly.area()
            )));
        }
        if poly.is_convex() && !eroded.is_convex() {
            return Err(fail("lost convexity".into()));
        }
        let mut raster = piece.raster.clone();
        raster.clip_to(&eroded);
        out.push(Piece {
            polygon: eroded,
            raster,
            ..piece.clone()
        });
    }
    Ok(out)
}

/// Randomly permutes the pieces and re-expresses each one in a local frame
/// with a random rotation and its centroid at the origin. Ground truth is
/// updated so the recomposition is unchanged.
pub fn shuffle(puzzle: &Puzzle, rng_seed: u64) -> Puzzle {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n = puzzle.pieces.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut new_id = vec![0usize; n];
    for (k, &old) in order.iter().enumerate() {
        new_id[old] = k;
    }

    let mut pieces = Vec::with_capacity(n);
    let mut transforms = Vec::with_capacity(n);
    for (k, &old) in order.iter().enumerate() {
        let piece = &puzzle.pieces[old];
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let c = piece.polygon.centroid();
        let rot = RigidTransform::new(theta, Point2::ORIGIN);
        let to_local = RigidTransform::new(theta, -rot.rotate(c));
        let polygon = piece.polygon.transformed(&to_local);
        let raster = resample(&piece.raster, &polygon, &to_local.inverse());
        transforms.push(puzzle.ground_truth.transforms[old].compose(&to_local.inverse()));
        pieces.push(Piece {
            id: k,
            polygon,
            raster,
            source_face: piece.source_face,
        });
    }
    let remap = |e: &EdgeRef| EdgeRef::new(new_id[e.piece], e.edge);
    Puzzle {
        pieces,
        ground_truth: GroundTruth {
            transforms,
            matings: puzzle
                .ground_truth
                .matings
                .iter()
                .map(|m| Mating::new(remap(&m.a), remap(&m.b)))
                .collect(),
        },
        meta: PuzzleMeta {
            hull_edges: puzzle.meta.hull_edges.iter().map(remap).collect(),
            ..puzzle.meta.clone()
        },
    }
}

/// Renders `src` into a new raster covering `poly`, where `to_src` maps the
/// new frame back into the source raster's frame.
fn resample(src: &MaskedRaster, poly: &Polygon, to_src: &RigidTransform) -> MaskedRaster {
    let mut out = MaskedRaster::covering(poly, 0);
    for j in 0..out.height() {
        for i in 0..out.width() {
            let p = out.pixel_center(i, j);
            if !poly.contains(p, 0.0) {
                continue;
            }
            let q = to_src.apply(p);
            if let Some(c) = src.sample(q).or_else(|| src.nearest(q, 4)) {
                out.image.put_pixel(i, j, to_rgba(c));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GEOM_EPS;
    use crate::partition::{generate_partition, random_partition, PartitionSpec};

    fn gradient(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| image::Rgb([(x % 256) as u8, (y % 256) as u8, ((x + y) / 4 % 256) as u8]))
    }

    fn two_face_square() -> ConvexPartition {
        let seeds = vec![
            Point2::new(0.0, 0.0),
            Point2::new(64.0, 0.0),
            Point2::new(64.0, 64.0),
            Point2::new(0.0, 64.0),
        ];
        generate_partition(&seeds, 0.0, 0).unwrap()
    }

    #[test]
    fn two_face_square_puzzle() {
        let img = gradient(64, 64);
        let puz = make_puzzle(&two_face_square(), &img).unwrap();
        assert_eq!(puz.pieces.len(), 2);
        assert_eq!(puz.ground_truth.matings.len(), 1);
        let area: f64 = puz
            .pieces
            .iter()
            .map(|p| p.polygon.transformed(&puz.ground_truth.transforms[p.id]).area())
            .sum();
        assert!((area - 64.0 * 64.0).abs() < 1e-9);
        let sh = shuffle(&puz, 9);
        let area: f64 = sh
            .pieces
            .iter()
            .map(|p| p.polygon.transformed(&sh.ground_truth.transforms[p.id]).area())
            .sum();
        assert!((area - 64.0 * 64.0).abs() < 1e-6);
    }

    #[test]
    fn mask_counts_cover_hull() {
        let spec = PartitionSpec {
            n_seeds: 25,
            width: 200.0,
            height: 160.0,
            ..Default::default()
        };
        let part = random_partition(&spec, 4).unwrap();
        let img = gradient(200, 160);
        let puz = make_puzzle(&part, &img).unwrap();
        let hull = part.hull();
        let mut hull_px = 0usize;
        for y in 0..160 {
            for x in 0..200 {
                if hull.contains(Point2::new(x as f64 + 0.5, y as f64 + 0.5), 0.0) {
                    hull_px += 1;
                }
            }
        }
        let total: usize = puz.pieces.iter().map(|p| p.raster.mask_count()).sum();
        let perimeter: f64 = (0..hull.len()).map(|i| hull.edge_length(i)).sum();
        // shared boundary pixels can be counted twice or not at all
        let slack = puz.pieces.iter().map(|p| (0..p.n_edges()).map(|i| p.polygon.edge_length(i)).sum::<f64>()).sum::<f64>();
        assert!((total as f64 - hull_px as f64).abs() <= slack + perimeter);
        // interior pixels copied verbatim
        for p in &puz.pieces {
            for j in 0..p.raster.height() {
                for i in 0..p.raster.width() {
                    if p.raster.is_set(i as i64, j as i64) {
                        let sx = (p.raster.origin.x as i64 + i as i64) as u32;
                        let sy = (p.raster.origin.y as i64 + j as i64) as u32;
                        let s = img.get_pixel(sx, sy);
                        let d = p.raster.image.get_pixel(i, j);
                        assert_eq!(&s.0[..], &d.0[..3]);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let puz = make_puzzle(&two_face_square(), &gradient(64, 64)).unwrap();
        let e = erode(&puz.pieces, &NoiseSpec::new(0.0, 90.0, 3)).unwrap();
        assert_eq!(e, puz.pieces);
    }

    #[test]
    fn eroded_vertices_inside_and_within_epsilon() {
        let spec = PartitionSpec {
            n_seeds: 20,
            width: 300.0,
            height: 300.0,
            merge_probability: 0.5,
            ..Default::default()
        };
        let mut checked = 0;
        for seed in 0..50u64 {
            let part = random_partition(&spec, seed).unwrap();
            let puz = make_puzzle(&part, &gradient(300, 300)).unwrap();
            let noise = NoiseSpec::new(0.0025, puz.meta.diameter, seed);
            let Ok(eroded) = erode(&puz.pieces, &noise) else { continue };
            for (a, b) in puz.pieces.iter().zip(&eroded) {
                assert!(b.polygon.is_convex());
                for (u, v) in a.polygon.vertices().iter().zip(b.polygon.vertices()) {
                    assert!(u.dist(*v) <= noise.epsilon + GEOM_EPS);
                    assert!(a.polygon.contains(*v, 1e-9));
                    checked += 1;
                }
            }
            for m in &puz.ground_truth.matings {
                let la = eroded[m.a.piece].polygon.edge_length(m.a.edge);
                let lb = eroded[m.b.piece].polygon.edge_length(m.b.edge);
                assert!((la - lb).abs() <= 4.0 * noise.epsilon);
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn heavy_erosion_reports_piece() {
        let puz = make_puzzle(&two_face_square(), &gradient(64, 64)).unwrap();
        let err = erode(&puz.pieces, &NoiseSpec::new(1.0, 90.0, 1));
        assert!(matches!(err, Err(Error::ErodedPiece { .. })));
    }

    #[test]
    fn shuffle_round_trips_through_ground_truth() {
        let part = random_partition(&PartitionSpec::default(), 8).unwrap();
        let puz = make_puzzle(&part, &gradient(512, 512)).unwrap();
        let sh = shuffle(&puz, 77);
        let mut ids: Vec<usize> = sh.pieces.iter().map(|p| p.source_face).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..puz.pieces.len()).collect::<Vec<_>>());
        for p in &sh.pieces {
            let orig = &puz.pieces[p.source_face];
            let placed = p.polygon.transformed(&sh.ground_truth.transforms[p.id]);
            for (u, v) in placed.vertices().iter().zip(orig.polygon.vertices()) {
                assert!(u.dist(*v) < 1e-6);
            }
            for k in 0..p.n_edges() {
                assert!((p.polygon.edge_length(k) - orig.polygon.edge_length(k)).abs() < 1e-9);
            }
            assert!(p.polygon.centroid().norm() < 1e-9);
        }
        assert_eq!(sh.ground_truth.matings.len(), puz.ground_truth.matings.len());
        assert!(sh.ground_truth.is_monogamous());
        sh.validate().unwrap();
    }
}
