//! On-disk puzzle bundles: one directory holding `manifest.toml` plus one
//! RGBA PNG per piece (alpha is the piece mask).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GroundTruth, NoiseSpec, Piece, Puzzle, PuzzleMeta};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Polygon, RigidTransform};
use crate::mating_graph::{EdgeRef, Mating};
use crate::raster::MaskedRaster;

pub const MANIFEST_FILE: &str = "manifest.toml";
const FORMAT: &str = "cpuzzle-bundle/1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    name: String,
    diameter: f64,
    noise: NoiseSpec,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
    pieces: Vec<PieceEntry>,
    ground_truth: TruthEntry,
}

#[derive(Serialize, Deserialize)]
struct PieceEntry {
    id: usize,
    source_face: usize,
    n_vertices: usize,
    image: String,
    origin: [f64; 2],
    vertices: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct TruthEntry {
    /// `[piece_a, edge_a, piece_b, edge_b]`
    matings: Vec<[usize; 4]>,
    /// `[piece, edge]`
    hull_edges: Vec<[usize; 2]>,
    transforms: Vec<TransformEntry>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct TransformEntry {
    pub piece: usize,
    /// Rotation angle in radians, for reading; `rotation` is authoritative.
    pub angle: f64,
    /// `[cos, sin]` of the rotation, kept so files round-trip exactly.
    pub rotation: [f64; 2],
    pub translation: [f64; 2],
}

impl TransformEntry {
    pub(crate) fn from_transform(piece: usize, t: &RigidTransform) -> Self {
        Self {
            piece,
            angle: t.angle(),
            rotation: [t.matrix()[0][0], t.matrix()[1][0]],
            translation: [t.translation.x, t.translation.y],
        }
    }

    pub(crate) fn to_transform(&self) -> Result<RigidTransform> {
        let [c, s] = self.rotation;
        RigidTransform::from_matrix([[c, -s], [s, c]], Point2::new(self.translation[0], self.translation[1]))
    }
}

fn piece_file(id: usize) -> String {
    format!("piece_{id:03}.png")
}

/// Writes `puzzle` into directory `dir`, creating it if needed.
pub fn write_bundle(dir: &Path, puzzle: &Puzzle) -> Result<()> {
    puzzle.validate()?;
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(puzzle.pieces.len());
    for p in &puzzle.pieces {
        let file = piece_file(p.id);
        p.raster.image.save_with_format(dir.join(&file), image::ImageFormat::Png)?;
        entries.push(PieceEntry {
            id: p.id,
            source_face: p.source_face,
            n_vertices: p.polygon.len(),
            image: file,
            origin: [p.raster.origin.x, p.raster.origin.y],
            vertices: p.polygon.vertices().iter().map(|v| [v.x, v.y]).collect(),
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        name: puzzle.meta.name.clone(),
        diameter: puzzle.meta.diameter,
        noise: puzzle.meta.noise,
        provenance: puzzle.meta.provenance.clone(),
        pieces: entries,
        ground_truth: TruthEntry {
            matings: puzzle
                .ground_truth
                .matings
                .iter()
                .map(|m| [m.a.piece, m.a.edge, m.b.piece, m.b.edge])
                .collect(),
            hull_edges: puzzle.meta.hull_edges.iter().map(|e| [e.piece, e.edge]).collect(),
            transforms: puzzle
                .ground_truth
                .transforms
                .iter()
                .enumerate()
                .map(|(i, t)| TransformEntry::from_transform(i, t))
                .collect(),
        },
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Manifest {
        path: dir.join(MANIFEST_FILE),
        message: e.to_string(),
    })?;
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<Puzzle> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path)?;
    let malformed = |message: String| Error::Manifest {
        path: path.clone(),
        message,
    };
    let m: Manifest = toml::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    if m.format != FORMAT {
        return Err(malformed(format!("unsupported format {:?}", m.format)));
    }
    if m.pieces.len() < 2 {
        return Err(Error::TooFewPieces(m.pieces.len()));
    }

    let mut pieces = Vec::with_capacity(m.pieces.len());
    for (i, e) in m.pieces.iter().enumerate() {
        if e.id != i {
            return Err(malformed(format!("piece at position {i} has id {}", e.id)));
        }
        if e.n_vertices != e.vertices.len() {
            return Err(Error::VertexCountMismatch {
                piece: e.id,
                declared: e.n_vertices,
                actual: e.vertices.len(),
            });
        }
        let polygon = Polygon::new(e.vertices.iter().map(|v| Point2::new(v[0], v[1])).collect())
            .map_err(|err| malformed(format!("piece {}: {err}", e.id)))?;
        if polygon.vertices().first().map(|v| [v.x, v.y]) != e.vertices.first().copied() {
            return Err(malformed(format!("piece {} is not counter-clockwise", e.id)));
        }
        let img_path: PathBuf = dir.join(&e.image);
        if !img_path.is_file() {
            return Err(Error::MissingFile(img_path));
        }
        let image = image::open(&img_path)?.to_rgba8();
        pieces.push(Piece {
            id: e.id,
            polygon,
            raster: MaskedRaster {
                image,
                origin: Point2::new(e.origin[0], e.origin[1]),
            },
            source_face: e.source_face,
        });
    }

    let edge = |piece: usize, edge: usize| -> Result<EdgeRef> {
        match pieces.get(piece) {
            Some(p) if edge < p.n_edges() => Ok(EdgeRef::new(piece, edge)),
            _ => Err(Error::DanglingReference(format!("edge ({piece}, {edge})"))),
        }
    };
    let mut matings = BTreeSet::new();
    for m4 in &m.ground_truth.matings {
        let (a, b) = (edge(m4[0], m4[1])?, edge(m4[2], m4[3])?);
        if a.piece == b.piece {
            return Err(malformed(format!("mating {a} - {b} joins a piece to itself")));
        }
        matings.insert(Mating::new(a, b));
    }
    let hull_edges = m
        .ground_truth
        .hull_edges
        .iter()
        .map(|h| edge(h[0], h[1]))
        .collect::<Result<BTreeSet<_>>>()?;
    let mut transforms = vec![None; pieces.len()];
    for t in &m.ground_truth.transforms {
        let slot = transforms
            .get_mut(t.piece)
            .ok_or_else(|| Error::DanglingReference(format!("transform for piece {}", t.piece)))?;
        *slot = Some(t.to_transform()?);
    }
    let transforms = transforms
        .into_iter()
        .enumerate()
        .map(|(i, t)| t.ok_or_else(|| malformed(format!("no ground-truth transform for piece {i}"))))
        .collect::<Result<Vec<_>>>()?;

    let puzzle = Puzzle {
        pieces,
        ground_truth: GroundTruth { transforms, matings },
        meta: PuzzleMeta {
            name: m.name,
            diameter: m.diameter,
            noise: m.noise,
            hull_edges,
            provenance: m.provenance,
        },
    };
    if !puzzle.ground_truth.is_monogamous() {
        return Err(malformed("ground-truth matings are not monogamous".into()));
    }
    Ok(puzzle)
}
