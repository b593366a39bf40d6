//! Scoring a solution against ground truth: precision, recall and F1 on
//! mating links, and the area-weighted pose quality `Q_pos`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Puzzle, TransformEntry};
use crate::error::{Error, Result};
use crate::geometry::{intersection_area, Polygon, RigidTransform, GEOM_EPS};
use crate::mating_graph::{EdgeRef, Mating};

pub const SOLUTION_FILE: &str = "solution.toml";
const SOLUTION_FORMAT: &str = "cpuzzle-solution/1";

/// Per-piece poses plus the final mating links.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub transforms: Vec<RigidTransform>,
    pub matings: BTreeSet<Mating>,
    /// Piece held fixed while solving; alignment reference for `Q_pos`.
    pub anchor: usize,
}

impl Solution {
    /// The ground truth of `puzzle` as a solution.
    pub fn ground_truth(puzzle: &Puzzle) -> Self {
        Self {
            transforms: puzzle.ground_truth.transforms.clone(),
            matings: truth_matings(puzzle),
            anchor: 0,
        }
    }

    pub fn is_monogamous(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.matings.iter().all(|m| seen.insert(m.a) && seen.insert(m.b))
    }

    /// Checks the solution against the pieces of `puzzle`.
    pub fn validate(&self, puzzle: &Puzzle) -> Result<()> {
        let n = puzzle.pieces.len();
        if self.transforms.len() != n {
            return Err(Error::DanglingReference(format!(
                "{} solution transforms for {n} pieces",
                self.transforms.len()
            )));
        }
        if self.anchor >= n {
            return Err(Error::DanglingReference(format!("anchor piece {}", self.anchor)));
        }
        for m in &self.matings {
            for e in [m.a, m.b] {
                if puzzle.pieces.get(e.piece).is_none_or(|p| e.edge >= p.n_edges()) {
                    return Err(Error::DanglingReference(format!("edge {e}")));
                }
            }
        }
        if !self.is_monogamous() {
            return Err(Error::InvalidParameter("solution matings are not monogamous".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        let file = SolutionFile {
            format: SOLUTION_FORMAT.into(),
            anchor: self.anchor,
            matings: self.matings.iter().map(|m| [m.a.piece, m.a.edge, m.b.piece, m.b.edge]).collect(),
            transforms: self
                .transforms
                .iter()
                .enumerate()
                .map(|(i, t)| TransformEntry::from_transform(i, t))
                .collect(),
        };
        toml::to_string(&file).map_err(|e| Error::InvalidParameter(e.to_string()))
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let malformed = |message: String| Error::Manifest {
            path: path.to_path_buf(),
            message,
        };
        let f: SolutionFile = toml::from_str(text).map_err(|e| malformed(e.to_string()))?;
        if f.format != SOLUTION_FORMAT {
            return Err(malformed(format!("unsupported format {:?}", f.format)));
        }
        let mut transforms = vec![None; f.transforms.len()];
        for e in &f.transforms {
            let slot = transforms
                .get_mut(e.piece)
                .ok_or_else(|| malformed(format!("transform for unknown piece {}", e.piece)))?;
            *slot = Some(e.to_transform()?);
        }
        let transforms = transforms
            .into_iter()
            .enumerate()
            .map(|(i, t)| t.ok_or_else(|| malformed(format!("no transform for piece {i}"))))
            .collect::<Result<Vec<_>>>()?;
        let matings = f
            .matings
            .iter()
            .map(|m| Mating::new(EdgeRef::new(m[0], m[1]), EdgeRef::new(m[2], m[3])))
            .collect();
        Ok(Self {
            transforms,
            matings,
            anchor: f.anchor,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&fs::read_to_string(path)?, path)
    }
}

#[derive(Serialize, Deserialize)]
struct SolutionFile {
    format: String,
    anchor: usize,
    /// `[piece_a, edge_a, piece_b, edge_b]`
    matings: Vec<[usize; 4]>,
    transforms: Vec<TransformEntry>,
}

/// Ground-truth mating links, hull edges excluded.
pub fn truth_matings(puzzle: &Puzzle) -> BTreeSet<Mating> {
    let hull = &puzzle.meta.hull_edges;
    puzzle
        .ground_truth
        .matings
        .iter()
        .filter(|m| !hull.contains(&m.a) && !hull.contains(&m.b))
        .copied()
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Set-based precision, recall and F1. An empty set scores 1 against an
/// empty set and 0 otherwise.
pub fn prf(predicted: &BTreeSet<Mating>, truth: &BTreeSet<Mating>) -> Prf {
    let hits = predicted.intersection(truth).count() as f64;
    let ratio = |n: usize, other: usize| {
        if n == 0 {
            if other == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            hits / n as f64
        }
    };
    let precision = ratio(predicted.len(), truth.len());
    let recall = ratio(truth.len(), predicted.len());
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

/// How the solution is brought into the ground-truth frame before `Q_pos`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMode {
    /// Through the solution's anchor piece.
    #[default]
    Anchor,
    /// Through whichever piece gives the largest `Q_pos`.
    Best,
}

impl fmt::Display for AlignMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlignMode::Anchor => "anchor",
            AlignMode::Best => "best",
        })
    }
}

impl FromStr for AlignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anchor" => Ok(AlignMode::Anchor),
            "best" => Ok(AlignMode::Best),
            _ => Err(Error::InvalidParameter(format!("unknown alignment {s:?}, expected anchor or best"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseQuality {
    pub q_pos: f64,
    /// `|A(p̄_i) ∩ A(aligned p_i)| / |A(p_i)|` per piece.
    pub ratios: Vec<f64>,
    /// Piece whose solved pose was mapped onto its true pose.
    pub aligned_on: usize,
}

/// `Q_pos` with the solution aligned through piece `via`.
pub fn q_pos_via(
    solution: &[RigidTransform],
    truth: &[RigidTransform],
    polygons: &[&Polygon],
    via: usize,
) -> PoseQuality {
    let align = truth[via].compose(&solution[via].inverse());
    let total: f64 = polygons.iter().map(|p| p.area()).sum();
    let ratios: Vec<f64> = polygons
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let placed = p.transformed(&align.compose(&solution[i]));
            let target = p.transformed(&truth[i]);
            let coincident = placed
                .vertices()
                .iter()
                .zip(target.vertices())
                .all(|(a, b)| a.dist(*b) <= GEOM_EPS);
            if coincident {
                1.0
            } else {
                (intersection_area(&target, &placed) / p.area()).min(1.0)
            }
        })
        .collect();
    let q_pos = polygons
        .iter()
        .zip(&ratios)
        .map(|(p, r)| p.area() * r)
        .sum::<f64>()
        .min(total)
        / total;
    PoseQuality {
        q_pos,
        ratios,
        aligned_on: via,
    }
}

pub fn q_pos(solution: &Solution, puzzle: &Puzzle, mode: AlignMode) -> PoseQuality {
    let polys: Vec<&Polygon> = puzzle.pieces.iter().map(|p| &p.polygon).collect();
    let truth = &puzzle.ground_truth.transforms;
    match mode {
        AlignMode::Anchor => q_pos_via(&solution.transforms, truth, &polys, solution.anchor),
        AlignMode::Best => (0..polys.len())
            .map(|i| q_pos_via(&solution.transforms, truth, &polys, i))
            .reduce(|best, q| if q.q_pos > best.q_pos { q } else { best })
            .expect("puzzle has pieces"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub puzzle: String,
    pub xi: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub q_pos: f64,
    pub align: AlignMode,
    pub aligned_on: usize,
    pub n_predicted: usize,
    pub n_truth: usize,
    pub n_correct: usize,
    pub piece_ratios: Vec<f64>,
}

impl EvalReport {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

pub fn evaluate(puzzle: &Puzzle, solution: &Solution, mode: AlignMode) -> Result<EvalReport> {
    solution.validate(puzzle)?;
    let truth = truth_matings(puzzle);
    let s = prf(&solution.matings, &truth);
    let q = q_pos(solution, puzzle, mode);
    Ok(EvalReport {
        puzzle: puzzle.meta.name.clone(),
        xi: puzzle.meta.noise.xi,
        precision: s.precision,
        recall: s.recall,
        f1: s.f1,
        q_pos: q.q_pos,
        align: mode,
        aligned_on: q.aligned_on,
        n_predicted: solution.matings.len(),
        n_truth: truth.len(),
        n_correct: solution.matings.intersection(&truth).count(),
        piece_ratios: q.ratios,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationRow {
    pub xi: f64,
    pub n_puzzles: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub q_pos: f64,
}

/// Published reference results on the 75-puzzle corpus, per noise level.
pub const REFERENCE_ROWS: [DegradationRow; 3] = [
    DegradationRow {
        xi: 0.0,
        n_puzzles: 25,
        precision: 1.0,
        recall: 0.7486,
        f1: 0.8495,
        q_pos: 0.377,
    },
    DegradationRow {
        xi: 0.001,
        n_puzzles: 25,
        precision: 0.8638,
        recall: 0.7544,
        f1: 0.7992,
        q_pos: 0.3813,
    },
    DegradationRow {
        xi: 0.0025,
        n_puzzles: 25,
        precision: 0.7811,
        recall: 0.6273,
        f1: 0.6923,
        q_pos: 0.306,
    },
];

/// Reference curve relating `Q_pos` to F1: `e^{kx} / (e^k - 1)`.
pub fn reference_q_pos_curve(f1: f64) -> f64 {
    const K: f64 = 5.9987;
    (K * f1).exp() / (K.exp() - 1.0)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DegradationTable {
    pub rows: Vec<DegradationRow>,
}

/// Per-noise-level means of `reports`, ordered by `xi`.
pub fn degradation_report(reports: &[EvalReport]) -> DegradationTable {
    let mut levels: Vec<f64> = reports.iter().map(|r| r.xi).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let rows = levels
        .into_iter()
        .map(|xi| {
            let group: Vec<&EvalReport> = reports.iter().filter(|r| r.xi == xi).collect();
            let n = group.len() as f64;
            let mean = |f: fn(&EvalReport) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            DegradationRow {
                xi,
                n_puzzles: group.len(),
                precision: mean(|r| r.precision),
                recall: mean(|r| r.recall),
                f1: mean(|r| r.f1),
                q_pos: mean(|r| r.q_pos),
            }
        })
        .collect();
    DegradationTable { rows }
}

impl DegradationTable {
    /// Number of consecutive noise levels at which mean F1 rises.
    pub fn f1_inversions(&self) -> usize {
        self.rows.windows(2).filter(|w| w[1].f1 > w[0].f1).count()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

fn write_row(f: &mut fmt::Formatter<'_>, label: &str, r: &DegradationRow) -> fmt::Result {
    writeln!(
        f,
        "{label:<10} {:>7.2}% {:>4} {:>9.2}% {:>9.2}% {:>9.2}% {:>9.2}%",
        r.xi * 100.0,
        r.n_puzzles,
        r.precision * 100.0,
        r.recall * 100.0,
        r.f1 * 100.0,
        r.q_pos * 100.0
    )
}

impl fmt::Display for DegradationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>8} {:>4} {:>10} {:>10} {:>10} {:>10}",
            "", "xi", "n", "precision", "recall", "F1", "Q_pos"
        )?;
        for r in &self.rows {
            write_row(f, "measured", r)?;
        }
        for r in &REFERENCE_ROWS {
            write_row(f, "reference", r)?;
        }
        Ok(())
    }
}
