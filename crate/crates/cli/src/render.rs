//! Rasterizes pieces at given poses onto one canvas.

use cpuzzle_core::corpus::Puzzle;
use cpuzzle_core::evaluation::Solution;
use cpuzzle_core::geometry::{Point2, Polygon, RigidTransform};
use image::{Rgb, RgbImage};

use crate::config::Layout;
use crate::error::{CliError, Result};

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const OUTLINE: Rgb<u8> = Rgb([40, 40, 40]);
const MARGIN: f64 = 2.0;
/// Gap between grid cells of the shuffled layout, in pixels.
const SPREAD_GAP: f64 = 8.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Rendering {
    pub image: RgbImage,
    /// World coordinates of the top-left corner of pixel (0, 0).
    pub origin: Point2,
    pub poses: Vec<RigidTransform>,
}

/// Poses of every piece for `layout`.
pub fn layout_poses(puzzle: &Puzzle, layout: Layout, solution: Option<&Solution>) -> Result<Vec<RigidTransform>> {
    let truth = &puzzle.ground_truth.transforms;
    match layout {
        Layout::Gt => Ok(truth.clone()),
        Layout::Solution => {
            let s = solution.ok_or_else(|| CliError::Usage("the solution layout needs a solution".into()))?;
            s.validate(puzzle)?;
            let align = truth[s.anchor].compose(&s.transforms[s.anchor].inverse());
            Ok(s.transforms.iter().map(|t| align.compose(t)).collect())
        }
        Layout::Shuffled => Ok(grid_layout(puzzle.pieces.iter().map(|p| &p.polygon))),
    }
}

/// Places polygons, unrotated, on a square grid of equal cells.
fn grid_layout<'a>(polys: impl ExactSizeIterator<Item = &'a Polygon> + Clone) -> Vec<RigidTransform> {
    let n = polys.len();
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    let cell = polys
        .clone()
        .map(|p| {
            let (lo, hi) = p.bbox();
            (hi.x - lo.x).max(hi.y - lo.y)
        })
        .fold(0.0, f64::max)
        + SPREAD_GAP;
    polys
        .enumerate()
        .map(|(i, p)| {
            let (lo, _) = p.bbox();
            let corner = Point2::new((i % cols) as f64 * cell, (i / cols) as f64 * cell);
            RigidTransform::translation(corner - lo)
        })
        .collect()
}

/// Paints each piece's imagery at its pose over a white canvas fitted to
/// the placed pieces, then optionally strokes the piece outlines.
pub fn render(puzzle: &Puzzle, poses: &[RigidTransform], outlines: bool) -> Rendering {
    let placed: Vec<Polygon> = puzzle
        .pieces
        .iter()
        .zip(poses)
        .map(|(p, t)| p.polygon.transformed(t))
        .collect();
    let (mut lo, mut hi) = (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for poly in &placed {
        let (a, b) = poly.bbox();
        lo = Point2::new(lo.x.min(a.x), lo.y.min(a.y));
        hi = Point2::new(hi.x.max(b.x), hi.y.max(b.y));
    }
    let origin = Point2::new((lo.x - MARGIN).floor(), (lo.y - MARGIN).floor());
    let width = ((hi.x + MARGIN).ceil() - origin.x).max(1.0) as u32;
    let height = ((hi.y + MARGIN).ceil() - origin.y).max(1.0) as u32;
    let mut image = RgbImage::from_pixel(width, height, BACKGROUND);

    for ((piece, poly), pose) in puzzle.pieces.iter().zip(&placed).zip(poses) {
        let inv = pose.inverse();
        let (a, b) = poly.bbox();
        let x0 = ((a.x - origin.x).floor().max(0.0)) as u32;
        let y0 = ((a.y - origin.y).floor().max(0.0)) as u32;
        let x1 = ((b.x - origin.x).ceil() as u32).min(width);
        let y1 = ((b.y - origin.y).ceil() as u32).min(height);
        for y in y0..y1 {
            for x in x0..x1 {
                let world = origin + Point2::new(x as f64 + 0.5, y as f64 + 0.5);
                let local = inv.apply(world);
                if !piece.polygon.contains(local, 0.0) {
                    continue;
                }
                if let Some(c) = piece.raster.sample(local) {
                    image.put_pixel(x, y, Rgb(c.map(|v| v.round().clamp(0.0, 255.0) as u8)));
                }
            }
        }
    }

    if outlines {
        for poly in &placed {
            for k in 0..poly.len() {
                let (a, b) = poly.edge(k);
                let steps = (a.dist(b) * 4.0).ceil().max(1.0) as usize;
                for s in 0..=steps {
                    let p = a.lerp(b, s as f64 / steps as f64) - origin;
                    let (x, y) = (p.x.floor(), p.y.floor());
                    if x >= 0.0 && y >= 0.0 && (x as u32) < width && (y as u32) < height {
                        image.put_pixel(x as u32, y as u32, OUTLINE);
                    }
                }
            }
        }
    }

    Rendering {
        image,
        origin,
        poses: poses.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cpuzzle_core::corpus::{synthesize, synthetic_image, SynthSpec};

    fn puzzle() -> Puzzle {
        let img = synthetic_image(200, 150, 3);
        let spec = SynthSpec {
            min_pieces: 6,
            max_pieces: 10,
            xis: vec![0.0],
            ..Default::default()
        };
        synthesize(&img, &spec, 3).unwrap().remove(0)
    }

    #[test]
    fn shuffled_layout_separates_bounding_boxes() {
        let p = puzzle();
        let poses = layout_poses(&p, Layout::Shuffled, None).unwrap();
        let boxes: Vec<(Point2, Point2)> = p
            .pieces
            .iter()
            .zip(&poses)
            .map(|(pc, t)| pc.polygon.transformed(t).bbox())
            .collect();
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                let (a, b) = (boxes[i], boxes[j]);
                let disjoint = a.1.x < b.0.x || b.1.x < a.0.x || a.1.y < b.0.y || b.1.y < a.0.y;
                assert!(disjoint, "boxes {i} and {j} overlap");
            }
        }
    }

    #[test]
    fn solution_layout_needs_solution() {
        let p = puzzle();
        assert!(layout_poses(&p, Layout::Solution, None).is_err());
    }

    #[test]
    fn rendering_is_deterministic() {
        let p = puzzle();
        let poses = layout_poses(&p, Layout::Gt, None).unwrap();
        assert_eq!(render(&p, &poses, true), render(&p, &poses, true));
    }
}
