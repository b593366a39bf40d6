//! Pictorial compatibility of mating links.
//!
//! For every edge we sample two `w`-pixel-thick grids in an edge-aligned
//! frame: the genuine imagery just inside the piece (`O`) and the
//! extrapolated imagery just outside it (`X`). Two edges are compatible when
//! the extrapolation of each one correlates with the genuine content of the
//! other.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Piece;
use crate::error::{Error, Result};
use crate::geometry::{Point2, Polygon};
use crate::mating_graph::{EdgeRef, Mating, MatingGraph};
use crate::raster::{to_rgba, MaskedRaster, Rgb};

pub const DEFAULT_GRID_WIDTH: usize = 5;
pub const DEFAULT_BAND_WIDTH: u32 = 12;
pub const DEFAULT_THRESHOLD: f64 = 0.0;
/// Sidecar listing the origin of each externally supplied band image.
pub const BANDS_FILE: &str = "bands.toml";

/// `height` rows by `width` columns of RGB values, row-major with
/// interleaved channels. Row 0 touches the edge.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl PixelGrid {
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for r in 0..height {
            for c in 0..width {
                data.extend_from_slice(&f(r, c));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> Rgb {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Subtracts each channel's mean.
    pub fn normalize_channels(&mut self) {
        let n = (self.width * self.height) as f64;
        if n == 0.0 {
            return;
        }
        for ch in 0..3 {
            let mean = self.data.iter().skip(ch).step_by(3).sum::<f64>() / n;
            for v in self.data.iter_mut().skip(ch).step_by(3) {
                *v -= mean;
            }
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize_channels();
        self
    }
}

/// Normalized correlation `Σ(X⊙O) / (‖X‖‖O‖)` of two equally sized grids;
/// 0 when either grid has zero norm.
pub fn grid_dot(mx: &PixelGrid, mo: &PixelGrid) -> Result<f64> {
    if mx.width != mo.width || mx.height != mo.height {
        return Err(Error::InvalidParameter(format!(
            "grid sizes differ: {}x{} vs {}x{}",
            mx.height, mx.width, mo.height, mo.width
        )));
    }
    Ok(window_dot(mo, mx, 0))
}

/// Correlation of `short` against the columns `offset..offset + short.width`
/// of `long`.
fn window_dot(long: &PixelGrid, short: &PixelGrid, offset: usize) -> f64 {
    let (mut dot, mut nl, mut ns) = (0.0, 0.0, 0.0);
    let run = short.width * 3;
    for r in 0..short.height {
        let s = &short.data[r * run..(r + 1) * run];
        let l0 = (r * long.width + offset) * 3;
        let l = &long.data[l0..l0 + run];
        for (a, b) in s.iter().zip(l) {
            dot += a * b;
            ns += a * a;
            nl += b * b;
        }
    }
    if ns == 0.0 || nl == 0.0 {
        return 0.0;
    }
    (dot / (ns.sqrt() * nl.sqrt())).clamp(-1.0, 1.0)
}

/// Mean correlation of `shorter` over every integer placement inside
/// `longer`.
pub fn sliding_similarity(longer: &PixelGrid, shorter: &PixelGrid) -> Result<f64> {
    if shorter.width > longer.width || shorter.height != longer.height || shorter.width == 0 {
        return Err(Error::InvalidParameter(format!(
            "cannot slide a {}x{} grid over a {}x{} grid",
            shorter.height, shorter.width, longer.height, longer.width
        )));
    }
    let delta = longer.width - shorter.width;
    let sum: f64 = (0..=delta).map(|d| window_dot(longer, shorter, d)).sum();
    Ok(sum / (delta + 1) as f64)
}

/// Sliding similarity with the roles picked by width.
fn similarity(a: &PixelGrid, b: &PixelGrid) -> Result<f64> {
    if a.width >= b.width {
        sliding_similarity(a, b)
    } else {
        sliding_similarity(b, a)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtrapolatorMode {
    /// Nearest-boundary colour extension.
    Baseline,
    /// Pre-computed bands: `<dir>/<piece id>.png` plus a `bands.toml`
    /// sidecar giving each image's origin in the piece frame.
    Directory(PathBuf),
}

impl fmt::Display for ExtrapolatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtrapolatorMode::Baseline => write!(f, "baseline"),
            ExtrapolatorMode::Directory(p) => write!(f, "dir:{}", p.display()),
        }
    }
}

impl FromStr for ExtrapolatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "baseline" {
            Ok(ExtrapolatorMode::Baseline)
        } else if let Some(p) = s.strip_prefix("dir:") {
            Ok(ExtrapolatorMode::Directory(PathBuf::from(p)))
        } else {
            Err(Error::InvalidParameter(format!(
                "extrapolator {s:?}: expected `baseline` or `dir:<path>`"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolatorContract {
    pub band_width_px: u32,
    pub mode: ExtrapolatorMode,
}

impl Default for ExtrapolatorContract {
    fn default() -> Self {
        Self {
            band_width_px: DEFAULT_BAND_WIDTH,
            mode: ExtrapolatorMode::Baseline,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BandsFile {
    band: Vec<BandEntry>,
}

#[derive(Serialize, Deserialize)]
struct BandEntry {
    piece: usize,
    origin: [f64; 2],
}

/// Edge frame: start vertex, unit direction, inward normal, length.
fn edge_frame(poly: &Polygon, k: usize) -> (Point2, Point2, Point2, Point2, f64) {
    let (a, b) = poly.edge(k);
    let l = a.dist(b);
    let d = (b - a) * (1.0 / l);
    (a, b, d, d.perp(), l)
}

fn grid_columns(piece: &Piece, k: usize) -> Result<(usize, f64)> {
    let l = piece.polygon.edge_length(k);
    if !(l >= 1.0) {
        return Err(Error::EdgeTooShort {
            piece: piece.id,
            edge: k,
            length: l,
        });
    }
    Ok((l.round() as usize, l))
}

fn sample_or_nearest(r: &MaskedRaster, p: Point2, radius: i64) -> Rgb {
    r.sample(p).or_else(|| r.nearest(p, radius)).unwrap_or([0.0; 3])
}

fn raw_original_grid(piece: &Piece, k: usize, w: usize) -> Result<PixelGrid> {
    let (width, l) = grid_columns(piece, k)?;
    let (a, _, d, n, _) = edge_frame(&piece.polygon, k);
    let step = l / width as f64;
    Ok(PixelGrid::from_fn(width, w, |r, c| {
        let p = a + d * ((c as f64 + 0.5) * step) + n * (r as f64 + 0.5);
        sample_or_nearest(&piece.raster, p, w as i64 + 2)
    }))
}

/// `O`: genuine content inside the piece along edge `k`, columns from the
/// edge's start vertex to its end, rows moving inward.
pub fn extract_original_grid(piece: &Piece, k: usize, w: usize) -> Result<PixelGrid> {
    check_w(w)?;
    Ok(raw_original_grid(piece, k, w)?.normalized())
}

/// `X`: extrapolated content outside the piece along edge `k`, read from
/// `extended` (piece plus band). Columns run from the end vertex back to the
/// start and rows move outward, which registers the grid with the `O` grid
/// of a correctly placed mate.
pub fn extract_extrapolated_grid(piece: &Piece, extended: &MaskedRaster, k: usize, w: usize) -> Result<PixelGrid> {
    check_w(w)?;
    let (width, l) = grid_columns(piece, k)?;
    let (_, b, d, n, _) = edge_frame(&piece.polygon, k);
    let step = l / width as f64;
    Ok(PixelGrid::from_fn(width, w, |r, c| {
        let p = b - d * ((c as f64 + 0.5) * step) - n * (r as f64 + 0.5);
        sample_or_nearest(extended, p, w as i64 + 2)
    })
    .normalized())
}

fn check_w(w: usize) -> Result<()> {
    if w == 0 {
        return Err(Error::InvalidParameter("grid width must be at least 1".into()));
    }
    Ok(())
}

fn dist_to_polygon(poly: &Polygon, p: Point2) -> f64 {
    (0..poly.len())
        .map(|k| {
            let (a, b) = poly.edge(k);
            let ab = b - a;
            let t = ((p - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
            p.dist(a + ab * t)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Exact pixel lookup (no interpolation).
fn pixel_at(r: &MaskedRaster, p: Point2) -> Option<Rgb> {
    let i = (p.x - r.origin.x).floor() as i64;
    let j = (p.y - r.origin.y).floor() as i64;
    r.is_set(i, j).then(|| r.rgb(i as u32, j as u32))
}

/// The band of extrapolated imagery outside the piece, in the piece frame.
/// Only band pixels are set.
pub fn extrapolate_band(piece: &Piece, contract: &ExtrapolatorContract) -> Result<MaskedRaster> {
    match &contract.mode {
        ExtrapolatorMode::Baseline => Ok(baseline_band(piece, contract.band_width_px)),
        ExtrapolatorMode::Directory(dir) => load_band(dir, piece.id),
    }
}

fn baseline_band(piece: &Piece, band_width: u32) -> MaskedRaster {
    let src = &piece.raster;
    let mut boundary: Vec<(Point2, Rgb)> = Vec::new();
    for j in 0..src.height() {
        for i in 0..src.width() {
            let (ii, jj) = (i as i64, j as i64);
            if src.is_set(ii, jj)
                && !(src.is_set(ii - 1, jj) && src.is_set(ii + 1, jj) && src.is_set(ii, jj - 1) && src.is_set(ii, jj + 1))
            {
                boundary.push((src.pixel_center(i, j), src.rgb(i, j)));
            }
        }
    }
    let mut out = MaskedRaster::covering(&piece.polygon, band_width + 1);
    if boundary.is_empty() {
        return out;
    }
    let bw = band_width as f64;
    for j in 0..out.height() {
        for i in 0..out.width() {
            let p = out.pixel_center(i, j);
            if piece.polygon.contains(p, 0.0) || dist_to_polygon(&piece.polygon, p) > bw {
                continue;
            }
            let mut best = (f64::INFINITY, [0.0; 3]);
            for (q, c) in &boundary {
                let d = (*q - p).norm_sq();
                if d < best.0 {
                    best = (d, *c);
                }
            }
            out.image.put_pixel(i, j, to_rgba(best.1));
        }
    }
    out
}

fn load_band(dir: &Path, piece: usize) -> Result<MaskedRaster> {
    let img_path = dir.join(format!("{piece}.png"));
    if !img_path.is_file() {
        return Err(Error::MissingBand(piece));
    }
    let side = dir.join(BANDS_FILE);
    if !side.is_file() {
        return Err(Error::MissingFile(side));
    }
    let text = std::fs::read_to_string(&side)?;
    let bands: BandsFile = toml::from_str(&text).map_err(|e| Error::Manifest {
        path: side.clone(),
        message: e.to_string(),
    })?;
    let entry = bands.band.iter().find(|b| b.piece == piece).ok_or(Error::MissingBand(piece))?;
    Ok(MaskedRaster {
        image: image::open(&img_path)?.to_rgba8(),
        origin: Point2::new(entry.origin[0], entry.origin[1]),
    })
}

/// Writes bands in the layout read by [`ExtrapolatorMode::Directory`].
pub fn write_bands(dir: &Path, bands: &[(usize, MaskedRaster)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(bands.len());
    for (piece, band) in bands {
        band.image.save_with_format(dir.join(format!("{piece}.png")), image::ImageFormat::Png)?;
        entries.push(BandEntry {
            piece: *piece,
            origin: [band.origin.x, band.origin.y],
        });
    }
    let text = toml::to_string(&BandsFile { band: entries }).map_err(|e| Error::Manifest {
        path: dir.join(BANDS_FILE),
        message: e.to_string(),
    })?;
    std::fs::write(dir.join(BANDS_FILE), text)?;
    Ok(())
}

/// Piece imagery with the band filled in around it.
pub fn extended_raster(piece: &Piece, band: &MaskedRaster, band_width: u32) -> MaskedRaster {
    let mut out = MaskedRaster::covering(&piece.polygon, band_width + 1);
    for j in 0..out.height() {
        for i in 0..out.width() {
            let p = out.pixel_center(i, j);
            let c = if piece.polygon.contains(p, 0.0) {
                pixel_at(&piece.raster, p).or_else(|| piece.raster.sample(p))
            } else {
                pixel_at(band, p)
            };
            if let Some(c) = c {
                out.image.put_pixel(i, j, to_rgba(c));
            }
        }
    }
    out
}

/// `O` and `X` grids of every edge of one piece; `None` for edges shorter
/// than a pixel.
#[derive(Clone, Debug)]
pub struct PieceGrids {
    pub original: Vec<Option<PixelGrid>>,
    pub extrapolated: Vec<Option<PixelGrid>>,
}

pub fn piece_grids(piece: &Piece, contract: &ExtrapolatorContract, w: usize) -> Result<PieceGrids> {
    check_w(w)?;
    let band = extrapolate_band(piece, contract)?;
    let ext = extended_raster(piece, &band, contract.band_width_px);
    let n = piece.n_edges();
    let mut original = Vec::with_capacity(n);
    let mut extrapolated = Vec::with_capacity(n);
    for k in 0..n {
        match (extract_original_grid(piece, k, w), extract_extrapolated_grid(piece, &ext, k, w)) {
            (Ok(o), Ok(x)) => {
                original.push(Some(o));
                extrapolated.push(Some(x));
            }
            (Err(Error::EdgeTooShort { .. }), _) => {
                original.push(None);
                extrapolated.push(None);
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Ok(PieceGrids { original, extrapolated })
}

pub fn all_piece_grids(pieces: &[Piece], contract: &ExtrapolatorContract, w: usize) -> Result<Vec<PieceGrids>> {
    pieces.par_iter().map(|p| piece_grids(p, contract, w)).collect()
}

/// `½F(O(a), X(b)) + ½F(O(b), X(a))`, or `None` if either edge is too short
/// to carry a grid.
pub fn compatibility_cached(grids: &[PieceGrids], m: &Mating) -> Option<f64> {
    let get = |e: EdgeRef| -> Option<(&PixelGrid, &PixelGrid)> {
        let g = grids.get(e.piece)?;
        Some((g.original.get(e.edge)?.as_ref()?, g.extrapolated.get(e.edge)?.as_ref()?))
    };
    let (oa, xa) = get(m.a)?;
    let (ob, xb) = get(m.b)?;
    let f1 = similarity(oa, xb).ok()?;
    let f2 = similarity(ob, xa).ok()?;
    Some(0.5 * f1 + 0.5 * f2)
}

/// Raw compatibility of one mating, computed from scratch.
pub fn compatibility(m: &Mating, pieces: &[Piece], contract: &ExtrapolatorContract, w: usize) -> Result<f64> {
    let piece = |e: EdgeRef| {
        pieces
            .get(e.piece)
            .filter(|p| e.edge < p.n_edges())
            .ok_or_else(|| Error::DanglingReference(format!("edge {e}")))
    };
    let (pa, pb) = (piece(m.a)?, piece(m.b)?);
    let grids = |p: &Piece, k: usize| -> Result<(PixelGrid, PixelGrid)> {
        let band = extrapolate_band(p, contract)?;
        let ext = extended_raster(p, &band, contract.band_width_px);
        Ok((extract_original_grid(p, k, w)?, extract_extrapolated_grid(p, &ext, k, w)?))
    };
    let (oa, xa) = grids(pa, m.a.edge)?;
    let (ob, xb) = grids(pb, m.b.edge)?;
    Ok(0.5 * similarity(&oa, &xb)? + 0.5 * similarity(&ob, &xa)?)
}

/// Min-max normalization to `[0, 1]`; every weight is 1 when all inputs are
/// equal.
pub fn normalize_scores(raw: &BTreeMap<Mating, f64>) -> BTreeMap<Mating, f64> {
    let lo = raw.values().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.values().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.iter()
        .map(|(&m, &c)| {
            let w = if hi > lo { ((c - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 1.0 };
            (m, w)
        })
        .collect()
}

/// Raw compatibilities of all mating links of `g`. Links touching an edge
/// shorter than a pixel cannot be scored and are absent from the result.
pub fn raw_scores(g: &MatingGraph, grids: &[PieceGrids]) -> BTreeMap<Mating, f64> {
    let links: Vec<Mating> = g.matings().collect();
    let scored: Vec<Option<f64>> = links.par_iter().map(|m| compatibility_cached(grids, m)).collect();
    links
        .into_iter()
        .zip(scored)
        .filter_map(|(m, s)| s.map(|s| (m, s)))
        .collect()
}

/// Sets every link's weight to its normalized compatibility and drops links
/// below `threshold`.
pub fn score_all(
    g: &MatingGraph,
    pieces: &[Piece],
    contract: &ExtrapolatorContract,
    w: usize,
    threshold: f64,
) -> Result<MatingGraph> {
    let grids = all_piece_grids(pieces, contract, w)?;
    Ok(apply_scores(g, &raw_scores(g, &grids), threshold))
}

pub fn apply_scores(g: &MatingGraph, raw: &BTreeMap<Mating, f64>, threshold: f64) -> MatingGraph {
    let weights = normalize_scores(raw);
    g.with_links(weights.into_iter().filter(|(_, w)| *w >= threshold))
}

/// Writes the band of every piece as a directory usable by
/// [`ExtrapolatorMode::Directory`].
pub fn export_bands(dir: &Path, pieces: &[Piece], contract: &ExtrapolatorContract) -> Result<()> {
    let bands = pieces
        .par_iter()
        .map(|p| Ok((p.id, extrapolate_band(p, contract)?)))
        .collect::<Result<Vec<_>>>()?;
    write_bands(dir, &bands)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_puzzle, shuffle, synthetic_image};
    use crate::partition::{random_partition, PartitionSpec};
    use image::Rgba;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, w: usize, h: usize) -> PixelGrid {
        PixelGrid::from_fn(w, h, |_, _| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
    }

    fn square_piece(size: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> Piece {
        let s = size as f64;
        let polygon = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(s, 0.0),
            Point2::new(s, s),
            Point2::new(0.0, s),
        ])
        .unwrap();
        let mut raster = MaskedRaster::new(size, size, Point2::ORIGIN);
        for j in 0..size {
            for i in 0..size {
                let c = f(i, j);
                raster.image.put_pixel(i, j, Rgba([c[0], c[1], c[2], 255]));
            }
        }
        Piece {
            id: 0,
            polygon,
            raster,
            source_face: 0,
        }
    }

    fn oracle_dot(x: &PixelGrid, o: &PixelGrid) -> f64 {
        let mut s = 0.0;
        let (mut nx, mut no) = (0.0, 0.0);
        for r in 0..x.height() {
            for c in 0..x.width() {
                let (a, b) = (x.get(r, c), o.get(r, c));
                for k in 0..3 {
                    s += a[k] * b[k];
                    nx += a[k] * a[k];
                    no += b[k] * b[k];
                }
            }
        }
        if nx == 0.0 || no == 0.0 {
            0.0
        } else {
            s / (nx.sqrt() * no.sqrt())
        }
    }

    fn window(g: &PixelGrid, off: usize, width: usize) -> PixelGrid {
        PixelGrid::from_fn(width, g.height(), |r, c| g.get(r, c + off))
    }

    #[test]
    fn grid_dot_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_grid(&mut rng, 7, 5);
        assert!((grid_dot(&g, &g).unwrap() - 1.0).abs() < 1e-12);
        let neg = PixelGrid::from_fn(7, 5, |r, c| g.get(r, c).map(|v| -v));
        assert!((grid_dot(&neg, &g).unwrap() + 1.0).abs() < 1e-12);
        let zero = PixelGrid::from_fn(7, 5, |_, _| [0.0; 3]);
        assert_eq!(grid_dot(&zero, &g).unwrap(), 0.0);
        assert!(grid_dot(&random_grid(&mut rng, 6, 5), &g).is_err());
    }

    #[test]
    fn grid_dot_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let (w, h) = (rng.gen_range(1..30), rng.gen_range(1..8));
            let (a, b) = (random_grid(&mut rng, w, h), random_grid(&mut rng, w, h));
            assert!((grid_dot(&a, &b).unwrap() - oracle_dot(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn sliding_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let h = rng.gen_range(1..6);
            let ws = rng.gen_range(1..20);
            let wl = ws + rng.gen_range(0..10);
            let (long, short) = (random_grid(&mut rng, wl, h), random_grid(&mut rng, ws, h));
            let want: f64 = (0..=wl - ws).map(|d| oracle_dot(&window(&long, d, ws), &short)).sum::<f64>()
                / (wl - ws + 1) as f64;
            assert!((sliding_similarity(&long, &short).unwrap() - want).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, b) = (random_grid(&mut rng, 5, 3), random_grid(&mut rng, 3, 3));
        assert!(sliding_similarity(&b, &a).is_err());
        let same = random_grid(&mut rng, 5, 3);
        assert_eq!(sliding_similarity(&a, &same).unwrap(), grid_dot(&a, &same).unwrap());
    }

    #[test]
    fn constant_piece_gives_zero_grid() {
        let p = square_piece(20, |_, _| [90, 30, 200]);
        let g = extract_original_grid(&p, 0, 5).unwrap();
        assert_eq!((g.width(), g.height()), (20, 5));
        assert!(g.data().iter().all(|v| v.abs() < 1e-12));
        let band = extrapolate_band(&p, &ExtrapolatorContract::default()).unwrap();
        for px in band.image.pixels().filter(|px| px[3] > 0) {
            assert_eq!(&px.0[..3], &[90, 30, 200]);
        }
        let m = Mating::new(EdgeRef::new(0, 0), EdgeRef::new(1, 2));
        let mut q = p.clone();
        q.id = 1;
        assert_eq!(compatibility(&m, &[p, q], &ExtrapolatorContract::default(), 5).unwrap(), 0.0);
    }

    #[test]
    fn gradient_ramp_reproduced() {
        // edge 3 runs from (0, 20) to (0, 0); the inward normal is +x
        let p = square_piece(20, |i, _| [(10 * i) as u8, 0, 0]);
        let g = raw_original_grid(&p, 3, 5).unwrap();
        for r in 0..5 {
            for c in 0..20 {
                assert!((g.get(r, c)[0] - 10.0 * r as f64).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn original_and_extrapolated_sizes_agree() {
        let p = square_piece(17, |i, j| [(i * 7) as u8, (j * 5) as u8, 3]);
        let band = extrapolate_band(&p, &ExtrapolatorContract::default()).unwrap();
        let ext = extended_raster(&p, &band, DEFAULT_BAND_WIDTH);
        for k in 0..4 {
            let o = extract_original_grid(&p, k, 5).unwrap();
            let x = extract_extrapolated_grid(&p, &ext, k, 5).unwrap();
            assert_eq!((o.width(), o.height()), (x.width(), x.height()));
        }
    }

    #[test]
    fn short_edge_rejected() {
        let polygon = Polygon::new(vec![Point2::new(0.0, 0.0), Point2::new(0.5, 0.0), Point2::new(0.0, 9.0)]).unwrap();
        let p = Piece {
            id: 3,
            raster: MaskedRaster::covering(&polygon, 0),
            polygon,
            source_face: 0,
        };
        assert!(matches!(extract_original_grid(&p, 0, 5), Err(Error::EdgeTooShort { piece: 3, edge: 0, .. })));
    }

    #[test]
    fn baseline_colors_are_genuine() {
        let part = random_partition(
            &PartitionSpec {
                n_seeds: 8,
                width: 96.0,
                height: 96.0,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        let puz = shuffle(&make_puzzle(&part, &synthetic_image(96, 96, 2)).unwrap(), 1);
        let contract = ExtrapolatorContract::default();
        for p in &puz.pieces {
            let genuine: std::collections::HashSet<[u8; 3]> = p
                .raster
                .image
                .pixels()
                .filter(|px| px[3] > 0)
                .map(|px| [px[0], px[1], px[2]])
                .collect();
            let band = extrapolate_band(p, &contract).unwrap();
            let mut n = 0;
            for j in 0..band.height() {
                for i in 0..band.width() {
                    let px = band.image.get_pixel(i, j);
                    if px[3] > 0 {
                        assert!(genuine.contains(&[px[0], px[1], px[2]]));
                        n += 1;
                    } else {
                        // anything unset is inside or beyond the band
                        let c = band.pixel_center(i, j);
                        assert!(p.polygon.contains(c, 0.0) || dist_to_polygon(&p.polygon, c) > 11.0);
                    }
                }
            }
            assert!(n > 0);
        }
    }

    #[test]
    fn external_directory_round_trip() {
        let p = square_piece(12, |i, j| [(i * 20) as u8, (j * 20) as u8, 7]);
        let contract = ExtrapolatorContract::default();
        let band = extrapolate_band(&p, &contract).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bands(dir.path(), &[(0, band.clone())]).unwrap();
        let ext = ExtrapolatorContract {
            mode: ExtrapolatorMode::Directory(dir.path().to_path_buf()),
            ..contract
        };
        assert_eq!(extrapolate_band(&p, &ext).unwrap(), band);
        let mut q = p.clone();
        q.id = 4;
        assert!(matches!(extrapolate_band(&q, &ext), Err(Error::MissingBand(4))));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("baseline".parse::<ExtrapolatorMode>().unwrap(), ExtrapolatorMode::Baseline);
        assert_eq!(
            "dir:/tmp/x".parse::<ExtrapolatorMode>().unwrap(),
            ExtrapolatorMode::Directory("/tmp/x".into())
        );
        assert!("nope".parse::<ExtrapolatorMode>().is_err());
        let m = ExtrapolatorMode::Directory("a/b".into());
        assert_eq!(m.to_string().parse::<ExtrapolatorMode>().unwrap(), m);
    }

    fn test_puzzle(seed: u64) -> crate::corpus::Puzzle {
        let part = random_partition(
            &PartitionSpec {
                n_seeds: 12,
                width: 300.0,
                height: 300.0,
                min_edge_length: 6.0,
                ..Default::default()
            },
            seed,
        )
        .unwrap();
        shuffle(&make_puzzle(&part, &synthetic_image(300, 300, seed)).unwrap(), seed)
    }

    #[test]
    fn compatibility_symmetric_and_bounded() {
        let puz = test_puzzle(4);
        let contract = ExtrapolatorContract::default();
        let grids = all_piece_grids(&puz.pieces, &contract, 5).unwrap();
        let g = MatingGraph::build(&puz.pieces);
        for m in g.matings().take(300) {
            let c = compatibility_cached(&grids, &m).unwrap();
            assert!((-1.0..=1.0).contains(&c));
            let swapped = Mating { a: m.b, b: m.a };
            assert!((compatibility_cached(&grids, &swapped).unwrap() - c).abs() < 1e-12);
        }
        let m = g.matings().nth(7).unwrap();
        let direct = compatibility(&m, &puz.pieces, &contract, 5).unwrap();
        assert!((direct - compatibility_cached(&grids, &m).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ground_truth_outscores_random() {
        let mut wins = 0;
        let trials = 10;
        for t in 0..trials {
            let puz = test_puzzle(100 + t);
            let grids = all_piece_grids(&puz.pieces, &ExtrapolatorContract::default(), 5).unwrap();
            let g = MatingGraph::build(&puz.pieces);
            let gt: Vec<f64> = puz
                .ground_truth
                .matings
                .iter()
                .filter_map(|m| compatibility_cached(&grids, m))
                .collect();
            let other: Vec<f64> = g
                .matings()
                .filter(|m| !puz.ground_truth.matings.contains(m))
                .filter_map(|m| compatibility_cached(&grids, &m))
                .collect();
            let med = |mut v: Vec<f64>| {
                v.sort_by(f64::total_cmp);
                v[v.len() / 2]
            };
            if med(gt) > med(other) {
                wins += 1;
            }
        }
        assert!(wins > trials / 2, "ground truth won {wins} of {trials}");
    }

    #[test]
    fn offsets_do_not_change_compatibility() {
        let puz = test_puzzle(9);
        let contract = ExtrapolatorContract::default();
        // constant per-channel offset on a piece whose values leave headroom
        let mut offset = puz.pieces.clone();
        for px in offset[0].raster.image.pixels_mut().filter(|px| px[3] > 0) {
            px[2] = px[2] / 2 + 40;
        }
        let mut base = puz.pieces.clone();
        for px in base[0].raster.image.pixels_mut().filter(|px| px[3] > 0) {
            px[2] /= 2;
        }
        let g = MatingGraph::build(&puz.pieces);
        for m in g.matings().filter(|m| m.a.piece == 0 || m.b.piece == 0).take(20) {
            let a = compatibility(&m, &base, &contract, 5).unwrap();
            let b = compatibility(&m, &offset, &contract, 5).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn normalization_endpoints_and_degenerate() {
        let ms: Vec<Mating> = (0..5).map(|i| Mating::new(EdgeRef::new(0, i), EdgeRef::new(1, i))).collect();
        let raw: BTreeMap<Mating, f64> = ms.iter().copied().zip([0.3, -0.2, 0.9, 0.1, 0.4]).collect();
        let w = normalize_scores(&raw);
        assert_eq!(w[&ms[1]], 0.0);
        assert_eq!(w[&ms[2]], 1.0);
        let flat: BTreeMap<Mating, f64> = ms.iter().map(|&m| (m, 0.25)).collect();
        assert!(normalize_scores(&flat).values().all(|&v| v == 1.0));
    }

    proptest! {
        #[test]
        fn normalization_affine_invariant(
            vals in prop::collection::vec(-1.0f64..1.0, 2..30),
            a in 0.1f64..10.0,
            b in -5.0f64..5.0,
        ) {
            let ms: Vec<Mating> = (0..vals.len()).map(|i| Mating::new(EdgeRef::new(0, i), EdgeRef::new(1, i))).collect();
            let raw: BTreeMap<Mating, f64> = ms.iter().copied().zip(vals.iter().copied()).collect();
            let scaled: BTreeMap<Mating, f64> = raw.iter().map(|(&m, &v)| (m, a * v + b)).collect();
            let (w1, w2) = (normalize_scores(&raw), normalize_scores(&scaled));
            let spread = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max) - vals.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-6);
            for m in &ms {
                prop_assert!((w1[m] - w2[m]).abs() < 1e-9);
            }
        }

        #[test]
        fn grid_dot_bounded(seed in any::<u64>(), w in 1usize..12, h in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (random_grid(&mut rng, w, h), random_grid(&mut rng, w, h));
            let v = grid_dot(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn scoring_only_removes_links() {
        let puz = test_puzzle(11);
        let g = MatingGraph::build(&puz.pieces).geometric_filter(3.0);
        let s = score_all(&g, &puz.pieces, &ExtrapolatorContract::default(), 5, 0.5).unwrap();
        assert!(s.n_mating_links() <= g.n_mating_links());
        for l in s.mating_links() {
            assert!(g.has_link(&l.mating));
            assert!(l.weight >= 0.5 && l.weight <= 1.0);
        }
    }
}
