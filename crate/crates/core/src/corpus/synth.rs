use std::collections::BTreeMap;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{erode, make_puzzle, shuffle, NoiseSpec, Puzzle};
use crate::error::{Error, Result};
use crate::partition::{random_partition, PartitionSpec};

/// Recipe for one puzzle family: a partition with a piece count drawn from
/// `[min_pieces, max_pieces]`, eroded once per entry of `xis`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub min_pieces: usize,
    pub max_pieces: usize,
    pub merge_probability: f64,
    pub xis: Vec<f64>,
    pub margin: f64,
    pub min_edge_length: f64,
    pub max_angle_deg: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            min_pieces: 6,
            max_pieces: 40,
            merge_probability: 0.4,
            xis: vec![0.0, 0.001, 0.0025],
            margin: 4.0,
            min_edge_length: 4.0,
            max_angle_deg: 179.0,
        }
    }
}

/// Generates one puzzle per noise level from a shared partition and a
/// shared shuffle, so the versions differ only in their erosion.
pub fn synthesize(image: &RgbImage, spec: &SynthSpec, seed: u64) -> Result<Vec<Puzzle>> {
    if spec.min_pieces < 2 || spec.min_pieces > spec.max_pieces {
        return Err(Error::InvalidParameter(format!(
            "piece range [{}, {}]",
            spec.min_pieces, spec.max_pieces
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = rng.gen_range(spec.min_pieces..=spec.max_pieces);
    // a triangulation of n points has about 2n faces; merging removes some
    let mut n_seeds = ((target as f64 / (2.0 * (1.0 - 0.5 * spec.merge_probability))).ceil() as usize + 3).max(3);
    let mut last_err = Error::Degenerate("no attempt made".into());
    for _ in 0..200 {
        let pspec = PartitionSpec {
            n_seeds,
            width: image.width() as f64,
            height: image.height() as f64,
            margin: spec.margin,
            merge_probability: spec.merge_probability,
            min_edge_length: spec.min_edge_length,
            ..Default::default()
        };
        let part_seed: u64 = rng.gen();
        let part = match random_partition(&pspec, part_seed) {
            Ok(p) => p,
            Err(e) => {
                last_err = e;
                continue;
            }
        };
        let n_faces = part.faces.len();
        if n_faces < spec.min_pieces {
            n_seeds += 1;
            continue;
        }
        if n_faces > spec.max_pieces {
            n_seeds = n_seeds.saturating_sub(1).max(3);
            continue;
        }
        let max_angle = part
            .faces
            .iter()
            .flat_map(|f| (0..f.len()).map(move |i| f.interior_angle(i)))
            .fold(0.0f64, f64::max)
            .to_degrees();
        if max_angle > spec.max_angle_deg {
            last_err = Error::Degenerate("nearly flat vertex".into());
            continue;
        }
        let base = make_puzzle(&part, image)?;
        let shuffle_seed: u64 = rng.gen();
        // stored as a TOML integer, which is signed 64-bit
        let noise_seed: u64 = rng.gen_range(0..=i64::MAX as u64);
        let mut out = Vec::with_capacity(spec.xis.len());
        let mut failed = None;
        for &xi in &spec.xis {
            let noise = NoiseSpec::new(xi, base.meta.diameter, noise_seed);
            match erode(&base.pieces, &noise) {
                Ok(pieces) => {
                    let mut p = Puzzle {
                        pieces,
                        ..base.clone()
                    };
                    p.meta.noise = noise;
                    let mut p = shuffle(&p, shuffle_seed);
                    p.meta.provenance = BTreeMap::from([
                        ("seed".to_string(), seed.to_string()),
                        ("partition_seed".to_string(), part_seed.to_string()),
                        ("n_seeds".to_string(), n_seeds.to_string()),
                        ("merge_probability".to_string(), spec.merge_probability.to_string()),
                        ("shuffle_seed".to_string(), shuffle_seed.to_string()),
                    ]);
                    out.push(p);
                }
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        match failed {
            None => return Ok(out),
            Some(e) => last_err = e,
        }
    }
    Err(last_err)
}

/// Deterministic smooth-but-textured RGB image: colored Gaussian blobs over
/// a gradient, modulated by a few oriented sinusoids.
pub fn synthetic_image(width: u32, height: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base0: [f64; 3] = [rng.gen_range(40.0..120.0), rng.gen_range(40.0..120.0), rng.gen_range(40.0..120.0)];
    let base1: [f64; 3] = [rng.gen_range(120.0..220.0), rng.gen_range(120.0..220.0), rng.gen_range(120.0..220.0)];
    let gdir = rng.gen_range(0.0..std::f64::consts::TAU);
    let scale = width.max(height) as f64;
    let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..14)
        .map(|_| {
            (
                rng.gen_range(0.0..width as f64),
                rng.gen_range(0.0..height as f64),
                rng.gen_range(0.05..0.25) * scale,
                [rng.gen_range(-90.0..90.0), rng.gen_range(-90.0..90.0), rng.gen_range(-90.0..90.0)],
            )
        })
        .collect();
    let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..4)
        .map(|_| {
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let period = rng.gen_range(12.0..60.0);
            (
                a.cos() * std::f64::consts::TAU / period,
                a.sin() * std::f64::consts::TAU / period,
                rng.gen_range(0.0..std::f64::consts::TAU),
                [rng.gen_range(-25.0..25.0), rng.gen_range(-25.0..25.0), rng.gen_range(-25.0..25.0)],
            )
        })
        .collect();
    RgbImage::from_fn(width, height, |x, y| {
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        let t = ((fx * gdir.cos() + fy * gdir.sin()) / scale * 0.5 + 0.5).clamp(0.0, 1.0);
        let mut c = [0.0; 3];
        for k in 0..3 {
            c[k] = base0[k] + (base1[k] - base0[k]) * t;
        }
        for (bx, by, r, col) in &blobs {
            let d2 = ((fx - bx).powi(2) + (fy - by).powi(2)) / (r * r);
            let w = (-d2).exp();
            for k in 0..3 {
                c[k] += w * col[k];
            }
        }
        for (kx, ky, ph, col) in &waves {
            let s = (kx * fx + ky * fy + ph).sin();
            for k in 0..3 {
                c[k] += s * col[k];
            }
        }
        Rgb(c.map(|v| v.round().clamp(0.0, 255.0) as u8))
    })
}
