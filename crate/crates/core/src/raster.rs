//! Masked RGB rasters registered to a piece's local frame.
//!
//! With 1 world unit = 1 pixel, pixel `(i, j)` of a raster covers the square
//! `origin + [i, i+1] × [j, j+1]` and its center sits at
//! `origin + (i + 0.5, j + 0.5)`. Alpha is the mask: 0 outside, 255 inside.

use image::{Rgba, RgbaImage};

use crate::geometry::{Point2, Polygon};

pub type Rgb = [f64; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct MaskedRaster {
    pub image: RgbaImage,
    /// Local coordinates of the top-left corner of pixel (0, 0).
    pub origin: Point2,
}

impl MaskedRaster {
    pub fn new(width: u32, height: u32, origin: Point2) -> Self {
        Self {
            image: RgbaImage::new(width, height),
            origin,
        }
    }

    /// A raster covering the bounding box of `poly` (plus `pad` pixels on
    /// every side), fully transparent.
    pub fn covering(poly: &Polygon, pad: u32) -> Self {
        let (lo, hi) = poly.bbox();
        let ox = lo.x.floor() - pad as f64;
        let oy = lo.y.floor() - pad as f64;
        let w = ((hi.x.ceil() - ox) as u32 + pad).max(1);
        let h = ((hi.y.ceil() - oy) as u32 + pad).max(1);
        Self::new(w, h, Point2::new(ox, oy))
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    #[inline]
    pub fn pixel_center(&self, i: u32, j: u32) -> Point2 {
        Point2::new(self.origin.x + i as f64 + 0.5, self.origin.y + j as f64 + 0.5)
    }

    #[inline]
    pub fn is_set(&self, i: i64, j: i64) -> bool {
        if i < 0 || j < 0 || i >= self.width() as i64 || j >= self.height() as i64 {
            return false;
        }
        self.image.get_pixel(i as u32, j as u32)[3] > 0
    }

    #[inline]
    pub fn rgb(&self, i: u32, j: u32) -> Rgb {
        let p = self.image.get_pixel(i, j);
        [p[0] as f64, p[1] as f64, p[2] as f64]
    }

    pub fn mask_count(&self) -> usize {
        self.image.pixels().filter(|p| p[3] > 0).count()
    }

    /// Clears every pixel whose center is outside `poly`.
    pub fn clip_to(&mut self, poly: &Polygon) {
        for j in 0..self.height() {
            for i in 0..self.width() {
                if !poly.contains(self.pixel_center(i, j), 0.0) {
                    self.image.put_pixel(i, j, Rgba([0, 0, 0, 0]));
                }
            }
        }
    }

    /// Bilinear interpolation restricted to masked pixels: weights of
    /// unmasked neighbours are dropped and the rest renormalized. Falls back
    /// to the nearest masked pixel within two pixels.
    pub fn sample(&self, p: Point2) -> Option<Rgb> {
        let u = p.x - self.origin.x - 0.5;
        let v = p.y - self.origin.y - 0.5;
        let i0 = u.floor();
        let j0 = v.floor();
        let fu = u - i0;
        let fv = v - j0;
        let (i0, j0) = (i0 as i64, j0 as i64);
        let mut acc = [0.0; 3];
        let mut wsum = 0.0;
        for (di, dj, w) in [
            (0, 0, (1.0 - fu) * (1.0 - fv)),
            (1, 0, fu * (1.0 - fv)),
            (0, 1, (1.0 - fu) * fv),
            (1, 1, fu * fv),
        ] {
            let (i, j) = (i0 + di, j0 + dj);
            if w > 0.0 && self.is_set(i, j) {
                let c = self.rgb(i as u32, j as u32);
                for k in 0..3 {
                    acc[k] += w * c[k];
                }
                wsum += w;
            }
        }
        if wsum > 1e-12 {
            return Some(acc.map(|a| a / wsum));
        }
        self.nearest(p, 2)
    }

    /// Color of the masked pixel whose center is closest to `p`, searching
    /// a square window of the given radius.
    pub fn nearest(&self, p: Point2, radius: i64) -> Option<Rgb> {
        let ci = (p.x - self.origin.x).floor() as i64;
        let cj = (p.y - self.origin.y).floor() as i64;
        let mut best: Option<(f64, i64, i64)> = None;
        for j in cj - radius..=cj + radius {
            for i in ci - radius..=ci + radius {
                if self.is_set(i, j) {
                    let d = (self.pixel_center(i as u32, j as u32) - p).norm_sq();
                    if best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, i, j));
                    }
                }
            }
        }
        best.map(|(_, i, j)| self.rgb(i as u32, j as u32))
    }
}

pub fn to_rgba(c: Rgb) -> Rgba<u8> {
    Rgba([
        c[0].round().clamp(0.0, 255.0) as u8,
        c[1].round().clamp(0.0, 255.0) as u8,
        c[2].round().clamp(0.0, 255.0) as u8,
        255,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_on_full_raster() {
        let mut r = MaskedRaster::new(2, 1, Point2::ORIGIN);
        r.image.put_pixel(0, 0, Rgba([0, 0, 0, 255]));
        r.image.put_pixel(1, 0, Rgba([100, 50, 10, 255]));
        let c = r.sample(Point2::new(1.0, 0.5)).unwrap();
        assert!((c[0] - 50.0).abs() < 1e-12);
        assert!((c[1] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn masked_neighbours_ignored() {
        let mut r = MaskedRaster::new(2, 1, Point2::ORIGIN);
        r.image.put_pixel(0, 0, Rgba([200, 0, 0, 255]));
        r.image.put_pixel(1, 0, Rgba([0, 0, 0, 0]));
        let c = r.sample(Point2::new(1.2, 0.5)).unwrap();
        assert_eq!(c[0], 200.0);
        assert!(r.sample(Point2::new(40.0, 40.0)).is_none());
    }

    #[test]
    fn covering_contains_polygon() {
        let poly = Polygon::new(vec![
            Point2::new(-3.2, -1.5),
            Point2::new(4.7, -2.1),
            Point2::new(0.3, 5.9),
        ])
        .unwrap();
        let r = MaskedRaster::covering(&poly, 0);
        let (lo, hi) = poly.bbox();
        assert!(r.origin.x <= lo.x && r.origin.y <= lo.y);
        assert!(r.origin.x + r.width() as f64 >= hi.x);
        assert!(r.origin.y + r.height() as f64 >= hi.y);
    }
}
