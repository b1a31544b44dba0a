//! Anti-aliased drawing primitives on `f32` intensity canvases.
//!
//! Disk edges use the exact area of the disk inside each boundary pixel, so the
//! rendered intensity mass equals the disk area to rounding.

use crate::geom::Point2;

/// Row-major single-channel canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl Canvas {
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    fn blend(&mut self, x: usize, y: usize, color: f32, coverage: f64) {
        if coverage <= 0.0 {
            return;
        }
        let p = &mut self.pixels[y * self.width + x];
        if coverage >= 1.0 {
            *p = color;
        } else {
            let c = coverage as f32;
            *p = *p * (1.0 - c) + color * c;
        }
    }

    /// Pixel index range covering `[lo, hi)` in continuous coordinates.
    fn span(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
        let a = lo.floor().max(0.0);
        let b = hi.ceil().min(n as f64);
        if a >= b {
            None
        } else {
            Some((a as usize, b as usize))
        }
    }

    pub fn fill_disk(&mut self, center: Point2, radius: f64, color: f32) {
        if radius <= 0.0 {
            return;
        }
        let Some((x_lo, x_hi)) = Self::span(center.x - radius, center.x + radius, self.width) else {
            return;
        };
        let Some((y_lo, y_hi)) = Self::span(center.y - radius, center.y + radius, self.height) else {
            return;
        };
        const HALF_DIAG: f64 = std::f64::consts::FRAC_1_SQRT_2;
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let d = Point2::new(x as f64 + 0.5, y as f64 + 0.5).distance(center);
                let cov = if d + HALF_DIAG <= radius {
                    1.0
                } else if d - HALF_DIAG >= radius {
                    0.0
                } else {
                    disk_rect_area(center, radius, x as f64, x as f64 + 1.0, y as f64, y as f64 + 1.0)
                };
                self.blend(x, y, color, cov);
            }
        }
    }

    /// Axis-aligned rectangle `[x0, x1) x [y0, y1)` with fractional edges.
    pub fn fill_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, color: f32) {
        let Some((x_lo, x_hi)) = Self::span(x0, x1, self.width) else {
            return;
        };
        let Some((y_lo, y_hi)) = Self::span(y0, y1, self.height) else {
            return;
        };
        for y in y_lo..y_hi {
            let cy = overlap(y as f64, y as f64 + 1.0, y0, y1);
            for x in x_lo..x_hi {
                let cx = overlap(x as f64, x as f64 + 1.0, x0, x1);
                self.blend(x, y, color, cx * cy);
            }
        }
    }

    /// Separable Gaussian blur with clamp-to-edge borders.
    pub fn gaussian_blur(&mut self, sigma: f64) {
        if sigma <= 0.0 {
            return;
        }
        let kernel = gaussian_kernel(sigma);
        let r = kernel.len() / 2;
        let (w, h) = (self.width, self.height);
        let mut tmp = vec![0.0f32; w * h];

        for y in 0..h {
            let row = &self.pixels[y * w..(y + 1) * w];
            for x in 0..w {
                let mut acc = 0.0f32;
                for (k, &wk) in kernel.iter().enumerate() {
                    let sx = (x + k).saturating_sub(r).min(w - 1);
                    acc += wk * row[sx];
                }
                tmp[y * w + x] = acc;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f32;
                for (k, &wk) in kernel.iter().enumerate() {
                    let sy = (y + k).saturating_sub(r).min(h - 1);
                    acc += wk * tmp[sy * w + x];
                }
                self.pixels[y * w + x] = acc;
            }
        }
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Normalised kernel of half-width `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let r = (3.0 * sigma).ceil().max(1.0) as i64;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|v| (v / sum) as f32).collect()
}

/// Antiderivative of `sqrt(r^2 - u^2)`.
fn half_chord_integral(u: f64, r: f64) -> f64 {
    let u = u.clamp(-r, r);
    0.5 * (u * (r * r - u * u).max(0.0).sqrt() + r * r * (u / r).clamp(-1.0, 1.0).asin())
}

/// Exact area of the intersection of a disk with the rectangle
/// `[x0, x1] x [y0, y1]`.
pub fn disk_rect_area(center: Point2, r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let u_lo = (x0 - center.x).max(-r);
    let u_hi = (x1 - center.x).min(r);
    if u_lo >= u_hi || r <= 0.0 {
        return 0.0;
    }
    let (a, b) = (y0 - center.y, y1 - center.y);
    if a >= b {
        return 0.0;
    }

    // Integrand max(0, min(b, s) - max(a, -s)) with s(u) = sqrt(r^2 - u^2)
    // switches form only where s equals |a| or |b|.
    let mut cuts = [u_lo, u_hi, f64::NAN, f64::NAN, f64::NAN, f64::NAN];
    let mut n = 2;
    for d in [a.abs(), b.abs()] {
        if d < r {
            let u = (r * r - d * d).sqrt();
            for c in [-u, u] {
                if c > u_lo && c < u_hi {
                    cuts[n] = c;
                    n += 1;
                }
            }
        }
    }
    let cuts = &mut cuts[..n];
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());

    let s = |u: f64| (r * r - u * u).max(0.0).sqrt();
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (u0, u1) = (w[0], w[1]);
        if u1 <= u0 {
            continue;
        }
        let sm = s(0.5 * (u0 + u1));
        let upper_is_curve = b >= sm;
        let lower_is_curve = a <= -sm;
        let upper_m = if upper_is_curve { sm } else { b };
        let lower_m = if lower_is_curve { -sm } else { a };
        if upper_m <= lower_m {
            continue;
        }
        let curve = half_chord_integral(u1, r) - half_chord_integral(u0, r);
        let len = u1 - u0;
        let upper = if upper_is_curve { curve } else { b * len };
        let lower = if lower_is_curve { -curve } else { a * len };
        area += upper - lower;
    }
    area.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Midpoint-rule supersampling of the disk indicator.
    fn supersample(center: Point2, r: f64, x0: f64, x1: f64, y0: f64, y1: f64, n: usize) -> f64 {
        let (dx, dy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
        let mut hits = 0usize;
        for i in 0..n {
            for j in 0..n {
                let p = Point2::new(x0 + (i as f64 + 0.5) * dx, y0 + (j as f64 + 0.5) * dy);
                if p.distance_sq(center) <= r * r {
                    hits += 1;
                }
            }
        }
        hits as f64 * dx * dy
    }

    #[test]
    fn whole_disk_area() {
        let c = Point2::new(0.3, -0.2);
        let a = disk_rect_area(c, 2.5, -10.0, 10.0, -10.0, 10.0);
        assert!((a - std::f64::consts::PI * 6.25).abs() < 1e-12);
    }

    #[test]
    fn matches_supersampling_on_boundary_pixels() {
        let c = Point2::new(10.37, 9.81);
        let r = 6.0;
        for y in 2..18 {
            for x in 2..18 {
                let (x0, y0) = (x as f64, y as f64);
                let exact = disk_rect_area(c, r, x0, x0 + 1.0, y0, y0 + 1.0);
                let approx = supersample(c, r, x0, x0 + 1.0, y0, y0 + 1.0, 400);
                assert!((exact - approx).abs() < 2e-3, "pixel ({x},{y}): {exact} vs {approx}");
            }
        }
    }

    #[test]
    fn pixel_coverages_sum_to_disk_area() {
        let c = Point2::new(20.25, 19.6);
        let r = 6.3;
        let mut sum = 0.0;
        for y in 0..40 {
            for x in 0..40 {
                sum += disk_rect_area(c, r, x as f64, x as f64 + 1.0, y as f64, y as f64 + 1.0);
            }
        }
        assert!((sum - std::f64::consts::PI * r * r).abs() < 1e-9);
    }

    #[test]
    fn rendered_disk_first_moment_is_center() {
        let c = Point2::new(15.3, 16.7);
        let mut canvas = Canvas::filled(32, 32, 0.0);
        canvas.fill_disk(c, 5.0, 1.0);
        let (mut m, mut mx, mut my) = (0.0, 0.0, 0.0);
        for y in 0..32 {
            for x in 0..32 {
                let v = canvas.pixels[y * 32 + x] as f64;
                m += v;
                mx += v * (x as f64 + 0.5);
                my += v * (y as f64 + 0.5);
            }
        }
        assert!((m - std::f64::consts::PI * 25.0).abs() < 1e-3);
        // Pixel-integrated moments of a box-filtered disk are centred up to
        // the midpoint rule's error.
        assert!(
            (mx / m - c.x).abs() < 5e-3 && (my / m - c.y).abs() < 5e-3,
            "{} {}",
            mx / m - c.x,
            my / m - c.y
        );
    }

    #[test]
    fn rect_coverage() {
        let mut canvas = Canvas::filled(4, 1, 1.0);
        canvas.fill_rect(0.5, 0.0, 2.0, 1.0, 0.0);
        assert_eq!(canvas.pixels, vec![0.5, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn blur_preserves_constant_and_mass() {
        let mut canvas = Canvas::filled(9, 7, 0.4);
        canvas.gaussian_blur(1.2);
        assert!(canvas.pixels.iter().all(|v| (v - 0.4).abs() < 1e-6));

        let mut impulse = Canvas::filled(21, 21, 0.0);
        impulse.pixels[10 * 21 + 10] = 1.0;
        impulse.gaussian_blur(1.0);
        let total: f32 = impulse.pixels.iter().sum();
        assert!((total - 1.0).abs() < 1e-5);
        assert_eq!(impulse.pixels[10 * 21 + 9], impulse.pixels[10 * 21 + 11]);
        let k = gaussian_kernel(0.8);
        assert_eq!(k.len(), 7);
    }
}
