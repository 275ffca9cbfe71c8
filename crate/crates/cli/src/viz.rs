//! Diagnostic pictures.

use photostereo_core::geometry::Mask;
use photostereo_core::reflectance::{brdf_sphere, AsgBasisSet};
use photostereo_core::vec3::Vec3;

use crate::formats::Image;

/// Blue → cyan → yellow → red ramp for `t` in `[0, 1]`.
pub fn ramp(t: f64) -> [f64; 3] {
    const STOPS: [[f64; 3]; 4] = [[0.0, 0.0, 0.6], [0.0, 0.8, 1.0], [1.0, 0.9, 0.0], [0.8, 0.0, 0.0]];
    let t = t.clamp(0.0, 1.0) * 3.0;
    let k = (t as usize).min(2);
    let f = t - k as f64;
    core::array::from_fn(|c| STOPS[k][c] * (1.0 - f) + STOPS[k + 1][c] * f)
}

/// Per-pixel angular error over the mask, scaled so `max_deg` is red;
/// unmasked pixels are black.
pub fn error_heatmap(errors_full: &[f64], mask: &Mask, max_deg: f64) -> Image {
    let mut img = Image::zeros(mask.width(), mask.height(), 3);
    for (k, e) in errors_full.iter().enumerate() {
        if mask.data()[k] {
            img.data[3 * k..3 * k + 3].copy_from_slice(&ramp(e / max_deg));
        }
    }
    img
}

fn disk(img: &mut Image, cx: f64, cy: f64, r: f64, color: [f64; 3]) {
    let (w, h) = (img.width as isize, img.height as isize);
    let ri = r.ceil() as isize;
    for dv in -ri..=ri {
        for du in -ri..=ri {
            let (u, v) = (cx.round() as isize + du, cy.round() as isize + dv);
            if u < 0 || v < 0 || u >= w || v >= h {
                continue;
            }
            let (dx, dy) = (u as f64 - cx, v as f64 - cy);
            if dx * dx + dy * dy <= r * r {
                img.pixel_mut(u as usize, v as usize).copy_from_slice(&color);
            }
        }
    }
}

/// Lights projected orthographically onto the unit disk seen from the
/// camera: estimates in red, ground truth (if any) in green, joined by a
/// gray segment.
pub fn light_map(est: &[Vec3], truth: Option<&[Vec3]>, size: usize) -> Image {
    let mut img = Image::new(size, size, 3, vec![1.0; size * size * 3]);
    let half = (size as f64 - 1.0) / 2.0;
    let r = half * 0.95;
    for v in 0..size {
        for u in 0..size {
            let (dx, dy) = (u as f64 - half, v as f64 - half);
            let d = (dx * dx + dy * dy).sqrt();
            if (d - r).abs() < 0.7 {
                img.pixel_mut(u, v).copy_from_slice(&[0.3, 0.3, 0.3]);
            }
        }
    }
    let at = |l: Vec3| (half + r * l[0], half + r * l[1]);
    let dot = (size as f64 / 80.0).max(1.5);
    if let Some(gt) = truth {
        for (e, g) in est.iter().zip(gt) {
            let (a, b) = (at(*e), at(*g));
            let steps = ((a.0 - b.0).hypot(a.1 - b.1) * 2.0).ceil().max(1.0) as usize;
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                disk(&mut img, a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t, 0.5, [0.6, 0.6, 0.6]);
            }
        }
        for g in gt {
            let p = at(*g);
            disk(&mut img, p.0, p.1, dot, [0.0, 0.6, 0.0]);
        }
    }
    for e in est {
        let p = at(*e);
        disk(&mut img, p.0, p.1, dot, [0.85, 0.0, 0.0]);
    }
    img
}

/// Reflectance sphere of one pixel's material, normalized to its peak.
pub fn brdf_image(rho_d: &[f64], weights: &[f64], bases: &AsgBasisSet, size: usize) -> Image {
    let c = rho_d.len();
    let mut data = brdf_sphere(rho_d, weights, bases, size);
    let peak = data.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        data.iter_mut().for_each(|x| *x /= peak);
    }
    Image::new(size, size, c, data)
}
