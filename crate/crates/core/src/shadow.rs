//! Differentiable cast shadows from a depth grid.
//!
//! A pixel's shadow ray is sampled uniformly along its projection onto the
//! image plane, from the pixel to where it leaves the image. At every sample
//! the surface depth `w` is bilinearly interpolated and compared with the
//! ray's own depth `ŵ`; the soft visibility is `σ(α · min(w − ŵ) + β)`.
//! Depth is a camera distance, so a surface in front of the ray has
//! `w − ŵ < 0` and drives the visibility toward zero.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Array, AutodiffError, CustomOp, Dual, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::geometry::{bilinear_stencil, blend, DepthField, PixelGrid};
use crate::vec3::{self, Vec3};

pub const DEFAULT_SAMPLES: usize = 64;
pub const DEFAULT_ALPHA: f64 = 400.0;
pub const DEFAULT_BETA: f64 = 3.0;

/// Tolerance, in pixels, for samples landing on the image border.
const BORDER_SLACK: f64 = 1e-9;

/// The straight segment from a surface point toward a light, in
/// `(u, v, w)` coordinates: pixel position plus camera distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LightSegment {
    pub origin: Vec3,
    pub direction: Vec3,
    /// Where the projection leaves the image rectangle.
    pub endpoint: Vec3,
    pub samples: usize,
}

impl LightSegment {
    pub fn new(field: &DepthField, i: usize, l: Vec3, samples: usize) -> Result<Self> {
        let l = unit_light(l, 0)?;
        let (u, v) = field.grid().pixels()[i];
        let (u, v) = (u as f64, v as f64);
        let w = field.masked_depth()[i];
        let origin = [u, v, w];
        let endpoint = match exit_of(u, v, l, field.width(), field.height()) {
            Some(exit) => {
                let (x, y, wh) = ray_point(u, v, w, l, exit, 1.0, field.pitch());
                [x, y, wh]
            }
            None => origin,
        };
        Ok(Self {
            origin,
            direction: l,
            endpoint,
            samples,
        })
    }

    /// Sample `k` of `1..=samples`; `k = 0` would be the origin itself.
    pub fn sample(&self, k: usize) -> Vec3 {
        let t = k as f64 / self.samples as f64;
        vec3::add(self.origin, vec3::scale(vec3::sub(self.endpoint, self.origin), t))
    }

    /// Projected length in pixels.
    pub fn pixel_length(&self) -> f64 {
        let dx = self.endpoint[0] - self.origin[0];
        let dy = self.endpoint[1] - self.origin[1];
        libm::sqrt(dx * dx + dy * dy)
    }

    pub fn is_degenerate(&self) -> bool {
        self.samples == 0 || self.pixel_length() < BORDER_SLACK
    }
}

fn unit_light(l: Vec3, index: usize) -> Result<Vec3> {
    let n = vec3::norm(l);
    let u = vec3::scale(l, 1.0 / n);
    if n.is_nan() || n <= 0.0 || u[2].is_nan() || u[2] <= 0.0 {
        return Err(Error::LightBelowHorizon { index, lz: u[2] });
    }
    Ok(u)
}

/// Image axis the ray leaves through, and the coordinate of that border.
#[derive(Clone, Copy, Debug)]
struct Exit {
    axis: usize,
    bound: f64,
}

fn exit_of(u: f64, v: f64, l: Vec3, width: usize, height: usize) -> Option<Exit> {
    let pos = [u, v];
    let max = [(width - 1) as f64, (height - 1) as f64];
    let mut best: Option<(f64, Exit)> = None;
    for axis in 0..2 {
        let c = l[axis];
        if c == 0.0 {
            continue;
        }
        let bound = if c > 0.0 { max[axis] } else { 0.0 };
        let t = (bound - pos[axis]) / c;
        if best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, Exit { axis, bound }));
        }
    }
    best.map(|(_, e)| e)
}

/// Point at fraction `frac` of the segment, as `(x, y, ŵ)`.
#[inline]
fn ray_point<R: Real>(u: f64, v: f64, w: R, l: [R; 3], exit: Exit, frac: f64, pitch: f64) -> (R, R, R) {
    let pos = [u, v][exit.axis];
    let t_end = R::cst((exit.bound - pos) * pitch) / l[exit.axis];
    let t = t_end.scale(frac);
    let x = R::cst(u) + (t * l[0]).scale(1.0 / pitch);
    let y = R::cst(v) + (t * l[1]).scale(1.0 / pitch);
    (x, y, w - t * l[2])
}

fn inside(x: f64, y: f64, width: usize, height: usize) -> bool {
    x >= -BORDER_SLACK
        && y >= -BORDER_SLACK
        && x <= (width - 1) as f64 + BORDER_SLACK
        && y <= (height - 1) as f64 + BORDER_SLACK
}

struct Occlusion {
    exit: Exit,
    k: usize,
    samples: usize,
    gap: f64,
}

/// Smallest `w − ŵ` over the segment samples, on a full-grid depth image.
#[allow(clippy::too_many_arguments)]
fn scan(
    full: &[f64],
    width: usize,
    height: usize,
    pitch: f64,
    (u, v): (usize, usize),
    w: f64,
    l: Vec3,
    samples: usize,
) -> Option<Occlusion> {
    let (u, v) = (u as f64, v as f64);
    let exit = exit_of(u, v, l, width, height)?;
    let (ex, ey, _) = ray_point(u, v, w, l, exit, 1.0, pitch);
    if libm::hypot(ex - u, ey - v) < BORDER_SLACK {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for k in 1..=samples {
        let (x, y, wh) = ray_point(u, v, w, l, exit, k as f64 / samples as f64, pitch);
        if !inside(x, y, width, height) {
            continue;
        }
        let st = bilinear_stencil(width, height, x, y);
        let c = st.cells.map(|c| full[c]);
        let gap = blend(st.fx, st.fy, c) - wh;
        if best.is_none_or(|(_, g)| gap < g) {
            best = Some((k, gap));
        }
    }
    best.map(|(k, gap)| Occlusion {
        exit,
        k,
        samples,
        gap,
    })
}

/// `min_k (w^k − ŵ^k)` for pixel `i`, or `None` when the segment is empty.
pub fn min_gap(field: &DepthField, i: usize, l: Vec3, samples: usize) -> Result<Option<f64>> {
    let l = unit_light(l, 0)?;
    let grid = field.grid();
    Ok(scan(
        field.full_depth(),
        grid.width(),
        grid.height(),
        field.pitch(),
        grid.pixels()[i],
        field.masked_depth()[i],
        l,
        samples,
    )
    .map(|o| o.gap))
}

/// Soft visibility of pixel `i` under light direction `l`.
pub fn soft_shadow(
    field: &DepthField,
    i: usize,
    l: Vec3,
    alpha: f64,
    beta: f64,
    samples: usize,
) -> Result<f64> {
    let gap = min_gap(field, i, l, samples)?;
    Ok(match gap {
        Some(g) => (alpha * g + beta).sigmoid(),
        None => beta.sigmoid(),
    })
}

/// Soft shadow map of every masked pixel for one light.
pub fn shadow_map(
    field: &DepthField,
    l: Vec3,
    alpha: f64,
    beta: f64,
    samples: usize,
) -> Result<Vec<f64>> {
    (0..field.grid().len())
        .map(|i| soft_shadow(field, i, l, alpha, beta, samples))
        .collect()
}

const N_VARS: usize = 10;

struct ShadowOp {
    lights: usize,
    /// Per (pixel, light): origin pixel and the four stencil pixels.
    slots: Vec<[usize; 5]>,
    /// Per (pixel, light): ds/d(w_i, corners, l, α, β).
    jacobians: Vec<[f64; N_VARS]>,
}

impl CustomOp for ShadowOp {
    fn name(&self) -> &'static str {
        "soft_shadow"
    }

    fn vjp(&self, out_grad: &[f64], input_grads: &mut [Vec<f64>]) {
        let f = self.lights;
        let (mut ga, mut gb) = (0.0, 0.0);
        for (idx, (slot, jac)) in self.slots.iter().zip(self.jacobians.iter()).enumerate() {
            let g = out_grad[idx];
            if g == 0.0 {
                continue;
            }
            let j = idx % f;
            for s in 0..5 {
                input_grads[0][slot[s]] += g * jac[s];
            }
            for c in 0..3 {
                input_grads[1][3 * j + c] += g * jac[5 + c];
            }
            ga += g * jac[8];
            gb += g * jac[9];
        }
        input_grads[2][0] += ga;
        input_grads[3][0] += gb;
    }
}

/// Records the soft shadow of every masked pixel under every light.
///
/// `depth` is `[P]`, `lights` is `[F, 3]` (normalized internally), `alpha`
/// and `beta` are single-element. The result is `[P, F]`.
#[allow(clippy::too_many_arguments)]
pub fn shadows_on_tape(
    tape: &mut Tape,
    grid: &PixelGrid,
    depth: Var,
    lights: Var,
    alpha: Var,
    beta: Var,
    pitch: f64,
    samples: usize,
) -> Result<Var> {
    let p = grid.len();
    let lshape = tape.shape(lights).to_vec();
    if tape.shape(depth) != [p] || lshape.len() != 2 || lshape[1] != 3 {
        return Err(AutodiffError::Shape {
            primitive: "soft_shadow",
            shapes: vec![tape.shape(depth).to_vec(), lshape],
        }
        .into());
    }
    let f = lshape[0];
    let raw = tape.value(lights).to_vec3s();
    let unit: Vec<Vec3> = raw
        .iter()
        .enumerate()
        .map(|(j, &l)| unit_light(l, j))
        .collect::<Result<_>>()?;
    let a = tape.value(alpha).item();
    let b = tape.value(beta).item();
    let d = tape.value(depth).data().to_vec();
    let full = grid.fill_grid(&d);
    let (width, height) = (grid.width(), grid.height());
    let nearest = grid.nearest();
    let want_grad = tape.is_recording()
        && [depth, lights, alpha, beta]
            .iter()
            .any(|v| tape.requires_grad(*v));

    let mut out = Vec::with_capacity(p * f);
    let mut slots = Vec::new();
    let mut jacobians = Vec::new();
    if want_grad {
        slots.reserve(p * f);
        jacobians.reserve(p * f);
    }
    for (i, &(u, v)) in grid.pixels().iter().enumerate() {
        for j in 0..f {
            let occ = scan(&full, width, height, pitch, (u, v), d[i], unit[j], samples);
            let s = match &occ {
                Some(o) => (a * o.gap + b).sigmoid(),
                None => b.sigmoid(),
            };
            out.push(s);
            if !want_grad {
                continue;
            }
            let mut jac = [0.0; N_VARS];
            let mut slot = [i; 5];
            match occ {
                None => jac[9] = s * (1.0 - s),
                Some(o) => {
                    let sd = occlusion_dual(&full, width, height, pitch, (u, v), d[i], raw[j], a, b, &o);
                    jac = sd.0.d;
                    for c in 0..4 {
                        slot[1 + c] = nearest[sd.1[c]];
                    }
                }
            }
            slots.push(slot);
            jacobians.push(jac);
        }
    }
    let value = Array::new(&[p, f], out)?;
    if !want_grad {
        return Ok(tape.constant(value));
    }
    Ok(tape.custom(
        Box::new(ShadowOp {
            lights: f,
            slots,
            jacobians,
        }),
        &[depth, lights, alpha, beta],
        value,
    ))
}

/// Re-evaluates the winning sample with dual numbers; returns the soft
/// shadow with its 10 partials and the four stencil cells.
#[allow(clippy::too_many_arguments)]
fn occlusion_dual(
    full: &[f64],
    width: usize,
    height: usize,
    pitch: f64,
    (u, v): (usize, usize),
    w: f64,
    raw_l: Vec3,
    a: f64,
    b: f64,
    o: &Occlusion,
) -> (Dual<N_VARS>, [usize; 4]) {
    type D = Dual<N_VARS>;
    let (u, v) = (u as f64, v as f64);
    let frac = o.k as f64 / o.samples as f64;
    // stencil chosen from the plain forward point
    let unit = vec3::normalize(raw_l);
    let (x, y, _) = ray_point(u, v, w, unit, o.exit, frac, pitch);
    let st = bilinear_stencil(width, height, x, y);

    let wd = D::var(w, 0);
    let corners: [D; 4] = core::array::from_fn(|c| D::var(full[st.cells[c]], 1 + c));
    let ld = vec3::normalize_r([D::var(raw_l[0], 5), D::var(raw_l[1], 6), D::var(raw_l[2], 7)]);
    let (xd, yd, wh) = ray_point(u, v, wd, ld, o.exit, frac, pitch);
    let u0 = (st.cells[0] % width) as f64;
    let v0 = (st.cells[0] / width) as f64;
    // clamped coordinates have zero derivative along the clamped axis
    let fx = if st.clamped && (x < 0.0 || x > (width - 1) as f64) {
        D::constant(st.fx)
    } else {
        xd - D::cst(u0)
    };
    let fy = if st.clamped && (y < 0.0 || y > (height - 1) as f64) {
        D::constant(st.fy)
    } else {
        yd - D::cst(v0)
    };
    let gap = blend(fx, fy, corners) - wh;
    let s = (D::var(a, 8) * gap + D::var(b, 9)).sigmoid();
    (s, st.cells)
}

#[cfg(test)]
mod tests;
