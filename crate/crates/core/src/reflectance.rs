//! Anisotropic spherical-Gaussian reflectance and the per-pixel image model.
//!
//! A pixel renders as `m = e · s · (ρˢ + ρᵈ) · max(n·l, 0)`, with the
//! specular part a weighted sum of lobes
//! `ρˢ = Σ cᵏ exp(−rˣₖ (h·x)² − rʸₖ (h·y)²)` in the tangent frame
//! `x = Nor(V − (V·n) n)`, `y = n × x`, view direction `V = [0, 0, 1]`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, AutodiffError, CustomOp, Dual, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

pub const VIEW_DIR: Vec3 = [0.0, 0.0, 1.0];
pub const DEFAULT_BASES: usize = 12;
pub const WIDTH_MIN: f64 = 1.0;
pub const WIDTH_MAX: f64 = 1000.0;
/// Below this tangent length the frame falls back to `x = [1, 0, 0]`.
pub const FRAME_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentFrame {
    pub x: Vec3,
    pub y: Vec3,
    pub n: Vec3,
}

pub fn tangent_frame(n: Vec3) -> TangentFrame {
    let (x, y) = tangent_frame_r(n);
    TangentFrame { x, y, n }
}

impl TangentFrame {
    /// The same frame turned by `angle` radians about `n`.
    pub fn rotated(&self, angle: f64) -> Self {
        let (c, s) = (libm::cos(angle), libm::sin(angle));
        let x = vec3::add(vec3::scale(self.x, c), vec3::scale(self.y, s));
        let y = vec3::cross(self.n, x);
        Self { x, y, n: self.n }
    }
}

/// Tangent and binormal of a unit normal.
pub fn tangent_frame_r<R: Real>(n: [R; 3]) -> ([R; 3], [R; 3]) {
    let nz = n[2];
    let raw = [-(nz * n[0]), -(nz * n[1]), R::cst(1.0) - nz * nz];
    let len = vec3::dot_r(raw, raw).sqrt();
    let x = if len.value() < FRAME_EPS {
        [R::cst(1.0), R::cst(0.0), R::cst(0.0)]
    } else {
        raw.map(|c| c / len)
    };
    (x, vec3::cross_r(n, x))
}

/// `Nor(V + l)` for a unit light direction.
pub fn half_vector(l: Vec3) -> Vec3 {
    vec3::normalize(vec3::add(VIEW_DIR, l))
}

/// Global lobe widths and how many lobes are currently switched on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsgBasisSet {
    rx: Vec<f64>,
    ry: Vec<f64>,
    active: usize,
}

/// Log-uniform widths spanning `[10, 300]`.
pub fn initial_widths(count: usize) -> Vec<f64> {
    let (lo, hi) = (libm::log10(10.0), libm::log10(300.0));
    (0..count)
        .map(|k| {
            let t = if count > 1 {
                k as f64 / (count - 1) as f64
            } else {
                0.0
            };
            libm::pow(10.0, (hi - lo) * t + lo)
        })
        .collect()
}

impl AsgBasisSet {
    pub fn new(rx: Vec<f64>, ry: Vec<f64>) -> Result<Self> {
        if rx.len() != ry.len() {
            return Err(Error::LengthMismatch {
                what: "lobe widths",
                expected: rx.len(),
                got: ry.len(),
            });
        }
        if let Some(w) = rx
            .iter()
            .chain(ry.iter())
            .find(|w| !(WIDTH_MIN..=WIDTH_MAX).contains(*w))
        {
            return Err(Error::Invalid(alloc::format!(
                "lobe width {w} outside [{WIDTH_MIN}, {WIDTH_MAX}]"
            )));
        }
        let active = rx.len();
        Ok(Self { rx, ry, active })
    }

    /// Isotropic lobes at the initial widths, all active.
    pub fn initial(count: usize) -> Self {
        let w = initial_widths(count);
        Self {
            rx: w.clone(),
            ry: w,
            active: count,
        }
    }

    pub fn len(&self) -> usize {
        self.rx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rx.is_empty()
    }

    pub fn rx(&self) -> &[f64] {
        &self.rx
    }

    pub fn ry(&self) -> &[f64] {
        &self.ry
    }

    pub fn active(&self) -> usize {
        self.active
    }

    /// Sets the number of active lobes, starting from scratch.
    pub fn with_active(mut self, active: usize) -> Self {
        self.active = active.min(self.len());
        self
    }

    /// Raises the active count; it never goes down.
    pub fn activate(&mut self, active: usize) {
        self.active = self.active.max(active.min(self.len()));
    }
}

/// Active lobe count at `epoch` for a linear ramp from one lobe to `count`
/// over `ramp_epochs`.
pub fn annealed_active(epoch: usize, ramp_epochs: usize, count: usize) -> usize {
    if count == 0 {
        return 0;
    }
    if epoch >= ramp_epochs {
        return count;
    }
    (1 + epoch * (count - 1) / ramp_epochs).min(count)
}

/// Specular reflectance of one pixel for half vector `h`.
pub fn asg_specular(c: &[f64], frame: &TangentFrame, h: Vec3, bases: &AsgBasisSet) -> f64 {
    let a = vec3::dot(h, frame.x);
    let b = vec3::dot(h, frame.y);
    lobe_sum(c, bases.rx(), bases.ry(), bases.active(), a, b)
}

#[inline]
fn lobe_sum(c: &[f64], rx: &[f64], ry: &[f64], active: usize, a: f64, b: f64) -> f64 {
    let (a2, b2) = (a * a, b * b);
    (0..active.min(c.len()))
        .map(|k| c[k] * libm::exp(-rx[k] * a2 - ry[k] * b2))
        .sum()
}

/// `e · s · (ρˢ + ρᵈ) · max(n·l, 0)`.
pub fn render_pixel(rho_d: f64, rho_s: f64, s: f64, e: f64, n: Vec3, l: Vec3) -> f64 {
    e * s * (rho_s + rho_d) * vec3::dot(n, l).max(0.0)
}

/// Reflectance `ρᵈ + ρˢ(h)` over the visible hemisphere of half vectors,
/// as a `size × size × channels` image. Pixel `(u, v)` holds
/// `h = (hx, hy, √(1 − hx² − hy²))` in the tangent frame, `hx` to the right
/// and `hy` downward; pixels outside the unit disk are zero.
pub fn brdf_sphere(rho_d: &[f64], c: &[f64], bases: &AsgBasisSet, size: usize) -> Vec<f64> {
    let ch = rho_d.len();
    let mut out = vec![0.0; size * size * ch];
    let half = (size as f64 - 1.0) / 2.0;
    for v in 0..size {
        for u in 0..size {
            let a = (u as f64 - half) / half.max(1.0);
            let b = (v as f64 - half) / half.max(1.0);
            if a * a + b * b > 1.0 {
                continue;
            }
            let spec = lobe_sum(c, bases.rx(), bases.ry(), bases.active(), a, b);
            for k in 0..ch {
                out[(v * size + u) * ch + k] = rho_d[k] + spec;
            }
        }
    }
    out
}

/// `(h·x, h·y, n·l)` for raw normal and light vectors; both are normalized.
fn shading_terms<R: Real>(n: [R; 3], l: [R; 3]) -> [R; 3] {
    let n = vec3::normalize_r(n);
    let l = vec3::normalize_r(l);
    let (x, y) = tangent_frame_r(n);
    let h = vec3::normalize_r([l[0], l[1], l[2] + R::cst(1.0)]);
    [vec3::dot_r(h, x), vec3::dot_r(h, y), vec3::dot_r(n, l)]
}

/// Inputs of [`render_on_tape`]. Shapes: `normals [P,3]`, `lights [F,3]`,
/// `intensity [F]`, `shadow [P,F]`, `rho_d [P,C]`, `weights [P,K]`,
/// `rx`, `ry` `[K]`.
#[derive(Clone, Copy, Debug)]
pub struct RenderInputs {
    pub normals: Var,
    pub lights: Var,
    pub intensity: Var,
    pub shadow: Var,
    pub rho_d: Var,
    pub weights: Var,
    pub rx: Var,
    pub ry: Var,
}

impl RenderInputs {
    fn vars(&self) -> [Var; 8] {
        [
            self.normals,
            self.lights,
            self.intensity,
            self.shadow,
            self.rho_d,
            self.weights,
            self.rx,
            self.ry,
        ]
    }
}

struct Snapshot {
    p: usize,
    f: usize,
    c: usize,
    k: usize,
    active: usize,
    normals: Vec<f64>,
    lights: Vec<f64>,
    intensity: Vec<f64>,
    shadow: Vec<f64>,
    rho_d: Vec<f64>,
    weights: Vec<f64>,
    rx: Vec<f64>,
    ry: Vec<f64>,
}

impl Snapshot {
    fn take(tape: &Tape, inp: &RenderInputs, active: usize) -> Result<Self> {
        let shapes: Vec<Vec<usize>> = inp.vars().iter().map(|v| tape.shape(*v).to_vec()).collect();
        let bad = || AutodiffError::Shape {
            primitive: "render",
            shapes: shapes.clone(),
        };
        let (p, f) = match (shapes[0].as_slice(), shapes[1].as_slice()) {
            ([p, 3], [f, 3]) => (*p, *f),
            _ => return Err(bad().into()),
        };
        let c = match shapes[4].as_slice() {
            [q, c] if *q == p => *c,
            _ => return Err(bad().into()),
        };
        let k = match shapes[5].as_slice() {
            [q, k] if *q == p => *k,
            _ => return Err(bad().into()),
        };
        if shapes[2] != [f] || shapes[3] != [p, f] || shapes[6] != [k] || shapes[7] != [k] {
            return Err(bad().into());
        }
        let data = |v: Var| tape.value(v).data().to_vec();
        Ok(Self {
            p,
            f,
            c,
            k,
            active: active.min(k),
            normals: data(inp.normals),
            lights: data(inp.lights),
            intensity: data(inp.intensity),
            shadow: data(inp.shadow),
            rho_d: data(inp.rho_d),
            weights: data(inp.weights),
            rx: data(inp.rx),
            ry: data(inp.ry),
        })
    }

    fn normal(&self, i: usize) -> Vec3 {
        [self.normals[3 * i], self.normals[3 * i + 1], self.normals[3 * i + 2]]
    }

    fn light(&self, j: usize) -> Vec3 {
        [self.lights[3 * j], self.lights[3 * j + 1], self.lights[3 * j + 2]]
    }

    fn weights(&self, i: usize) -> &[f64] {
        &self.weights[i * self.k..(i + 1) * self.k]
    }

    fn forward(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.p * self.f * self.c];
        for i in 0..self.p {
            let n = self.normal(i);
            let c = self.weights(i);
            for j in 0..self.f {
                let [a, b, ndl] = shading_terms(n, self.light(j));
                if ndl <= 0.0 {
                    continue;
                }
                let spec = lobe_sum(c, &self.rx, &self.ry, self.active, a, b);
                let scale = self.intensity[j] * self.shadow[i * self.f + j] * ndl;
                let o = (i * self.f + j) * self.c;
                for ch in 0..self.c {
                    out[o + ch] = scale * (spec + self.rho_d[i * self.c + ch]);
                }
            }
        }
        out
    }
}

struct RenderOp(Snapshot);

impl CustomOp for RenderOp {
    fn name(&self) -> &'static str {
        "render"
    }

    fn vjp(&self, g: &[f64], grads: &mut [Vec<f64>]) {
        let s = &self.0;
        let mut e_k = vec![0.0; s.active];
        for i in 0..s.p {
            let n = s.normal(i);
            let c = s.weights(i);
            let rho_d = &s.rho_d[i * s.c..(i + 1) * s.c];
            for j in 0..s.f {
                let og = &g[(i * s.f + j) * s.c..(i * s.f + j + 1) * s.c];
                if og.iter().all(|x| *x == 0.0) {
                    continue;
                }
                let l = s.light(j);
                let nd: [Dual<6>; 3] = core::array::from_fn(|q| Dual::var(n[q], q));
                let ld: [Dual<6>; 3] = core::array::from_fn(|q| Dual::var(l[q], 3 + q));
                let [a, b, ndl] = shading_terms(nd, ld);
                if ndl.v <= 0.0 {
                    continue;
                }
                let (av, bv) = (a.v, b.v);
                let mut spec = 0.0;
                for k in 0..s.active {
                    e_k[k] = libm::exp(-s.rx[k] * av * av - s.ry[k] * bv * bv);
                    spec += c[k] * e_k[k];
                }
                let e = s.intensity[j];
                let sh = s.shadow[i * s.f + j];
                let esn = e * sh * ndl.v;
                // Σ_c g_c (ρˢ + ρᵈ_c) and Σ_c g_c
                let mut big = 0.0;
                let mut gsum = 0.0;
                for ch in 0..s.c {
                    big += og[ch] * (spec + rho_d[ch]);
                    gsum += og[ch];
                    grads[4][i * s.c + ch] += og[ch] * esn;
                }
                grads[2][j] += big * sh * ndl.v;
                grads[3][i * s.f + j] += big * e * ndl.v;
                let g_ndl = big * e * sh;
                let g_spec = gsum * esn;
                let (mut g_a, mut g_b) = (0.0, 0.0);
                for k in 0..s.active {
                    let ce = c[k] * e_k[k];
                    grads[5][i * s.k + k] += g_spec * e_k[k];
                    grads[6][k] -= g_spec * ce * av * av;
                    grads[7][k] -= g_spec * ce * bv * bv;
                    g_a -= 2.0 * s.rx[k] * av * ce;
                    g_b -= 2.0 * s.ry[k] * bv * ce;
                }
                g_a *= g_spec;
                g_b *= g_spec;
                for q in 0..6 {
                    let d = g_a * a.d[q] + g_b * b.d[q] + g_ndl * ndl.d[q];
                    if q < 3 {
                        grads[0][3 * i + q] += d;
                    } else {
                        grads[1][3 * j + q - 3] += d;
                    }
                }
            }
        }
    }
}

/// Records the rendered stack `[P, F, C]`; only the first `active` lobes
/// contribute.
pub fn render_on_tape(tape: &mut Tape, inputs: RenderInputs, active: usize) -> Result<Var> {
    let snap = Snapshot::take(tape, &inputs, active)?;
    let value = Array::new(&[snap.p, snap.f, snap.c], snap.forward())?;
    let vars = inputs.vars();
    if !tape.is_recording() || !vars.iter().any(|v| tape.requires_grad(*v)) {
        return Ok(tape.constant(value));
    }
    Ok(tape.custom(Box::new(RenderOp(snap)), &vars, value))
}
