//! Coordinate networks and the container of every learnable quantity.
//!
//! Pixel coordinates are normalized to `[-1, 1]` per axis and lifted by a
//! sinusoidal positional code before entering the depth and material MLPs.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, Tape, Var};
use crate::error::{Error, Result};
use crate::geometry::PixelGrid;
use crate::reflectance::{initial_widths, AsgBasisSet, WIDTH_MAX, WIDTH_MIN};
use crate::vec3::{self, Vec3};

pub const DEFAULT_OCTAVES: usize = 10;
/// Light directions are kept at least this far above the horizon.
pub const MIN_LIGHT_Z: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionalEncoder {
    pub octaves: usize,
}

impl PositionalEncoder {
    pub fn new(octaves: usize) -> Self {
        Self { octaves }
    }

    /// Code length for a 2-D input.
    pub fn output_len(&self) -> usize {
        4 * self.octaves
    }

    /// `(sin 2ᵏπx, cos 2ᵏπx)` for `k < L`, first for `p[0]`, then `p[1]`.
    pub fn encode(&self, p: [f64; 2]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.output_len());
        self.encode_into(p, &mut out);
        out
    }

    fn encode_into(&self, p: [f64; 2], out: &mut Vec<f64>) {
        for x in p {
            let mut f = PI;
            for _ in 0..self.octaves {
                out.push(libm::sin(f * x));
                out.push(libm::cos(f * x));
                f *= 2.0;
            }
        }
    }

    /// `[P, 4L]` codes of every masked pixel.
    pub fn encode_grid(&self, grid: &PixelGrid) -> Array {
        let mut out = Vec::with_capacity(grid.len() * self.output_len());
        for &(u, v) in grid.pixels() {
            self.encode_into(normalized_coords(u, v, grid.width(), grid.height()), &mut out);
        }
        Array::new(&[grid.len(), self.output_len()], out).expect("code shape")
    }
}

/// Pixel `(u, v)` mapped to `[-1, 1]²`, each axis independently.
pub fn normalized_coords(u: usize, v: usize, width: usize, height: usize) -> [f64; 2] {
    let axis = |x: usize, n: usize| {
        if n < 2 {
            0.0
        } else {
            2.0 * x as f64 / (n - 1) as f64 - 1.0
        }
    };
    [axis(u, width), axis(v, height)]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Softplus,
    Tanh,
}

/// Fully connected network; hidden layers share one activation, the output
/// layer is affine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    /// Layer `k` maps `widths[k]` to `widths[k + 1]`, stored `[in, out]`.
    weights: Vec<Array>,
    biases: Vec<Array>,
}

/// Tape handles of one network's parameters for a single evaluation.
#[derive(Clone, Debug)]
pub struct MlpVars {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        let mut mlp = Self::zeros(widths, activation)?;
        for w in mlp.weights.iter_mut() {
            let (fan_in, fan_out) = (w.shape()[0], w.shape()[1]);
            let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            for x in w.data_mut() {
                *x = rng.random_range(-bound..bound);
            }
        }
        Ok(mlp)
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Invalid(format!("layer widths {widths:?}")));
        }
        let weights = widths
            .windows(2)
            .map(|p| Array::zeros(&[p[0], p[1]]))
            .collect();
        let biases = widths[1..].iter().map(|&n| Array::zeros(&[n])).collect();
        Ok(Self {
            widths: widths.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, layer: usize) -> &Array {
        &self.weights[layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Array {
        &mut self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &Array {
        &self.biases[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut Array {
        &mut self.biases[layer]
    }

    /// Parameter tensors in registration order: all weights, then all biases.
    pub fn tensors(&self) -> impl Iterator<Item = &Array> {
        self.weights.iter().chain(self.biases.iter())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Array> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }

    pub fn register(&self, tape: &mut Tape) -> MlpVars {
        MlpVars {
            weights: self.weights.iter().map(|w| tape.param(w.clone())).collect(),
            biases: self.biases.iter().map(|b| tape.param(b.clone())).collect(),
        }
    }

    /// Applies the network to `x` of shape `[N, input_width]`.
    pub fn forward(&self, tape: &mut Tape, vars: &MlpVars, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers() - 1;
        for k in 0..self.layers() {
            let z = tape.matmul(h, vars.weights[k])?;
            h = tape.add(z, vars.biases[k])?;
            if k < last {
                h = match self.activation {
                    Activation::Softplus => tape.softplus(h),
                    Activation::Tanh => tape.tanh(h),
                };
            }
        }
        Ok(h)
    }

    /// Evaluates a single input row without recording gradients.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::detached();
        let vars = self.register(&mut tape);
        let xv = tape.constant(Array::new(&[1, x.len()], x.to_vec())?);
        let y = self.forward(&mut tape, &vars, xv)?;
        Ok(tape.value(y).data().to_vec())
    }
}

/// Per-pixel depth `[P]` from codes `[P, 4L]`.
pub fn depth_on_tape(mlp: &Mlp, tape: &mut Tape, vars: &MlpVars, code: Var) -> Result<Var> {
    let out = mlp.forward(tape, vars, code)?;
    let p = tape.shape(out)[0];
    Ok(tape.reshape(out, &[p])?)
}

/// Per-pixel diffuse albedo `[P, C]` and lobe weights `[P, K]`, both through
/// softplus. The network's output width must be `C + K`.
pub fn material_on_tape(
    mlp: &Mlp,
    tape: &mut Tape,
    vars: &MlpVars,
    code: Var,
    channels: usize,
) -> Result<(Var, Var)> {
    let raw = mlp.forward(tape, vars, code)?;
    let pos = tape.softplus(raw);
    let width = mlp.output_width();
    let rho_d = tape.slice_cols(pos, 0, channels)?;
    let weights = tape.slice_cols(pos, channels, width)?;
    Ok((rho_d, weights))
}

/// Everything optimized besides the two networks.
///
/// Intensities and lobe widths are stored as logarithms; directions are raw
/// vectors renormalized by [`LearnableParams::project`] after each step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnableParams {
    pub light_dirs: Vec<Vec3>,
    pub log_intensity: Vec<f64>,
    pub log_rx: Vec<f64>,
    pub log_ry: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl LearnableParams {
    pub fn new(lights: Vec<Vec3>, intensities: &[f64], bases: usize, alpha: f64, beta: f64) -> Result<Self> {
        if lights.len() != intensities.len() {
            return Err(Error::LengthMismatch {
                what: "light intensities",
                expected: lights.len(),
                got: intensities.len(),
            });
        }
        if let Some(e) = intensities.iter().find(|e| e.is_nan() || **e <= 0.0) {
            return Err(Error::Invalid(format!("light intensity {e} is not positive")));
        }
        let widths: Vec<f64> = initial_widths(bases).iter().map(|w| libm::log(*w)).collect();
        let mut p = Self {
            light_dirs: lights,
            log_intensity: intensities.iter().map(|e| libm::log(*e)).collect(),
            log_rx: widths.clone(),
            log_ry: widths,
            alpha,
            beta,
        };
        p.project();
        Ok(p)
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.log_intensity.iter().map(|x| libm::exp(*x)).collect()
    }

    pub fn bases(&self) -> AsgBasisSet {
        let exp = |v: &[f64]| v.iter().map(|x| libm::exp(*x)).collect();
        AsgBasisSet::new(exp(&self.log_rx), exp(&self.log_ry)).expect("widths are kept in range")
    }

    /// Restores the constraints: unit light directions in the front
    /// hemisphere and lobe widths within `[1, 1000]`.
    pub fn project(&mut self) {
        for l in self.light_dirs.iter_mut() {
            *l = front_unit(*l);
        }
        let (lo, hi) = (libm::log(WIDTH_MIN), libm::log(WIDTH_MAX));
        for w in self.log_rx.iter_mut().chain(self.log_ry.iter_mut()) {
            *w = w.clamp(lo, hi);
        }
    }
}

fn front_unit(l: Vec3) -> Vec3 {
    let mut u = vec3::normalize(l);
    if vec3::norm(u) == 0.0 {
        return [0.0, 0.0, 1.0];
    }
    if u[2] < MIN_LIGHT_Z {
        let r = libm::hypot(u[0], u[1]);
        let s = libm::sqrt(1.0 - MIN_LIGHT_Z * MIN_LIGHT_Z) / r;
        u = [u[0] * s, u[1] * s, MIN_LIGHT_Z];
    }
    u
}

/// How light directions and intensities are initialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LightInit {
    /// Ground truth turned by a Gaussian angle (degrees) about a random
    /// tangent axis; intensities start at 1.
    Perturbed { sigma_deg: f64 },
    /// Uniform on the front hemisphere; intensities start at 1.
    Hemisphere,
    /// Explicit `(lx, ly, lz, e)` per image.
    Given { lights: Vec<[f64; 4]> },
}

impl Default for LightInit {
    fn default() -> Self {
        LightInit::Perturbed { sigma_deg: 5.0 }
    }
}

pub fn init_lights<R: Rng + ?Sized>(
    init: &LightInit,
    ground_truth: Option<&[Vec3]>,
    count: usize,
    rng: &mut R,
) -> Result<(Vec<Vec3>, Vec<f64>)> {
    let dirs: Vec<Vec3> = match init {
        LightInit::Perturbed { sigma_deg } => {
            let gt = ground_truth.ok_or_else(|| {
                Error::Invalid("perturbed light init needs ground-truth lights".into())
            })?;
            if gt.len() != count {
                return Err(Error::LengthMismatch {
                    what: "ground-truth lights",
                    expected: count,
                    got: gt.len(),
                });
            }
            let normal = Normal::new(0.0, sigma_deg.to_radians())
                .map_err(|e| Error::Invalid(format!("light noise: {e}")))?;
            gt.iter()
                .map(|l| {
                    let theta = normal.sample(rng);
                    let phi = rng.random_range(0.0..core::f64::consts::TAU);
                    rotate_away(vec3::normalize(*l), theta, phi)
                })
                .collect()
        }
        LightInit::Hemisphere => (0..count)
            .map(|_| {
                let z: f64 = rng.random_range(0.0..1.0);
                let phi = rng.random_range(0.0..core::f64::consts::TAU);
                let r = libm::sqrt(1.0 - z * z);
                [r * libm::cos(phi), r * libm::sin(phi), z]
            })
            .collect(),
        LightInit::Given { lights } => {
            if lights.len() != count {
                return Err(Error::LengthMismatch {
                    what: "initial lights",
                    expected: count,
                    got: lights.len(),
                });
            }
            let e: Vec<f64> = lights.iter().map(|l| l[3]).collect();
            let d = lights.iter().map(|l| front_unit([l[0], l[1], l[2]])).collect();
            return Ok((d, e));
        }
    };
    Ok((dirs.into_iter().map(front_unit).collect(), vec![1.0; count]))
}

/// `l` turned by `theta` toward tangent direction `phi`.
fn rotate_away(l: Vec3, theta: f64, phi: f64) -> Vec3 {
    let helper = if l[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let t1 = vec3::normalize(vec3::cross(l, helper));
    let t2 = vec3::cross(l, t1);
    let t = vec3::add(vec3::scale(t1, libm::cos(phi)), vec3::scale(t2, libm::sin(phi)));
    vec3::add(vec3::scale(l, libm::cos(theta)), vec3::scale(t, libm::sin(theta)))
}

/// Parses a light-initialization file: one `lx ly lz e` line per image.
/// Blank lines and `#` comments are ignored.
pub fn parse_light_file(text: &str) -> Result<Vec<[f64; 4]>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<core::result::Result<_, _>>()
            .map_err(|e| Error::Invalid(format!("line {}: {e}", no + 1)))?;
        let row: [f64; 4] = vals.try_into().map_err(|v: Vec<f64>| {
            Error::Invalid(format!("line {}: expected 4 values, got {}", no + 1, v.len()))
        })?;
        out.push(row);
    }
    Ok(out)
}

/// Formats lights in the layout read by [`parse_light_file`].
pub fn format_light_file(dirs: &[Vec3], intensities: &[f64]) -> String {
    let mut s = String::new();
    for (l, e) in dirs.iter().zip(intensities) {
        s.push_str(&format!("{} {} {} {}\n", l[0], l[1], l[2], e));
    }
    s
}
