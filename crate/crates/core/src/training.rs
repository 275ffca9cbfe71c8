//! Losses, the three-stage schedule, and the optimization driver.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, AdamConfig, AdamState, Array, NamedParam, Tape, Var};
use crate::error::{Error, Result};
use crate::fields::{
    depth_on_tape, init_lights, material_on_tape, Activation, LearnableParams, LightInit, Mlp,
    PositionalEncoder,
};
use crate::geometry::{default_pitch, fit_normals_on_tape, silhouette_normals, Neighbor, PixelGrid};
use crate::observation::ObservationSet;
use crate::reflectance::{annealed_active, render_on_tape, AsgBasisSet, RenderInputs};
use crate::shadow::{shadows_on_tape, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_SAMPLES};
use crate::vec3::Vec3;

/// What happens to the silhouette term when the boundary is not an
/// occluding contour.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SilhouetteFallback {
    #[default]
    DropStage3,
    /// Use `[0, 0, 1]` as the silhouette normal.
    Frontal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShadowMode {
    #[default]
    Differentiable,
    /// Shadow maps computed once from the initial depth and held constant.
    FixedAfterInit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub seed: u64,
    /// Shadow samples per light segment.
    pub samples: usize,
    /// ASG basis count.
    pub bases: usize,
    /// Positional-encoding octaves per coordinate.
    pub octaves: usize,
    pub depth_hidden: Vec<usize>,
    pub material_hidden: Vec<usize>,
    pub activation: Activation,
    pub stage_epochs: [usize; 3],
    pub lambda: f64,
    pub lambda_n: f64,
    pub lambda_si: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Epochs over which active lobes ramp from one to all; stage 1 when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anneal_epochs: Option<usize>,
    pub light_init: LightInit,
    pub non_occluding_silhouette: bool,
    pub silhouette_fallback: SilhouetteFallback,
    pub shadows: ShadowMode,
    /// Tie `ry` to `rx` for every lobe.
    pub isotropic: bool,
    pub adam: AdamConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: DEFAULT_SAMPLES,
            bases: 12,
            octaves: 10,
            depth_hidden: vec![128; 4],
            material_hidden: vec![128; 4],
            activation: Activation::Softplus,
            stage_epochs: [500, 1000, 500],
            lambda: 0.01,
            lambda_n: 0.02,
            lambda_si: 0.01,
            lr_start: 1e-3,
            lr_end: 1e-4,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            anneal_epochs: None,
            light_init: LightInit::default(),
            non_occluding_silhouette: false,
            silhouette_fallback: SilhouetteFallback::DropStage3,
            shadows: ShadowMode::Differentiable,
            isotropic: false,
            adam: AdamConfig::default(),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Invalid(format!("config: {what}")));
        if self.samples == 0 {
            return bad("samples must be positive");
        }
        if self.bases == 0 || self.octaves == 0 {
            return bad("bases and octaves must be positive");
        }
        if self.depth_hidden.contains(&0) || self.material_hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if [self.lambda, self.lambda_n, self.lambda_si]
            .iter()
            .any(|x| !(*x >= 0.0 && x.is_finite()))
        {
            return bad("loss weights must be finite and non-negative");
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0 && self.lr_start.is_finite()) {
            return bad("learning rates must be positive");
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return bad("alpha and beta must be finite");
        }
        Ok(())
    }

    pub fn schedule(&self) -> StageSchedule {
        StageSchedule {
            epochs: self.stage_epochs,
            lr_start: self.lr_start,
            lr_end: self.lr_end,
        }
    }

    /// Sets the stage lengths to `total` epochs split 1:2:1.
    pub fn with_total_epochs(mut self, total: usize) -> Self {
        let s1 = total / 4;
        let s2 = total / 2;
        self.stage_epochs = [s1, s2, total - s1 - s2];
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageSchedule {
    pub epochs: [usize; 3],
    pub lr_start: f64,
    pub lr_end: f64,
}

impl StageSchedule {
    pub fn total(&self) -> usize {
        self.epochs.iter().sum()
    }

    /// Stage (1, 2 or 3) of `epoch`, or `None` past the end.
    pub fn stage(&self, epoch: usize) -> Option<u8> {
        let [a, b, c] = self.epochs;
        if epoch < a {
            Some(1)
        } else if epoch < a + b {
            Some(2)
        } else if epoch < a + b + c {
            Some(3)
        } else {
            None
        }
    }

    /// Single-cycle cosine decay from `lr_start` at epoch 0 toward `lr_end`.
    pub fn lr(&self, epoch: usize) -> f64 {
        let t = self.total().max(1) as f64;
        let c = libm::cos(core::f64::consts::PI * epoch as f64 / t);
        self.lr_end + 0.5 * (self.lr_start - self.lr_end) * (1.0 + c)
    }
}

/// `L1` image loss over the masked pixels. `rendered` and `observed` are
/// `[P, F, C]`; `weights` is `[P, F]` with 0 for entries left out of the
/// loss.
pub fn loss_ir(tape: &mut Tape, rendered: Var, observed: Var, weights: Option<&Array>) -> Result<Var> {
    let shape = tape.shape(rendered).to_vec();
    if shape.len() != 3 || shape[0] == 0 {
        return Err(Error::EmptyMask);
    }
    let diff = tape.sub(rendered, observed)?;
    let abs = tape.abs(diff);
    match weights {
        None => Ok(tape.mean(abs)?),
        Some(w) => {
            let kept: f64 = w.data().iter().sum();
            if kept == 0.0 {
                return Err(Error::Invalid("every observation is excluded from the loss".into()));
            }
            let w3 = Array::new(&[shape[0], shape[1], 1], w.data().to_vec())?;
            let w3 = tape.constant(w3);
            let masked = tape.mul(abs, w3)?;
            let total = tape.sum(masked);
            Ok(tape.mul_scalar(total, 1.0 / (kept * shape[2] as f64)))
        }
    }
}

/// Finite-difference stencil for `∂/∂u + ∂/∂v` on a masked grid: forward
/// differences in pixel units, one-sided backward at the border, zero when
/// a pixel has no neighbor along an axis.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothStencil {
    u: [Vec<usize>; 2],
    v: [Vec<usize>; 2],
}

impl SmoothStencil {
    pub fn new(grid: &PixelGrid) -> Self {
        let pix = |nb: Neighbor| match nb {
            Neighbor::Pixel(p) => Some(p),
            _ => None,
        };
        // neighbor slots: up, left, down, right
        let axis = |back: usize, fwd: usize| {
            let mut plus = Vec::with_capacity(grid.len());
            let mut minus = Vec::with_capacity(grid.len());
            for i in 0..grid.len() {
                let nb = grid.neighbors(i);
                let (a, b) = match (pix(nb[fwd]), pix(nb[back])) {
                    (Some(f), _) => (f, i),
                    (None, Some(b)) => (i, b),
                    (None, None) => (i, i),
                };
                plus.push(a);
                minus.push(b);
            }
            [plus, minus]
        };
        Self {
            u: axis(1, 3),
            v: axis(0, 2),
        }
    }

    pub fn len(&self) -> usize {
        self.u[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.u[0].is_empty()
    }

    /// `(1/P) Σᵢ ‖∂X/∂u + ∂X/∂v‖₁` for `X` of shape `[P]` or `[P, D]`.
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let p = self.len();
        let x = if tape.shape(x).len() == 1 {
            tape.reshape(x, &[p, 1])?
        } else {
            x
        };
        let mut diffs = [x; 2];
        for (slot, [plus, minus]) in [&self.u, &self.v].into_iter().enumerate() {
            let a = tape.gather_rows(x, plus)?;
            let b = tape.gather_rows(x, minus)?;
            diffs[slot] = tape.sub(a, b)?;
        }
        let s = tape.add(diffs[0], diffs[1])?;
        let abs = tape.abs(s);
        let total = tape.sum(abs);
        Ok(tape.mul_scalar(total, 1.0 / p.max(1) as f64))
    }
}

/// Unweighted smoothness terms, each `(1/P) Σ ‖∂/∂u + ∂/∂v‖₁`.
#[derive(Clone, Copy, Debug)]
pub struct SmoothTerms {
    pub albedo: Var,
    pub depth: Var,
    pub normal: Var,
}

pub fn loss_smooth(tape: &mut Tape, stencil: &SmoothStencil, albedo: Var, depth: Var, normals: Var) -> Result<SmoothTerms> {
    Ok(SmoothTerms {
        albedo: stencil.apply(tape, albedo)?,
        depth: stencil.apply(tape, depth)?,
        normal: stencil.apply(tape, normals)?,
    })
}

/// Mean `1 − cos` between estimated normals (rows of `[P, 3]`, picked by
/// `index`) and the fitted silhouette normals. Zero for an empty set.
pub fn loss_silhouette(tape: &mut Tape, normals: Var, index: &[usize], fitted: &[Vec3]) -> Result<Var> {
    if index.len() != fitted.len() {
        return Err(Error::LengthMismatch {
            what: "silhouette normals",
            expected: index.len(),
            got: fitted.len(),
        });
    }
    if index.is_empty() {
        return Ok(tape.constant(Array::scalar(0.0)));
    }
    let est = tape.gather_rows(normals, index)?;
    let sq = tape.mul(est, est)?;
    let len2 = tape.sum_axis(sq, 1)?;
    let len = tape.sqrt(len2);
    let fit = tape.constant(Array::from_vec3s(fitted));
    let prod = tape.mul(est, fit)?;
    let dot = tape.sum_axis(prod, 1)?;
    let cos = tape.div(dot, len)?;
    let mean = tape.mean(cos)?;
    let neg = tape.neg(mean);
    Ok(tape.add_scalar(neg, 1.0))
}

/// One history row. Terms are logged already weighted, so `total` is their
/// sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: u8,
    pub lr: f64,
    pub total: f64,
    pub ir: f64,
    pub silhouette: f64,
    pub smooth_albedo: f64,
    pub smooth_depth: f64,
    pub smooth_normal: f64,
}

impl EpochLog {
    pub fn component_sum(&self) -> f64 {
        self.ir + self.silhouette + self.smooth_albedo + self.smooth_depth + self.smooth_normal
    }
}

/// Everything needed to continue a solve bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveState {
    pub seed: u64,
    pub epoch: usize,
    pub depth_mlp: Mlp,
    pub material_mlp: Mlp,
    pub params: LearnableParams,
    pub adam: AdamState,
    pub history: Vec<EpochLog>,
    /// `[P, F]` shadow maps when they are held fixed.
    pub frozen_shadows: Option<Array>,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub grid: PixelGrid,
    pub pitch: f64,
    /// Masked-pixel depth.
    pub depth: Vec<f64>,
    pub normals: Vec<Vec3>,
    pub lights: Vec<Vec3>,
    pub intensities: Vec<f64>,
    /// `[P, F]` soft visibility.
    pub shadows: Vec<f64>,
    /// `[P, C]`.
    pub albedo: Vec<f64>,
    /// `[P, K]`.
    pub lobe_weights: Vec<f64>,
    pub bases: AsgBasisSet,
    pub alpha: f64,
    pub beta: f64,
    pub history: Vec<EpochLog>,
    /// No silhouette pixels were found, so the silhouette term was zero.
    pub silhouette_empty: bool,
}

struct Forward {
    depth: Var,
    normals: Var,
    shadows: Var,
    albedo: Var,
    weights: Var,
    total: Var,
    log: EpochLog,
    handles: Handles,
}

struct Handles {
    depth: Vec<Var>,
    material: Vec<Var>,
    lights: Var,
    log_intensity: Var,
    log_rx: Var,
    log_ry: Var,
    alpha: Var,
    beta: Var,
}

pub struct Solver {
    config: SolveConfig,
    schedule: StageSchedule,
    grid: PixelGrid,
    pitch: f64,
    channels: usize,
    code: Array,
    observed: Array,
    loss_weights: Option<Array>,
    stencil: SmoothStencil,
    silhouette_index: Vec<usize>,
    silhouette_normals: Vec<Vec3>,
    state: SolveState,
}

impl Solver {
    pub fn new(obs: &ObservationSet, config: SolveConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let code_len = PositionalEncoder::new(config.octaves).output_len();
        let mut depth_widths = vec![code_len];
        depth_widths.extend_from_slice(&config.depth_hidden);
        depth_widths.push(1);
        let mut depth_mlp = Mlp::new(&depth_widths, config.activation, &mut rng)?;
        // flat initial surface
        let last = depth_mlp.layers() - 1;
        depth_mlp.weight_mut(last).data_mut().fill(0.0);
        let mut mat_widths = vec![code_len];
        mat_widths.extend_from_slice(&config.material_hidden);
        mat_widths.push(obs.channels + config.bases);
        let material_mlp = Mlp::new(&mat_widths, config.activation, &mut rng)?;
        let (lights, intensities) =
            init_lights(&config.light_init, obs.truth.lights.as_deref(), obs.len(), &mut rng)?;
        if lights.windows(2).all(|w| w[0] == w[1]) {
            log::warn!("all initial light directions are identical");
        }
        let mut params = LearnableParams::new(lights, &intensities, config.bases, config.alpha, config.beta)?;
        if config.isotropic {
            params.log_ry = params.log_rx.clone();
        }
        let state = SolveState {
            seed: config.seed,
            epoch: 0,
            depth_mlp,
            material_mlp,
            params,
            adam: AdamState::default(),
            history: Vec::new(),
            frozen_shadows: None,
        };
        Self::resume(obs, config, state)
    }

    pub fn resume(obs: &ObservationSet, config: SolveConfig, state: SolveState) -> Result<Self> {
        config.validate()?;
        if obs.len() < 3 {
            return Err(Error::Invalid(format!(
                "need at least 3 images, got {}",
                obs.len()
            )));
        }
        if state.params.light_dirs.len() != obs.len() {
            return Err(Error::LengthMismatch {
                what: "lights in state",
                expected: obs.len(),
                got: state.params.light_dirs.len(),
            });
        }
        let grid = obs.grid()?;
        let pitch = default_pitch(obs.width(), obs.height());
        let code = PositionalEncoder::new(config.octaves).encode_grid(&grid);
        let (p, f, c) = (grid.len(), obs.len(), obs.channels);
        let observed = Array::new(&[p, f, c], obs.masked_stack(&grid))?;
        let loss_weights = match obs.excluded {
            Some(_) => Some(Array::new(&[p, f], obs.loss_weights(&grid))?),
            None => None,
        };
        let sil = silhouette_normals(&grid);
        let frontal = config.non_occluding_silhouette && config.silhouette_fallback == SilhouetteFallback::Frontal;
        let (silhouette_index, silhouette_normals) = sil
            .normals
            .iter()
            .map(|&(i, n)| (i, if frontal { [0.0, 0.0, 1.0] } else { n }))
            .unzip();
        let stencil = SmoothStencil::new(&grid);
        Ok(Self {
            schedule: config.schedule(),
            config,
            grid,
            pitch,
            channels: c,
            code,
            observed,
            loss_weights,
            stencil,
            silhouette_index,
            silhouette_normals,
            state,
        })
    }

    pub fn config(&self) -> &SolveConfig {
        &self.config
    }

    pub fn state(&self) -> &SolveState {
        &self.state
    }

    pub fn epoch(&self) -> usize {
        self.state.epoch
    }

    pub fn is_done(&self) -> bool {
        self.state.epoch >= self.schedule.total()
    }

    pub fn silhouette_empty(&self) -> bool {
        self.silhouette_index.is_empty()
    }

    fn active_lobes(&self, epoch: usize) -> usize {
        let ramp = self.config.anneal_epochs.unwrap_or(self.config.stage_epochs[0]);
        annealed_active(epoch, ramp, self.config.bases)
    }

    fn forward(&mut self, tape: &mut Tape, epoch: usize, stage: u8) -> Result<Forward> {
        let st = &self.state;
        let dvars = st.depth_mlp.register(tape);
        let mvars = st.material_mlp.register(tape);
        let code = tape.constant(self.code.clone());
        let depth = depth_on_tape(&st.depth_mlp, tape, &dvars, code)?;
        let normals = fit_normals_on_tape(tape, &self.grid, depth, self.pitch)?;
        let p = &st.params;
        let f = p.light_dirs.len();
        let k = p.log_rx.len();
        let lights = tape.param(Array::from_vec3s(&p.light_dirs));
        let log_intensity = tape.param(Array::from_vec(p.log_intensity.clone()));
        let log_rx = tape.param(Array::from_vec(p.log_rx.clone()));
        let log_ry = tape.param(Array::from_vec(p.log_ry.clone()));
        let alpha = tape.param(Array::scalar(p.alpha));
        let beta = tape.param(Array::scalar(p.beta));
        let shadows = match self.config.shadows {
            ShadowMode::Differentiable => shadows_on_tape(
                tape,
                &self.grid,
                depth,
                lights,
                alpha,
                beta,
                self.pitch,
                self.config.samples,
            )?,
            ShadowMode::FixedAfterInit => {
                if self.state.frozen_shadows.is_none() {
                    let s = shadows_on_tape(
                        tape,
                        &self.grid,
                        depth,
                        lights,
                        alpha,
                        beta,
                        self.pitch,
                        self.config.samples,
                    )?;
                    self.state.frozen_shadows = Some(tape.value(s).clone());
                }
                let frozen = self.state.frozen_shadows.clone().expect("set above");
                tape.constant(frozen)
            }
        };
        let st = &self.state;
        let (albedo, weights) = material_on_tape(&st.material_mlp, tape, &mvars, code, self.channels)?;
        let intensity = tape.exp(log_intensity);
        let rx = tape.exp(log_rx);
        let ry = if self.config.isotropic { rx } else { tape.exp(log_ry) };
        let rendered = render_on_tape(
            tape,
            RenderInputs {
                normals,
                lights,
                intensity,
                shadow: shadows,
                rho_d: albedo,
                weights,
                rx,
                ry,
            },
            self.active_lobes(epoch),
        )?;
        debug_assert_eq!(tape.shape(rendered)[1], f);
        debug_assert_eq!(tape.shape(weights)[1], k);
        let observed = tape.constant(self.observed.clone());
        let ir = loss_ir(tape, rendered, observed, self.loss_weights.as_ref())?;

        let cfg = &self.config;
        let use_si = !(stage == 3
            && cfg.non_occluding_silhouette
            && cfg.silhouette_fallback == SilhouetteFallback::DropStage3);
        let zero = || 0.0;
        let mut log = EpochLog {
            epoch,
            stage,
            lr: self.schedule.lr(epoch),
            total: 0.0,
            ir: tape.value(ir).item(),
            silhouette: zero(),
            smooth_albedo: zero(),
            smooth_depth: zero(),
            smooth_normal: zero(),
        };
        check(log.ir, epoch, "image")?;
        let mut total = ir;
        if use_si && cfg.lambda_si > 0.0 && !self.silhouette_index.is_empty() {
            let si = loss_silhouette(tape, normals, &self.silhouette_index, &self.silhouette_normals)?;
            let si = tape.mul_scalar(si, cfg.lambda_si);
            log.silhouette = tape.value(si).item();
            check(log.silhouette, epoch, "silhouette")?;
            total = tape.add(total, si)?;
        }
        let (w_albedo, w_depth, w_normal) = match stage {
            1 => (cfg.lambda, cfg.lambda, cfg.lambda_n),
            2 => (0.0, 0.0, cfg.lambda),
            _ => (0.0, 0.0, 0.0),
        };
        for (weight, x, slot, name) in [
            (w_albedo, albedo, 0, "albedo smoothness"),
            (w_depth, depth, 1, "depth smoothness"),
            (w_normal, normals, 2, "normal smoothness"),
        ] {
            if weight == 0.0 {
                continue;
            }
            let term = self.stencil.apply(tape, x)?;
            let term = tape.mul_scalar(term, weight);
            let value = tape.value(term).item();
            check(value, epoch, name)?;
            match slot {
                0 => log.smooth_albedo = value,
                1 => log.smooth_depth = value,
                _ => log.smooth_normal = value,
            }
            total = tape.add(total, term)?;
        }
        log.total = tape.value(total).item();
        check(log.total, epoch, "total")?;
        Ok(Forward {
            depth,
            normals,
            shadows,
            albedo,
            weights,
            total,
            log,
            handles: Handles {
                depth: dvars.weights.iter().chain(dvars.biases.iter()).copied().collect(),
                material: mvars.weights.iter().chain(mvars.biases.iter()).copied().collect(),
                lights,
                log_intensity,
                log_rx,
                log_ry,
                alpha,
                beta,
            },
        })
    }

    /// Runs one epoch: forward, backward, Adam step, projection.
    pub fn step(&mut self) -> Result<EpochLog> {
        let epoch = self.state.epoch;
        let stage = self
            .schedule
            .stage(epoch)
            .ok_or_else(|| Error::Invalid("schedule already finished".into()))?;
        let mut tape = Tape::new();
        let fw = self.forward(&mut tape, epoch, stage)?;
        tape.backward(fw.total)?;
        let h = &fw.handles;
        let grad = |v: Var| {
            tape.grad(v)
                .unwrap_or_else(|| Array::zeros(tape.shape(v)))
        };
        let g_depth: Vec<Array> = h.depth.iter().map(|v| grad(*v)).collect();
        let g_mat: Vec<Array> = h.material.iter().map(|v| grad(*v)).collect();
        let mut g_extra = [
            grad(h.lights),
            grad(h.log_intensity),
            grad(h.log_rx),
            grad(h.log_ry),
            grad(h.alpha),
            grad(h.beta),
        ];
        if self.config.isotropic {
            g_extra[3] = Array::zeros(g_extra[3].shape());
        }
        let p = &self.state.params;
        let mut extra = [
            Array::from_vec3s(&p.light_dirs),
            Array::from_vec(p.log_intensity.clone()),
            Array::from_vec(p.log_rx.clone()),
            Array::from_vec(p.log_ry.clone()),
            Array::scalar(p.alpha),
            Array::scalar(p.beta),
        ];
        const NAMES: [&str; 6] = ["lights", "log_intensity", "log_rx", "log_ry", "alpha", "beta"];
        let mut adam = Adam {
            config: self.config.adam,
            state: core::mem::take(&mut self.state.adam),
        };
        let st = &mut self.state;
        let mut named: Vec<NamedParam<'_>> = Vec::new();
        for (value, g) in st.depth_mlp.tensors_mut().zip(g_depth.iter()) {
            named.push(NamedParam { name: "depth network", value, grad: g });
        }
        for (value, g) in st.material_mlp.tensors_mut().zip(g_mat.iter()) {
            named.push(NamedParam { name: "material network", value, grad: g });
        }
        for ((value, g), name) in extra.iter_mut().zip(g_extra.iter()).zip(NAMES) {
            named.push(NamedParam { name, value, grad: g });
        }
        let stepped = adam.step(&mut named, fw.log.lr);
        drop(named);
        st.adam = adam.state;
        stepped?;
        let [l, e, rx, ry, a, b] = extra;
        st.params.light_dirs = l.to_vec3s();
        st.params.log_intensity = e.into_data();
        st.params.log_rx = rx.into_data();
        st.params.log_ry = if self.config.isotropic {
            st.params.log_rx.clone()
        } else {
            ry.into_data()
        };
        st.params.alpha = a.item();
        st.params.beta = b.item();
        st.params.project();
        if self.config.isotropic {
            st.params.log_ry = st.params.log_rx.clone();
        }
        st.history.push(fw.log);
        st.epoch += 1;
        Ok(fw.log)
    }

    /// Runs every remaining epoch.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    /// Evaluates the current parameters into output maps.
    pub fn result(&mut self) -> Result<SolveResult> {
        let mut tape = Tape::detached();
        let epoch = self.state.epoch;
        let stage = self.schedule.stage(epoch).unwrap_or(3);
        let fw = self.forward(&mut tape, epoch, stage)?;
        let p = &self.state.params;
        let active = self.active_lobes(epoch);
        Ok(SolveResult {
            grid: self.grid.clone(),
            pitch: self.pitch,
            depth: tape.value(fw.depth).data().to_vec(),
            normals: tape.value(fw.normals).to_vec3s(),
            lights: p.light_dirs.clone(),
            intensities: p.intensities(),
            shadows: tape.value(fw.shadows).data().to_vec(),
            albedo: tape.value(fw.albedo).data().to_vec(),
            lobe_weights: tape.value(fw.weights).data().to_vec(),
            bases: p.bases().with_active(active),
            alpha: p.alpha,
            beta: p.beta,
            history: self.state.history.clone(),
            silhouette_empty: self.silhouette_index.is_empty(),
        })
    }
}

fn check(value: f64, epoch: usize, term: &'static str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { epoch, term })
    }
}

/// Runs the full schedule from a fresh initialization.
pub fn solve(obs: &ObservationSet, config: SolveConfig) -> Result<SolveResult> {
    let mut solver = Solver::new(obs, config)?;
    if solver.silhouette_empty() {
        log::warn!("no silhouette pixels; the silhouette term is zero");
    }
    solver.run()?;
    solver.result()
}
