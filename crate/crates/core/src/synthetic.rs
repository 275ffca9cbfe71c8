//! Analytic scenes rendered exactly: closed-form depth and normals, hard
//! cast shadows from ray–sphere intersection or a fine ray march, and the
//! image model evaluated directly. Nothing here shares code with the
//! differentiable shadow or reflectance paths.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{default_pitch, Mask};
use crate::observation::{ObservationSet, Truth};
use crate::vec3::{self, Vec3};

/// Ray-march step for shapes without a closed-form intersection, in pixels.
pub const MARCH_STEP: f64 = 0.1;

/// Hemisphere radius of the reference scene, in world units.
pub const DEFAULT_RADIUS: f64 = 0.55;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Shape {
    Plane,
    /// Half sphere centered on the floor, bulging toward the camera.
    HemisphereOnPlane { radius: f64 },
    /// Whole sphere resting on the floor.
    SphereOnPlane { radius: f64 },
    /// Half sphere with no floor; the mask is its disk.
    Hemisphere { radius: f64 },
    GaussianBump { height: f64, sigma: f64 },
    /// Two gaussian bumps side by side along `x`.
    DoubleBump {
        height: f64,
        sigma: f64,
        separation: f64,
    },
}

/// One specular lobe `weight · exp(−rx (h·x)² − ry (h·y)²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lobe {
    pub weight: f64,
    pub rx: f64,
    pub ry: f64,
}

/// Uniform material: diffuse albedo per channel plus shared lobes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub albedo: Vec<f64>,
    #[serde(default)]
    pub lobes: Vec<Lobe>,
}

impl Material {
    pub fn lambertian(albedo: Vec<f64>) -> Self {
        Self {
            albedo,
            lobes: Vec::new(),
        }
    }

    pub fn isotropic(albedo: Vec<f64>, weight: f64, sharpness: f64) -> Self {
        Self::anisotropic(albedo, weight, sharpness, sharpness)
    }

    pub fn anisotropic(albedo: Vec<f64>, weight: f64, rx: f64, ry: f64) -> Self {
        Self {
            albedo,
            lobes: vec![Lobe { weight, rx, ry }],
        }
    }

    pub fn channels(&self) -> usize {
        self.albedo.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticScene {
    pub width: usize,
    pub height: usize,
    pub shape: Shape,
    pub material: Material,
    pub lights: Vec<Vec3>,
    pub intensities: Vec<f64>,
}

/// World-space surface sample: camera distance `w` and unit normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub w: f64,
    pub normal: Vec3,
}

fn gaussian(h: f64, s: f64, x: f64, y: f64) -> (f64, f64, f64) {
    // height z and its x / y slopes
    let z = h * libm::exp(-(x * x + y * y) / (2.0 * s * s));
    (z, -z * x / (s * s), -z * y / (s * s))
}

impl Shape {
    /// Height `z = −w` of the visible surface at world `(x, y)`, or `None`
    /// off the object.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        self.surface(x, y).map(|p| -p.w)
    }

    pub fn surface(&self, x: f64, y: f64) -> Option<SurfacePoint> {
        let flat = SurfacePoint {
            w: 0.0,
            normal: [0.0, 0.0, 1.0],
        };
        let rho2 = x * x + y * y;
        let slope = |z: f64, zx: f64, zy: f64| SurfacePoint {
            w: -z,
            normal: vec3::normalize([-zx, -zy, 1.0]),
        };
        Some(match *self {
            Shape::Plane => flat,
            Shape::HemisphereOnPlane { radius: r } | Shape::Hemisphere { radius: r } => {
                if rho2 < r * r {
                    let z = libm::sqrt(r * r - rho2);
                    SurfacePoint {
                        w: -z,
                        normal: [x / r, y / r, z / r],
                    }
                } else if matches!(self, Shape::Hemisphere { .. }) {
                    return None;
                } else {
                    flat
                }
            }
            Shape::SphereOnPlane { radius: r } => {
                if rho2 < r * r {
                    let z = libm::sqrt(r * r - rho2);
                    SurfacePoint {
                        w: -(r + z),
                        normal: [x / r, y / r, z / r],
                    }
                } else {
                    flat
                }
            }
            Shape::GaussianBump { height, sigma } => {
                let (z, zx, zy) = gaussian(height, sigma, x, y);
                slope(z, zx, zy)
            }
            Shape::DoubleBump {
                height,
                sigma,
                separation,
            } => {
                let (a, ax, ay) = gaussian(height, sigma, x - separation / 2.0, y);
                let (b, bx, by) = gaussian(height, sigma, x + separation / 2.0, y);
                slope(a + b, ax + bx, ay + by)
            }
        })
    }

    /// Sphere `(center, radius)` when the occluder is one.
    fn sphere(&self) -> Option<(Vec3, f64)> {
        match *self {
            Shape::HemisphereOnPlane { radius } | Shape::Hemisphere { radius } => {
                Some(([0.0; 3], radius))
            }
            Shape::SphereOnPlane { radius } => Some(([0.0, 0.0, radius], radius)),
            _ => None,
        }
    }
}

/// Pixel grid geometry shared by rendering and oracles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub pitch: f64,
}

impl Camera {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pitch: default_pitch(width, height),
        }
    }

    /// World `(x, y)` of pixel `(u, v)`; the image center is the origin.
    pub fn world(&self, u: f64, v: f64) -> (f64, f64) {
        (
            (u - (self.width as f64 - 1.0) / 2.0) * self.pitch,
            (v - (self.height as f64 - 1.0) / 2.0) * self.pitch,
        )
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        let hx = (self.width as f64 - 1.0) / 2.0 * self.pitch;
        let hy = (self.height as f64 - 1.0) / 2.0 * self.pitch;
        x.abs() <= hx + 1e-12 && y.abs() <= hy + 1e-12
    }
}

/// Exact visibility against a sphere occluder: `true` when the ray from `p`
/// toward `l` re-enters the sphere.
fn sphere_blocks(center: Vec3, r: f64, p: Vec3, l: Vec3) -> bool {
    let oc = vec3::sub(p, center);
    let b = vec3::dot(oc, l);
    let c = vec3::dot(oc, oc) - r * r;
    let disc = b * b - c;
    if disc <= 0.0 {
        return false;
    }
    let sq = libm::sqrt(disc);
    let eps = 1e-9 * r;
    // p on the sphere: roots are 0 and −2b; the far one counts when ahead
    if c.abs() <= 1e-9 * r * r {
        return -2.0 * b > eps;
    }
    let (t0, t1) = (-b - sq, -b + sq);
    t0 > eps || t1 > eps && c < 0.0
}

/// Hard shadow by marching the ray's image-plane projection in steps of
/// `step` pixels until it leaves the image; `true` means occluded.
pub fn march_shadow(shape: &Shape, cam: &Camera, p: Vec3, l: Vec3, step: f64) -> bool {
    let lxy = libm::hypot(l[0], l[1]);
    if lxy == 0.0 {
        return false;
    }
    let dt = step * cam.pitch / lxy;
    let mut t = dt;
    loop {
        let q = vec3::add(p, vec3::scale(l, t));
        if !cam.inside(q[0], q[1]) {
            return false;
        }
        if let Some(z) = shape.height_at(q[0], q[1]) {
            if z > q[2] + 1e-12 {
                return true;
            }
        }
        t += dt;
    }
}

/// Ground-truth hard shadow of the surface point at world `(x, y)`.
pub fn hard_shadow(shape: &Shape, cam: &Camera, x: f64, y: f64, l: Vec3) -> bool {
    let Some(s) = shape.surface(x, y) else {
        return false;
    };
    let p = [x, y, -s.w];
    match shape.sphere() {
        Some((c, r)) => sphere_blocks(c, r, p, l),
        None => march_shadow(shape, cam, p, l, MARCH_STEP),
    }
}

/// Image value per channel for one pixel, evaluated directly.
pub fn shade(material: &Material, n: Vec3, l: Vec3, e: f64, visible: f64) -> Vec<f64> {
    let ndl = n[0] * l[0] + n[1] * l[1] + n[2] * l[2];
    if ndl <= 0.0 {
        return vec![0.0; material.channels()];
    }
    // tangent frame about the view axis
    let raw = [-n[2] * n[0], -n[2] * n[1], 1.0 - n[2] * n[2]];
    let len = libm::sqrt(raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]);
    let x = if len < 1e-12 {
        [1.0, 0.0, 0.0]
    } else {
        [raw[0] / len, raw[1] / len, raw[2] / len]
    };
    let y = [
        n[1] * x[2] - n[2] * x[1],
        n[2] * x[0] - n[0] * x[2],
        n[0] * x[1] - n[1] * x[0],
    ];
    let hv = [l[0], l[1], l[2] + 1.0];
    let hl = libm::sqrt(hv[0] * hv[0] + hv[1] * hv[1] + hv[2] * hv[2]);
    let h = [hv[0] / hl, hv[1] / hl, hv[2] / hl];
    let hx = h[0] * x[0] + h[1] * x[1] + h[2] * x[2];
    let hy = h[0] * y[0] + h[1] * y[1] + h[2] * y[2];
    let spec: f64 = material
        .lobes
        .iter()
        .map(|lobe| lobe.weight * libm::exp(-lobe.rx * hx * hx - lobe.ry * hy * hy))
        .sum();
    material
        .albedo
        .iter()
        .map(|a| e * visible * (a + spec) * ndl)
        .collect()
}

/// Output of [`render_ground_truth`]; all maps are full-grid, row-major.
#[derive(Clone, Debug)]
pub struct Rendered {
    pub observations: ObservationSet,
    pub camera: Camera,
    pub depth: Vec<f64>,
    pub normals: Vec<Vec3>,
    /// Per light, `true` where the pixel is in cast or attached shadow.
    pub shadows: Vec<Vec<bool>>,
}

pub fn render_ground_truth(scene: &AnalyticScene) -> Result<Rendered> {
    if scene.lights.len() != scene.intensities.len() {
        return Err(Error::LengthMismatch {
            what: "light intensities",
            expected: scene.lights.len(),
            got: scene.intensities.len(),
        });
    }
    if scene.width < 2 || scene.height < 2 {
        return Err(Error::Invalid(format!(
            "scene resolution {}×{} is too small",
            scene.width, scene.height
        )));
    }
    let lights: Vec<Vec3> = scene
        .lights
        .iter()
        .enumerate()
        .map(|(index, l)| {
            let u = vec3::normalize(*l);
            if u[2] > 0.0 {
                Ok(u)
            } else {
                Err(Error::LightBelowHorizon { index, lz: u[2] })
            }
        })
        .collect::<Result<_>>()?;
    let cam = Camera::new(scene.width, scene.height);
    let (w, h) = (scene.width, scene.height);
    let ch = scene.material.channels();
    let mut mask = vec![false; w * h];
    let mut depth = vec![0.0; w * h];
    let mut normals = vec![[0.0, 0.0, 1.0]; w * h];
    let mut shadows = vec![vec![false; w * h]; lights.len()];
    let mut images = vec![vec![0.0; w * h * ch]; lights.len()];
    for v in 0..h {
        for u in 0..w {
            let (x, y) = cam.world(u as f64, v as f64);
            let Some(s) = scene.shape.surface(x, y) else { continue };
            let k = v * w + u;
            mask[k] = true;
            depth[k] = s.w;
            normals[k] = s.normal;
            for (j, l) in lights.iter().enumerate() {
                let blocked = vec3::dot(s.normal, *l) <= 0.0 || hard_shadow(&scene.shape, &cam, x, y, *l);
                shadows[j][k] = blocked;
                let vis = if blocked { 0.0 } else { 1.0 };
                let px = shade(&scene.material, s.normal, *l, scene.intensities[j], vis);
                images[j][k * ch..(k + 1) * ch].copy_from_slice(&px);
            }
        }
    }
    let mask = Mask::new(w, h, mask).expect("mask size");
    let mut observations = ObservationSet::new(mask, ch, images)?;
    observations.truth = Truth {
        normals: Some(normals.clone()),
        lights: Some(lights),
        intensities: Some(scene.intensities.clone()),
    };
    Ok(Rendered {
        observations,
        camera: cam,
        depth,
        normals,
        shadows,
    })
}

/// `count` lights evenly spaced in azimuth at a fixed elevation.
pub fn ring_lights(count: usize, elevation_deg: f64, azimuth_offset_deg: f64) -> Vec<Vec3> {
    let e = elevation_deg.to_radians();
    (0..count)
        .map(|k| {
            let a = (azimuth_offset_deg + 360.0 * k as f64 / count as f64).to_radians();
            [libm::cos(e) * libm::cos(a), libm::cos(e) * libm::sin(a), libm::sin(e)]
        })
        .collect()
}

/// 12 lights on a 40° ring plus 4 random ones (elevation 30°–80°), with
/// intensities drawn from `[0.8, 1.2]`.
pub fn default_lights(seed: u64) -> (Vec<Vec3>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lights = ring_lights(12, 40.0, 15.0);
    for _ in 0..4 {
        let a: f64 = rng.random_range(0.0..core::f64::consts::TAU);
        let e: f64 = rng.random_range(30.0f64..80.0).to_radians();
        lights.push([libm::cos(e) * libm::cos(a), libm::cos(e) * libm::sin(a), libm::sin(e)]);
    }
    let intensities = (0..lights.len()).map(|_| rng.random_range(0.8..1.2)).collect();
    (lights, intensities)
}

/// The desk-scale reference scene: a 64×64 hemisphere on a floor under
/// [`default_lights`].
pub fn default_scene(material: Material, seed: u64) -> AnalyticScene {
    let (lights, intensities) = default_lights(seed);
    AnalyticScene {
        width: 64,
        height: 64,
        shape: Shape::HemisphereOnPlane { radius: DEFAULT_RADIUS },
        material,
        lights,
        intensities,
    }
}

/// Generalized bas-relief transform `G = [[1,0,0],[0,1,0],[μ,ν,λ]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gbr {
    pub mu: f64,
    pub nu: f64,
    pub lambda: f64,
}

impl Gbr {
    pub fn new(mu: f64, nu: f64, lambda: f64) -> Result<Self> {
        if lambda == 0.0 || !lambda.is_finite() {
            return Err(Error::Invalid(format!("GBR needs λ ≠ 0, got {lambda}")));
        }
        Ok(Self { mu, nu, lambda })
    }

    pub fn inverse(&self) -> Self {
        Self {
            mu: -self.mu / self.lambda,
            nu: -self.nu / self.lambda,
            lambda: 1.0 / self.lambda,
        }
    }

    /// `G s` for a scaled light `s = e l`.
    pub fn apply_light(&self, s: Vec3) -> Vec3 {
        [s[0], s[1], self.mu * s[0] + self.nu * s[1] + self.lambda * s[2]]
    }

    /// `G⁻ᵀ b` for a scaled normal `b = ρ n`.
    pub fn apply_normal(&self, b: Vec3) -> Vec3 {
        [
            b[0] - self.mu / self.lambda * b[2],
            b[1] - self.nu / self.lambda * b[2],
            b[2] / self.lambda,
        ]
    }
}

/// Normals, albedos, lights, and intensities after a GBR transform.
#[derive(Clone, Debug, PartialEq)]
pub struct GbrImage {
    pub normals: Vec<Vec3>,
    pub albedo: Vec<f64>,
    pub lights: Vec<Vec3>,
    pub intensities: Vec<f64>,
}

/// Moves lights by `G` and normals by `G⁻ᵀ`; the lengths picked up are
/// absorbed into intensity and albedo, so `ρ e max(n·l, 0)` is unchanged.
pub fn gbr_transform(
    normals: &[Vec3],
    albedo: &[f64],
    lights: &[Vec3],
    intensities: &[f64],
    g: &Gbr,
) -> Result<GbrImage> {
    if normals.len() != albedo.len() || lights.len() != intensities.len() {
        return Err(Error::Invalid("GBR inputs have mismatched lengths".into()));
    }
    let split = |v: Vec3| {
        let n = vec3::norm(v);
        (vec3::scale(v, 1.0 / n), n)
    };
    let (normals, albedo) = normals
        .iter()
        .zip(albedo)
        .map(|(n, a)| split(g.apply_normal(vec3::scale(*n, *a))))
        .unzip();
    let (lights, intensities) = lights
        .iter()
        .zip(intensities)
        .map(|(l, e)| split(g.apply_light(vec3::scale(*l, *e))))
        .unzip();
    Ok(GbrImage {
        normals,
        albedo,
        lights,
        intensities,
    })
}

/// Lambertian images `ρ e max(n·l, 0)` from per-pixel maps, one per light.
pub fn render_lambertian(normals: &[Vec3], albedo: &[f64], lights: &[Vec3], intensities: &[f64]) -> Vec<Vec<f64>> {
    lights
        .iter()
        .zip(intensities)
        .map(|(l, e)| {
            normals
                .iter()
                .zip(albedo)
                .map(|(n, a)| a * e * vec3::dot(*n, *l).max(0.0))
                .collect()
        })
        .collect()
}
