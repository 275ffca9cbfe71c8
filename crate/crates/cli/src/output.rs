//! Files written by `solve` and read back by `eval`.
//!
//! ```text
//! normal.png      16-bit, dataset frame, n mapped from [−1, 1] to [0, 1]
//! normal.pfm      the same normals as floats
//! depth.pfm       camera distance, 0 outside the mask
//! albedo.png      diffuse albedo
//! shadow/NNN.png  soft visibility per light
//! lights.txt      "lx ly lz e" per image, dataset frame
//! history.csv     one row per epoch
//! brdf.png        reflectance sphere at the pixel nearest the mask centroid
//! checkpoint.json final solver state
//! checkpoints/    periodic states
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use photostereo_core::fields::{format_light_file, parse_light_file};
use photostereo_core::geometry::Mask;
use photostereo_core::training::{EpochLog, SolveConfig, SolveResult, SolveState};
use photostereo_core::vec3::{self, Vec3};

use crate::dataset::{decode_normals, flip_y, normal_image, write_image, ImageFormat};
use crate::error::{create_dir, read_to_string, write, Error, Result};
use crate::formats::{read_image, read_png, write_pfm, Image};
use crate::viz::brdf_image;

pub const NORMAL_PNG: &str = "normal.png";
pub const NORMAL_PFM: &str = "normal.pfm";
pub const DEPTH: &str = "depth.pfm";
pub const ALBEDO: &str = "albedo.png";
pub const SHADOW_DIR: &str = "shadow";
pub const LIGHTS: &str = "lights.txt";
pub const HISTORY: &str = "history.csv";
pub const BRDF: &str = "brdf.png";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: SolveConfig,
    pub state: SolveState,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        write(path, text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::format(path, e.to_string()))
    }
}

pub fn periodic_checkpoint_path(out: &Path, epoch: usize) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(format!("epoch_{epoch:05}.json"))
}

fn scatter<const N: usize>(mask: &Mask, values: &[[f64; N]]) -> Image {
    let mut img = Image::zeros(mask.width(), mask.height(), N);
    let mut it = values.iter();
    for (k, &m) in mask.data().iter().enumerate() {
        if m {
            let v = it.next().expect("one value per masked pixel");
            img.data[N * k..N * (k + 1)].copy_from_slice(v);
        }
    }
    img
}

fn full_normals(mask: &Mask, normals: &[Vec3]) -> Vec<Vec3> {
    let mut full = vec![[0.0; 3]; mask.width() * mask.height()];
    let mut it = normals.iter();
    for (k, &m) in mask.data().iter().enumerate() {
        if m {
            full[k] = *it.next().expect("one normal per masked pixel");
        }
    }
    full
}

pub fn write_history(path: &Path, history: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for row in history {
        w.serialize(row).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_history(path: &Path) -> Result<Vec<EpochLog>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Writes every solve output except checkpoints.
pub fn write_result(out: &Path, r: &SolveResult) -> Result<()> {
    create_dir(out)?;
    let mask = r.grid.mask();
    let full = full_normals(mask, &r.normals);
    write_image(&out.join(NORMAL_PNG), &normal_image(&full, mask, true), ImageFormat::Png16)?;
    write_pfm(&out.join(NORMAL_PFM), &normal_image(&full, mask, false))?;
    let depth: Vec<[f64; 1]> = r.depth.iter().map(|d| [*d]).collect();
    write_pfm(&out.join(DEPTH), &scatter(mask, &depth))?;
    let c = r.albedo.len() / r.grid.len().max(1);
    let albedo = Image::new(
        mask.width(),
        mask.height(),
        c,
        {
            let mut data = vec![0.0; mask.width() * mask.height() * c];
            for (i, &(u, v)) in r.grid.pixels().iter().enumerate() {
                let k = v * mask.width() + u;
                data[k * c..(k + 1) * c].copy_from_slice(&r.albedo[i * c..(i + 1) * c]);
            }
            data
        },
    );
    if c == 1 || c == 3 {
        write_image(&out.join(ALBEDO), &albedo, ImageFormat::Png16)?;
    }
    let shadow_dir = out.join(SHADOW_DIR);
    create_dir(&shadow_dir)?;
    let f = r.lights.len();
    for j in 0..f {
        let vals: Vec<[f64; 1]> = (0..r.grid.len()).map(|i| [r.shadows[i * f + j]]).collect();
        write_image(
            &shadow_dir.join(format!("{:03}.png", j + 1)),
            &scatter(mask, &vals),
            ImageFormat::Png16,
        )?;
    }
    let dirs: Vec<Vec3> = r.lights.iter().map(|l| flip_y(*l)).collect();
    write(&out.join(LIGHTS), format_light_file(&dirs, &r.intensities))?;
    write_history(&out.join(HISTORY), &r.history)?;
    if c == 1 || c == 3 {
        let centroid = r.grid.pixels().iter().fold((0.0, 0.0), |a, &(u, v)| (a.0 + u as f64, a.1 + v as f64));
        let n = r.grid.len() as f64;
        let (cu, cv) = (centroid.0 / n, centroid.1 / n);
        let i = (0..r.grid.len())
            .min_by(|&a, &b| {
                let d = |i: usize| {
                    let (u, v) = r.grid.pixels()[i];
                    (u as f64 - cu).powi(2) + (v as f64 - cv).powi(2)
                };
                d(a).total_cmp(&d(b))
            })
            .expect("grid is not empty");
        let k = r.bases.len();
        let img = brdf_image(&r.albedo[i * c..(i + 1) * c], &r.lobe_weights[i * k..(i + 1) * k], &r.bases, 128);
        write_image(&out.join(BRDF), &img, ImageFormat::Png8)?;
    }
    Ok(())
}

/// Estimates read back from a solve directory.
#[derive(Clone, Debug, Default)]
pub struct SolveOutputs {
    /// Full-grid engine-frame normals.
    pub normals: Option<Vec<Vec3>>,
    pub lights: Option<Vec<Vec3>>,
    pub intensities: Option<Vec<f64>>,
    /// Per light, full-grid visibility.
    pub shadows: Vec<Vec<f64>>,
}

pub fn read_outputs(out: &Path) -> Result<SolveOutputs> {
    let mut o = SolveOutputs::default();
    let pfm = out.join(NORMAL_PFM);
    let png = out.join(NORMAL_PNG);
    if pfm.exists() {
        o.normals = Some(decode_normals(&read_image(&pfm)?, false));
    } else if png.exists() {
        o.normals = Some(decode_normals(&read_png(&png)?, true));
    }
    let lights = out.join(LIGHTS);
    if lights.exists() {
        let rows = parse_light_file(&read_to_string(&lights)?).map_err(|e| Error::format(&lights, e.to_string()))?;
        o.lights = Some(rows.iter().map(|r| vec3::normalize(flip_y([r[0], r[1], r[2]]))).collect());
        o.intensities = Some(rows.iter().map(|r| r[3]).collect());
    }
    let dir = out.join(SHADOW_DIR);
    for j in 1.. {
        let p = dir.join(format!("{j:03}.png"));
        if !p.exists() {
            break;
        }
        o.shadows.push(read_png(&p)?.luminance());
    }
    Ok(o)
}
