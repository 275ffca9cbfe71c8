//! DiLiGenT-style directories.
//!
//! ```text
//! filenames.txt            one image file per line (.png or .pfm)
//! light_directions.txt     optional, "lx ly lz" per image
//! light_intensities.txt    optional, "e" or "er eg eb" per image
//! mask.png                 binarized at 0.5
//! normal_gt.pfm            optional 3-channel map (normal_gt.png also read)
//! ```
//!
//! Files use the dataset frame (x right, y up, z toward the camera); the
//! engine's image frame has y down, so y is negated on the way in and out.

use std::path::{Path, PathBuf};

use photostereo_core::geometry::Mask;
use photostereo_core::observation::{ObservationSet, Truth};
use photostereo_core::vec3::{self, Vec3};

use crate::error::{create_dir, read_to_string, write, Error, Result};
use crate::formats::{read_image, read_png, read_table, write_pfm, write_png, BitDepth, Image};

pub const FILENAMES: &str = "filenames.txt";
pub const LIGHT_DIRECTIONS: &str = "light_directions.txt";
pub const LIGHT_INTENSITIES: &str = "light_intensities.txt";
pub const MASK: &str = "mask.png";
pub const NORMAL_GT: &str = "normal_gt.pfm";
pub const NORMAL_GT_PNG: &str = "normal_gt.png";

/// Swaps between the dataset frame and the engine frame (self-inverse).
pub fn flip_y(v: Vec3) -> Vec3 {
    [v[0], -v[1], v[2]]
}

pub fn load_dataset(dir: &Path) -> Result<ObservationSet> {
    let list = read_to_string(&dir.join(FILENAMES))?;
    let names: Vec<&str> = list.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if names.is_empty() {
        return Err(Error::format(dir.join(FILENAMES), "no images listed"));
    }
    let mask_path = dir.join(MASK);
    let mask_img = read_png(&mask_path)?;
    let (w, h) = (mask_img.width, mask_img.height);
    let mask_bits: Vec<bool> = mask_img.luminance().iter().map(|x| *x >= 0.5).collect();
    let mask = Mask::new(w, h, mask_bits).expect("mask size");
    if mask.count() == 0 {
        return Err(Error::format(&mask_path, "mask has no foreground pixels"));
    }
    let mut images = Vec::with_capacity(names.len());
    let mut channels = None;
    for name in &names {
        let path = dir.join(name);
        let img = read_image(&path)?;
        if (img.width, img.height) != (w, h) {
            return Err(Error::format(
                &path,
                format!("image is {}×{}, mask is {w}×{h}", img.width, img.height),
            ));
        }
        match channels {
            None => channels = Some(img.channels),
            Some(c) if c != img.channels => {
                return Err(Error::format(&path, format!("{} channels, expected {c}", img.channels)))
            }
            _ => {}
        }
        images.push(img.data);
    }
    let mut obs = ObservationSet::new(mask, channels.unwrap_or(1), images)?;
    let f = names.len();
    let dirs_path = dir.join(LIGHT_DIRECTIONS);
    if dirs_path.exists() {
        let rows = read_table(&dirs_path)?;
        check_rows(&dirs_path, &rows, f, &[3])?;
        obs.truth.lights = Some(
            rows.iter()
                .map(|r| vec3::normalize(flip_y([r[0], r[1], r[2]])))
                .collect(),
        );
    }
    let int_path = dir.join(LIGHT_INTENSITIES);
    if int_path.exists() {
        let rows = read_table(&int_path)?;
        check_rows(&int_path, &rows, f, &[1, 3])?;
        obs.truth.intensities = Some(rows.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect());
    }
    obs.truth.normals = load_normals(dir, w, h)?;
    Ok(obs)
}

fn check_rows(path: &Path, rows: &[Vec<f64>], count: usize, widths: &[usize]) -> Result<()> {
    if rows.len() != count {
        return Err(Error::format(path, format!("{} rows for {count} images", rows.len())));
    }
    if let Some((k, r)) = rows.iter().enumerate().find(|(_, r)| !widths.contains(&r.len())) {
        return Err(Error::format(path, format!("row {} has {} values", k + 1, r.len())));
    }
    Ok(())
}

fn load_normals(dir: &Path, w: usize, h: usize) -> Result<Option<Vec<Vec3>>> {
    let pfm = dir.join(NORMAL_GT);
    let png = dir.join(NORMAL_GT_PNG);
    let (path, img, encoded) = if pfm.exists() {
        let img = read_image(&pfm)?;
        (pfm, img, false)
    } else if png.exists() {
        let img = read_png(&png)?;
        (png, img, true)
    } else {
        return Ok(None);
    };
    if img.channels != 3 || (img.width, img.height) != (w, h) {
        return Err(Error::format(&path, "normal map must be 3-channel and match the mask"));
    }
    Ok(Some(decode_normals(&img, encoded)))
}

/// Dataset-frame vectors from a 3-channel map; `encoded` maps `[0, 1]` to `[−1, 1]`.
pub fn decode_normals(img: &Image, encoded: bool) -> Vec<Vec3> {
    img.data
        .chunks(3)
        .map(|p| {
            let n = if encoded {
                [2.0 * p[0] - 1.0, 2.0 * p[1] - 1.0, 2.0 * p[2] - 1.0]
            } else {
                [p[0], p[1], p[2]]
            };
            if vec3::norm(n) > 0.0 {
                flip_y(vec3::normalize(n))
            } else {
                [0.0, 0.0, 1.0]
            }
        })
        .collect()
}

/// Full-grid map of engine-frame normals in the dataset frame; unmasked
/// pixels are zero.
pub fn normal_image(normals: &[Vec3], mask: &Mask, encoded: bool) -> Image {
    let mut img = Image::zeros(mask.width(), mask.height(), 3);
    for (k, n) in normals.iter().enumerate() {
        if !mask.data()[k] {
            continue;
        }
        let d = flip_y(*n);
        let px = &mut img.data[3 * k..3 * k + 3];
        for c in 0..3 {
            px[c] = if encoded { 0.5 * (d[c] + 1.0) } else { d[c] };
        }
    }
    img
}

pub fn mask_image(mask: &Mask) -> Image {
    Image::new(
        mask.width(),
        mask.height(),
        1,
        mask.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Png8,
    Png16,
    Pfm,
}

impl ImageFormat {
    fn extension(self) -> &'static str {
        match self {
            ImageFormat::Pfm => "pfm",
            _ => "png",
        }
    }
}

pub fn write_image(path: &Path, img: &Image, format: ImageFormat) -> Result<()> {
    match format {
        ImageFormat::Png8 => write_png(path, img, BitDepth::Eight),
        ImageFormat::Png16 => write_png(path, img, BitDepth::Sixteen),
        ImageFormat::Pfm => write_pfm(path, img),
    }
}

/// Light file lines `lx ly lz` in the dataset frame.
pub fn format_directions(lights: &[Vec3]) -> String {
    lights
        .iter()
        .map(|l| {
            let d = flip_y(*l);
            format!("{:.17e} {:.17e} {:.17e}\n", d[0], d[1], d[2])
        })
        .collect()
}

pub fn format_intensities(e: &[f64]) -> String {
    e.iter().map(|x| format!("{x:.17e}\n")).collect()
}

/// Writes `obs` (and whatever truth it carries) as a dataset directory.
pub fn save_dataset(dir: &Path, obs: &ObservationSet, format: ImageFormat) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let (w, h) = (obs.width(), obs.height());
    let mut names = String::new();
    let mut written = Vec::new();
    for (j, data) in obs.images.iter().enumerate() {
        let name = format!("{:03}.{}", j + 1, format.extension());
        let path = dir.join(&name);
        write_image(&path, &Image::new(w, h, obs.channels, data.clone()), format)?;
        names.push_str(&name);
        names.push('\n');
        written.push(path);
    }
    write(&dir.join(FILENAMES), names)?;
    write_png(&dir.join(MASK), &mask_image(&obs.mask), BitDepth::Eight)?;
    let Truth {
        normals,
        lights,
        intensities,
    } = &obs.truth;
    if let Some(l) = lights {
        write(&dir.join(LIGHT_DIRECTIONS), format_directions(l))?;
    }
    if let Some(e) = intensities {
        write(&dir.join(LIGHT_INTENSITIES), format_intensities(e))?;
    }
    if let Some(n) = normals {
        write_pfm(&dir.join(NORMAL_GT), &normal_image(n, &obs.mask, false))?;
    }
    Ok(written)
}
