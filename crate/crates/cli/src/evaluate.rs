//! `eval`: compare a solve directory against a dataset directory.

use std::path::Path;

use photostereo_core::metrics::{angular_errors, e_int, shadow_iou, EvalReport};
use photostereo_core::observation::ObservationSet;
use photostereo_core::vec3::dot;

use crate::dataset::{load_dataset, write_image, ImageFormat};
use crate::error::{write, Error, Result};
use crate::formats::read_png;
use crate::output::{read_outputs, SolveOutputs};
use crate::viz::{error_heatmap, light_map};

pub const REPORT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";
pub const HEATMAP: &str = "error_heatmap.png";
pub const LIGHT_MAP: &str = "light_map.png";
/// Ground-truth hard shadows written by `render`: white = lit. Attached
/// shadows are included.
pub const SHADOW_GT_DIR: &str = "shadow_gt";

/// Heatmap saturation, in degrees.
pub const HEATMAP_MAX_DEG: f64 = 30.0;

pub fn report(obs: &ObservationSet, est: &SolveOutputs, hard_shadows: &[Vec<bool>]) -> Result<EvalReport> {
    let mut r = EvalReport::default();
    let mask = obs.mask.data();
    if let (Some(gt), Some(n)) = (&obs.truth.normals, &est.normals) {
        let pick = |v: &[[f64; 3]]| -> Vec<[f64; 3]> {
            v.iter().zip(mask).filter(|(_, m)| **m).map(|(x, _)| *x).collect()
        };
        let errs = angular_errors(&pick(n), &pick(gt))?;
        r.normal_mae = Some(errs.iter().sum::<f64>() / errs.len() as f64);
    }
    if let (Some(gt), Some(l)) = (&obs.truth.lights, &est.lights) {
        r.light_errors = angular_errors(l, gt)?;
        r.light_mae = Some(r.light_errors.iter().sum::<f64>() / r.light_errors.len() as f64);
    }
    if let (Some(gt), Some(e)) = (&obs.truth.intensities, &est.intensities) {
        r.e_int = Some(e_int(e, gt)?);
    }
    // with known geometry, score cast shadows on front-facing pixels only
    let facing = |j: usize, k: usize| match (&obs.truth.normals, &obs.truth.lights) {
        (Some(n), Some(l)) => dot(n[k], l[j]) > 0.0,
        _ => true,
    };
    for (j, (soft, hard)) in est.shadows.iter().zip(hard_shadows).enumerate() {
        let keep: Vec<usize> = (0..mask.len()).filter(|&k| mask[k] && facing(j, k)).collect();
        let s: Vec<f64> = keep.iter().map(|&k| soft[k]).collect();
        let h: Vec<bool> = keep.iter().map(|&k| hard[k]).collect();
        r.shadow_iou.push(shadow_iou(&s, &h, 0.5)?);
    }
    Ok(r)
}

fn read_hard_shadows(dataset: &Path, count: usize) -> Result<Vec<Vec<bool>>> {
    let dir = dataset.join(SHADOW_GT_DIR);
    let mut out = Vec::new();
    for j in 1..=count {
        let p = dir.join(format!("{j:03}.png"));
        if !p.exists() {
            break;
        }
        out.push(read_png(&p)?.luminance().iter().map(|x| *x < 0.5).collect());
    }
    Ok(out)
}

/// Writes the report, the per-pixel error heatmap and the light map into
/// `out`, and returns the report.
pub fn evaluate(out: &Path, dataset: &Path) -> Result<EvalReport> {
    let obs = load_dataset(dataset)?;
    let est = read_outputs(out)?;
    if est.normals.is_none() && est.lights.is_none() {
        return Err(Error::format(out, "no normal map or light file to evaluate"));
    }
    let hard = read_hard_shadows(dataset, obs.len())?;
    let rep = report(&obs, &est, &hard)?;
    write(&out.join(REPORT), rep.to_text())?;
    write(
        &out.join(REPORT_CSV),
        format!("{}\n{}\n", EvalReport::table_header(), rep.table_row()),
    )?;
    if let (Some(gt), Some(n)) = (&obs.truth.normals, &est.normals) {
        let errs: Vec<f64> = n
            .iter()
            .zip(gt)
            .zip(obs.mask.data())
            .map(|((a, b), m)| {
                if *m {
                    photostereo_core::vec3::angle_deg(*a, *b)
                } else {
                    0.0
                }
            })
            .collect();
        write_image(&out.join(HEATMAP), &error_heatmap(&errs, &obs.mask, HEATMAP_MAX_DEG), ImageFormat::Png8)?;
    }
    if let Some(l) = &est.lights {
        write_image(&out.join(LIGHT_MAP), &light_map(l, obs.truth.lights.as_deref(), 256), ImageFormat::Png8)?;
    }
    Ok(rep)
}
