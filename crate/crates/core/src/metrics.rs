//! Normal and light accuracy, scale-invariant intensity error, shadow IoU.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

/// Unit-length tolerance before an input vector is renormalized.
pub const UNIT_TOLERANCE: f64 = 1e-9;

fn unit_or_warn(v: Vec3) -> Vec3 {
    let n = vec3::norm(v);
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        log::warn!("non-unit vector {v:?} (norm {n}) normalized before comparison");
        return vec3::normalize(v);
    }
    v
}

/// Angle in degrees between each pair.
pub fn angular_errors(est: &[Vec3], gt: &[Vec3]) -> Result<Vec<f64>> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "vectors to compare",
            expected: gt.len(),
            got: est.len(),
        });
    }
    Ok(est
        .iter()
        .zip(gt)
        .map(|(a, b)| {
            let c = vec3::dot(unit_or_warn(*a), unit_or_warn(*b)).clamp(-1.0, 1.0);
            libm::acos(c).to_degrees()
        })
        .collect())
}

/// Mean angular error in degrees.
pub fn mae_degrees(est: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    let e = angular_errors(est, gt)?;
    if e.is_empty() {
        return Err(Error::Invalid("no vectors to compare".into()));
    }
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// Mean relative intensity error after the least-squares global scale η.
pub fn e_int(e: &[f64], gt: &[f64]) -> Result<f64> {
    if e.len() != gt.len() || e.is_empty() {
        return Err(Error::LengthMismatch {
            what: "intensities",
            expected: gt.len(),
            got: e.len(),
        });
    }
    if let Some(g) = gt.iter().find(|g| g.is_nan() || **g <= 0.0) {
        return Err(Error::Invalid(format!("ground-truth intensity {g} is not positive")));
    }
    let ee: f64 = e.iter().map(|x| x * x).sum();
    if ee == 0.0 {
        return Err(Error::Invalid("all estimated intensities are zero".into()));
    }
    let eta = e.iter().zip(gt).map(|(a, b)| a * b).sum::<f64>() / ee;
    Ok(e.iter().zip(gt).map(|(a, b)| (eta * a - b).abs() / b).sum::<f64>() / e.len() as f64)
}

/// IoU of the shadowed regions: `soft < threshold` against `hard` (true =
/// in shadow). Two empty regions count as a perfect match.
pub fn shadow_iou(soft: &[f64], hard: &[bool], threshold: f64) -> Result<f64> {
    if soft.len() != hard.len() {
        return Err(Error::LengthMismatch {
            what: "shadow map",
            expected: hard.len(),
            got: soft.len(),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (s, h) in soft.iter().zip(hard) {
        let a = *s < threshold;
        inter += usize::from(a && *h);
        union += usize::from(a || *h);
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Whatever could be evaluated; absent ground truth leaves fields empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub normal_mae: Option<f64>,
    pub light_mae: Option<f64>,
    pub e_int: Option<f64>,
    pub light_errors: Vec<f64>,
    pub shadow_iou: Vec<f64>,
}

impl EvalReport {
    /// `key: value` lines; missing metrics are omitted.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(": ");
            s.push_str(&v);
            s.push('\n');
        };
        if let Some(v) = self.normal_mae {
            put("normal_mae_deg", format!("{v:.4}"));
        }
        if let Some(v) = self.light_mae {
            put("light_mae_deg", format!("{v:.4}"));
        }
        if let Some(v) = self.e_int {
            put("e_int", format!("{v:.5}"));
        }
        if !self.light_errors.is_empty() {
            put("light_errors_deg", join(&self.light_errors, 3));
        }
        if !self.shadow_iou.is_empty() {
            let mean = self.shadow_iou.iter().sum::<f64>() / self.shadow_iou.len() as f64;
            put("shadow_iou_mean", format!("{mean:.4}"));
            put("shadow_iou", join(&self.shadow_iou, 4));
        }
        s
    }

    pub fn table_header() -> &'static str {
        "normal_mae_deg,light_mae_deg,e_int,shadow_iou_mean"
    }

    /// One CSV row matching [`EvalReport::table_header`]; blanks for missing values.
    pub fn table_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let iou = (!self.shadow_iou.is_empty())
            .then(|| self.shadow_iou.iter().sum::<f64>() / self.shadow_iou.len() as f64);
        format!(
            "{},{},{},{}",
            opt(self.normal_mae),
            opt(self.light_mae),
            opt(self.e_int),
            opt(iou)
        )
    }
}

fn join(v: &[f64], digits: usize) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.digits$}")).collect();
    parts.join(" ")
}
