//! Observation clean-up before solving.

use photostereo_core::geometry::Mask;
use photostereo_core::observation::ObservationSet;
use photostereo_core::vec3;
use photostereo_core::Result;

use crate::config::Preprocess;

/// Flags, per image, masked pixels whose channel-mean intensity is strictly
/// below the `p`-th percentile (nearest rank) of that image's masked
/// intensities. Flags add to any already present.
pub fn percentile_filter(obs: &ObservationSet, p: f64) -> ObservationSet {
    let mut out = obs.clone();
    if p <= 0.0 {
        return out;
    }
    let (w, h, c) = (obs.width(), obs.height(), obs.channels);
    let mask = obs.mask.data();
    let mut excluded = obs
        .excluded
        .clone()
        .unwrap_or_else(|| vec![vec![false; w * h]; obs.len()]);
    for (j, img) in obs.images.iter().enumerate() {
        let lum: Vec<f64> = (0..w * h)
            .map(|k| img[k * c..(k + 1) * c].iter().sum::<f64>() / c as f64)
            .collect();
        let mut vals: Vec<f64> = (0..w * h).filter(|&k| mask[k]).map(|k| lum[k]).collect();
        if vals.is_empty() {
            continue;
        }
        vals.sort_by(f64::total_cmp);
        let rank = ((p / 100.0) * vals.len() as f64).ceil().max(1.0) as usize;
        let threshold = vals[rank.min(vals.len()) - 1];
        for k in 0..w * h {
            if mask[k] && lum[k] < threshold {
                excluded[j][k] = true;
            }
        }
    }
    out.excluded = Some(excluded);
    out
}

/// Raises every value to `gamma`.
pub fn apply_gamma(obs: &ObservationSet, gamma: f64) -> ObservationSet {
    let mut out = obs.clone();
    for img in out.images.iter_mut() {
        for x in img.iter_mut() {
            *x = x.max(0.0).powf(gamma);
        }
    }
    out
}

/// Box-averages by the smallest integer factor that brings the longer side
/// to at most `cap`. A coarse pixel is masked when at least half of its
/// fine pixels are; ground-truth normals are averaged and renormalized.
/// Loss exclusions are dropped.
pub fn downsample(obs: &ObservationSet, cap: usize) -> Result<ObservationSet> {
    let (w, h, c) = (obs.width(), obs.height(), obs.channels);
    let factor = w.max(h).div_ceil(cap.max(1));
    if factor <= 1 {
        return Ok(obs.clone());
    }
    let (nw, nh) = (w.div_ceil(factor), h.div_ceil(factor));
    let block = |u: usize, v: usize| {
        let us = u * factor..((u + 1) * factor).min(w);
        let vs = v * factor..((v + 1) * factor).min(h);
        vs.flat_map(move |y| us.clone().map(move |x| y * w + x))
    };
    let mask = obs.mask.data();
    let new_mask = Mask::from_fn(nw, nh, |u, v| {
        let (mut inside, mut total) = (0, 0);
        for k in block(u, v) {
            total += 1;
            inside += usize::from(mask[k]);
        }
        2 * inside >= total
    });
    let images = obs
        .images
        .iter()
        .map(|img| {
            let mut out = vec![0.0; nw * nh * c];
            for v in 0..nh {
                for u in 0..nw {
                    let ks: Vec<usize> = block(u, v).collect();
                    for ch in 0..c {
                        let s: f64 = ks.iter().map(|k| img[k * c + ch]).sum();
                        out[(v * nw + u) * c + ch] = s / ks.len() as f64;
                    }
                }
            }
            out
        })
        .collect();
    let mut out = ObservationSet::new(new_mask, c, images)?;
    out.truth.lights = obs.truth.lights.clone();
    out.truth.intensities = obs.truth.intensities.clone();
    out.truth.normals = obs.truth.normals.as_ref().map(|n| {
        let mut m = Vec::with_capacity(nw * nh);
        for v in 0..nh {
            for u in 0..nw {
                let sum = block(u, v)
                    .filter(|k| mask[*k])
                    .fold([0.0; 3], |acc, k| vec3::add(acc, n[k]));
                m.push(if vec3::norm(sum) > 0.0 {
                    vec3::normalize(sum)
                } else {
                    [0.0, 0.0, 1.0]
                });
            }
        }
        m
    });
    Ok(out)
}

/// Gamma, then downsampling, then the percentile filter.
pub fn preprocess(obs: &ObservationSet, cfg: &Preprocess) -> Result<ObservationSet> {
    let mut out = match cfg.gamma {
        Some(g) => apply_gamma(obs, g),
        None => obs.clone(),
    };
    if let Some(cap) = cfg.max_resolution {
        out = downsample(&out, cap)?;
    }
    if cfg.percentile_filter {
        out = percentile_filter(&out, cfg.percentile);
    }
    Ok(out)
}
