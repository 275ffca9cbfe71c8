use photostereo::config::Preprocess;
use photostereo::preprocess::{apply_gamma, downsample, percentile_filter, preprocess};
use photostereo_core::geometry::Mask;
use photostereo_core::observation::ObservationSet;

fn single(values: Vec<f64>, w: usize, h: usize) -> ObservationSet {
    let imgs = vec![values.clone(), values.clone(), values];
    ObservationSet::new(Mask::full(w, h), 1, imgs).unwrap()
}

#[test]
fn constant_image_keeps_everything() {
    let obs = percentile_filter(&single(vec![0.4; 20], 5, 4), 25.0);
    assert!(obs.excluded.unwrap().iter().flatten().all(|x| !x));
}

#[test]
fn quartile_of_one_to_hundred_flags_one_to_twenty_four() {
    let vals: Vec<f64> = (1..=100).map(|v| v as f64).collect();
    let obs = percentile_filter(&single(vals.clone(), 10, 10), 25.0);
    let ex = &obs.excluded.unwrap()[0];
    let flagged: Vec<f64> = vals.iter().zip(ex).filter(|(_, e)| **e).map(|(v, _)| *v).collect();
    assert_eq!(flagged, (1..=24).map(|v| v as f64).collect::<Vec<_>>());
}

#[test]
fn zero_percentile_is_a_no_op() {
    let vals: Vec<f64> = (1..=100).map(|v| v as f64).collect();
    let obs = single(vals, 10, 10);
    assert_eq!(percentile_filter(&obs, 0.0), obs);
}

#[test]
fn only_masked_pixels_set_the_threshold() {
    let mask = Mask::from_fn(4, 1, |u, _| u > 0);
    let img = vec![0.0, 1.0, 2.0, 3.0];
    let obs = ObservationSet::new(mask, 1, vec![img.clone(), img.clone(), img]).unwrap();
    let ex = percentile_filter(&obs, 50.0).excluded.unwrap();
    assert_eq!(ex[0], vec![false, true, false, false]);
}

#[test]
fn downsampling_averages_blocks() {
    let (w, h) = (6, 4);
    let vals: Vec<f64> = (0..w * h).map(|k| k as f64).collect();
    let mut obs = single(vals, w, h);
    obs.truth.normals = Some(vec![[0.0, 0.0, 1.0]; w * h]);
    let small = downsample(&obs, 3).unwrap();
    assert_eq!((small.width(), small.height()), (3, 2));
    // block (0,0) covers pixels 0,1,6,7
    assert_eq!(small.images[0][0], (0.0 + 1.0 + 6.0 + 7.0) / 4.0);
    assert_eq!(small.truth.normals.unwrap().len(), 6);
    assert_eq!(downsample(&obs, 6).unwrap(), obs);
}

#[test]
fn downsampled_mask_needs_half_coverage() {
    let mask = Mask::from_fn(4, 2, |u, v| u == 0 && v == 0 || u >= 2);
    let obs = ObservationSet::new(mask, 1, vec![vec![1.0; 8]; 3]).unwrap();
    let small = downsample(&obs, 2).unwrap();
    assert_eq!(small.mask.data(), &[false, true]);
}

#[test]
fn gamma_then_filter() {
    let obs = single(vec![0.5; 4], 2, 2);
    assert!((apply_gamma(&obs, 2.0).images[0][0] - 0.25).abs() < 1e-15);
    let cfg = Preprocess {
        percentile_filter: true,
        gamma: Some(2.2),
        ..Preprocess::default()
    };
    let out = preprocess(&obs, &cfg).unwrap();
    assert!(out.excluded.is_some());
    assert!((out.images[1][3] - 0.5f64.powf(2.2)).abs() < 1e-15);
}
