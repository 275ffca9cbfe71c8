use photostereo::evaluate::report;
use photostereo::output::SolveOutputs;
use photostereo_core::geometry::Mask;
use photostereo_core::observation::{ObservationSet, Truth};

fn scene(truth: bool) -> ObservationSet {
    let mask = Mask::from_fn(4, 1, |u, _| u < 3);
    let mut obs = ObservationSet::new(mask, 1, vec![vec![0.5; 4]; 3]).unwrap();
    if truth {
        obs.truth = Truth {
            // pixel 2 faces away from light 0
            normals: Some(vec![[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]),
            lights: Some(vec![[0.6, 0.0, 0.8]; 3]),
            intensities: Some(vec![1.0, 2.0, 3.0]),
        };
    }
    obs
}

#[test]
fn shadow_iou_skips_back_facing_pixels_when_geometry_is_known() {
    let est = SolveOutputs {
        normals: None,
        lights: None,
        intensities: Some(vec![2.0, 4.0, 6.0]),
        // pixel 0 correctly shadowed, pixel 2 lit although attached-shadowed
        shadows: vec![vec![0.1, 0.9, 0.9, 0.0]],
    };
    let hard = vec![vec![true, false, true, true]];
    let r = report(&scene(true), &est, &hard).unwrap();
    assert_eq!(r.shadow_iou, vec![1.0]);
    assert!(r.e_int.unwrap().abs() < 1e-12);
    assert!(r.normal_mae.is_none() && r.light_mae.is_none());
    let r = report(&scene(false), &est, &hard).unwrap();
    assert_eq!(r.shadow_iou, vec![0.5]);
}
