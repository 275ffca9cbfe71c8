use super::*;
use crate::autodiff::real::sigmoid;
use crate::geometry::Mask;

fn field(w: usize, h: usize, pitch: f64, f: impl Fn(f64, f64) -> f64) -> DepthField {
    let grid = PixelGrid::new(Mask::full(w, h)).unwrap();
    let depth: Vec<f64> = (0..h)
        .flat_map(|v| (0..w).map(move |u| (u as f64, v as f64)))
        .map(|(u, v)| f(u, v))
        .collect();
    DepthField::from_grid(grid, &depth, pitch)
}

/// A gaussian bump (closer to the camera at its center) on a flat floor.
fn bump(n: usize, height: f64) -> DepthField {
    let c = (n as f64 - 1.0) / 2.0;
    let pitch = 2.0 / (n as f64 - 1.0);
    field(n, n, pitch, |u, v| {
        let (x, y) = ((u - c) * pitch, (v - c) * pitch);
        -height * libm::exp(-(x * x + y * y) / 0.08)
    })
}

fn oblique(azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
    let (a, e) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    [libm::cos(e) * libm::cos(a), libm::cos(e) * libm::sin(a), libm::sin(e)]
}

#[test]
fn flat_plane_is_lit_at_least_sigma_beta() {
    let f = field(9, 7, 0.25, |_, _| 2.0);
    for l in [oblique(10.0, 20.0), oblique(200.0, 60.0), [0.0, 0.0, 1.0]] {
        for i in 0..f.grid().len() {
            let s = soft_shadow(&f, i, l, 400.0, 3.0, 64).unwrap();
            assert!(s >= sigmoid(3.0) - 1e-15 && s < 1.0, "{s}");
        }
    }
    assert!((sigmoid(3.0) - 0.9525741268224334).abs() < 1e-15);
}

#[test]
fn saturated_occlusion_example() {
    // a wall one row to the right, 0.1 closer than the ray at that point
    let l = [1.0, 0.0, 1.0];
    let f = field(3, 1, 1.0, |u, _| if u == 2.0 { -1.0 } else { 0.0 });
    // ray from u = 1 reaches u = 2 at ŵ = -1 + ... : one sample, t = 1
    let gap = min_gap(&f, 1, l, 1).unwrap().unwrap();
    assert!((gap - 0.0).abs() < 1e-12);
    let g = field(3, 1, 1.0, |u, _| if u == 2.0 { -1.1 } else { 0.0 });
    let gap = min_gap(&g, 1, l, 1).unwrap().unwrap();
    assert!((gap + 0.1).abs() < 1e-12, "{gap}");
    let s = soft_shadow(&g, 1, l, 400.0, 3.0, 1).unwrap();
    assert!((s - 8.533047625744066e-17).abs() < 1e-28, "{s:e}");
}

#[test]
fn segment_ends_on_the_image_border_with_uniform_samples() {
    let f = bump(17, 0.3);
    let i = f.grid().index_of(5, 9).unwrap();
    let seg = LightSegment::new(&f, i, oblique(30.0, 45.0), 64).unwrap();
    assert!((seg.endpoint[0] - 16.0).abs() < 1e-12);
    assert!(seg.endpoint[1] > 9.0 && seg.endpoint[1] < 16.0);
    let step = vec3::sub(seg.sample(2), seg.sample(1));
    for k in 1..64 {
        let d = vec3::sub(seg.sample(k + 1), seg.sample(k));
        assert!(vec3::norm(vec3::sub(d, step)) < 1e-12);
    }
    assert!(vec3::norm(vec3::sub(seg.sample(64), seg.endpoint)) < 1e-12);
    // the ray rises toward the camera: camera distance decreases
    assert!(seg.endpoint[2] < seg.origin[2]);
}

#[test]
fn rejects_lights_behind_the_surface() {
    let f = bump(5, 0.1);
    for l in [[0.3, 0.1, 0.0], [0.0, 0.2, -1.0], [0.0, 0.0, 0.0]] {
        assert!(matches!(
            soft_shadow(&f, 0, l, 400.0, 3.0, 64),
            Err(Error::LightBelowHorizon { .. })
        ));
    }
}

#[test]
fn border_pixel_facing_its_light_is_unoccluded() {
    let f = bump(9, 0.3);
    let i = f.grid().index_of(8, 4).unwrap();
    let l = oblique(0.0, 30.0);
    assert!(LightSegment::new(&f, i, l, 64).unwrap().is_degenerate());
    assert_eq!(soft_shadow(&f, i, l, 400.0, 3.0, 64).unwrap(), sigmoid(3.0));
    let frontal = f.grid().index_of(4, 4).unwrap();
    assert_eq!(
        soft_shadow(&f, frontal, [0.0, 0.0, 1.0], 400.0, 3.0, 64).unwrap(),
        sigmoid(3.0)
    );
}

#[test]
fn raising_an_occluder_never_brightens() {
    let l = oblique(180.0, 25.0);
    let n = 25;
    let mut prev: Option<Vec<f64>> = None;
    let c = (n as f64 - 1.0) / 2.0;
    for step in 0..8 {
        let height = 0.05 + 0.08 * step as f64;
        // compact support, so the floor itself stays put
        let f = field(n, n, 2.0 / (n as f64 - 1.0), |u, v| {
            let r2 = ((u - c).powi(2) + (v - c).powi(2)) / 64.0;
            -height * (1.0 - r2).max(0.0).powi(2)
        });
        let s = shadow_map(&f, l, 400.0, 3.0, 64).unwrap();
        if let Some(p) = &prev {
            // pixels on the flat floor only: their own depth does not move
            for (i, &(u, v)) in f.grid().pixels().iter().enumerate() {
                let r2 = (u as f64 - c).powi(2) + (v as f64 - c).powi(2);
                if r2 > 64.0 {
                    assert!(s[i] <= p[i] + 1e-12, "pixel {i}: {} > {}", s[i], p[i]);
                }
            }
        }
        prev = Some(s);
    }
}

#[test]
fn larger_alpha_sharpens_toward_hard_visibility() {
    let f = bump(21, 0.5);
    let l = oblique(135.0, 30.0);
    let mut shadowed = 0;
    for i in 0..f.grid().len() {
        let Some(gap) = min_gap(&f, i, l, 64).unwrap() else { continue };
        if gap.abs() < 1e-9 {
            continue;
        }
        shadowed += usize::from(gap < 0.0);
        let hard = if gap > 0.0 { 1.0 } else { 0.0 };
        let mut last = f64::INFINITY;
        for alpha in [10.0, 50.0, 400.0, 2000.0] {
            let s = soft_shadow(&f, i, l, alpha, 0.0, 64).unwrap();
            let err = (s - hard).abs();
            assert!(err <= last + 1e-15, "pixel {i} alpha {alpha}");
            last = err;
        }
    }
    assert!(shadowed > 10);
}

#[test]
fn tape_values_match_scalar_path() {
    let f = bump(11, 0.4);
    let lights = [oblique(20.0, 35.0), oblique(250.0, 50.0)];
    let mut tape = Tape::new();
    let d = tape.param(Array::from_vec(f.masked_depth().to_vec()));
    let l = tape.param(Array::from_vec3s(&lights));
    let a = tape.param(Array::scalar(400.0));
    let b = tape.param(Array::scalar(3.0));
    let s = shadows_on_tape(&mut tape, f.grid(), d, l, a, b, f.pitch(), 64).unwrap();
    let v = tape.value(s);
    assert_eq!(v.shape(), &[f.grid().len(), 2]);
    for (j, &lj) in lights.iter().enumerate() {
        let map = shadow_map(&f, lj, 400.0, 3.0, 64).unwrap();
        for (i, m) in map.iter().enumerate() {
            assert_eq!(v.data()[2 * i + j], *m);
        }
    }
}

/// Finite differences at steps `h` and `h/4`; `None` when they disagree,
/// which flags an argmin switch or a stencil change inside the step.
fn central(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> Option<f64> {
    let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
    let d2 = (f(x + h / 4.0) - f(x - h / 4.0)) / (h / 2.0);
    ((d1 - d2).abs() <= 1e-6 * d1.abs().max(1.0)).then_some(d1)
}

#[test]
fn gradients_match_finite_differences_off_kinks() {
    let n = 9;
    let base = bump(n, 0.25);
    let grid = base.grid().clone();
    let pitch = base.pitch();
    let d0 = base.masked_depth().to_vec();
    let l0 = [oblique(160.0, 40.0), oblique(-70.0, 55.0)];
    let (a0, b0) = (40.0, 1.0);
    let weights: Vec<f64> = (0..2 * grid.len()).map(|k| libm::cos(0.7 * k as f64)).collect();
    let eval = |d: &[f64], l: &[Vec3; 2], a: f64, b: f64| -> f64 {
        let f = DepthField::from_masked(grid.clone(), d.to_vec(), pitch);
        let mut total = 0.0;
        for (j, lj) in l.iter().enumerate() {
            let m = shadow_map(&f, *lj, a, b, 16).unwrap();
            total += m.iter().enumerate().map(|(i, s)| s * weights[2 * i + j]).sum::<f64>();
        }
        total
    };
    let mut tape = Tape::new();
    let d = tape.param(Array::from_vec(d0.clone()));
    let l = tape.param(Array::from_vec3s(&l0));
    let a = tape.param(Array::scalar(a0));
    let b = tape.param(Array::scalar(b0));
    let s = shadows_on_tape(&mut tape, &grid, d, l, a, b, pitch, 16).unwrap();
    let wv = tape.constant(Array::new(&[grid.len(), 2], weights.clone()).unwrap());
    let p = tape.mul(s, wv).unwrap();
    let root = tape.sum(p);
    tape.backward(root).unwrap();

    let check = |an: f64, fd: Option<f64>, what: &str, checked: &mut usize| {
        if let Some(fd) = fd {
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-3);
            assert!(rel < 1e-4, "{what}: {an} vs {fd}");
            *checked += 1;
        }
    };
    let mut checked = 0;
    let h = 1e-4;
    let ga = tape.grad(a).unwrap().item();
    check(ga, central(&|x| eval(&d0, &l0, x, b0), a0, h), "alpha", &mut checked);
    let gb = tape.grad(b).unwrap().item();
    check(gb, central(&|x| eval(&d0, &l0, a0, x), b0, h), "beta", &mut checked);
    let gl = tape.grad(l).unwrap();
    for j in 0..2 {
        for c in 0..3 {
            let fd = central(
                &|x| {
                    let mut l = l0;
                    l[j][c] = x;
                    eval(&d0, &l, a0, b0)
                },
                l0[j][c],
                h,
            );
            check(gl.data()[3 * j + c], fd, "light", &mut checked);
        }
    }
    let gd = tape.grad(d).unwrap();
    for i in 0..d0.len() {
        let fd = central(
            &|x| {
                let mut d = d0.clone();
                d[i] = x;
                eval(&d, &l0, a0, b0)
            },
            d0[i],
            h,
        );
        check(gd.data()[i], fd, "depth", &mut checked);
    }
    assert!(checked > 60, "only {checked} off-kink checks");
}
