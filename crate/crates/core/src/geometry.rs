//! Depth-grid geometry: masks, bilinear depth lookup, weighted-interpolation
//! normal fitting, and silhouette normals.
//!
//! Conventions: image column `u` grows right, row `v` grows down, and depth
//! `w` is the distance from an orthographic camera looking along `-z`. The
//! surface point of pixel `(u, v)` is `(u * pitch, v * pitch, -w)`, so the
//! view direction is `[0, 0, 1]` and visible normals have `n_z > 0`.

use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Array, AutodiffError, CustomOp, Dual, Real, Tape, Var};
use crate::vec3::{self, Vec3};

/// Regularizer added to `|d_k|` before taking reciprocals in the normal fit.
pub const NORMAL_FIT_EPS: f64 = 1e-8;

/// World units per pixel that map the longer image axis onto `[-1, 1]`.
pub fn default_pitch(width: usize, height: usize) -> f64 {
    let n = width.max(height);
    if n < 2 {
        1.0
    } else {
        2.0 / (n - 1) as f64
    }
}

/// Binary pixel mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }

    /// Lookup with signed coordinates; outside the image reads as unmasked.
    #[inline]
    pub fn get_signed(&self, u: isize, v: isize) -> bool {
        u >= 0
            && v >= 0
            && (u as usize) < self.width
            && (v as usize) < self.height
            && self.get(u as usize, v as usize)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }
}

/// Where a fitting stencil takes each of its four neighbor depths from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighbor {
    /// A masked pixel (index into the masked-pixel list).
    Pixel(usize),
    /// Missing; mirrored through the center from the opposite neighbor.
    Mirror,
    /// Missing on both sides; treated as level with the center.
    Flat,
}

/// Neighbor order used by the normal fit: up, left, down, right.
///
/// This is counter-clockwise on screen, which with the `v`-down convention
/// makes every triangle cross product face the camera.
pub const NEIGHBOR_OFFSETS: [(isize, isize); 4] = [(0, -1), (-1, 0), (0, 1), (1, 0)];

/// Masked-pixel indexing and the lookup tables derived from a mask.
#[derive(Clone, Debug)]
pub struct PixelGrid {
    mask: Mask,
    pixels: Vec<(usize, usize)>,
    index: Vec<Option<usize>>,
    nearest: Vec<usize>,
    neighbors: Vec<[Neighbor; 4]>,
}

impl PixelGrid {
    /// Returns `None` for an empty mask.
    pub fn new(mask: Mask) -> Option<Self> {
        let (w, h) = (mask.width, mask.height);
        let mut pixels = Vec::new();
        let mut index = vec![None; w * h];
        for v in 0..h {
            for u in 0..w {
                if mask.get(u, v) {
                    index[v * w + u] = Some(pixels.len());
                    pixels.push((u, v));
                }
            }
        }
        if pixels.is_empty() {
            return None;
        }
        let nearest = nearest_masked(&mask, &index);
        let at = |u: isize, v: isize| -> Option<usize> {
            if mask.get_signed(u, v) {
                index[v as usize * w + u as usize]
            } else {
                None
            }
        };
        let neighbors = pixels
            .iter()
            .map(|&(u, v)| {
                let direct: [Option<usize>; 4] = core::array::from_fn(|k| {
                    let (du, dv) = NEIGHBOR_OFFSETS[k];
                    at(u as isize + du, v as isize + dv)
                });
                core::array::from_fn(|k| match (direct[k], direct[(k + 2) % 4]) {
                    (Some(p), _) => Neighbor::Pixel(p),
                    (None, Some(_)) => Neighbor::Mirror,
                    (None, None) => Neighbor::Flat,
                })
            })
            .collect();
        Some(Self {
            mask,
            pixels,
            index,
            nearest,
            neighbors,
        })
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn width(&self) -> usize {
        self.mask.width
    }

    pub fn height(&self) -> usize {
        self.mask.height
    }

    /// Number of masked pixels.
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    pub fn index_of(&self, u: usize, v: usize) -> Option<usize> {
        self.index[v * self.mask.width + u]
    }

    /// For every grid cell, the masked pixel whose depth fills it.
    pub fn nearest(&self) -> &[usize] {
        &self.nearest
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor; 4] {
        &self.neighbors[i]
    }

    /// True when all four axis neighbors are masked.
    pub fn is_interior(&self, i: usize) -> bool {
        self.neighbors[i]
            .iter()
            .all(|n| matches!(n, Neighbor::Pixel(_)))
    }

    /// Expands masked-pixel values to the full grid (nearest masked fill).
    pub fn fill_grid(&self, masked: &[f64]) -> Vec<f64> {
        self.nearest.iter().map(|&i| masked[i]).collect()
    }
}

/// Multi-source BFS over the 4-connected grid, seeded in row-major order.
fn nearest_masked(mask: &Mask, index: &[Option<usize>]) -> Vec<usize> {
    let (w, h) = (mask.width, mask.height);
    let mut nearest = vec![usize::MAX; w * h];
    let mut queue = VecDeque::new();
    for (cell, idx) in index.iter().enumerate() {
        if let Some(i) = idx {
            nearest[cell] = *i;
            queue.push_back(cell);
        }
    }
    while let Some(cell) = queue.pop_front() {
        let (u, v) = ((cell % w) as isize, (cell / w) as isize);
        for (du, dv) in NEIGHBOR_OFFSETS {
            let (nu, nv) = (u + du, v + dv);
            if nu < 0 || nv < 0 || nu >= w as isize || nv >= h as isize {
                continue;
            }
            let nc = nv as usize * w + nu as usize;
            if nearest[nc] == usize::MAX {
                nearest[nc] = nearest[cell];
                queue.push_back(nc);
            }
        }
    }
    nearest
}

/// Bilinear stencil of a query point in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil {
    /// Grid cells: `(u0, v0)`, `(u0+1, v0)`, `(u0, v0+1)`, `(u0+1, v0+1)`.
    pub cells: [usize; 4],
    pub fx: f64,
    pub fy: f64,
    /// The query fell outside the grid and was clamped to the border.
    pub clamped: bool,
}

impl Stencil {
    pub fn weights(&self) -> [f64; 4] {
        let (fx, fy) = (self.fx, self.fy);
        [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ]
    }
}

/// Locates `(x, y)` (pixel units) on a `width × height` grid, clamping to the border.
pub fn bilinear_stencil(width: usize, height: usize, x: f64, y: f64) -> Stencil {
    let maxx = (width - 1) as f64;
    let maxy = (height - 1) as f64;
    let clamped = !(0.0..=maxx).contains(&x) || !(0.0..=maxy).contains(&y);
    let xc = x.clamp(0.0, maxx);
    let yc = y.clamp(0.0, maxy);
    let (u0, fx) = split_axis(xc, width);
    let (v0, fy) = split_axis(yc, height);
    let u1 = (u0 + 1).min(width - 1);
    let v1 = (v0 + 1).min(height - 1);
    Stencil {
        cells: [
            v0 * width + u0,
            v0 * width + u1,
            v1 * width + u0,
            v1 * width + u1,
        ],
        fx,
        fy,
        clamped,
    }
}

fn split_axis(x: f64, n: usize) -> (usize, f64) {
    if n < 2 {
        return (0, 0.0);
    }
    // x is clamped non-negative, so truncation is floor
    let i = (x as usize).min(n - 2);
    (i, x - i as f64)
}

/// Bilinear blend of four corner values with fractional offsets `fx`, `fy`.
#[inline]
pub fn blend<R: Real>(fx: R, fy: R, c: [R; 4]) -> R {
    let one = R::cst(1.0);
    let top = c[0] * (one - fx) + c[1] * fx;
    let bottom = c[2] * (one - fx) + c[3] * fx;
    top * (one - fy) + bottom * fy
}

/// A depth map over a masked pixel grid.
#[derive(Clone, Debug)]
pub struct DepthField {
    grid: PixelGrid,
    /// Depth for every masked pixel, in `grid.pixels()` order.
    masked: Vec<f64>,
    /// Full-grid depth, unmasked cells filled from their nearest masked pixel.
    full: Vec<f64>,
    pitch: f64,
}

impl DepthField {
    /// Builds a field from depths of the masked pixels only.
    pub fn from_masked(grid: PixelGrid, masked: Vec<f64>, pitch: f64) -> Self {
        assert_eq!(masked.len(), grid.len(), "one depth per masked pixel");
        let full = grid.fill_grid(&masked);
        Self {
            grid,
            masked,
            full,
            pitch,
        }
    }

    /// Builds a field from a full-grid depth image; unmasked values are ignored.
    pub fn from_grid(grid: PixelGrid, depth: &[f64], pitch: f64) -> Self {
        let w = grid.width();
        let masked = grid.pixels().iter().map(|&(u, v)| depth[v * w + u]).collect();
        Self::from_masked(grid, masked, pitch)
    }

    pub fn grid(&self) -> &PixelGrid {
        &self.grid
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn masked_depth(&self) -> &[f64] {
        &self.masked
    }

    pub fn full_depth(&self) -> &[f64] {
        &self.full
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    /// Bilinear depth at pixel coordinates `(x, y)`, clamped to the border.
    pub fn bilinear_depth(&self, x: f64, y: f64) -> f64 {
        self.bilinear_depth_checked(x, y).0
    }

    /// Like [`Self::bilinear_depth`], also reporting whether the query was clamped.
    pub fn bilinear_depth_checked(&self, x: f64, y: f64) -> (f64, bool) {
        let s = bilinear_stencil(self.width(), self.height(), x, y);
        let c = s.cells.map(|i| self.full[i]);
        (blend(s.fx, s.fy, c), s.clamped)
    }

    /// Weighted-interpolation normal of masked pixel `i`.
    pub fn fit_normal(&self, i: usize) -> Vec3 {
        let inputs = stencil_depths(&self.grid, &self.masked, i);
        fit_normal_kernel(inputs, self.grid.neighbors(i), self.pitch)
    }

    /// Normals of all masked pixels.
    pub fn normal_map(&self) -> Vec<Vec3> {
        (0..self.grid.len()).map(|i| self.fit_normal(i)).collect()
    }

    /// Interpolation weights `γ_k` of pixel `i`, in neighbor order.
    pub fn fit_weights(&self, i: usize) -> [f64; 4] {
        let inputs = stencil_depths(&self.grid, &self.masked, i);
        let nb = resolve_neighbors(inputs, self.grid.neighbors(i));
        normal_fit_weights(inputs[0], nb)
    }
}

/// Center depth followed by the depths of the four neighbor slots
/// (zero for slots that are not masked pixels).
fn stencil_depths(grid: &PixelGrid, depth: &[f64], i: usize) -> [f64; 5] {
    let mut out = [0.0; 5];
    out[0] = depth[i];
    for (k, n) in grid.neighbors(i).iter().enumerate() {
        if let Neighbor::Pixel(p) = n {
            out[1 + k] = depth[*p];
        }
    }
    out
}

/// Depths of the four (possibly virtual) neighbors.
fn resolve_neighbors<R: Real>(inputs: [R; 5], nb: &[Neighbor; 4]) -> [R; 4] {
    let center = inputs[0];
    core::array::from_fn(|k| match nb[k] {
        Neighbor::Pixel(_) => inputs[1 + k],
        Neighbor::Mirror => center.scale(2.0) - inputs[1 + (k + 2) % 4],
        Neighbor::Flat => center,
    })
}

fn normal_fit_weights<R: Real>(center: R, w: [R; 4]) -> [R; 4] {
    let inv: [R; 4] = core::array::from_fn(|k| {
        let d = w[k] + w[(k + 1) % 4] - center.scale(2.0);
        R::cst(1.0) / (d.abs() + R::cst(NORMAL_FIT_EPS))
    });
    let total = inv[0] + inv[1] + inv[2] + inv[3];
    inv.map(|x| x / total)
}

/// Normal of the center of a 5-point stencil.
///
/// `inputs` holds the center depth and the four neighbor-slot depths in
/// [`NEIGHBOR_OFFSETS`] order; `nb` says which slots are real pixels.
pub fn fit_normal_kernel<R: Real>(inputs: [R; 5], nb: &[Neighbor; 4], pitch: f64) -> [R; 3] {
    let center = inputs[0];
    let w = resolve_neighbors(inputs, nb);
    let gamma = normal_fit_weights(center, w);
    let edges: [[R; 3]; 4] = core::array::from_fn(|k| {
        let (du, dv) = NEIGHBOR_OFFSETS[k];
        [
            R::cst(du as f64 * pitch),
            R::cst(dv as f64 * pitch),
            center - w[k],
        ]
    });
    let mut n = [R::cst(0.0); 3];
    for k in 0..4 {
        let c = vec3::normalize_r(vec3::cross_r(edges[(k + 1) % 4], edges[k]));
        for j in 0..3 {
            n[j] = n[j] + gamma[k] * c[j];
        }
    }
    vec3::normalize_r(n)
}

struct NormalFitOp {
    /// Per pixel: participating masked-pixel index per input slot.
    slots: Vec<[Option<usize>; 5]>,
    /// Per pixel: 3×5 Jacobian, row-major.
    jacobians: Vec<[f64; 15]>,
}

impl CustomOp for NormalFitOp {
    fn name(&self) -> &'static str {
        "fit_normal"
    }

    fn vjp(&self, out_grad: &[f64], input_grads: &mut [Vec<f64>]) {
        let gd = &mut input_grads[0];
        for (i, (slots, jac)) in self.slots.iter().zip(self.jacobians.iter()).enumerate() {
            let g = &out_grad[3 * i..3 * i + 3];
            for (s, slot) in slots.iter().enumerate() {
                if let Some(p) = slot {
                    gd[*p] += g[0] * jac[s] + g[1] * jac[5 + s] + g[2] * jac[10 + s];
                }
            }
        }
    }
}

/// Records the normal fit of every masked pixel on `tape`.
///
/// `depth` is the `[P]` masked-pixel depth; the result is `[P, 3]`.
pub fn fit_normals_on_tape(
    tape: &mut Tape,
    grid: &PixelGrid,
    depth: Var,
    pitch: f64,
) -> Result<Var, AutodiffError> {
    let shape = tape.shape(depth);
    if shape != [grid.len()] {
        return Err(AutodiffError::Shape {
            primitive: "fit_normal",
            shapes: vec![shape.to_vec(), vec![grid.len()]],
        });
    }
    let d = tape.value(depth).data().to_vec();
    let n = grid.len();
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        let inputs = stencil_depths(grid, &d, i);
        out.extend_from_slice(&fit_normal_kernel(inputs, grid.neighbors(i), pitch));
    }
    let value = Array::new(&[n, 3], out)?;
    if !tape.is_recording() || !tape.requires_grad(depth) {
        return Ok(tape.constant(value));
    }
    let mut slots = Vec::with_capacity(n);
    let mut jacobians = Vec::with_capacity(n);
    for i in 0..n {
        let raw = stencil_depths(grid, &d, i);
        let nb = grid.neighbors(i);
        let mut slot = [None; 5];
        slot[0] = Some(i);
        for k in 0..4 {
            if let Neighbor::Pixel(p) = nb[k] {
                slot[1 + k] = Some(p);
            }
        }
        let inputs: [Dual<5>; 5] = core::array::from_fn(|s| Dual::var(raw[s], s));
        let nd = fit_normal_kernel(inputs, nb, pitch);
        let mut jac = [0.0; 15];
        for c in 0..3 {
            jac[5 * c..5 * c + 5].copy_from_slice(&nd[c].d);
        }
        slots.push(slot);
        jacobians.push(jac);
    }
    Ok(tape.custom(
        Box::new(NormalFitOp { slots, jacobians }),
        &[depth],
        value,
    ))
}

/// Outward silhouette normals of an occluding mask boundary.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SilhouetteNormals {
    /// `(masked pixel index, unit normal with z = 0)`.
    pub normals: Vec<(usize, Vec3)>,
    /// Single-pixel components that were skipped.
    pub skipped_isolated: usize,
}

impl SilhouetteNormals {
    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }
}

/// Fits an outward, image-plane normal at every silhouette pixel.
///
/// Silhouette pixels are masked pixels with an unmasked 4-neighbor inside
/// the image; the image frame is a crop, not an occluding contour. The
/// tangent is the principal axis of the boundary chain within two steps of
/// the pixel (about five pixels), and the normal is oriented toward the
/// unmasked side.
pub fn silhouette_normals(grid: &PixelGrid) -> SilhouetteNormals {
    let mask = grid.mask();
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let inside = |u: isize, v: isize| u >= 0 && v >= 0 && u < w && v < h;
    let is_boundary = |u: isize, v: isize| {
        mask.get_signed(u, v)
            && NEIGHBOR_OFFSETS
                .iter()
                .any(|(du, dv)| inside(u + du, v + dv) && !mask.get_signed(u + du, v + dv))
    };
    let mut out = SilhouetteNormals::default();
    for (i, &(u, v)) in grid.pixels().iter().enumerate() {
        let (u, v) = (u as isize, v as isize);
        if !is_boundary(u, v) {
            continue;
        }
        let isolated = (-1..=1)
            .flat_map(|dv| (-1..=1).map(move |du| (du, dv)))
            .all(|(du, dv)| (du == 0 && dv == 0) || !mask.get_signed(u + du, v + dv));
        if isolated {
            out.skipped_isolated += 1;
            continue;
        }
        // outward hint: toward unmasked 8-neighbors
        let mut hint = [0.0f64; 2];
        for dv in -1..=1 {
            for du in -1..=1isize {
                if (du != 0 || dv != 0) && inside(u + du, v + dv) && !mask.get_signed(u + du, v + dv)
                {
                    let len = libm::sqrt((du * du + dv * dv) as f64);
                    hint[0] += du as f64 / len;
                    hint[1] += dv as f64 / len;
                }
            }
        }
        // boundary chain within two 8-connected steps
        let mut chain: Vec<(isize, isize)> = vec![(u, v)];
        let mut frontier = vec![(u, v)];
        for _ in 0..2 {
            let mut next = Vec::new();
            for &(cu, cv) in &frontier {
                for dv in -1..=1 {
                    for du in -1..=1isize {
                        let p = (cu + du, cv + dv);
                        if !chain.contains(&p) && is_boundary(p.0, p.1) {
                            chain.push(p);
                            next.push(p);
                        }
                    }
                }
            }
            frontier = next;
        }
        let normal = if chain.len() >= 3 {
            let n = chain.len() as f64;
            let (mx, my) = chain
                .iter()
                .fold((0.0, 0.0), |a, p| (a.0 + p.0 as f64 / n, a.1 + p.1 as f64 / n));
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for p in &chain {
                let (dx, dy) = (p.0 as f64 - mx, p.1 as f64 - my);
                sxx += dx * dx;
                sxy += dx * dy;
                syy += dy * dy;
            }
            // principal axis of the 2×2 scatter matrix
            let theta = 0.5 * libm::atan2(2.0 * sxy, sxx - syy);
            let (tx, ty) = (libm::cos(theta), libm::sin(theta));
            let mut nrm = [-ty, tx];
            if nrm[0] * hint[0] + nrm[1] * hint[1] < 0.0 {
                nrm = [ty, -tx];
            }
            nrm
        } else {
            hint
        };
        let len = libm::hypot(normal[0], normal[1]);
        if len == 0.0 {
            continue;
        }
        out.normals.push((i, [normal[0] / len, normal[1] / len, 0.0]));
    }
    out
}
