//! Exact mesh-derived optical flow, occlusion masks and backward warping.
//!
//! Flow from view `i` to view `j` is obtained by lifting each covered pixel
//! of `i` to its surface point and reprojecting it into `j`. Pixel `(x, y)`
//! sits at continuous coordinates `(x + 0.5, y + 0.5)`; flow vectors are
//! destination coordinates minus those centers.

use crate::error::{Error, Result};
use crate::grid::{bilinear_taps, Image, Plane};
use crate::par;
use crate::raster::{self, project, GBuffer, NEAR};
use crate::scene::{Mesh, Trajectory};
use nalgebra::{Point3, Vector3};

/// Default relative depth tolerance for the visibility test.
pub const DEFAULT_OCCLUSION_TOLERANCE: f64 = 1e-3;

/// Dense correspondence from frame `src_index` to frame `dst_index`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    /// `(du, dv)` per pixel; zero wherever `valid` is false.
    pub flow: Vec<[f64; 2]>,
    /// Source covered, destination inside the image and in front of the camera.
    pub valid: Vec<bool>,
    pub src_index: usize,
    pub dst_index: usize,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize, src_index: usize, dst_index: usize) -> Self {
        Self {
            width,
            height,
            flow: vec![[0.0; 2]; width * height],
            valid: vec![false; width * height],
            src_index,
            dst_index,
        }
    }

    /// Uniform flow valid everywhere; mostly useful for synthetic tests.
    pub fn constant(width: usize, height: usize, du: f64, dv: f64) -> Self {
        Self {
            width,
            height,
            flow: vec![[du, dv]; width * height],
            valid: vec![true; width * height],
            src_index: 0,
            dst_index: 1,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 2] {
        self.flow[y * self.width + x]
    }

    pub fn valid_plane(&self) -> Plane<bool> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.valid.clone(),
        }
    }

    /// Builds a field from raw flow and validity, zeroing invalid vectors.
    pub fn from_parts(
        width: usize,
        height: usize,
        mut flow: Vec<[f64; 2]>,
        valid: Vec<bool>,
        src_index: usize,
        dst_index: usize,
    ) -> Result<Self> {
        if flow.len() != width * height || valid.len() != width * height {
            return Err(Error::Shape(format!(
                "flow {width}x{height} needs {} entries",
                width * height
            )));
        }
        for (f, &v) in flow.iter_mut().zip(&valid) {
            if !v {
                *f = [0.0; 2];
            }
        }
        Ok(Self {
            width,
            height,
            flow,
            valid,
            src_index,
            dst_index,
        })
    }
}

/// Pixels of the source view whose surface point is visible in the
/// destination view.
#[derive(Clone, Debug, PartialEq)]
pub struct OcclusionMask {
    pub mask: Plane<bool>,
    pub tolerance: f64,
}

/// Depth of `gbuf` at continuous pixel coordinates, bilinear in inverse depth
/// over the four nearest centers. Falls back to the nearest pixel when a tap is uncovered;
/// `None` if that pixel is uncovered too.
fn lookup_depth(gbuf: &GBuffer, u: f64, v: f64) -> Option<f64> {
    let (fx, fy) = (u - 0.5, v - 0.5);
    let (x0, x1, wx) = bilinear_taps(fx, gbuf.width);
    let (y0, y1, wy) = bilinear_taps(fy, gbuf.height);
    let d = |x: usize, y: usize| gbuf.depth[y * gbuf.width + x];
    let taps = [d(x0, y0), d(x1, y0), d(x0, y1), d(x1, y1)];
    if taps.iter().all(|&t| t > 0.0) {
        // Inverse depth is affine in screen space across a plane.
        let inv = taps.map(|t| 1.0 / t);
        let top = inv[0] * (1.0 - wx) + inv[1] * wx;
        let bottom = inv[2] * (1.0 - wx) + inv[3] * wx;
        return Some(1.0 / (top * (1.0 - wy) + bottom * wy));
    }
    let nx = (u.floor() as usize).min(gbuf.width - 1);
    let ny = (v.floor() as usize).min(gbuf.height - 1);
    let n = d(nx, ny);
    (n > 0.0).then_some(n)
}

/// Depth along the camera ray through `(u, v)` of the nearest face among
/// `source` and the faces covering the lookup neighborhood in `gbuf`.
///
/// Interpolating stored depths mixes surfaces wherever the taps straddle a
/// discontinuity; intersecting the ray with the neighborhood's own faces
/// gives the exact front depth there and agrees with the interpolated value
/// on planar regions. Falls back to [`lookup_depth`] when no candidate face
/// contains the ray.
fn surface_depth(mesh: &Mesh, gbuf: &GBuffer, ray: &Vector3<f64>, origin: &Point3<f64>, u: f64, v: f64, source: i32) -> Option<f64> {
    let (x0, x1, _) = bilinear_taps(u - 0.5, gbuf.width);
    let (y0, y1, _) = bilinear_taps(v - 0.5, gbuf.height);
    let nx = (u.floor() as usize).min(gbuf.width - 1);
    let ny = (v.floor() as usize).min(gbuf.height - 1);
    let mut faces = [source, -1, -1, -1, -1, -1];
    for (k, (x, y)) in [(x0, y0), (x1, y0), (x0, y1), (x1, y1), (nx, ny)].into_iter().enumerate() {
        let f = gbuf.face_id[y * gbuf.width + x];
        if !faces[..=k].contains(&f) {
            faces[k + 1] = f;
        }
    }
    let mut best: Option<f64> = None;
    for &f in faces.iter().filter(|&&f| f >= 0) {
        if let Some(t) = ray_face(mesh, f as usize, origin, ray) {
            if best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
    }
    best.or_else(|| lookup_depth(gbuf, u, v))
}

/// Two-sided ray/triangle hit parameter; with a ray whose camera-space z
/// component is 1 this is the camera depth.
fn ray_face(mesh: &Mesh, face: usize, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    const EPS: f64 = 1e-9;
    let [a, b, c] = mesh.corners(face);
    let (e1, e2) = (b - a, c - a);
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let bu = s.dot(&p) * inv;
    let q = s.cross(&e1);
    let bv = dir.dot(&q) * inv;
    if bu < -EPS || bv < -EPS || bu + bv > 1.0 + EPS {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > NEAR).then_some(t)
}

/// Flow `f_{i->j}` and the occlusion mask of view `i` with respect to view `j`.
///
/// `gbuf_i` and `gbuf_j` must be rasterized from poses `i` and `j`.
/// A valid pixel is visible when its reprojected depth `z'` satisfies
/// `|z' - depth_j(u', v')| <= tolerance * z'`, where `depth_j` is the front
/// surface depth at `(u', v')` (see [`surface_depth`]).
pub fn compute_flow(
    mesh: &Mesh,
    trajectory: &Trajectory,
    i: usize,
    j: usize,
    gbuf_i: &GBuffer,
    gbuf_j: &GBuffer,
    tolerance: f64,
) -> Result<(FlowField, OcclusionMask)> {
    let pose_j = trajectory.pose(j)?;
    trajectory.pose(i)?;
    let (w, h) = (gbuf_i.width, gbuf_i.height);
    if gbuf_j.width != w || gbuf_j.height != h {
        return Err(Error::Shape("g-buffers differ in resolution".into()));
    }
    let (wf, hf) = (w as f64, h as f64);
    let c2w = pose_j.rotation().transpose();
    let origin = pose_j.center();

    let rows = par::flat_map_rows(h, |y| {
        let mut row = Vec::with_capacity(w);
        for x in 0..w {
            let idx = y * w + x;
            let face = gbuf_i.face_id[idx];
            if face < 0 {
                row.push(([0.0; 2], false, false));
                continue;
            }
            let p = raster::interpolate(mesh, face as usize, gbuf_i.bary[idx]);
            let q = project(&p, pose_j);
            let inside = q.z > NEAR && q.u >= 0.0 && q.u < wf && q.v >= 0.0 && q.v < hf;
            if !inside {
                row.push(([0.0; 2], false, false));
                continue;
            }
            let flow = [q.u - (x as f64 + 0.5), q.v - (y as f64 + 0.5)];
            let ray = c2w * pose_j.ray_direction(q.u, q.v);
            let visible = surface_depth(mesh, gbuf_j, &ray, &origin, q.u, q.v, face)
                .map(|d| (q.z - d).abs() <= tolerance * q.z)
                .unwrap_or(false);
            row.push((flow, true, visible));
        }
        row
    });

    let mut flow = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    for (f, v, m) in rows {
        flow.push(f);
        valid.push(v);
        mask.push(m);
    }
    Ok((
        FlowField {
            width: w,
            height: h,
            flow,
            valid,
            src_index: i,
            dst_index: j,
        },
        OcclusionMask {
            mask: Plane {
                width: w,
                height: h,
                data: mask,
            },
            tolerance,
        },
    ))
}

/// Backward warp: `warped(q)` samples `image` bilinearly at `q + flow(q)`
/// where the mask is set. Returns the warped image and the hole mask (the
/// complement of `mask`); holes are zero.
pub fn warp_image(
    image: &Image,
    flow: &FlowField,
    mask: &OcclusionMask,
) -> Result<(Image, Plane<bool>)> {
    if image.width != flow.width || image.height != flow.height {
        return Err(Error::Shape(format!(
            "image {}x{} vs flow {}x{}",
            image.width, image.height, flow.width, flow.height
        )));
    }
    if mask.mask.width != flow.width || mask.mask.height != flow.height {
        return Err(Error::Shape("mask and flow differ in resolution".into()));
    }
    let (w, c) = (image.width, image.channels);
    let data = par::flat_map_rows(image.height, |y| {
        let mut row = vec![0.0f32; w * c];
        for x in 0..w {
            let i = y * w + x;
            if !mask.mask.data[i] {
                continue;
            }
            let [du, dv] = flow.flow[i];
            image.sample_bilinear(x as f64 + du, y as f64 + dv, &mut row[x * c..(x + 1) * c]);
        }
        row
    });
    let holes = mask.mask.map(|&m| !m);
    Ok((Image::from_vec(image.width, image.height, c, data)?, holes))
}

/// Consecutive flows plus the anchor-pair flows used for anchor warping.
#[derive(Clone, Debug)]
pub struct FlowChain {
    /// `f_{k -> k+1}` for `k = 0..N`.
    pub consecutive: Vec<(FlowField, OcclusionMask)>,
    /// `f_{a_{k+1} -> a_k}` for consecutive anchors; `f_{N -> 0}` by default.
    pub anchors: Vec<(FlowField, OcclusionMask)>,
}

/// Computes all flows a run needs, rasterizing each pose once.
pub fn flow_chain(
    trajectory: &Trajectory,
    mesh: &Mesh,
    anchors: &[usize],
    tolerance: f64,
) -> Result<FlowChain> {
    if trajectory.len() < 2 {
        return Err(Error::Empty("flow chain needs at least two poses".into()));
    }
    if anchors.len() < 2 {
        return Err(Error::Config("flow chain needs at least two anchors".into()));
    }
    if let Some(&bad) = anchors.iter().find(|&&a| a > trajectory.last_index()) {
        return Err(Error::Index(format!("anchor {bad}")));
    }
    let mut anchor_buffers: Vec<Option<GBuffer>> = vec![None; anchors.len()];
    let mut consecutive = Vec::with_capacity(trajectory.len() - 1);
    let mut prev = raster::rasterize(mesh, trajectory.pose(0)?);
    let keep = |k: usize, g: &GBuffer, store: &mut Vec<Option<GBuffer>>| {
        for (slot, &a) in anchors.iter().enumerate() {
            if a == k {
                store[slot] = Some(g.clone());
            }
        }
    };
    keep(0, &prev, &mut anchor_buffers);
    for k in 1..trajectory.len() {
        let next = raster::rasterize(mesh, trajectory.pose(k)?);
        consecutive.push(compute_flow(mesh, trajectory, k - 1, k, &prev, &next, tolerance)?);
        keep(k, &next, &mut anchor_buffers);
        prev = next;
    }
    let mut anchor_flows = Vec::with_capacity(anchors.len() - 1);
    for k in 0..anchors.len() - 1 {
        let (a, b) = (anchors[k], anchors[k + 1]);
        let ga = anchor_buffers[k].as_ref().expect("anchor rasterized");
        let gb = anchor_buffers[k + 1].as_ref().expect("anchor rasterized");
        anchor_flows.push(compute_flow(mesh, trajectory, b, a, gb, ga, tolerance)?);
    }
    Ok(FlowChain {
        consecutive,
        anchors: anchor_flows,
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::{Matrix4, Point3};

    use super::*;
    use crate::raster::rasterize;
    use crate::scene::{CameraPose, Intrinsics};

    fn intr(w: u32, h: u32, f: f64) -> Intrinsics {
        Intrinsics {
            fx: f,
            fy: f,
            cx: w as f64 / 2.0,
            cy: h as f64 / 2.0,
            width: w,
            height: h,
        }
    }

    fn translated(tx: f64, ty: f64, k: Intrinsics) -> CameraPose {
        let mut m = Matrix4::identity();
        // Camera center moves by +t, so world->camera translation is -t.
        m[(0, 3)] = -tx;
        m[(1, 3)] = -ty;
        CameraPose::new(m, k).unwrap()
    }

    fn plane(z: f64, half: f64, id: u32) -> Mesh {
        let v = vec![
            Point3::new(-half, -half, z),
            Point3::new(half, -half, z),
            Point3::new(half, half, z),
            Point3::new(-half, half, z),
        ];
        Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]], vec![id, id]).unwrap()
    }

    #[test]
    fn identity_view_has_zero_flow_and_full_mask() {
        let k = intr(48, 32, 40.0);
        let t = Trajectory::new(vec![translated(0.0, 0.0, k)]).unwrap();
        let mesh = plane(2.0, 0.6, 0);
        let g = rasterize(&mesh, t.pose(0).unwrap());
        let (f, m) = compute_flow(&mesh, &t, 0, 0, &g, &g, 1e-3).unwrap();
        assert_eq!(m.mask, g.coverage());
        for (i, fl) in f.flow.iter().enumerate() {
            if f.valid[i] {
                assert!(fl[0].abs() < 1e-9 && fl[1].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn translation_over_plane_gives_uniform_flow() {
        let k = intr(64, 48, 50.0);
        let (d, tx) = (3.0, 0.2);
        let t = Trajectory::new(vec![translated(0.0, 0.0, k), translated(tx, 0.0, k)]).unwrap();
        let mesh = plane(d, 10.0, 0);
        let g0 = rasterize(&mesh, t.pose(0).unwrap());
        let g1 = rasterize(&mesh, t.pose(1).unwrap());
        let (f, m) = compute_flow(&mesh, &t, 0, 1, &g0, &g1, 1e-3).unwrap();
        let expected = -k.fx * tx / d;
        let mut n = 0;
        for i in 0..f.flow.len() {
            if f.valid[i] {
                n += 1;
                assert!((f.flow[i][0] - expected).abs() < 1e-3);
                assert!(f.flow[i][1].abs() < 1e-3);
            }
        }
        // Columns whose destination leaves the image are invalid.
        let cols = (0..64).filter(|&x| x as f64 + 0.5 + expected >= 0.0).count();
        assert_eq!(n, 48 * cols);
        assert!(m.mask.count() > 0);
    }

    #[test]
    fn occluded_far_plane_is_masked() {
        let k = intr(64, 64, 64.0);
        let t = Trajectory::new(vec![translated(0.0, 0.0, k), translated(0.6, 0.0, k)]).unwrap();
        // Near plane offset so that it hides part of the far plane only in view 1.
        let near = plane(1.0, 0.2, 1).translated(nalgebra::Vector3::new(0.6, 0.0, 0.0));
        let mesh = plane(3.0, 3.0, 0).merged(&near, 0);
        let g0 = rasterize(&mesh, t.pose(0).unwrap());
        let g1 = rasterize(&mesh, t.pose(1).unwrap());
        let (f, m) = compute_flow(&mesh, &t, 0, 1, &g0, &g1, 1e-3).unwrap();
        // The far-plane pixel straight ahead of view 0 lands behind the near plane in view 1.
        let c = 32 * 64 + 32;
        assert!(f.valid[c]);
        assert_eq!(g0.object_id[c], 0);
        assert!(!m.mask.data[c]);
        assert!(m.mask.count() > 0);
    }

    #[test]
    fn mask_is_monotone_in_tolerance() {
        let k = intr(40, 40, 40.0);
        let t = Trajectory::new(vec![translated(0.0, 0.0, k), translated(0.3, 0.1, k)]).unwrap();
        let mesh = plane(3.0, 3.0, 0).merged(&plane(1.5, 0.3, 1), 0);
        let g0 = rasterize(&mesh, t.pose(0).unwrap());
        let g1 = rasterize(&mesh, t.pose(1).unwrap());
        let mut prev: Option<Plane<bool>> = None;
        for tol in [1e-6, 1e-4, 1e-3, 1e-2, 1.0] {
            let (_, m) = compute_flow(&mesh, &t, 0, 1, &g0, &g1, tol).unwrap();
            if let Some(p) = &prev {
                assert!(p.data.iter().zip(&m.mask.data).all(|(&a, &b)| !a || b));
            }
            prev = Some(m.mask);
        }
    }

    #[test]
    fn out_of_range_index() {
        let k = intr(8, 8, 8.0);
        let t = Trajectory::new(vec![translated(0.0, 0.0, k)]).unwrap();
        let mesh = plane(2.0, 1.0, 0);
        let g = rasterize(&mesh, t.pose(0).unwrap());
        assert!(matches!(
            compute_flow(&mesh, &t, 0, 3, &g, &g, 1e-3),
            Err(Error::Index(_))
        ));
    }

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 2, |x, y, c| (x * 3 + y * 7 + c * 11) as f32 * 0.01)
    }

    fn full_mask(w: usize, h: usize) -> OcclusionMask {
        OcclusionMask {
            mask: Plane::filled(w, h, true),
            tolerance: 1e-3,
        }
    }

    #[test]
    fn warp_with_zero_flow_is_identity() {
        let img = ramp(20, 10);
        let (out, holes) =
            warp_image(&img, &FlowField::constant(20, 10, 0.0, 0.0), &full_mask(20, 10)).unwrap();
        assert_eq!(out, img);
        assert_eq!(holes.count(), 0);
    }

    #[test]
    fn warp_with_integer_shift() {
        let img = ramp(20, 10);
        let (out, _) =
            warp_image(&img, &FlowField::constant(20, 10, 5.0, 0.0), &full_mask(20, 10)).unwrap();
        for y in 0..10 {
            for x in 0..15 {
                assert_eq!(out.pixel(x, y), img.pixel(x + 5, y));
            }
        }
    }

    #[test]
    fn warp_with_empty_mask_is_all_holes() {
        let img = ramp(6, 4);
        let mask = OcclusionMask {
            mask: Plane::filled(6, 4, false),
            tolerance: 1e-3,
        };
        let (out, holes) = warp_image(&img, &FlowField::constant(6, 4, 1.0, 1.0), &mask).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
        assert_eq!(holes.count(), 24);
        let small = ramp(5, 4);
        assert!(warp_image(&small, &FlowField::constant(6, 4, 0.0, 0.0), &mask).is_err());
    }

    #[test]
    fn chain_counts_and_static_trajectory() {
        let k = intr(24, 24, 24.0);
        let p = translated(0.0, 0.0, k);
        let t = Trajectory::new(vec![p; 4]).unwrap();
        let mesh = plane(2.0, 0.5, 0);
        let chain = flow_chain(&t, &mesh, &[0, 3], 1e-3).unwrap();
        assert_eq!(chain.consecutive.len(), 3);
        assert_eq!(chain.anchors.len(), 1);
        assert_eq!(
            (chain.anchors[0].0.src_index, chain.anchors[0].0.dst_index),
            (3, 0)
        );
        for (f, _) in chain.consecutive.iter().chain(&chain.anchors) {
            assert!(f.flow.iter().all(|v| v[0].abs() < 1e-9 && v[1].abs() < 1e-9));
        }
        let single = Trajectory::new(vec![p]).unwrap();
        assert!(flow_chain(&single, &mesh, &[0, 0], 1e-3).is_err());
    }
}
