//! Deterministic z-buffer rasterization into per-pose G-buffers.
//!
//! Each pixel is sampled at its center `(x + 0.5, y + 0.5)`. Coverage, depth
//! and barycentrics come from intersecting the pixel ray with the camera-space
//! triangle, so barycentrics are perspective-correct by construction. The
//! nearest hit wins; hits within [`DEPTH_TIE`] keep the lower face index.
//! Back faces are not culled.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::grid::Plane;
use crate::par;
use crate::scene::{CameraPose, Mesh};

/// Points at or below this camera-space depth are behind the camera.
pub const NEAR: f64 = 1e-6;
/// Depth differences below this count as ties.
pub const DEPTH_TIE: f64 = 1e-9;

const BAND_ROWS: usize = 16;
const INSIDE_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    /// Camera-space depth.
    pub z: f64,
    pub behind: bool,
}

/// Pinhole projection of a world point to continuous pixel coordinates.
#[inline]
pub fn project(point: &Point3<f64>, pose: &CameraPose) -> Projection {
    let c = pose.to_camera(point);
    let k = pose.intrinsics();
    Projection {
        u: k.fx * c.x / c.z + k.cx,
        v: k.fy * c.y / c.z + k.cy,
        z: c.z,
        behind: c.z <= NEAR,
    }
}

/// Per-pixel rasterization results for one pose.
#[derive(Clone, Debug, PartialEq)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    /// Camera-space depth; 0 where uncovered.
    pub depth: Vec<f64>,
    /// Triangle index; -1 where uncovered.
    pub face_id: Vec<i32>,
    /// Object label; -1 where uncovered.
    pub object_id: Vec<i32>,
    /// Perspective-correct barycentrics of the visible triangle.
    pub bary: Vec<[f64; 3]>,
}

impl GBuffer {
    fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            depth: vec![0.0; n],
            face_id: vec![-1; n],
            object_id: vec![-1; n],
            bary: vec![[0.0; 3]; n],
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn covered(&self, x: usize, y: usize) -> bool {
        self.face_id[self.index(x, y)] >= 0
    }

    pub fn coverage(&self) -> Plane<bool> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.face_id.iter().map(|&f| f >= 0).collect(),
        }
    }

    pub fn depth_plane(&self) -> Plane<f32> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.depth.iter().map(|&d| d as f32).collect(),
        }
    }

    pub fn covered_count(&self) -> usize {
        self.face_id.iter().filter(|&&f| f >= 0).count()
    }
}

/// Camera-space triangle prepared for ray tests.
struct Setup {
    face: usize,
    a: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

/// Clips a camera-space polygon to `z >= near`.
pub(crate) fn clip_near(poly: &[Vector3<f64>], near: f64) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (pin, qin) = (p.z >= near, q.z >= near);
        if pin {
            out.push(p);
        }
        if pin != qin {
            let t = (near - p.z) / (q.z - p.z);
            let mut x = p + (q - p) * t;
            x.z = near;
            out.push(x);
        }
    }
    out
}

fn setup_triangle(mesh: &Mesh, face: usize, pose: &CameraPose) -> Option<Setup> {
    if mesh.is_degenerate(face) {
        return None;
    }
    let [a, b, c] = mesh.corners(face).map(|p| pose.to_camera(&p));
    if a.z <= NEAR && b.z <= NEAR && c.z <= NEAR {
        return None;
    }
    // Bounding box of the visible part; a slightly deeper clip plane keeps
    // projected coordinates finite.
    let clip = clip_near(&[a, b, c], NEAR * 2.0);
    if clip.is_empty() {
        return None;
    }
    let k = pose.intrinsics();
    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in &clip {
        let u = k.fx * p.x / p.z + k.cx;
        let v = k.fy * p.y / p.z + k.cy;
        umin = umin.min(u);
        umax = umax.max(u);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let (w, h) = (pose.width() as f64, pose.height() as f64);
    // Pixel x is sampled at x + 0.5.
    let x0 = (umin - 0.5).ceil().max(0.0);
    let x1 = (umax - 0.5).floor().min(w - 1.0);
    let y0 = (vmin - 0.5).ceil().max(0.0);
    let y1 = (vmax - 0.5).floor().min(h - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return None;
    }
    Some(Setup {
        face,
        a,
        e1: b - a,
        e2: c - a,
        x0: x0 as usize,
        x1: x1 as usize,
        y0: y0 as usize,
        y1: y1 as usize,
    })
}

/// Ray–triangle intersection for a camera ray with `dir.z == 1`.
/// Returns `(depth, barycentrics)`.
#[inline]
fn intersect(s: &Setup, dir: &Vector3<f64>) -> Option<(f64, [f64; 3])> {
    let p = dir.cross(&s.e2);
    let det = s.e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let o = -s.a;
    let b1 = o.dot(&p) * inv;
    if b1 < -INSIDE_EPS {
        return None;
    }
    let q = o.cross(&s.e1);
    let b2 = dir.dot(&q) * inv;
    if b2 < -INSIDE_EPS {
        return None;
    }
    let b0 = 1.0 - b1 - b2;
    if b0 < -INSIDE_EPS {
        return None;
    }
    let t = s.e2.dot(&q) * inv;
    if t <= NEAR || !t.is_finite() {
        return None;
    }
    Some((t, [b0, b1, b2]))
}

/// Rasterizes every non-degenerate triangle of `mesh` from `pose`.
pub fn rasterize(mesh: &Mesh, pose: &CameraPose) -> GBuffer {
    let (width, height) = (pose.width(), pose.height());
    let setups: Vec<Setup> = par::map_range(mesh.num_triangles(), |f| setup_triangle(mesh, f, pose))
        .into_iter()
        .flatten()
        .collect();

    let bands = height.div_ceil(BAND_ROWS);
    let mut binned: Vec<Vec<u32>> = vec![Vec::new(); bands];
    for (i, s) in setups.iter().enumerate() {
        for band in binned.iter_mut().take(s.y1 / BAND_ROWS + 1).skip(s.y0 / BAND_ROWS) {
            band.push(i as u32);
        }
    }

    let object_ids = mesh.object_ids();
    let band_buffers = par::map_range(bands, |band| {
        let row0 = band * BAND_ROWS;
        let rows = BAND_ROWS.min(height - row0);
        let mut buf = GBuffer::empty(width, rows);
        for &si in &binned[band] {
            let s = &setups[si as usize];
            let ya = s.y0.max(row0);
            let yb = s.y1.min(row0 + rows - 1);
            for y in ya..=yb {
                let v = y as f64 + 0.5;
                for x in s.x0..=s.x1 {
                    let dir = pose.ray_direction(x as f64 + 0.5, v);
                    let Some((z, bary)) = intersect(s, &dir) else {
                        continue;
                    };
                    let i = (y - row0) * width + x;
                    let cur = buf.depth[i];
                    if buf.face_id[i] < 0 || z < cur - DEPTH_TIE {
                        buf.depth[i] = z;
                        buf.face_id[i] = s.face as i32;
                        buf.object_id[i] = object_ids[s.face] as i32;
                        buf.bary[i] = bary;
                    }
                }
            }
        }
        buf
    });

    let mut out = GBuffer::empty(width, height);
    for (band, buf) in band_buffers.into_iter().enumerate() {
        let start = band * BAND_ROWS * width;
        let n = buf.depth.len();
        out.depth[start..start + n].copy_from_slice(&buf.depth);
        out.face_id[start..start + n].copy_from_slice(&buf.face_id);
        out.object_id[start..start + n].copy_from_slice(&buf.object_id);
        out.bary[start..start + n].copy_from_slice(&buf.bary);
    }
    out
}

/// World point seen at pixel `(x, y)`: the barycentric combination of the
/// stored face's corners.
pub fn unproject(gbuf: &GBuffer, mesh: &Mesh, x: usize, y: usize) -> Result<Point3<f64>> {
    if x >= gbuf.width || y >= gbuf.height {
        return Err(Error::Index(format!(
            "pixel ({x}, {y}) outside {}x{}",
            gbuf.width, gbuf.height
        )));
    }
    let i = gbuf.index(x, y);
    let face = gbuf.face_id[i];
    if face < 0 {
        return Err(Error::Uncovered { x, y });
    }
    Ok(interpolate(mesh, face as usize, gbuf.bary[i]))
}

#[inline]
pub(crate) fn interpolate(mesh: &Mesh, face: usize, bary: [f64; 3]) -> Point3<f64> {
    let [a, b, c] = mesh.corners(face);
    Point3::from(a.coords * bary[0] + b.coords * bary[1] + c.coords * bary[2])
}
