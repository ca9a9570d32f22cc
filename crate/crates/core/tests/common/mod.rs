//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use geoguide_core::edges::Segment;
use geoguide_core::scene::{look_at, CameraPose, Intrinsics, Mesh};
use nalgebra::{Point3, Vector3};
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn intrinsics(width: u32, height: u32, focal: f64) -> Intrinsics {
    Intrinsics {
        fx: focal,
        fy: focal,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        width,
        height,
    }
}

/// Two random boxes plus a soup of random triangles, at most `max_tris`.
pub fn random_mesh<R: Rng>(rng: &mut R, max_tris: usize) -> Mesh {
    let mut mesh = Mesh::empty();
    for id in 0..2u32 {
        let c = Point3::new(
            rng.gen_range(-0.8..0.8),
            rng.gen_range(-0.8..0.8),
            rng.gen_range(-0.8..0.8),
        );
        let h = Vector3::new(
            rng.gen_range(0.2..0.7),
            rng.gen_range(0.2..0.7),
            rng.gen_range(0.2..0.7),
        );
        mesh = mesh.merged(&Mesh::axis_box(c - h, c + h, 0), id);
    }
    let extra = rng.gen_range(0..=max_tris - 24);
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for k in 0..extra {
        let c = Vector3::new(
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-1.2..1.2),
        );
        for _ in 0..3 {
            let d = Vector3::new(
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-0.4..0.4),
            );
            vertices.push(Point3::from(c + d));
        }
        triangles.push([3 * k as u32, 3 * k as u32 + 1, 3 * k as u32 + 2]);
    }
    if extra > 0 {
        let ids = vec![0; extra];
        mesh = mesh.merged(&Mesh::new(vertices, triangles, ids).unwrap(), 2);
    }
    mesh
}

fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Two cameras looking at the origin from nearby random directions.
pub fn random_pose_pair<R: Rng>(rng: &mut R, intr: Intrinsics) -> (CameraPose, CameraPose) {
    let dir = random_unit(rng);
    let radius = rng.gen_range(4.0..6.0);
    let eye_a = Point3::from(dir * radius);
    let jitter = random_unit(rng) * rng.gen_range(0.2..1.2);
    let eye_b = Point3::from((dir + jitter * 0.3).normalize() * (radius + rng.gen_range(-0.5..0.5)));
    let target_a = Point3::from(random_unit(rng) * 0.2);
    let target_b = Point3::from(random_unit(rng) * 0.2);
    let up = |eye: &Point3<f64>| {
        if eye.coords.normalize().z.abs() > 0.9 {
            Vector3::x()
        } else {
            Vector3::z()
        }
    };
    (
        look_at(eye_a, target_a, up(&eye_a), intr).unwrap(),
        look_at(eye_b, target_b, up(&eye_b), intr).unwrap(),
    )
}

/// Nearest two-sided ray/triangle hit in world space: `(t, face)`.
pub fn raycast(mesh: &Mesh, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for f in 0..mesh.num_triangles() {
        let [a, b, c] = mesh.corners(f);
        let e1 = b - a;
        let e2 = c - a;
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-14 {
            continue;
        }
        let inv = 1.0 / det;
        let s = origin - a;
        let u = s.dot(&p) * inv;
        if !(-1e-12..=1.0 + 1e-12).contains(&u) {
            continue;
        }
        let q = s.cross(&e1);
        let v = dir.dot(&q) * inv;
        if v < -1e-12 || u + v > 1.0 + 1e-12 {
            continue;
        }
        let t = e2.dot(&q) * inv;
        if t > 1e-9 && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, f));
        }
    }
    best
}

/// World-space ray through the center of pixel `(x, y)`.
pub fn pixel_ray(pose: &CameraPose, x: usize, y: usize) -> (Point3<f64>, Vector3<f64>) {
    let d = pose.ray_direction(x as f64 + 0.5, y as f64 + 0.5);
    (pose.center(), pose.rotation().transpose() * d)
}

/// `(u, v, z)` projection.
pub fn project(pose: &CameraPose, p: &Point3<f64>) -> (f64, f64, f64) {
    let c = pose.to_camera(p);
    let k = pose.intrinsics();
    (k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy, c.z)
}

pub fn inside(pose: &CameraPose, u: f64, v: f64, z: f64) -> bool {
    z > 1e-6 && u >= 0.0 && v >= 0.0 && u < pose.width() as f64 && v < pose.height() as f64
}

/// Surface point seen through each pixel, by brute force.
pub fn surface_points(mesh: &Mesh, pose: &CameraPose) -> Vec<Option<Point3<f64>>> {
    let (w, h) = (pose.width(), pose.height());
    (0..w * h)
        .map(|i| {
            let (o, d) = pixel_ray(pose, i % w, i / w);
            raycast(mesh, &o, &d).map(|(t, _)| o + d * t)
        })
        .collect()
}

/// Brute-force correspondence of each pixel of view `a` in view `b`:
/// `(flow, visible)` where the point projects inside `b`.
pub struct OracleFlow {
    pub flow: Vec<Option<[f64; 2]>>,
    pub visible: Vec<bool>,
}

pub fn raycast_flow(mesh: &Mesh, a: &CameraPose, b: &CameraPose, tol: f64) -> OracleFlow {
    let w = a.width();
    let points = surface_points(mesh, a);
    let mut flow = Vec::with_capacity(points.len());
    let mut visible = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let Some(p) = p else {
            flow.push(None);
            visible.push(false);
            continue;
        };
        let (u, v, z) = project(b, p);
        if !inside(b, u, v, z) {
            flow.push(None);
            visible.push(false);
            continue;
        }
        flow.push(Some([u - ((i % w) as f64 + 0.5), v - ((i / w) as f64 + 0.5)]));
        let center = b.center();
        let dir = (p - center).normalize();
        let seen = raycast(mesh, &center, &dir)
            .map(|(t, _)| {
                let (_, _, zq) = project(b, &(center + dir * t));
                (z - zq).abs() <= tol * z
            })
            .unwrap_or(false);
        visible.push(seen);
    }
    OracleFlow { flow, visible }
}

/// Flow obtained the literal way: view `b` is rendered with each pixel
/// colored by its own coordinates (16-bit fixed point), that image is
/// projected back onto the surface where `b` sees it, and the surface is
/// viewed from `a`. The color a pixel of `a` ends up with is its
/// correspondence in `b`.
pub fn coordinate_encoded_flow(mesh: &Mesh, a: &CameraPose, b: &CameraPose, tol: f64) -> Vec<Option<[f64; 2]>> {
    let (wb, hb) = (b.width(), b.height());
    let scale = 65535.0 / wb.max(hb) as f64;
    let quant = |v: f64| (v * scale).round().clamp(0.0, 65535.0) as u16;
    let b_points = surface_points(mesh, b);
    let depth_b: Vec<Option<f64>> = b_points.iter().map(|p| p.map(|p| project(b, &p).2)).collect();
    // Coordinate color image of view b.
    let color_b: Vec<Option<[u16; 2]>> = (0..wb * hb)
        .map(|i| depth_b[i].map(|_| [quant((i % wb) as f64 + 0.5), quant((i / wb) as f64 + 0.5)]))
        .collect();
    let tap = |f: f64, len: usize| {
        let f = f.clamp(0.0, (len - 1) as f64);
        let i0 = f.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, f - i0 as f64)
    };
    let lookup = |u: f64, v: f64| -> Option<([f64; 2], f64)> {
        let (x0, x1, wx) = tap(u - 0.5, wb);
        let (y0, y1, wy) = tap(v - 0.5, hb);
        let idx = [y0 * wb + x0, y0 * wb + x1, y1 * wb + x0, y1 * wb + x1];
        let wts = [(1.0 - wx) * (1.0 - wy), wx * (1.0 - wy), (1.0 - wx) * wy, wx * wy];
        if idx.iter().all(|&i| color_b[i].is_some()) {
            let mut c = [0.0; 2];
            let mut d = 0.0;
            for (&i, &wt) in idx.iter().zip(&wts) {
                let col = color_b[i].unwrap();
                c[0] += wt * col[0] as f64 / scale;
                c[1] += wt * col[1] as f64 / scale;
                d += wt * depth_b[i].unwrap();
            }
            Some((c, d))
        } else {
            let n = (v.floor() as usize).min(hb - 1) * wb + (u.floor() as usize).min(wb - 1);
            color_b[n].map(|col| ([col[0] as f64 / scale, col[1] as f64 / scale], depth_b[n].unwrap()))
        }
    };
    let wa = a.width();
    surface_points(mesh, a)
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let p = p?;
            let (u, v, z) = project(b, &p);
            if !inside(b, u, v, z) {
                return None;
            }
            let (color, depth) = lookup(u, v)?;
            if (z - depth).abs() > tol * z {
                return None;
            }
            Some([color[0] - ((i % wa) as f64 + 0.5), color[1] - ((i / wa) as f64 + 0.5)])
        })
        .collect()
}

/// Distance from `p` to segment `ab` in 2D.
pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - qx).powi(2) + (p[1] - qy).powi(2)).sqrt()
}

pub fn percentile_fraction(errors: &[f64], bound: f64) -> f64 {
    if errors.is_empty() {
        return 1.0;
    }
    errors.iter().filter(|&&e| e <= bound).count() as f64 / errors.len() as f64
}

pub type Key = ([i64; 3], [i64; 3]);

pub fn key(a: &Point3<f64>, b: &Point3<f64>) -> Key {
    let q = |p: &Point3<f64>| [p.x, p.y, p.z].map(|c| (c * 1e6).round() as i64);
    let (a, b) = (q(a), q(b));
    if a <= b { (a, b) } else { (b, a) }
}

pub fn keys(segments: &[Segment]) -> BTreeSet<Key> {
    segments.iter().map(|s| key(&s.a, &s.b)).collect()
}

/// Edges of the axis box [lo, hi]³ as (endpoints, the two adjacent faces).
/// A face is (axis, +1 | -1).
pub fn box_edges(lo: f64, hi: f64) -> Vec<(Key, [(usize, f64); 2])> {
    let mut out = Vec::new();
    for axis in 0..3 {
        let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
        for si in [-1.0, 1.0] {
            for sj in [-1.0, 1.0] {
                let pick = |s: f64| if s < 0.0 { lo } else { hi };
                let mut a = [0.0; 3];
                a[i] = pick(si);
                a[j] = pick(sj);
                let mut b = a;
                a[axis] = lo;
                b[axis] = hi;
                out.push((
                    key(&Point3::from(a), &Point3::from(b)),
                    [(i, si), (j, sj)],
                ));
            }
        }
    }
    out
}

/// Silhouette edges of the box seen from `eye`, by face orientation alone.
pub fn analytic_box_silhouette(lo: f64, hi: f64, eye: &Point3<f64>) -> BTreeSet<Key> {
    let front = |(axis, s): (usize, f64)| {
        let plane = if s < 0.0 { lo } else { hi };
        s * (eye[axis] - plane) > 0.0
    };
    box_edges(lo, hi)
        .into_iter()
        .filter(|(_, [f, g])| front(*f) != front(*g))
        .map(|(k, _)| k)
        .collect()
}

pub fn random_eye<R: Rng>(rng: &mut R) -> Point3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if v.norm() > 0.2 && v.norm() <= 1.0 {
            return Point3::from(v.normalize() * rng.gen_range(3.0..7.0));
        }
    }
}

pub fn pose_at(eye: Point3<f64>, w: u32, h: u32) -> CameraPose {
    let up = if eye.coords.normalize().z.abs() > 0.9 { Vector3::x() } else { Vector3::z() };
    look_at(eye, Point3::new(0.05, -0.03, 0.02), up, intrinsics(w, h, w as f64)).unwrap()
}

/// Projected samples of the visible parts of every cube edge.
pub fn analytic_wireframe(mesh: &Mesh, pose: &CameraPose) -> Vec<[f64; 2]> {
    let eye = pose.center();
    let mut out = Vec::new();
    for ((a, b), _) in box_edges(-1.0, 1.0) {
        let (a, b) = (a.map(|c| c as f64 * 1e-6), b.map(|c| c as f64 * 1e-6));
        for s in 0..=400 {
            let t = s as f64 / 400.0;
            let p = Point3::new(
                a[0] + (b[0] - a[0]) * t,
                a[1] + (b[1] - a[1]) * t,
                a[2] + (b[2] - a[2]) * t,
            );
            let d = p - eye;
            let dist = d.norm();
            let visible = raycast(mesh, &eye, &(d / dist)).is_none_or(|(h, _)| h > dist * (1.0 - 1e-6));
            let (u, v, z) = project(pose, &p);
            if visible && inside(pose, u, v, z) {
                out.push([u, v]);
            }
        }
    }
    out
}

pub fn chamfer(pixels: &[[f64; 2]], samples: &[[f64; 2]]) -> f64 {
    let near = |p: &[f64; 2], set: &[[f64; 2]]| {
        set.iter()
            .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let a: f64 = pixels.iter().map(|p| near(p, samples)).sum::<f64>() / pixels.len() as f64;
    let b: f64 = samples.iter().map(|p| near(p, pixels)).sum::<f64>() / samples.len() as f64;
    0.5 * (a + b)
}

/// Round-trip error `|f_ab(p) + f_ba(p + f_ab(p))|` over visible pixels
/// whose four backward taps are visible and lie on the same face as `p`,
/// so the bilinear lookup never blends across a surface boundary.
pub fn forward_backward_errors(
    fab: &geoguide_core::flow::FlowField,
    vis_ab: &[bool],
    face_a: &[i32],
    fba: &geoguide_core::flow::FlowField,
    vis_ba: &[bool],
    face_b: &[i32],
) -> Vec<f64> {
    let (w, h) = (fab.width, fab.height);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !vis_ab[i] {
                continue;
            }
            let [du, dv] = fab.flow[i];
            let (fx, fy) = (x as f64 + du, y as f64 + dv);
            let (x0, y0) = (fx.floor(), fy.floor());
            if x0 < 0.0 || y0 < 0.0 || x0 + 1.0 >= w as f64 || y0 + 1.0 >= h as f64 {
                continue;
            }
            let (x0, y0) = (x0 as usize, y0 as usize);
            let taps = [y0 * w + x0, y0 * w + x0 + 1, (y0 + 1) * w + x0, (y0 + 1) * w + x0 + 1];
            if !taps.iter().all(|&t| vis_ba[t] && face_b[t] == face_a[i]) {
                continue;
            }
            let (wx, wy) = (fx - x0 as f64, fy - y0 as f64);
            let wts = [(1.0 - wx) * (1.0 - wy), wx * (1.0 - wy), (1.0 - wx) * wy, wx * wy];
            let mut back = [0.0; 2];
            for (t, wt) in taps.iter().zip(wts) {
                back[0] += wt * fba.flow[*t][0];
                back[1] += wt * fba.flow[*t][1];
            }
            out.push(((du + back[0]).powi(2) + (dv + back[1]).powi(2)).sqrt());
        }
    }
    out
}

/// Merged length covered on each of the six unit lines where the boxes
/// [-1, 1]^3 and [0, 2]^3 cross. Errors on a segment off those lines.
pub fn overlap_line_coverage(segments: &[Segment]) -> Result<[f64; 6], String> {
    // The two fixed coordinates of each line, and its free axis.
    let lines: [([Option<f64>; 3], usize); 6] = [
        ([Some(1.0), Some(0.0), None], 2),
        ([Some(1.0), None, Some(0.0)], 1),
        ([Some(0.0), Some(1.0), None], 2),
        ([None, Some(1.0), Some(0.0)], 0),
        ([Some(0.0), None, Some(1.0)], 1),
        ([None, Some(0.0), Some(1.0)], 0),
    ];
    let on_line = |p: &Point3<f64>, fixed: &[Option<f64>; 3]| {
        (0..3).all(|k| fixed[k].is_none_or(|c| (p[k] - c).abs() < 1e-9))
    };
    let mut intervals: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 6];
    for s in segments {
        let hit = lines
            .iter()
            .position(|(fixed, _)| on_line(&s.a, fixed) && on_line(&s.b, fixed))
            .ok_or_else(|| format!("stray intersection segment {s:?}"))?;
        let axis = lines[hit].1;
        intervals[hit].push((s.a[axis].min(s.b[axis]), s.a[axis].max(s.b[axis])));
    }
    let mut out = [0.0; 6];
    for (slot, mut iv) in out.iter_mut().zip(intervals) {
        iv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut reach = f64::NEG_INFINITY;
        for (lo, hi) in iv {
            let lo = lo.max(reach);
            if hi > lo {
                *slot += hi - lo;
            }
            reach = reach.max(hi);
        }
    }
    Ok(out)
}
