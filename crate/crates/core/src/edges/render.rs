use nalgebra::Vector3;

use super::{dilate, EdgeConfig, EdgeMap, EdgeSegments, EdgeType, Segment};
use crate::grid::Plane;
use crate::par;
use crate::raster::{clip_near, GBuffer, NEAR};
use crate::scene::{CameraPose, Mesh};

/// Screen-space sample spacing along a segment, in pixels.
const SAMPLE_SPACING: f64 = 0.5;

/// Depth of the surface stored at pixel `idx`, extended along its plane to
/// the ray through `(u, v)`. Falls back to the pixel-center depth for
/// grazing planes.
fn surface_depth(gbuf: &GBuffer, mesh: &Mesh, pose: &CameraPose, idx: usize, u: f64, v: f64) -> f64 {
    let face = gbuf.face_id[idx] as usize;
    let [a, b, c] = mesh.corners(face).map(|p| pose.to_camera(&p));
    let n = (b - a).cross(&(c - a));
    let dir = pose.ray_direction(u, v);
    let denom = n.dot(&dir);
    if denom.abs() < 1e-12 * n.norm() {
        return gbuf.depth[idx];
    }
    let t = n.dot(&a) / denom;
    if t > NEAR {
        t
    } else {
        gbuf.depth[idx]
    }
}

/// Integer pixels on the line between two pixels, inclusive.
fn bresenham(x0: i64, y0: i64, x1: i64, y1: i64, out: &mut Vec<(i64, i64)>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        out.push((x, y));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Visible pixels of one segment.
fn trace_segment(
    seg: &Segment,
    gbuf: &GBuffer,
    mesh: &Mesh,
    pose: &CameraPose,
    bias: f64,
) -> Vec<(i64, i64)> {
    let ca = pose.to_camera(&seg.a);
    let cb = pose.to_camera(&seg.b);
    let clipped = clip_near(&[ca, cb], NEAR * 2.0);
    let (a, b): (Vector3<f64>, Vector3<f64>) = match clipped.len() {
        2 => (clipped[0], clipped[1]),
        // A two-point polygon clips to itself plus duplicates; keep the extremes.
        n if n > 2 => (clipped[0], clipped[n - 1]),
        _ => return Vec::new(),
    };
    let k = pose.intrinsics();
    let to_screen = |p: &Vector3<f64>| (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
    let (ua, va) = to_screen(&a);
    let (ub, vb) = to_screen(&b);
    let len = ((ub - ua).powi(2) + (vb - va).powi(2)).sqrt();
    if !len.is_finite() {
        return Vec::new();
    }
    let n = ((len / SAMPLE_SPACING).ceil() as usize).max(1);
    let (w, h) = (gbuf.width as i64, gbuf.height as i64);
    let (inv_za, inv_zb) = (1.0 / a.z, 1.0 / b.z);

    let mut pixels = Vec::new();
    let mut prev: Option<(i64, i64)> = None;
    for s in 0..=n {
        let s = s as f64 / n as f64;
        let u = ua + (ub - ua) * s;
        let v = va + (vb - va) * s;
        // Depth is hyperbolic in screen space: interpolate 1/z linearly.
        let z = 1.0 / (inv_za + (inv_zb - inv_za) * s);
        let (px, py) = (u.floor() as i64, v.floor() as i64);
        let visible = px >= 0 && py >= 0 && px < w && py < h && {
            let idx = py as usize * gbuf.width + px as usize;
            gbuf.face_id[idx] < 0 || z <= surface_depth(gbuf, mesh, pose, idx, u, v) * (1.0 + bias)
        };
        if !visible {
            prev = None;
            continue;
        }
        match prev {
            Some((qx, qy)) if (qx, qy) != (px, py) => bresenham(qx, qy, px, py, &mut pixels),
            Some(_) => {}
            None => pixels.push((px, py)),
        }
        prev = Some((px, py));
    }
    pixels
}

/// Draws the visible parts of `segments` for one view.
///
/// Segments are sampled every half pixel in screen space. A sample is kept
/// when the pixel is uncovered or its depth does not exceed the covering
/// surface's depth at that sample by more than `visibility_bias`. Kept
/// samples are joined with Bresenham lines and stamped `line_width_px` wide;
/// the union of all types is then dilated by `dilation_px`.
pub fn render_edges(
    segments: &EdgeSegments,
    gbuffer: &GBuffer,
    mesh: &Mesh,
    pose: &CameraPose,
    config: &EdgeConfig,
    frame_index: usize,
) -> EdgeMap {
    let (w, h) = (gbuffer.width, gbuffer.height);
    let lw = config.line_width_px.max(1) as i64;
    let (lo, hi) = (-(lw - 1) / 2, lw / 2);
    let per_type = EdgeType::ALL.map(|kind| {
        let traced = par::map_slice(segments.of(kind), |seg| {
            trace_segment(seg, gbuffer, mesh, pose, config.visibility_bias)
        });
        let mut plane = Plane::filled(w, h, false);
        for (x, y) in traced.into_iter().flatten() {
            for dy in lo..=hi {
                for dx in lo..=hi {
                    let (sx, sy) = (x + dx, y + dy);
                    if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                        plane.set(sx as usize, sy as usize, true);
                    }
                }
            }
        }
        plane
    });
    let mut union = Plane::filled(w, h, false);
    for p in &per_type {
        for (u, &v) in union.data.iter_mut().zip(&p.data) {
            *u |= v;
        }
    }
    let combined = dilate(&union, config.dilation_px as usize).to_u8();
    EdgeMap {
        combined,
        per_type,
        frame_index,
    }
}
