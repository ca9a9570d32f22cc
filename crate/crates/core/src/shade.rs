//! Simple renders of a mesh: Lambert shading and a procedural texture.
//!
//! These stand in for the appearance frames a video generator would
//! produce, so metrics and sampling can be exercised on synthetic scenes.

use nalgebra::{Point3, Vector3};

use crate::grid::Image;
use crate::raster::{interpolate, GBuffer};
use crate::scene::{CameraPose, Mesh};

/// Per-object base colors, cycled by object id.
const PALETTE: [[f32; 3]; 6] = [
    [0.80, 0.45, 0.30],
    [0.35, 0.60, 0.80],
    [0.55, 0.75, 0.40],
    [0.85, 0.75, 0.35],
    [0.60, 0.45, 0.75],
    [0.70, 0.70, 0.70],
];

const BACKGROUND: [f32; 3] = [0.1, 0.1, 0.12];

/// Two-sided Lambert shading with a headlight plus ambient term.
pub fn shade_lambert(mesh: &Mesh, gbuf: &GBuffer, pose: &CameraPose) -> Image {
    let normals = mesh.face_normals();
    let center = pose.center();
    Image::from_fn(gbuf.width, gbuf.height, 3, |x, y, c| {
        let i = gbuf.index(x, y);
        let face = gbuf.face_id[i];
        if face < 0 {
            return BACKGROUND[c];
        }
        let p = interpolate(mesh, face as usize, gbuf.bary[i]);
        let to_eye: Vector3<f64> = (center - p).normalize();
        let n = normals[face as usize];
        let lambert = n.dot(&to_eye).abs() as f32;
        let base = PALETTE[gbuf.object_id[i] as usize % PALETTE.len()][c];
        base * (0.25 + 0.75 * lambert)
    })
}

/// Smooth world-space color field; identical surface points get identical
/// colors in every view.
pub fn procedural_color(p: &Point3<f64>) -> [f32; 3] {
    let f = |a: f64, b: f64| (0.5 + 0.5 * (a * 2.3 + b * 1.7).sin()) as f32;
    [f(p.x, p.y), f(p.y, p.z + 0.4), f(p.z, p.x - 0.9)]
}

/// Renders the procedural texture; background is black.
pub fn shade_procedural(mesh: &Mesh, gbuf: &GBuffer) -> Image {
    Image::from_fn(gbuf.width, gbuf.height, 3, |x, y, c| {
        let i = gbuf.index(x, y);
        let face = gbuf.face_id[i];
        if face < 0 {
            return 0.0;
        }
        procedural_color(&interpolate(mesh, face as usize, gbuf.bary[i]))[c]
    })
}
