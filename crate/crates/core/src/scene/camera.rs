use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const RIGID_TOL: f64 = 1e-6;

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = |b: bool, msg: &str| if b { Ok(()) } else { Err(Error::Camera(msg.into())) };
        ok(self.width > 0 && self.height > 0, "resolution must be positive")?;
        ok(self.fx > 0.0 && self.fy > 0.0, "focal lengths must be positive")?;
        ok(
            self.cx > 0.0 && self.cx < self.width as f64,
            "principal point cx outside image",
        )?;
        ok(
            self.cy > 0.0 && self.cy < self.height as f64,
            "principal point cy outside image",
        )
    }

    /// Rescales to a new resolution, keeping the field of view.
    pub fn resized(&self, width: u32, height: u32) -> Intrinsics {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Intrinsics {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
        }
    }
}

/// World-to-camera rigid transform plus intrinsics.
///
/// Camera axes follow the OpenCV convention: +x right, +y down, +z forward.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPose {
    w2c: Matrix4<f64>,
    intrinsics: Intrinsics,
}

impl CameraPose {
    pub fn new(w2c: Matrix4<f64>, intrinsics: Intrinsics) -> Result<Self> {
        intrinsics.validate()?;
        if w2c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Camera("non-finite transform".into()));
        }
        let r: Matrix3<f64> = w2c.fixed_view::<3, 3>(0, 0).into_owned();
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = r.determinant();
        let bottom = w2c.fixed_view::<1, 4>(3, 0);
        let bottom_ok = bottom[0].abs() < 1e-12
            && bottom[1].abs() < 1e-12
            && bottom[2].abs() < 1e-12
            && (bottom[3] - 1.0).abs() < 1e-12;
        if ortho > RIGID_TOL || (det - 1.0).abs() > RIGID_TOL || !bottom_ok {
            return Err(Error::Camera(format!(
                "non-rigid transform (orthonormality error {ortho:e}, det {det})"
            )));
        }
        Ok(Self { w2c, intrinsics })
    }

    pub fn w2c(&self) -> &Matrix4<f64> {
        &self.w2c
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width as usize
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height as usize
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.w2c.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.w2c.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation().transpose() * self.translation()))
    }

    #[inline]
    pub fn to_camera(&self, p: &Point3<f64>) -> Vector3<f64> {
        let m = &self.w2c;
        Vector3::new(
            m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)] * p.z + m[(0, 3)],
            m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)] * p.z + m[(1, 3)],
            m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)] * p.z + m[(2, 3)],
        )
    }

    /// Camera-space direction of the ray through continuous pixel
    /// coordinates `(u, v)`, scaled so its z component is 1.
    #[inline]
    pub fn ray_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0)
    }

    /// Same pose at another resolution.
    pub fn resized(&self, width: u32, height: u32) -> Result<CameraPose> {
        CameraPose::new(self.w2c, self.intrinsics.resized(width, height))
    }
}

/// Pose looking from `eye` toward `target` with `up` as the world up hint.
pub fn look_at(
    eye: Point3<f64>,
    target: Point3<f64>,
    up: Vector3<f64>,
    intrinsics: Intrinsics,
) -> Result<CameraPose> {
    let forward = (target - eye).normalize();
    let right = forward.cross(&up);
    if right.norm() < 1e-9 {
        return Err(Error::Camera("view direction parallel to up vector".into()));
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let t = -(r * eye.coords);
    let mut w2c = Matrix4::identity();
    w2c.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    w2c.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    CameraPose::new(w2c, intrinsics)
}

/// `frames` poses on a circular arc around `center` (z up), all looking at it.
pub fn orbit_trajectory(
    center: Point3<f64>,
    radius: f64,
    elevation_deg: f64,
    start_deg: f64,
    sweep_deg: f64,
    frames: usize,
    intrinsics: Intrinsics,
) -> Result<Trajectory> {
    let elev = elevation_deg.to_radians();
    let poses = (0..frames)
        .map(|i| {
            let s = if frames > 1 {
                i as f64 / (frames - 1) as f64
            } else {
                0.0
            };
            let az = (start_deg + s * sweep_deg).to_radians();
            let eye = center
                + Vector3::new(
                    radius * elev.cos() * az.cos(),
                    radius * elev.cos() * az.sin(),
                    radius * elev.sin(),
                );
            look_at(eye, center, Vector3::z(), intrinsics)
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(poses)
}

/// On-disk pose record: `w2c` is 16 floats in row-major order.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct PoseRecord {
    w2c: Vec<f64>,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

/// Ordered camera poses `0..=N` sharing one resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    poses: Vec<CameraPose>,
}

impl Trajectory {
    pub fn new(poses: Vec<CameraPose>) -> Result<Self> {
        let first = poses
            .first()
            .ok_or_else(|| Error::Schema("trajectory has no poses".into()))?;
        let (w, h) = (first.width(), first.height());
        if let Some(i) = poses.iter().position(|p| p.width() != w || p.height() != h) {
            return Err(Error::Schema(format!(
                "pose {i} resolution {}x{} differs from {w}x{h}",
                poses[i].width(),
                poses[i].height()
            )));
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[CameraPose] {
        &self.poses
    }

    pub fn pose(&self, i: usize) -> Result<&CameraPose> {
        self.poses
            .get(i)
            .ok_or_else(|| Error::Index(format!("pose {i} of {}", self.poses.len())))
    }

    /// Index of the last pose.
    pub fn last_index(&self) -> usize {
        self.poses.len() - 1
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn width(&self) -> usize {
        self.poses[0].width()
    }

    pub fn height(&self) -> usize {
        self.poses[0].height()
    }

    pub fn resized(&self, width: u32, height: u32) -> Result<Trajectory> {
        Trajectory::new(
            self.poses
                .iter()
                .map(|p| p.resized(width, height))
                .collect::<Result<_>>()?,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let records: Vec<PoseRecord> =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let poses = records
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                if r.w2c.len() != 16 {
                    return Err(Error::Schema(format!(
                        "pose {i}: w2c needs 16 values, got {}",
                        r.w2c.len()
                    )));
                }
                let w2c = Matrix4::from_row_slice(&r.w2c);
                let intr = Intrinsics {
                    fx: r.fx,
                    fy: r.fy,
                    cx: r.cx,
                    cy: r.cy,
                    width: r.width,
                    height: r.height,
                };
                CameraPose::new(w2c, intr).map_err(|e| Error::Camera(format!("pose {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(poses)
    }

    pub fn to_json(&self) -> String {
        let records: Vec<PoseRecord> = self
            .poses
            .iter()
            .map(|p| {
                let k = p.intrinsics();
                let m = p.w2c();
                PoseRecord {
                    w2c: (0..16).map(|i| m[(i / 4, i % 4)]).collect(),
                    fx: k.fx,
                    fy: k.fy,
                    cx: k.cx,
                    cy: k.cy,
                    width: k.width,
                    height: k.height,
                }
            })
            .collect();
        serde_json::to_string_pretty(&records).expect("pose records serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Reads a trajectory JSON file: an array of
/// `{"w2c": [16 floats, row-major], "fx", "fy", "cx", "cy", "width", "height"}`.
pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Trajectory::from_json(&text)
}
