use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Triangles with area at or below this (world units²) are excluded from
/// rasterization and topology.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Indexed triangle mesh with a per-triangle object label.
#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
    object_ids: Vec<u32>,
    face_normals: Vec<Vector3<f64>>,
    degenerate: Vec<bool>,
}

impl Mesh {
    pub fn new(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[u32; 3]>,
        object_ids: Vec<u32>,
    ) -> Result<Self> {
        if object_ids.len() != triangles.len() {
            return Err(Error::Mesh(format!(
                "{} object ids for {} triangles",
                object_ids.len(),
                triangles.len()
            )));
        }
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i as usize >= nv) {
                return Err(Error::Mesh(format!(
                    "triangle {t} references vertex {bad} but only {nv} vertices exist"
                )));
            }
        }
        let mut face_normals = Vec::with_capacity(triangles.len());
        let mut degenerate = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            let cross = (b - a).cross(&(c - a));
            let area = 0.5 * cross.norm();
            if area <= DEGENERATE_AREA || !area.is_finite() {
                log::warn!("triangle {t} is degenerate (area {area:e}); excluded");
                face_normals.push(Vector3::zeros());
                degenerate.push(true);
            } else {
                face_normals.push(cross / cross.norm());
                degenerate.push(false);
            }
        }
        Ok(Self {
            vertices,
            triangles,
            object_ids,
            face_normals,
            degenerate,
        })
    }

    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            triangles: Vec::new(),
            object_ids: Vec::new(),
            face_normals: Vec::new(),
            degenerate: Vec::new(),
        }
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn object_ids(&self) -> &[u32] {
        &self.object_ids
    }

    pub fn face_normals(&self) -> &[Vector3<f64>] {
        &self.face_normals
    }

    pub fn is_degenerate(&self, face: usize) -> bool {
        self.degenerate[face]
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// World-space corners of triangle `face`.
    #[inline]
    pub fn corners(&self, face: usize) -> [Point3<f64>; 3] {
        self.triangles[face].map(|i| self.vertices[i as usize])
    }

    /// Same geometry with every triangle's winding reversed.
    pub fn flipped(&self) -> Mesh {
        let tris = self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect();
        Mesh::new(self.vertices.clone(), tris, self.object_ids.clone())
            .expect("flipping preserves validity")
    }

    /// Concatenates two meshes, shifting `other`'s object ids by `id_offset`.
    pub fn merged(&self, other: &Mesh, id_offset: u32) -> Mesh {
        let base = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(other.triangles.iter().map(|t| t.map(|i| i + base)));
        let mut ids = self.object_ids.clone();
        ids.extend(other.object_ids.iter().map(|i| i + id_offset));
        Mesh::new(vertices, triangles, ids).expect("merging valid meshes")
    }

    /// Rigidly translated copy.
    pub fn translated(&self, offset: Vector3<f64>) -> Mesh {
        let vertices = self.vertices.iter().map(|p| p + offset).collect();
        Mesh::new(vertices, self.triangles.clone(), self.object_ids.clone())
            .expect("translation preserves validity")
    }

    /// Axis-aligned box `[min, max]` as 12 outward-wound triangles.
    pub fn axis_box(min: Point3<f64>, max: Point3<f64>, object_id: u32) -> Mesh {
        let v = |x: bool, y: bool, z: bool| {
            Point3::new(
                if x { max.x } else { min.x },
                if y { max.y } else { min.y },
                if z { max.z } else { min.z },
            )
        };
        let vertices = vec![
            v(false, false, false),
            v(true, false, false),
            v(true, true, false),
            v(false, true, false),
            v(false, false, true),
            v(true, false, true),
            v(true, true, true),
            v(false, true, true),
        ];
        let triangles = vec![
            [0, 3, 2],
            [0, 2, 1], // -z
            [4, 5, 6],
            [4, 6, 7], // +z
            [0, 1, 5],
            [0, 5, 4], // -y
            [3, 7, 6],
            [3, 6, 2], // +y
            [0, 4, 7],
            [0, 7, 3], // -x
            [1, 2, 6],
            [1, 6, 5], // +x
        ];
        Mesh::new(vertices, triangles, vec![object_id; 12]).expect("box is valid")
    }
}
