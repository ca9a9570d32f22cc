use nalgebra::{Point3, Vector3};

use super::bvh::Bvh;
use super::tritri::triangle_intersection;
use super::{EdgeConfig, EdgeSegments, Segment, SegmentSource};
use crate::par;
use crate::scene::{build_topology, CameraPose, EdgeKind, Mesh, MeshTopology};

/// Segments where triangles of different objects cross, found with a BVH.
/// Pose-independent; sorted by triangle pair.
pub fn intersection_segments(mesh: &Mesh) -> Vec<Segment> {
    let bvh = Bvh::build(mesh);
    let ids = mesh.object_ids();
    par::map_range(mesh.num_triangles(), |f| {
        if mesh.is_degenerate(f) {
            return Vec::new();
        }
        let tf = mesh.corners(f);
        bvh.query(bvh.triangle_bounds(f))
            .into_iter()
            .filter(|&g| g as usize > f && ids[g as usize] != ids[f])
            .filter_map(|g| {
                triangle_intersection(&tf, &mesh.corners(g as usize)).map(|(a, b)| Segment {
                    a,
                    b,
                    source: SegmentSource::Intersection(f as u32, g),
                })
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// View-independent edge sets of a mesh, computed once and reused for every
/// pose. Only silhouettes are evaluated per view.
#[derive(Clone, Debug)]
pub struct EdgeClassifier {
    mesh: Mesh,
    topology: MeshTopology,
    /// Orientation-corrected unit normals.
    normals: Vec<Vector3<f64>>,
    crease: Vec<Segment>,
    boundary: Vec<Segment>,
    intersection: Vec<Segment>,
}

fn mesh_segment(mesh: &Mesh, e: [u32; 2]) -> Segment {
    Segment {
        a: mesh.vertices()[e[0] as usize],
        b: mesh.vertices()[e[1] as usize],
        source: SegmentSource::MeshEdge(e),
    }
}

impl EdgeClassifier {
    pub fn new(mesh: &Mesh, config: &EdgeConfig) -> Self {
        Self::with_topology(mesh, build_topology(mesh), config)
    }

    pub fn with_topology(mesh: &Mesh, topology: MeshTopology, config: &EdgeConfig) -> Self {
        let normals: Vec<Vector3<f64>> = (0..mesh.num_triangles())
            .map(|f| mesh.face_normals()[f] * topology.orientation(f) as f64)
            .collect();
        let cos_threshold = config.crease_angle_deg.to_radians().cos();
        let ids = mesh.object_ids();
        let mut crease = Vec::new();
        let mut boundary = Vec::new();
        for edge in topology.edges() {
            match edge.kind() {
                EdgeKind::Border => boundary.push(mesh_segment(mesh, edge.vertices)),
                EdgeKind::Manifold => {
                    let (f, g) = (edge.faces[0] as usize, edge.faces[1] as usize);
                    let cos = normals[f].dot(&normals[g]).clamp(-1.0, 1.0);
                    // angle > threshold  <=>  cos(angle) < cos(threshold)
                    if cos < cos_threshold {
                        crease.push(mesh_segment(mesh, edge.vertices));
                    }
                    if ids[f] != ids[g] {
                        boundary.push(mesh_segment(mesh, edge.vertices));
                    }
                }
                EdgeKind::NonManifold => {}
            }
        }
        let intersection = if config.intersection_enabled {
            intersection_segments(mesh)
        } else {
            Vec::new()
        };
        Self {
            mesh: mesh.clone(),
            topology,
            normals,
            crease,
            boundary,
            intersection,
        }
    }

    pub fn topology(&self) -> &MeshTopology {
        &self.topology
    }

    /// Whether face `f` faces a camera centered at `eye`, judged at `point`.
    fn front_facing(&self, f: usize, eye: &Point3<f64>, point: &Point3<f64>) -> bool {
        self.normals[f].dot(&(eye - point)) > 0.0
    }

    /// Manifold edges separating a front-facing from a back-facing face.
    pub fn silhouettes(&self, pose: &CameraPose) -> Vec<Segment> {
        let eye = pose.center();
        let edges = self.topology.edges();
        par::map_slice(edges, |edge| {
            if edge.kind() != EdgeKind::Manifold {
                return None;
            }
            let p = self.mesh.vertices()[edge.vertices[0] as usize];
            let (f, g) = (edge.faces[0] as usize, edge.faces[1] as usize);
            (self.front_facing(f, &eye, &p) != self.front_facing(g, &eye, &p))
                .then(|| mesh_segment(&self.mesh, edge.vertices))
        })
        .into_iter()
        .flatten()
        .collect()
    }

    pub fn classify(&self, pose: &CameraPose) -> EdgeSegments {
        EdgeSegments {
            silhouette: self.silhouettes(pose),
            crease: self.crease.clone(),
            boundary: self.boundary.clone(),
            intersection: self.intersection.clone(),
        }
    }
}

/// One-shot classification for a single pose.
pub fn classify_edges(
    mesh: &Mesh,
    topology: &MeshTopology,
    pose: &CameraPose,
    config: &EdgeConfig,
) -> EdgeSegments {
    EdgeClassifier::with_topology(mesh, topology.clone(), config).classify(pose)
}
