use std::collections::{BTreeMap, VecDeque};

use super::Mesh;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    /// One adjacent triangle.
    Border,
    /// Exactly two adjacent triangles.
    Manifold,
    /// Three or more adjacent triangles.
    NonManifold,
}

/// Undirected edge with its adjacent (non-degenerate) triangles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopoEdge {
    /// Vertex indices, smaller first.
    pub vertices: [u32; 2],
    /// Adjacent triangle indices, ascending.
    pub faces: Vec<u32>,
}

impl TopoEdge {
    pub fn kind(&self) -> EdgeKind {
        match self.faces.len() {
            0 | 1 => EdgeKind::Border,
            2 => EdgeKind::Manifold,
            _ => EdgeKind::NonManifold,
        }
    }
}

/// Edge adjacency plus a winding orientation that is consistent within each
/// manifold-connected component.
#[derive(Clone, Debug)]
pub struct MeshTopology {
    edges: Vec<TopoEdge>,
    orientation: Vec<i8>,
    component: Vec<u32>,
}

impl MeshTopology {
    /// Edges sorted by vertex pair.
    pub fn edges(&self) -> &[TopoEdge] {
        &self.edges
    }

    /// `+1` or `-1` per triangle: multiply the stored face normal by this to
    /// get a normal consistent with its manifold neighbours. Degenerate
    /// triangles carry 0.
    pub fn orientation(&self, face: usize) -> i8 {
        self.orientation[face]
    }

    /// Connected-component label per triangle (`u32::MAX` for degenerate).
    pub fn component(&self, face: usize) -> u32 {
        self.component[face]
    }

    pub fn count(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind() == kind).count()
    }
}

/// Direction in which `tri` traverses the edge `a -> b`: `+1`, `-1`, or 0 if
/// the edge is not one of its sides.
fn traversal(tri: [u32; 3], a: u32, b: u32) -> i8 {
    for k in 0..3 {
        let (p, q) = (tri[k], tri[(k + 1) % 3]);
        if p == a && q == b {
            return 1;
        }
        if p == b && q == a {
            return -1;
        }
    }
    0
}

pub fn build_topology(mesh: &Mesh) -> MeshTopology {
    let tris = mesh.triangles();
    let mut map: BTreeMap<[u32; 2], Vec<u32>> = BTreeMap::new();
    for (f, tri) in tris.iter().enumerate() {
        if mesh.is_degenerate(f) {
            continue;
        }
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if a == b {
                continue;
            }
            let key = if a < b { [a, b] } else { [b, a] };
            let faces = map.entry(key).or_default();
            if faces.last() != Some(&(f as u32)) {
                faces.push(f as u32);
            }
        }
    }
    let edges: Vec<TopoEdge> = map
        .into_iter()
        .map(|(vertices, faces)| TopoEdge { vertices, faces })
        .collect();

    // Face -> manifold edges, for the orientation flood fill.
    let mut face_edges: Vec<Vec<u32>> = vec![Vec::new(); tris.len()];
    for (e, edge) in edges.iter().enumerate() {
        if edge.kind() == EdgeKind::Manifold {
            for &f in &edge.faces {
                face_edges[f as usize].push(e as u32);
            }
        }
    }

    let mut orientation = vec![0i8; tris.len()];
    let mut component = vec![u32::MAX; tris.len()];
    let mut next_component = 0;
    let mut queue = VecDeque::new();
    for seed in 0..tris.len() {
        if mesh.is_degenerate(seed) || orientation[seed] != 0 {
            continue;
        }
        orientation[seed] = 1;
        component[seed] = next_component;
        queue.push_back(seed);
        while let Some(f) = queue.pop_front() {
            for &e in &face_edges[f] {
                let edge = &edges[e as usize];
                let g = if edge.faces[0] as usize == f {
                    edge.faces[1]
                } else {
                    edge.faces[0]
                } as usize;
                if orientation[g] != 0 {
                    continue;
                }
                let [a, b] = edge.vertices;
                let df = traversal(tris[f], a, b);
                let dg = traversal(tris[g], a, b);
                // Consistent neighbours traverse the shared edge in opposite directions.
                orientation[g] = -orientation[f] * df * dg;
                component[g] = next_component;
                queue.push_back(g);
            }
        }
        next_component += 1;
    }

    MeshTopology {
        edges,
        orientation,
        component,
    }
}
