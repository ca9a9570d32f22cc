//! Geometric line drawings: silhouette, crease, boundary and intersection
//! edges, rendered with hidden-line removal.

mod bvh;
mod classify;
mod render;
mod tritri;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Plane;

pub use bvh::Bvh;
pub use classify::{classify_edges, intersection_segments, EdgeClassifier};
pub use render::render_edges;
pub use tritri::triangle_intersection;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeConfig {
    /// An edge is a crease when its adjacent face normals differ by more than this.
    pub crease_angle_deg: f64,
    pub line_width_px: u32,
    pub dilation_px: u32,
    pub intersection_enabled: bool,
    /// Relative depth slack for the hidden-line test.
    pub visibility_bias: f64,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            crease_angle_deg: 40.0,
            line_width_px: 1,
            dilation_px: 1,
            intersection_enabled: true,
            visibility_bias: 1e-3,
        }
    }
}

impl EdgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.crease_angle_deg > 0.0 && self.crease_angle_deg < 180.0) {
            return Err(Error::Config(format!(
                "crease_angle_deg {} outside (0, 180)",
                self.crease_angle_deg
            )));
        }
        if self.line_width_px < 1 || self.dilation_px < 1 {
            return Err(Error::Config("line width and dilation must be >= 1".into()));
        }
        if self.visibility_bias.is_nan() || self.visibility_bias < 0.0 {
            return Err(Error::Config("visibility_bias must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeType {
    Silhouette,
    Crease,
    Boundary,
    Intersection,
}

impl EdgeType {
    pub const ALL: [EdgeType; 4] = [
        EdgeType::Silhouette,
        EdgeType::Crease,
        EdgeType::Boundary,
        EdgeType::Intersection,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::Silhouette => "silhouette",
            EdgeType::Crease => "crease",
            EdgeType::Boundary => "boundary",
            EdgeType::Intersection => "intersection",
        }
    }
}

/// Where a segment came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SegmentSource {
    /// Mesh edge between two vertex indices (smaller first).
    MeshEdge([u32; 2]),
    /// Intersection of two triangles (smaller index first).
    Intersection(u32, u32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub a: Point3<f64>,
    pub b: Point3<f64>,
    pub source: SegmentSource,
}

/// Classified 3D segments, one list per edge type.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeSegments {
    pub silhouette: Vec<Segment>,
    pub crease: Vec<Segment>,
    pub boundary: Vec<Segment>,
    pub intersection: Vec<Segment>,
}

impl EdgeSegments {
    pub fn of(&self, kind: EdgeType) -> &[Segment] {
        match kind {
            EdgeType::Silhouette => &self.silhouette,
            EdgeType::Crease => &self.crease,
            EdgeType::Boundary => &self.boundary,
            EdgeType::Intersection => &self.intersection,
        }
    }

    pub fn is_empty(&self) -> bool {
        EdgeType::ALL.iter().all(|&t| self.of(t).is_empty())
    }

    /// Mesh-edge vertex pairs of one type, sorted.
    pub fn mesh_edges(&self, kind: EdgeType) -> Vec<[u32; 2]> {
        let mut v: Vec<[u32; 2]> = self
            .of(kind)
            .iter()
            .filter_map(|s| match s.source {
                SegmentSource::MeshEdge(e) => Some(e),
                SegmentSource::Intersection(..) => None,
            })
            .collect();
        v.sort();
        v
    }
}

/// Rendered edges for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMap {
    /// Union of all types after dilation; 255 on edges.
    pub combined: Plane<u8>,
    /// Undilated 1-px planes indexed by [`EdgeType::index`].
    pub per_type: [Plane<bool>; 4],
    pub frame_index: usize,
}

impl EdgeMap {
    pub fn plane(&self, kind: EdgeType) -> &Plane<bool> {
        &self.per_type[kind.index()]
    }

    pub fn is_empty(&self) -> bool {
        self.combined.data.iter().all(|&v| v == 0)
    }
}

/// Square (Chebyshev) dilation of a binary plane.
pub fn dilate(plane: &Plane<bool>, radius: usize) -> Plane<bool> {
    if radius == 0 {
        return plane.clone();
    }
    let (w, h) = (plane.width, plane.height);
    // Separable: horizontal then vertical.
    let mut tmp = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if plane.data[y * w + x] {
                let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(w - 1));
                tmp[y * w + x0..=y * w + x1].iter_mut().for_each(|v| *v = true);
            }
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if tmp[y * w + x] {
                let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(h - 1));
                for yy in y0..=y1 {
                    out[yy * w + x] = true;
                }
            }
        }
    }
    Plane {
        width: w,
        height: h,
        data: out,
    }
}
