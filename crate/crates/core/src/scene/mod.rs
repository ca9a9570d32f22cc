//! Scene inputs: meshes, camera trajectories and run manifests.

mod camera;
mod manifest;
mod mesh;
mod obj;
mod topology;

pub use camera::{look_at, orbit_trajectory, CameraPose, Intrinsics, Trajectory};
pub use manifest::Manifest;
pub use mesh::{Mesh, DEGENERATE_AREA};
pub use obj::{load_mesh, parse_obj};
pub use topology::{build_topology, EdgeKind, MeshTopology, TopoEdge};

pub use camera::load_trajectory;
