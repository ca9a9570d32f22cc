//! On-disk names and readers/writers for run artifacts.

use std::path::{Path, PathBuf};

use geoguide_core::flow::{FlowField, OcclusionMask};
use geoguide_core::png_io;
use geoguide_core::{Plane, Tensor};

use crate::exit::{CliResult, Code, Failure, WithCode};

pub fn edges(out: &Path, k: usize) -> PathBuf {
    out.join(format!("edges/edges_{k:05}.png"))
}

pub fn depth(out: &Path, k: usize) -> PathBuf {
    out.join(format!("depth/depth_{k:05}.ggt"))
}

pub fn object_ids(out: &Path, k: usize) -> PathBuf {
    out.join(format!("ids/object_{k:05}.png"))
}

pub fn anchor_render(out: &Path, k: usize) -> PathBuf {
    out.join(format!("renders/anchor_{k:05}.png"))
}

pub fn flow(out: &Path, i: usize, j: usize) -> PathBuf {
    out.join(format!("flows/flow_{i:05}_{j:05}.ggt"))
}

pub fn flow_valid(out: &Path, i: usize, j: usize) -> PathBuf {
    out.join(format!("flows/valid_{i:05}_{j:05}.png"))
}

pub fn mask(out: &Path, i: usize, j: usize) -> PathBuf {
    out.join(format!("masks/mask_{i:05}_{j:05}.png"))
}

pub fn create_dirs(out: &Path, names: &[&str]) -> CliResult<()> {
    for n in names {
        let d = out.join(n);
        std::fs::create_dir_all(&d).code_ctx(Code::Artifact, format!("creating {}", d.display()))?;
    }
    Ok(())
}

/// Writes `f_{i -> j}` as an `H x W x 2` container, its validity and the
/// occlusion mask. Returns the written paths.
pub fn write_flow(out: &Path, flow: &FlowField, occ: &OcclusionMask) -> CliResult<Vec<PathBuf>> {
    let (i, j) = (flow.src_index, flow.dst_index);
    let data = flow.flow.iter().flat_map(|v| [v[0] as f32, v[1] as f32]).collect();
    let t = Tensor::new(vec![flow.height, flow.width, 2], "HWC", data)?;
    let paths = [self::flow(out, i, j), flow_valid(out, i, j), mask(out, i, j)];
    t.save(&paths[0])?;
    png_io::write_mask(&paths[1], &flow.valid_plane())?;
    png_io::write_mask(&paths[2], &occ.mask)?;
    Ok(paths.to_vec())
}

fn corrupt(path: &Path, what: impl std::fmt::Display) -> Failure {
    Failure::msg(Code::Artifact, format!("{}: {what}", path.display()))
}

/// Reads `f_{i -> j}` back; any missing or malformed piece names its file.
pub fn read_flow(out: &Path, i: usize, j: usize, width: usize, height: usize) -> CliResult<FlowField> {
    let path = flow(out, i, j);
    if !path.exists() {
        return Err(corrupt(&path, "missing flow file"));
    }
    let t = Tensor::load(&path).map_err(|e| corrupt(&path, e))?;
    if t.shape != [height, width, 2] || t.layout != "HWC" {
        return Err(corrupt(&path, format!("flow shape {:?} {}, expected [{height}, {width}, 2] HWC", t.shape, t.layout)));
    }
    if t.data.iter().any(|v| !v.is_finite()) {
        return Err(corrupt(&path, "non-finite flow value"));
    }
    let vpath = flow_valid(out, i, j);
    let valid = png_io::read_mask(&vpath).map_err(|e| corrupt(&vpath, e))?;
    if valid.width != width || valid.height != height {
        return Err(corrupt(&vpath, "validity mask has the wrong size"));
    }
    let vectors = t.data.chunks_exact(2).map(|c| [c[0] as f64, c[1] as f64]).collect();
    FlowField::from_parts(width, height, vectors, valid.data, i, j).map_err(|e| corrupt(&path, e))
}

pub fn read_mask(path: &Path) -> CliResult<Plane<bool>> {
    png_io::read_mask(path).map_err(|e| corrupt(path, e))
}
