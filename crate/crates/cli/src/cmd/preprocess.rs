use std::path::{Path, PathBuf};

use geoguide_core::edges::{render_edges, EdgeClassifier};
use geoguide_core::flow::compute_flow;
use geoguide_core::raster::{rasterize, GBuffer};
use geoguide_core::shade::shade_procedural;
use geoguide_core::{png_io, Plane, Tensor};
use serde_json::json;

use crate::artifacts;
use crate::exit::{CliResult, Code, Failure};
use crate::run::{Overrides, Run};

fn object_id_plane(gbuf: &GBuffer) -> CliResult<Plane<u16>> {
    let data = gbuf
        .object_id
        .iter()
        .map(|&id| u16::try_from(id + 1).map_err(|_| Failure::msg(Code::Geometry, format!("object id {id} does not fit 16 bits"))))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Plane::from_vec(gbuf.width, gbuf.height, data)?)
}

pub fn run(manifest: &Path, overrides: &Overrides) -> CliResult<()> {
    let run = Run::open(manifest, overrides)?;
    let out = &run.out;
    let (w, h, n) = (run.width(), run.height(), run.frames());
    let cfg = &run.manifest.edge_config;
    let tol = run.manifest.noise_config.occlusion_tolerance;
    let classifier = EdgeClassifier::new(&run.mesh, cfg);
    let edges_only = n == 1;
    if edges_only {
        log::warn!("trajectory has a single pose; writing edge maps only");
        artifacts::create_dirs(out, &["edges"])?;
    } else {
        artifacts::create_dirs(out, &["edges", "depth", "ids", "renders", "flows", "masks"])?;
    }

    let mut written: Vec<PathBuf> = Vec::new();
    let mut prev: Option<GBuffer> = None;
    let mut anchor_bufs: Vec<(usize, GBuffer)> = Vec::new();
    let mut anchor_pairs = Vec::new();
    for (k, pose) in run.trajectory.poses().iter().enumerate() {
        let gbuf = rasterize(&run.mesh, pose);
        if gbuf.covered_count() == 0 {
            log::warn!("frame {k}: mesh not visible");
        }
        let map = render_edges(&classifier.classify(pose), &gbuf, &run.mesh, pose, cfg, k);
        let path = artifacts::edges(out, k);
        png_io::write_gray8(&path, &map.combined)?;
        written.push(path);
        if edges_only {
            continue;
        }

        let path = artifacts::depth(out, k);
        Tensor::new(vec![h, w], "HW", gbuf.depth_plane().data)?.save(&path)?;
        written.push(path);
        let path = artifacts::object_ids(out, k);
        png_io::write_gray16(&path, &object_id_plane(&gbuf)?)?;
        written.push(path);

        if let Some(p) = &prev {
            let (flow, occ) = compute_flow(&run.mesh, &run.trajectory, k - 1, k, p, &gbuf, tol)?;
            written.extend(artifacts::write_flow(out, &flow, &occ)?);
        }
        if run.anchors.contains(&k) {
            let path = artifacts::anchor_render(out, k);
            png_io::write_image8(&path, &shade_procedural(&run.mesh, &gbuf))?;
            written.push(path);
            if let Some((a, abuf)) = anchor_bufs.last() {
                let (flow, occ) = compute_flow(&run.mesh, &run.trajectory, k, *a, &gbuf, abuf, tol)?;
                written.extend(artifacts::write_flow(out, &flow, &occ)?);
                anchor_pairs.push([k, *a]);
            }
            anchor_bufs.push((k, gbuf.clone()));
        }
        prev = Some(gbuf);
        log::info!("frame {k} of {n}");
    }

    let consecutive = if edges_only { 0 } else { n - 1 };
    run.record(
        "preprocess",
        &written,
        json!({ "frames": n, "resolution": [w, h], "consecutive_flows": consecutive, "anchor_flows": anchor_pairs }),
    )
}
