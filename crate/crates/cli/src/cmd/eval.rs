use std::collections::BTreeMap;
use std::path::Path;

use geoguide_core::flow::compute_flow;
use geoguide_core::metrics::{composite_pseudo_gt, frame_metrics, psnr_d, FrameMetrics};
use geoguide_core::raster::rasterize;
use geoguide_core::{png_io, Image, Plane, Tensor};
use serde::Serialize;
use serde_json::json;

use crate::artifacts;
use crate::exit::{CliResult, Code, Failure, WithCode};
use crate::run::{Overrides, Run};

#[derive(Serialize)]
struct FrameReport {
    #[serde(flatten)]
    metrics: FrameMetrics,
    psnr_d: Option<f64>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Indices of `frame_%05d.png` files in `dir`, sorted.
fn frame_indices(dir: &Path) -> CliResult<BTreeMap<usize, std::path::PathBuf>> {
    let entries = std::fs::read_dir(dir).code_ctx(Code::Artifact, format!("reading {}", dir.display()))?;
    let mut out = BTreeMap::new();
    for e in entries {
        let path = e.code(Code::Artifact)?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(k) = name
            .strip_prefix("frame_")
            .and_then(|s| s.strip_suffix(".png"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            out.insert(k, path);
        }
    }
    Ok(out)
}

fn read_rgb(path: &Path, w: usize, h: usize, channels: usize) -> CliResult<Image> {
    let img = png_io::read_image(path).map_err(|e| Failure::msg(Code::Artifact, format!("{}: {e}", path.display())))?;
    if img.width != w || img.height != h {
        return Err(Failure::msg(Code::Artifact, format!("{}: {}x{}, expected {w}x{h}", path.display(), img.width, img.height)));
    }
    if img.channels == channels {
        return Ok(img);
    }
    // Drop alpha or expand gray so frames compare against the anchors.
    Ok(Image::from_fn(w, h, channels, |x, y, c| {
        let p = img.pixel(x, y);
        p[c.min(img.channels - 1).min(2)]
    }))
}

pub fn run(manifest: &Path, overrides: &Overrides, frames: &Path, depth: Option<&Path>) -> CliResult<()> {
    let run = Run::open(manifest, overrides)?;
    let out = &run.out;
    let (w, h, n) = (run.width(), run.height(), run.frames());
    let found = frame_indices(frames)?;
    if found.is_empty() {
        return Err(Failure::msg(Code::Artifact, format!("{}: no frame_%05d.png files", frames.display())));
    }
    if let Some((&k, _)) = found.iter().find(|(&k, _)| k >= n) {
        return Err(Failure::msg(Code::Config, format!("frame {k} outside the {n}-pose trajectory")));
    }
    let (first, last) = (run.anchors[0], *run.anchors.last().expect("anchors"));
    let read_anchor = |k| {
        let p = artifacts::anchor_render(out, k);
        png_io::read_image(&p).map_err(|e| Failure::msg(Code::Artifact, format!("{}: {e}", p.display())))
    };
    let v0 = read_anchor(first)?;
    let vn = read_anchor(last)?;
    let tol = run.manifest.noise_config.occlusion_tolerance;
    let poses = run.trajectory.poses();
    let g0 = rasterize(&run.mesh, &poses[first]);
    let gn = rasterize(&run.mesh, &poses[last]);

    let mut reports = Vec::with_capacity(found.len());
    for (&i, path) in &found {
        let output = read_rgb(path, w, h, v0.channels)?;
        let gi = rasterize(&run.mesh, &poses[i]);
        let to0 = compute_flow(&run.mesh, &run.trajectory, i, first, &gi, &g0, tol)?;
        let ton = compute_flow(&run.mesh, &run.trajectory, i, last, &gi, &gn, tol)?;
        let gt = composite_pseudo_gt(&v0, &vn, (&to0.0, &to0.1), (&ton.0, &ton.1))?;
        let metrics = frame_metrics(i, &output, &gt)?;
        let psnr_d = match depth {
            Some(dir) => {
                let p = dir.join(format!("depth_{i:05}.ggt"));
                let t = Tensor::load(&p).map_err(|e| Failure::msg(Code::Artifact, format!("{}: {e}", p.display())))?;
                if t.shape != [h, w] {
                    return Err(Failure::msg(Code::Artifact, format!("{}: shape {:?}, expected [{h}, {w}]", p.display(), t.shape)));
                }
                let est = Plane::from_vec(w, h, t.data)?;
                let valid = gi.coverage();
                if valid.count() == 0 {
                    None
                } else {
                    Some(psnr_d(&gi.depth_plane(), &est, &valid)?)
                }
            }
            None => None,
        };
        if metrics.psnr.is_some_and(|v| !v.is_finite()) || metrics.ssim.is_some_and(|v| !v.is_finite()) {
            return Err(Failure::msg(Code::Numeric, format!("frame {i}: non-finite metric")));
        }
        reports.push(FrameReport { metrics, psnr_d });
    }

    let report = json!({
        "frames": reports,
        "aggregate": {
            "count": reports.len(),
            "psnr": mean(reports.iter().map(|r| r.metrics.psnr)),
            "ssim": mean(reports.iter().map(|r| r.metrics.ssim)),
            "psnr_d": mean(reports.iter().map(|r| r.psnr_d)),
            "known_fraction": mean(reports.iter().map(|r| Some(r.metrics.known_fraction))),
        },
    });
    let text = serde_json::to_string_pretty(&report).code(Code::Numeric)? + "\n";
    artifacts::create_dirs(out, &["eval"])?;
    let path = out.join("eval/report.json");
    std::fs::write(&path, &text).code_ctx(Code::Artifact, format!("writing {}", path.display()))?;
    print!("{text}");
    run.record("eval", &[path], json!({ "frames": reports.len() }))
}
