use std::path::{Path, PathBuf};

use geoguide_core::ggi::{
    assemble_condition_volume, edge_image, guidance_from_depth, Layout, SobelEdgeEstimator, TrainingSample,
    VideoEncoder,
};
use geoguide_core::{png_io, Image, Plane, Tensor};
use serde_json::json;

use crate::artifacts;
use crate::exit::{CliResult, Code, Failure};
use crate::run::{Overrides, Run};

fn load(path: &Path) -> CliResult<Tensor> {
    if !path.exists() {
        return Err(Failure::msg(Code::Artifact, format!("{}: missing artifact", path.display())));
    }
    Tensor::load(path).map_err(|e| Failure::msg(Code::Artifact, format!("{}: {e}", path.display())))
}

fn read_png<T>(path: &Path, read: impl Fn(&Path) -> geoguide_core::Result<T>) -> CliResult<T> {
    if !path.exists() {
        return Err(Failure::msg(Code::Artifact, format!("{}: missing artifact", path.display())));
    }
    read(path).map_err(|e| Failure::msg(Code::Artifact, format!("{}: {e}", path.display())))
}

fn sample_paths(dir: &Path) -> Vec<PathBuf> {
    ["noise.ggt", "condition.ggt", "edges.ggt", "layout.json", "input.ggt"]
        .iter()
        .map(|f| dir.join(f))
        .collect()
}

pub fn run(manifest: &Path, overrides: &Overrides, training: bool) -> CliResult<()> {
    let run = Run::open(manifest, overrides)?;
    let out = &run.out;
    let (w, h, n) = (run.width(), run.height(), run.frames());
    let layout = Layout::from_noise_config(n, w, h, &run.manifest.noise_config)?;
    if run.anchors.len() < 2 {
        return Err(Failure::msg(Code::Config, "assembly needs at least two anchor frames"));
    }
    let noise = load(&out.join("noise/noise_latent.ggt"))?;
    layout.check_block("noise", &noise).map_err(|e| Failure::msg(Code::Artifact, format!("noise/noise_latent.ggt: {e}")))?;

    let encoder = VideoEncoder::new(layout.clone());
    let (first, last) = (run.anchors[0], *run.anchors.last().expect("two anchors"));
    let v0 = read_png(&artifacts::anchor_render(out, first), |p| png_io::read_image(p))?;
    let vn = read_png(&artifacts::anchor_render(out, last), |p| png_io::read_image(p))?;
    let condition = assemble_condition_volume(&encoder.encode_frame(&v0)?, &encoder.encode_frame(&vn)?, &layout)?;

    let edge_frames = (0..n)
        .map(|k| read_png(&artifacts::edges(out, k), |p| png_io::read_gray8(p)).map(|e| edge_image(&e)))
        .collect::<CliResult<Vec<Image>>>()?;
    let edges = encoder.encode_video(&edge_frames)?;
    drop(edge_frames);

    let dir = out.join("assembled");
    let sample = TrainingSample {
        video_id: "inference".into(),
        layout: layout.clone(),
        noise,
        condition,
        edges,
    };
    sample.save(&dir)?;
    sample.model_input()?.save(dir.join("input.ggt"))?;
    let mut written = sample_paths(&dir);

    if training {
        // Edges re-estimated from depth, as they would be for real footage.
        let sobel = SobelEdgeEstimator::default();
        let guidance = (0..n)
            .map(|k| {
                let t = load(&artifacts::depth(out, k))?;
                if t.shape != [h, w] {
                    return Err(Failure::msg(Code::Artifact, format!("{}: depth shape {:?}", artifacts::depth(out, k).display(), t.shape)));
                }
                let depth = Plane::from_vec(w, h, t.data)?;
                Ok(edge_image(&guidance_from_depth(&depth, &sobel)?))
            })
            .collect::<CliResult<Vec<Image>>>()?;
        let dir = out.join("training");
        let sample = TrainingSample {
            video_id: "training".into(),
            edges: encoder.encode_video(&guidance)?,
            ..sample
        };
        sample.save(&dir)?;
        sample.model_input()?.save(dir.join("input.ggt"))?;
        written.extend(sample_paths(&dir));
    }

    run.record(
        "assemble",
        &written,
        json!({ "input_shape": layout.input_shape(), "channel_order": layout.channel_order, "training": training }),
    )
}
