use std::path::{Path, PathBuf};

use geoguide_core::flow::{warp_image, OcclusionMask};
use geoguide_core::sampling::{downsample_mask, sag_sample_observed, Codec, OracleDenoiser};
use geoguide_core::{png_io, Error};
use serde_json::json;

use crate::artifacts;
use crate::exit::{CliResult, Code, Failure, WithCode};
use crate::run::{Overrides, Run};

/// Warps the first anchor into the view of the second, encodes it with the
/// block codec and samples toward the second anchor's render, replacing the
/// visible part of the latent on the early steps.
pub fn run(manifest: &Path, overrides: &Overrides) -> CliResult<()> {
    let run = Run::open(manifest, overrides)?;
    let out = &run.out;
    let (w, h) = (run.width(), run.height());
    let [a0, a1] = match run.anchors[..] {
        [a, b, ..] => [a, b],
        _ => return Err(Failure::msg(Code::Config, "sag-demo needs at least two anchor frames")),
    };
    let read = |p: PathBuf| png_io::read_image(&p).map_err(|e| Failure::msg(Code::Artifact, format!("{}: {e}", p.display())));
    let v0 = read(artifacts::anchor_render(out, a0))?;
    let target = read(artifacts::anchor_render(out, a1))?;
    let flow = artifacts::read_flow(out, a1, a0, w, h)?;
    let mask = artifacts::read_mask(&artifacts::mask(out, a1, a0))?;
    let occ = OcclusionMask {
        mask,
        tolerance: run.manifest.noise_config.occlusion_tolerance,
    };
    let (guide, holes) = warp_image(&v0, &flow, &occ)?;

    let cfg = &run.manifest.sampling_config;
    let codec = Codec::BlockMean {
        block: run.manifest.noise_config.spatial_factor,
    };
    let guide_latent = codec.encode(&guide)?;
    let latent_mask = downsample_mask(&holes.map(|&hole| !hole), codec.factor(), cfg.mask_threshold)?;
    let target_latent = codec.encode(&target)?;
    let schedule = cfg.schedule()?;

    let dir = out.join("sag");
    artifacts::create_dirs(out, &["sag"])?;
    let mut written = Vec::new();
    let mut step_error: Option<Error> = None;
    let mut observer = |snap: &geoguide_core::sampling::StepSnapshot| {
        if step_error.is_some() {
            return;
        }
        let path = dir.join(format!("step_{:03}.png", snap.step));
        match codec.decode(snap.latent).and_then(|img| png_io::write_image8(&path, &img)) {
            Ok(()) => written.push(path),
            Err(e) => step_error = Some(e),
        }
    };
    let mut denoiser = OracleDenoiser::new(target_latent.clone());
    let result = sag_sample_observed(&mut denoiser, &schedule, &guide_latent, &latent_mask, cfg, &mut observer)?;
    if let Some(e) = step_error {
        return Err(e.into());
    }

    let guide_path = dir.join("guide.png");
    png_io::write_image8(&guide_path, &codec.decode(&guide_latent)?)?;
    let mask_path = dir.join("mask.png");
    png_io::write_mask(&mask_path, &latent_mask.mask)?;
    let final_path = dir.join("final.png");
    png_io::write_image8(&final_path, &codec.decode(&result.latent)?)?;
    written.extend([guide_path, mask_path, final_path]);

    let masked_error = result.latent.max_abs_diff(&guide_latent, Some(&latent_mask.mask));
    if !masked_error.is_finite() {
        return Err(Failure::msg(Code::Numeric, "sampled latent is not finite"));
    }
    let events_path = dir.join("events.json");
    let log = json!({
        "anchors": [a0, a1],
        "steps": cfg.steps,
        "replace_steps": cfg.replace_steps,
        "schedule": cfg.schedule,
        "replacement_noise": cfg.replacement_noise,
        "mask_fraction": latent_mask.fraction(),
        "masked_max_abs_diff_to_guide": masked_error,
        "events": result.events,
    });
    let text = serde_json::to_string_pretty(&log).code(Code::Numeric)? + "\n";
    std::fs::write(&events_path, text).code_ctx(Code::Artifact, format!("writing {}", events_path.display()))?;
    written.push(events_path);

    run.record("sag-demo", &written, json!({ "events": result.events.len() }))
}
