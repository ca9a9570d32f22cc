use std::path::Path;

use geoguide_core::container::{ContainerWriter, Header};
use geoguide_core::noise::{GaussianityAccumulator, LatentAccumulator, NoiseWarper, Provenance};
use serde_json::json;

use crate::artifacts;
use crate::exit::{CliResult, Code, Failure, WithCode};
use crate::run::{Overrides, Run};

pub fn run(manifest: &Path, overrides: &Overrides, latent_only: bool) -> CliResult<()> {
    let run = Run::open(manifest, overrides)?;
    let out = &run.out;
    let (w, h, n) = (run.width(), run.height(), run.frames());
    let cfg = &run.manifest.noise_config;
    artifacts::create_dirs(out, &["noise"])?;

    // Check every flow is present before writing anything.
    for k in 0..n.saturating_sub(1) {
        let p = artifacts::flow(out, k, k + 1);
        if !p.exists() {
            return Err(Failure::msg(Code::Artifact, format!("{}: missing flow file (run preprocess first)", p.display())));
        }
    }

    let mut warper = NoiseWarper::new(w, h, cfg)?;
    let mut latent = LatentAccumulator::new(n, w, h, cfg.channels, cfg.spatial_factor, cfg.temporal_factor)?;
    let mut report = GaussianityAccumulator::new();
    let full_path = out.join("noise/noise_full.ggt");
    let mut full = if latent_only {
        None
    } else {
        Some(ContainerWriter::create(&full_path, Header::f32(vec![n, h, w, cfg.channels], "FHWC"))?)
    };

    let first = warper.current().clone();
    latent.push(&first)?;
    report.push(&first, &vec![Provenance::Reinjected; w * h], None);
    if let Some(f) = full.as_mut() {
        f.write(&first.data)?;
    }
    drop(first);
    for k in 0..n.saturating_sub(1) {
        let flow = artifacts::read_flow(out, k, k + 1, w, h)?;
        let (prev, step) = warper.advance(&flow)?;
        latent.push(&step.frame)?;
        report.push(&step.frame, &step.provenance, Some((&prev, &step.transport)));
        if let Some(f) = full.as_mut() {
            f.write(&step.frame.data)?;
        }
    }

    let mut written = Vec::new();
    if let Some(f) = full {
        f.finish()?;
        written.push(full_path);
    } else if full_path.exists() {
        std::fs::remove_file(&full_path).code_ctx(Code::Artifact, format!("removing stale {}", full_path.display()))?;
    }
    let latent = latent.finish()?;
    let latent_path = out.join("noise/noise_latent.ggt");
    latent.save(&latent_path)?;
    written.push(latent_path);

    let report = report.finish();
    let failing: Vec<usize> = report.frames.iter().filter(|f| !f.ks_pass()).map(|f| f.frame).collect();
    if !failing.is_empty() {
        log::warn!("KS test rejects frames {failing:?} at alpha 0.01");
    }
    let report_path = out.join("noise/gaussianity.json");
    let text = serde_json::to_string_pretty(&report).code(Code::Numeric)? + "\n";
    std::fs::write(&report_path, text).code_ctx(Code::Artifact, format!("writing {}", report_path.display()))?;
    written.push(report_path);

    run.record(
        "warp-noise",
        &written,
        json!({ "latent_shape": latent.shape, "full_resolution": !latent_only, "ks_failures": failing }),
    )
}
