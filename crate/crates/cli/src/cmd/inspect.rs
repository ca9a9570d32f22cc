use std::io::Read;
use std::path::Path;

use geoguide_core::container::read_header;
use geoguide_core::{png_io, Tensor};
use serde_json::{json, Value};

use crate::exit::{CliResult, Code, Failure, WithCode};

fn stats(data: &[f32]) -> Value {
    let finite: Vec<f64> = data.iter().filter(|v| v.is_finite()).map(|&v| v as f64).collect();
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n.max(1.0);
    let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(1.0);
    json!({
        "count": data.len(),
        "non_finite": data.len() - finite.len(),
        "min": finite.iter().cloned().reduce(f64::min),
        "max": finite.iter().cloned().reduce(f64::max),
        "mean": mean,
        "std": var.sqrt(),
    })
}

pub fn run(path: &Path, with_stats: bool) -> CliResult<()> {
    let bad = |e: &dyn std::fmt::Display| Failure::msg(Code::Artifact, format!("{}: {e}", path.display()));
    let mut magic = [0u8; 8];
    let n = std::fs::File::open(path)
        .and_then(|mut f| f.read(&mut magic))
        .map_err(|e| bad(&e))?;
    let report = if magic[..n].starts_with(b"GGT1") {
        let header = read_header(path).map_err(|e| bad(&e))?;
        let mut v = json!({ "kind": "container", "header": header });
        if with_stats {
            let t = Tensor::load(path).map_err(|e| bad(&e))?;
            v["stats"] = stats(&t.data);
        }
        v
    } else if magic[..n].starts_with(b"\x89PNG") {
        let img = png_io::read_image(path).map_err(|e| bad(&e))?;
        let mut v = json!({ "kind": "png", "width": img.width, "height": img.height, "channels": img.channels });
        if with_stats {
            v["stats"] = stats(&img.data);
        }
        v
    } else {
        return Err(bad(&"not a container or PNG"));
    };
    println!("{}", serde_json::to_string_pretty(&report).code(Code::Numeric)?);
    Ok(())
}
