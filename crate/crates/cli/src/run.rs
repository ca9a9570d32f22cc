//! Manifest loading with command-line overrides, and the `run.json` record.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use geoguide_core::scene::{load_mesh, load_trajectory, Manifest, Mesh, Trajectory};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::exit::{classify, CliResult, Code, Failure, WithCode};

/// Options shared by every command.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
}

/// Recursively merges `patch` into `base`; objects merge key by key.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn load_manifest(path: &Path, overrides: &Overrides) -> CliResult<Manifest> {
    let text = std::fs::read_to_string(path).code_ctx(Code::Config, format!("reading {}", path.display()))?;
    let mut value: Value = serde_json::from_str(&text).code_ctx(Code::Config, format!("parsing {}", path.display()))?;
    if let Some(cfg) = &overrides.config {
        let patch_text =
            std::fs::read_to_string(cfg).code_ctx(Code::Config, format!("reading {}", cfg.display()))?;
        let patch: Value =
            serde_json::from_str(&patch_text).code_ctx(Code::Config, format!("parsing {}", cfg.display()))?;
        if !patch.is_object() {
            return Err(Failure::msg(Code::Config, format!("{}: expected a JSON object", cfg.display())));
        }
        merge(&mut value, patch);
    }
    if let Some(seed) = overrides.seed {
        value["seed"] = json!(seed);
    }
    let base = path.parent().unwrap_or(Path::new("."));
    Manifest::from_json(&value.to_string(), base).code_ctx(Code::Config, format!("manifest {}", path.display()))
}

/// Everything a command needs from the manifest.
pub struct Run {
    pub manifest: Manifest,
    pub mesh: Mesh,
    pub trajectory: Trajectory,
    pub anchors: Vec<usize>,
    pub out: PathBuf,
}

impl Run {
    pub fn open(manifest_path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let manifest = load_manifest(manifest_path, overrides)?;
        let mesh = load_mesh(&manifest.mesh_path).map_err(|e| {
            let code = match classify(&e) {
                Code::Artifact => Code::Config,
                c => c,
            };
            Failure::new(code, anyhow::Error::new(e).context("loading mesh"))
        })?;
        let mut trajectory = load_trajectory(&manifest.trajectory_path).map_err(|e| {
            let code = match classify(&e) {
                Code::Artifact => Code::Config,
                c => c,
            };
            Failure::new(code, anyhow::Error::new(e).context("loading trajectory"))
        })?;
        if let Some([w, h]) = manifest.resolution {
            trajectory = trajectory.resized(w, h).code(Code::Config)?;
        }
        let anchors = manifest.anchors(trajectory.last_index()).code(Code::Config)?;
        let out = manifest.output_dir.clone();
        std::fs::create_dir_all(&out).code_ctx(Code::Artifact, format!("creating {}", out.display()))?;
        Ok(Self {
            manifest,
            mesh,
            trajectory,
            anchors,
            out,
        })
    }

    pub fn width(&self) -> usize {
        self.trajectory.width()
    }

    pub fn height(&self) -> usize {
        self.trajectory.height()
    }

    pub fn frames(&self) -> usize {
        self.trajectory.len()
    }

    /// Configuration echo; output location is deliberately left out so runs
    /// in different directories record the same content.
    pub fn config_echo(&self) -> Value {
        let m = &self.manifest;
        json!({
            "seed": m.seed,
            "resolution": [self.width(), self.height()],
            "frames": self.frames(),
            "anchor_indices": self.anchors,
            "edge_config": m.edge_config,
            "noise_config": m.noise_config,
            "sampling_config": m.sampling_config,
        })
    }

    fn inputs(&self) -> CliResult<Value> {
        let m = &self.manifest;
        let mut inputs = BTreeMap::new();
        let mut add = |key: &str, p: &Path| -> CliResult<()> {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            inputs.insert(key.to_string(), json!({ "file": name, "sha256": sha256_file(p)? }));
            Ok(())
        };
        add("mesh", &m.mesh_path)?;
        add("trajectory", &m.trajectory_path)?;
        if let Some(r) = &m.reference_image_path {
            // Carried as metadata only; hashed when present.
            if r.exists() {
                add("reference_image", r)?;
            } else {
                inputs.insert("reference_image".into(), json!({ "file": r.file_name().map(|n| n.to_string_lossy().into_owned()) }));
            }
        }
        Ok(serde_json::to_value(inputs).expect("inputs serialize"))
    }

    /// Records a command's artifacts in `run.json`, keeping sections of
    /// other commands that were produced from the same inputs and config.
    pub fn record(&self, command: &str, artifacts: &[PathBuf], extra: Value) -> CliResult<()> {
        let config = self.config_echo();
        let inputs = self.inputs()?;
        let config_hash = sha256_bytes(config.to_string().as_bytes());
        let input_hash = sha256_bytes(format!("{config_hash}{inputs}").as_bytes());

        let path = self.out.join("run.json");
        let mut commands = serde_json::Map::new();
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(old) = serde_json::from_str::<Value>(&text) {
                if old["input_hash"] == json!(input_hash) {
                    if let Some(c) = old["commands"].as_object() {
                        commands = c.clone();
                    }
                }
            }
        }
        let mut hashes = BTreeMap::new();
        for a in artifacts {
            let rel = a.strip_prefix(&self.out).unwrap_or(a).to_string_lossy().replace('\\', "/");
            hashes.insert(rel, sha256_file(a)?);
        }
        let mut section = json!({ "artifacts": hashes });
        merge(&mut section, extra);
        commands.insert(command.to_string(), section);

        let record = json!({
            "format": 1,
            "seed": self.manifest.seed,
            "config": config,
            "config_hash": config_hash,
            "inputs": inputs,
            "input_hash": input_hash,
            "commands": commands,
        });
        let text = serde_json::to_string_pretty(&record).expect("run record serializes") + "\n";
        std::fs::write(&path, text).code_ctx(Code::Artifact, format!("writing {}", path.display()))
    }
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut f = std::fs::File::open(path).code_ctx(Code::Artifact, format!("hashing {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf).code_ctx(Code::Artifact, format!("hashing {}", path.display()))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}
