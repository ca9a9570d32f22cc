use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::edges::EdgeConfig;
use crate::error::{Error, Result};
use crate::noise::NoiseConfig;
use crate::sampling::SamplingConfig;

/// Run description consumed by every CLI command.
///
/// Relative paths are resolved against the manifest's directory. The
/// top-level `seed` is the only source of randomness; it is copied into the
/// noise and sampling configs on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub mesh_path: PathBuf,
    pub trajectory_path: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// `[width, height]` override; intrinsics are rescaled to match.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_indices: Option<Vec<usize>>,
    /// Style reference image; carried through to run metadata, never read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_image_path: Option<PathBuf>,
    #[serde(default)]
    pub edge_config: EdgeConfig,
    #[serde(default)]
    pub noise_config: NoiseConfig,
    #[serde(default)]
    pub sampling_config: SamplingConfig,
}

impl Manifest {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut m: Manifest =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("manifest: {e}")))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut m.mesh_path);
        resolve(&mut m.trajectory_path);
        resolve(&mut m.output_dir);
        if let Some(p) = m.reference_image_path.as_mut() {
            resolve(p);
        }
        m.apply_seed();
        m.edge_config.validate()?;
        m.noise_config.validate()?;
        m.sampling_config.validate()?;
        if let Some([w, h]) = m.resolution {
            if w == 0 || h == 0 {
                return Err(Error::Config("resolution must be positive".into()));
            }
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    /// Propagates the top-level seed into the sub-configs.
    pub fn apply_seed(&mut self) {
        self.noise_config.seed = self.seed;
        self.sampling_config.seed = self.seed;
    }

    /// Anchor frame indices for a trajectory whose last index is `last`;
    /// defaults to `[0, last]`.
    pub fn anchors(&self, last: usize) -> Result<Vec<usize>> {
        let anchors = match &self.anchor_indices {
            Some(a) => a.clone(),
            None if last == 0 => vec![0],
            None => vec![0, last],
        };
        if anchors.is_empty() {
            return Err(Error::Config("anchor_indices is empty".into()));
        }
        if anchors.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "anchor_indices must be sorted and unique".into(),
            ));
        }
        if let Some(&bad) = anchors.iter().find(|&&a| a > last) {
            return Err(Error::Config(format!(
                "anchor index {bad} outside trajectory 0..={last}"
            )));
        }
        Ok(anchors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{"mesh_path": "m.obj", "trajectory_path": "/abs/t.json", "output_dir": "out", "seed": 7}"#;

    #[test]
    fn relative_paths_resolve_against_manifest_dir() {
        let m = Manifest::from_json(BASE, Path::new("/data/run")).unwrap();
        assert_eq!(m.mesh_path, PathBuf::from("/data/run/m.obj"));
        assert_eq!(m.trajectory_path, PathBuf::from("/abs/t.json"));
        assert_eq!(m.noise_config.seed, 7);
        assert_eq!(m.sampling_config.seed, 7);
    }

    #[test]
    fn seed_is_required() {
        let text = r#"{"mesh_path": "m.obj", "trajectory_path": "t.json", "output_dir": "o"}"#;
        assert!(matches!(
            Manifest::from_json(text, Path::new(".")),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn anchors_default_and_validation() {
        let mut m = Manifest::from_json(BASE, Path::new(".")).unwrap();
        assert_eq!(m.anchors(45).unwrap(), vec![0, 45]);
        m.anchor_indices = Some(vec![0, 20, 45]);
        assert!(m.anchors(45).is_ok());
        m.anchor_indices = Some(vec![0, 20, 20]);
        assert!(m.anchors(45).is_err());
        m.anchor_indices = Some(vec![0, 50]);
        assert!(m.anchors(45).is_err());
        m.anchor_indices = Some(vec![3, 1]);
        assert!(m.anchors(45).is_err());
    }

    #[test]
    fn nested_config_overrides() {
        let text = r#"{"mesh_path": "m.obj", "trajectory_path": "t.json", "output_dir": "o", "seed": 1,
            "edge_config": {"crease_angle_deg": 30.0},
            "sampling_config": {"steps": 10, "replace_steps": 4}}"#;
        let m = Manifest::from_json(text, Path::new(".")).unwrap();
        assert_eq!(m.edge_config.crease_angle_deg, 30.0);
        assert_eq!(m.sampling_config.steps, 10);
        let bad = text.replace("\"replace_steps\": 4", "\"replace_steps\": 40");
        assert!(Manifest::from_json(&bad, Path::new(".")).is_err());
    }
}
