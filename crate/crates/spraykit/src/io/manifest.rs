//! Dataset manifest: the reproducibility record for a generated corpus.
//! Written last, so its presence marks a complete dataset.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::degrade::DegradeSpec;
use crate::scene::{CalibrationPool, SceneSpec};

use super::IoError;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    /// paths relative to the manifest's directory
    pub image_path: String,
    pub instance_map_path: String,
    pub annotation_path: String,
    pub scene: SceneSpec,
    pub degradation: DegradeSpec,
    pub seed: u64,
    pub degrade_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub scale_um_per_px: f64,
    pub pool: Option<CalibrationPool>,
    pub images: Vec<ImageRecord>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| IoError::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(IoError::Manifest {
                path: path.display().to_string(),
                message: format!(
                    "unsupported schema version {} (expected {})",
                    manifest.schema_version, MANIFEST_SCHEMA_VERSION
                ),
            });
        }
        Ok(manifest)
    }

    /// Check that every referenced file exists and that per-image seeds are
    /// unique.
    pub fn validate(&self, base_dir: &Path) -> Result<(), IoError> {
        let mut seeds: Vec<u64> = self.images.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        let n = seeds.len();
        seeds.dedup();
        if seeds.len() != n {
            return Err(IoError::Manifest {
                path: base_dir.display().to_string(),
                message: "per-image seeds are not unique".into(),
            });
        }
        for rec in &self.images {
            for rel in [&rec.image_path, &rec.instance_map_path, &rec.annotation_path] {
                let p = base_dir.join(rel);
                if !p.exists() {
                    return Err(IoError::MissingFile {
                        path: p.display().to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let rec = ImageRecord {
            image_id: "img_00000".into(),
            image_path: "img_00000.png".into(),
            instance_map_path: "inst_00000.png".into(),
            annotation_path: "ann_00000.csv".into(),
            scene: SceneSpec::default(),
            degradation: DegradeSpec::default(),
            seed: 7,
            degrade_seed: 8,
        };
        let manifest = DatasetManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            scale_um_per_px: 0.75,
            pool: None,
            images: vec![rec],
        };
        let path = dir.path().join("manifest.json");
        manifest.save(&path).unwrap();
        assert_eq!(DatasetManifest::load(&path).unwrap(), manifest);

        // referenced files absent
        assert!(manifest.validate(dir.path()).is_err());
        for f in ["img_00000.png", "inst_00000.png", "ann_00000.csv"] {
            std::fs::write(dir.path().join(f), b"x").unwrap();
        }
        manifest.validate(dir.path()).unwrap();
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let rec = |id: &str| ImageRecord {
            image_id: id.into(),
            image_path: format!("{id}.png"),
            instance_map_path: format!("{id}_i.png"),
            annotation_path: format!("{id}.csv"),
            scene: SceneSpec::default(),
            degradation: DegradeSpec::default(),
            seed: 7,
            degrade_seed: 8,
        };
        let manifest = DatasetManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            scale_um_per_px: 0.75,
            pool: None,
            images: vec![rec("a"), rec("b")],
        };
        assert!(manifest.validate(Path::new(".")).is_err());
    }
}
