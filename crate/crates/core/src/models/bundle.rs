use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelRegistry, TrainedModel};
use crate::error::{Error, Result};

pub const BUNDLE_FORMAT: &str = "attriblab-model";
pub const BUNDLE_VERSION: u32 = 1;

/// Self-describing model file. `parameters` is family specific and includes
/// the feature schema; `schema_hash` guards against mismatched data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBundle {
    pub format: String,
    pub version: u32,
    pub family: String,
    pub schema_hash: String,
    pub class_labels: (String, String),
    pub hyperparameters: serde_json::Value,
    pub parameters: serde_json::Value,
}

pub fn save_bundle(model: &dyn TrainedModel) -> ModelBundle {
    let (neg, pos) = model.class_labels();
    ModelBundle {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        family: model.family().into(),
        schema_hash: model.schema().hash(),
        class_labels: (neg.into(), pos.into()),
        hyperparameters: model.hyperparameters(),
        parameters: model.parameters(),
    }
}

/// Rebuilds a model through the registry and checks the recorded schema hash.
pub fn load_bundle(bundle: &ModelBundle, registry: &ModelRegistry) -> Result<Box<dyn TrainedModel>> {
    if bundle.format != BUNDLE_FORMAT {
        return Err(Error::Bundle(format!("unexpected format {:?}", bundle.format)));
    }
    if bundle.version != BUNDLE_VERSION {
        return Err(Error::Bundle(format!("unsupported bundle version {}", bundle.version)));
    }
    let model = registry.load(&bundle.family, bundle.parameters.clone())?;
    let hash = model.schema().hash();
    if hash != bundle.schema_hash {
        return Err(Error::Bundle(format!("schema hash mismatch: bundle {} vs model {hash}", bundle.schema_hash)));
    }
    Ok(model)
}

pub fn write_bundle(model: &dyn TrainedModel, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&save_bundle(model))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_bundle(path: &Path, registry: &ModelRegistry) -> Result<Box<dyn TrainedModel>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bundle: ModelBundle = serde_json::from_str(&text)?;
    load_bundle(&bundle, registry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::{dataset, numeric_schema};

    fn data() -> crate::dataset::Dataset {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![(i % 17) as f64 * 0.37, (i % 5) as f64 / 3.0]).collect();
        let target = rows.iter().map(|r| u8::from(r[0] + r[1] > 3.1)).collect();
        dataset(numeric_schema(2), rows, target)
    }

    #[test]
    fn every_family_roundtrips_bit_exact() {
        let reg = ModelRegistry::builtin();
        let d = data();
        let dir = tempfile::tempdir().unwrap();
        for name in reg.names() {
            let model = reg.train(name, &d, &serde_json::json!({})).unwrap();
            let path = dir.path().join(format!("{name}.json"));
            write_bundle(model.as_ref(), &path).unwrap();
            let back = read_bundle(&path, &reg).unwrap();
            assert_eq!(back.family(), name);
            for r in &d.rows {
                assert_eq!(model.predict_positive(r).to_bits(), back.predict_positive(r).to_bits(), "{name}");
            }
        }
    }

    #[test]
    fn tampered_schema_hash_is_rejected() {
        let reg = ModelRegistry::builtin();
        let model = reg.train("logistic", &data(), &serde_json::json!({})).unwrap();
        let mut b = save_bundle(model.as_ref());
        b.schema_hash = "00".into();
        assert!(matches!(load_bundle(&b, &reg), Err(Error::Bundle(_))));
        let mut b = save_bundle(model.as_ref());
        b.family = "forest".into();
        assert!(matches!(load_bundle(&b, &reg), Err(Error::UnknownStrategy { .. })));
    }

    #[test]
    fn missing_file_is_reported() {
        let reg = ModelRegistry::builtin();
        let r = read_bundle(Path::new("/nonexistent/model.json"), &reg);
        assert!(matches!(r, Err(Error::MissingFile(_))));
    }
}
