//! Dataset manifests as versioned JSON.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "master_seed": 7,
//!   "tiles_per_lot": 200,
//!   "jitter": 0.02,
//!   "noise_sd": 1.0,
//!   "lots": [{"id": "A", "attrs": {"size": .., "porosity": .., "dispersity": .., "facetness": ..},
//!             "true_stress": 142.1, "tiles": 200}, ...],
//!   "samples": [{"seed": 123, "lot_id": "A", "attrs": {..}, "label": 141.7, "split": "train"}, ...]
//! }
//! ```

use std::path::Path;

use super::PersistError;
use crate::world::{DatasetManifest, MANIFEST_SCHEMA_VERSION};

const REQUIRED_FIELDS: [&str; 7] = [
    "schema_version",
    "master_seed",
    "tiles_per_lot",
    "jitter",
    "noise_sd",
    "lots",
    "samples",
];

pub fn manifest_to_json(manifest: &DatasetManifest) -> Result<String, PersistError> {
    serde_json::to_string_pretty(manifest).map_err(|e| PersistError::Json(e.to_string()))
}

pub fn manifest_from_json(text: &str) -> Result<DatasetManifest, PersistError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| PersistError::Json(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| PersistError::Json("manifest must be a JSON object".into()))?;
    let version = obj
        .get("schema_version")
        .ok_or(PersistError::MissingField("schema_version"))?
        .as_u64()
        .ok_or_else(|| PersistError::Json("schema_version must be an unsigned integer".into()))?;
    if version != MANIFEST_SCHEMA_VERSION as u64 {
        return Err(PersistError::SchemaVersion(version));
    }
    if let Some(missing) = REQUIRED_FIELDS.iter().find(|f| !obj.contains_key(**f)) {
        return Err(PersistError::MissingField(missing));
    }
    let manifest: DatasetManifest = serde_json::from_value(value).map_err(|e| PersistError::Json(e.to_string()))?;
    manifest.validate().map_err(|e| PersistError::Json(e.to_string()))?;
    Ok(manifest)
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), PersistError> {
    std::fs::write(path, manifest_to_json(manifest)?).map_err(|e| PersistError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, PersistError> {
    let text = std::fs::read_to_string(path).map_err(|e| PersistError::io(path, e))?;
    manifest_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::DatasetConfig;

    fn small() -> DatasetManifest {
        DatasetManifest::generate(
            3,
            &DatasetConfig {
                tiles_per_lot: 4,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn edit(f: impl FnOnce(&mut serde_json::Map<String, serde_json::Value>)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(&manifest_to_json(&small()).unwrap()).unwrap();
        f(v.as_object_mut().unwrap());
        v.to_string()
    }

    #[test]
    fn round_trip_is_value_identical() {
        let m = small();
        assert_eq!(manifest_from_json(&manifest_to_json(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn missing_lots_names_field() {
        let text = edit(|o| {
            o.remove("lots");
        });
        let err = manifest_from_json(&text).unwrap_err();
        assert!(matches!(err, PersistError::MissingField("lots")));
        assert!(err.to_string().contains("lots"));
    }

    #[test]
    fn future_version_rejected() {
        let text = edit(|o| {
            o.insert("schema_version".into(), 999.into());
        });
        assert!(matches!(manifest_from_json(&text), Err(PersistError::SchemaVersion(999))));
    }

    #[test]
    fn malformed_json_rejected() {
        assert!(matches!(manifest_from_json("{\"schema_version\": 1,"), Err(PersistError::Json(_))));
        assert!(matches!(manifest_from_json("[]"), Err(PersistError::Json(_))));
    }

    #[test]
    fn dangling_lot_reference_rejected() {
        let text = edit(|o| {
            let samples = o.get_mut("samples").unwrap().as_array_mut().unwrap();
            samples[0]["lot_id"] = "ZZZ".into();
        });
        assert!(matches!(manifest_from_json(&text), Err(PersistError::Json(_))));
    }
}
