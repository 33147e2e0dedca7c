use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_file, write_atomic, FormatError};
use crate::net::{LsWeights, ModernMeta, ModernWeights};

pub const WEIGHTS_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct MetaBlock {
    #[serde(flatten)]
    meta: ModernMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fixed_thetas: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct WeightsDoc {
    format_version: u64,
    meta: MetaBlock,
    blocks: Vec<LsWeights<f64>>,
}

/// JSON document with a `meta` block and nested parameter arrays. Numbers
/// are written in shortest round-trip form, so every `f64` is preserved.
pub fn weights_to_json(w: &ModernWeights<f64>) -> String {
    let doc = WeightsDoc {
        format_version: WEIGHTS_VERSION,
        meta: MetaBlock { meta: w.meta.clone(), fixed_thetas: w.fixed_thetas.clone() },
        blocks: w.blocks.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("weights serialise")
}

pub fn weights_from_json(text: &str) -> Result<ModernWeights<f64>, FormatError> {
    let raw: serde_json::Value = serde_json::from_str(text)?;
    match raw.get("format_version").and_then(|v| v.as_u64()) {
        Some(WEIGHTS_VERSION) => {}
        Some(found) => return Err(FormatError::VersionMismatch { found, supported: WEIGHTS_VERSION }),
        None => return Err(FormatError::Weights("missing format_version".into())),
    }
    let doc: WeightsDoc = serde_json::from_value(raw)?;
    let w = ModernWeights { meta: doc.meta.meta, blocks: doc.blocks, fixed_thetas: doc.meta.fixed_thetas };
    w.validate().map_err(|e| FormatError::Weights(e.to_string()))?;
    Ok(w)
}

pub fn read_weights(path: &Path) -> Result<ModernWeights<f64>, FormatError> {
    let bytes = read_file(path)?;
    weights_from_json(std::str::from_utf8(&bytes).map_err(|_| FormatError::Weights("not UTF-8".into()))?)
}

pub fn write_weights(w: &ModernWeights<f64>, path: &Path) -> Result<(), FormatError> {
    write_atomic(path, weights_to_json(w).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ist_equivalent_weights;
    use crate::training::init_weights;

    #[test]
    fn roundtrip_bit_exact() {
        let mut meta = ModernMeta::new(3, 1);
        meta.trained_density = Some(0.25);
        let w: ModernWeights<f64> = init_weights(meta, 17);
        let back = weights_from_json(&weights_to_json(&w)).unwrap();
        assert_eq!(back, w);
        let bits = |w: &ModernWeights<f64>| w.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&w));

        let f = ist_equivalent_weights(&[0.125; 32], 2, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.json");
        write_weights(&f, &p).unwrap();
        assert_eq!(read_weights(&p).unwrap(), f);
    }

    #[test]
    fn corrupted_fixture_rejected() {
        let w: ModernWeights<f64> = init_weights(ModernMeta::new(2, 1), 1);
        let mut v: serde_json::Value = serde_json::from_str(&weights_to_json(&w)).unwrap();
        v["blocks"][1]["conv1"]["weight"].as_array_mut().unwrap().pop();
        assert!(matches!(weights_from_json(&v.to_string()), Err(FormatError::Weights(_))));

        let mut v: serde_json::Value = serde_json::from_str(&weights_to_json(&w)).unwrap();
        v["meta"]["k_iters"] = 3.into();
        assert!(matches!(weights_from_json(&v.to_string()), Err(FormatError::Weights(_))));

        let mut v: serde_json::Value = serde_json::from_str(&weights_to_json(&w)).unwrap();
        v["meta"]["non_adaptive"] = true.into();
        assert!(matches!(weights_from_json(&v.to_string()), Err(FormatError::Weights(_))));

        let mut v: serde_json::Value = serde_json::from_str(&weights_to_json(&w)).unwrap();
        v["format_version"] = 9.into();
        assert!(matches!(weights_from_json(&v.to_string()), Err(FormatError::VersionMismatch { found: 9, .. })));
    }
}
