//! Checkpoint persistence.
//!
//! One JSON document per checkpoint: format version, model kind, seed, a
//! training-config snapshot, the fitted normalization statistics, and every
//! parameter as a nested row-major array. Floats are written as shortest
//! round-trip decimals, so save -> load reproduces parameters bit for bit.
//! Files are written to a temporary name and renamed into place; a failed
//! or truncated write never leaves a partial checkpoint behind.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::models::{ModelBundle, ModelKind};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

/// A model bundle together with everything needed to evaluate it
/// standalone: normalization statistics, the seed, and the training config
/// snapshot (kept as opaque JSON).
pub struct Checkpoint {
    pub bundle: ModelBundle,
    pub norm_stats: NormStats,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl std::fmt::Debug for Checkpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Checkpoint")
            .field("kind", &self.bundle.kind)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    kind: ModelKind,
    seed: u64,
    config: serde_json::Value,
    norm_stats: NormStats,
    params: BTreeMap<String, Vec<Vec<f64>>>,
}

fn tensor_to_rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

fn rows_to_tensor(name: &str, rows: &[Vec<f64>], path: &str) -> Result<Tensor> {
    if rows.is_empty() {
        return Err(Error::parse(path, format!("parameter `{name}` is empty")));
    }
    let cols = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for row in rows {
        if row.len() != cols {
            return Err(Error::parse(
                path,
                format!("parameter `{name}` has ragged rows"),
            ));
        }
        data.extend_from_slice(row);
    }
    Tensor::new(rows.len(), cols, data)
}

/// Write a checkpoint atomically.
pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let mut params = BTreeMap::new();
    for (name, tensor) in checkpoint.bundle.params.iter() {
        if !tensor.is_finite() {
            return Err(Error::numeric(format!(
                "save_checkpoint: parameter `{name}` contains non-finite values"
            )));
        }
        params.insert(name.clone(), tensor_to_rows(tensor));
    }
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        kind: checkpoint.bundle.kind,
        seed: checkpoint.seed,
        config: checkpoint.config.clone(),
        norm_stats: checkpoint.norm_stats.clone(),
        params,
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| Error::numeric(format!("save_checkpoint: serialization failed: {e}")))?;
    write_atomic(path, json.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let location = path.display().to_string();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(location.clone(), e))?;
    let file: CheckpointFile = serde_json::from_str(&content)
        .map_err(|e| Error::parse(&location, format!("malformed checkpoint: {e}")))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::parse(
            &location,
            format!(
                "checkpoint version {} does not match supported version {CHECKPOINT_VERSION}",
                file.version
            ),
        ));
    }
    let mut bundle = ModelBundle::new_zeroed(file.kind)?;
    let mut seen = 0usize;
    for i in 0..bundle.params.len() {
        let name = bundle.params.name(i).to_string();
        let rows = file.params.get(&name).ok_or_else(|| {
            Error::parse(&location, format!("missing parameter `{name}`"))
        })?;
        let tensor = rows_to_tensor(&name, rows, &location)?;
        if tensor.shape() != bundle.params.value(i).shape() {
            return Err(Error::parse(
                &location,
                format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    tensor.shape(),
                    bundle.params.value(i).shape()
                ),
            ));
        }
        *bundle.params.value_mut(i) = tensor;
        seen += 1;
    }
    if seen != file.params.len() {
        let expected: std::collections::BTreeSet<&str> =
            (0..bundle.params.len()).map(|i| bundle.params.name(i)).collect();
        let unexpected: Vec<&String> = file
            .params
            .keys()
            .filter(|k| !expected.contains(k.as_str()))
            .collect();
        return Err(Error::parse(
            &location,
            format!("unexpected parameters for kind {}: {unexpected:?}", file.kind),
        ));
    }
    if file.norm_stats.mean.len() != crate::data::FEATURES
        || file.norm_stats.std.len() != crate::data::FEATURES
    {
        return Err(Error::parse(&location, "norm_stats must have 44 entries"));
    }
    Ok(Checkpoint {
        bundle,
        norm_stats: file.norm_stats,
        seed: file.seed,
        config: file.config,
    })
}

/// Write a file via a temporary sibling and an atomic rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let location = path.display().to_string();
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = parent {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    let tmp = path.with_extension("tmp-write");
    std::fs::write(&tmp, contents).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(location, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, fit_normalization, GeneratorConfig};
    use crate::models::{build_inputs, ModelBundle, ModelKind};
    use crate::rng::Rng;
    use crate::tensor::Tape;

    fn fixture_stats() -> NormStats {
        let ds = generate_synthetic(&GeneratorConfig {
            n_cases: 30,
            seed: 2,
            ..GeneratorConfig::default()
        })
        .unwrap();
        fit_normalization(&ds).unwrap()
    }

    fn tmp_dir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "mwr-ckpt-test-{}-{:x}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .subsec_nanos()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn round_trip_reproduces_forward_outputs_bitwise() {
        let dir = tmp_dir();
        let stats = fixture_stats();
        for kind in [ModelKind::Base, ModelKind::Lmwr, ModelKind::Rmwr] {
            let mut rng = Rng::new(41);
            let bundle = ModelBundle::new(kind, &mut rng).unwrap();
            let path = dir.join(format!("{kind}.json"));
            save_checkpoint(
                &Checkpoint {
                    bundle,
                    norm_stats: stats.clone(),
                    seed: 41,
                    config: serde_json::json!({"note": "test"}),
                },
                &path,
            )
            .unwrap();
            let loaded = load_checkpoint(&path).unwrap();
            assert_eq!(loaded.seed, 41);
            assert_eq!(loaded.bundle.kind, kind);

            // 10 random inputs, outputs must agree bit for bit.
            let mut rng2 = Rng::new(5);
            let fresh = {
                let mut r = Rng::new(41);
                ModelBundle::new(kind, &mut r).unwrap()
            };
            for _ in 0..10 {
                let mut feats = [[0.0; 44]; 2];
                for f in feats.iter_mut() {
                    for v in f.iter_mut() {
                        *v = rng2.uniform(-2.0, 2.0);
                    }
                }
                let run = |b: &ModelBundle| {
                    let mut tape = Tape::new();
                    let vars = b.bind(&mut tape);
                    let inputs = build_inputs(kind, &feats).unwrap();
                    let out = b.forward(&mut tape, &vars, &inputs).unwrap();
                    tape.value(out.score).data().to_vec()
                };
                assert_eq!(run(&fresh), run(&loaded.bundle));
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn truncated_file_fails_to_load() {
        let dir = tmp_dir();
        let mut rng = Rng::new(1);
        let bundle = ModelBundle::new(ModelKind::Lmwr, &mut rng).unwrap();
        let path = dir.join("ckpt.json");
        save_checkpoint(
            &Checkpoint {
                bundle,
                norm_stats: fixture_stats(),
                seed: 1,
                config: serde_json::Value::Null,
            },
            &path,
        )
        .unwrap();
        let full = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &full[..full.len() / 2]).unwrap();
        assert!(load_checkpoint(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn version_and_kind_mismatches_are_rejected() {
        let dir = tmp_dir();
        let mut rng = Rng::new(1);
        let bundle = ModelBundle::new(ModelKind::Lmwr, &mut rng).unwrap();
        let path = dir.join("ckpt.json");
        save_checkpoint(
            &Checkpoint {
                bundle,
                norm_stats: fixture_stats(),
                seed: 7,
                config: serde_json::Value::Null,
            },
            &path,
        )
        .unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        // Future version
        std::fs::write(&path, text.replacen("\"version\":1", "\"version\":9", 1)).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("version"), "got: {err}");

        // Declared kind does not match the stored parameter names
        std::fs::write(&path, text.replacen("\"kind\":\"lmwr\"", "\"kind\":\"rmwr\"", 1)).unwrap();
        assert!(load_checkpoint(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn checkpoint_records_seed_and_config() {
        let dir = tmp_dir();
        let mut rng = Rng::new(3);
        let bundle = ModelBundle::new(ModelKind::Rmwr, &mut rng).unwrap();
        let path = dir.join("ckpt.json");
        let config = serde_json::json!({"lr": 1e-4, "batch_size": 4});
        save_checkpoint(
            &Checkpoint {
                bundle,
                norm_stats: fixture_stats(),
                seed: 3,
                config: config.clone(),
            },
            &path,
        )
        .unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.seed, 3);
        assert_eq!(loaded.config, config);
        std::fs::remove_dir_all(&dir).ok();
    }
}
