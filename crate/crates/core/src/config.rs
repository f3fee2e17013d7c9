//! Experiment configuration and its JSON file form.
//!
//! ```json
//! {
//!   "scheme": "gsfl", "rounds": 40, "n_clients": 30, "n_groups": 6, "cut": 2,
//!   "batch_size": 16, "lr": 0.05, "local_epochs": 1, "seed": 1,
//!   "hidden": [64, 32],
//!   "dataset": {"type": "synthetic", "params": {"classes": 4, "dim": 16, "n_train": 2000, "n_test": 2000}},
//!   "partition": {"mode": "iid"},
//!   "latency": {"uplink_bps": 5e6, "downlink_bps": 2e7, "client_flops": 1e9,
//!               "server_flops": 1e11, "bits_per_value": 32, "aggregation_s": 0.01}
//! }
//! ```
//!
//! Every key is optional; missing keys take the defaults above. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::data::PartitionMode;
use crate::error::{Error, Result};
use crate::latency::{LatencyParams, Scheme};
use crate::nn::DEFAULT_HIDDEN;

/// Environment variable consulted when neither the command line nor the config sets a seed.
pub const SEED_ENV: &str = "GSFL_SEED";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic {
        classes: usize,
        dim: usize,
        n_train: usize,
        n_test: usize,
        /// Falls back to the experiment seed.
        seed: Option<u64>,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            classes: 4,
            dim: 16,
            n_train: 2000,
            n_test: 2000,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub rounds: usize,
    pub n_clients: usize,
    pub n_groups: usize,
    pub cut: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub local_epochs: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub dataset: DatasetSource,
    pub partition: PartitionMode,
    pub latency: LatencyParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Gsfl,
            rounds: 40,
            n_clients: 30,
            n_groups: 6,
            cut: 2,
            batch_size: 16,
            lr: 0.05,
            local_epochs: 1,
            seed: DEFAULT_SEED,
            hidden: DEFAULT_HIDDEN.to_vec(),
            dataset: DatasetSource::default(),
            partition: PartitionMode::Iid,
            latency: LatencyParams::default(),
        }
    }
}

impl ExperimentConfig {
    /// Number of layers of the configured model (Dense/ReLU pairs plus the output layer).
    pub fn num_layers(&self) -> usize {
        2 * self.hidden.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        if self.local_epochs == 0 {
            return Err(Error::config("local_epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        // zero is allowed programmatically (frozen-model runs); config files require lr > 0
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config("lr", format!("must be a non-negative finite number, got {}", self.lr)));
        }
        if self.n_clients == 0 {
            return Err(Error::config("n_clients", "must be at least 1"));
        }
        if self.n_groups == 0 {
            return Err(Error::config("n_groups", "must be at least 1"));
        }
        if self.n_groups > self.n_clients {
            return Err(Error::config(
                "n_groups/n_clients",
                format!("n_groups ({}) must not exceed n_clients ({})", self.n_groups, self.n_clients),
            ));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden", "hidden widths must be positive"));
        }
        let max_cut = self.num_layers() - 1;
        if self.cut == 0 || self.cut > max_cut {
            return Err(Error::config("cut", format!("{} is outside the valid range [1, {max_cut}]", self.cut)));
        }
        if let DatasetSource::Synthetic { classes, dim, n_train, n_test, .. } = self.dataset {
            if classes < 2 {
                return Err(Error::config("dataset.params.classes", "must be at least 2"));
            }
            if dim < 2 {
                return Err(Error::config("dataset.params.dim", "must be at least 2"));
            }
            if n_test == 0 {
                return Err(Error::config("dataset.params.n_test", "must be positive"));
            }
            if n_train < self.n_clients * self.batch_size {
                return Err(Error::config(
                    "dataset.params.n_train",
                    format!(
                        "{n_train} samples cannot give {} clients a full batch of {} each",
                        self.n_clients, self.batch_size
                    ),
                ));
            }
        }
        if let PartitionMode::LabelSkew(0) = self.partition {
            return Err(Error::config("partition.k", "must be at least 1"));
        }
        self.latency.validate()
    }
}

struct Obj<'a> {
    map: &'a Map<String, Value>,
    prefix: &'a str,
}

impl<'a> Obj<'a> {
    fn new(value: &'a Value, prefix: &'a str, allowed: &[&str]) -> Result<Self> {
        let map = value
            .as_object()
            .ok_or_else(|| Error::config(display_key(prefix), "expected a JSON object"))?;
        if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::config(
                join(prefix, k),
                format!("unknown key; expected one of: {}", allowed.join(", ")),
            ));
        }
        Ok(Self { map, prefix })
    }

    fn key(&self, k: &str) -> String {
        join(self.prefix, k)
    }

    fn get(&self, k: &str) -> Option<&'a Value> {
        self.map.get(k)
    }

    fn u64(&self, k: &str) -> Result<Option<u64>> {
        self.get(k)
            .map(|v| {
                v.as_u64()
                    .ok_or_else(|| Error::config(self.key(k), format!("expected a non-negative integer, got {v}")))
            })
            .transpose()
    }

    fn usize(&self, k: &str) -> Result<Option<usize>> {
        self.u64(k)?
            .map(|v| usize::try_from(v).map_err(|_| Error::config(self.key(k), "value too large")))
            .transpose()
    }

    fn f64(&self, k: &str) -> Result<Option<f64>> {
        self.get(k)
            .map(|v| v.as_f64().ok_or_else(|| Error::config(self.key(k), format!("expected a number, got {v}"))))
            .transpose()
    }

    fn str(&self, k: &str) -> Result<Option<&'a str>> {
        self.get(k)
            .map(|v| v.as_str().ok_or_else(|| Error::config(self.key(k), format!("expected a string, got {v}"))))
            .transpose()
    }

    fn bool(&self, k: &str) -> Result<Option<bool>> {
        self.get(k)
            .map(|v| v.as_bool().ok_or_else(|| Error::config(self.key(k), format!("expected true or false, got {v}"))))
            .transpose()
    }

    fn path(&self, k: &str, base: &Path) -> Result<PathBuf> {
        let p = self
            .str(k)?
            .ok_or_else(|| Error::config(self.key(k), "required for idx datasets"))?;
        Ok(base.join(p))
    }
}

fn join(prefix: &str, k: &str) -> String {
    if prefix.is_empty() {
        k.to_string()
    } else {
        format!("{prefix}.{k}")
    }
}

fn display_key(prefix: &str) -> &str {
    if prefix.is_empty() {
        "<document>"
    } else {
        prefix
    }
}

const TOP_KEYS: &[&str] = &[
    "scheme",
    "rounds",
    "n_clients",
    "n_groups",
    "cut",
    "batch_size",
    "lr",
    "local_epochs",
    "seed",
    "hidden",
    "dataset",
    "partition",
    "latency",
];

/// Parses a config document. Relative dataset paths are resolved against
/// `base_dir`; `fallback_seed` is used when the document has no `seed`.
pub fn parse_config_str(text: &str, base_dir: &Path, fallback_seed: Option<u64>) -> Result<ExperimentConfig> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| Error::config("<document>", format!("malformed JSON: {e}")))?;
    let top = Obj::new(&doc, "", TOP_KEYS)?;
    let mut cfg = ExperimentConfig::default();

    if let Some(s) = top.str("scheme")? {
        cfg.scheme = s.parse()?;
    }
    cfg.rounds = top.usize("rounds")?.unwrap_or(cfg.rounds);
    cfg.n_clients = top.usize("n_clients")?.unwrap_or(cfg.n_clients);
    cfg.n_groups = top.usize("n_groups")?.unwrap_or(cfg.n_groups);
    cfg.cut = top.usize("cut")?.unwrap_or(cfg.cut);
    cfg.batch_size = top.usize("batch_size")?.unwrap_or(cfg.batch_size);
    cfg.lr = top.f64("lr")?.unwrap_or(cfg.lr);
    if cfg.lr.is_nan() || cfg.lr <= 0.0 {
        return Err(Error::config("lr", format!("must be positive, got {}", cfg.lr)));
    }
    cfg.local_epochs = top.usize("local_epochs")?.unwrap_or(cfg.local_epochs);
    cfg.seed = top.u64("seed")?.or(fallback_seed).unwrap_or(DEFAULT_SEED);

    if let Some(h) = top.get("hidden") {
        let arr = h
            .as_array()
            .ok_or_else(|| Error::config("hidden", "expected an array of positive integers"))?;
        cfg.hidden = arr
            .iter()
            .map(|v| {
                v.as_u64()
                    .filter(|&w| w > 0)
                    .map(|w| w as usize)
                    .ok_or_else(|| Error::config("hidden", format!("expected a positive integer, got {v}")))
            })
            .collect::<Result<_>>()?;
    }

    if let Some(d) = top.get("dataset") {
        cfg.dataset = parse_dataset(d, base_dir)?;
    }

    if let Some(p) = top.get("partition") {
        let part = Obj::new(p, "partition", &["mode", "k"])?;
        cfg.partition = match part.str("mode")?.unwrap_or("iid") {
            "iid" => {
                if part.get("k").is_some() {
                    return Err(Error::config("partition.k", "only meaningful for mode `label_skew`"));
                }
                PartitionMode::Iid
            }
            "label_skew" => PartitionMode::LabelSkew(
                part.usize("k")?
                    .ok_or_else(|| Error::config("partition.k", "required for mode `label_skew`"))?,
            ),
            other => {
                return Err(Error::config(
                    "partition.mode",
                    format!("unknown mode `{other}`, expected iid|label_skew"),
                ))
            }
        };
    }

    if let Some(l) = top.get("latency") {
        let lat = Obj::new(
            l,
            "latency",
            &[
                "uplink_bps",
                "downlink_bps",
                "client_flops",
                "server_flops",
                "bits_per_value",
                "aggregation_s",
                "include_data_transfer",
            ],
        )?;
        let d = cfg.latency;
        cfg.latency = LatencyParams {
            uplink_bps: lat.f64("uplink_bps")?.unwrap_or(d.uplink_bps),
            downlink_bps: lat.f64("downlink_bps")?.unwrap_or(d.downlink_bps),
            client_flops: lat.f64("client_flops")?.unwrap_or(d.client_flops),
            server_flops: lat.f64("server_flops")?.unwrap_or(d.server_flops),
            bits_per_value: match lat.u64("bits_per_value")? {
                Some(b) => u32::try_from(b).map_err(|_| Error::config("latency.bits_per_value", "value too large"))?,
                None => d.bits_per_value,
            },
            aggregation_s: lat.f64("aggregation_s")?.unwrap_or(d.aggregation_s),
            include_data_transfer: lat.bool("include_data_transfer")?.unwrap_or(d.include_data_transfer),
        };
    }

    cfg.validate()?;
    Ok(cfg)
}

fn parse_dataset(value: &Value, base_dir: &Path) -> Result<DatasetSource> {
    let ds = Obj::new(value, "dataset", &["type", "params"])?;
    let empty = Value::Object(Map::new());
    let params = ds.get("params").unwrap_or(&empty);
    match ds.str("type")?.unwrap_or("synthetic") {
        "synthetic" => {
            let p = Obj::new(params, "dataset.params", &["classes", "dim", "n_train", "n_test", "seed"])?;
            let DatasetSource::Synthetic { classes, dim, n_train, n_test, .. } = DatasetSource::default() else {
                unreachable!()
            };
            Ok(DatasetSource::Synthetic {
                classes: p.usize("classes")?.unwrap_or(classes),
                dim: p.usize("dim")?.unwrap_or(dim),
                n_train: p.usize("n_train")?.unwrap_or(n_train),
                n_test: p.usize("n_test")?.unwrap_or(n_test),
                seed: p.u64("seed")?,
            })
        }
        "idx" => {
            let p = Obj::new(
                params,
                "dataset.params",
                &["train_images", "train_labels", "test_images", "test_labels"],
            )?;
            Ok(DatasetSource::Idx {
                train_images: p.path("train_images", base_dir)?,
                train_labels: p.path("train_labels", base_dir)?,
                test_images: p.path("test_images", base_dir)?,
                test_labels: p.path("test_labels", base_dir)?,
            })
        }
        other => Err(Error::config("dataset.type", format!("unknown dataset type `{other}`, expected synthetic|idx"))),
    }
}

/// Reads a config file; the seed falls back to `$GSFL_SEED` when the file has none.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(s) => Some(
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::config(SEED_ENV, format!("`{s}` is not an unsigned integer")))?,
        ),
        Err(_) => None,
    };
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base, env_seed)
}

/// SHA-256 (hex) of the document re-serialized with sorted keys and no whitespace.
pub fn config_hash(text: &str) -> Result<String> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| Error::config("<document>", format!("malformed JSON: {e}")))?;
    let canonical = serde_json::to_string(&doc).expect("serializing a Value cannot fail");
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
