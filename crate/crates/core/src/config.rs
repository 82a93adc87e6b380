//! Run configuration: defaults, a TOML or JSON file, then command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::brep::TypeVocabulary;
use crate::heads::Aggregation;
use crate::model::LossWeights;
use crate::nn::AdamConfig;
use crate::pipeline::ArchSpec;
use crate::train::TrainConfig;

pub const TOOL_VERSION: &str = concat!("cadops ", env!("CARGO_PKG_VERSION"));
/// Seed used when neither the file, a flag nor this variable sets one.
pub const SEED_ENV: &str = "CADOPS_SEED";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

/// Every setting optional. Parsed from config files and from flags.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    /// Seed for initialization and shuffling (falls back to CADOPS_SEED, then 0)
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Adam betas as `b1,b2`
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub betas: Option<Vec<f64>>,
    #[arg(long)]
    pub grid_resolution: Option<usize>,
    #[arg(long)]
    pub n_layers: Option<usize>,
    #[arg(long)]
    pub d_emb: Option<usize>,
    /// Hidden width of the backbone MLPs
    #[arg(long)]
    pub hidden: Option<usize>,
    /// avg, max, sum_softmax, soft_labels or none
    #[arg(long)]
    pub aggregation: Option<Aggregation>,
    /// Step classes; defaults to the largest step count in the training data
    #[arg(long)]
    pub k_s: Option<usize>,
    /// Operation type classes, comma separated
    #[arg(long, value_delimiter = ',')]
    pub vocabulary: Option<Vec<String>>,
    /// Weights of the step and type losses as `w_step,w_type`
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub loss_weights: Option<Vec<f64>>,
    /// Reserved; only 0 is accepted
    #[arg(long)]
    pub dropout: Option<f64>,
}

const KEYS: [&str; 14] = [
    "seed",
    "epochs",
    "batch_size",
    "lr",
    "betas",
    "grid_resolution",
    "n_layers",
    "d_emb",
    "hidden",
    "aggregation",
    "k_s",
    "vocabulary",
    "loss_weights",
    "dropout",
];

/// Fully resolved settings of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub betas: [f64; 2],
    pub grid_resolution: usize,
    pub n_layers: usize,
    pub d_emb: usize,
    pub hidden: usize,
    pub aggregation: Aggregation,
    pub k_s: Option<usize>,
    pub vocabulary: Vec<String>,
    pub loss_weights: [f64; 2],
    pub dropout: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            epochs: 200,
            batch_size: 100,
            lr: 1e-3,
            betas: [0.9, 0.99],
            grid_resolution: 5,
            n_layers: 2,
            d_emb: 64,
            hidden: 64,
            aggregation: Aggregation::Avg,
            k_s: None,
            vocabulary: TypeVocabulary::EXTRUDE_FAMILY.iter().map(|s| s.to_string()).collect(),
            loss_weights: [1.0, 1.0],
            dropout: 0.0,
        }
    }
}

fn pair(name: &str, v: &[f64]) -> Result<[f64; 2], ConfigError> {
    match v {
        [a, b] => Ok([*a, *b]),
        _ => Err(ConfigError::Invalid(format!("{name} needs exactly two values, got {}", v.len()))),
    }
}

impl RunConfig {
    /// Applies every `Some` field of `o`.
    pub fn apply(&mut self, o: &ConfigOverrides) -> Result<(), ConfigError> {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &o.$f { self.$f = v.clone(); } )* };
        }
        set!(seed, epochs, batch_size, lr, grid_resolution, n_layers, d_emb, hidden, aggregation, vocabulary, dropout);
        if o.k_s.is_some() {
            self.k_s = o.k_s;
        }
        if let Some(b) = &o.betas {
            self.betas = pair("betas", b)?;
        }
        if let Some(w) = &o.loss_weights {
            self.loss_weights = pair("loss_weights", w)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("n_layers", self.n_layers),
            ("d_emb", self.d_emb),
            ("hidden", self.hidden),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.grid_resolution < 2 {
            return bad("grid_resolution must be at least 2".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return bad(format!("betas must lie in [0, 1), got {:?}", self.betas));
        }
        if self.k_s == Some(0) {
            return bad("k_s must be at least 1".into());
        }
        if self.vocabulary.is_empty() {
            return bad("vocabulary is empty".into());
        }
        if self.loss_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad(format!("loss weights must be finite and non-negative, got {:?}", self.loss_weights));
        }
        if self.dropout != 0.0 {
            return bad("dropout is reserved and must be 0".into());
        }
        Ok(())
    }

    pub fn arch(&self) -> ArchSpec {
        ArchSpec {
            d_emb: self.d_emb,
            n_layers: self.n_layers,
            hidden: self.hidden,
            grid_resolution: self.grid_resolution,
            k_s: self.k_s,
            aggregation: self.aggregation,
            vocabulary: TypeVocabulary::new(&self.vocabulary),
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig { lr: self.lr, beta1: self.betas[0], beta2: self.betas[1], ..AdamConfig::default() },
            seed: self.seed,
            weights: LossWeights { step: self.loss_weights[0], type_: self.loss_weights[1] },
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Parses a config file body. JSON when `json`, TOML otherwise.
pub fn parse_overrides(text: &str, json: bool, origin: &str) -> Result<ConfigOverrides, ConfigError> {
    let perr = |msg: String| ConfigError::Parse { path: origin.to_string(), msg };
    let value: Value = if json {
        serde_json::from_str(text).map_err(|e| perr(e.to_string()))?
    } else {
        let t: toml::Table = toml::from_str(text).map_err(|e| perr(e.to_string()))?;
        serde_json::to_value(t).map_err(|e| perr(e.to_string()))?
    };
    let Value::Object(map) = &value else {
        return Err(perr("top level must be a table".into()));
    };
    if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(ConfigError::UnknownKey(k.clone()));
    }
    serde_json::from_value(value).map_err(|e| perr(e.to_string()))
}

/// Defaults, then the file at `path`, then `flags`, then the seed fallback.
pub fn load_config(path: Option<&Path>, flags: &ConfigOverrides) -> Result<RunConfig, ConfigError> {
    load_config_with_env(path, flags, std::env::var(SEED_ENV).ok().as_deref())
}

/// [`load_config`] with the seed variable passed in.
pub fn load_config_with_env(
    path: Option<&Path>,
    flags: &ConfigOverrides,
    env_seed: Option<&str>,
) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut file = ConfigOverrides::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io(format!("{}: {e}", p.display())))?;
        let json = p.extension().is_some_and(|e| e == "json");
        file = parse_overrides(&text, json, &p.display().to_string())?;
        cfg.apply(&file)?;
    }
    cfg.apply(flags)?;
    if file.seed.is_none() && flags.seed.is_none() {
        if let Some(s) = env_seed {
            cfg.seed = s
                .trim()
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{SEED_ENV} must be an unsigned integer, got `{s}`")))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// What every artifact records about how it was made.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub resolved_config: Value,
    /// Input name to SHA-256 of its bytes.
    pub input_hashes: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(resolved_config: Value) -> Self {
        Provenance { tool_version: TOOL_VERSION.to_string(), resolved_config, input_hashes: BTreeMap::new() }
    }

    pub fn add_input(&mut self, name: impl Into<String>, bytes: &[u8]) {
        self.input_hashes.insert(name.into(), sha256_hex(bytes));
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("provenance serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let o = parse_overrides("", false, "x.toml").unwrap();
        let mut c = RunConfig::default();
        c.apply(&o).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.epochs, c.batch_size, c.lr, c.betas), (200, 100, 1e-3, [0.9, 0.99]));
        assert_eq!((c.grid_resolution, c.n_layers, c.d_emb, c.k_s), (5, 2, 64, None));
        assert_eq!(c.aggregation, Aggregation::Avg);
        c.validate().unwrap();
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "lr = 0.5\nepochs = 3\n").unwrap();
        let flags = ConfigOverrides { lr: Some(0.01), ..Default::default() };
        let c = load_config_with_env(Some(&p), &flags, None).unwrap();
        assert_eq!((c.lr, c.epochs), (0.01, 3));
    }

    #[test]
    fn misspelled_key_is_named() {
        assert_eq!(parse_overrides("epohcs = 3", false, "x").unwrap_err(), ConfigError::UnknownKey("epohcs".into()));
        assert_eq!(parse_overrides(r#"{"lrr": 1}"#, true, "x").unwrap_err(), ConfigError::UnknownKey("lrr".into()));
    }

    #[test]
    fn json_and_toml_agree() {
        let a = parse_overrides("aggregation = \"max\"\nbetas = [0.8, 0.9]\nk_s = 3", false, "a").unwrap();
        let b = parse_overrides(r#"{"aggregation": "max", "betas": [0.8, 0.9], "k_s": 3}"#, true, "b").unwrap();
        assert_eq!(a, b);
        let mut c = RunConfig::default();
        c.apply(&a).unwrap();
        assert_eq!((c.aggregation, c.betas, c.k_s), (Aggregation::Max, [0.8, 0.9], Some(3)));
    }

    #[test]
    fn seed_fallback_order() {
        let none = ConfigOverrides::default();
        assert_eq!(load_config_with_env(None, &none, Some("42")).unwrap().seed, 42);
        let flag = ConfigOverrides { seed: Some(3), ..Default::default() };
        assert_eq!(load_config_with_env(None, &flag, Some("42")).unwrap().seed, 3);
        assert_eq!(load_config_with_env(None, &none, None).unwrap().seed, 0);
        assert!(matches!(load_config_with_env(None, &none, Some("x")), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for o in [
            ConfigOverrides { epochs: Some(0), ..Default::default() },
            ConfigOverrides { lr: Some(-1.0), ..Default::default() },
            ConfigOverrides { k_s: Some(0), ..Default::default() },
            ConfigOverrides { dropout: Some(0.5), ..Default::default() },
            ConfigOverrides { betas: Some(vec![0.9]), ..Default::default() },
        ] {
            let mut c = RunConfig::default();
            assert!(c.apply(&o).and_then(|_| c.validate()).is_err(), "{o:?}");
        }
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig { k_s: Some(4), seed: 9, ..Default::default() };
        let back: RunConfig = serde_json::from_value(c.to_value()).unwrap();
        assert_eq!(back, c);
        let t = c.train();
        assert_eq!((t.adam.beta2, t.seed, t.batch_size), (0.99, 9, 100));
    }

    #[test]
    fn hashes_are_sha256() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
