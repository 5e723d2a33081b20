//! Flat `key = value` configuration. Every key doubles as a `--key` flag;
//! flags win over the file, the file over built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use ini::Ini;

/// Every recognised key, its default (empty: unset) and help text.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("kb", "", "triples TSV; a synthetic KB is generated when unset"),
    ("synth-entities", "500", "entities of the generated KB"),
    ("synth-relations", "8", "relations of the generated KB"),
    ("synth-density", "4.0", "triples per entity of the generated KB"),
    ("embeddings", "", "embedding CSV; trained on the fly when unset"),
    ("dim", "100", "embedding dimension"),
    ("transe-epochs", "100", "TransE epochs"),
    ("transe-lr", "0.01", "TransE learning rate"),
    ("margin", "1.0", "TransE margin"),
    ("experts", "", "expert path file; sampled on the fly when unset"),
    ("expert-count", "256", "expert paths to sample"),
    ("hops", "2", "hops per reasoning path"),
    ("rounds", "50", "training rounds"),
    ("episodes", "64", "rollouts per round"),
    ("batch-size", "64", "expert paths per comparator step"),
    ("policy-lr", "0.1", "policy learning rate"),
    ("comparator-lr", "0.05", "comparator learning rate"),
    ("entropy-coef", "0.1", "initial entropy bonus"),
    ("hidden", "64", "hidden width of policy and comparator"),
    ("track-tv", "true", "compute exact TV distance each round"),
    ("policy", "", "policy checkpoint; trained on the fly when unset"),
    ("skgs", "5", "sub-knowledge-bases for eval"),
    ("test-paths", "100", "test paths per sub-knowledge-base"),
    ("samples-per-origin", "5", "rollouts (or GA runs) per test path"),
    ("ga-population", "100", "GA population"),
    ("ga-generations", "50", "GA generations"),
    ("snr-db", "0,2,4,6,8,10", "comma-separated SNR points in dB (inf allowed)"),
    ("packets", "500", "packets per SNR point"),
    ("modes", "none,nearest,reasoning", "recovery modes"),
    ("message-hops", "2", "hops of each transmitted message path"),
    ("shortlist", "5", "candidates rescored by the reasoning receiver"),
    ("expert-counts", "10,100,1000", "expert counts for sweep-experts"),
    ("sweep-seeds", "5", "seeds averaged by sweep-experts"),
];

#[derive(Clone, Debug)]
pub struct Settings {
    values: BTreeMap<String, String>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Settings {
    pub fn new(file: Option<&Path>, flags: &[(String, String)], seed: u64, out: PathBuf) -> Result<Self> {
        let mut values: BTreeMap<String, String> = KEYS.iter().map(|&(k, d, _)| (k.to_string(), d.to_string())).collect();
        if let Some(path) = file {
            let ini = Ini::load_from_file(path).with_context(|| format!("reading config {}", path.display()))?;
            for (section, props) in &ini {
                if let Some(s) = section {
                    bail!("{}: sections are not supported (found [{s}])", path.display());
                }
                for (k, v) in props.iter() {
                    if !values.contains_key(k) {
                        bail!("{}: unknown key {k:?}", path.display());
                    }
                    values.insert(k.to_string(), v.to_string());
                }
            }
        }
        for (k, v) in flags {
            values.insert(k.clone(), v.clone());
        }
        Ok(Self { values, seed, out })
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.trim().parse().map_err(|e| anyhow::anyhow!("{key} = {raw:?}: {e}"))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.raw(key).trim();
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .split(',')
            .map(|s| s.trim().parse().map_err(|e| anyhow::anyhow!("{key}: {s:?}: {e}")))
            .collect()
    }

    pub fn output(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(name))
    }
}
