//! Run configuration: one JSON document, optionally patched from flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rowssl::data::{BlobSpec, SplitSpec};
use rowssl::eval::EvalProtocol;
use rowssl::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Sections that carry their own `seed` field.
const SEEDED_SECTIONS: [&str; 3] = ["blobs", "split", "train"];

fn default_protocols() -> Vec<String> {
    EvalProtocol::ALL.iter().map(|p| p.name().to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Copied into every section that does not set its own seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blobs: Option<BlobSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_protocols")]
    pub protocols: Vec<String>,
    /// Evaluate every this many epochs while training; 0 disables snapshots.
    #[serde(default)]
    pub eval_every: u64,
}

/// Command-line adjustments, applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub protocols: Option<Vec<String>>,
    /// `dotted.key=value` pairs; values are parsed as JSON, else taken as strings.
    pub set: Vec<String>,
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("bad override key {key:?}");
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| anyhow!("override {key:?}: {part:?} is not inside an object"))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    let obj = node.as_object_mut().ok_or_else(|| anyhow!("override {key:?} does not point into an object"))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_assignment(raw: &str) -> Result<(&str, Value)> {
    let (key, value) = raw.split_once('=').ok_or_else(|| anyhow!("override {raw:?} is not KEY=VALUE"))?;
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.trim(), value))
}

impl RunConfig {
    /// Reads `path` (or starts from an empty document), applies overrides,
    /// spreads the seed, and validates everything.
    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Value::Object(Map::new()),
        };
        if !doc.is_object() {
            bail!("config must be a JSON object");
        }
        for raw in &ov.set {
            let (key, value) = parse_assignment(raw)?;
            set_path(&mut doc, key, value)?;
        }
        if let Some(seed) = ov.seed {
            doc["seed"] = seed.into();
        }
        let seed = doc.get("seed").cloned().unwrap_or(Value::from(0u64));
        let obj = doc.as_object_mut().expect("checked above");
        for name in SEEDED_SECTIONS {
            if let Some(section) = obj.get_mut(name).and_then(Value::as_object_mut) {
                // a --seed flag wins over seeds written in sections
                if ov.seed.is_some() || !section.contains_key("seed") {
                    section.insert("seed".into(), seed.clone());
                }
            }
        }
        let mut cfg: RunConfig = serde_json::from_value(doc).context("invalid config")?;
        if let Some(out) = &ov.out {
            cfg.out = Some(out.clone());
        }
        if let Some(p) = &ov.protocols {
            cfg.protocols = p.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = &self.blobs {
            b.validate().context("blobs section")?;
        }
        if let Some(s) = &self.split {
            s.validate().context("split section")?;
        }
        self.train.validate().context("train section")?;
        self.parsed_protocols()?;
        Ok(())
    }

    pub fn parsed_protocols(&self) -> Result<Vec<EvalProtocol>> {
        if self.protocols.is_empty() {
            bail!("no evaluation protocols selected");
        }
        self.protocols.iter().map(|p| p.parse::<EvalProtocol>().map_err(Into::into)).collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("run"))
    }

    pub fn blobs(&self) -> Result<&BlobSpec> {
        self.blobs.as_ref().ok_or_else(|| anyhow!("config has no `blobs` section"))
    }

    pub fn split(&self) -> Result<&SplitSpec> {
        self.split.as_ref().ok_or_else(|| anyhow!("config has no `split` section"))
    }

    /// Writes the effective config next to the outputs.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(dir.join("config.json"), text).with_context(|| format!("writing config into {}", dir.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("c.json");
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn seed_spreads_into_sections_unless_they_set_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            r#"{"seed": 7,
                "blobs": {"n_classes": 2, "dim": 3, "separation": 5, "std": 1, "per_class": 4},
                "train": {"epochs": 1, "seed": 3}}"#,
        );
        let cfg = RunConfig::load(Some(&p), &Overrides::default()).unwrap();
        assert_eq!(cfg.blobs.unwrap().seed, 7);
        assert_eq!(cfg.train.seed, 3);

        let ov = Overrides { seed: Some(11), ..Overrides::default() };
        let cfg = RunConfig::load(Some(&p), &ov).unwrap();
        assert_eq!((cfg.seed, cfg.blobs.unwrap().seed, cfg.train.seed), (11, 11, 11));
    }

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), r#"{"train": {"epochs": 4}}"#);
        let ov = Overrides {
            set: vec!["train.epochs=9".into(), "train.method=fixed_temperature".into()],
            ..Overrides::default()
        };
        let cfg = RunConfig::load(Some(&p), &ov).unwrap();
        assert_eq!(cfg.train.epochs, 9);

        let ov = Overrides { set: vec!["train.nope=1".into()], ..Overrides::default() };
        assert!(RunConfig::load(Some(&p), &ov).is_err());
        let p = write(dir.path(), r#"{"mystery": true}"#);
        assert!(RunConfig::load(Some(&p), &Overrides::default()).is_err());
        let ov = Overrides { set: vec!["no_equals_sign".into()], ..Overrides::default() };
        assert!(RunConfig::load(None, &ov).is_err());
    }

    #[test]
    fn bad_protocols_and_values_are_rejected_up_front() {
        let ov = Overrides { protocols: Some(vec!["test-everything".into()]), ..Overrides::default() };
        assert!(RunConfig::load(None, &ov).is_err());
        let ov = Overrides { set: vec!["train.batch_size=0".into()], ..Overrides::default() };
        assert!(RunConfig::load(None, &ov).is_err());
        let cfg = RunConfig::load(None, &Overrides::default()).unwrap();
        assert_eq!(cfg.parsed_protocols().unwrap(), EvalProtocol::ALL);
    }
}
