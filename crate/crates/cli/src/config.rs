//! Run configuration: one JSON document, optionally overridden by
//! `--dotted.key value` pairs on the command line.

use std::path::{Path, PathBuf};

use ladder_core::data::{SplitConfig, SyntheticSpec};
use ladder_core::nas::{ControllerConfig, ProgressiveConfig, DEFAULT_CANDIDATE_EPOCHS};
use ladder_core::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSource {
    /// Directory written by `save_bundle`.
    pub bundle: Option<PathBuf>,
    pub linqs: Option<LinqsSource>,
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinqsSource {
    pub dir: PathBuf,
    /// File stem: reads `<dir>/<name>.content` and `<dir>/<name>.cites`.
    pub name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub k: usize,
    #[serde(default = "default_l")]
    pub l: usize,
    pub d: f64,
}

fn default_l() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub k: Vec<usize>,
    pub d: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            k: (2..=9).collect(),
            d: vec![2.0, 0.5, 0.25, 0.125, 0.0625, 0.03125],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomophilySpec {
    pub k_max: usize,
    pub bucket_width: f64,
    /// Hop whose ratios bucket the nodes in `eval-homophily`.
    pub eval_hop: usize,
}

impl Default for HomophilySpec {
    fn default() -> Self {
        HomophilySpec { k_max: 8, bucket_width: 0.05, eval_hop: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpec {
    /// Widths are `{2^0, …, 2^n} ∪ {C_i}`.
    pub n: u32,
    pub k_start: usize,
    pub k_max: usize,
    pub thresholds: Vec<f64>,
    pub budget_per_phase: usize,
    pub candidate_epochs: usize,
    pub update_interval: usize,
    pub controller: ControllerConfig,
    /// Also enumerate every architecture of length `k_start..=k_max` and report the true optimum.
    pub exhaustive_check: bool,
    /// Serve rewards from an existing trace instead of retraining.
    pub resume: bool,
}

impl Default for SearchSpec {
    fn default() -> Self {
        let p = ProgressiveConfig::default();
        SearchSpec {
            n: 8,
            k_start: p.k_start,
            k_max: p.k_max,
            thresholds: p.thresholds,
            budget_per_phase: p.budget_per_phase,
            candidate_epochs: DEFAULT_CANDIDATE_EPOCHS,
            update_interval: 50,
            controller: ControllerConfig::default(),
            exhaustive_check: false,
            resume: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    /// Scale each feature row to sum to one before propagation.
    pub normalize_features: bool,
    pub split: SplitConfig,
    /// Draw a fresh split even if the bundle ships one.
    pub resplit: bool,
    pub profile: Option<ProfileSpec>,
    pub dims: Option<Vec<usize>>,
    pub train: TrainConfig,
    /// First model seed; runs use `seed, seed+1, …`.
    pub seed: u64,
    pub n_seeds: usize,
    pub sweep: SweepSpec,
    pub homophily: HomophilySpec,
    pub search: SearchSpec,
    /// Model file read by `eval-homophily`.
    pub checkpoint: Option<PathBuf>,
    pub output: PathBuf,
    /// Sequential numerics and no worker pool.
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSource::default(),
            normalize_features: true,
            split: SplitConfig::default(),
            resplit: false,
            profile: None,
            dims: None,
            train: TrainConfig::default(),
            seed: 0,
            n_seeds: 10,
            sweep: SweepSpec::default(),
            homophily: HomophilySpec::default(),
            search: SearchSpec::default(),
            checkpoint: None,
            output: PathBuf::from("out"),
            deterministic: false,
        }
    }
}

/// Sets `path` (dot separated) inside `root`, creating objects on the way.
/// The value is parsed as JSON when possible, otherwise taken as a string.
pub fn apply_override(root: &mut Value, path: &str, raw: &str) -> CliResult<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::usage(format!("bad override key --{path}")));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        if !node.is_object() {
            return Err(CliError::usage(format!("--{path}: `{key}` is not an object")));
        }
        let obj = node.as_object_mut().expect("checked");
        let child = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
        if child.is_null() {
            *child = Value::Object(Default::default());
        }
        node = child;
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(keys[keys.len() - 1].to_string(), value);
            Ok(())
        }
        None => Err(CliError::usage(format!("--{path}: parent is not an object"))),
    }
}

impl RunConfig {
    /// Reads an optional JSON file, applies overrides in order and deserializes.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> CliResult<RunConfig> {
        let mut root = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?
            }
            None => Value::Object(Default::default()),
        };
        if !root.is_object() {
            return Err(CliError::usage("config must be a JSON object"));
        }
        for (key, value) in overrides {
            apply_override(&mut root, key, value)?;
        }
        serde_json::from_value(root).map_err(|e| CliError::usage(format!("config: {e}")))
    }

    /// Model seeds for multi-seed runs.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.seed + i).collect()
    }

    /// sha256 of the config without its output location, so identical
    /// experiments written to different directories share a hash.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("output");
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    /// Checks shared by every data-reading command. Runs before any output is created.
    pub fn validate_data(&self) -> CliResult<()> {
        let d = &self.data;
        let given = [d.bundle.is_some(), d.linqs.is_some(), d.synthetic.is_some()];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(CliError::usage(
                "exactly one of data.bundle, data.linqs, data.synthetic must be set",
            ));
        }
        if let Some(dir) = &d.bundle {
            require_dir(dir, "data.bundle")?;
        }
        if let Some(l) = &d.linqs {
            for ext in ["content", "cites"] {
                let p = l.dir.join(format!("{}.{ext}", l.name));
                if !p.is_file() {
                    return Err(CliError::usage(format!("data.linqs: {} does not exist", p.display())));
                }
            }
        }
        if let Some(spec) = &d.synthetic {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn validate_seeds(&self) -> CliResult<()> {
        if self.n_seeds == 0 {
            return Err(CliError::usage("n_seeds must be at least 1"));
        }
        self.train.validate()?;
        Ok(())
    }

    /// Train runs need exactly one of a profile rule or explicit widths.
    pub fn validate_architecture(&self) -> CliResult<()> {
        match (&self.profile, &self.dims) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            _ => Err(CliError::usage("exactly one of profile or dims must be set")),
        }
    }
}

fn require_dir(path: &Path, what: &str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what}: {} does not exist", path.display())))
    }
}

/// Splits `--a.b value` pairs out of an argument list. `--key=value` is also accepted.
pub fn split_overrides(args: &[String]) -> CliResult<(Vec<String>, Vec<(String, String)>)> {
    const OWN: [&str; 4] = ["--config", "--deterministic", "--help", "--version"];
    let mut kept = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let own = OWN.iter().any(|o| arg == o || arg.starts_with(&format!("{o}=")));
        match arg.strip_prefix("--") {
            Some(rest) if !own && !rest.is_empty() => {
                if let Some((k, v)) = rest.split_once('=') {
                    overrides.push((k.to_string(), v.to_string()));
                } else {
                    let v = it
                        .next()
                        .ok_or_else(|| CliError::usage(format!("--{rest} needs a value")))?;
                    overrides.push((rest.to_string(), v.clone()));
                }
            }
            _ => kept.push(arg.clone()),
        }
    }
    Ok((kept, overrides))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = RunConfig::load(
            None,
            &[
                ("train.epochs".into(), "7".into()),
                ("profile.k".into(), "3".into()),
                ("profile.d".into(), "0.5".into()),
                ("output".into(), "somewhere".into()),
                ("search.thresholds".into(), "[0.1,0.2]".into()),
            ],
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.profile, Some(ProfileSpec { k: 3, l: 1, d: 0.5 }));
        assert_eq!(cfg.output, PathBuf::from("somewhere"));
        assert_eq!(cfg.search.thresholds, vec![0.1, 0.2]);
        assert_eq!(cfg.train.learning_rate, 0.2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::load(None, &[("trian.epochs".into(), "7".into())]).unwrap_err();
        assert_eq!(err.code, crate::error::EXIT_USAGE);
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"n_seeds": 3, "train": {"epochs": 5}}"#).unwrap();
        let cfg = RunConfig::load(Some(&path), &[("train.epochs".into(), "9".into())]).unwrap();
        assert_eq!((cfg.n_seeds, cfg.train.epochs), (3, 9));
        assert_eq!(cfg.seeds(), vec![0, 1, 2]);
    }

    #[test]
    fn hash_ignores_output_only() {
        let a = RunConfig::default();
        let b = RunConfig { output: PathBuf::from("elsewhere"), ..Default::default() };
        let c = RunConfig { seed: 1, ..Default::default() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn override_splitting() {
        let (kept, ov) =
            split_overrides(&s(&["train", "--config", "c.json", "--train.epochs", "5", "--seed=3", "--deterministic"]))
                .unwrap();
        assert_eq!(kept, s(&["train", "--config", "c.json", "--deterministic"]));
        assert_eq!(ov, vec![("train.epochs".into(), "5".into()), ("seed".into(), "3".into())]);
        assert!(split_overrides(&s(&["--seed"])).is_err());
    }

    #[test]
    fn exactly_one_architecture() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate_architecture().is_err());
        cfg.dims = Some(vec![4]);
        assert!(cfg.validate_architecture().is_ok());
        cfg.profile = Some(ProfileSpec { k: 1, l: 1, d: 1.0 });
        assert!(cfg.validate_architecture().is_err());
    }

    #[test]
    fn data_source_checks() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate_data().is_err());
        cfg.data.bundle = Some(PathBuf::from("/definitely/not/here"));
        assert!(cfg.validate_data().is_err());
        cfg.data.bundle = None;
        cfg.data.synthetic = Some(SyntheticSpec::default());
        assert!(cfg.validate_data().is_ok());
    }
}
