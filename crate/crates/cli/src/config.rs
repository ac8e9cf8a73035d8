use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use taxoprobe::attention::Direction;
use taxoprobe::dataset::NormsFormat;
use taxoprobe::probe::ProbeConfig;

/// Everything a run depends on. Loaded from a TOML file; command-line flags
/// are applied on top. Relative paths in the file are resolved against the
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Split seed for the probe and seed of a bare `stub` backend.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Matrix direction fed to the probe.
    pub direction: Direction,
    pub paths: PathsConfig,
    pub norms: NormsConfig,
    pub backend: BackendConfig,
    pub probe: ProbeSection,
    pub figures: FiguresConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            direction: Direction::Forward,
            paths: PathsConfig::default(),
            norms: NormsConfig::default(),
            backend: BackendConfig::default(),
            probe: ProbeSection::default(),
            figures: FiguresConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Feature-norms table.
    pub norms: Option<PathBuf>,
    /// WordNet dict directory or a taxonomy fixture file.
    pub lexicon: Option<PathBuf>,
    /// Defaults to `<out_dir>/dataset`.
    pub dataset_dir: Option<PathBuf>,
    /// Defaults to `<out_dir>/store`.
    pub store: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormsConfig {
    /// `tsv` (lowercase concept/feature/relation columns) or `mcrae`.
    pub preset: String,
    pub delimiter: Option<char>,
    pub concept_column: Option<String>,
    pub feature_column: Option<String>,
    pub relation_column: Option<String>,
}

impl Default for NormsConfig {
    fn default() -> Self {
        NormsConfig {
            preset: "tsv".into(),
            delimiter: None,
            concept_column: None,
            feature_column: None,
            relation_column: None,
        }
    }
}

impl NormsConfig {
    pub fn format(&self) -> Result<NormsFormat, String> {
        let mut f = match self.preset.as_str() {
            "tsv" => NormsFormat::default(),
            "mcrae" => NormsFormat::mcrae(),
            other => return Err(format!("unknown norms preset {other:?} (expected tsv or mcrae)")),
        };
        if let Some(d) = self.delimiter {
            f.delimiter = d;
        }
        if let Some(c) = &self.concept_column {
            f.concept_column = c.clone();
        }
        if let Some(c) = &self.feature_column {
            f.feature_column = c.clone();
        }
        if let Some(c) = &self.relation_column {
            f.relation_column = c.clone();
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    /// `stub`, `stub:SEED`, `stub:SEED:LxH`, or `transformers:MODEL_DIR`.
    pub spec: String,
    /// Interpreter used for the transformers bridge.
    pub python: String,
    /// Vocabulary file; defaults to `vocab.txt` inside the model directory.
    pub vocab: Option<PathBuf>,
    pub lowercase: bool,
    pub chunk_size: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            spec: "stub".into(),
            python: "python3".into(),
            vocab: None,
            lowercase: true,
            chunk_size: 64,
        }
    }
}

/// Probe settings; the split seed and direction come from the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub c: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub train_fraction: f64,
    pub pattern: Option<u8>,
    pub cv_folds: Option<usize>,
}

impl Default for ProbeSection {
    fn default() -> Self {
        let d = ProbeConfig::default();
        ProbeSection {
            c: d.c,
            max_iterations: d.max_iterations,
            tolerance: d.tolerance,
            train_fraction: d.train_fraction,
            pattern: d.pattern,
            cv_folds: d.cv_folds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiguresConfig {
    /// Render per-pattern panel groups.
    pub per_pattern: bool,
    /// Render the group averaged over all patterns.
    pub all_patterns: bool,
    /// Render first/last-layer skewness figures and the summary table.
    pub skewness: bool,
}

impl Default for FiguresConfig {
    fn default() -> Self {
        FiguresConfig {
            per_pattern: true,
            all_patterns: true,
            skewness: true,
        }
    }
}

/// Backend selection parsed from [`BackendConfig::spec`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Stub { seed: u64, layers: usize, heads: usize },
    Transformers { model: PathBuf },
}

impl BackendSpec {
    pub fn parse(spec: &str, default_seed: u64) -> Result<Self, String> {
        let bad = || format!("invalid backend spec {spec:?}");
        if spec == "stub" {
            return Ok(BackendSpec::Stub { seed: default_seed, layers: 12, heads: 12 });
        }
        if let Some(rest) = spec.strip_prefix("stub:") {
            let mut parts = rest.split(':');
            let seed = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let (layers, heads) = match parts.next() {
                None => (12, 12),
                Some(shape) => {
                    let (l, h) = shape.split_once('x').ok_or_else(bad)?;
                    (l.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?)
                }
            };
            if parts.next().is_some() || layers == 0 || heads == 0 {
                return Err(bad());
            }
            return Ok(BackendSpec::Stub { seed, layers, heads });
        }
        let model = spec.strip_prefix("transformers:").unwrap_or(spec);
        if model.is_empty() {
            return Err(bad());
        }
        Ok(BackendSpec::Transformers { model: PathBuf::from(model) })
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.rebase(base);
        Ok(config)
    }

    /// Makes relative paths relative to `base`.
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        for p in [
            &mut self.paths.norms,
            &mut self.paths.lexicon,
            &mut self.paths.dataset_dir,
            &mut self.paths.store,
            &mut self.backend.vocab,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let Some(model) = self.backend.spec.strip_prefix("transformers:") {
            let model = PathBuf::from(model);
            if model.is_relative() && base.join(&model).exists() {
                self.backend.spec = format!("transformers:{}", base.join(model).display());
            }
        }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.paths.dataset_dir.clone().unwrap_or_else(|| self.out_dir.join("dataset"))
    }

    pub fn store_dir(&self) -> PathBuf {
        self.paths.store.clone().unwrap_or_else(|| self.out_dir.join("store"))
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            c: self.probe.c,
            max_iterations: self.probe.max_iterations,
            tolerance: self.probe.tolerance,
            train_fraction: self.probe.train_fraction,
            seed: self.seed,
            direction: self.direction,
            pattern: self.probe.pattern,
            cv_folds: self.probe.cv_folds,
        }
    }

    pub fn backend_spec(&self) -> Result<BackendSpec, String> {
        BackendSpec::parse(&self.backend.spec, self.seed)
    }

    /// SHA-256 of the canonical TOML rendering of the effective settings.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_specs() {
        assert_eq!(
            BackendSpec::parse("stub", 4).unwrap(),
            BackendSpec::Stub { seed: 4, layers: 12, heads: 12 }
        );
        assert_eq!(
            BackendSpec::parse("stub:9:2x3", 0).unwrap(),
            BackendSpec::Stub { seed: 9, layers: 2, heads: 3 }
        );
        assert_eq!(
            BackendSpec::parse("transformers:/m", 0).unwrap(),
            BackendSpec::Transformers { model: "/m".into() }
        );
        assert!(BackendSpec::parse("stub:x", 0).is_err());
        assert!(BackendSpec::parse("stub:1:0x3", 0).is_err());
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "seed = 5\nout_dir = \"o\"\ndirection = \"backward\"\n[paths]\nnorms = \"n.tsv\"\n[probe]\nc = 0.5\n",
        )
        .unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.out_dir, dir.path().join("o"));
        assert_eq!(c.paths.norms, Some(dir.path().join("n.tsv")));
        assert_eq!(c.store_dir(), dir.path().join("o/store"));
        let p = c.probe_config();
        assert_eq!((p.c, p.seed, p.direction), (0.5, 5, Direction::Backward));
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "sed = 5\n").unwrap();
        assert!(RunConfig::load(&path).is_err());
    }

    #[test]
    fn hash_tracks_settings() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn norms_presets() {
        let mut n = NormsConfig { preset: "mcrae".into(), ..Default::default() };
        assert_eq!(n.format().unwrap().relation_column, "WB_Label");
        n.relation_column = Some("rel".into());
        assert_eq!(n.format().unwrap().relation_column, "rel");
        n.preset = "csv".into();
        assert!(n.format().is_err());
    }
}
