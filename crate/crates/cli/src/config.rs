use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use framedex_core::anns::SearchParams;
use framedex_core::meta::metadata_path;
use framedex_core::pq::PQConfig;
use framedex_core::summary::KeyframePolicy;
use serde::{Deserialize, Serialize};

/// Invalid configuration or usage; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ScorerChoice {
    Reference,
    Constant,
    External(String),
}

impl FromStr for ScorerChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reference" => Ok(Self::Reference),
            "constant" => Ok(Self::Constant),
            _ => match s.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(Self::External(cmd.to_string())),
                _ => Err(format!("unknown scorer {s:?}; expected reference, constant or external:<cmd>")),
            },
        }
    }
}

impl TryFrom<String> for ScorerChoice {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<ScorerChoice> for String {
    fn from(s: ScorerChoice) -> String {
        s.to_string()
    }
}

impl fmt::Display for ScorerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Reference => f.write_str("reference"),
            Self::Constant => f.write_str("constant"),
            Self::External(cmd) => write!(f, "external:{cmd}"),
        }
    }
}

/// Every knob of a run. Precedence: flags, then the config file, then defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(alias = "D_prime")]
    pub dim: usize,
    #[serde(alias = "P")]
    pub subspaces: usize,
    #[serde(alias = "M")]
    pub centroids: usize,
    pub train_iters: usize,
    pub seed: u64,
    #[serde(alias = "A")]
    pub probes: usize,
    pub k: usize,
    pub n: usize,
    pub patch_size: usize,
    pub keyframe_interval: usize,
    /// Switches keyframe selection to frame differencing when set.
    pub keyframe_threshold: Option<f64>,
    /// Synthetic corpus size when no `corpus` is given.
    pub frames: usize,
    pub object_rate: f64,
    pub classes: u32,
    pub corpus: Option<PathBuf>,
    /// Precomputed patch embeddings (exchange JSONL) used instead of the synthetic encoder.
    pub patch_embeddings: Option<PathBuf>,
    pub text_embeddings: Option<PathBuf>,
    pub embeddings: PathBuf,
    pub index: PathBuf,
    pub metadata: Option<PathBuf>,
    pub ground_truth: PathBuf,
    pub report: PathBuf,
    pub scorer: ScorerChoice,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            subspaces: 8,
            centroids: 16,
            train_iters: 25,
            seed: 0,
            probes: 4,
            k: 100,
            n: 10,
            patch_size: 16,
            keyframe_interval: 1,
            keyframe_threshold: None,
            frames: 100,
            object_rate: 0.1,
            classes: 4,
            corpus: None,
            patch_embeddings: None,
            text_embeddings: None,
            embeddings: "collection.jsonl".into(),
            index: "index.fdx".into(),
            metadata: None,
            ground_truth: "truth.jsonl".into(),
            report: "report.json".into(),
            scorer: ScorerChoice::Reference,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))
    }

    pub fn pq(&self) -> framedex_core::Result<PQConfig> {
        PQConfig::new(self.dim, self.subspaces, self.centroids, self.train_iters, self.seed)
    }

    pub fn keyframe_policy(&self) -> KeyframePolicy {
        match self.keyframe_threshold {
            Some(threshold) => KeyframePolicy::FrameDifference { threshold },
            None => KeyframePolicy::FixedInterval { interval: self.keyframe_interval },
        }
    }

    pub fn metadata_path(&self) -> PathBuf {
        self.metadata.clone().unwrap_or_else(|| metadata_path(&self.index))
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        let bad = |e: framedex_core::Error| UsageError(e.to_string());
        self.pq().map_err(bad)?;
        SearchParams::new(self.probes, self.k).validate(self.centroids).map_err(bad)?;
        if self.n == 0 || self.n > self.k {
            return Err(UsageError(format!("need 1 <= n <= k, got n={} k={}", self.n, self.k)));
        }
        if self.patch_size == 0 {
            return Err(UsageError("patch_size must be positive".into()));
        }
        self.keyframe_policy().validate().map_err(bad)?;
        if !(0.0..=1.0).contains(&self.object_rate) {
            return Err(UsageError(format!("object_rate {} outside [0, 1]", self.object_rate)));
        }
        if self.classes == 0 {
            return Err(UsageError("classes must be positive".into()));
        }
        Ok(())
    }
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Embedding dimension.
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Subspaces per vector.
    #[arg(long, global = true)]
    pub subspaces: Option<usize>,
    /// Centroids per subspace codebook.
    #[arg(long, global = true)]
    pub centroids: Option<usize>,
    #[arg(long, global = true)]
    pub train_iters: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Clusters probed per subspace during fast search.
    #[arg(long, global = true)]
    pub probes: Option<usize>,
    /// Fast-search breadth.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Frames returned per query.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub patch_size: Option<usize>,
    #[arg(long, global = true)]
    pub keyframe_interval: Option<usize>,
    #[arg(long, global = true)]
    pub keyframe_threshold: Option<f64>,
    /// Synthetic corpus: number of frames.
    #[arg(long, global = true)]
    pub frames: Option<usize>,
    /// Frame JSONL corpus; synthetic frames are generated when absent.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub patch_embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    pub text_embeddings: Option<PathBuf>,
    /// Embedding-exchange JSONL written by ingest and read by build.
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    pub index: Option<PathBuf>,
    /// Metadata JSONL (default: `<index>.meta.jsonl`).
    #[arg(long, global = true)]
    pub metadata: Option<PathBuf>,
    #[arg(long, global = true)]
    pub ground_truth: Option<PathBuf>,
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Rerank scorer: reference, constant or external:<cmd>.
    #[arg(long, global = true)]
    pub scorer: Option<ScorerChoice>,
}

impl Overrides {
    /// Defaults, then the config file, then flags; validated.
    pub fn resolve(&self) -> Result<RunConfig, UsageError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    c.$field = v.clone();
                }
            )*};
        }
        set!(dim, subspaces, centroids, train_iters, seed, probes, k, n, patch_size, keyframe_interval, frames);
        set!(embeddings, index, ground_truth, report, scorer);
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if self.$field.is_some() {
                    c.$field = self.$field.clone();
                }
            )*};
        }
        set_opt!(keyframe_threshold, corpus, patch_embeddings, text_embeddings, metadata);
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flags_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "P = 4\nk = 50\nseed = 9\nscorer = \"constant\"\n").unwrap();
        let o = Overrides { config: Some(path), k: Some(20), ..Default::default() };
        let c = o.resolve().unwrap();
        assert_eq!(c.subspaces, 4);
        assert_eq!(c.k, 20);
        assert_eq!(c.seed, 9);
        assert_eq!(c.centroids, 16);
        assert_eq!(c.scorer, ScorerChoice::Constant);
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = [
            RunConfig { dim: 60, subspaces: 8, ..Default::default() },
            RunConfig { n: 11, k: 10, ..Default::default() },
            RunConfig { probes: 17, ..Default::default() },
            RunConfig { keyframe_interval: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn unknown_keys_and_scorers_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
        assert!("external:".parse::<ScorerChoice>().is_err());
        assert!("fancy".parse::<ScorerChoice>().is_err());
        assert_eq!("external:cat".parse::<ScorerChoice>().unwrap(), ScorerChoice::External("cat".into()));
    }

    #[test]
    fn metadata_defaults_next_to_index() {
        let c = RunConfig { index: "/x/a.fdx".into(), ..Default::default() };
        assert_eq!(c.metadata_path(), PathBuf::from("/x/a.fdx.meta.jsonl"));
    }
}
