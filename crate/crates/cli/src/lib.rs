//! Stage runner for the brainmesh pipeline.
//!
//! A run directory holds one sub-directory per stage. Each stage writes its
//! artifacts and then a `stage.manifest` listing the config hash, the seed and
//! the SHA-256 of every input and output file. A stage whose manifest still
//! matches is skipped.

pub mod artifacts;
pub mod config;
pub mod pipeline;
pub mod stages;
pub mod sweep;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

pub use config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Decompose,
    Mesh,
    Encode,
    Cluster,
    Evaluate,
    Netstats,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Synth,
        Stage::Decompose,
        Stage::Mesh,
        Stage::Encode,
        Stage::Cluster,
        Stage::Evaluate,
        Stage::Netstats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Decompose => "decompose",
            Stage::Mesh => "mesh",
            Stage::Encode => "encode",
            Stage::Cluster => "cluster",
            Stage::Evaluate => "evaluate",
            Stage::Netstats => "netstats",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| CliError::Validation(vec![format!("unknown stage {s:?}")]))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("stage {stage} requires {requires}; run `brainmesh {requires}` first or drop --stage-only")]
    MissingUpstream { stage: Stage, requires: Stage },

    #[error(transparent)]
    Core(#[from] brainmesh::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("artifact {}: {detail}", path.display())]
    Artifact { path: PathBuf, detail: String },
}

impl CliError {
    /// 1 for configuration problems, 2 for everything that fails at run time.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
