use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage an error is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Scene,
    Render,
    Sample,
    Track,
    Fuse,
    Score,
    Output,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Scene => "scene",
            Stage::Render => "render",
            Stage::Sample => "sample",
            Stage::Track => "track",
            Stage::Fuse => "fuse",
            Stage::Score => "score",
            Stage::Output => "output",
            Stage::Report => "report",
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(self) -> i32 {
        10 + self as i32
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl Error {
    /// The stage tag, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

/// Attach a stage tag to an error result.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| match e {
            tagged @ Error::Stage { .. } => tagged,
            other => Error::Stage { stage, source: Box::new(other) },
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid spec mismatch")]
    GridMismatch,
    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),
    #[error("not a proper rigid transform: {0}")]
    InvalidTransform(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("invalid cut: {0}")]
    InvalidCut(String),
    #[error("node {0} is not part of the cut")]
    NodeNotInCut(usize),
    #[error("value function is not additive over cut nodes")]
    NotAdditive,
    #[error("degenerate point configuration: {0}")]
    Degenerate(String),
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("scene placement infeasible after {0} attempts")]
    PlacementInfeasible(usize),
    #[error("malformed data: {0}")]
    Format(String),
    #[error("no runs found under {0}")]
    NoRuns(PathBuf),
    #[error("[{stage}] {source}")]
    Stage { stage: Stage, source: Box<Error> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
