use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cpuzzle_core::corpus::SynthSpec;
use cpuzzle_core::evaluation::AlignMode;
use cpuzzle_core::pipeline::SolveConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Largest seed accepted anywhere: seeds are stored as TOML integers.
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    /// Source image; a synthetic image per puzzle when absent.
    pub image: Option<PathBuf>,
    pub synthetic_width: u32,
    pub synthetic_height: u32,
    pub count: usize,
    pub seed: u64,
    pub synth: SynthSpec,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            image: None,
            synthetic_width: 480,
            synthetic_height: 360,
            count: 25,
            seed: 0,
            synth: SynthSpec::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Pieces at their true poses.
    #[default]
    Gt,
    /// Pieces at solved poses, aligned to the true frame through the anchor.
    Solution,
    /// Pieces in their own frames, laid out on a grid.
    Shuffled,
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Gt => "gt",
            Layout::Solution => "solution",
            Layout::Shuffled => "shuffled",
        })
    }
}

impl FromStr for Layout {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" => Ok(Layout::Gt),
            "solution" => Ok(Layout::Solution),
            "shuffled" => Ok(Layout::Shuffled),
            _ => Err(CliError::Usage(format!(
                "unknown layout {s:?}, expected gt, solution or shuffled"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub layout: Layout,
    pub solution: Option<PathBuf>,
    pub outlines: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub align: AlignMode,
}

/// Effective parameters of one command, written beside its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub version: String,
    pub inputs: Vec<PathBuf>,
    pub generate: Option<GenerateConfig>,
    pub solve: Option<SolveConfig>,
    pub eval: Option<EvalConfig>,
    pub render: Option<RenderConfig>,
}

impl RunConfig {
    pub fn new(command: &str, inputs: &[&Path]) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            generate: None,
            solve: None,
            eval: None,
            render: None,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Serialize {
            what: "run configuration",
            message: e.to_string(),
        })
    }

    /// `run_config_<command>.toml`, so commands sharing a directory keep
    /// their own record.
    pub fn file_name(&self) -> String {
        format!("run_config_{}.toml", self.command)
    }

    pub fn write_into(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(self.file_name()), self.to_toml()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| {
            CliError::Core(cpuzzle_core::Error::Manifest {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
    }
}
