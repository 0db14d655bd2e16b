//! Run configuration: merged from CLI flags, `SYMGRID_*` environment
//! variables and an optional TOML defaults file, in that precedence order.
//! The resolved config is digested (semantic parameters only, never
//! filesystem paths) and echoed into every output's metadata header.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use symgrid_core::grid::{CoverageWindow, GridLevel};
use symgrid_core::meta::{digest_bytes, digest_file, OutputMeta};
use symgrid_core::report::ChoroplethFormat;
use symgrid_core::timespan::{StudyWindow, TimeSpan, UtcOffset};
use symgrid_core::wssci::CountMode;

pub const TOOL: &str = concat!("symgrid ", env!("CARGO_PKG_VERSION"));

/// Optional defaults loaded from a TOML file (`--config`).
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub tz: Option<UtcOffset>,
    pub study_window: Option<StudyWindow>,
    pub coverage: Option<CoverageWindow>,
    pub window_days: Option<u32>,
    pub mode: Option<String>,
    pub level: Option<String>,
    pub span: Option<String>,
    pub threshold: Option<u64>,
    pub top: Option<usize>,
    pub format: Option<String>,
    pub jobs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }
}

/// Flag-level option bag shared by the pipeline subcommands; `None` means
/// "fall through to environment / file / default".
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub tz: Option<UtcOffset>,
    pub study_window: Option<StudyWindow>,
    pub coverage: Option<CoverageWindow>,
    pub patterns: Option<PathBuf>,
    pub window_days: Option<u32>,
    pub mode: Option<CountMode>,
    pub level: Option<GridLevel>,
    pub span: Option<TimeSpan>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub threshold: Option<u64>,
    pub top: Option<usize>,
    pub format: Option<ChoroplethFormat>,
    pub jobs: Option<usize>,
}

/// Fully resolved configuration; nothing optional remains except the study
/// window and the explicit report range.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub tz: UtcOffset,
    pub study_window: Option<StudyWindow>,
    pub coverage: CoverageWindow,
    /// `None` means the builtin pattern set.
    pub patterns: Option<PathBuf>,
    pub window_days: u32,
    pub mode: CountMode,
    pub level: GridLevel,
    pub span: TimeSpan,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub threshold: u64,
    pub top: usize,
    pub format: ChoroplethFormat,
    pub jobs: usize,
}

fn env_parse<T: std::str::FromStr>(name: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match std::env::var(name) {
        Ok(raw) => match raw.parse() {
            Ok(v) => Ok(Some(v)),
            Err(e) => bail!("invalid {name}={raw:?}: {e}"),
        },
        Err(_) => Ok(None),
    }
}

impl RunConfig {
    /// Resolution order: flags, then `SYMGRID_TZ` / `SYMGRID_THRESHOLD` /
    /// `SYMGRID_JOBS`, then the config file, then defaults.
    pub fn resolve(flags: Overrides, file: FileConfig) -> Result<Self> {
        let mode = match (flags.mode, file.mode) {
            (Some(m), _) => m,
            (None, Some(s)) => s.parse().map_err(anyhow::Error::msg)?,
            (None, None) => CountMode::Exact,
        };
        let level = match (flags.level, file.level) {
            (Some(l), _) => l,
            (None, Some(s)) => s.parse().map_err(anyhow::Error::msg)?,
            (None, None) => GridLevel::Third,
        };
        let span = match (flags.span, file.span) {
            (Some(s), _) => s,
            (None, Some(s)) => s.parse().map_err(anyhow::Error::msg)?,
            (None, None) => TimeSpan::Whole,
        };
        let format = match (flags.format, file.format) {
            (Some(f), _) => f,
            (None, Some(s)) => s.parse().map_err(anyhow::Error::msg)?,
            (None, None) => ChoroplethFormat::Csv,
        };

        let cfg = RunConfig {
            tz: flags
                .tz
                .or(env_parse::<UtcOffset>("SYMGRID_TZ")?)
                .or(file.tz)
                .unwrap_or_default(),
            study_window: flags.study_window.or(file.study_window),
            coverage: flags.coverage.or(file.coverage).unwrap_or_default(),
            patterns: flags.patterns,
            window_days: flags.window_days.or(file.window_days).unwrap_or(0),
            mode,
            level,
            span,
            from: flags.from,
            to: flags.to,
            threshold: flags
                .threshold
                .or(env_parse::<u64>("SYMGRID_THRESHOLD")?)
                .or(file.threshold)
                .unwrap_or(3),
            top: flags.top.or(file.top).unwrap_or(20),
            format,
            jobs: flags
                .jobs
                .or(env_parse::<usize>("SYMGRID_JOBS")?)
                .or(file.jobs)
                .unwrap_or(1)
                .max(1),
        };
        cfg.coverage.validate()?;
        if let (Some(from), Some(to)) = (cfg.from, cfg.to) {
            if to < from {
                bail!("--to {to} precedes --from {from}");
            }
        }
        Ok(cfg)
    }

    /// Digest of the semantic parameters. Paths are excluded; the pattern
    /// file participates through its content digest, and parallelism does
    /// not participate at all (results are parallelism-invariant).
    pub fn digest(&self, seed: Option<u64>) -> Result<String> {
        #[derive(Serialize)]
        struct Semantic<'a> {
            tool: &'static str,
            tz: String,
            study_window: &'a Option<StudyWindow>,
            coverage: &'a CoverageWindow,
            patterns: String,
            window_days: u32,
            mode: String,
            level: GridLevel,
            span: TimeSpan,
            from: &'a Option<NaiveDate>,
            to: &'a Option<NaiveDate>,
            threshold: u64,
            top: usize,
            format: &'static str,
            seed: Option<u64>,
        }
        let patterns = match &self.patterns {
            None => "builtin".to_string(),
            Some(path) => format!(
                "file:{}",
                digest_file(path)
                    .with_context(|| format!("digesting pattern file {}", path.display()))?
            ),
        };
        let semantic = Semantic {
            tool: TOOL,
            tz: self.tz.to_string(),
            study_window: &self.study_window,
            coverage: &self.coverage,
            patterns,
            window_days: self.window_days,
            mode: self.mode.to_string(),
            level: self.level,
            span: self.span,
            from: &self.from,
            to: &self.to,
            threshold: self.threshold,
            top: self.top,
            format: match self.format {
                ChoroplethFormat::Csv => "csv",
                ChoroplethFormat::Geojson => "geojson",
            },
            seed,
        };
        Ok(digest_bytes(&serde_json::to_vec(&semantic)?))
    }

    /// Builds the output metadata header, digesting the given input files.
    pub fn output_meta(&self, seed: Option<u64>, inputs: &[(&str, &Path)]) -> Result<OutputMeta> {
        let mut meta = OutputMeta::new(TOOL, self.digest(seed)?);
        for (name, path) in inputs {
            let digest =
                digest_file(path).with_context(|| format!("digesting input {}", path.display()))?;
            meta = meta.with_input(*name, digest);
        }
        Ok(meta)
    }
}

/// Reads the pseudonymization salt from the environment variable named by
/// `--salt-env`.
pub fn salt_from_env(var: &str) -> Result<String> {
    let salt = std::env::var(var)
        .with_context(|| format!("salt environment variable {var} is not set"))?;
    if salt.is_empty() {
        bail!("salt environment variable {var} is empty");
    }
    Ok(salt)
}

/// Parses `south,west,north,east` degrees into a coverage window.
pub fn parse_coverage(s: &str) -> Result<CoverageWindow, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("expected south,west,north,east, got {s:?}"));
    }
    let mut vals = [0f64; 4];
    for (i, p) in parts.iter().enumerate() {
        vals[i] = p.parse().map_err(|e| format!("bad coordinate {p:?}: {e}"))?;
    }
    CoverageWindow::new(vals[0], vals[1], vals[2], vals[3]).map_err(|e| e.to_string())
}
