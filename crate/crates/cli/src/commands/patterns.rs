//! `patterns export` and `patterns validate`.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

use symgrid_core::pattern::{expand_default_patterns, load_pattern_file, write_pattern_file};

use crate::output::Staging;

/// Writes the builtin 63-pattern set in pattern-file syntax, to stdout or a
/// file.
pub fn export(out: Option<&Path>) -> Result<()> {
    let set = expand_default_patterns();
    let mut buf = Vec::new();
    write_pattern_file(&set, &mut buf).context("rendering pattern set")?;
    match out {
        None => {
            std::io::stdout().write_all(&buf)?;
        }
        Some(path) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
            let mut staging = Staging::new(dir.unwrap_or(Path::new(".")))?;
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .context("output path has no file name")?;
            staging.stage(name, &buf)?;
            staging.commit()?;
            println!("wrote {} patterns to {}", set.len(), path.display());
        }
    }
    Ok(())
}

/// Loads a pattern file and reports what it found; parse errors carry line
/// numbers and abort with a nonzero exit.
pub fn validate(path: &Path) -> Result<()> {
    let set = load_pattern_file(path)
        .with_context(|| format!("validating pattern file {}", path.display()))?;
    println!(
        "OK: {} patterns ({} mode) from {}",
        set.len(),
        set.mode(),
        path.display()
    );
    Ok(())
}
