//! Atomic output staging: files are written to temp paths in the target
//! directory and renamed into place only after every stage of a run has
//! succeeded, so failed runs leave nothing partial behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tempfile::NamedTempFile;

pub struct Staging {
    dir: PathBuf,
    staged: Vec<(String, NamedTempFile)>,
}

impl Staging {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Staging { dir: dir.to_path_buf(), staged: Vec::new() })
    }

    /// Stages one file's full contents under the given name.
    pub fn stage(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let mut tmp = NamedTempFile::new_in(&self.dir)
            .with_context(|| format!("creating temp file for {name}"))?;
        tmp.write_all(contents).with_context(|| format!("writing staged {name}"))?;
        tmp.flush()?;
        self.staged.push((name.to_string(), tmp));
        Ok(())
    }

    /// Renames every staged file into place. Dropping without committing
    /// removes the temp files.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.staged.len());
        for (name, tmp) in self.staged {
            let target = self.dir.join(&name);
            tmp.persist(&target).with_context(|| format!("finalizing {}", target.display()))?;
            written.push(target);
        }
        Ok(written)
    }
}
