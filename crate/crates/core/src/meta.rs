//! Output metadata: every file the pipeline writes starts with a header
//! recording the tool version, a digest of the resolved run configuration
//! and digests of the input files, so identical runs are verifiable as
//! identical from the outputs alone.

use std::io::Read;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, Serialize)]
pub struct OutputMeta {
    /// Tool name and version, e.g. `symgrid 0.1.0`.
    pub tool: String,
    /// Digest of the resolved run configuration (semantic parameters only,
    /// no filesystem paths).
    pub config_digest: String,
    /// (input name, content digest) pairs.
    pub input_digests: Vec<(String, String)>,
}

impl OutputMeta {
    pub fn new(tool: impl Into<String>, config_digest: impl Into<String>) -> Self {
        OutputMeta {
            tool: tool.into(),
            config_digest: config_digest.into(),
            input_digests: Vec::new(),
        }
    }

    pub fn with_input(mut self, name: impl Into<String>, digest: impl Into<String>) -> Self {
        self.input_digests.push((name.into(), digest.into()));
        self
    }

    /// Header lines without the leading `# `.
    pub fn comment_lines(&self) -> Vec<String> {
        let mut lines = vec![self.tool.clone(), format!("config sha256:{}", self.config_digest)];
        for (name, digest) in &self.input_digests {
            lines.push(format!("input {name} sha256:{digest}"));
        }
        lines
    }
}

/// Truncated SHA-256 of a byte slice, as 16 hex chars.
pub fn digest_bytes(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    hex::encode(&d[..8])
}

/// Truncated SHA-256 of a file's contents.
pub fn digest_file(path: &Path) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let d = hasher.finalize();
    Ok(hex::encode(&d[..8]))
}
