use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rqe::formats;
use rqe::Result;

pub const FILE_NAME: &str = "manifest.json";

/// Everything needed to rerun a command. `args` is the argument list
/// without the program name and without `--out`, so `replay` can pick a new
/// output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub args: Vec<String>,
    pub inputs: Vec<String>,
    /// The parsed arguments, flags included.
    pub overrides: serde_json::Value,
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl RunManifest {
    /// Creates the output directory and writes the manifest into it.
    pub fn prepare(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.output_dir)?;
        fs::write(
            self.output_dir.join(FILE_NAME),
            formats::to_versioned_json(self)?,
        )?;
        Ok(self.output_dir.clone())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let path = if path.is_dir() {
            path.join(FILE_NAME)
        } else {
            path.to_path_buf()
        };
        formats::parse_versioned(&fs::read_to_string(&path)?, &path.display().to_string())
    }
}

/// Drops `--out <dir>` and `--out=<dir>` from an argument list.
pub fn strip_out(args: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_flags_are_removed() {
        let args: Vec<String> = [
            "solve-matrix",
            "g.json",
            "--out",
            "x",
            "--seed",
            "3",
            "--out=y",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(strip_out(&args), ["solve-matrix", "g.json", "--seed", "3"]);
    }
}
