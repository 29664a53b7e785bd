use std::fs;
use std::path::Path;

use cellflow_core::{sha256_hex, Error, Result};
use serde::Serialize;

#[derive(Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Arguments that reproduce this run when followed by `--out <dir>`.
    pub args: Vec<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub artifact_versions: ArtifactVersions,
}

#[derive(Serialize)]
pub struct ArtifactVersions {
    pub regressor: u32,
    pub lstm: u32,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Manifest {
            tool: "cellflow",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            args: replay_args(std::env::args().skip(1)),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            artifact_versions: ArtifactVersions {
                regressor: cellflow_core::regress::ARTIFACT_VERSION,
                lstm: cellflow_core::neural::LSTM_FORMAT_VERSION,
            },
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(digest(path, path.display().to_string())?);
        Ok(())
    }

    /// Records every output file in `dir` by name, in sorted order.
    pub fn write(mut self, dir: &Path) -> Result<()> {
        let mut names: Vec<String> = fs::read_dir(dir)
            .map_err(|e| Error::Io {
                path: dir.into(),
                source: e,
            })?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n != "manifest.json")
            .collect();
        names.sort();
        for n in names {
            self.outputs.push(digest(&dir.join(&n), n)?);
        }
        let path = dir.join("manifest.json");
        let body = serde_json::to_string_pretty(&self)? + "\n";
        fs::write(&path, body).map_err(|e| Error::Io { path, source: e })
    }
}

fn digest(path: &Path, name: String) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    Ok(FileDigest {
        path: name,
        sha256: sha256_hex(&bytes),
    })
}

/// Drops `--out` and `--jobs` (and their values) from the command line.
pub fn replay_args(args: impl Iterator<Item = String>) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        match a.as_str() {
            "--out" | "--jobs" | "-o" => skip = true,
            s if s.starts_with("--out=") || s.starts_with("--jobs=") => {}
            _ => out.push(a),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_drops_output_and_threads() {
        let args = ["train", "--data", "d", "--out", "x", "--jobs=4", "--seed", "3"].map(String::from);
        assert_eq!(replay_args(args.into_iter()), ["train", "--data", "d", "--seed", "3"]);
    }
}
