//! CSV tables and their metadata sidecars.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::spec::ExperimentSpec;
use crate::CliError;

/// Sidecar written next to every output: enough to rerun the command and
/// get identical rows.
#[derive(Debug, Serialize)]
pub struct Meta<'a> {
    pub command: &'a str,
    pub version: &'a str,
    /// Resolved spec; pass it back with `--spec` to reproduce the run.
    pub spec: &'a ExperimentSpec,
    pub seed: u64,
    pub rng_id: &'a str,
    /// SHA-256 of the compact JSON of `spec`.
    pub config_sha256: String,
    pub parallel: bool,
    pub files: Vec<String>,
}

pub fn config_hash(spec: &ExperimentSpec) -> String {
    let bytes = serde_json::to_vec(spec).expect("specs always serialize");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub struct Out {
    dir: PathBuf,
    written: Vec<String>,
}

impl Out {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Out {
            dir: dir.to_path_buf(),
            written: vec![],
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<(), CliError> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::csv(&path, e))?;
        for r in rows {
            w.serialize(r).map_err(|e| CliError::csv(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))
    }

    /// Table with an explicit header, for rows of varying width.
    pub fn csv_raw(
        &mut self,
        name: &str,
        header: &[String],
        rows: &[Vec<f64>],
    ) -> Result<(), CliError> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::csv(&path, e))?;
        w.write_record(header)
            .map_err(|e| CliError::csv(&path, e))?;
        for r in rows {
            w.serialize(r).map_err(|e| CliError::csv(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        write_json(&path, value)
    }

    /// Writes `<command>.meta.json` listing everything written so far.
    pub fn finish(self, command: &str, spec: &ExperimentSpec, seed: u64) -> Result<(), CliError> {
        let meta = Meta {
            command,
            version: env!("CARGO_PKG_VERSION"),
            spec,
            seed,
            rng_id: advlq::sim::RNG_ID,
            config_sha256: config_hash(spec),
            parallel: cfg!(feature = "parallel"),
            files: self.written,
        };
        write_json(&self.dir.join(format!("{command}.meta.json")), &meta)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("outputs always serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
