use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::Format;
use crate::error::CliError;

/// Resolved configuration of a run and the files it writes.
pub struct Run {
    dir: PathBuf,
    format: Format,
    header: String,
    config: String,
    pending: Vec<(String, Vec<u8>)>,
}

impl Run {
    pub fn new<C: Serialize>(dir: &Path, format: Format, seed: u64, config: &C) -> Result<Self, CliError> {
        let value = serde_json::json!({ "version": env!("CARGO_PKG_VERSION"), "config": config });
        let canonical = serde_json::to_string(&value).map_err(CliError::internal)?;
        let hash = hex(&Sha256::digest(canonical.as_bytes()));
        let mut pretty = serde_json::to_string_pretty(&serde_json::json!({ "seed": seed, "config_hash": hash, "resolved": value }))
            .map_err(CliError::internal)?;
        pretty.push('\n');
        Ok(Self { dir: dir.to_path_buf(), format, header: format!("# seed={seed} config={hash}\n"), config: pretty, pending: Vec::new() })
    }

    /// Queues a table; nothing is written until [`Run::commit`]. Empty tables are skipped.
    pub fn table<R: Serialize>(&mut self, stem: &str, rows: &[R]) -> Result<(), CliError> {
        if rows.is_empty() {
            log::debug!("{stem}: no rows, not written");
            return Ok(());
        }
        match self.format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(self.header.clone().into_bytes());
                for r in rows {
                    w.serialize(r).map_err(CliError::internal)?;
                }
                let bytes = w.into_inner().map_err(CliError::internal)?;
                self.pending.push((format!("{stem}.csv"), bytes));
            }
            Format::Json => {
                let hash = self.header.trim_start_matches("# ").trim_end().to_string();
                let mut bytes = serde_json::to_vec_pretty(&serde_json::json!({ "provenance": hash, "rows": rows })).map_err(CliError::internal)?;
                bytes.push(b'\n');
                self.pending.push((format!("{stem}.json"), bytes));
            }
        }
        Ok(())
    }

    /// Queues a CSV regardless of the chosen format (inputs for other commands).
    pub fn raw_csv(&mut self, name: &str, body: Vec<u8>) {
        let mut bytes = self.header.clone().into_bytes();
        bytes.extend(body);
        self.pending.push((name.to_string(), bytes));
    }

    /// Writes every queued file and `config.json`, each by rename from a temporary file.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let mut written = Vec::new();
        for (name, bytes) in self.pending.iter().map(|(n, b)| (n.as_str(), b.as_slice())).chain([("config.json", self.config.as_bytes())]) {
            let path = self.dir.join(name);
            let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
            tmp.write_all(bytes).map_err(|e| CliError::io(&path, e))?;
            tmp.persist(&path).map_err(|e| CliError::io(&path, e.error))?;
            log::info!("wrote {}", path.display());
            written.push(path);
        }
        Ok(written)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
