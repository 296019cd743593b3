//! Self-describing artifacts: every CSV starts with a `# config_hash=… seed=…`
//! line and every JSON document carries `config_hash` and `seed` fields.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliError;

pub struct OutputDir {
    dir: PathBuf,
    hash: String,
    seed: u64,
}

impl OutputDir {
    pub fn create(dir: &Path, hash: String, seed: u64) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash,
            seed,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_csv(
        &self,
        name: &str,
        body: impl FnOnce(&mut dyn Write) -> fracbayes_core::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut w = BufWriter::new(fs::File::create(&path)?);
        writeln!(w, "# config_hash={} seed={}", self.hash, self.seed)?;
        body(&mut w)?;
        w.flush()?;
        Ok(path)
    }

    /// Serializes `value` (an object) with the provenance fields prepended.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut doc = Map::new();
        doc.insert("config_hash".into(), Value::String(self.hash.clone()));
        doc.insert("seed".into(), Value::from(self.seed));
        match serde_json::to_value(value).map_err(fracbayes_core::Error::from)? {
            Value::Object(fields) => doc.extend(fields),
            other => {
                doc.insert("value".into(), other);
            }
        }
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(&Value::Object(doc)).map_err(fracbayes_core::Error::from)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}
