//! Output files. Every file records the configuration hash and master seed:
//! CSV files in a leading `#` comment line, JSON files in a `provenance`
//! object.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub master_seed: u64,
    pub version: &'static str,
}

impl Provenance {
    pub fn new(config_sha256: String, master_seed: u64) -> Self {
        Self {
            config_sha256,
            master_seed,
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

pub struct OutputDir {
    pub root: PathBuf,
    pub provenance: Provenance,
}

#[derive(Serialize)]
struct Stamped<'a, T> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

impl OutputDir {
    pub fn create(root: &Path, provenance: Provenance) -> anyhow::Result<Self> {
        std::fs::create_dir_all(root)
            .with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            provenance,
        })
    }

    fn open(&self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        Ok(BufWriter::new(file))
    }

    /// Writes `body` with a `provenance` field merged in at the top level.
    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> anyhow::Result<()> {
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(
            &mut w,
            &Stamped {
                provenance: &self.provenance,
                body,
            },
        )?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes text that already embeds the provenance.
    pub fn raw(&self, name: &str, text: &str) -> anyhow::Result<()> {
        let mut w = self.open(name)?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    /// Plain writer positioned after the provenance comment line.
    pub fn stamped(&self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let mut w = self.open(name)?;
        writeln!(
            w,
            "# config_sha256={} master_seed={}",
            self.provenance.config_sha256, self.provenance.master_seed
        )?;
        Ok(w)
    }

    pub fn csv(&self, name: &str) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
        Ok(csv::Writer::from_writer(self.stamped(name)?))
    }
}
