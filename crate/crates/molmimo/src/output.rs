//! Result files. Every file starts with the config digest and seed: CSVs in
//! a leading `#` comment line, JSON documents in a `provenance` member.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    fn comment(&self) -> String {
        format!("# config_sha256={} seed={}\n", self.config_sha256, self.seed)
    }
}

/// Output directory bound to one run's provenance.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
    provenance: Provenance,
}

impl OutDir {
    pub fn create(root: impl Into<PathBuf>, provenance: Provenance) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| HarnessError::io(&root, e))?;
        Ok(Self { root, provenance })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn write_csv<R: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = csv::Writer::from_writer(self.provenance.comment().into_bytes());
        for row in rows {
            w.serialize(row).map_err(|e| HarnessError::format(&path, e))?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::format(&path, e))?;
        fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            provenance: &'a Provenance,
            #[serde(flatten)]
            body: &'a T,
        }
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(&Doc { provenance: &self.provenance, body })
            .map_err(|e| HarnessError::format(&path, e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    }
}

pub fn read_csv<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let mut r =
        csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(|e| HarnessError::format(path, e))?;
    r.deserialize().collect::<Result<Vec<R>, _>>().map_err(|e| HarnessError::format(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::format(path, e))
}

/// File-name tag of a topology, e.g. `d2_h1_r4`.
pub fn geometry_tag(d: f64, h: f64, r_r: f64) -> String {
    format!("d{d}_h{h}_r{r_r}")
}
