use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// What a command was run with and what it wrote. Holds no timestamps, so identical runs produce identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_path: Option<String>,
    pub seed: u64,
    pub stages: Vec<String>,
    pub out_dir: String,
    /// Other directories or files read, as given on the command line.
    pub inputs: BTreeMap<String, String>,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    /// Relative path to SHA-256 of every emitted file.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn add_artifact(&mut self, out: &Path, rel: &str) -> Result<()> {
        let h = sha256_file(&out.join(rel))?;
        self.artifacts.insert(rel.to_string(), h);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        let p = out.join(MANIFEST_FILE);
        fs::write(&p, self.to_json()).map_err(|e| Error::io(&p, e))
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.line(),
            reason: e.to_string(),
        })
    }
}

/// Make `out` ready for writing. A non-empty directory needs `force`; files listed by a previous
/// manifest there are removed, anything else is left alone.
pub fn prepare_out_dir(out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        if !out.is_dir() {
            return Err(Error::Config(format!("{} exists and is not a directory", out.display())));
        }
        let non_empty = fs::read_dir(out).map_err(|e| Error::io(out, e))?.next().is_some();
        if non_empty && !force {
            return Err(Error::Config(format!(
                "output directory {} already exists; pass --force to overwrite",
                out.display()
            )));
        }
        let old = out.join(MANIFEST_FILE);
        if old.exists() {
            if let Ok(m) = RunManifest::read(&old) {
                for rel in m.artifacts.keys() {
                    let p = out.join(rel);
                    if p.is_file() {
                        fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
                    }
                }
            }
            fs::remove_file(&old).map_err(|e| Error::io(&old, e))?;
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_without_force() {
        let d = tempfile::tempdir().unwrap();
        fs::write(d.path().join("x"), "1").unwrap();
        assert!(matches!(prepare_out_dir(d.path(), false), Err(Error::Config(_))));
        prepare_out_dir(d.path(), true).unwrap();
        // unrelated files survive
        assert!(d.path().join("x").exists());
    }

    #[test]
    fn force_clears_previous_artifacts() {
        let d = tempfile::tempdir().unwrap();
        fs::write(d.path().join("a.txt"), "1").unwrap();
        let mut m = RunManifest {
            command: "t".into(),
            tool_version: "0".into(),
            config_path: None,
            seed: 0,
            stages: vec![],
            out_dir: ".".into(),
            inputs: BTreeMap::new(),
            config: serde_json::Value::Null,
            artifacts: BTreeMap::new(),
        };
        m.add_artifact(d.path(), "a.txt").unwrap();
        assert_eq!(
            m.artifacts["a.txt"],
            "6b86b273ff34fce19d6b804eff5a3f5747ada4eaa22f1d49c01e52ddb7875b4b"
        );
        m.write(d.path()).unwrap();
        prepare_out_dir(d.path(), true).unwrap();
        assert!(!d.path().join("a.txt").exists());
        assert!(!d.path().join(MANIFEST_FILE).exists());
    }
}
