//! All-or-nothing output directories: files are staged in a sibling
//! directory and moved into place only after every write succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub struct Staging {
    target: PathBuf,
    temp: PathBuf,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staging {
    pub fn new(target: &Path) -> Self {
        let name = target.file_name().map_or("out".into(), |n| n.to_string_lossy().into_owned());
        let parent = target.parent().unwrap_or(Path::new("."));
        Self {
            target: target.to_path_buf(),
            temp: parent.join(format!(".{name}.partial-{}", std::process::id())),
            files: Vec::new(),
        }
    }

    pub fn text(&mut self, rel: impl AsRef<Path>, contents: impl Into<String>) {
        self.files.push((rel.as_ref().to_path_buf(), contents.into().into_bytes()));
    }

    pub fn json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.text(rel, s);
        Ok(())
    }

    /// Writes everything to the staging directory and swaps it into place.
    pub fn commit(self) -> CliResult<()> {
        let result = self.write_all();
        if result.is_err() {
            let _ = fs::remove_dir_all(&self.temp);
        }
        result
    }

    fn write_all(&self) -> CliResult<()> {
        let io = |what: &str, p: &Path, e: std::io::Error| {
            CliError::input(format!("cannot {what} {}: {e}", p.display()))
        };
        if self.temp.exists() {
            fs::remove_dir_all(&self.temp).map_err(|e| io("clear", &self.temp, e))?;
        }
        if let Some(parent) = self.target.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| io("create", parent, e))?;
        }
        fs::create_dir_all(&self.temp).map_err(|e| io("create", &self.temp, e))?;
        for (rel, bytes) in &self.files {
            let p = self.temp.join(rel);
            if let Some(dir) = p.parent() {
                fs::create_dir_all(dir).map_err(|e| io("create", dir, e))?;
            }
            fs::write(&p, bytes).map_err(|e| io("write", &p, e))?;
        }
        if self.target.exists() {
            let old = self.temp.with_extension("old");
            fs::rename(&self.target, &old).map_err(|e| io("replace", &self.target, e))?;
            fs::rename(&self.temp, &self.target).map_err(|e| io("move into", &self.target, e))?;
            let _ = fs::remove_dir_all(&old);
        } else {
            fs::rename(&self.temp, &self.target).map_err(|e| io("move into", &self.target, e))?;
        }
        Ok(())
    }
}

/// Fixed-precision number for tables: stable across runs and platforms.
pub fn num(v: f64) -> String {
    format!("{v:.6e}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_writes_and_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut s = Staging::new(&out);
        s.text("a.csv", "x\n");
        s.text("sub/b.csv", "y\n");
        s.commit().unwrap();
        assert_eq!(fs::read_to_string(out.join("sub/b.csv")).unwrap(), "y\n");

        let mut s = Staging::new(&out);
        s.text("c.csv", "z\n");
        s.commit().unwrap();
        assert!(!out.join("a.csv").exists());
        assert!(out.join("c.csv").exists());
        let leftovers = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn dropped_staging_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut s = Staging::new(&out);
        s.text("a.csv", "x\n");
        drop(s);
        assert!(!out.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
