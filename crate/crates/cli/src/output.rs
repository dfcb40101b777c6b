//! Output directory with a content-hash manifest.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.txt";

/// Files written by one command; `finish` folds them into `manifest.txt`.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        if name == MANIFEST || name.contains(['/', '\\']) {
            bail!("refusing to write output file `{name}`");
        }
        let path = self.root.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(path)
    }

    /// Rewrites the manifest as `sha256  name` lines, sorted by name, over
    /// every file listed before or written now that still exists.
    pub fn finish(self) -> Result<PathBuf> {
        let path = self.root.join(MANIFEST);
        let mut names: BTreeSet<String> = self.written.into_iter().collect();
        if let Ok(old) = fs::read_to_string(&path) {
            names.extend(parse_manifest(&old).into_iter().map(|(_, n)| n));
        }
        let mut text = String::new();
        for name in names {
            let file = self.root.join(&name);
            let Ok(bytes) = fs::read(&file) else { continue };
            text.push_str(&format!("{}  {name}\n", sha256_hex(&bytes)));
        }
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `(hash, name)` pairs of a manifest.
pub fn parse_manifest(text: &str) -> Vec<(String, String)> {
    text.lines().filter_map(|l| l.split_once("  ")).map(|(h, n)| (h.to_string(), n.to_string())).collect()
}
