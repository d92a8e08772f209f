use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::hex;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub label: usize,
    pub fold: usize,
}

/// Source clips with class labels and cross-validation folds, sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipManifest {
    rows: Vec<ClipRecord>,
    base_dir: PathBuf,
}

impl ClipManifest {
    /// Checks ids are unique and folds `0..K` are all populated.
    pub fn new(mut rows: Vec<ClipRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("manifest has no clips".into()));
        }
        rows.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
        if let Some(w) = rows.windows(2).find(|w| w[0].clip_id == w[1].clip_id) {
            return Err(Error::Data(format!("duplicate clip id `{}`", w[0].clip_id)));
        }
        if let Some(r) = rows.iter().find(|r| r.clip_id.is_empty() || r.clip_id.contains(['/', '\\'])) {
            return Err(Error::Data(format!("clip id `{}` is not a plain name", r.clip_id)));
        }
        let folds: BTreeSet<usize> = rows.iter().map(|r| r.fold).collect();
        let n_folds = folds.iter().max().map_or(0, |m| m + 1);
        if folds.len() != n_folds {
            return Err(Error::Data(format!("folds {folds:?} do not cover 0..{n_folds}")));
        }
        Ok(Self { rows, base_dir: base_dir.into() })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let rows: Vec<ClipRecord> = reader
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(rows, base)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn rows(&self) -> &[ClipRecord] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_folds(&self) -> usize {
        self.rows.iter().map(|r| r.fold).max().map_or(0, |m| m + 1)
    }

    pub fn n_classes(&self) -> usize {
        self.rows.iter().map(|r| r.label).max().map_or(0, |m| m + 1)
    }

    pub fn resolve(&self, record: &ClipRecord) -> PathBuf {
        if record.path.is_absolute() {
            record.path.clone()
        } else {
            self.base_dir.join(&record.path)
        }
    }

    /// Hash of the rows and the audio they point to.
    pub fn content_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        for r in &self.rows {
            h.update(format!("{}\t{}\t{}\n", r.clip_id, r.label, r.fold).as_bytes());
            let p = self.resolve(r);
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            h.update(Sha256::digest(&bytes));
        }
        Ok(hex(&h.finalize())[..16].to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, label: usize, fold: usize) -> ClipRecord {
        ClipRecord { clip_id: id.into(), path: format!("{id}.wav").into(), label, fold }
    }

    #[test]
    fn validation() {
        let m = ClipManifest::new(vec![rec("b", 1, 1), rec("a", 0, 0)], "/x").unwrap();
        assert_eq!(m.rows()[0].clip_id, "a");
        assert_eq!(m.n_folds(), 2);
        assert_eq!(m.n_classes(), 2);
        assert_eq!(m.resolve(&m.rows()[0]), PathBuf::from("/x/a.wav"));
        assert!(ClipManifest::new(vec![rec("a", 0, 0), rec("a", 1, 0)], "").is_err());
        assert!(ClipManifest::new(vec![rec("a", 0, 0), rec("b", 1, 2)], "").is_err());
        assert!(ClipManifest::new(vec![], "").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = ClipManifest::new(vec![rec("a", 0, 0), rec("b", 1, 0)], dir.path()).unwrap();
        let p = dir.path().join("manifest.csv");
        m.write(&p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().next(), Some("clip_id,path,label,fold"));
        assert_eq!(ClipManifest::read(&p).unwrap(), m);
    }
}
