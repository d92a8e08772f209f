use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Schema version written into every CSV header comment.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Config hash and seed stamped onto every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn header_line(&self, kind: &str) -> String {
        format!("# dmas/{kind} v{CSV_SCHEMA_VERSION} config_hash={} seed={}", self.config_hash, self.seed)
    }

    /// Parses `# dmas/<kind> v<n> config_hash=<h> seed=<s>`.
    pub fn parse_header(line: &str) -> Option<(String, u32, Provenance)> {
        let rest = line.strip_prefix("# dmas/")?;
        let mut parts = rest.split_whitespace();
        let kind = parts.next()?.to_string();
        let version = parts.next()?.strip_prefix('v')?.parse().ok()?;
        let config_hash = parts.next()?.strip_prefix("config_hash=")?.to_string();
        let seed = parts.next()?.strip_prefix("seed=")?.parse().ok()?;
        Some((kind, version, Provenance { config_hash, seed }))
    }

    /// Reads the provenance comment at the top of a CSV written by [`create_csv`].
    pub fn read_from(path: impl AsRef<Path>) -> Result<(String, Provenance)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let first = text.lines().next().unwrap_or_default();
        match Self::parse_header(first) {
            Some((kind, v, p)) if v == CSV_SCHEMA_VERSION => Ok((kind, p)),
            Some((_, v, _)) => Err(Error::Data(format!("{}: unsupported schema v{v}", path.display()))),
            None => Err(Error::Data(format!("{}: missing dmas header comment", path.display()))),
        }
    }
}

pub type CsvWriter = csv::Writer<BufWriter<File>>;

/// Opens a CSV whose first line is the provenance comment.
pub fn create_csv(path: impl AsRef<Path>, kind: &str, prov: &Provenance) -> Result<CsvWriter> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = BufWriter::new(file);
    writeln!(buf, "{}", prov.header_line(kind)).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(buf))
}

pub fn finish_csv(mut w: CsvWriter, path: impl AsRef<Path>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// Writes `rows` under a provenance header.
pub fn write_rows<T: Serialize>(path: impl AsRef<Path>, kind: &str, prov: &Provenance, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create_csv(path, kind, prov)?;
    for r in rows {
        w.serialize(r)?;
    }
    finish_csv(w, path)
}

/// Reads rows back, skipping comment lines.
pub fn read_rows<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
