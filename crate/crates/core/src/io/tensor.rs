//! Flat binary tensors behind a self-describing text header.
//!
//! ```text
//! DMAS-TENSOR 1
//! dtype: complex128
//! shape: 257 50 2601
//! axes: freq channel grid
//! c_m_per_s: 343
//! end
//! <row-major little-endian payload>
//! ```
//!
//! `complex128` stores interleaved `(re, im)` f64 pairs. Extra `key: value`
//! lines carry provenance such as hashes and STFT parameters.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;

use crate::{Error, Result};

const MAGIC: &str = "DMAS-TENSOR 1";

pub trait Element: Copy + Default {
    const DTYPE: &'static str;
    const BYTES: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Element for f64 {
    const DTYPE: &'static str = "float64";
    const BYTES: usize = 8;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl Element for f32 {
    const DTYPE: &'static str = "float32";
    const BYTES: usize = 4;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Element for Complex64 {
    const DTYPE: &'static str = "complex128";
    const BYTES: usize = 16;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.re.to_le_bytes());
        out.extend_from_slice(&self.im.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        Complex64::new(f64::read_le(&bytes[..8]), f64::read_le(&bytes[8..16]))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Header {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub axes: Vec<String>,
    pub meta: Vec<(String, String)>,
}

impl Header {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn write<T: Element, P: AsRef<Path>>(
    path: P,
    data: &ArrayD<T>,
    axes: &[&str],
    meta: &[(&str, String)],
) -> Result<()> {
    let path = path.as_ref();
    if axes.len() != data.ndim() {
        return Err(Error::mismatch("axis names", data.ndim(), axes.len()));
    }
    let mut head = String::new();
    head.push_str(MAGIC);
    head.push('\n');
    head.push_str(&format!("dtype: {}\n", T::DTYPE));
    let shape: Vec<String> = data.shape().iter().map(|d| d.to_string()).collect();
    head.push_str(&format!("shape: {}\n", shape.join(" ")));
    head.push_str(&format!("axes: {}\n", axes.join(" ")));
    for (k, v) in meta {
        if k.contains(':') || k.contains('\n') || v.contains('\n') {
            return Err(Error::invalid(format!("header entry `{k}` is not a single line")));
        }
        head.push_str(&format!("{k}: {v}\n"));
    }
    head.push_str("end\n");

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(head.as_bytes()).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(1 << 16);
    for v in data.iter() {
        v.write_le(&mut buf);
        if buf.len() >= 1 << 16 {
            w.write_all(&buf).map_err(|e| Error::io(path, e))?;
            buf.clear();
        }
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_header(path: impl AsRef<Path>) -> Result<Header> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_header(&mut BufReader::new(file), path)
}

fn parse_header<R: BufRead>(r: &mut R, path: &Path) -> Result<Header> {
    let bad = |msg: &str| Error::Data(format!("{}: {msg}", path.display()));
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    if line.trim_end() != MAGIC {
        return Err(bad("not a DMAS tensor file"));
    }
    let mut h = Header::default();
    loop {
        line.clear();
        if r.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            return Err(bad("header has no `end` line"));
        }
        let l = line.trim_end();
        if l == "end" {
            break;
        }
        let (k, v) = l.split_once(": ").ok_or_else(|| bad("malformed header line"))?;
        match k {
            "dtype" => h.dtype = v.to_string(),
            "shape" => {
                h.shape = v
                    .split_whitespace()
                    .map(|d| d.parse().map_err(|_| bad("bad shape")))
                    .collect::<Result<_>>()?
            }
            "axes" => h.axes = v.split_whitespace().map(str::to_string).collect(),
            _ => h.meta.push((k.to_string(), v.to_string())),
        }
    }
    Ok(h)
}

pub fn read<T: Element, P: AsRef<Path>>(path: P) -> Result<(ArrayD<T>, Header)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let h = parse_header(&mut r, path)?;
    if h.dtype != T::DTYPE {
        return Err(Error::Data(format!(
            "{}: dtype {} where {} was expected",
            path.display(),
            h.dtype,
            T::DTYPE
        )));
    }
    let count: usize = h.shape.iter().product();
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() != count * T::BYTES {
        return Err(Error::Data(format!(
            "{}: payload is {} bytes, shape needs {}",
            path.display(),
            bytes.len(),
            count * T::BYTES
        )));
    }
    let values: Vec<T> = bytes.chunks_exact(T::BYTES).map(T::read_le).collect();
    let arr = ArrayD::from_shape_vec(IxDyn(&h.shape), values)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok((arr, h))
}

/// Writes a 2-D or 3-D real tensor as CSV, one row per leading-axes index:
/// `i0[,i1],v0,v1,...` with the last axis laid out across columns.
pub fn write_csv(path: impl AsRef<Path>, data: &ArrayD<f64>, axes: &[&str]) -> Result<()> {
    let path = path.as_ref();
    if data.ndim() < 2 || data.ndim() > 3 || axes.len() != data.ndim() {
        return Err(Error::invalid("CSV export supports 2-D or 3-D tensors with named axes"));
    }
    let mut w = csv::Writer::from_path(path)?;
    let last = *data.shape().last().expect("ndim ≥ 2");
    let mut header: Vec<String> = axes[..axes.len() - 1].iter().map(|a| a.to_string()).collect();
    header.extend((0..last).map(|i| format!("{}_{i}", axes[axes.len() - 1])));
    w.write_record(&header)?;
    let lead: Vec<usize> = data.shape()[..data.ndim() - 1].to_vec();
    let rows: usize = lead.iter().product();
    for r in 0..rows {
        let mut idx = Vec::with_capacity(lead.len());
        let mut rem = r;
        for d in lead.iter().rev() {
            idx.push(rem % d);
            rem /= d;
        }
        idx.reverse();
        let mut rec: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
        for k in 0..last {
            let mut full = idx.clone();
            full.push(k);
            rec.push(data[IxDyn(&full)].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn complex_round_trip_with_meta() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        let a = Array3::from_shape_fn((2, 3, 4), |(i, j, k)| Complex64::new(i as f64, (j * k) as f64 - 0.5)).into_dyn();
        write(&p, &a, &["channel", "freq", "frame"], &[("seed", "7".into())]).unwrap();
        let (b, h) = read::<Complex64, _>(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(h.axes, ["channel", "freq", "frame"]);
        assert_eq!(h.get("seed"), Some("7"));
        assert!(read::<f64, _>(&p).is_err());
    }

    #[test]
    fn truncated_payload_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        let a = ArrayD::from_elem(IxDyn(&[4, 4]), 1.0f64);
        write(&p, &a, &["a", "b"], &[]).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read::<f64, _>(&p), Err(Error::Data(_))));
    }

    #[test]
    fn csv_export_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let a = Array3::from_shape_fn((2, 2, 3), |(i, j, k)| (i * 100 + j * 10 + k) as f64).into_dyn();
        write_csv(&p, &a, &["channel", "mel", "frame"]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "channel,mel,frame_0,frame_1,frame_2");
        assert_eq!(lines[4], "1,1,110,111,112");
    }
}
