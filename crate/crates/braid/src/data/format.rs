//! Binary dataset container.
//!
//! Byte layout (all integers and floats little-endian):
//!
//! ```text
//! magic            4 bytes  "BRDS"
//! version          u32      currently 1
//! id               u32 len + utf8 bytes
//! modality_a       u32 len + utf8 bytes
//! modality_b       u32 len + utf8 bytes
//! seq_len          u32
//! feat_a, feat_b   u32, u32
//! n_train, n_test  u32, u32
//! latent_seed      u64
//! train_a          n_train * seq_len * feat_a f64
//! train_b          n_train * seq_len * feat_b f64
//! test_a           n_test  * seq_len * feat_a f64
//! test_b           n_test  * seq_len * feat_b f64
//! train_labels     n_train u32
//! test_labels      n_test  u32
//! checksum         u64     FNV-1a of every preceding byte
//! ```

use std::path::Path;

use crate::autodiff::mat::Mat;
use crate::data::PairedDataset;
use crate::error::{Error, Result};
use crate::hash::fnv64;

const MAGIC: &[u8; 4] = b"BRDS";
const VERSION: u32 = 1;

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

fn put_mat(buf: &mut Vec<u8>, m: &Mat) {
    for &v in m.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize a dataset to its byte representation.
pub fn dataset_to_bytes(ds: &PairedDataset) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut buf, &ds.id);
    put_str(&mut buf, &ds.modality_a);
    put_str(&mut buf, &ds.modality_b);
    for v in [
        ds.seq_len as u32,
        ds.feat_a as u32,
        ds.feat_b as u32,
        ds.n_train() as u32,
        ds.n_test() as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&ds.latent_seed.to_le_bytes());
    put_mat(&mut buf, &ds.train_a);
    put_mat(&mut buf, &ds.train_b);
    put_mat(&mut buf, &ds.test_a);
    put_mat(&mut buf, &ds.test_b);
    for &l in ds.train_labels.iter().chain(&ds.test_labels) {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    let checksum = fnv64(&buf);
    buf.extend_from_slice(&checksum.to_le_bytes());
    buf
}

pub fn write_dataset(ds: &PairedDataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset_to_bytes(ds)).map_err(|e| Error::io(path.display().to_string(), e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                path: self.path.clone(),
                detail: format!(
                    "{} needs {} bytes at offset {}, file has {}",
                    what,
                    n,
                    self.pos,
                    self.bytes.len()
                ),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Truncated {
                path: self.path.clone(),
                detail: format!("{what} is not valid utf8"),
            })
    }

    fn mat(&mut self, rows: usize, cols: usize, what: &str) -> Result<Mat> {
        let raw = self.take(rows * cols * 8, what)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Mat::from_vec(rows, cols, data))
    }
}

/// Parse a dataset from bytes, verifying magic, version, and checksum.
pub fn dataset_from_bytes(bytes: &[u8], path: &str) -> Result<PairedDataset> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        path: path.to_string(),
    };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            path: path.into(),
            expected: VERSION,
            found: version,
        });
    }
    let id = cur.string("id")?;
    let modality_a = cur.string("modality_a")?;
    let modality_b = cur.string("modality_b")?;
    let seq_len = cur.u32("seq_len")? as usize;
    let feat_a = cur.u32("feat_a")? as usize;
    let feat_b = cur.u32("feat_b")? as usize;
    let n_train = cur.u32("n_train")? as usize;
    let n_test = cur.u32("n_test")? as usize;
    let latent_seed = cur.u64("latent_seed")?;
    let raw_a = seq_len * feat_a;
    let raw_b = seq_len * feat_b;
    let train_a = cur.mat(n_train, raw_a, "train_a")?;
    let train_b = cur.mat(n_train, raw_b, "train_b")?;
    let test_a = cur.mat(n_test, raw_a, "test_a")?;
    let test_b = cur.mat(n_test, raw_b, "test_b")?;
    let mut train_labels = Vec::with_capacity(n_train);
    for _ in 0..n_train {
        train_labels.push(cur.u32("train_labels")?);
    }
    let mut test_labels = Vec::with_capacity(n_test);
    for _ in 0..n_test {
        test_labels.push(cur.u32("test_labels")?);
    }
    let body_end = cur.pos;
    let stored = cur.u64("checksum")?;
    if fnv64(&bytes[..body_end]) != stored {
        return Err(Error::ChecksumFailure {
            path: path.into(),
            section: "dataset-body".into(),
        });
    }
    Ok(PairedDataset {
        id,
        modality_a,
        modality_b,
        seq_len,
        feat_a,
        feat_b,
        train_a,
        train_b,
        test_a,
        test_b,
        train_labels,
        test_labels,
        latent_seed,
    })
}

pub fn read_dataset(path: &Path) -> Result<PairedDataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    dataset_from_bytes(&bytes, &path.display().to_string())
}
