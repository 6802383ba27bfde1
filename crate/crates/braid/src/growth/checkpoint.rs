//! Versioned, checksummed checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "BRCP" | version u32 | section count u32
//! per section: name (u32 len + utf8) | payload length u64 | payload | fnv64(payload)
//! ```
//!
//! Sections: `meta` (dims, seed, trunk), `topology` (tower and prototype
//! structure), `params` (every parameter group), `ema` (prototype shadow
//! and optional teacher), `history` (phase records, JSON), `rng` (seed and
//! phase counter — all stream positions derive from these two).

use std::path::Path;

use crate::autodiff::mat::Mat;
use crate::error::{Error, Result};
use crate::growth::phase::PhaseRecord;
use crate::hash::fnv64;
use crate::model::{
    init_concept_module, AlignmentModel, EncoderSpec, FrozenEncoder, Modality, ModalityTower,
    PrototypeNetwork,
};

const MAGIC: &[u8; 4] = b"BRCP";
const VERSION: u32 = 1;

// ---- primitive writers ----------------------------------------------------

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_mat(buf: &mut Vec<u8>, m: &Mat) {
    put_u32(buf, m.rows() as u32);
    put_u32(buf, m.cols() as u32);
    for &v in m.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                path: self.path.clone(),
                detail: format!("{what} needs {n} bytes at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        String::from_utf8(self.take(len, what)?.to_vec()).map_err(|_| Error::Truncated {
            path: self.path.clone(),
            detail: format!("{what} is not valid utf8"),
        })
    }

    fn mat(&mut self, what: &str) -> Result<Mat> {
        let rows = self.u32(what)? as usize;
        let cols = self.u32(what)? as usize;
        let raw = self.take(rows * cols * 8, what)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Mat::from_vec(rows, cols, data))
    }
}

// ---- sections ---------------------------------------------------------------

fn meta_section(model: &AlignmentModel, seed: u64) -> Vec<u8> {
    let mut buf = Vec::new();
    put_u32(&mut buf, model.feature_dim as u32);
    put_u32(&mut buf, model.embed_dim as u32);
    put_u64(&mut buf, seed);
    put_u32(&mut buf, model.aligned.len() as u32);
    for m in &model.aligned {
        put_str(&mut buf, m);
    }
    buf
}

fn topology_section(model: &AlignmentModel) -> Vec<u8> {
    let mut buf = Vec::new();
    put_u32(&mut buf, model.towers.len() as u32);
    for t in &model.towers {
        put_str(&mut buf, &t.modality.name);
        put_u32(&mut buf, t.modality.raw_dim as u32);
        put_u32(&mut buf, t.modality.encoder_ids.len() as u32);
        for id in &t.modality.encoder_ids {
            put_str(&mut buf, id);
        }
        put_str(&mut buf, &t.encoder.spec.id);
        put_u32(&mut buf, t.encoder.spec.in_dim as u32);
        put_u32(&mut buf, t.encoder.spec.hidden as u32);
        put_u32(&mut buf, t.encoder.spec.out_dim as u32);
        put_u64(&mut buf, t.encoder.spec.seed);
        put_str(&mut buf, &t.concept.mlp.group.name);
        put_u32(&mut buf, t.concept.mlp.dims.len() as u32);
        for &d in &t.concept.mlp.dims {
            put_u32(&mut buf, d as u32);
        }
    }
    put_u32(&mut buf, model.prototype.mlp.dims.len() as u32);
    for &d in &model.prototype.mlp.dims {
        put_u32(&mut buf, d as u32);
    }
    buf
}

fn params_section(model: &AlignmentModel) -> Vec<u8> {
    let mut buf = Vec::new();
    let groups = model.param_groups();
    put_u32(&mut buf, groups.len() as u32);
    for g in groups {
        put_str(&mut buf, &g.name);
        buf.push(u8::from(g.trainable));
        put_u32(&mut buf, g.tensors.len() as u32);
        for t in &g.tensors {
            put_mat(&mut buf, &t.value);
        }
    }
    buf
}

fn ema_section(model: &AlignmentModel) -> Vec<u8> {
    let mut buf = Vec::new();
    put_u32(&mut buf, model.prototype.ema_shadow.len() as u32);
    for m in &model.prototype.ema_shadow {
        put_mat(&mut buf, m);
    }
    match &model.prototype.frozen_teacher {
        None => buf.push(0),
        Some(teacher) => {
            buf.push(1);
            put_u32(&mut buf, teacher.len() as u32);
            for m in teacher {
                put_mat(&mut buf, m);
            }
        }
    }
    buf
}

fn rng_section(seed: u64, phases_completed: u64) -> Vec<u8> {
    let mut buf = Vec::new();
    put_u64(&mut buf, seed);
    put_u64(&mut buf, phases_completed);
    buf
}

// ---- public API ---------------------------------------------------------------

/// Serialize model + history; returns the bytes.
pub fn checkpoint_to_bytes(
    model: &AlignmentModel,
    history: &[PhaseRecord],
    seed: u64,
) -> Result<Vec<u8>> {
    let sections: Vec<(&str, Vec<u8>)> = vec![
        ("meta", meta_section(model, seed)),
        ("topology", topology_section(model)),
        ("params", params_section(model)),
        ("ema", ema_section(model)),
        ("history", serde_json::to_vec(history)?),
        ("rng", rng_section(seed, history.len() as u64)),
    ];
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    put_u32(&mut buf, sections.len() as u32);
    for (name, payload) in sections {
        put_str(&mut buf, name);
        put_u64(&mut buf, payload.len() as u64);
        buf.extend_from_slice(&payload);
        put_u64(&mut buf, fnv64(&payload));
    }
    Ok(buf)
}

/// Write a checkpoint; returns the hash of the file bytes.
pub fn save_checkpoint(
    model: &AlignmentModel,
    history: &[PhaseRecord],
    seed: u64,
    path: &Path,
) -> Result<u64> {
    let bytes = checkpoint_to_bytes(model, history, seed)?;
    std::fs::write(path, &bytes).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(fnv64(&bytes))
}

/// A restored checkpoint.
pub struct LoadedCheckpoint {
    pub model: AlignmentModel,
    pub history: Vec<PhaseRecord>,
    pub seed: u64,
}

pub fn checkpoint_from_bytes(bytes: &[u8], path: &str) -> Result<LoadedCheckpoint> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path: path.to_string(),
    };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            path: path.into(),
            expected: VERSION,
            found: version,
        });
    }
    let n_sections = r.u32("section count")?;
    let mut sections: std::collections::BTreeMap<String, &[u8]> = Default::default();
    for _ in 0..n_sections {
        let name = r.string("section name")?;
        let len = r.u64(&format!("section '{name}' length"))? as usize;
        let payload = r.take(len, &format!("section '{name}' payload"))?;
        let stored = r.u64(&format!("section '{name}' checksum"))?;
        if fnv64(payload) != stored {
            return Err(Error::ChecksumFailure {
                path: path.into(),
                section: name,
            });
        }
        sections.insert(name, payload);
    }
    let section = |name: &str| -> Result<&[u8]> {
        sections.get(name).copied().ok_or_else(|| Error::Truncated {
            path: path.into(),
            detail: format!("missing section '{name}'"),
        })
    };

    // meta
    let mut m = Reader {
        bytes: section("meta")?,
        pos: 0,
        path: path.into(),
    };
    let feature_dim = m.u32("feature_dim")? as usize;
    let embed_dim = m.u32("embed_dim")? as usize;
    let seed = m.u64("seed")?;
    let n_aligned = m.u32("aligned count")? as usize;
    let mut aligned = Vec::with_capacity(n_aligned);
    for _ in 0..n_aligned {
        aligned.push(m.string("aligned modality")?);
    }

    // topology → skeleton model
    let mut t = Reader {
        bytes: section("topology")?,
        pos: 0,
        path: path.into(),
    };
    let n_towers = t.u32("tower count")? as usize;
    let mut model = AlignmentModel {
        feature_dim,
        embed_dim,
        towers: Vec::with_capacity(n_towers),
        prototype: PrototypeNetwork::new(feature_dim.max(1), embed_dim.max(1), 2, 0),
        aligned,
    };
    for _ in 0..n_towers {
        let name = t.string("modality name")?;
        let raw_dim = t.u32("raw_dim")? as usize;
        let n_ids = t.u32("encoder id count")? as usize;
        let mut encoder_ids = Vec::with_capacity(n_ids);
        for _ in 0..n_ids {
            encoder_ids.push(t.string("encoder id")?);
        }
        let enc_id = t.string("encoder spec id")?;
        let in_dim = t.u32("encoder in_dim")? as usize;
        let hidden = t.u32("encoder hidden")? as usize;
        let out_dim = t.u32("encoder out_dim")? as usize;
        let enc_seed = t.u64("encoder seed")?;
        let concept_name = t.string("concept group name")?;
        let n_dims = t.u32("concept dim count")? as usize;
        let mut dims = Vec::with_capacity(n_dims);
        for _ in 0..n_dims {
            dims.push(t.u32("concept dim")? as usize);
        }
        let encoder = FrozenEncoder::from_spec(EncoderSpec {
            id: enc_id,
            in_dim,
            hidden,
            out_dim,
            seed: enc_seed,
        });
        if dims.len() != 3 {
            return Err(Error::Truncated {
                path: path.into(),
                detail: format!("concept module must be 2-layer, got dims {dims:?}"),
            });
        }
        let concept = init_concept_module(concept_name, dims[0], dims[1], dims[2], 0);
        model.towers.push(ModalityTower::new(
            Modality {
                name,
                raw_dim,
                encoder_ids,
            },
            encoder,
            concept,
        ));
    }
    let n_proto_dims = t.u32("prototype dim count")? as usize;
    let mut proto_dims = Vec::with_capacity(n_proto_dims);
    for _ in 0..n_proto_dims {
        proto_dims.push(t.u32("prototype dim")? as usize);
    }
    model.prototype = PrototypeNetwork::new(
        proto_dims[0],
        *proto_dims.last().unwrap(),
        proto_dims.len() - 1,
        0,
    );

    // params overwrite every initialized value.
    let mut p = Reader {
        bytes: section("params")?,
        pos: 0,
        path: path.into(),
    };
    let n_groups = p.u32("group count")? as usize;
    for _ in 0..n_groups {
        let name = p.string("group name")?;
        let trainable = p.take(1, "trainable flag")?[0] != 0;
        let n_tensors = p.u32("tensor count")? as usize;
        let mut mats = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            mats.push(p.mat("param tensor")?);
        }
        let group = model
            .param_groups_mut()
            .into_iter()
            .find(|g| g.name == name)
            .ok_or_else(|| Error::Truncated {
                path: path.into(),
                detail: format!("params section names unknown group '{name}'"),
            })?;
        if group.tensors.len() != mats.len() {
            return Err(Error::Truncated {
                path: path.into(),
                detail: format!("group '{name}' tensor count mismatch"),
            });
        }
        for (t, m) in group.tensors.iter_mut().zip(mats) {
            if t.value.shape() != m.shape() {
                return Err(Error::Truncated {
                    path: path.into(),
                    detail: format!("group '{name}' tensor shape mismatch"),
                });
            }
            t.value = m;
        }
        group.trainable = trainable;
    }

    // ema
    let mut e = Reader {
        bytes: section("ema")?,
        pos: 0,
        path: path.into(),
    };
    let n_shadow = e.u32("shadow count")? as usize;
    let mut shadow = Vec::with_capacity(n_shadow);
    for _ in 0..n_shadow {
        shadow.push(e.mat("shadow tensor")?);
    }
    model.prototype.ema_shadow = shadow;
    let has_teacher = e.take(1, "teacher flag")?[0] != 0;
    model.prototype.frozen_teacher = if has_teacher {
        let n = e.u32("teacher count")? as usize;
        let mut teacher = Vec::with_capacity(n);
        for _ in 0..n {
            teacher.push(e.mat("teacher tensor")?);
        }
        Some(teacher)
    } else {
        None
    };

    let history: Vec<PhaseRecord> = serde_json::from_slice(section("history")?)?;

    let mut rng = Reader {
        bytes: section("rng")?,
        pos: 0,
        path: path.into(),
    };
    let rng_seed = rng.u64("rng seed")?;
    let phases_completed = rng.u64("phases completed")?;
    if rng_seed != seed || phases_completed != history.len() as u64 {
        return Err(Error::ChecksumFailure {
            path: path.into(),
            section: "rng".into(),
        });
    }

    Ok(LoadedCheckpoint {
        model,
        history,
        seed,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    checkpoint_from_bytes(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Topology;
    use crate::growth::{assemble_model, ModelDims};

    fn toy_checkpoint() -> Vec<u8> {
        let topo = Topology::desk_small(4, 2);
        let mut model = assemble_model(&topo, &ModelDims::default(), 5).unwrap();
        model.aligned = vec!["imu".into(), "skel".into()];
        model.prototype.snapshot_teacher();
        checkpoint_to_bytes(&model, &[], 5).unwrap()
    }

    #[test]
    fn load_save_round_trips_bit_exactly() {
        let bytes = toy_checkpoint();
        let loaded = checkpoint_from_bytes(&bytes, "mem").unwrap();
        let again = checkpoint_to_bytes(&loaded.model, &loaded.history, loaded.seed).unwrap();
        assert_eq!(bytes, again);
        assert_eq!(loaded.model.aligned, vec!["imu".to_string(), "skel".to_string()]);
        assert!(loaded.model.prototype.frozen_teacher.is_some());
    }

    #[test]
    fn corrupted_byte_names_the_section() {
        let mut bytes = toy_checkpoint();
        // Flip one byte somewhere inside the params payload.
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        match checkpoint_from_bytes(&bytes, "mem") {
            Err(Error::ChecksumFailure { section, .. }) => {
                assert!(!section.is_empty());
            }
            other => panic!("expected ChecksumFailure, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut bytes = toy_checkpoint();
        bytes[4] = 99;
        assert!(matches!(
            checkpoint_from_bytes(&bytes, "mem"),
            Err(Error::VersionMismatch { found: 99, .. })
        ));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut bytes = toy_checkpoint();
        bytes[0] = b'Z';
        assert!(matches!(
            checkpoint_from_bytes(&bytes, "mem"),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn truncation_is_reported() {
        let bytes = toy_checkpoint();
        assert!(matches!(
            checkpoint_from_bytes(&bytes[..60], "mem"),
            Err(Error::Truncated { .. })
        ));
    }
}
