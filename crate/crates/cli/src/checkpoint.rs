//! Binary checkpoint: `GMFN` magic, format version, iteration, config
//! snapshot, tensor table of little-endian f32 values, CRC32 trailer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gmfn::model::{layout, ParamStore};
use gmfn::tensor::{Shape, Tensor};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"GMFN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    /// Completed training iterations.
    pub iteration: u64,
    pub params: ParamStore<f32>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| CliError::Malformed {
            path: self.path.to_path_buf(),
            detail: format!("record at byte {} runs past the end", self.pos),
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| CliError::Malformed { path: self.path.to_path_buf(), detail: "string is not UTF-8".into() })
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.iteration.to_le_bytes());
        put_str(&mut out, &self.config.snapshot_text());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            put_str(&mut out, name);
            for d in t.shape().dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses and validates a checkpoint. `path` only labels errors.
    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let p = || path.to_path_buf();
        if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
            return Err(CliError::NotCheckpoint { path: p(), detail: "missing GMFN magic".into() });
        }
        if bytes.len() < 12 {
            return Err(CliError::Checksum { path: p(), stored: 0, computed: crc32fast::hash(bytes) });
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(CliError::Checksum { path: p(), stored, computed });
        }

        let mut r = Reader { buf: body, pos: 4, path };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CliError::Version { path: p(), found: version, expected: FORMAT_VERSION });
        }
        let iteration = r.u64()?;
        let config = RunConfig::parse(&r.string()?)?;
        config.validate()?;
        let expected: BTreeMap<String, Shape> = layout(&config.model, &config.topology()?).into_iter().collect();

        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name = r.string()?;
            let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|d| d as usize);
            let shape = Shape::from_dims(dims);
            match expected.get(&name) {
                Some(s) if *s == shape => {}
                Some(s) => {
                    return Err(CliError::Malformed {
                        path: p(),
                        detail: format!("`{name}` has shape {shape}, the stored config implies {s}"),
                    })
                }
                None => {
                    return Err(CliError::Malformed { path: p(), detail: format!("unexpected tensor `{name}`") })
                }
            }
            let raw = r.take(shape.numel() * 4)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            if tensors.insert(name.clone(), Tensor::new(shape, data)?).is_some() {
                return Err(CliError::Malformed { path: p(), detail: format!("duplicate tensor `{name}`") });
            }
        }
        if r.pos != body.len() {
            return Err(CliError::Malformed { path: p(), detail: "trailing bytes after tensor table".into() });
        }
        if let Some(missing) = expected.keys().find(|k| !tensors.contains_key(*k)) {
            return Err(CliError::Malformed { path: p(), detail: format!("tensor `{missing}` is missing") });
        }
        Ok(Checkpoint { config, iteration, params: ParamStore::from_tensors(tensors) })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Checkpoint::from_bytes(path, &bytes)
    }
}

/// `dir/checkpoint_<iter>.gmfn` with the iteration zero-padded.
pub fn checkpoint_path(dir: &Path, iteration: u64) -> PathBuf {
    dir.join(format!("checkpoint_{iteration:08}.gmfn"))
}
