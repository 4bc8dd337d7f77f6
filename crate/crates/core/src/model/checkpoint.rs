//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! magic            8 bytes  "CEDCKPT\0"
//! format_version   u32
//! config_len       u32      followed by the model config as JSON
//! tensor_count     u32
//! per tensor:      u16 name_len, name (UTF-8), u32 rows, u32 cols, rows·cols f64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::network::CedModel;
use crate::error::{CedError, Result};

pub const MAGIC: &[u8; 8] = b"CEDCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &CedModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(model.config()).expect("config serialises");
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for (_, name, value) in model.params().iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(value.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(value.ncols() as u32).to_le_bytes());
        for v in value.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CedError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<CedModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(CedError::Checkpoint("not a CED checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CedError::Checkpoint(format!("unsupported format version {version}")));
    }
    let cfg_len = r.u32()? as usize;
    let cfg: ModelConfig = serde_json::from_slice(r.take(cfg_len)?)
        .map_err(|e| CedError::Checkpoint(format!("bad config: {e}")))?;
    let mut model = CedModel::new(cfg)?;
    let count = r.u32()? as usize;
    if count != model.params().len() {
        return Err(CedError::Checkpoint(format!(
            "{count} tensors stored, model has {}",
            model.params().len()
        )));
    }
    let mut seen = vec![false; count];
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CedError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        let id = model
            .params()
            .lookup(&name)
            .ok_or_else(|| CedError::Checkpoint(format!("unknown tensor {name}")))?;
        let target = model.params_mut().get_mut(id);
        if target.dim() != (rows, cols) {
            return Err(CedError::Checkpoint(format!(
                "tensor {name}: stored shape {rows}x{cols}, model expects {}x{}",
                target.nrows(),
                target.ncols()
            )));
        }
        let data = r.take(rows * cols * 8)?;
        for (dst, chunk) in target.iter_mut().zip(data.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        if seen[id.index()] {
            return Err(CedError::Checkpoint(format!("tensor {name} stored twice")));
        }
        seen[id.index()] = true;
    }
    if r.pos != bytes.len() {
        return Err(CedError::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(model)
}

/// Writes via a temporary file and rename, so a crash never leaves a
/// half-written checkpoint under the final name.
pub fn save_checkpoint(model: &CedModel, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&encode_checkpoint(model))?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| CedError::io(format!("writing checkpoint {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<CedModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CedError::io(format!("reading checkpoint {}", path.display()), e))?;
    decode_checkpoint(&bytes)
}
