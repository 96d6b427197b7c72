//! Binary checkpoints: magic, version, model configuration block, then
//! named parameter tensors in declaration order.

use std::fs;
use std::path::Path;

use situate_core::decoder::{ModelConfig, ModelParams};
use situate_core::numerics::Tensor;
use situate_core::pipeline::AblationFlags;

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"SITCKPT";
pub const CHECKPOINT_VERSION: u8 = 1;

fn config_fields(c: &ModelConfig) -> [usize; 10] {
    [c.t_h, c.t_f, c.n_objects, c.top_k, c.d, c.l_e, c.l_i, c.l_d, c.d_clip, c.hidden]
}

fn u32_of(v: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(v).map(u32::to_le_bytes).map_err(|_| Error::format("checkpoint", format!("{what} = {v} exceeds u32")))
}

pub fn checkpoint_to_bytes(params: &ModelParams) -> Result<Vec<u8>> {
    let cfg = params.config();
    let mut out = Vec::with_capacity(64 + params.scalar_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    for v in config_fields(cfg) {
        out.extend_from_slice(&u32_of(v, "config field")?);
    }
    out.push(u8::from(cfg.flags.no_hierarchy) | (u8::from(cfg.flags.vanilla_gcn) << 1));
    out.extend_from_slice(&u32_of(params.len(), "parameter count")?);
    for (name, t) in params.iter() {
        let len = u16::try_from(name.len()).map_err(|_| Error::format("checkpoint", format!("name {name} too long")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&u32_of(d, "dimension")?);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated { what: what.into() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }
}

/// Parse a checkpoint. With `expect` set, the stored configuration must
/// equal it.
pub fn checkpoint_from_bytes(bytes: &[u8], expect: Option<&ModelConfig>) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(7, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Magic { expected: "SITCKPT" });
    }
    let version = r.take(1, "version byte")?[0];
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version { found: version, supported: CHECKPOINT_VERSION });
    }
    let mut f = [0usize; 10];
    for v in &mut f {
        *v = r.u32("config block")?;
    }
    let flag_byte = r.take(1, "config block")?[0];
    if flag_byte > 3 {
        return Err(Error::format("checkpoint", format!("flag byte {flag_byte:#04x}")));
    }
    let config = ModelConfig {
        t_h: f[0],
        t_f: f[1],
        n_objects: f[2],
        top_k: f[3],
        d: f[4],
        l_e: f[5],
        l_i: f[6],
        l_d: f[7],
        d_clip: f[8],
        hidden: f[9],
        flags: AblationFlags { no_hierarchy: flag_byte & 1 != 0, vanilla_gcn: flag_byte & 2 != 0 },
    };
    if let Some(want) = expect {
        if *want != config {
            return Err(Error::Config(format!("checkpoint holds {config:?}, expected {want:?}")));
        }
    }
    let count = r.u32("parameter count")?;
    let mut entries = Vec::with_capacity(count);
    for k in 0..count {
        let what = format!("parameter {k}");
        let len = u16::from_le_bytes(r.take(2, &what)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(r.take(len, &what)?)
            .map_err(|e| Error::format("checkpoint", format!("{what} name: {e}")))?
            .to_string();
        let rank = r.take(1, &what)?[0] as usize;
        let shape = (0..rank).map(|_| r.u32(&what)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::format("checkpoint", "tensor too large"))?, &name)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        entries.push((name, Tensor::new(&shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::format("checkpoint", format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(ModelParams::new(config, entries)?)
}

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    fs::write(path, checkpoint_to_bytes(params)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, expect: Option<&ModelConfig>) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, expect)
}
