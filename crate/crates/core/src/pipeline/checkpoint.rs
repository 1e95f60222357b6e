use std::path::Path;

use super::{PipelineError, RunConfig};
use crate::encoders::{ParamGroup, ParamStore, Vocab};
use crate::model::Model;
use crate::tensor::Tensor;

const MAGIC: &[u8; 5] = b"ORMA1";
pub const FORMAT_VERSION: u8 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), PipelineError> {
    let v = u32::try_from(v).map_err(|_| PipelineError::Checkpoint(format!("length {} does not fit in 32 bits", v)))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), PipelineError> {
    put_u32(out, s.len())?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Serializes to bytes. The layout is: magic, version byte, config echo,
/// vocabulary, then named parameters with group, shape and f64 payload.
pub fn encode_checkpoint(model: &Model) -> Result<Vec<u8>, PipelineError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    put_str(&mut out, &model.config.to_text())?;
    put_u32(&mut out, model.vocab.len())?;
    for t in model.vocab.tokens() {
        put_str(&mut out, t)?;
    }
    put_u32(&mut out, model.params.len())?;
    for p in model.params.iter() {
        put_str(&mut out, &p.name)?;
        out.push(match p.group {
            ParamGroup::Text => 0,
            ParamGroup::Rest => 1,
        });
        put_u32(&mut out, p.value.shape().len())?;
        for &dim in p.value.shape() {
            put_u32(&mut out, dim)?;
        }
        for &x in p.value.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], PipelineError> {
        if self.buf.len() - self.pos < n {
            return Err(PipelineError::Checkpoint(format!("truncated file while reading {}", what)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, PipelineError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize, PipelineError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn string(&mut self, what: &str) -> Result<String, PipelineError> {
        let n = self.u32(what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| PipelineError::Checkpoint(format!("{} is not UTF-8", what)))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model, PipelineError> {
    if bytes.len() < MAGIC.len() + 1 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(PipelineError::Version("not a checkpoint (bad magic)".into()));
    }
    let version = bytes[MAGIC.len()];
    if version != FORMAT_VERSION {
        return Err(PipelineError::Version(format!(
            "checkpoint format {} is not supported (expected {})",
            version, FORMAT_VERSION
        )));
    }
    let mut r = Reader {
        buf: bytes,
        pos: MAGIC.len() + 1,
    };
    let config = RunConfig::from_text(&r.string("config")?)?;
    let n_vocab = r.u32("vocabulary size")?;
    let mut tokens = Vec::with_capacity(n_vocab.min(1 << 20));
    for _ in 0..n_vocab {
        tokens.push(r.string("vocabulary entry")?);
    }
    let vocab = Vocab::from_tokens(tokens).map_err(|e| PipelineError::Checkpoint(e.to_string()))?;
    let n_params = r.u32("parameter count")?;
    let mut params = ParamStore::default();
    for _ in 0..n_params {
        let name = r.string("parameter name")?;
        let group = match r.u8("parameter group")? {
            0 => ParamGroup::Text,
            1 => ParamGroup::Rest,
            g => return Err(PipelineError::Checkpoint(format!("unknown parameter group {}", g))),
        };
        let ndim = r.u32("rank")?;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            shape.push(r.u32("dimension")?);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| PipelineError::Checkpoint("shape overflow".into()))?, "payload")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let value = Tensor::new(shape, data).map_err(|e| PipelineError::Checkpoint(e.to_string()))?;
        params.push(name, value, group);
    }
    if r.pos != bytes.len() {
        return Err(PipelineError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let expected = config.encoder_dims(vocab.len());
    let model = Model { config, vocab, params };
    check_shapes(&model, &expected)?;
    Ok(model)
}

fn check_shapes(model: &Model, dims: &crate::encoders::EncoderDims) -> Result<(), PipelineError> {
    let layout = crate::encoders::param_layout(dims);
    if layout.len() != model.params.len() {
        return Err(PipelineError::Checkpoint("parameter list does not match the config".into()));
    }
    for ((name, shape, group), b) in layout.iter().zip(model.params.iter()) {
        if *name != b.name || shape.as_slice() != b.value.shape() || *group != b.group {
            return Err(PipelineError::Checkpoint(format!("parameter '{}' does not match the config", b.name)));
        }
    }
    Ok(())
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<(), PipelineError> {
    let bytes = encode_checkpoint(model)?;
    std::fs::write(path, bytes)
        .map_err(|e| PipelineError::Input(format!("cannot write checkpoint {}: {}", path.display(), e)))
}

pub fn load_checkpoint(path: &Path) -> Result<Model, PipelineError> {
    let bytes = std::fs::read(path)
        .map_err(|e| PipelineError::Input(format!("cannot read checkpoint {}: {}", path.display(), e)))?;
    decode_checkpoint(&bytes)
}
