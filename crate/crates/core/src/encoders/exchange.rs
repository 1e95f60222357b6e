use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::EncoderError;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"ORMAEMB1";

/// Sentence and token representations for a batch of texts.
#[derive(Debug, Clone, PartialEq)]
pub struct TextBatchReps {
    pub ids: Vec<String>,
    /// `B x d`
    pub sentence: Tensor,
    /// One `N_t x d` matrix per sample.
    pub tokens: Vec<Tensor>,
}

impl TextBatchReps {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn width(&self) -> usize {
        self.sentence.cols()
    }

    pub fn token_counts(&self) -> Vec<usize> {
        self.tokens.iter().map(Tensor::rows).collect()
    }
}

/// Writes records `(id, [sentence; tokens])` as 32-bit little-endian floats.
pub fn write_embeddings(path: &Path, reps: &TextBatchReps) -> Result<(), EncoderError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let d = reps.width();
    for (i, id) in reps.ids.iter().enumerate() {
        let tok = &reps.tokens[i];
        if tok.cols() != d {
            return Err(EncoderError::WidthMismatch {
                expected: d,
                found: tok.cols(),
            });
        }
        let id_len = u32::try_from(id.len()).map_err(|_| EncoderError::Format("id too long".into()))?;
        w.write_all(&id_len.to_le_bytes())?;
        w.write_all(id.as_bytes())?;
        w.write_all(&(1 + tok.rows() as u32).to_le_bytes())?;
        w.write_all(&(d as u32).to_le_bytes())?;
        for &x in reps.sentence.row(i).iter().chain(tok.data()) {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<Option<u32>, EncoderError> {
    let mut buf = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = r.read(&mut buf[got..])?;
        if n == 0 {
            return if got == 0 {
                Ok(None)
            } else {
                Err(EncoderError::Format("truncated length field".into()))
            };
        }
        got += n;
    }
    Ok(Some(u32::from_le_bytes(buf)))
}

fn need_u32(r: &mut impl Read, what: &str) -> Result<u32, EncoderError> {
    read_u32(r)?.ok_or_else(|| EncoderError::Format(format!("truncated record: missing {}", what)))
}

/// Reads an exchange file without any width check.
pub fn read_embeddings(path: &Path) -> Result<TextBatchReps, EncoderError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| EncoderError::Format("file shorter than header".into()))?;
    if &magic != MAGIC {
        return Err(EncoderError::Format("bad magic".into()));
    }
    let mut ids = Vec::new();
    let mut sentences: Vec<Vec<f64>> = Vec::new();
    let mut tokens = Vec::new();
    let mut width = None;
    while let Some(id_len) = read_u32(&mut r)? {
        let mut id = vec![0u8; id_len as usize];
        r.read_exact(&mut id)
            .map_err(|_| EncoderError::Format("truncated id".into()))?;
        let id = String::from_utf8(id).map_err(|_| EncoderError::Format("id is not UTF-8".into()))?;
        let rows = need_u32(&mut r, "row count")? as usize;
        let d = need_u32(&mut r, "width")? as usize;
        if rows < 2 {
            return Err(EncoderError::Format(format!("record '{}' has no token rows", id)));
        }
        match width {
            None => width = Some(d),
            Some(w) if w != d => return Err(EncoderError::WidthMismatch { expected: w, found: d }),
            _ => {}
        }
        let mut raw = vec![0u8; rows * d * 4];
        r.read_exact(&mut raw)
            .map_err(|_| EncoderError::Format(format!("truncated values in record '{}'", id)))?;
        let vals: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        sentences.push(vals[..d].to_vec());
        tokens.push(Tensor::new(vec![rows - 1, d], vals[d..].to_vec())?);
        ids.push(id);
    }
    let d = width.unwrap_or(0);
    let sentence = Tensor::new(vec![ids.len(), d], sentences.concat())?;
    Ok(TextBatchReps { ids, sentence, tokens })
}

/// Reads an exchange file and checks every record has width `d`.
pub fn load_external_embeddings(path: &Path, d: usize) -> Result<TextBatchReps, EncoderError> {
    let reps = read_embeddings(path)?;
    if !reps.is_empty() && reps.width() != d {
        return Err(EncoderError::WidthMismatch {
            expected: d,
            found: reps.width(),
        });
    }
    Ok(reps)
}
