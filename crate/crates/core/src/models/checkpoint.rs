//! Binary checkpoints.
//!
//! ```text
//! DSCKPT1 <kind> <D> <d1> <d2-or-0> <K> <T>\n
//! <name> <extent> <extent> ...\n<little-endian f32 buffer>
//! ...
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Model, ModelConfig, ModelKind};
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const CHECKPOINT_MAGIC: &str = "DSCKPT1";

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let c = model.config();
    let d2 = if c.kind == ModelKind::SimpleRnn { c.hidden_dim } else { 0 };
    let mut buf = Vec::new();
    writeln!(
        buf,
        "{CHECKPOINT_MAGIC} {} {} {} {} {} {}",
        c.kind, c.num_keywords, c.embed_dim, d2, c.num_classes, c.seq_len
    )
    .unwrap();
    for p in model.params() {
        write!(buf, "{}", p.name).unwrap();
        for e in p.value.shape() {
            write!(buf, " {e}").unwrap();
        }
        buf.push(b'\n');
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn write_checkpoint(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|msg| Error::parse(path, 0, msg))
}

fn take_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str, String> {
    let rest = &bytes[*pos..];
    let end = rest.iter().position(|&b| b == b'\n').ok_or("truncated record header")?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end]).map_err(|_| "record header is not UTF-8".to_string())
}

/// Parses a checkpoint. The dropout rate is not stored and defaults to 0.5.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model, String> {
    let mut pos = 0;
    let header: Vec<&str> = take_line(bytes, &mut pos)?.split(' ').collect();
    if header.len() != 7 || header[0] != CHECKPOINT_MAGIC {
        return Err(format!("bad checkpoint header {header:?}"));
    }
    let kind: ModelKind = header[1].parse().map_err(|e: Error| e.to_string())?;
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header field {s:?}"));
    let (d, d1, d2, k, t) = (num(header[2])?, num(header[3])?, num(header[4])?, num(header[5])?, num(header[6])?);

    let mut values = Vec::new();
    while pos < bytes.len() {
        let line = take_line(bytes, &mut pos)?;
        let mut parts = line.split(' ');
        let name = parts.next().filter(|n| !n.is_empty()).ok_or("missing parameter name")?.to_owned();
        let shape = parts.map(num).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let end = pos + 4 * n;
        if end > bytes.len() {
            return Err(format!("parameter `{name}` truncated"));
        }
        let data = bytes[pos..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        pos = end;
        let tensor = Tensor::from_vec(&shape, data).map_err(|e| e.to_string())?;
        values.push((name, tensor));
    }

    let config = match kind {
        ModelKind::TextCnn => {
            let mut kernels = Vec::new();
            let mut filters = 0;
            for (name, t) in &values {
                if let Some(k) = name.strip_prefix("conv").and_then(|r| r.strip_suffix(".weight")) {
                    kernels.push(num(k)?);
                    filters = t.shape()[2];
                }
            }
            ModelConfig::textcnn(d, d1, kernels, filters, k, t)
        }
        ModelKind::SimpleRnn => ModelConfig::simplernn(d, d1, d2, k, t),
        ModelKind::MeanPool => ModelConfig::meanpool(d, d1, k, t),
    };
    Model::from_params(config, values).map_err(|e| e.to_string())
}
