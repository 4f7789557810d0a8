//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `WRCK1`, provenance header string, model
//! spec as a JSON string, dropout, layer count, then per layer
//! `inputs u32, outputs u32, activation u8, weights, bias` (f64 arrays are a
//! u64 length followed by values), an embedding flag with `vocab u32, dim u32,
//! vectors, weights` when set, and finally the idf table. A JSON sidecar
//! (`<path>.json`) repeats the model spec and header for inspection.

use std::path::{Path, PathBuf};

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::nn::{Activation, DenseLayer, EmbeddingTable, Mlp};
use crate::rankers::{ModelSpec, RankerModel};

const MAGIC: &[u8] = b"WRCK1";

pub fn to_bytes(model: &RankerModel, header: &str) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.str(header);
    w.str(&serde_json::to_string(&model.spec).map_err(|e| Error::Format(e.to_string()))?);
    w.f64(model.mlp.dropout());
    w.u32(model.mlp.layers().len() as u32);
    for l in model.mlp.layers() {
        w.u32(l.inputs as u32);
        w.u32(l.outputs as u32);
        w.u8(l.activation.tag());
        w.f64s(&l.weights);
        w.f64s(&l.bias);
    }
    match &model.embedding {
        Some(e) => {
            w.u8(1);
            w.u32(e.vocab_size as u32);
            w.u32(e.dim as u32);
            w.f64s(&e.vectors);
            w.f64s(&e.weights);
        }
        None => w.u8(0),
    }
    w.u32(model.vocab_size as u32);
    w.f64s(&model.idf);
    Ok(w.buf)
}

/// Decode a checkpoint, returning the model and its provenance header.
pub fn from_bytes(bytes: &[u8]) -> Result<(RankerModel, String)> {
    let mut r = Reader::new(bytes);
    r.expect(MAGIC)?;
    let header = r.str()?;
    let spec: ModelSpec =
        serde_json::from_str(&r.str()?).map_err(|e| Error::Format(format!("model spec: {e}")))?;
    let dropout = r.f64()?;
    let n = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let inputs = r.u32()? as usize;
        let outputs = r.u32()? as usize;
        let activation = Activation::from_tag(r.u8()?)?;
        let weights = r.f64s()?;
        let bias = r.f64s()?;
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::Format("layer parameter count mismatch".into()));
        }
        let mut layer = DenseLayer::zeros(inputs, outputs, activation);
        layer.weights = weights;
        layer.bias = bias;
        layers.push(layer);
    }
    let mlp = Mlp::new(layers, dropout)?;
    let embedding = match r.u8()? {
        0 => None,
        1 => {
            let vocab_size = r.u32()? as usize;
            let dim = r.u32()? as usize;
            let vectors = r.f64s()?;
            let weights = r.f64s()?;
            if vectors.len() != vocab_size * dim || weights.len() != vocab_size {
                return Err(Error::Format("embedding table size mismatch".into()));
            }
            Some(EmbeddingTable {
                vocab_size,
                dim,
                vectors,
                weights,
            })
        }
        t => return Err(Error::Format(format!("bad embedding flag {t}"))),
    };
    let vocab_size = r.u32()? as usize;
    let idf = r.f64s()?;
    r.finish()?;
    if mlp.layers().last().map(|l| l.activation) != Some(spec.arch.output_activation()) {
        return Err(Error::Format(
            "output activation does not match architecture".into(),
        ));
    }
    Ok((
        RankerModel {
            spec,
            mlp,
            embedding,
            idf,
            vocab_size,
        },
        header,
    ))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save(model: &RankerModel, header: &str, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &to_bytes(model, header)?)?;
    let meta = serde_json::json!({
        "header": header.trim_end(),
        "spec": model.spec,
        "parameters": model.mlp.num_params()
            + model.embedding.as_ref().map_or(0, |e| e.vectors.len() + e.weights.len()),
    });
    let text =
        serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))? + "\n";
    fsutil::write_atomic(&sidecar_path(path), text.as_bytes())
}

pub fn load(path: &Path) -> Result<(RankerModel, String)> {
    from_bytes(&fsutil::read(path)?)
}
