//! Binary checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8  bytes  b"TOXDETCK"
//! version      u32
//! config       7 x u32   vocab_size, max_len, embed_dim, lstm1, lstm2,
//!                        dense, output
//! vocab_hash   32 bytes  SHA-256 of the embedded vocabulary text
//! vocab_len    u64       byte length of the vocabulary block
//! vocab        UTF-8     canonical vocabulary serialization
//! tensors      17 x (u32 rows, u32 cols, rows*cols f64)
//! ```
//!
//! Tensors appear in the canonical [`ModelParams::tensors`] order, each as
//! row-major 64-bit values, so a save/load round trip is bit-exact. The
//! vocabulary travels inside the checkpoint: evaluation and prediction
//! need the exact index mapping the model was trained against.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::vocab::Vocabulary;

use super::{
    Activation, BiLstmLayer, DenseLayer, EmbeddingLayer, LstmDirectionParams, ModelConfig,
    ModelParams,
};

const MAGIC: &[u8; 8] = b"TOXDETCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_matrix(w: &mut impl Write, m: &Matrix) -> Result<()> {
    write_u32(w, m.rows() as u32)?;
    write_u32(w, m.cols() as u32)?;
    for &v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("checkpoint truncated while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, what)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_matrix(r: &mut impl Read, what: &str) -> Result<Matrix> {
    let rows = read_u32(r, what)? as usize;
    let cols = read_u32(r, what)? as usize;
    if rows == 0 || cols == 0 || rows.saturating_mul(cols) > (1 << 32) {
        return Err(Error::Format(format!(
            "implausible tensor shape {rows}x{cols} for {what}"
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    let mut buf = [0u8; 8];
    for _ in 0..rows * cols {
        read_exact(r, &mut buf, what)?;
        data.push(f64::from_le_bytes(buf));
    }
    Matrix::from_vec(rows, cols, data)
        .map_err(|e| Error::Format(format!("bad tensor values for {what}: {e}")))
}

/// Writes parameters and the vocabulary they were trained against.
pub fn save_checkpoint(path: &Path, params: &ModelParams, vocab: &Vocabulary) -> Result<()> {
    if params.config.vocab_size != vocab.size() {
        return Err(Error::Compatibility(format!(
            "model built for vocabulary size {} but given one of size {}",
            params.config.vocab_size,
            vocab.size()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, CHECKPOINT_VERSION)?;
    let c = &params.config;
    for dim in [
        c.vocab_size,
        c.max_len,
        c.embed_dim,
        c.lstm1_units,
        c.lstm2_units,
        c.dense_units,
        c.output_units,
    ] {
        write_u32(&mut w, dim as u32)?;
    }
    w.write_all(&vocab.content_hash())?;
    let vocab_text = vocab.to_file_string();
    w.write_all(&(vocab_text.len() as u64).to_le_bytes())?;
    w.write_all(vocab_text.as_bytes())?;
    for tensor in params.tensors() {
        write_matrix(&mut w, tensor)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint back, verifying magic, version, vocabulary hash, and
/// every tensor shape.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, Vocabulary)> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "not a checkpoint file (magic {:?})",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = read_u32(&mut r, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {version} unsupported, this build reads version {CHECKPOINT_VERSION}"
        )));
    }

    let mut dims = [0usize; 7];
    for (slot, name) in dims.iter_mut().zip([
        "vocab_size",
        "max_len",
        "embed_dim",
        "lstm1_units",
        "lstm2_units",
        "dense_units",
        "output_units",
    ]) {
        *slot = read_u32(&mut r, name)? as usize;
    }
    let config = ModelConfig {
        vocab_size: dims[0],
        max_len: dims[1],
        embed_dim: dims[2],
        lstm1_units: dims[3],
        lstm2_units: dims[4],
        dense_units: dims[5],
        output_units: dims[6],
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("checkpoint config invalid: {e}")))?;

    let mut stored_hash = [0u8; 32];
    read_exact(&mut r, &mut stored_hash, "vocabulary hash")?;
    let vocab_len = read_u64(&mut r, "vocabulary length")? as usize;
    if vocab_len > (1 << 32) {
        return Err(Error::Format(format!(
            "implausible vocabulary block length {vocab_len}"
        )));
    }
    let mut vocab_bytes = vec![0u8; vocab_len];
    read_exact(&mut r, &mut vocab_bytes, "vocabulary block")?;
    let vocab_text = String::from_utf8(vocab_bytes)
        .map_err(|_| Error::Format("vocabulary block is not UTF-8".into()))?;
    let vocab = Vocabulary::parse_file_string(&vocab_text)?;
    if vocab.content_hash() != stored_hash {
        return Err(Error::Compatibility(
            "vocabulary hash mismatch: checkpoint's recorded hash does not \
             match its embedded vocabulary"
                .into(),
        ));
    }
    if vocab.size() != config.vocab_size {
        return Err(Error::Format(format!(
            "checkpoint claims vocabulary size {} but embeds {} words",
            config.vocab_size,
            vocab.size()
        )));
    }

    let h1 = config.lstm1_units;
    let h2 = config.lstm2_units;
    let expected_shapes: Vec<(&str, (usize, usize))> = vec![
        ("embedding", (config.table_rows(), config.embed_dim)),
        ("bilstm1.forward.w", (4 * h1, config.embed_dim)),
        ("bilstm1.forward.u", (4 * h1, h1)),
        ("bilstm1.forward.b", (1, 4 * h1)),
        ("bilstm1.backward.w", (4 * h1, config.embed_dim)),
        ("bilstm1.backward.u", (4 * h1, h1)),
        ("bilstm1.backward.b", (1, 4 * h1)),
        ("bilstm2.forward.w", (4 * h2, 2 * h1)),
        ("bilstm2.forward.u", (4 * h2, h2)),
        ("bilstm2.forward.b", (1, 4 * h2)),
        ("bilstm2.backward.w", (4 * h2, 2 * h1)),
        ("bilstm2.backward.u", (4 * h2, h2)),
        ("bilstm2.backward.b", (1, 4 * h2)),
        ("dense1.w", (config.dense_units, 2 * h2)),
        ("dense1.b", (1, config.dense_units)),
        ("output.w", (config.output_units, config.dense_units)),
        ("output.b", (1, config.output_units)),
    ];
    let mut tensors = Vec::with_capacity(expected_shapes.len());
    for (name, shape) in &expected_shapes {
        let m = read_matrix(&mut r, name)?;
        if m.shape() != *shape {
            return Err(Error::Format(format!(
                "tensor {name} has shape {:?}, expected {shape:?}",
                m.shape()
            )));
        }
        tensors.push(m);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint data".into()));
    }

    let mut it = tensors.into_iter();
    let mut next = || it.next().expect("tensor count checked above");
    let params = ModelParams {
        config,
        embedding: EmbeddingLayer { table: next() },
        bilstm1: BiLstmLayer {
            forward: LstmDirectionParams {
                w: next(),
                u: next(),
                b: next(),
                hidden: h1,
                input_dim: config.embed_dim,
            },
            backward: LstmDirectionParams {
                w: next(),
                u: next(),
                b: next(),
                hidden: h1,
                input_dim: config.embed_dim,
            },
            returns_sequences: true,
        },
        bilstm2: BiLstmLayer {
            forward: LstmDirectionParams {
                w: next(),
                u: next(),
                b: next(),
                hidden: h2,
                input_dim: 2 * h1,
            },
            backward: LstmDirectionParams {
                w: next(),
                u: next(),
                b: next(),
                hidden: h2,
                input_dim: 2 * h1,
            },
            returns_sequences: false,
        },
        dense1: DenseLayer {
            w: next(),
            b: next(),
            activation: Activation::Relu,
        },
        output: DenseLayer {
            w: next(),
            b: next(),
            activation: Activation::Sigmoid,
        },
    };
    Ok((params, vocab))
}
