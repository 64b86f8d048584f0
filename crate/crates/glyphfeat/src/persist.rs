//! Flat little-endian binary artifact files.
//!
//! | magic  | contents                                                       |
//! |--------|----------------------------------------------------------------|
//! | `GFDS` | descriptor matrix: u32 d, u64 N, then d*N f32 column-major     |
//! | `GFLS` | descriptor labels: u64 N, then N u32 class indices             |
//! | `GFL1` | one SAE layer: u32 d, u32 K, then W, V, b1, b2 as f64          |
//! | `GFDE` | deep encoder: two GFL1 blocks, then an optional GFSH block     |
//! | `GFSH` | softmax head: u32 K2, u32 C, then U (f64), c (f64)             |
//! | `GFPF` | pooled features: u32 dim, u64 N, N u32 labels, N*dim f32       |
//! | `GFSV` | SVM model: u32 C, u32 D, weights (f64 row-major), bias (f64)   |
//!
//! Matrices tagged f64 are stored column-major. Descriptor and pooled
//! vectors are produced at f32 precision upstream, so the f32 formats are
//! lossless caches: reloading yields bitwise-identical numbers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use crate::classify::LinearSvmModel;
use crate::deepnet::{DeepEncoder, SoftmaxHead};
use crate::pooling::PooledFeature;
use crate::sae::SaeLayer;
use crate::{Error, Result};

const MAGIC_DESCRIPTORS: &[u8; 4] = b"GFDS";
const MAGIC_LABELS: &[u8; 4] = b"GFLS";
const MAGIC_LAYER: &[u8; 4] = b"GFL1";
const MAGIC_ENCODER: &[u8; 4] = b"GFDE";
const MAGIC_HEAD: &[u8; 4] = b"GFSH";
const MAGIC_FEATURES: &[u8; 4] = b"GFPF";
const MAGIC_SVM: &[u8; 4] = b"GFSV";

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn expect_magic<R: Read>(r: &mut R, want: &[u8; 4], path: &Path) -> Result<()> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got)?;
    if &got != want {
        return Err(format_err(
            path,
            format!(
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(want),
                String::from_utf8_lossy(&got)
            ),
        ));
    }
    Ok(())
}

/// Read a 4-byte magic unless the stream is at EOF.
fn try_magic<R: Read>(r: &mut R, path: &Path) -> Result<Option<[u8; 4]>> {
    let mut buf = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(None);
            }
            return Err(format_err(path, "truncated block magic"));
        }
        filled += n;
    }
    Ok(Some(buf))
}

fn write_matrix_f64<W: Write>(w: &mut W, m: &Array2<f64>) -> Result<()> {
    for col in m.columns() {
        for &v in col {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

fn read_matrix_f64<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((rows, cols));
    for mut col in m.columns_mut() {
        for v in col.iter_mut() {
            *v = r.read_f64::<LittleEndian>()?;
        }
    }
    Ok(m)
}

fn write_vector_f64<W: Write>(w: &mut W, v: &Array1<f64>) -> Result<()> {
    for &x in v {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_vector_f64<R: Read>(r: &mut R, len: usize) -> Result<Array1<f64>> {
    let mut v = Array1::zeros(len);
    for x in v.iter_mut() {
        *x = r.read_f64::<LittleEndian>()?;
    }
    Ok(v)
}

/// Write a descriptor matrix (`d x N`, one descriptor per column) as f32.
pub fn write_descriptors(path: &Path, x: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC_DESCRIPTORS)?;
    w.write_u32::<LittleEndian>(x.nrows() as u32)?;
    w.write_u64::<LittleEndian>(x.ncols() as u64)?;
    for col in x.columns() {
        for &v in col {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_descriptors(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, MAGIC_DESCRIPTORS, path)?;
    let d = r.read_u32::<LittleEndian>()? as usize;
    let n = r.read_u64::<LittleEndian>()? as usize;
    if d == 0 {
        return Err(format_err(path, "zero descriptor dimension"));
    }
    let mut x = Array2::zeros((d, n));
    for mut col in x.columns_mut() {
        for v in col.iter_mut() {
            *v = r.read_f32::<LittleEndian>()? as f64;
        }
    }
    Ok(x)
}

/// Companion file to a descriptor dump: one class index per column.
pub fn write_descriptor_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC_LABELS)?;
    w.write_u64::<LittleEndian>(labels.len() as u64)?;
    for &l in labels {
        w.write_u32::<LittleEndian>(l as u32)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_descriptor_labels(path: &Path) -> Result<Vec<usize>> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, MAGIC_LABELS, path)?;
    let n = r.read_u64::<LittleEndian>()? as usize;
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(r.read_u32::<LittleEndian>()? as usize);
    }
    Ok(labels)
}

fn write_layer_block<W: Write>(w: &mut W, layer: &SaeLayer) -> Result<()> {
    w.write_all(MAGIC_LAYER)?;
    w.write_u32::<LittleEndian>(layer.d() as u32)?;
    w.write_u32::<LittleEndian>(layer.k() as u32)?;
    write_matrix_f64(w, &layer.w)?;
    write_matrix_f64(w, &layer.v)?;
    write_vector_f64(w, &layer.b1)?;
    write_vector_f64(w, &layer.b2)?;
    Ok(())
}

fn read_layer_block<R: Read>(r: &mut R, path: &Path) -> Result<SaeLayer> {
    expect_magic(r, MAGIC_LAYER, path)?;
    let d = r.read_u32::<LittleEndian>()? as usize;
    let k = r.read_u32::<LittleEndian>()? as usize;
    if d == 0 || k == 0 {
        return Err(format_err(path, "zero layer dimensions"));
    }
    Ok(SaeLayer {
        w: read_matrix_f64(r, d, k)?,
        v: read_matrix_f64(r, d, k)?,
        b1: read_vector_f64(r, k)?,
        b2: read_vector_f64(r, d)?,
    })
}

/// Persist a single auto-encoder layer.
pub fn write_sae_layer(path: &Path, layer: &SaeLayer) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_layer_block(&mut w, layer)?;
    w.flush()?;
    Ok(())
}

pub fn read_sae_layer(path: &Path) -> Result<SaeLayer> {
    let mut r = BufReader::new(File::open(path)?);
    read_layer_block(&mut r, path)
}

fn write_head_block<W: Write>(w: &mut W, head: &SoftmaxHead) -> Result<()> {
    w.write_all(MAGIC_HEAD)?;
    w.write_u32::<LittleEndian>(head.hidden() as u32)?;
    w.write_u32::<LittleEndian>(head.num_classes() as u32)?;
    write_matrix_f64(w, &head.u)?;
    write_vector_f64(w, &head.c)?;
    Ok(())
}

/// Persist a deep encoder: both layers plus the fine-tuning head if present.
pub fn write_encoder(path: &Path, enc: &DeepEncoder) -> Result<()> {
    enc.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC_ENCODER)?;
    write_layer_block(&mut w, &enc.layer1)?;
    write_layer_block(&mut w, &enc.layer2)?;
    if let Some(head) = &enc.head {
        write_head_block(&mut w, head)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_encoder(path: &Path) -> Result<DeepEncoder> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, MAGIC_ENCODER, path)?;
    let layer1 = read_layer_block(&mut r, path)?;
    let layer2 = read_layer_block(&mut r, path)?;
    let head = match try_magic(&mut r, path)? {
        None => None,
        Some(magic) if &magic == MAGIC_HEAD => {
            let k2 = r.read_u32::<LittleEndian>()? as usize;
            let c = r.read_u32::<LittleEndian>()? as usize;
            Some(SoftmaxHead {
                u: read_matrix_f64(&mut r, k2, c)?,
                c: read_vector_f64(&mut r, c)?,
            })
        }
        Some(magic) => {
            return Err(format_err(
                path,
                format!("unexpected block {:?}", String::from_utf8_lossy(&magic)),
            ));
        }
    };
    let enc = DeepEncoder {
        layer1,
        layer2,
        head,
    };
    enc.validate()?;
    Ok(enc)
}

/// Persist pooled features (vectors at f32 precision plus labels). Image ids
/// are not stored; reloaded features get synthetic `cache/<index>` ids.
pub fn write_features(path: &Path, features: &[PooledFeature]) -> Result<()> {
    let dim = features.first().map_or(0, |f| f.vector.len());
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC_FEATURES)?;
    w.write_u32::<LittleEndian>(dim as u32)?;
    w.write_u64::<LittleEndian>(features.len() as u64)?;
    for f in features {
        w.write_u32::<LittleEndian>(f.label as u32)?;
    }
    for f in features {
        if f.vector.len() != dim {
            return Err(Error::Dim {
                context: "feature dump",
                expected: dim,
                got: f.vector.len(),
            });
        }
        for &v in &f.vector {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Vec<PooledFeature>> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, MAGIC_FEATURES, path)?;
    let dim = r.read_u32::<LittleEndian>()? as usize;
    let n = r.read_u64::<LittleEndian>()? as usize;
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(r.read_u32::<LittleEndian>()? as usize);
    }
    let mut out = Vec::with_capacity(n);
    for (i, label) in labels.into_iter().enumerate() {
        let mut vector = Array1::zeros(dim);
        for v in vector.iter_mut() {
            *v = r.read_f32::<LittleEndian>()? as f64;
        }
        out.push(PooledFeature {
            vector,
            label,
            image_id: format!("cache/{i}"),
        });
    }
    Ok(out)
}

/// Persist the one-vs-rest SVM.
pub fn write_svm(path: &Path, model: &LinearSvmModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC_SVM)?;
    w.write_u32::<LittleEndian>(model.num_classes() as u32)?;
    w.write_u32::<LittleEndian>(model.dim() as u32)?;
    for row in model.weights.rows() {
        for &v in row {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    write_vector_f64(&mut w, &model.bias)?;
    w.flush()?;
    Ok(())
}

pub fn read_svm(path: &Path) -> Result<LinearSvmModel> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, MAGIC_SVM, path)?;
    let c = r.read_u32::<LittleEndian>()? as usize;
    let d = r.read_u32::<LittleEndian>()? as usize;
    if c == 0 || d == 0 {
        return Err(format_err(path, "zero model dimensions"));
    }
    let mut weights = Array2::zeros((c, d));
    for mut row in weights.rows_mut() {
        for v in row.iter_mut() {
            *v = r.read_f64::<LittleEndian>()?;
        }
    }
    let bias = read_vector_f64(&mut r, c)?;
    Ok(LinearSvmModel { weights, bias })
}
