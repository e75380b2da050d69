//! Model persistence.
//!
//! Layout, all little-endian: magic "T2VM", version u32, m u64, n u64,
//! d u32, then H (m×d), P (n×d), Q (n×d) as row-major f32, then the m
//! user names and n item names as u32-length-prefixed UTF-8 strings.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::TripleModel;

const MODEL_MAGIC: &[u8; 4] = b"T2VM";
const MODEL_VERSION: u32 = 1;

pub fn save_model(model: &TripleModel<f32>, vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    assert_eq!(model.user_count(), vocab.user_count(), "vocabulary/model mismatch");
    assert_eq!(model.item_count(), vocab.item_count(), "vocabulary/model mismatch");
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);

    w.write_all(MODEL_MAGIC).map_err(io_err)?;
    w.write_u32::<LittleEndian>(MODEL_VERSION).map_err(io_err)?;
    w.write_u64::<LittleEndian>(model.user_count() as u64).map_err(io_err)?;
    w.write_u64::<LittleEndian>(model.item_count() as u64).map_err(io_err)?;
    w.write_u32::<LittleEndian>(model.dim() as u32).map_err(io_err)?;
    for mat in [model.user_matrix(), model.anchor_matrix(), model.dual_matrix()] {
        for &x in mat.data() {
            w.write_f32::<LittleEndian>(x).map_err(io_err)?;
        }
    }
    for name in vocab.user_names().iter().chain(vocab.item_names()) {
        let bytes = name.as_bytes();
        w.write_u32::<LittleEndian>(bytes.len() as u32).map_err(io_err)?;
        w.write_all(bytes).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(TripleModel<f32>, Vocabulary)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let trunc = |what: &str| Error::Format(format!("model file truncated in {what}"));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| trunc("magic"))?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format(format!(
            "bad model magic {magic:?}, expected {MODEL_MAGIC:?}"
        )));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| trunc("header"))?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let users = r.read_u64::<LittleEndian>().map_err(|_| trunc("header"))? as usize;
    let items = r.read_u64::<LittleEndian>().map_err(|_| trunc("header"))? as usize;
    let dim = r.read_u32::<LittleEndian>().map_err(|_| trunc("header"))? as usize;
    if dim == 0 {
        return Err(Error::Format("model dimension is zero".into()));
    }

    let mut read_mat = |rows: usize, what: &str| -> Result<Mat<f32>> {
        let mut data = vec![0f32; rows * dim];
        r.read_f32_into::<LittleEndian>(&mut data)
            .map_err(|_| trunc(what))?;
        Ok(Mat::from_vec(rows, dim, data))
    };
    let h = read_mat(users, "user matrix")?;
    let p = read_mat(items, "anchor matrix")?;
    let q = read_mat(items, "dual matrix")?;

    let mut read_names = |count: usize, what: &str| -> Result<Vec<String>> {
        let mut names = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            let len = r.read_u32::<LittleEndian>().map_err(|_| trunc(what))? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf).map_err(|_| trunc(what))?;
            names.push(String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))?);
        }
        Ok(names)
    };
    let user_names = read_names(users, "user names")?;
    let item_names = read_names(items, "item names")?;

    let mut probe = [0u8; 1];
    if r.read(&mut probe).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format("trailing data after model payload".into()));
    }

    Ok((
        TripleModel::new(p, q, h),
        Vocabulary::from_names(user_names, item_names),
    ))
}
