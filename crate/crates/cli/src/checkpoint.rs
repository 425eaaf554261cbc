//! Binary checkpoint container: magic + version header, a config snapshot,
//! the id remap tables, and named little-endian f64 tensor records.
//! Writes are deterministic, so identical state produces identical bytes.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use driftrec_core::{CoreError, IdRemap, Result, Tensor};

pub const MAGIC: &[u8; 4] = b"HYSG";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    /// TOML snapshot of the config that produced this artifact.
    pub config: String,
    pub users: Vec<String>,
    pub items: Vec<String>,
    /// Name -> tensor, written sorted by name.
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn push(&mut self, name: &str, t: Tensor) {
        self.tensors.push((name.to_string(), t));
    }

    pub fn set_remaps(&mut self, users: &IdRemap, items: &IdRemap) {
        self.users = users.to_external.clone();
        self.items = items.to_external.clone();
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io_err = |e: std::io::Error| CoreError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut buf = Vec::new();
        buf.write_all(MAGIC).map_err(io_err)?;
        buf.write_u32::<LittleEndian>(VERSION).map_err(io_err)?;
        write_string(&mut buf, &self.config).map_err(io_err)?;
        write_strings(&mut buf, &self.users).map_err(io_err)?;
        write_strings(&mut buf, &self.items).map_err(io_err)?;

        let mut tensors: Vec<&(String, Tensor)> = self.tensors.iter().collect();
        tensors.sort_by(|a, b| a.0.cmp(&b.0));
        buf.write_u64::<LittleEndian>(tensors.len() as u64)
            .map_err(io_err)?;
        for (name, t) in tensors {
            write_string(&mut buf, name).map_err(io_err)?;
            buf.write_u32::<LittleEndian>(t.shape().len() as u32)
                .map_err(io_err)?;
            for &d in t.shape() {
                buf.write_u64::<LittleEndian>(d as u64).map_err(io_err)?;
            }
            for &x in t.data() {
                buf.write_f64::<LittleEndian>(x).map_err(io_err)?;
            }
        }
        std::fs::write(path, buf).map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path).map_err(|e| CoreError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut r = std::io::Cursor::new(bytes);
        let data_err = |msg: String| CoreError::Data(format!("{}: {msg}", path.display()));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| data_err(e.to_string()))?;
        if &magic != MAGIC {
            return Err(data_err(format!(
                "bad checkpoint magic {:?}, expected {:?}",
                String::from_utf8_lossy(&magic),
                String::from_utf8_lossy(MAGIC)
            )));
        }
        let version = r
            .read_u32::<LittleEndian>()
            .map_err(|e| data_err(e.to_string()))?;
        if version != VERSION {
            return Err(data_err(format!(
                "unsupported checkpoint version {version}, expected {VERSION}"
            )));
        }
        let config = read_string(&mut r).map_err(|e| data_err(e.to_string()))?;
        let users = read_strings(&mut r).map_err(|e| data_err(e.to_string()))?;
        let items = read_strings(&mut r).map_err(|e| data_err(e.to_string()))?;
        let n = r
            .read_u64::<LittleEndian>()
            .map_err(|e| data_err(e.to_string()))? as usize;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let name = read_string(&mut r).map_err(|e| data_err(e.to_string()))?;
            let rank = r
                .read_u32::<LittleEndian>()
                .map_err(|e| data_err(e.to_string()))? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(
                    r.read_u64::<LittleEndian>()
                        .map_err(|e| data_err(e.to_string()))? as usize,
                );
            }
            let len: usize = shape.iter().product();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(
                    r.read_f64::<LittleEndian>()
                        .map_err(|e| data_err(e.to_string()))?,
                );
            }
            tensors.push((name, Tensor::from_vec(&shape, data)));
        }
        Ok(Checkpoint {
            config,
            users,
            items,
            tensors,
        })
    }
}

fn write_string(buf: &mut Vec<u8>, s: &str) -> std::io::Result<()> {
    buf.write_u64::<LittleEndian>(s.len() as u64)?;
    buf.write_all(s.as_bytes())
}

fn write_strings(buf: &mut Vec<u8>, v: &[String]) -> std::io::Result<()> {
    buf.write_u64::<LittleEndian>(v.len() as u64)?;
    for s in v {
        write_string(buf, s)?;
    }
    Ok(())
}

fn read_string(r: &mut impl Read) -> std::io::Result<String> {
    let len = r.read_u64::<LittleEndian>()? as usize;
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes)?;
    String::from_utf8(bytes)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
}

fn read_strings(r: &mut impl Read) -> std::io::Result<Vec<String>> {
    let n = r.read_u64::<LittleEndian>()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(read_string(r)?);
    }
    Ok(out)
}

/// Embedding tables as a `[n, dim]` tensor record.
pub fn embedding_tensor(rows: &[Vec<f64>]) -> Tensor {
    let n = rows.len();
    let dim = rows.first().map(Vec::len).unwrap_or(0);
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    Tensor::from_vec(&[n, dim], data)
}

/// Inverse of `embedding_tensor`.
pub fn embedding_rows(t: &Tensor) -> Result<Vec<Vec<f64>>> {
    let shape = t.shape();
    if shape.len() != 2 {
        return Err(CoreError::Data(format!(
            "expected a rank-2 embedding tensor, got shape {shape:?}"
        )));
    }
    let (n, dim) = (shape[0], shape[1]);
    Ok((0..n)
        .map(|i| t.data()[i * dim..(i + 1) * dim].to_vec())
        .collect())
}
