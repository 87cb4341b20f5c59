//! Binary tensor-table container used for checkpoints and prediction caches.
//!
//! Layout: magic `WSDS`, format version `u32` (little-endian), then
//! back-to-back records until end of file. Each record is
//! `u32 name_len | name bytes | u32 rank | u64 extents... | f64 payload...`,
//! all little-endian. Writing the same table twice produces identical bytes.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"WSDS";
const VERSION: u32 = 1;

pub fn write_records(path: &Path, records: &[(&str, &Tensor)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for (name, tensor) in records {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(tensor.shape.len() as u32).to_le_bytes())?;
        for &e in &tensor.shape {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in &tensor.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, path, "magic")?;
    if &magic != MAGIC {
        return Err(Error::checkpoint(format!("{}: bad magic bytes", path.display())));
    }
    let version = read_u32(&mut r, path, "version")?;
    if version != VERSION {
        return Err(Error::checkpoint(format!(
            "{}: unsupported format version {version}",
            path.display()
        )));
    }
    let mut records = Vec::new();
    loop {
        let mut len_buf = [0u8; 4];
        match r.read(&mut len_buf)? {
            0 => break,
            4 => {}
            n => {
                // a partial length prefix is a truncated file
                let mut rest = [0u8; 4];
                read_exact(&mut r, &mut rest[..4 - n], path, "record header")?;
                len_buf[n..].copy_from_slice(&rest[..4 - n]);
            }
        }
        let name_len = u32::from_le_bytes(len_buf) as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes, path, "record name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::checkpoint(format!("{}: record name is not UTF-8", path.display())))?;
        let rank = read_u32(&mut r, path, "rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut buf = [0u8; 8];
            read_exact(&mut r, &mut buf, path, "extent")?;
            shape.push(u64::from_le_bytes(buf) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 8];
        for _ in 0..numel {
            read_exact(&mut r, &mut buf, path, "payload")?;
            data.push(f64::from_le_bytes(buf));
        }
        let tensor = Tensor::new(shape, data)
            .map_err(|e| Error::checkpoint(format!("{}: record {name}: {e}", path.display())))?;
        records.push((name, tensor));
    }
    Ok(records)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path, what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::checkpoint(format!("{}: truncated {what}", path.display())))
}

fn read_u32(r: &mut impl Read, path: &Path, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, path, what)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Role, SegModel};

    #[test]
    fn round_trip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let model = SegModel::new(ModelConfig::tiny(), Role::Teacher, 17).unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        model.save(&p1).unwrap();
        let loaded = SegModel::load(&p1, ModelConfig::tiny(), Role::Teacher).unwrap();
        loaded.save(&p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2);
        for (name, t) in model.params() {
            assert_eq!(t.data, loaded.param(name).unwrap().data);
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ckpt");
        std::fs::write(&p, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(read_records(&p), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn architecture_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let model = SegModel::new(ModelConfig::tiny(), Role::Teacher, 17).unwrap();
        let p = dir.path().join("m.ckpt");
        model.save(&p).unwrap();
        let mut other = ModelConfig::tiny();
        other.encoder.hidden_dim = 16;
        other.encoder.ffn_dim = 32;
        assert!(matches!(
            SegModel::load(&p, other, Role::Teacher),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let model = SegModel::new(ModelConfig::tiny(), Role::Teacher, 17).unwrap();
        let p = dir.path().join("m.ckpt");
        model.save(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let p2 = dir.path().join("trunc.ckpt");
        std::fs::write(&p2, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_records(&p2), Err(Error::Checkpoint(_))));
    }
}
