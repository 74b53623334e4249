//! Raw tensor fixture format: magic `TNSR`, version u16 LE (=1), rank u8,
//! dims u32 LE, payload f32 LE row-major.

use std::io::{Read, Write};
use std::path::Path;

use super::{Shape, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TNSR";
const VERSION: u16 = 1;

pub fn write_tensor(path: &Path, tensor: &Tensor<f32>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let mut buf = Vec::with_capacity(4 + 2 + 1 + 16 + tensor.count() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(4u8);
    for d in tensor.shape().dims() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in tensor.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor<f32>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |reason: &str| Error::Format {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    if bytes.len() < 7 || &bytes[0..4] != MAGIC {
        return Err(fail("missing TNSR magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    let rank = bytes[6] as usize;
    if rank == 0 || rank > 4 {
        return Err(fail(&format!("rank {rank} outside 1..=4")));
    }
    let mut off = 7;
    // ranks below 4 promote with trailing size-1 axes: [a,b] -> a x b x 1 x 1
    let mut dims = [1usize; 4];
    for slot in dims.iter_mut().take(rank) {
        if off + 4 > bytes.len() {
            return Err(fail("truncated dims"));
        }
        *slot = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        off += 4;
    }
    let shape = Shape::new(dims[0], dims[1], dims[2], dims[3])
        .map_err(|e| fail(&format!("bad dims: {e}")))?;
    let expected = shape.count() * 4;
    if bytes.len() - off != expected {
        return Err(fail(&format!(
            "payload has {} bytes, expected {expected}",
            bytes.len() - off
        )));
    }
    let data: Vec<f32> = bytes[off..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tnsr");
        let shape = Shape::new(2, 3, 4, 5).unwrap();
        let data: Vec<f32> = (0..shape.count()).map(|i| (i as f32).sin()).collect();
        let t = Tensor::from_vec(shape, data).unwrap();
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        for (a, b) in t.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_bad_magic_and_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tnsr");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(read_tensor(&path).is_err());

        let mut ok = Vec::new();
        ok.extend_from_slice(b"TNSR");
        ok.extend_from_slice(&1u16.to_le_bytes());
        ok.push(1u8);
        ok.extend_from_slice(&3u32.to_le_bytes());
        ok.extend_from_slice(&[0u8; 8]); // 2 floats, 3 expected
        std::fs::write(&path, &ok).unwrap();
        assert!(read_tensor(&path).is_err());
    }

    #[test]
    fn lower_rank_promotes_with_trailing_ones() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vec.tnsr");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"TNSR");
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.push(2u8);
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, &bytes).unwrap();
        let t = read_tensor(&path).unwrap();
        assert_eq!(t.shape(), Shape::new(2, 3, 1, 1).unwrap());
        assert_eq!(t.data()[4], 5.0);
    }
}
