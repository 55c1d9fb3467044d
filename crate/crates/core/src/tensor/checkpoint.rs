//! Binary parameter checkpoints.
//!
//! Layout: magic `LBYL`, version `u32`, count `u32`, then per entry the name
//! length `u32`, UTF-8 name, rank `u32`, `rank` dims as `u32`, and an `f32`
//! payload. All integers and floats are little-endian.

use std::io::{Read, Write};

use super::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LBYL";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} exceeds u32")))
}

pub fn write_checkpoint(w: &mut impl Write, entries: &[(String, Tensor<f32>)]) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    put_u32(w, to_u32(entries.len(), "entry count")?)?;
    for (name, t) in entries {
        put_u32(w, to_u32(name.len(), "name length")?)?;
        w.write_all(name.as_bytes())?;
        put_u32(w, to_u32(t.rank(), "rank")?)?;
        for &d in t.shape() {
            put_u32(w, to_u32(d, "dimension")?)?;
        }
        let mut payload = Vec::with_capacity(4 * t.numel());
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&payload)?;
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = get_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = get_u32(r)?;
    let mut entries = Vec::with_capacity(count.min(4096) as usize);
    for _ in 0..count {
        let len = get_u32(r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
        let rank = get_u32(r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(get_u32(r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut bytes = vec![0u8; 4 * numel];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push((name, Tensor::new(&shape, data)?));
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(&[2], vec![1.5f32, -0.25]).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[("ab".into(), t)]).unwrap();
        let mut expected = b"LBYL".to_vec();
        for v in [1u32, 1, 2] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(b"ab");
        for v in [1u32, 2] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(&1.5f32.to_le_bytes());
        expected.extend_from_slice(&(-0.25f32).to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_checkpoint(&mut &b"NOPE\x01\0\0\0\0\0\0\0"[..]).is_err());
        let t = Tensor::new(&[3], vec![1.0f32, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[("w".into(), t)]).unwrap();
        buf.truncate(buf.len() - 2);
        assert!(read_checkpoint(&mut &buf[..]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            shapes in prop::collection::vec(prop::collection::vec(1usize..5, 1..4), 0..5),
            bits in prop::collection::vec(any::<u32>(), 256),
        ) {
            let entries: Vec<(String, Tensor<f32>)> = shapes
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let n: usize = s.iter().product();
                    let data = (0..n).map(|j| f32::from_bits(bits[(i * 31 + j) % bits.len()])).collect();
                    (format!("p{i}.ü"), Tensor::new(s, data).unwrap())
                })
                .collect();
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &entries).unwrap();
            let back = read_checkpoint(&mut &buf[..]).unwrap();
            prop_assert_eq!(back.len(), entries.len());
            for ((n1, t1), (n2, t2)) in entries.iter().zip(&back) {
                prop_assert_eq!(n1, n2);
                prop_assert_eq!(t1.shape(), t2.shape());
                let b1: Vec<u32> = t1.data().iter().map(|v| v.to_bits()).collect();
                let b2: Vec<u32> = t2.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(b1, b2);
            }
        }
    }
}
