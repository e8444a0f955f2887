//! TPW3 container: little-endian header, named f32 tensors, trailing CRC32.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nn::params::ParameterRegistry;
use crate::tensor::Tensor;

pub const WEIGHT_MAGIC: &[u8; 4] = b"TPW3";
pub const WEIGHT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightFile {
    pub version: u32,
    pub tensors: Vec<(String, Tensor)>,
}

impl WeightFile {
    pub fn from_registry(reg: &ParameterRegistry) -> Self {
        Self {
            version: WEIGHT_VERSION,
            tensors: reg.entries().map(|e| (e.name.clone(), e.tensor.clone())).collect(),
        }
    }
}

pub fn encode_weights(file: &WeightFile) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&file.version.to_le_bytes());
    let count = u32::try_from(file.tensors.len()).map_err(|_| Error::WeightFormat("too many tensors".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in &file.tensors {
        let len = u16::try_from(name.len()).map_err(|_| Error::WeightFormat(format!("name `{name}` too long")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let rank = u8::try_from(t.rank()).map_err(|_| Error::WeightFormat(format!("`{name}` rank {}", t.rank())))?;
        out.push(rank);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| Error::WeightFormat(format!("`{name}` dim {d}")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::WeightFormat(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<WeightFile> {
    if bytes.len() < 4 || &bytes[..4] != WEIGHT_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 16 {
        return Err(Error::WeightFormat(format!("{} bytes is too short", bytes.len())));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Crc { stored, computed });
    }
    let mut c = Cursor { buf: body, pos: 4 };
    let version = c.u32("version")?;
    if version != WEIGHT_VERSION {
        return Err(Error::WeightFormat(format!("unsupported version {version}")));
    }
    let count = c.u32("tensor count")?;
    let mut seen = HashSet::new();
    let mut tensors = Vec::new();
    for i in 0..count {
        let len = u16::from_le_bytes(c.take(2, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| Error::WeightFormat(format!("tensor {i} name is not UTF-8")))?
            .to_string();
        if !seen.insert(name.clone()) {
            return Err(Error::WeightFormat(format!("duplicate tensor `{name}`")));
        }
        let rank = c.take(1, "rank")?[0] as usize;
        let shape = (0..rank).map(|_| c.u32("dims").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let bytes = n
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::WeightFormat(format!("`{name}` size overflows")))?;
        let data = c
            .take(bytes, &name)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        tensors.push((name, Tensor::from_vec(&shape, data)?));
    }
    if c.pos != body.len() {
        return Err(Error::WeightFormat(format!("{} trailing bytes after the last tensor", body.len() - c.pos)));
    }
    Ok(WeightFile { version, tensors })
}

pub fn save_weights(reg: &ParameterRegistry, path: &Path) -> Result<()> {
    let bytes = encode_weights(&WeightFile::from_registry(reg))?;
    write_atomic(path, |w| Ok(w.write_all(&bytes)?))
}

pub fn read_weights(path: &Path) -> Result<WeightFile> {
    decode_weights(&std::fs::read(path)?)
}

/// Replace every registry tensor with the one stored under its name.
///
/// The file must hold exactly the registry's tensors with matching shapes;
/// nothing is modified unless the whole file validates.
pub fn apply_weights(reg: &mut ParameterRegistry, file: WeightFile) -> Result<()> {
    for (name, t) in &file.tensors {
        let entry = reg
            .by_name(name)
            .ok_or_else(|| Error::WeightFormat(format!("tensor `{name}` is not part of this model")))?;
        if entry.tensor.shape() != t.shape() {
            return Err(Error::WeightShape {
                name: name.clone(),
                found: t.shape().to_vec(),
                expected: entry.tensor.shape().to_vec(),
            });
        }
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("tensor `{name}`")));
        }
    }
    if file.tensors.len() != reg.len() {
        let present: HashSet<&str> = file.tensors.iter().map(|(n, _)| n.as_str()).collect();
        let missing = reg.entries().find(|e| !present.contains(e.name.as_str())).map(|e| e.name.clone());
        return Err(Error::WeightFormat(format!("missing tensor `{}`", missing.unwrap_or_default())));
    }
    for (name, t) in file.tensors {
        reg.set_tensor(&name, t)?;
    }
    Ok(())
}

pub fn load_weights(reg: &mut ParameterRegistry, path: &Path) -> Result<()> {
    apply_weights(reg, read_weights(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelConfig};

    fn bits(reg: &ParameterRegistry) -> Vec<(String, Vec<usize>, Vec<u32>)> {
        reg.entries()
            .map(|e| (e.name.clone(), e.tensor.shape().to_vec(), e.tensor.data().iter().map(|v| v.to_bits()).collect()))
            .collect()
    }

    #[test]
    fn default_model_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.tpw");
        let a = build_model(&ModelConfig::default(), 3).unwrap();
        save_weights(a.registry(), &p).unwrap();
        let mut b = build_model(&ModelConfig::default(), 4).unwrap();
        assert_ne!(bits(a.registry()), bits(b.registry()));
        load_weights(b.registry_mut(), &p).unwrap();
        assert_eq!(bits(a.registry()), bits(b.registry()));
    }

    #[test]
    fn layout_of_a_single_tensor() {
        let f = WeightFile {
            version: WEIGHT_VERSION,
            tensors: vec![("ab".into(), Tensor::from_vec(&[2], vec![1.0, -2.0]).unwrap())],
        };
        let b = encode_weights(&f).unwrap();
        let mut want = b"TPW3".to_vec();
        want.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0, 2, 0, b'a', b'b', 1, 2, 0, 0, 0]);
        want.extend_from_slice(&1.0f32.to_le_bytes());
        want.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(&b[..b.len() - 4], &want[..]);
        assert_eq!(&b[b.len() - 4..], &crc32fast::hash(&want).to_le_bytes());
        assert_eq!(decode_weights(&b).unwrap(), f);
    }

    #[test]
    fn flipped_payload_byte_is_a_crc_error() {
        let m = build_model(&ModelConfig::toy(), 5).unwrap();
        let mut b = encode_weights(&WeightFile::from_registry(m.registry())).unwrap();
        let i = b.len() / 2;
        b[i] ^= 0x01;
        assert!(matches!(decode_weights(&b), Err(Error::Crc { .. })));
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert!(matches!(decode_weights(b"TPW2\0\0\0\0\0\0\0\0\0\0\0\0"), Err(Error::BadMagic)));
        assert!(matches!(decode_weights(b""), Err(Error::BadMagic)));
        let f = WeightFile {
            version: WEIGHT_VERSION,
            tensors: vec![("x".into(), Tensor::zeros(&[3]))],
        };
        let mut b = encode_weights(&f).unwrap();
        b.truncate(b.len() - 8);
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode_weights(&b), Err(Error::WeightFormat(_))));
    }

    #[test]
    fn toy_weights_into_default_model_name_the_tensor() {
        let toy = build_model(&ModelConfig::toy(), 6).unwrap();
        let mut full = build_model(&ModelConfig::default(), 6).unwrap();
        let before = bits(full.registry());
        let e = apply_weights(full.registry_mut(), WeightFile::from_registry(toy.registry())).unwrap_err();
        match &e {
            Error::WeightShape { name, found, expected } => {
                assert!(full.registry().by_name(name).is_some());
                assert_ne!(found, expected);
            }
            other => panic!("expected shape error, got {other}"),
        }
        assert!(e.to_string().contains('`'));
        assert_eq!(before, bits(full.registry()));
    }

    #[test]
    fn duplicate_and_missing_names() {
        let t = Tensor::zeros(&[1]);
        let dup = WeightFile {
            version: WEIGHT_VERSION,
            tensors: vec![("a".into(), t.clone()), ("a".into(), t)],
        };
        assert!(matches!(decode_weights(&encode_weights(&dup).unwrap()), Err(Error::WeightFormat(_))));
        let m = build_model(&ModelConfig::toy(), 7).unwrap();
        let mut f = WeightFile::from_registry(m.registry());
        f.tensors.pop();
        let mut m2 = build_model(&ModelConfig::toy(), 8).unwrap();
        assert!(matches!(apply_weights(m2.registry_mut(), f), Err(Error::WeightFormat(m)) if m.contains("missing")));
    }
}
