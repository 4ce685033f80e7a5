//! Named trainable parameters plus optimizer state, and their binary format.
//!
//! File layout, all integers and floats little-endian:
//! `"DSF1"`, version `u32`, then per entry: name length `u64`, UTF-8 name,
//! rank `u64`, dims `u64` each, values `f64` each. Entries run to end of file.

use std::io::{Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{DsfError, Result};

const MAGIC: &[u8; 4] = b"DSF1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
    /// Whether weight decay applies to this entry.
    pub decay: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<Param>,
}

/// Gradient buffers congruent with a [`ParamStore`], one flat vector per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.0[id.0]
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.0[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.id(name).is_some() {
            return Err(DsfError::Argument(format!("duplicate parameter name {name}")));
        }
        let shape = value.shape().to_vec();
        self.entries.push(Param {
            name: name.to_string(),
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            value,
            decay: true,
        });
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.id(name).ok_or_else(|| DsfError::Shape(format!("missing parameter {name}")))
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &[f64] {
        self.entries[id.0].value.data()
    }

    #[inline]
    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.entries[id.0].value.data_mut()
    }

    pub fn entry(&self, id: ParamId) -> &Param {
        &self.entries[id.0]
    }

    pub fn entry_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.entries[id.0]
    }

    pub fn entries(&self) -> &[Param] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Param] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    pub fn set_decay(&mut self, id: ParamId, decay: bool) {
        self.entries[id.0].decay = decay;
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.entries {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub fn grads_like(&self) -> Grads {
        Grads(self.entries.iter().map(|p| vec![0.0; p.value.len()]).collect())
    }

    /// Copies `grads` into the stored gradient buffers.
    pub fn set_grads(&mut self, grads: &Grads) {
        for (p, g) in self.entries.iter_mut().zip(&grads.0) {
            p.grad.data_mut().copy_from_slice(g);
        }
    }

    /// Parameter values only, for comparing two stores.
    pub fn values_equal(&self, other: &ParamStore) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| a.name == b.name && a.value == b.value)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for p in &self.entries {
            w.write_all(&(p.name.len() as u64).to_le_bytes())?;
            w.write_all(p.name.as_bytes())?;
            w.write_all(&(p.value.shape().len() as u64).to_le_bytes())?;
            for &d in p.value.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in p.value.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(DsfError::Format("bad parameter file magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(DsfError::Format(format!("unsupported parameter file version {version}")));
        }
        let mut store = ParamStore::new();
        while cur.pos < bytes.len() {
            let name_len = cur.u64()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| DsfError::Format("parameter name is not UTF-8".into()))?
                .to_string();
            let rank = cur.u64()? as usize;
            if rank > 3 {
                return Err(DsfError::Format(format!("rank {rank} for {name}")));
            }
            let dims: Vec<usize> = (0..rank).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<_>>()?;
            let n: usize = dims.iter().product();
            let values = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            store.add(&name, Tensor::from_vec(&dims, values)?)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::atomic_write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Copies values from `other` into entries with matching names and shapes.
    pub fn load_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for p in &mut self.entries {
            let src = other
                .entries
                .iter()
                .find(|q| q.name == p.name)
                .ok_or_else(|| DsfError::Format(format!("parameter {} missing from file", p.name)))?;
            if src.value.shape() != p.value.shape() {
                return Err(DsfError::Shape(format!(
                    "parameter {}: file shape {:?}, model shape {:?}",
                    p.name,
                    src.value.shape(),
                    p.value.shape()
                )));
            }
            p.value = src.value.clone();
        }
        Ok(())
    }
}

pub(crate) struct Cursor<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| DsfError::Format("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn names_are_unique() {
        let mut ps = ParamStore::new();
        ps.add("w", Tensor::zeros(&[2])).unwrap();
        assert!(ps.add("w", Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn header_layout() {
        let mut ps = ParamStore::new();
        ps.add("ab", Tensor::from_vec(&[1, 2], vec![1.0, -2.0]).unwrap()).unwrap();
        let b = ps.to_bytes();
        assert_eq!(&b[..4], b"DSF1");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 2);
        assert_eq!(&b[16..18], b"ab");
        assert_eq!(u64::from_le_bytes(b[18..26].try_into().unwrap()), 2);
        assert_eq!(b.len(), 4 + 4 + 8 + 2 + 8 + 16 + 16);
    }

    #[test]
    fn truncated_files_are_rejected() {
        let mut ps = ParamStore::new();
        ps.add("w", Tensor::zeros(&[4])).unwrap();
        let b = ps.to_bytes();
        assert!(ParamStore::from_bytes(&b[..b.len() - 3]).is_err());
        assert!(ParamStore::from_bytes(b"XXXX\x01\0\0\0").is_err());
    }

    proptest! {
        #[test]
        fn serialization_roundtrips(values in proptest::collection::vec(-1e6f64..1e6, 1..40), split in 0usize..40) {
            let split = split.min(values.len());
            let mut ps = ParamStore::new();
            ps.add("first", Tensor::from_vec(&[split], values[..split].to_vec()).unwrap()).unwrap();
            ps.add("second.weight", Tensor::from_vec(&[values.len() - split, 1], values[split..].to_vec()).unwrap()).unwrap();
            let back = ParamStore::from_bytes(&ps.to_bytes()).unwrap();
            prop_assert!(back.values_equal(&ps));
            prop_assert_eq!(back.to_bytes(), ps.to_bytes());
        }
    }
}
