//! Self-describing checkpoint container.
//!
//! Layout (all integers u32 little-endian, payload f32 little-endian):
//!
//! ```text
//! "TACO1" | version
//! repeated until EOF:
//!   name_len | name bytes (utf-8) | rank | dims[rank] | payload[product(dims)]
//! ```
//!
//! Adam moments are stored as `<param>.adam_m` / `<param>.adam_v`, and the
//! optimizer step count as the single-element record `adam.step`.

use std::fmt::Write as _;
use std::path::Path;

use super::{Adam, ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"TACO1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointRecord {
    pub name: String,
    pub tensor: Tensor,
}

pub fn encode(records: &[CheckpointRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for rec in records {
        out.extend_from_slice(&(rec.name.len() as u32).to_le_bytes());
        out.extend_from_slice(rec.name.as_bytes());
        out.extend_from_slice(&(rec.tensor.rank() as u32).to_le_bytes());
        for &d in rec.tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in rec.tensor.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<CheckpointRecord>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut records = Vec::new();
    while r.pos < bytes.len() {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::Checkpoint(format!("record name: {e}")))?
            .to_string();
        let rank = r.u32()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = dims.iter().product();
        let data = r
            .take(numel * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let tensor = Tensor::new(dims, data)
            .map_err(|e| Error::Checkpoint(format!("record `{name}`: {e}")))?;
        records.push(CheckpointRecord { name, tensor });
    }
    Ok(records)
}

pub fn write_checkpoint(path: &Path, records: &[CheckpointRecord]) -> Result<()> {
    std::fs::write(path, encode(records)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<CheckpointRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn store_records(store: &ParamStore, adam: Option<&Adam>) -> Vec<CheckpointRecord> {
    let mut out: Vec<_> = store
        .iter()
        .map(|p| CheckpointRecord {
            name: p.name.clone(),
            tensor: p.value.clone(),
        })
        .collect();
    if let Some(adam) = adam {
        for (i, p) in store.iter().enumerate() {
            let (m, v) = adam.moments(i);
            out.push(CheckpointRecord {
                name: format!("{}.adam_m", p.name),
                tensor: m.clone(),
            });
            out.push(CheckpointRecord {
                name: format!("{}.adam_v", p.name),
                tensor: v.clone(),
            });
        }
        out.push(CheckpointRecord {
            name: "adam.step".into(),
            tensor: Tensor::scalar(adam.steps_taken() as f32),
        });
    }
    out
}

/// Loads parameter values by name. Every parameter must be present with the
/// expected shape; otherwise the error lists expected vs found shapes.
pub fn load_store(
    store: &mut ParamStore,
    adam: Option<&mut Adam>,
    records: &[CheckpointRecord],
) -> Result<()> {
    let find = |name: &str| records.iter().find(|r| r.name == name);
    let mut report = String::new();
    for p in store.iter() {
        match find(&p.name) {
            None => {
                let _ = writeln!(report, "  {}: expected {:?}, found nothing", p.name, p.value.shape());
            }
            Some(r) if r.tensor.shape() != p.value.shape() => {
                let _ = writeln!(
                    report,
                    "  {}: expected {:?}, found {:?}",
                    p.name,
                    p.value.shape(),
                    r.tensor.shape()
                );
            }
            Some(_) => {}
        }
    }
    if !report.is_empty() {
        return Err(Error::Architecture(report));
    }
    for p in store.iter_mut() {
        let r = find(&p.name).expect("checked above");
        p.value.data_mut().copy_from_slice(r.tensor.data());
    }
    if let Some(adam) = adam {
        if let Some(step) = find("adam.step") {
            let mut first = Vec::new();
            let mut second = Vec::new();
            for p in store.iter() {
                let m = find(&format!("{}.adam_m", p.name));
                let v = find(&format!("{}.adam_v", p.name));
                match (m, v) {
                    (Some(m), Some(v)) => {
                        first.push(m.tensor.clone());
                        second.push(v.tensor.clone());
                    }
                    _ => return Err(Error::Checkpoint(format!("missing moments for `{}`", p.name))),
                }
            }
            adam.restore(step.tensor.item() as u64, first, second);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::AdamConfig;

    #[test]
    fn header_and_layout_are_bit_exact() {
        let rec = CheckpointRecord {
            name: "w".into(),
            tensor: Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap(),
        };
        let bytes = encode(&[rec.clone()]);
        let mut expected = b"TACO1".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.push(b'w');
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expected);
        assert_eq!(decode(&bytes).unwrap(), vec![rec]);
    }

    #[test]
    fn truncated_and_bad_magic_are_rejected() {
        assert!(decode(b"TACO2\x01\0\0\0").is_err());
        let bytes = encode(&[CheckpointRecord {
            name: "w".into(),
            tensor: Tensor::zeros(vec![3]),
        }]);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn mismatch_lists_expected_and_found() {
        let mut store = ParamStore::new();
        store.register("a", Tensor::zeros(vec![2, 2])).unwrap();
        store.register("b", Tensor::zeros(vec![3])).unwrap();
        let records = vec![CheckpointRecord {
            name: "a".into(),
            tensor: Tensor::zeros(vec![2, 3]),
        }];
        let msg = load_store(&mut store, None, &records).unwrap_err().to_string();
        assert!(msg.contains("a: expected [2, 2], found [2, 3]"), "{msg}");
        assert!(msg.contains("b: expected [3], found nothing"), "{msg}");
    }

    #[test]
    fn optimizer_moments_survive() {
        let mut store = ParamStore::new();
        let id = store.register("p", Tensor::zeros(vec![2])).unwrap();
        store.get_mut(id).grad = Tensor::new(vec![2], vec![0.5, -1.0]).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &store);
        adam.step(&mut store);
        let bytes = encode(&store_records(&store, Some(&adam)));

        let mut fresh = ParamStore::new();
        fresh.register("p", Tensor::zeros(vec![2])).unwrap();
        let mut fresh_adam = Adam::new(AdamConfig::default(), &fresh);
        load_store(&mut fresh, Some(&mut fresh_adam), &decode(&bytes).unwrap()).unwrap();
        assert_eq!(fresh.value(id), store.value(id));
        assert_eq!(fresh_adam.moments(0), adam.moments(0));
        assert_eq!(fresh_adam.steps_taken(), 1);
    }
}
