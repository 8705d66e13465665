//! Binary embedding file.
//!
//! ```text
//! "CEMB" | version: u32 = 1 | dim: u32
//! section (users, tag 0) | section (items, tag 1)
//! section := tag: u8 | rows: u64 | rows x (id_len: u16 | id: UTF-8 | dim x f32)
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::FactorModel;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CEMB";
const VERSION: u32 = 1;
const USERS_TAG: u8 = 0;
const ITEMS_TAG: u8 = 1;

pub fn export_embeddings(model: &FactorModel) -> Result<Vec<u8>> {
    let d = model.dim();
    let dim = u32::try_from(d).map_err(|_| Error::Format(format!("dim {d} exceeds u32")))?;
    let mut out = Vec::with_capacity(12 + 4 * d * (model.users.len() + model.items.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for (tag, m) in [(USERS_TAG, &model.users), (ITEMS_TAG, &model.items)] {
        out.push(tag);
        out.extend_from_slice(&(m.len() as u64).to_le_bytes());
        for (id, row) in m.rows() {
            let len = u16::try_from(id.len())
                .map_err(|_| Error::Format(format!("id `{id}` longer than 65535 bytes")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

pub fn read_embeddings(bytes: &[u8]) -> Result<FactorModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(r.array("version")?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(r.array("dim")?) as usize;
    if dim == 0 {
        return Err(Error::Format("dim must be at least 1".into()));
    }
    let mut sections = Vec::with_capacity(2);
    for expected in [USERS_TAG, ITEMS_TAG] {
        let [tag] = r.array::<1>("section tag")?;
        if tag != expected {
            return Err(Error::Format(format!(
                "expected section tag {expected}, found {tag}"
            )));
        }
        let rows = u64::from_le_bytes(r.array("row count")?);
        let rows = usize::try_from(rows).map_err(|_| Error::Format("row count overflow".into()))?;
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for _ in 0..rows {
            let len = u16::from_le_bytes(r.array("id length")?) as usize;
            let id = std::str::from_utf8(r.take(len, "id")?)
                .map_err(|_| Error::Format("id is not valid UTF-8".into()))?;
            ids.push(id.to_owned());
            for _ in 0..dim {
                data.push(f32::from_le_bytes(r.array("vector")?));
            }
        }
        let m = EmbeddingMatrix::new(ids, dim, data).map_err(|e| Error::Format(e.to_string()))?;
        sections.push(m);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let items = sections.pop().expect("two sections");
    let users = sections.pop().expect("two sections");
    FactorModel::new(users, items)
}

pub fn write_embeddings(model: &FactorModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, export_embeddings(model)?).map_err(|e| Error::io(path, e))
}

pub fn import_embeddings(path: impl AsRef<Path>) -> Result<FactorModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(d: usize, n_users: usize, n_items: usize, vals: &[f32]) -> FactorModel {
        let mut it = vals.iter().copied().cycle();
        let mut mk = |prefix: &str, n: usize| {
            let ids = (0..n).map(|k| format!("{prefix}{k}")).collect();
            let data = (0..n * d).map(|_| it.next().unwrap()).collect();
            EmbeddingMatrix::new(ids, d, data).unwrap()
        };
        let users = mk("user-", n_users);
        let items = mk("item-", n_items);
        FactorModel::new(users, items).unwrap()
    }

    #[test]
    fn header_drives_shape() {
        let m = model(3, 1, 2, &[0.5, -1.25, 3.0]);
        let back = read_embeddings(&export_embeddings(&m).unwrap()).unwrap();
        assert_eq!(back.dim(), 3);
        assert_eq!(back.items.len(), 2);
        assert_eq!(back, m);
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let bytes = export_embeddings(&model(2, 2, 2, &[1.0, 2.0])).unwrap();
        for cut in [0, 3, 10, 13, bytes.len() - 1] {
            assert!(matches!(
                read_embeddings(&bytes[..cut]),
                Err(Error::Format(_))
            ));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_embeddings(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(read_embeddings(&bad), Err(Error::Format(_))));
        let mut bad = bytes;
        bad.push(0);
        assert!(matches!(read_embeddings(&bad), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            d in 1usize..6,
            nu in 0usize..5,
            ni in 0usize..5,
            vals in prop::collection::vec(-1e6f32..1e6, 1..40),
        ) {
            let m = model(d, nu, ni, &vals);
            let bytes = export_embeddings(&m).unwrap();
            let back = read_embeddings(&bytes).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(export_embeddings(&back).unwrap(), bytes);
        }
    }
}
