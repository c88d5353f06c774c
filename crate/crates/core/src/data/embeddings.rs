use std::collections::HashMap;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PVLMEMB1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Image,
    Text,
}

impl Modality {
    fn code(self) -> u8 {
        match self {
            Modality::Image => 0,
            Modality::Text => 1,
        }
    }
}

/// `n × d` matrix of frozen-encoder embeddings with one ID per row.
///
/// Rows are held as `f64`; the file stores `f32`, so a store only survives a
/// write/read cycle unchanged when its values are `f32`-representable.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    modality: Modality,
    d: usize,
    ids: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(modality: Modality, ids: Vec<String>, d: usize, data: Vec<f64>) -> Result<Self> {
        if ids.is_empty() || d == 0 {
            return Err(Error::validation(None, "embedding store needs n >= 1 and d >= 1"));
        }
        if data.len() != ids.len() * d {
            return Err(Error::Shape {
                context: "embedding matrix",
                expected: ids.len() * d,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(
                None,
                format!("non-finite value in row {} (id {})", pos / d, ids[pos / d]),
            ));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::validation(None, format!("duplicate id {id:?}")));
            }
        }
        Ok(Self {
            modality,
            d,
            ids,
            data,
            index,
        })
    }

    /// Builds a store from rows, checking they all have the same width.
    pub fn from_rows(modality: Modality, ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::Shape {
                    context: "embedding row",
                    expected: d,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(modality, ids, d, data)
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Store restricted to the given row indices, in that order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let ids = rows.iter().map(|&i| self.ids[i].clone()).collect();
        let data = rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Self::new(self.modality, ids, self.d, data)
    }

    /// Encodes the `PVLMEMB1` little-endian layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = u32::try_from(self.len()).map_err(|_| Error::domain("too many rows"))?;
        let d = u32::try_from(self.d).map_err(|_| Error::domain("dimension too large"))?;
        let id_bytes: usize = self.ids.iter().map(|s| 2 + s.len()).sum();
        let mut out = Vec::with_capacity(17 + id_bytes + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(self.modality.code());
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&d.to_le_bytes());
        for id in &self.ids {
            let len = u16::try_from(id.len())
                .map_err(|_| Error::domain(format!("id longer than 65535 bytes: {id:.32}...")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize, what: &str| -> Result<(usize, &[u8])> {
            if bytes.len() - pos < n {
                return Err(Error::format(pos, format!("truncated while reading {what}")));
            }
            let at = pos;
            pos += n;
            Ok((at, &bytes[at..at + n]))
        };
        let (_, magic) = take(8, "magic")?;
        if magic != MAGIC {
            return Err(Error::format(0, "bad magic or version, expected PVLMEMB1"));
        }
        let (at, m) = take(1, "modality")?;
        let modality = match m[0] {
            0 => Modality::Image,
            1 => Modality::Text,
            other => return Err(Error::format(at, format!("unknown modality code {other}"))),
        };
        let (_, n) = take(4, "row count")?;
        let n = u32::from_le_bytes(n.try_into().unwrap()) as usize;
        let (at, d) = take(4, "dimension")?;
        let d = u32::from_le_bytes(d.try_into().unwrap()) as usize;
        if n == 0 || d == 0 {
            return Err(Error::format(at - 4, "header declares an empty matrix"));
        }
        let mut ids = Vec::with_capacity(n.min(1 << 20));
        for i in 0..n {
            let (_, len) = take(2, "id length")?;
            let len = u16::from_le_bytes(len.try_into().unwrap()) as usize;
            let (at, raw) = take(len, "id")?;
            let id = std::str::from_utf8(raw)
                .map_err(|_| Error::format(at, format!("id {i} is not UTF-8")))?;
            ids.push(id.to_owned());
        }
        let mut data = Vec::with_capacity(n.saturating_mul(d).min(1 << 26));
        for _ in 0..n * d {
            let (at, raw) = take(4, "matrix")?;
            let v = f32::from_le_bytes(raw.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::format(at, "non-finite matrix value"));
            }
            data.push(f64::from(v));
        }
        let end = take(0, "")?.0;
        if end != bytes.len() {
            return Err(Error::format(end, "trailing bytes after matrix"));
        }
        Self::new(modality, ids, d, data)
    }
}
