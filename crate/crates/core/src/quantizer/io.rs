//! `LCCB` codebook container.
//!
//! ```text
//! magic    4 bytes  "LCCB"
//! version  u32 LE   = 1
//! repeated until end of input, one record per stage:
//!   stage    u16 LE  (0, 1, 2, ... in order)
//!   size     u32 LE  number of entries
//!   dim      u32 LE  entry dimensionality
//!   entries  size*dim f32 LE, row-major
//! ```
//!
//! EMA statistics are training state and are not stored.

use std::io::{Read, Write};

use super::{Codebook, CodebookSet};
use crate::error::{bail, Result};

pub const CODEBOOK_MAGIC: &[u8; 4] = b"LCCB";
pub const CODEBOOK_VERSION: u32 = 1;

pub fn write_codebooks<W: Write>(mut w: W, cbs: &CodebookSet) -> Result<()> {
    w.write_all(CODEBOOK_MAGIC)?;
    w.write_all(&CODEBOOK_VERSION.to_le_bytes())?;
    for (s, cb) in cbs.iter().enumerate() {
        let stage = u16::try_from(s).map_err(|_| crate::Error::Data("too many stages".into()))?;
        w.write_all(&stage.to_le_bytes())?;
        w.write_all(&(cb.size() as u32).to_le_bytes())?;
        w.write_all(&(cb.dim() as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(cb.size() * cb.dim() * 4);
        for v in cb.entries().iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_codebooks<R: Read>(mut r: R) -> Result<CodebookSet> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != CODEBOOK_MAGIC {
        bail!(Format, "not an LCCB codebook file");
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CODEBOOK_VERSION {
        bail!(Format, "unsupported LCCB version {version}");
    }
    let mut pos = 8;
    let mut set = CodebookSet::default();
    while pos < bytes.len() {
        if bytes.len() - pos < 10 {
            bail!(Data, "truncated stage header at byte {pos}");
        }
        let stage = u16::from_le_bytes(bytes[pos..pos + 2].try_into().unwrap()) as usize;
        let size = u32::from_le_bytes(bytes[pos + 2..pos + 6].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[pos + 6..pos + 10].try_into().unwrap()) as usize;
        pos += 10;
        if stage != set.len() {
            bail!(Format, "stage record {stage} out of order (expected {})", set.len());
        }
        let n = size
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| crate::Error::Format("stage record size overflows".into()))?;
        if bytes.len() - pos < n {
            bail!(Data, "truncated entries for stage {stage}");
        }
        let data = bytes[pos..pos + n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        pos += n;
        set.push(Codebook::from_rows(size, dim, data)?);
    }
    if set.is_empty() {
        bail!(Format, "codebook file has no stages");
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_set() -> impl Strategy<Value = CodebookSet> {
        prop::collection::vec((1usize..6, 1usize..5), 1..4).prop_flat_map(|shapes| {
            shapes
                .into_iter()
                .map(|(k, d)| {
                    prop::collection::vec(-1e6f32..1e6, k * d)
                        .prop_map(move |v| Codebook::from_rows(k, d, v).unwrap())
                })
                .collect::<Vec<_>>()
                .prop_map(CodebookSet::new)
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(set in arb_set()) {
            let mut bytes = Vec::new();
            write_codebooks(&mut bytes, &set).unwrap();
            let back = read_codebooks(bytes.as_slice()).unwrap();
            prop_assert_eq!(back.len(), set.len());
            for (a, b) in back.iter().zip(set.iter()) {
                let bits = |c: &Codebook| c.entries().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(a), bits(b));
                prop_assert_eq!(a.entries().dim(), b.entries().dim());
            }
            let mut again = Vec::new();
            write_codebooks(&mut again, &back).unwrap();
            prop_assert_eq!(again, bytes);
        }
    }

    #[test]
    fn layout_matches_documentation() {
        let set = CodebookSet::new(vec![Codebook::from_rows(1, 2, vec![1.0, -2.0]).unwrap()]);
        let mut bytes = Vec::new();
        write_codebooks(&mut bytes, &set).unwrap();
        let mut expect = b"LCCB".to_vec();
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&0u16.to_le_bytes());
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expect);
    }

    #[test]
    fn rejects_corruption() {
        let set = CodebookSet::new(vec![Codebook::zeros(2, 2)]);
        let mut bytes = Vec::new();
        write_codebooks(&mut bytes, &set).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_codebooks(bad.as_slice()), Err(crate::Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(read_codebooks(bad.as_slice()), Err(crate::Error::Format(_))));
        assert!(matches!(
            read_codebooks(&bytes[..bytes.len() - 1]),
            Err(crate::Error::Data(_))
        ));
        assert!(read_codebooks(&bytes[..8]).is_err());
    }
}
