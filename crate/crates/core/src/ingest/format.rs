//! `TLDS` dataset container.
//!
//! ```text
//! "TLDS" | version u16
//! catalog: head_fraction f64 | n u64 | n × (id: u32 len + utf8, clicks u64, is_tail u8)
//! train, valid, test: count u64 | count × (prefix_len u32 | prefix_len × u32 | target u32)
//! ```
//! All integers little-endian.

use std::fs;
use std::path::Path;

use super::catalog::ItemCatalog;
use super::preprocess::{Dataset, Pair};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{format_err, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"TLDS";
pub const DATASET_VERSION: u16 = 1;

pub(crate) fn write_catalog(w: &mut ByteWriter, cat: &ItemCatalog) {
    w.f64(cat.head_fraction());
    w.u64(cat.len() as u64);
    for i in 0..cat.len() {
        w.str(cat.id_of(i));
        w.u64(cat.click_count()[i]);
        w.u8(cat.is_tail(i) as u8);
    }
}

pub(crate) fn read_catalog(r: &mut ByteReader<'_>) -> Result<ItemCatalog> {
    let head_fraction = r.f64()?;
    let n = r.count(13)?;
    let (mut ids, mut counts, mut flags) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        ids.push(r.str()?);
        counts.push(r.u64()?);
        flags.push(match r.u8()? {
            0 => false,
            1 => true,
            v => return Err(format_err(format!("invalid tail flag {v}"))),
        });
    }
    ItemCatalog::from_parts(ids, counts, flags, head_fraction)
}

fn write_pairs(w: &mut ByteWriter, pairs: &[Pair]) {
    w.u64(pairs.len() as u64);
    for p in pairs {
        w.u32(p.prefix.len() as u32);
        for &i in &p.prefix {
            w.u32(i as u32);
        }
        w.u32(p.target as u32);
    }
}

fn read_pairs(r: &mut ByteReader<'_>) -> Result<Vec<Pair>> {
    let n = r.count(12)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u32()? as usize;
        let raw = r.take(len.checked_mul(4).ok_or_else(|| format_err("prefix length overflows"))?)?;
        let prefix = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect();
        let target = r.u32()? as usize;
        out.push(Pair { prefix, target });
    }
    Ok(out)
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(DATASET_MAGIC);
    w.u16(DATASET_VERSION);
    write_catalog(&mut w, &ds.catalog);
    write_pairs(&mut w, &ds.train);
    write_pairs(&mut w, &ds.valid);
    write_pairs(&mut w, &ds.test);
    w.into_inner()
}

/// Decodes a whole container; nothing is returned unless every byte checks out.
pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = ByteReader::new(bytes, "dataset file");
    r.magic(DATASET_MAGIC)?;
    let version = r.u16()?;
    if version != DATASET_VERSION {
        return Err(format_err(format!(
            "dataset format version {version} is not supported (expected {DATASET_VERSION})"
        )));
    }
    let catalog = read_catalog(&mut r)?;
    let train = read_pairs(&mut r)?;
    let valid = read_pairs(&mut r)?;
    let test = read_pairs(&mut r)?;
    r.finish()?;
    let ds = Dataset {
        catalog,
        train,
        valid,
        test,
    };
    ds.validate().map_err(|e| format_err(format!("dataset file is inconsistent: {e}")))?;
    Ok(ds)
}

/// Writes through a sibling temporary file, so a failed save leaves no
/// partial dataset behind.
pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, encode_dataset(ds))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;

    fn toy() -> Dataset {
        let catalog = ItemCatalog::from_counts([("a", 5), ("b", 3), ("c", 1), ("d", 1)], 0.25).unwrap();
        Dataset {
            catalog,
            train: vec![
                Pair { prefix: vec![0], target: 1 },
                Pair { prefix: vec![0, 1], target: 2 },
            ],
            valid: vec![Pair { prefix: vec![3], target: 0 }],
            test: vec![],
        }
    }

    #[test]
    fn starts_with_magic_and_version() {
        let b = encode_dataset(&toy());
        assert_eq!(&b[..4], b"TLDS");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), DATASET_VERSION);
    }

    #[test]
    fn every_truncation_is_rejected() {
        let b = encode_dataset(&toy());
        for cut in 0..b.len() {
            assert!(matches!(decode_dataset(&b[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
        let mut extra = b.clone();
        extra.push(0);
        assert!(decode_dataset(&extra).is_err());
    }

    #[test]
    fn wrong_magic_or_version() {
        let mut b = encode_dataset(&toy());
        b[0] = b'X';
        assert!(matches!(decode_dataset(&b), Err(Error::Format(_))));
        let mut b = encode_dataset(&toy());
        b[4] = 9;
        assert!(matches!(decode_dataset(&b), Err(Error::Format(_))));
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let mut ds = toy();
        ds.train[0].target = 77;
        assert!(decode_dataset(&encode_dataset(&ds)).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(prefixes in prop::collection::vec((prop::collection::vec(0usize..4, 1..6), 0usize..4), 0..30)) {
            let mut ds = toy();
            ds.test = prefixes.into_iter().map(|(prefix, target)| Pair { prefix, target }).collect();
            let back = decode_dataset(&encode_dataset(&ds)).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
