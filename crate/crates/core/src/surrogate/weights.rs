//! Binary weight files.
//!
//! Layout (little-endian): 8-byte magic, `u32` version, `u32` descriptor
//! length, UTF-8 descriptor, `u64` parameter count, then that many `f32`
//! values, per layer weights followed by bias.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Model;
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"ADVSURR\n";
pub const WEIGHTS_VERSION: u32 = 1;

/// Serialize; fails if a weight does not survive the f32 round trip.
pub fn write_weights(model: &Model) -> Result<Vec<u8>> {
    let descriptor = model.descriptor();
    let count = model.param_count();
    let mut out = Vec::with_capacity(24 + descriptor.len() + 4 * count);
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
    out.extend_from_slice(descriptor.as_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for (w, b) in model.layers().iter().filter_map(|l| l.params()) {
        for v in w.iter().chain(b) {
            let single = *v as f32;
            if f64::from(single) != *v {
                return Err(Error::WeightFormat(format!("weight {v} is not representable as f32")));
            }
            out.extend_from_slice(&single.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::WeightFormat(format!("truncated file while reading {what}")))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn read_weights(bytes: &[u8]) -> Result<Model> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8, "magic")? != WEIGHTS_MAGIC {
        return Err(Error::WeightFormat("bad magic".into()));
    }
    let version = cur.u32("version")?;
    if version != WEIGHTS_VERSION {
        return Err(Error::WeightFormat(format!(
            "version {version}, expected {WEIGHTS_VERSION}"
        )));
    }
    let dlen = cur.u32("descriptor length")? as usize;
    let descriptor = std::str::from_utf8(cur.take(dlen, "descriptor")?)
        .map_err(|_| Error::WeightFormat("descriptor is not UTF-8".into()))?;
    let mut model = Model::from_descriptor(descriptor)?;
    let count = cur.u64("parameter count")?;
    if count != model.param_count() as u64 {
        return Err(Error::WeightFormat(format!(
            "{count} parameters, descriptor needs {}",
            model.param_count()
        )));
    }
    let raw = cur.take(4 * model.param_count(), "parameters")?;
    if cur.pos != bytes.len() {
        return Err(Error::WeightFormat(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }
    let mut values = raw
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))));
    for layer in model.layers_mut() {
        if let Some((w, b)) = layer.params_mut() {
            for slot in w.iter_mut().chain(b.iter_mut()) {
                let v = values.next().expect("count checked");
                if !v.is_finite() {
                    return Err(Error::WeightFormat("non-finite weight".into()));
                }
                *slot = v;
            }
        }
    }
    Ok(model)
}

/// Writes to a sibling temp file first so a failed save never leaves a
/// partial weight file behind.
pub fn save_weights(model: &Model, path: &Path) -> Result<()> {
    let bytes = write_weights(model)?;
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_weights(&bytes).map_err(|e| match e {
        Error::WeightFormat(msg) => Error::WeightFormat(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{Shape, Tensor};

    const SMALL: &str = "input 6 6 1\nconv 2 3 1 0\nrelu\nflatten\ndense 3\nhead softmax_cross_entropy\n";

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = Model::default_seeded(17);
        save_weights(&m, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(m, back);
        let x = Tensor::new(Shape::new(64, 64, 3), vec![0.25; 64 * 64 * 3]).unwrap();
        assert_eq!(m.forward(&x).unwrap(), back.forward(&x).unwrap());
    }

    #[test]
    fn header_layout() {
        let m = Model::seeded(SMALL, 1).unwrap();
        let bytes = write_weights(&m).unwrap();
        assert_eq!(&bytes[..8], b"ADVSURR\n");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        let dlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        assert_eq!(&bytes[16..16 + dlen], m.descriptor().as_bytes());
        let count = u64::from_le_bytes(bytes[16 + dlen..24 + dlen].try_into().unwrap());
        assert_eq!(count as usize, m.param_count());
        assert_eq!(bytes.len(), 24 + dlen + 4 * m.param_count());
    }

    #[test]
    fn malformed_files_are_rejected() {
        let m = Model::seeded(SMALL, 1).unwrap();
        let good = write_weights(&m).unwrap();

        for cut in [0, 5, 12, 20, good.len() - 1] {
            assert!(read_weights(&good[..cut]).is_err(), "cut at {cut}");
        }

        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(read_weights(&magic).unwrap_err().to_string().contains("magic"));

        let mut version = good.clone();
        version[8] = 2;
        assert!(read_weights(&version).unwrap_err().to_string().contains("version"));

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(read_weights(&trailing).is_err());

        let dlen = u32::from_le_bytes(good[12..16].try_into().unwrap()) as usize;
        let mut count = good.clone();
        count[16 + dlen] ^= 1;
        assert!(read_weights(&count).is_err());

        let mut nan = good.clone();
        let last = nan.len() - 4;
        nan[last..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(read_weights(&nan).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_weights(Path::new("/nonexistent/w.bin")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
