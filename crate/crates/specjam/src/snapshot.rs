//! Binary persistence of network parameters.
//!
//! Layout (all integers little-endian):
//!   magic "SPECJAMQ" (8 bytes)
//!   format version      u32
//!   input width I       u32
//!   LSTM hidden H       u32
//!   duel hidden D       u32
//!   action count A      u32
//!   history length N    u32
//!   interval index      u64
//!   slot                u64
//!   parameters          param_count x f64, in `QNetworkParams::to_flat`
//!                       order (w_x, w_h, b, value head, advantage head)
//!
//! Round-trips are bit-identical. Decoding rejects bad magic, unknown
//! versions, absurd dimensions, truncated or oversized payloads, and
//! non-finite parameters, always reporting the byte offset of the problem.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::qnet::{QNetDims, QNetworkParams};
use crate::report::atomic_write;

const MAGIC: &[u8; 8] = b"SPECJAMQ";
const VERSION: u32 = 1;
/// Upper bound on any single dimension; catches garbage headers before they
/// turn into huge allocations.
const DIM_LIMIT: u32 = 1_000_000;

/// Identifies when a snapshot was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SnapshotMeta {
    pub interval: u64,
    pub slot: u64,
}

pub fn write_params(
    w: &mut impl Write,
    params: &QNetworkParams,
    meta: SnapshotMeta,
) -> std::io::Result<()> {
    let d = params.dims();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for dim in [d.input, d.hidden, d.duel_hidden, d.actions, d.history] {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    w.write_all(&meta.interval.to_le_bytes())?;
    w.write_all(&meta.slot.to_le_bytes())?;
    for v in params.to_flat() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

struct Decoder<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Decoder<R> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        let mut read = 0usize;
        while read < N {
            match self.inner.read(&mut buf[read..]) {
                Ok(0) => {
                    return Err(Error::format(
                        self.offset + read as u64,
                        format!("unexpected end of snapshot while reading {what}"),
                    ))
                }
                Ok(n) => read += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(Error::format(self.offset + read as u64, e.to_string())),
            }
        }
        self.offset += N as u64;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take::<4>(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take::<8>(what)?))
    }
}

pub fn read_params(r: &mut impl Read) -> Result<(QNetworkParams, SnapshotMeta)> {
    let mut dec = Decoder {
        inner: r,
        offset: 0,
    };
    let magic = dec.take::<8>("magic")?;
    if &magic != MAGIC {
        return Err(Error::format(0, "bad magic; not a parameter snapshot"));
    }
    let version = dec.u32("version")?;
    if version != VERSION {
        return Err(Error::format(
            8,
            format!("unsupported snapshot version {version} (expected {VERSION})"),
        ));
    }
    let dim_offset = dec.offset;
    let mut dims_raw = [0u32; 5];
    for (i, d) in dims_raw.iter_mut().enumerate() {
        *d = dec.u32("dimensions")?;
        if *d == 0 || *d > DIM_LIMIT {
            return Err(Error::format(
                dim_offset + 4 * i as u64,
                format!("implausible dimension {d:?}"),
            ));
        }
    }
    let dims = QNetDims {
        input: dims_raw[0] as usize,
        hidden: dims_raw[1] as usize,
        duel_hidden: dims_raw[2] as usize,
        actions: dims_raw[3] as usize,
        history: dims_raw[4] as usize,
    };
    let meta = SnapshotMeta {
        interval: dec.u64("interval index")?,
        slot: dec.u64("slot")?,
    };
    let count = dims.param_count();
    let mut flat = Vec::with_capacity(count);
    for i in 0..count {
        let at = dec.offset;
        let v = f64::from_le_bytes(dec.take::<8>("parameters")?);
        if !v.is_finite() {
            return Err(Error::format(at, format!("non-finite parameter {i}")));
        }
        flat.push(v);
    }
    // Exactly at the end?
    let mut probe = [0u8; 1];
    match dec.inner.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => {
            return Err(Error::format(
                dec.offset,
                "trailing bytes after parameter payload",
            ))
        }
        Err(e) => return Err(Error::format(dec.offset, e.to_string())),
    }
    let mut params = QNetworkParams::zeros(dims);
    params.set_from_flat(&flat);
    Ok((params, meta))
}

pub fn save_snapshot(path: &Path, params: &QNetworkParams, meta: SnapshotMeta) -> Result<()> {
    let mut bytes = Vec::new();
    write_params(&mut bytes, params, meta).expect("in-memory write cannot fail");
    atomic_write(path, &bytes)
}

pub fn load_snapshot(path: &Path) -> Result<(QNetworkParams, SnapshotMeta)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_params(&mut bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeeder;

    fn sample_params() -> QNetworkParams {
        let dims = QNetDims {
            input: 5,
            hidden: 7,
            duel_hidden: 3,
            actions: 6,
            history: 4,
        };
        let mut rng = StreamSeeder::new(77).stream("init");
        QNetworkParams::init(dims, &mut rng)
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let params = sample_params();
        let meta = SnapshotMeta {
            interval: 42,
            slot: 123_456,
        };
        let mut bytes = Vec::new();
        write_params(&mut bytes, &params, meta).unwrap();
        let (back, meta2) = read_params(&mut bytes.as_slice()).unwrap();
        assert_eq!(meta, meta2);
        let a = params.to_flat();
        let b = back.to_flat();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn header_only_file_is_a_format_error() {
        let params = sample_params();
        let mut bytes = Vec::new();
        write_params(&mut bytes, &params, SnapshotMeta::default()).unwrap();
        bytes.truncate(44); // magic + version + dims + meta, no payload
        let err = read_params(&mut bytes.as_slice()).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 44),
            other => panic!("expected format error, got {other}"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let err = read_params(&mut b"NOTASNAP".as_slice()).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }));
    }

    #[test]
    fn wrong_version_rejected() {
        let params = sample_params();
        let mut bytes = Vec::new();
        write_params(&mut bytes, &params, SnapshotMeta::default()).unwrap();
        bytes[8] = 9;
        let err = read_params(&mut bytes.as_slice()).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 8, .. }));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let params = sample_params();
        let mut bytes = Vec::new();
        write_params(&mut bytes, &params, SnapshotMeta::default()).unwrap();
        bytes.push(0);
        assert!(read_params(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = std::env::temp_dir().join(format!("specjam-snap-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.snap");
        let params = sample_params();
        save_snapshot(&path, &params, SnapshotMeta { interval: 3, slot: 9 }).unwrap();
        let (back, meta) = load_snapshot(&path).unwrap();
        assert_eq!(back, params);
        assert_eq!(meta.interval, 3);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
