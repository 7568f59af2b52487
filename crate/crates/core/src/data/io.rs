//! `KDS1` dataset files. All integers and floats little-endian.
//!
//! ```text
//! header      "KDS1", u32 version, u32 n_traj, u32 state_dim, f64 dt
//! trajectory  u32 length, u8 split tag (0 train, 1 val, 2 test, 255 none),
//!             length*state_dim f64 states, row-major
//! footer      u8 has_stats; if 1: state_dim f64 means, state_dim f64 stds,
//!             state_dim u8 constant flags
//!             u32 metadata length, metadata as a JSON object of strings
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, Split, Standardization, Trajectory};
use crate::error::{KaeError, Result};
use crate::linalg::Matrix;

pub const DATASET_MAGIC: &[u8; 4] = b"KDS1";
pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset<W: Write>(out: W, data: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(out);
    let dim = data.dim();
    out.write_all(DATASET_MAGIC)?;
    out.write_all(&DATASET_VERSION.to_le_bytes())?;
    out.write_all(&(data.len() as u32).to_le_bytes())?;
    out.write_all(&(dim as u32).to_le_bytes())?;
    out.write_all(&data.dt.to_le_bytes())?;
    for (t, split) in data.trajectories.iter().zip(&data.splits) {
        out.write_all(&(t.len() as u32).to_le_bytes())?;
        out.write_all(&[split.tag()])?;
        for v in t.states.as_slice() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    match &data.stats {
        Some(s) => {
            out.write_all(&[1])?;
            for v in s.mean.iter().chain(&s.std) {
                out.write_all(&v.to_le_bytes())?;
            }
            let flags: Vec<u8> = s.constant.iter().map(|&c| u8::from(c)).collect();
            out.write_all(&flags)?;
        }
        None => out.write_all(&[0])?,
    }
    let meta = serde_json::to_vec(&data.metadata)?;
    out.write_all(&(meta.len() as u32).to_le_bytes())?;
    out.write_all(&meta)?;
    out.flush()?;
    Ok(())
}

pub fn write_dataset_file(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    write_dataset(File::create(path)?, data)
}

pub fn read_dataset_file(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Parses a whole `KDS1` stream; nothing is returned unless every byte
/// is consumed cleanly.
pub fn read_dataset<R: Read>(mut input: R) -> Result<Dataset> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let mut cur = Reader { buf: &buf, pos: 0 };

    let magic = cur.take(4, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(fail(0, format!("expected magic \"KDS1\", found {:?}", String::from_utf8_lossy(magic))));
    }
    let version_at = cur.pos;
    let version = cur.u32("version")?;
    if version != DATASET_VERSION {
        return Err(fail(version_at, format!("unsupported version {version}")));
    }
    let n_traj = cur.u32("trajectory count")? as usize;
    let dim = cur.u32("state dimension")? as usize;
    let dt_at = cur.pos;
    let dt = cur.f64("dt")?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(fail(dt_at, format!("dt must be positive, got {dt}")));
    }

    let mut trajectories = Vec::with_capacity(n_traj.min(1 << 16));
    let mut splits = Vec::with_capacity(n_traj.min(1 << 16));
    for i in 0..n_traj {
        let at = cur.pos;
        let len = cur.u32("trajectory length")? as usize;
        let tag_at = cur.pos;
        let tag = cur.take(1, "split tag")?[0];
        let split = Split::from_tag(tag).ok_or_else(|| fail(tag_at, format!("unknown split tag {tag}")))?;
        let values = cur.f64s(len * dim, "states")?;
        let states = Matrix::from_vec(len, dim, values).map_err(|e| fail(at, format!("trajectory {i}: {e}")))?;
        trajectories.push(Trajectory::new(states).map_err(|e| fail(at, format!("trajectory {i}: {e}")))?);
        splits.push(split);
    }

    let flag_at = cur.pos;
    let stats = match cur.take(1, "statistics flag")?[0] {
        0 => None,
        1 => {
            let mean = cur.f64s(dim, "feature means")?;
            let std = cur.f64s(dim, "feature stds")?;
            let constant = cur.take(dim, "constant flags")?.iter().map(|&b| b != 0).collect();
            Some(Standardization { mean, std, constant })
        }
        other => return Err(fail(flag_at, format!("invalid statistics flag {other}"))),
    };

    let meta_len = cur.u32("metadata length")? as usize;
    let meta_at = cur.pos;
    let meta_bytes = cur.take(meta_len, "metadata")?;
    let metadata: BTreeMap<String, String> =
        serde_json::from_slice(meta_bytes).map_err(|e| fail(meta_at, format!("metadata: {e}")))?;
    if cur.pos != buf.len() {
        return Err(fail(cur.pos, format!("{} trailing bytes", buf.len() - cur.pos)));
    }

    let mut data = Dataset::new(dt, trajectories, metadata).map_err(|e| fail(0, e.to_string()))?;
    data.splits = splits;
    data.stats = stats;
    Ok(data)
}

fn fail(offset: usize, message: String) -> KaeError {
    KaeError::Format { offset: offset as u64, message }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(fail(self.pos, format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n.checked_mul(8).ok_or_else(|| fail(self.pos, format!("{what} length overflows")))?;
        let raw = self.take(bytes, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{simulate_pendulum, PendulumParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Dataset {
        let p = PendulumParams { steps: 20, ..PendulumParams::default() };
        simulate_pendulum(&p, 8, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap()
            .standardize_split((0.5, 0.25, 0.25))
            .unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let d = sample();
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &d).unwrap();
        assert_eq!(read_dataset(bytes.as_slice()).unwrap(), d);

        let raw = d.inverse_transform();
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &raw).unwrap();
        assert_eq!(read_dataset(bytes.as_slice()).unwrap(), raw);
    }

    #[test]
    fn truncated_file_is_rejected_at_every_length() {
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &sample()).unwrap();
        for cut in [0, 3, 10, 30, bytes.len() / 2, bytes.len() - 1] {
            match read_dataset(&bytes[..cut]) {
                Err(KaeError::Format { offset, .. }) => assert!(offset as usize <= cut),
                other => panic!("cut at {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn magic_mismatch_names_expected_magic() {
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &sample()).unwrap();
        bytes[..4].copy_from_slice(b"KAE1");
        let err = read_dataset(bytes.as_slice()).unwrap_err();
        assert!(matches!(err, KaeError::Format { offset: 0, .. }));
        assert!(err.to_string().contains("KDS1"));
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &sample()).unwrap();
        let len = bytes.len();
        bytes.push(0);
        match read_dataset(bytes.as_slice()) {
            Err(KaeError::Format { offset, .. }) => assert_eq!(offset as usize, len),
            other => panic!("{other:?}"),
        }
    }
}
