//! `KAE1` parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "KAE1"
//! repeated until end of file:
//!   u32 name length, UTF-8 name bytes
//!   u32 rows, u32 cols
//!   rows*cols f64 values, row-major
//! ```

use std::io::{Read, Write};

use crate::error::{KaeError, Result};
use crate::linalg::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"KAE1";

pub fn write_checkpoint<W: Write>(mut out: W, params: &[(String, &Matrix)]) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    for (name, m) in params {
        let bytes = name.as_bytes();
        out.write_all(&(bytes.len() as u32).to_le_bytes())?;
        out.write_all(bytes)?;
        out.write_all(&(m.rows() as u32).to_le_bytes())?;
        out.write_all(&(m.cols() as u32).to_le_bytes())?;
        for v in m.as_slice() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Vec<(String, Matrix)>> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(KaeError::Format { offset: 0, message: "expected magic \"KAE1\"".into() });
    }
    let mut params = Vec::new();
    while cur.pos < buf.len() {
        let start = cur.pos as u64;
        let len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(len, "name")?)
            .map_err(|_| KaeError::Format { offset: start + 4, message: "name is not UTF-8".into() })?
            .to_owned();
        let rows = cur.u32("rows")? as usize;
        let cols = cur.u32("cols")? as usize;
        let offset = cur.pos as u64;
        let raw = cur.take(rows * cols * 8, "values")?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let m = Matrix::from_vec(rows, cols, data)
            .map_err(|e| KaeError::Format { offset, message: e.to_string() })?;
        params.push((name, m));
    }
    Ok(params)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(KaeError::Format {
                offset: self.pos as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}
