//! Portable CSI container (`.csip`).
//!
//! Little-endian layout:
//!
//! ```text
//! offset  size  field
//!      0     8  magic "CSIPORT1"
//!      8     2  version (u16, currently 1)
//!     10     4  K subcarriers (u32)
//!     14     4  T samples (u32)
//!     18     8  freq_start, Hz (f64)
//!     26     8  freq_step, Hz (f64)
//!     34     2  subject_id length n (u16)
//!     36     n  subject_id, UTF-8
//!   36+n     4  sample_index (u32)
//!   40+n     1  hand (0 unspecified, 1 left, 2 right)
//!   41+n  16KT  payload: for k in 0..K, for t in 0..T: re (f64), im (f64)
//! ```
//!
//! Frequencies are reconstructed as `freq_start + k * freq_step`, so only
//! matrices on an exactly uniform grid can be written.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{CsiMatrix, Hand, SubjectLabel};

pub const MAGIC: &[u8; 8] = b"CSIPORT1";
pub const VERSION: u16 = 1;

/// Serializes a labelled matrix into the portable byte layout.
pub fn encode(m: &CsiMatrix, label: &SubjectLabel) -> Result<Vec<u8>> {
    let k = m.subcarriers();
    let t = m.samples();
    let freqs = m.freqs();
    let start = freqs[0];
    let step = (freqs[k - 1] - freqs[0]) / (k - 1) as f64;
    if freqs
        .iter()
        .enumerate()
        .any(|(i, &f)| (start + i as f64 * step).to_bits() != f.to_bits())
    {
        return Err(Error::NonUniformFrequencies);
    }
    let id = label.subject_id.as_bytes();
    let id_len = u16::try_from(id.len()).map_err(|_| Error::Config("subject_id longer than 65535 bytes".into()))?;

    let mut out = Vec::with_capacity(41 + id.len() + 16 * k * t);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(k as u32).to_le_bytes());
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&start.to_le_bytes());
    out.extend_from_slice(&step.to_le_bytes());
    out.extend_from_slice(&id_len.to_le_bytes());
    out.extend_from_slice(id);
    out.extend_from_slice(&label.sample_index.to_le_bytes());
    out.push(label.hand.code());
    for v in m.values() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::LengthMismatch {
                expected: self.pos + n,
                found: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses the portable byte layout. `origin` is used in error messages.
pub fn decode(bytes: &[u8], origin: &Path) -> Result<(CsiMatrix, SubjectLabel)> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic(origin.to_path_buf()));
    }
    let mut r = Reader { buf: bytes, pos: 8 };
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let k = r.u32()? as usize;
    let t = r.u32()? as usize;
    let start = r.f64()?;
    let step = r.f64()?;
    let id_len = r.u16()? as usize;
    let subject_id = String::from_utf8(r.take(id_len)?.to_vec())
        .map_err(|_| Error::Config(format!("{}: subject_id is not UTF-8", origin.display())))?;
    let sample_index = r.u32()?;
    let hand_code = r.take(1)?[0];
    let hand = Hand::from_code(hand_code)
        .ok_or_else(|| Error::Config(format!("{}: unknown hand code {hand_code}", origin.display())))?;

    let expected = k
        .checked_mul(t)
        .and_then(|n| n.checked_mul(16))
        .ok_or_else(|| Error::Shape(format!("{k}x{t} matrix is too large")))?;
    let payload = &bytes[r.pos..];
    if payload.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    let mut m = CsiMatrix::new(k, t, CsiMatrix::uniform_freqs(start, step, k), values)?;
    m.meta.source_id = origin.display().to_string();
    let label = SubjectLabel::new(subject_id, sample_index, hand)?;
    Ok((m, label))
}

pub fn write_portable(m: &CsiMatrix, label: &SubjectLabel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(m, label)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_portable(path: impl AsRef<Path>) -> Result<(CsiMatrix, SubjectLabel)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
