//! Binary 16-bit portable graymap (P5) output.

use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Encodes `values` (row-major, `width` per row) scaled so the maximum maps
/// to 65535. Samples are big-endian. An all-zero image stays zero.
pub fn encode_pgm16<T: Real>(values: &[T], width: usize, height: usize) -> Result<Vec<u8>> {
    if values.len() != width * height || width == 0 {
        return Err(Error::ContractViolation {
            op: "encode_pgm16",
            msg: format!("{} samples for a {}x{} image", values.len(), width, height),
        });
    }
    let peak = values
        .iter()
        .map(|v| v.to_f64_lossy())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let mut out = Vec::with_capacity(values.len() * 2 + 32);
    write!(out, "P5\n{} {}\n65535\n", width, height)?;
    for v in values {
        let x = v.to_f64_lossy();
        let q = if peak > 0.0 && x.is_finite() {
            (x.max(0.0) / peak * 65535.0).round() as u16
        } else {
            0
        };
        out.extend_from_slice(&q.to_be_bytes());
    }
    Ok(out)
}

/// Parses an image written by [`encode_pgm16`].
pub fn decode_pgm16(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let bad = |m: &str| Error::Parse(format!("pgm: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header not ascii"))?);
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(bad("not a 16-bit P5 image"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let body = bytes.get(pos..).ok_or_else(|| bad("missing data"))?;
    if body.len() != w * h * 2 {
        return Err(bad("data length mismatch"));
    }
    let px = body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((w, h, px))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let v = vec![0.0, 0.5, 1.0, 0.25, 0.0, 2.0];
        let bytes = encode_pgm16(&v, 3, 2).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n65535\n"));
        let (w, h, px) = decode_pgm16(&bytes).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(px, vec![0, 16384, 32768, 8192, 0, 65535]);
    }

    #[test]
    fn size_mismatch() {
        assert!(encode_pgm16(&[1.0f64; 5], 3, 2).is_err());
    }
}
