//! Operator containers and CSV helpers.
//!
//! Binary layout: magic `ITI1`, `u32` rows, `u32` cols (little-endian), then
//! row-major complex128 entries as `(re, im)` little-endian `f64` pairs.

use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::C64;

pub const MAGIC: &[u8; 4] = b"ITI1";

pub fn write_operator(out: &mut impl Write, m: &Array2<C64>) -> Result<()> {
    let (rows, cols) = m.dim();
    let r = u32::try_from(rows).map_err(|_| Error::Format(format!("{rows} rows")))?;
    let c = u32::try_from(cols).map_err(|_| Error::Format(format!("{cols} cols")))?;
    out.write_all(MAGIC)?;
    out.write_all(&r.to_le_bytes())?;
    out.write_all(&c.to_le_bytes())?;
    let mut buf = Vec::with_capacity(16 * rows * cols);
    for v in m.iter() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_operator(input: &mut impl Read) -> Result<Array2<C64>> {
    let mut head = [0u8; 12];
    input
        .read_exact(&mut head)
        .map_err(|e| Error::Format(format!("short header: {e}")))?;
    if &head[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let rows = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != 16 * rows * cols {
        return Err(Error::Format(format!(
            "expected {} payload bytes for {rows}x{cols}, found {}",
            16 * rows * cols,
            body.len()
        )));
    }
    let vals: Vec<C64> = body
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    Array2::from_shape_vec((rows, cols), vals).map_err(|e| Error::Format(e.to_string()))
}

/// Shortest float text that reads back to the same `f64` (17 significant
/// digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `row,col,re,im` per entry.
pub fn write_operator_csv(out: &mut impl Write, m: &Array2<C64>) -> Result<()> {
    writeln!(out, "row,col,re,im")?;
    for ((r, c), v) in m.indexed_iter() {
        writeln!(out, "{r},{c},{},{}", fmt_f64(v.re), fmt_f64(v.im))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let m = Array2::from_shape_fn((3, 2), |(i, j)| C64::new(i as f64 / 3.0, -(j as f64).exp()));
        let mut buf = Vec::new();
        write_operator(&mut buf, &m).unwrap();
        assert_eq!(&buf[..4], b"ITI1");
        assert_eq!(buf.len(), 12 + 16 * 6);
        let back = read_operator(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn corrupt_input_rejected() {
        let mut buf = Vec::new();
        write_operator(&mut buf, &Array2::zeros((2, 2))).unwrap();
        buf[0] = b'X';
        assert!(read_operator(&mut buf.as_slice()).is_err());
        let mut short = Vec::new();
        write_operator(&mut short, &Array2::zeros((2, 2))).unwrap();
        short.pop();
        assert!(read_operator(&mut short.as_slice()).is_err());
    }

    #[test]
    fn float_text_roundtrips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
