//! `MXB1` dense matrix files: an ASCII header `MXB1 <rows> <cols>\n`
//! followed by `rows * cols` little-endian IEEE-754 doubles in row-major
//! order.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAGIC: &str = "MXB1";

pub fn write_mxb<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    write!(w, "{MAGIC} {} {}\n", m.nrows(), m.ncols())?;
    let mut buf = Vec::with_capacity(8 * m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn to_bytes(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::new();
    write_mxb(&mut out, m).expect("writing to a Vec cannot fail");
    out
}

/// Reads one matrix, consuming exactly its bytes.
pub fn read_mxb<R: Read>(r: &mut R) -> Result<DMatrix<f64>> {
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > 64 {
            return Err(Error::Parse("MXB1 header too long".into()));
        }
    }
    let header = String::from_utf8(header).map_err(|_| Error::Parse("MXB1 header is not ASCII".into()))?;
    let mut it = header.split(' ');
    if it.next() != Some(MAGIC) {
        return Err(Error::Parse(format!("bad MXB1 magic in `{header}`")));
    }
    let mut dim = || -> Result<usize> {
        it.next()
            .ok_or_else(|| Error::Parse(format!("truncated MXB1 header `{header}`")))?
            .parse()
            .map_err(|e| Error::Parse(format!("MXB1 dimension: {e}")))
    };
    let (rows, cols) = (dim()?, dim()?);
    let len = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Parse("MXB1 dimensions overflow".into()))?;
    let mut data = vec![0u8; len];
    r.read_exact(&mut data)?;
    let vals: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &vals))
}

pub fn from_bytes(bytes: &[u8]) -> Result<DMatrix<f64>> {
    let mut cur = bytes;
    let m = read_mxb(&mut cur)?;
    if !cur.is_empty() {
        return Err(Error::Parse(format!("{} trailing bytes after MXB1 matrix", cur.len())));
    }
    Ok(m)
}

pub fn save(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, to_bytes(m))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<DMatrix<f64>> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_length() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = to_bytes(&m);
        assert!(b.starts_with(b"MXB1 2 3\n"));
        assert_eq!(b.len(), 9 + 48);
        assert_eq!(&b[9..17], &1.0f64.to_le_bytes());
        assert_eq!(&b[17..25], &2.0f64.to_le_bytes());
    }

    #[test]
    fn signed_zero_survives() {
        let m = DMatrix::from_row_slice(1, 2, &[-0.0, 0.0]);
        let back = from_bytes(&to_bytes(&m)).unwrap();
        assert!(back[(0, 0)].is_sign_negative());
        assert!(back[(0, 1)].is_sign_positive());
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut b = to_bytes(&DMatrix::from_element(2, 2, 1.0));
        b.pop();
        assert!(from_bytes(&b).is_err());
    }
}
