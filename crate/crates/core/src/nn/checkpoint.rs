//! Binary network checkpoints.
//!
//! Layout: the 6-byte magic `MEPNN1`, a `u32` layer-size count, that many
//! `u32` sizes, then for every layer its weights (row-major) followed by its
//! biases as little-endian `f64`. All integers are little-endian. The output
//! activation is not stored; the reader supplies it.

use std::io::{Read, Write};

use super::{MlpParams, OutputActivation};
use crate::error::{MepError, Result};

pub const NN_MAGIC: &[u8; 6] = b"MEPNN1";

pub(crate) fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| MepError::Checkpoint(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, vals: &[f64]) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

pub(crate) fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 6]) -> Result<()> {
    let mut m = [0u8; 6];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(MepError::Checkpoint(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&m)
        )));
    }
    Ok(())
}

pub fn write_params<W: Write>(w: &mut W, params: &MlpParams) -> Result<()> {
    params.validate()?;
    w.write_all(NN_MAGIC)?;
    write_u32(w, params.layer_sizes.len())?;
    for &s in &params.layer_sizes {
        write_u32(w, s)?;
    }
    for (wt, b) in params.weights.iter().zip(&params.biases) {
        write_f64s(w, wt)?;
        write_f64s(w, b)?;
    }
    Ok(())
}

pub fn read_params<R: Read>(r: &mut R, output_activation: OutputActivation) -> Result<MlpParams> {
    expect_magic(r, NN_MAGIC)?;
    let n = read_u32(r)?;
    if !(2..=64).contains(&n) {
        return Err(MepError::Checkpoint(format!("implausible layer count {n}")));
    }
    let sizes = (0..n).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
    let mut params = MlpParams::zeros(&sizes, output_activation)?;
    for l in 0..params.num_layers() {
        params.weights[l] = read_f64s(r, sizes[l] * sizes[l + 1])?;
        params.biases[l] = read_f64s(r, sizes[l + 1])?;
    }
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn header_layout() {
        let p = MlpParams::zeros(&[2, 1], OutputActivation::Identity).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        assert_eq!(&buf[..6], b"MEPNN1");
        assert_eq!(&buf[6..10], &2u32.to_le_bytes());
        assert_eq!(&buf[10..14], &2u32.to_le_bytes());
        assert_eq!(&buf[14..18], &1u32.to_le_bytes());
        assert_eq!(buf.len(), 18 + 3 * 8);
    }

    #[test]
    fn roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = MlpParams::init(&[6, 16, 16, 2], OutputActivation::Tanh, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        let q = read_params(&mut buf.as_slice(), OutputActivation::Tanh).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let p = MlpParams::zeros(&[2, 1], OutputActivation::Identity).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_params(&mut bad.as_slice(), OutputActivation::Identity).is_err());
        buf.truncate(buf.len() - 1);
        assert!(read_params(&mut buf.as_slice(), OutputActivation::Identity).is_err());
    }
}
