use super::CryptoError;

fn check_precision(precision_bits: u32) -> Result<(), CryptoError> {
    match precision_bits {
        32 | 64 => Ok(()),
        p => Err(CryptoError::Precision(p)),
    }
}

/// Big-endian IEEE-754 encoding of `values` at 32 or 64 bits each. Non-finite values
/// are rejected.
pub fn encode_signals(values: &[f64], precision_bits: u32) -> Result<Vec<u8>, CryptoError> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(CryptoError::NonFinite(i));
    }
    encode_signals_lossy(values, precision_bits)
}

/// As [`encode_signals`] but passes NaN and infinities through.
pub fn encode_signals_lossy(values: &[f64], precision_bits: u32) -> Result<Vec<u8>, CryptoError> {
    check_precision(precision_bits)?;
    let mut out = Vec::with_capacity(values.len() * precision_bits as usize / 8);
    for &v in values {
        if precision_bits == 32 {
            out.extend_from_slice(&(v as f32).to_be_bytes());
        } else {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn decode_signals(bytes: &[u8], precision_bits: u32) -> Result<Vec<f64>, CryptoError> {
    check_precision(precision_bits)?;
    let width = precision_bits as usize / 8;
    if !bytes.len().is_multiple_of(width) {
        return Err(CryptoError::Malformed(format!(
            "{} bytes is not a multiple of {width}",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(width)
        .map(|c| {
            if width == 4 {
                f32::from_be_bytes(c.try_into().expect("chunk width")) as f64
            } else {
                f64::from_be_bytes(c.try_into().expect("chunk width"))
            }
        })
        .collect())
}
