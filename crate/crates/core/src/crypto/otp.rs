use super::CryptoError;

/// XOR pad; the key must be exactly as long as the message.
pub fn otp_encrypt(plaintext: &[u8], key: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if key.len() != plaintext.len() {
        return Err(CryptoError::Size {
            what: "OTP key",
            expected: plaintext.len(),
            got: key.len(),
        });
    }
    Ok(plaintext.iter().zip(key).map(|(m, k)| m ^ k).collect())
}

pub fn otp_decrypt(ciphertext: &[u8], key: &[u8]) -> Result<Vec<u8>, CryptoError> {
    otp_encrypt(ciphertext, key)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_plaintext_yields_key() {
        let k = [0xa5u8, 0x01, 0xff, 0x7e];
        assert_eq!(otp_encrypt(&[0; 4], &k).unwrap(), k);
    }

    #[test]
    fn self_cancellation() {
        let k = [9u8, 8, 7];
        assert_eq!(otp_encrypt(&k, &k).unwrap(), vec![0; 3]);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(otp_encrypt(&[1, 2], &[1]), Err(CryptoError::Size { .. })));
        assert!(otp_encrypt(&[], &[]).unwrap().is_empty());
    }
}
