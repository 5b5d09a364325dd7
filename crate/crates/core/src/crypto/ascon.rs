use ascon_aead::aead::{AeadInPlace, KeyInit};
use ascon_aead::{Ascon128, Ascon128a, Ascon80pq, Nonce, Tag};

use super::CryptoError;
use crate::Algorithm;

pub const ASCON_TAG_BYTES: usize = 16;
const NONCE_BYTES: usize = 16;

fn key_bytes(variant: Algorithm) -> Result<usize, CryptoError> {
    match variant {
        Algorithm::Ascon128 | Algorithm::Ascon128a => Ok(16),
        Algorithm::Ascon80pq => Ok(20),
        other => Err(CryptoError::Unsupported(other)),
    }
}

fn check(variant: Algorithm, key: &[u8], nonce: &[u8]) -> Result<(), CryptoError> {
    let expected = key_bytes(variant)?;
    if key.len() != expected {
        return Err(CryptoError::Size {
            what: "ASCON key",
            expected,
            got: key.len(),
        });
    }
    if nonce.len() != NONCE_BYTES {
        return Err(CryptoError::Size {
            what: "ASCON nonce",
            expected: NONCE_BYTES,
            got: nonce.len(),
        });
    }
    Ok(())
}

fn seal_with<C: KeyInit + AeadInPlace>(
    key: &[u8],
    nonce: &[u8],
    ad: &[u8],
    buf: &mut [u8],
) -> [u8; ASCON_TAG_BYTES] {
    let cipher = C::new_from_slice(key).expect("size checked");
    let tag = cipher
        .encrypt_in_place_detached(Nonce::<C>::from_slice(nonce), ad, buf)
        .expect("in-memory buffer");
    tag.as_slice().try_into().expect("128-bit tag")
}

fn open_with<C: KeyInit + AeadInPlace>(
    key: &[u8],
    nonce: &[u8],
    ad: &[u8],
    buf: &mut [u8],
    tag: &[u8; ASCON_TAG_BYTES],
) -> Result<(), CryptoError> {
    let cipher = C::new_from_slice(key).expect("size checked");
    cipher
        .decrypt_in_place_detached(Nonce::<C>::from_slice(nonce), ad, buf, Tag::<C>::from_slice(tag))
        .map_err(|_| CryptoError::Integrity)
}

/// ASCON AEAD seal; returns the ciphertext and the detached 128-bit tag.
pub fn ascon_encrypt(
    variant: Algorithm,
    plaintext: &[u8],
    key: &[u8],
    nonce: &[u8],
    associated_data: &[u8],
) -> Result<(Vec<u8>, [u8; ASCON_TAG_BYTES]), CryptoError> {
    check(variant, key, nonce)?;
    let mut buf = plaintext.to_vec();
    let tag = match variant {
        Algorithm::Ascon128 => seal_with::<Ascon128>(key, nonce, associated_data, &mut buf),
        Algorithm::Ascon128a => seal_with::<Ascon128a>(key, nonce, associated_data, &mut buf),
        Algorithm::Ascon80pq => seal_with::<Ascon80pq>(key, nonce, associated_data, &mut buf),
        other => return Err(CryptoError::Unsupported(other)),
    };
    Ok((buf, tag))
}

pub fn ascon_decrypt(
    variant: Algorithm,
    ciphertext: &[u8],
    tag: &[u8; ASCON_TAG_BYTES],
    key: &[u8],
    nonce: &[u8],
    associated_data: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    check(variant, key, nonce)?;
    let mut buf = ciphertext.to_vec();
    match variant {
        Algorithm::Ascon128 => open_with::<Ascon128>(key, nonce, associated_data, &mut buf, tag)?,
        Algorithm::Ascon128a => open_with::<Ascon128a>(key, nonce, associated_data, &mut buf, tag)?,
        Algorithm::Ascon80pq => open_with::<Ascon80pq>(key, nonce, associated_data, &mut buf, tag)?,
        other => return Err(CryptoError::Unsupported(other)),
    }
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    const VARIANTS: [Algorithm; 3] = [Algorithm::Ascon128, Algorithm::Ascon128a, Algorithm::Ascon80pq];

    #[test]
    fn round_trip_all_variants() {
        for v in VARIANTS {
            let key = vec![7u8; key_bytes(v).unwrap()];
            let nonce = [1u8; 16];
            let (ct, tag) = ascon_encrypt(v, b"reactor power 98.2", &key, &nonce, b"hdr").unwrap();
            assert_eq!(ct.len(), 18);
            let pt = ascon_decrypt(v, &ct, &tag, &key, &nonce, b"hdr").unwrap();
            assert_eq!(pt, b"reactor power 98.2");
        }
    }

    #[test]
    fn flipped_bit_is_rejected() {
        let v = Algorithm::Ascon128a;
        let key = [9u8; 16];
        let nonce = [2u8; 16];
        let (mut ct, tag) = ascon_encrypt(v, b"abc", &key, &nonce, b"").unwrap();
        ct[1] ^= 0x10;
        assert_eq!(ascon_decrypt(v, &ct, &tag, &key, &nonce, b""), Err(CryptoError::Integrity));
    }

    #[test]
    fn size_errors_are_distinct() {
        let err = ascon_encrypt(Algorithm::Ascon80pq, b"", &[0; 16], &[0; 16], b"").unwrap_err();
        assert!(matches!(err, CryptoError::Size { expected: 20, .. }));
        let err = ascon_encrypt(Algorithm::Ascon128, b"", &[0; 16], &[0; 12], b"").unwrap_err();
        assert!(matches!(err, CryptoError::Size { .. }));
        assert!(matches!(
            ascon_encrypt(Algorithm::Otp, b"", &[], &[], b""),
            Err(CryptoError::Unsupported(Algorithm::Otp))
        ));
    }
}
