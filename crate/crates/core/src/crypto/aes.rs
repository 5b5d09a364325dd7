use aes::cipher::{block_padding::Pkcs7, BlockDecryptMut, BlockEncryptMut, KeyIvInit};

use super::CryptoError;

type Enc = cbc::Encryptor<aes::Aes256>;
type Dec = cbc::Decryptor<aes::Aes256>;

pub const AES_BLOCK_BYTES: usize = 16;

fn check(key: &[u8], iv: &[u8]) -> Result<(), CryptoError> {
    if key.len() != 32 {
        return Err(CryptoError::Size {
            what: "AES-256 key",
            expected: 32,
            got: key.len(),
        });
    }
    if iv.len() != AES_BLOCK_BYTES {
        return Err(CryptoError::Size {
            what: "AES IV",
            expected: AES_BLOCK_BYTES,
            got: iv.len(),
        });
    }
    Ok(())
}

/// AES-256-CBC with PKCS#7 padding.
pub fn aes256_encrypt(plaintext: &[u8], key: &[u8], iv: &[u8]) -> Result<Vec<u8>, CryptoError> {
    check(key, iv)?;
    let enc = Enc::new_from_slices(key, iv).expect("sizes checked");
    Ok(enc.encrypt_padded_vec_mut::<Pkcs7>(plaintext))
}

pub fn aes256_decrypt(ciphertext: &[u8], key: &[u8], iv: &[u8]) -> Result<Vec<u8>, CryptoError> {
    check(key, iv)?;
    let dec = Dec::new_from_slices(key, iv).expect("sizes checked");
    dec.decrypt_padded_vec_mut::<Pkcs7>(ciphertext)
        .map_err(|_| CryptoError::Integrity)
}
