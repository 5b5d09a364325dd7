use uuid::Uuid;

use super::{aes256_decrypt, aes256_encrypt, ascon_decrypt, ascon_encrypt, otp_encrypt, CryptoError, ASCON_TAG_BYTES};
use crate::Algorithm;

/// Ciphertext plus the metadata the receiver needs to fetch the key and decrypt.
///
/// Wire layout: tag (1) | key id (16) | iv length (1) | iv | ciphertext length (4, BE) |
/// ciphertext | auth tag (16, AEAD only).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherEnvelope {
    pub algorithm: Algorithm,
    pub key_id: Uuid,
    pub iv_or_nonce: Vec<u8>,
    pub ciphertext: Vec<u8>,
    pub auth_tag: Option<[u8; ASCON_TAG_BYTES]>,
}

/// Header bytes authenticated by the AEAD variants.
pub fn associated_data(algorithm: Algorithm, key_id: &Uuid) -> [u8; 17] {
    let mut ad = [0u8; 17];
    ad[0] = algorithm.wire_tag();
    ad[1..].copy_from_slice(key_id.as_bytes());
    ad
}

/// Key-material bytes one encryption consumes: the pad for OTP, key then IV/nonce otherwise.
pub fn material_bytes(algorithm: Algorithm, plaintext_len: usize) -> usize {
    match algorithm.fixed_key_material_bits() {
        None => plaintext_len,
        Some(bits) => bits as usize / 8,
    }
}

fn split(algorithm: Algorithm, material: &[u8]) -> Result<(&[u8], &[u8]), CryptoError> {
    let spec = algorithm.spec();
    let key = spec.key_bits.expect("fixed-key cipher") as usize / 8;
    let iv = spec.iv_or_nonce_bits as usize / 8;
    if material.len() != key + iv {
        return Err(CryptoError::Size {
            what: "key material",
            expected: key + iv,
            got: material.len(),
        });
    }
    Ok(material.split_at(key))
}

/// Encrypts `plaintext` with freshly delivered key material identified by `key_id`.
pub fn seal(
    algorithm: Algorithm,
    key_id: Uuid,
    material: &[u8],
    plaintext: &[u8],
) -> Result<CipherEnvelope, CryptoError> {
    let (iv_or_nonce, ciphertext, auth_tag) = match algorithm {
        Algorithm::Otp => (Vec::new(), otp_encrypt(plaintext, material)?, None),
        Algorithm::Aes256 => {
            let (key, iv) = split(algorithm, material)?;
            (iv.to_vec(), aes256_encrypt(plaintext, key, iv)?, None)
        }
        Algorithm::Ascon128 | Algorithm::Ascon128a | Algorithm::Ascon80pq => {
            let (key, nonce) = split(algorithm, material)?;
            let ad = associated_data(algorithm, &key_id);
            let (ct, tag) = ascon_encrypt(algorithm, plaintext, key, nonce, &ad)?;
            (nonce.to_vec(), ct, Some(tag))
        }
    };
    Ok(CipherEnvelope {
        algorithm,
        key_id,
        iv_or_nonce,
        ciphertext,
        auth_tag,
    })
}

/// Decrypts with the material fetched by key ID. The carried IV/nonce must match the
/// one derived from the material.
pub fn open(env: &CipherEnvelope, material: &[u8]) -> Result<Vec<u8>, CryptoError> {
    match env.algorithm {
        Algorithm::Otp => otp_encrypt(&env.ciphertext, material),
        Algorithm::Aes256 => {
            let (key, iv) = split(env.algorithm, material)?;
            if iv != env.iv_or_nonce.as_slice() {
                return Err(CryptoError::Integrity);
            }
            aes256_decrypt(&env.ciphertext, key, iv)
        }
        alg => {
            let (key, nonce) = split(alg, material)?;
            let tag = env
                .auth_tag
                .ok_or_else(|| CryptoError::Malformed("AEAD envelope without tag".into()))?;
            let ad = associated_data(alg, &env.key_id);
            ascon_decrypt(alg, &env.ciphertext, &tag, key, &env.iv_or_nonce, &ad).and_then(|pt| {
                if nonce == env.iv_or_nonce.as_slice() {
                    Ok(pt)
                } else {
                    Err(CryptoError::Integrity)
                }
            })
        }
    }
}

impl CipherEnvelope {
    pub fn encoded_len(&self) -> usize {
        1 + 16 + 1 + self.iv_or_nonce.len() + 4 + self.ciphertext.len() + self.auth_tag.map_or(0, |t| t.len())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.algorithm.wire_tag());
        out.extend_from_slice(self.key_id.as_bytes());
        out.push(u8::try_from(self.iv_or_nonce.len()).expect("IV fits one length byte"));
        out.extend_from_slice(&self.iv_or_nonce);
        out.extend_from_slice(&u32::try_from(self.ciphertext.len()).expect("ciphertext under 4 GiB").to_be_bytes());
        out.extend_from_slice(&self.ciphertext);
        if let Some(tag) = &self.auth_tag {
            out.extend_from_slice(tag);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut rest = bytes;
        let mut take = |n: usize, what: &str| -> Result<&[u8], CryptoError> {
            if rest.len() < n {
                return Err(CryptoError::Malformed(format!("truncated {what}")));
            }
            let (head, tail) = rest.split_at(n);
            rest = tail;
            Ok(head)
        };
        let tag = take(1, "algorithm tag")?[0];
        let algorithm = Algorithm::from_wire_tag(tag)
            .ok_or_else(|| CryptoError::Malformed(format!("unknown algorithm tag {tag:#04x}")))?;
        let key_id = Uuid::from_slice(take(16, "key id")?).expect("16 bytes");
        let iv_len = take(1, "iv length")?[0] as usize;
        let iv_or_nonce = take(iv_len, "iv")?.to_vec();
        let ct_len = u32::from_be_bytes(take(4, "ciphertext length")?.try_into().expect("4 bytes")) as usize;
        let ciphertext = take(ct_len, "ciphertext")?.to_vec();
        let auth_tag = if algorithm.spec().aead {
            Some(take(ASCON_TAG_BYTES, "auth tag")?.try_into().expect("16 bytes"))
        } else {
            None
        };
        if !rest.is_empty() {
            return Err(CryptoError::Malformed(format!("{} trailing bytes", rest.len())));
        }
        Ok(Self {
            algorithm,
            key_id,
            iv_or_nonce,
            ciphertext,
            auth_tag,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn material(alg: Algorithm, len: usize) -> Vec<u8> {
        (0..material_bytes(alg, len)).map(|i| (i * 37 + 11) as u8).collect()
    }

    #[test]
    fn material_sizes_match_demand() {
        assert_eq!(material_bytes(Algorithm::Otp, 8000) * 8, 64_000);
        assert_eq!(material_bytes(Algorithm::Aes256, 8000) * 8, 384);
        assert_eq!(material_bytes(Algorithm::Ascon128, 8000) * 8, 256);
        assert_eq!(material_bytes(Algorithm::Ascon128a, 1) * 8, 256);
        assert_eq!(material_bytes(Algorithm::Ascon80pq, 0) * 8, 288);
    }

    #[test]
    fn seal_open_round_trip_and_wire_format() {
        let pt: Vec<u8> = (0..272u32).map(|i| i as u8).collect();
        for alg in Algorithm::ALL {
            let id = Uuid::from_u128(0x0123_4567_89ab_cdef_0011_2233_4455_6677 + alg.wire_tag() as u128);
            let m = material(alg, pt.len());
            let env = seal(alg, id, &m, &pt).unwrap();
            let wire = env.to_bytes();
            assert_eq!(wire.len(), env.encoded_len());
            assert_eq!(wire[0], alg.wire_tag());
            assert_eq!(&wire[1..17], id.as_bytes());
            let back = CipherEnvelope::from_bytes(&wire).unwrap();
            assert_eq!(back, env);
            assert_eq!(open(&back, &m).unwrap(), pt);
        }
    }

    #[test]
    fn aead_binds_key_id() {
        let alg = Algorithm::Ascon80pq;
        let m = material(alg, 0);
        let mut env = seal(alg, Uuid::from_u128(1), &m, b"rod position").unwrap();
        env.key_id = Uuid::from_u128(2);
        assert_eq!(open(&env, &m), Err(CryptoError::Integrity));
    }

    #[test]
    fn malformed_wire() {
        assert!(matches!(CipherEnvelope::from_bytes(&[]), Err(CryptoError::Malformed(_))));
        assert!(matches!(CipherEnvelope::from_bytes(&[0x09; 40]), Err(CryptoError::Malformed(_))));
        let env = seal(Algorithm::Otp, Uuid::nil(), &[1, 2], &[3, 4]).unwrap();
        let mut wire = env.to_bytes();
        wire.push(0);
        assert!(matches!(CipherEnvelope::from_bytes(&wire), Err(CryptoError::Malformed(_))));
        wire.truncate(wire.len() - 2);
        assert!(matches!(CipherEnvelope::from_bytes(&wire), Err(CryptoError::Malformed(_))));
    }
}
