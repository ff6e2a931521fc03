//! Field-level authenticated encryption for PHI.
//!
//! Each field is sealed with AES-256-GCM under the master key, a fresh random
//! 96-bit nonce, and the field path as associated data. Binding the path means
//! an envelope copied onto another field no longer authenticates.

use std::fmt;

use aes_gcm::aead::{Aead, AeadCore, KeyInit, OsRng, Payload};
use aes_gcm::{Aes256Gcm, Key, Nonce};
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ALG_AES256GCM: &str = "AES-256-GCM";
pub const MASTER_KEY_ENV: &str = "SIERRA_MASTER_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("authentication failed")]
    AuthFailure,
    #[error("envelope is bound to `{found}`, expected `{expected}`")]
    WrongAad { expected: String, found: String },
    #[error("unsupported algorithm `{0}`")]
    UnsupportedAlg(String),
    #[error("master key must be 64 hex characters")]
    BadKey,
    #[error("master key environment variable `{0}` is not set")]
    MissingKey(String),
}

/// 256-bit master key. Never printed.
#[derive(Clone, PartialEq, Eq)]
pub struct MasterKey([u8; 32]);

impl MasterKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let s = s.trim();
        if s.len() != 64 {
            return Err(CryptoError::BadKey);
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| CryptoError::BadKey)?;
        Ok(Self(out))
    }

    pub fn from_env(var: &str) -> Result<Self, CryptoError> {
        match std::env::var(var) {
            Ok(v) => Self::from_hex(&v),
            Err(_) => Err(CryptoError::MissingKey(var.to_string())),
        }
    }

    pub fn generate() -> Self {
        Self(Aes256Gcm::generate_key(&mut OsRng).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    fn cipher(&self) -> Aes256Gcm {
        Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(&self.0))
    }
}

impl fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MasterKey(..)")
    }
}

mod b64 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

/// Sealed field: `{alg, nonce, ct, aad}` with base64 binary members. `ct`
/// carries the ciphertext followed by the 16-byte GCM tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedField {
    pub alg: String,
    #[serde(with = "b64")]
    pub nonce: Vec<u8>,
    #[serde(with = "b64")]
    pub ct: Vec<u8>,
    pub aad: String,
}

pub fn encrypt_field(path: &str, plaintext: &str, key: &MasterKey) -> EncryptedField {
    let nonce = Aes256Gcm::generate_nonce(&mut OsRng);
    let ct = key
        .cipher()
        .encrypt(
            &nonce,
            Payload {
                msg: plaintext.as_bytes(),
                aad: path.as_bytes(),
            },
        )
        .expect("AES-GCM encryption of an in-memory buffer cannot fail");
    EncryptedField {
        alg: ALG_AES256GCM.to_string(),
        nonce: nonce.to_vec(),
        ct,
        aad: path.to_string(),
    }
}

/// Opens an envelope that must belong to `path`.
pub fn decrypt_field(
    ef: &EncryptedField,
    path: &str,
    key: &MasterKey,
) -> Result<String, CryptoError> {
    if ef.alg != ALG_AES256GCM {
        return Err(CryptoError::UnsupportedAlg(ef.alg.clone()));
    }
    if ef.aad != path {
        return Err(CryptoError::WrongAad {
            expected: path.to_string(),
            found: ef.aad.clone(),
        });
    }
    if ef.nonce.len() != 12 {
        return Err(CryptoError::AuthFailure);
    }
    let plain = key
        .cipher()
        .decrypt(
            Nonce::from_slice(&ef.nonce),
            Payload {
                msg: &ef.ct,
                aad: path.as_bytes(),
            },
        )
        .map_err(|_| CryptoError::AuthFailure)?;
    String::from_utf8(plain).map_err(|_| CryptoError::AuthFailure)
}
