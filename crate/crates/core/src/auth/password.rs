//! PBKDF2-HMAC-SHA256 password envelopes:
//! `pbkdf2-sha256$<iterations>$<salt b64>$<hash b64>` (standard base64, padded).

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::RngCore;
use sha2::Sha256;
use subtle::ConstantTimeEq;

pub const PBKDF2_ITERATIONS: u32 = 210_000;
pub const SALT_LEN: usize = 16;
pub const HASH_LEN: usize = 32;
const SCHEME: &str = "pbkdf2-sha256";

fn derive(password: &str, salt: &[u8], iterations: u32) -> [u8; HASH_LEN] {
    let mut out = [0u8; HASH_LEN];
    pbkdf2::pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, iterations, &mut out);
    out
}

pub fn hash_password(password: &str) -> String {
    let mut salt = [0u8; SALT_LEN];
    rand::rngs::OsRng.fill_bytes(&mut salt);
    hash_with(password, &salt, PBKDF2_ITERATIONS)
}

pub(crate) fn hash_with(password: &str, salt: &[u8], iterations: u32) -> String {
    let hash = derive(password, salt, iterations);
    format!("{SCHEME}${iterations}${}${}", B64.encode(salt), B64.encode(hash))
}

/// False for a wrong password and for any malformed envelope.
pub fn verify_password(envelope: &str, password: &str) -> bool {
    let mut parts = envelope.split('$');
    let (Some(SCHEME), Some(iters), Some(salt), Some(hash), None) =
        (parts.next(), parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return false;
    };
    let (Ok(iters), Ok(salt), Ok(expected)) = (iters.parse::<u32>(), B64.decode(salt), B64.decode(hash)) else {
        return false;
    };
    if iters == 0 || expected.len() != HASH_LEN {
        return false;
    }
    derive(password, &salt, iters).ct_eq(&expected).into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn envelope_shape() {
        let env = hash_password("correct horse battery");
        let parts: Vec<_> = env.split('$').collect();
        assert_eq!(parts.len(), 4);
        assert_eq!(parts[0], "pbkdf2-sha256");
        assert_eq!(parts[1], "210000");
        assert_eq!(B64.decode(parts[2]).unwrap().len(), SALT_LEN);
        assert_eq!(B64.decode(parts[3]).unwrap().len(), HASH_LEN);
        assert!(verify_password(&env, "correct horse battery"));
        assert!(!verify_password(&env, "correct horse batter"));
        assert_ne!(env, hash_password("correct horse battery"), "salt must vary");
    }

    #[test]
    fn known_vector() {
        // RFC 7914 section 11 PBKDF2-HMAC-SHA256 test vector, first 32 bytes
        let env = hash_with("passwd", b"salt", 1);
        let hash = B64.decode(env.rsplit('$').next().unwrap()).unwrap();
        assert_eq!(
            hex::encode(hash),
            "55ac046e56e3089fec1691c22544b605f94185216dde0465e68b9d57c20dacbc"
        );
    }

    #[test]
    fn malformed_envelopes_never_verify() {
        for env in [
            "",
            "pbkdf2-sha256$1$c2FsdA==",
            "bcrypt$1$c2FsdA==$AAAA",
            "pbkdf2-sha256$0$c2FsdA==$VawEblbjCJ/sFpHCJUS2BflBhSFt3gRl5oudV8INrLw=",
            "pbkdf2-sha256$x$c2FsdA==$VawEblbjCJ/sFpHCJUS2BflBhSFt3gRl5oudV8INrLw=",
            "pbkdf2-sha256$1$c2FsdA==$AAAA",
        ] {
            assert!(!verify_password(env, "passwd"), "{env}");
        }
        assert!(verify_password(
            "pbkdf2-sha256$1$c2FsdA==$VawEblbjCJ/sFpHCJUS2BflBhSFt3gRl5oudV8INrLw=",
            "passwd"
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn verify_accepts_only_the_original(p in ".{0,24}", q in ".{0,24}") {
            let env = hash_with(&p, b"0123456789abcdef", 1000);
            prop_assert!(verify_password(&env, &p));
            if p != q {
                prop_assert!(!verify_password(&env, &q));
            }
        }
    }
}
