//! Password hashing and bearer sessions.

use std::collections::HashMap;
use std::sync::Mutex;

use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::Argon2;
use chrono::{DateTime, Duration, Utc};
use rand::Rng;

/// Argon2id PHC string with a random 16-byte salt.
pub fn hash_password(password: &str) -> String {
    let salt: [u8; 16] = rand::rng().random();
    let salt = SaltString::encode_b64(&salt).expect("16-byte salt is within PHC limits");
    Argon2::default()
        .hash_password(password.as_bytes(), &salt)
        .expect("default argon2 parameters are valid")
        .to_string()
}

pub fn verify_password(password: &str, credential: &str) -> bool {
    PasswordHash::new(credential)
        .map(|h| Argon2::default().verify_password(password.as_bytes(), &h).is_ok())
        .unwrap_or(false)
}

#[derive(Debug, Clone)]
pub struct Session {
    pub user_id: String,
    pub expires_at: DateTime<Utc>,
}

/// Opaque bearer tokens held in memory; a restart logs everyone out.
#[derive(Default)]
pub struct Sessions {
    map: Mutex<HashMap<String, Session>>,
}

impl Sessions {
    pub fn issue(&self, user_id: &str, now: DateTime<Utc>, ttl_secs: i64) -> (String, DateTime<Utc>) {
        let bytes: [u8; 32] = rand::rng().random();
        let token = hex::encode(bytes);
        let expires_at = now + Duration::seconds(ttl_secs);
        let mut map = self.map.lock().expect("session lock poisoned");
        map.retain(|_, s| s.expires_at > now);
        map.insert(token.clone(), Session { user_id: user_id.to_string(), expires_at });
        (token, expires_at)
    }

    /// The session's user when the token is known and unexpired.
    pub fn resolve(&self, token: &str, now: DateTime<Utc>) -> Option<String> {
        let map = self.map.lock().expect("session lock poisoned");
        map.get(token).filter(|s| s.expires_at > now).map(|s| s.user_id.clone())
    }
}
