//! Users, server-side sessions, and the role policy.
//!
//! Users persist in `<root>/users.jsonl` with PBKDF2 password envelopes.
//! Sessions live in memory only, so a restart logs everyone out.

mod password;

pub use password::{hash_password, verify_password, PBKDF2_ITERATIONS};

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SubjectId;
use crate::store::jsonl;

pub const USERS_FILE: &str = "users.jsonl";
pub const MIN_PASSWORD_LEN: usize = 10;
pub const DEFAULT_SESSION_TTL_MS: i64 = 12 * 3600 * 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Admin,
    Expert,
    Subject,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Admin, Role::Expert, Role::Subject];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Admin => "admin",
            Role::Expert => "expert",
            Role::Subject => "subject",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "admin" => Ok(Role::Admin),
            "expert" => Ok(Role::Expert),
            "subject" => Ok(Role::Subject),
            _ => Err(format!("unknown role `{s}` (expected admin, expert or subject)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub username: String,
    pub password_hash: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_subject: Option<SubjectId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Session {
    pub token: String,
    pub username: String,
    pub role: Role,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linked_subject: Option<SubjectId>,
    pub expires_at: i64,
}

/// Identity attached to an allowed request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Principal {
    pub username: String,
    pub role: Role,
    pub linked_subject: Option<SubjectId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    ReadClinical,
    WriteClinical,
    ReadCatalog,
    RespondQuestionnaire,
    RunAnalytics,
    ManageUsers,
    EndSession,
}

impl Action {
    pub const ALL: [Action; 7] = [
        Action::ReadClinical,
        Action::WriteClinical,
        Action::ReadCatalog,
        Action::RespondQuestionnaire,
        Action::RunAnalytics,
        Action::ManageUsers,
        Action::EndSession,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resource {
    Any,
    Subject(SubjectId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenyReason {
    NoSession,
    Expired,
    Forbidden,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Allow(Principal),
    Deny(DenyReason),
}

/// The role table. Total over every (role, action, resource).
pub fn policy_allows(role: Role, linked: Option<&SubjectId>, action: Action, resource: &Resource) -> bool {
    match role {
        Role::Admin => true,
        Role::Expert => action != Action::ManageUsers,
        Role::Subject => match action {
            Action::ReadCatalog | Action::EndSession => true,
            Action::ReadClinical | Action::RespondQuestionnaire => {
                matches!((resource, linked), (Resource::Subject(s), Some(own)) if s == own)
            }
            Action::WriteClinical | Action::RunAnalytics | Action::ManageUsers => false,
        },
    }
}

#[derive(Debug, Error)]
pub enum AuthError {
    #[error("user `{0}` already exists")]
    DuplicateUser(String),
    #[error("password must be at least {MIN_PASSWORD_LEN} characters")]
    WeakPassword,
    #[error("username must be 3-64 characters of [A-Za-z0-9_.@-]")]
    InvalidUsername,
    #[error("subject users need a linked subject; other roles must not have one")]
    SubjectLink,
    #[error("invalid username or password")]
    AuthFailed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn is_valid_username(name: &str) -> bool {
    (3..=64).contains(&name.len())
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'@' | b'-'))
}

pub type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

pub fn system_now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as i64)
}

fn dummy_envelope() -> &'static str {
    static DUMMY: OnceLock<String> = OnceLock::new();
    DUMMY.get_or_init(|| hash_password("unused dummy password"))
}

pub struct AuthService {
    path: Option<PathBuf>,
    users: RwLock<BTreeMap<String, User>>,
    sessions: RwLock<HashMap<String, Session>>,
    // serializes the check-then-append in create_user
    write: Mutex<()>,
    ttl_ms: i64,
    clock: Clock,
}

impl AuthService {
    /// Loads users from `<root>/users.jsonl`, creating nothing until the
    /// first user is added.
    pub fn open(root: &Path, ttl_ms: i64) -> io::Result<Self> {
        let path = root.join(USERS_FILE);
        let users = jsonl::load::<User>(&path)?
            .into_iter()
            .map(|u| (u.username.clone(), u))
            .collect();
        Ok(Self::build(Some(path), users, ttl_ms))
    }

    pub fn in_memory(ttl_ms: i64) -> Self {
        Self::build(None, BTreeMap::new(), ttl_ms)
    }

    fn build(path: Option<PathBuf>, users: BTreeMap<String, User>, ttl_ms: i64) -> Self {
        Self {
            path,
            users: RwLock::new(users),
            sessions: RwLock::new(HashMap::new()),
            write: Mutex::new(()),
            ttl_ms,
            clock: Arc::new(system_now_ms),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn ttl_ms(&self) -> i64 {
        self.ttl_ms
    }

    pub fn create_user(
        &self,
        username: &str,
        password: &str,
        role: Role,
        linked_subject: Option<SubjectId>,
    ) -> Result<User, AuthError> {
        if !is_valid_username(username) {
            return Err(AuthError::InvalidUsername);
        }
        if password.chars().count() < MIN_PASSWORD_LEN {
            return Err(AuthError::WeakPassword);
        }
        if (role == Role::Subject) != linked_subject.is_some() {
            return Err(AuthError::SubjectLink);
        }
        let _guard = self.write.lock().unwrap();
        if self.users.read().unwrap().contains_key(username) {
            return Err(AuthError::DuplicateUser(username.to_string()));
        }
        let user = User {
            username: username.to_string(),
            password_hash: hash_password(password),
            role,
            linked_subject,
        };
        if let Some(path) = &self.path {
            jsonl::append(path, &user)?;
        }
        self.users
            .write()
            .unwrap()
            .insert(user.username.clone(), user.clone());
        Ok(user)
    }

    pub fn user(&self, username: &str) -> Option<User> {
        self.users.read().unwrap().get(username).cloned()
    }

    pub fn users(&self) -> Vec<User> {
        self.users.read().unwrap().values().cloned().collect()
    }

    /// Unknown users cost one hash too, so timing and error match a wrong
    /// password.
    pub fn authenticate(&self, username: &str, password: &str) -> Result<Session, AuthError> {
        let user = self.user(username);
        let envelope = user.as_ref().map_or(dummy_envelope(), |u| u.password_hash.as_str());
        let ok = verify_password(envelope, password);
        let user = match user {
            Some(u) if ok => u,
            _ => return Err(AuthError::AuthFailed),
        };
        let mut raw = [0u8; 32];
        rand::rngs::OsRng.fill_bytes(&mut raw);
        let session = Session {
            token: URL_SAFE_NO_PAD.encode(raw),
            username: user.username,
            role: user.role,
            linked_subject: user.linked_subject,
            expires_at: (self.clock)() + self.ttl_ms,
        };
        self.sessions
            .write()
            .unwrap()
            .insert(session.token.clone(), session.clone());
        Ok(session)
    }

    /// Returns true if the token named a live session.
    pub fn logout(&self, token: &str) -> bool {
        self.sessions.write().unwrap().remove(token).is_some()
    }

    /// Resolves a token to its principal without applying any policy.
    pub fn session(&self, token: &str) -> Result<Principal, DenyReason> {
        let sessions = self.sessions.read().unwrap();
        let s = sessions.get(token).ok_or(DenyReason::NoSession)?;
        if (self.clock)() >= s.expires_at {
            return Err(DenyReason::Expired);
        }
        Ok(Principal {
            username: s.username.clone(),
            role: s.role,
            linked_subject: s.linked_subject.clone(),
        })
    }

    pub fn check_access(&self, token: &str, action: Action, resource: &Resource) -> Decision {
        let p = match self.session(token) {
            Ok(p) => p,
            Err(reason) => return Decision::Deny(reason),
        };
        if policy_allows(p.role, p.linked_subject.as_ref(), action, resource) {
            Decision::Allow(p)
        } else {
            Decision::Deny(DenyReason::Forbidden)
        }
    }

    /// Drops expired sessions; returns how many were removed.
    pub fn purge_expired(&self) -> usize {
        let now = (self.clock)();
        let mut sessions = self.sessions.write().unwrap();
        let before = sessions.len();
        sessions.retain(|_, s| now < s.expires_at);
        before - sessions.len()
    }
}
