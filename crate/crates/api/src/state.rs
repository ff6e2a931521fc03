use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::http::HeaderMap;

use sierra_core::auth::{Action, AuthService, Decision, DenyReason, Principal, Resource};
use sierra_core::model::DeviceId;
use sierra_core::store::Store;
use sierra_core::viz::Registry;

use crate::error::ApiError;
use crate::jobs::MlJobs;

pub const DEVICE_KEY_HEADER: &str = "x-device-key";

/// Shared handles behind every route.
#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub auth: Arc<AuthService>,
    pub registry: Arc<Registry>,
    /// device key -> device it authenticates
    pub devices: Arc<HashMap<String, DeviceId>>,
    pub ml: Arc<MlJobs>,
}

/// A request whose bearer token named a live session. Authorization is a
/// separate step so handlers can parse the resource id first; neither step
/// touches the store.
pub struct Authenticated {
    token: String,
    pub principal: Principal,
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    let value = headers.get(axum::http::header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim())
}

impl AppState {
    pub fn authenticate(&self, headers: &HeaderMap) -> Result<Authenticated, ApiError> {
        let token = bearer(headers).ok_or(DenyReason::NoSession)?;
        let principal = self.auth.session(token)?;
        Ok(Authenticated {
            token: token.to_string(),
            principal,
        })
    }

    pub fn authorize(&self, who: &Authenticated, action: Action, resource: &Resource) -> Result<Principal, ApiError> {
        match self.auth.check_access(&who.token, action, resource) {
            Decision::Allow(p) => Ok(p),
            Decision::Deny(reason) => Err(reason.into()),
        }
    }

    /// Authenticate and authorize in one go, for routes whose resource does
    /// not depend on the request.
    pub fn guard(&self, headers: &HeaderMap, action: Action, resource: &Resource) -> Result<Authenticated, ApiError> {
        let who = self.authenticate(headers)?;
        self.authorize(&who, action, resource)?;
        Ok(who)
    }

    pub fn device(&self, headers: &HeaderMap) -> Result<DeviceId, ApiError> {
        let key = headers
            .get(DEVICE_KEY_HEADER)
            .and_then(|v| v.to_str().ok())
            .ok_or_else(|| ApiError::unauthorized("missing device key"))?;
        self.devices
            .get(key)
            .cloned()
            .ok_or_else(|| ApiError::unauthorized("unknown device key"))
    }
}

impl Authenticated {
    pub fn token(&self) -> &str {
        &self.token
    }
}

pub fn parse_query(raw: Option<&str>) -> BTreeMap<String, String> {
    form_urlencoded::parse(raw.unwrap_or_default().as_bytes())
        .into_owned()
        .collect()
}
