#![allow(dead_code)]

pub mod matrix;

use std::collections::{BTreeMap, HashMap};

use reqwest::{Client, Method, StatusCode};
use serde_json::Value;
use tempfile::TempDir;

use sierra_api::{compose_service_with_key, ServiceConfig, ServiceHandle};
use sierra_core::auth::Role;
use sierra_core::model::{DeviceId, SubjectId, SubjectRecord};
use sierra_core::quest::parse_questionnaire;
use sierra_core::store::{MasterKey, SampleBatch, WireSample};

pub const PASSWORD: &str = "correct horse battery";
pub const DEVICE_KEY: &str = "dev1-secret-key";

pub const QUEST: &str = r#"questionnaire "mood" version 1
scale agree likert 1..5
item q1 "I feel rested" scale agree
item q2 "I feel tense" scale agree reverse
item note "Anything else?" text optional
"#;

pub fn sid(s: &str) -> SubjectId {
    SubjectId::new(s).unwrap()
}

pub struct Harness {
    pub dir: TempDir,
    pub svc: ServiceHandle,
    pub client: Client,
    pub tokens: BTreeMap<&'static str, String>,
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Value,
}

impl Reply {
    pub fn data(&self) -> &Value {
        &self.body["data"]
    }

    pub fn code(&self) -> &str {
        self.body["error"]["code"].as_str().unwrap_or("")
    }
}

/// Asserts the response envelope on every reply.
pub fn check_envelope(status: StatusCode, body: &Value) {
    let ok = body["ok"].as_bool().unwrap_or_else(|| panic!("no `ok` in {body}"));
    assert_eq!(ok, status.is_success(), "status {status} vs body {body}");
    if ok {
        assert!(body.get("data").is_some(), "{body}");
    } else {
        assert!(body["error"]["code"].is_string(), "{body}");
        assert!(body["error"]["message"].is_string(), "{body}");
    }
}

impl Harness {
    /// Service with users `admin`, `expert`, `s1user` (subject S1), subjects
    /// S1 and S2 with `hr` samples, and the `mood` questionnaire loaded.
    pub async fn start() -> Self {
        Self::start_with_ttl(12 * 3600 * 1000).await
    }

    pub async fn start_with_ttl(ttl_ms: i64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ServiceConfig::new("127.0.0.1:0".parse().unwrap(), dir.path());
        cfg.session_ttl_ms = ttl_ms;
        cfg.device_keys = HashMap::from([(DEVICE_KEY.to_string(), DeviceId::new("dev1").unwrap())]);
        let svc = compose_service_with_key(cfg, MasterKey::generate()).await.unwrap();

        let st = svc.state();
        for (user, role, link) in [
            ("admin", Role::Admin, None),
            ("expert", Role::Expert, None),
            ("s1user", Role::Subject, Some(sid("S1"))),
        ] {
            st.auth.create_user(user, PASSWORD, role, link).unwrap();
        }
        for id in ["S1", "S2"] {
            st.store
                .put_subject(&SubjectRecord {
                    id: sid(id),
                    cohort: "knee".into(),
                    phi: BTreeMap::from([("name".into(), format!("Patient {id}"))]),
                    created_at: 0,
                })
                .unwrap();
            let batch = SampleBatch {
                device: DeviceId::new("seed").unwrap(),
                subject: sid(id),
                seq_no: if id == "S1" { 0 } else { 1 },
                samples: (0..10)
                    .map(|i| WireSample { channel: "hr".into(), t_ms: i * 1000, value: 60.0 + i as f64 })
                    .collect(),
            };
            st.store.ingest_batch(&batch).unwrap();
        }
        st.store.put_questionnaire(&parse_questionnaire(QUEST).unwrap()).unwrap();

        let mut h = Harness {
            dir,
            svc,
            client: Client::new(),
            tokens: BTreeMap::new(),
        };
        for user in ["admin", "expert", "s1user"] {
            let token = h.login(user).await.expect("login");
            h.tokens.insert(user, token);
        }
        h
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.svc.base_url(), path)
    }

    pub async fn login(&self, user: &str) -> Option<String> {
        let r = self
            .call(Method::POST, "/api/v1/auth/login", None, Some(serde_json::json!({"username": user, "password": PASSWORD})))
            .await;
        r.data()["token"].as_str().map(str::to_string)
    }

    pub async fn call(&self, method: Method, path: &str, token: Option<&str>, json: Option<Value>) -> Reply {
        let mut req = self.client.request(method, self.url(path));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        if let Some(j) = json {
            req = req.json(&j);
        }
        Self::finish(req).await
    }

    pub async fn call_text(&self, method: Method, path: &str, token: Option<&str>, text: &str) -> Reply {
        let mut req = self.client.request(method, self.url(path)).body(text.to_string());
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        Self::finish(req).await
    }

    pub async fn finish(req: reqwest::RequestBuilder) -> Reply {
        let resp = req.send().await.expect("request failed");
        let status = resp.status();
        let bytes = resp.bytes().await.unwrap();
        let body: Value = serde_json::from_slice(&bytes)
            .unwrap_or_else(|e| panic!("non-JSON body ({e}): {}", String::from_utf8_lossy(&bytes)));
        check_envelope(status, &body);
        Reply { status, body }
    }

    pub fn token(&self, user: &str) -> &str {
        &self.tokens[user]
    }

    pub fn touches(&self) -> u64 {
        self.svc.state().store.touch_count()
    }
}
