mod common;

use std::time::Duration;

use common::*;
use reqwest::{Method, StatusCode};
use serde_json::json;

use sierra_api::{compose_service, compose_service_with_key, ServiceConfig, StartError};
use sierra_core::store::MasterKey;

#[tokio::test(flavor = "multi_thread")]
async fn health_is_ok() {
    let h = Harness::start().await;
    let r = h.call(Method::GET, "/healthz", None, None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body, json!({"ok": true, "data": "ok"}));
}

#[tokio::test(flavor = "multi_thread")]
async fn missing_master_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ServiceConfig::new("127.0.0.1:0".parse().unwrap(), dir.path());
    cfg.master_key_env = "SIERRA_TEST_KEY_THAT_IS_NEVER_SET".into();
    assert!(matches!(compose_service(cfg).await, Err(StartError::ConfigError(_))));
}

#[tokio::test(flavor = "multi_thread")]
async fn second_bind_is_port_in_use() {
    let h = Harness::start().await;
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig::new(h.svc.local_addr(), dir.path());
    match compose_service_with_key(cfg, MasterKey::generate()).await {
        Err(StartError::PortInUse(addr)) => assert_eq!(addr, h.svc.local_addr()),
        other => panic!("expected PortInUse, got {:?}", other.map(|s| s.local_addr())),
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn shutdown_stops_serving() {
    let h = Harness::start().await;
    let url = h.url("/healthz");
    h.svc.shutdown().await.unwrap();
    assert!(h.client.get(url).send().await.is_err());
}

#[tokio::test(flavor = "multi_thread")]
async fn login_and_logout() {
    let h = Harness::start().await;
    let r = h
        .call(Method::POST, "/api/v1/auth/login", None, Some(json!({"username": "expert", "password": PASSWORD})))
        .await;
    assert_eq!(r.status, StatusCode::OK);
    let token = r.data()["token"].as_str().unwrap().to_string();
    assert_eq!(r.data()["role"], "expert");
    let now = sierra_core::auth::system_now_ms();
    let expires = r.data()["expires_at"].as_i64().unwrap();
    assert!((expires - now - 12 * 3600 * 1000).abs() < 60_000);

    let r = h.call(Method::GET, "/api/v1/portfolio", Some(&token), None).await;
    assert_eq!(r.status, StatusCode::OK);
    let r = h.call(Method::POST, "/api/v1/auth/logout", Some(&token), None).await;
    assert_eq!(r.status, StatusCode::OK);
    let r = h.call(Method::GET, "/api/v1/portfolio", Some(&token), None).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
}

#[tokio::test(flavor = "multi_thread")]
async fn login_failures_do_not_enumerate_users() {
    let h = Harness::start().await;
    let raw = |user: &str, pw: &str| {
        h.client
            .post(h.url("/api/v1/auth/login"))
            .json(&json!({"username": user, "password": pw}))
            .send()
    };
    let wrong = raw("expert", "not the password").await.unwrap();
    assert_eq!(wrong.status(), StatusCode::UNAUTHORIZED);
    let wrong = wrong.bytes().await.unwrap();
    let unknown = raw("nobody", PASSWORD).await.unwrap();
    assert_eq!(unknown.status(), StatusCode::UNAUTHORIZED);
    assert_eq!(wrong, unknown.bytes().await.unwrap());

    let r = h.call_text(Method::POST, "/api/v1/auth/login", None, "{not json").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn expired_sessions_are_rejected() {
    let h = Harness::start_with_ttl(300).await;
    let token = h.login("expert").await.unwrap();
    let r = h.call(Method::GET, "/api/v1/portfolio", Some(&token), None).await;
    assert_eq!(r.status, StatusCode::OK);
    tokio::time::sleep(Duration::from_millis(400)).await;
    let before = h.touches();
    let r = h
        .call(Method::GET, "/api/v1/series?subject=S1&channel=hr", Some(&token), None)
        .await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    assert_eq!(h.touches(), before);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_routes_and_methods() {
    let h = Harness::start().await;
    let r = h.call(Method::GET, "/api/v1/nope", None, None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = h.call(Method::DELETE, "/api/v1/portfolio", None, None).await;
    assert_eq!(r.status, StatusCode::METHOD_NOT_ALLOWED);
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_tokens_are_unauthorized() {
    let h = Harness::start().await;
    for header in ["Bearer", "Bearer ", "Basic abc", "bearer nonsense-token", ""] {
        let resp = h
            .client
            .get(h.url("/api/v1/portfolio"))
            .header("authorization", header)
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), StatusCode::UNAUTHORIZED, "{header:?}");
    }
    // scheme is case-insensitive
    let resp = h
        .client
        .get(h.url("/api/v1/portfolio"))
        .header("authorization", format!("bearer {}", h.token("expert")))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}
