//! Role x route table shared by the access-matrix test and the acceptance
//! suite: anonymous, admin, expert, and a subject-role user linked to S1.

use reqwest::{Method, StatusCode};
use serde_json::{json, Value};

use super::Harness;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Who {
    Anonymous,
    Admin,
    Expert,
    SubjectS1,
}

impl Who {
    fn user(self) -> Option<&'static str> {
        match self {
            Who::Anonymous => None,
            Who::Admin => Some("admin"),
            Who::Expert => Some("expert"),
            Who::SubjectS1 => Some("s1user"),
        }
    }
}

/// Which authenticated roles may call a route.
#[derive(Clone, Copy, Debug)]
pub enum Allowed {
    Everyone,
    Staff,
}

pub enum Body {
    None,
    Json(fn(&str) -> Value),
    Text(fn(&str) -> String),
}

pub struct Case {
    pub method: Method,
    pub path: &'static str,
    pub body: Body,
    pub allowed: Allowed,
    /// Statuses an allowed caller may get; any 2xx when `None`.
    pub status: Option<&'static [StatusCode]>,
}

fn case(method: Method, path: &'static str, body: Body, allowed: Allowed) -> Case {
    Case { method, path, body, allowed, status: None }
}

impl Case {
    fn expecting(mut self, status: &'static [StatusCode]) -> Self {
        self.status = Some(status);
        self
    }
}

pub fn route_table() -> Vec<Case> {
    use Allowed::*;
    vec![
        case(Method::POST, "/api/v1/subjects", Body::Json(|u| json!({"id": format!("new-{u}"), "cohort": "c"})), Staff),
        case(Method::GET, "/api/v1/subjects", Body::None, Staff),
        case(Method::GET, "/api/v1/subjects/S1", Body::None, Everyone),
        case(Method::GET, "/api/v1/subjects/S2", Body::None, Staff),
        case(Method::GET, "/api/v1/series?subject=S1&channel=hr&t0=0&t1=100000", Body::None, Everyone),
        case(Method::GET, "/api/v1/series?subject=S2&channel=hr", Body::None, Staff),
        case(
            Method::POST,
            "/api/v1/questionnaires",
            Body::Text(|u| format!("questionnaire \"q_{u}\" version 1\nscale s likert 1..3\nitem a \"A\" scale s\n")),
            Staff,
        ),
        case(Method::GET, "/api/v1/questionnaires", Body::None, Everyone),
        case(Method::GET, "/api/v1/questionnaires/mood/form", Body::None, Everyone),
        case(
            Method::POST,
            "/api/v1/questionnaires/mood/responses",
            Body::Json(|_| json!({"subject": "S1", "answers": {"q1": 4, "q2": 2}})),
            Everyone,
        ),
        case(
            Method::POST,
            "/api/v1/questionnaires/mood/responses",
            Body::Json(|_| json!({"subject": "S2", "answers": {"q1": 4, "q2": 2}})),
            Staff,
        ),
        case(Method::GET, "/api/v1/questionnaires/mood/scores?subject=S1", Body::None, Everyone),
        case(Method::GET, "/api/v1/questionnaires/mood/scores?subject=S2", Body::None, Staff),
        case(Method::GET, "/api/v1/portfolio", Body::None, Everyone),
        case(Method::GET, "/api/v1/viz/timeseries_line/data?subject=S1&channel=hr&t0=0&t1=100000", Body::None, Everyone),
        case(Method::GET, "/api/v1/viz/histogram/data?subject=S2&channel=hr&t0=0&t1=100000", Body::None, Staff),
        // no subject: only roles that may read any subject get as far as validation
        case(Method::GET, "/api/v1/viz/sheet/data?channel=hr&t0=0&t1=1", Body::None, Staff)
            .expecting(&[StatusCode::BAD_REQUEST]),
        case(Method::POST, "/api/v1/ml/datasets", Body::Text(|_| "a,b,label\n0,0,0\n1,1,1\n".into()), Staff),
        case(
            Method::POST,
            "/api/v1/ml/train",
            Body::Json(|_| json!({"dataset_id": 1, "layers": [2, 2], "epochs": 1})),
            Staff,
        ),
        case(Method::GET, "/api/v1/ml/jobs/2", Body::None, Staff),
        // the job may still be running
        case(Method::GET, "/api/v1/ml/jobs/2/confusion", Body::None, Staff)
            .expecting(&[StatusCode::OK, StatusCode::CONFLICT]),
        case(Method::POST, "/api/v1/auth/logout", Body::None, Everyone),
    ]
}

pub fn expect_allowed(who: Who, allowed: Allowed) -> bool {
    !matches!((who, allowed), (Who::Anonymous, _) | (Who::SubjectS1, Allowed::Staff))
}

/// Calls every route as every caller and asserts the declared policy.
/// Denied calls must leave the store untouched. Returns the number of
/// combinations checked.
pub async fn run_role_route_matrix(h: &Harness) -> usize {
    let mut checked = 0;
    // admin last so its dataset/job ids exist for the jobs rows: expert's
    // upload is dataset 1 and its training run is job 2
    for who in [Who::Anonymous, Who::SubjectS1, Who::Expert, Who::Admin] {
        for c in route_table() {
            // logout gets a throwaway session so the others stay valid
            let token = match who.user() {
                None => None,
                Some(u) if c.path.ends_with("/logout") => Some(h.login(u).await.unwrap()),
                Some(u) => Some(h.token(u).to_string()),
            };
            let label = who.user().unwrap_or("anon");
            let mut req = h.client.request(c.method.clone(), h.url(c.path));
            if let Some(t) = &token {
                req = req.bearer_auth(t);
            }
            req = match &c.body {
                Body::None => req,
                Body::Json(f) => req.json(&f(label)),
                Body::Text(f) => req.body(f(label)),
            };
            let before = h.touches();
            let r = Harness::finish(req).await;
            let after = h.touches();
            let desc = format!("{who:?} {} {} -> {} {}", c.method, c.path, r.status, r.body);

            if expect_allowed(who, c.allowed) {
                assert!(
                    r.status != StatusCode::UNAUTHORIZED && r.status != StatusCode::FORBIDDEN,
                    "expected allow: {desc}"
                );
                match c.status {
                    Some(s) => assert!(s.contains(&r.status), "{desc}"),
                    None => assert!(r.status.is_success(), "allowed call should succeed here: {desc}"),
                }
            } else {
                let want = if who == Who::Anonymous { StatusCode::UNAUTHORIZED } else { StatusCode::FORBIDDEN };
                assert_eq!(r.status, want, "{desc}");
                assert_eq!(before, after, "denied call touched the store: {desc}");
            }
            checked += 1;
        }
    }
    checked
}
