use std::time::Instant;

use kumoforge_core::provider::wire::{
    WireAuthCode, WireError, WireListing, WireRevisions, WireToken,
};
use kumoforge_sim::{FaultRequest, FixtureSpec, FixtureSummary, SimConfig, SimHandle, SimServer};
use md5::{Digest, Md5};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;

struct Sim {
    handle: SimHandle,
    http: Client,
}

impl Sim {
    fn start(config: SimConfig) -> Self {
        Sim {
            handle: SimServer::start(config).unwrap(),
            http: Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.handle.base_url())
    }

    fn login(&self) -> String {
        let code: WireAuthCode = self
            .http
            .get(self.url("/oauth/authorize"))
            .send()
            .unwrap()
            .json()
            .unwrap();
        let tok: WireToken = self
            .http
            .post(self.url("/oauth/token"))
            .json(&serde_json::json!({ "code": code.code }))
            .send()
            .unwrap()
            .json()
            .unwrap();
        tok.access_token
    }

    fn get(&self, token: &str, path: &str) -> Response {
        self.http
            .get(self.url(path))
            .bearer_auth(token)
            .send()
            .unwrap()
    }

    fn fault(&self, kind: &str, n: u32) -> StatusCode {
        self.http
            .post(self.url("/admin/fault"))
            .json(&FaultRequest {
                kind: kind.into(),
                n: Some(n),
            })
            .send()
            .unwrap()
            .status()
    }

    fn truth(&self) -> FixtureSummary {
        self.http
            .get(self.url("/admin/truth"))
            .send()
            .unwrap()
            .json()
            .unwrap()
    }
}

fn error_code(resp: Response) -> (StatusCode, String) {
    let status = resp.status();
    (status, resp.json::<WireError>().unwrap().code)
}

#[test]
fn access_code_is_armed_by_consent_and_single_use() {
    let sim = Sim::start(SimConfig::new(FixtureSpec::listing(7)));
    let token = |code: &str| {
        sim.http
            .post(sim.url("/oauth/token"))
            .json(&serde_json::json!({ "code": code }))
            .send()
            .unwrap()
    };
    assert_eq!(error_code(token("SIM-7-OK")).1, "AUTH_CODE_REJECTED");
    sim.http.get(sim.url("/oauth/authorize")).send().unwrap();
    assert_eq!(error_code(token("SIM-8-OK")).1, "AUTH_CODE_REJECTED");
    let ok: WireToken = token("SIM-7-OK").json().unwrap();
    assert_eq!(ok.user, "investigator@simdrive.test");
    assert_eq!(error_code(token("SIM-7-OK")).1, "AUTH_CODE_REJECTED");
}

#[test]
fn files_require_a_valid_bearer_token() {
    let sim = Sim::start(SimConfig::new(FixtureSpec::listing(1)));
    let resp = sim.http.get(sim.url("/files")).send().unwrap();
    assert_eq!(
        error_code(resp),
        (StatusCode::UNAUTHORIZED, "NOT_AUTHENTICATED".into())
    );
    assert_eq!(error_code(sim.get("bogus", "/files")).1, "TOKEN_EXPIRED");

    let t = sim.login();
    assert!(sim.get(&t, "/files").status().is_success());
    assert_eq!(sim.fault("EXPIRE_TOKENS", 1), StatusCode::NO_CONTENT);
    assert_eq!(error_code(sim.get(&t, "/files")).1, "TOKEN_EXPIRED");
}

#[test]
fn paging_walks_the_whole_catalog_in_order() {
    let sim = Sim::start(SimConfig::new(FixtureSpec::listing(1)));
    let t = sim.login();
    let mut ids = Vec::new();
    let mut pages = 0;
    let mut next: Option<String> = None;
    loop {
        let path = match &next {
            Some(tok) => format!("/files?page_size=4&page_token={tok}"),
            None => "/files?page_size=4".into(),
        };
        let page: WireListing = sim.get(&t, &path).json().unwrap();
        pages += 1;
        ids.extend(page.files.into_iter().map(|f| f.id));
        match page.next_page_token {
            Some(tok) => next = Some(tok),
            None => break,
        }
    }
    assert_eq!(pages, 3);
    let truth: Vec<_> = sim.truth().files.into_iter().map(|f| f.file_id).collect();
    assert_eq!(ids, truth);
    assert_eq!(
        error_code(sim.get(&t, "/files?page_token=zz")).1,
        "BAD_PAGE_TOKEN"
    );
}

#[test]
fn truncated_page_keeps_its_continuation_token() {
    let sim = Sim::start(SimConfig::new(FixtureSpec::listing(1)));
    let t = sim.login();
    sim.fault("TRUNCATE_PAGE", 1);
    let page: WireListing = sim.get(&t, "/files?page_size=4").json().unwrap();
    assert_eq!(page.files.len(), 2);
    assert_eq!(page.next_page_token.as_deref(), Some("p4"));
}

#[test]
fn revision_content_matches_ground_truth() {
    let sim = Sim::start(SimConfig::new(FixtureSpec::listing(1)));
    let t = sim.login();
    let mut checked = 0;
    for f in sim.truth().files.iter().filter(|f| !f.cloud_native) {
        let listed: WireRevisions = sim
            .get(&t, &format!("/files/{}/revisions", f.file_id))
            .json()
            .unwrap();
        assert_eq!(listed.revisions.len(), f.revisions.len());
        for r in &f.revisions {
            let resp = sim.get(
                &t,
                &format!("/files/{}/revisions/{}/content", f.file_id, r.id),
            );
            assert_eq!(resp.content_length(), Some(r.size));
            let body = resp.bytes().unwrap();
            assert_eq!(hex::encode(Md5::digest(&body)), r.md5);
            checked += 1;
        }
    }
    assert_eq!(checked, 10);
}

#[test]
fn cloud_native_files_export_only() {
    let sim = Sim::start(SimConfig::new(FixtureSpec::listing(1)));
    let t = sim.login();
    let truth = sim.truth();
    let native = truth.files.iter().find(|f| f.cloud_native).unwrap();
    let regular = truth.files.iter().find(|f| !f.cloud_native).unwrap();

    let pdf = sim
        .get(&t, &format!("/files/{}/export?format=pdf", native.file_id))
        .bytes()
        .unwrap();
    assert!(pdf.starts_with(b"%PDF-"));
    let txt = sim.get(&t, &format!("/files/{}/export?format=txt", native.file_id));
    assert!(txt.status().is_success());
    assert_eq!(
        error_code(sim.get(&t, &format!("/files/{}/export?format=docx", native.file_id))).1,
        "EXPORT_FORMAT_UNSUPPORTED"
    );
    assert_eq!(
        error_code(sim.get(&t, &format!("/files/{}/export", regular.file_id))).1,
        "NOT_CLOUD_NATIVE"
    );
    assert_eq!(
        error_code(sim.get(
            &t,
            &format!("/files/{}/revisions/x/content", native.file_id)
        ))
        .1,
        "CLOUD_NATIVE_NO_CONTENT"
    );
    assert_eq!(
        error_code(sim.get(&t, "/files/nope")),
        (StatusCode::NOT_FOUND, "NO_SUCH_FILE".into())
    );
}

#[test]
fn injected_faults() {
    let sim = Sim::start(SimConfig::new(FixtureSpec::listing(1)));
    let t = sim.login();
    sim.fault("DROP_NEXT_N", 2);
    for _ in 0..2 {
        assert_eq!(
            error_code(sim.get(&t, "/files")),
            (StatusCode::SERVICE_UNAVAILABLE, "TRANSIENT_IO".into())
        );
    }
    assert!(sim.get(&t, "/files").status().is_success());

    let f = sim
        .truth()
        .files
        .into_iter()
        .find(|f| !f.cloud_native)
        .unwrap();
    let r = &f.revisions[0];
    let path = format!("/files/{}/revisions/{}/content", f.file_id, r.id);
    sim.fault("CORRUPT_NEXT_N", 1);
    let bad = sim.get(&t, &path).bytes().unwrap();
    assert_eq!(bad.len() as u64, r.size);
    assert_ne!(hex::encode(Md5::digest(&bad)), r.md5);
    let good = sim.get(&t, &path).bytes().unwrap();
    assert_eq!(hex::encode(Md5::digest(&good)), r.md5);

    sim.fault("DROP_NEXT_N", 5);
    sim.fault("CLEAR", 0);
    assert!(sim.get(&t, "/files").status().is_success());
    assert_eq!(sim.fault("SET_ON_FIRE", 1), StatusCode::BAD_REQUEST);
}

#[test]
fn reseeding_replaces_the_catalog() {
    let sim = Sim::start(SimConfig::new(FixtureSpec::listing(1)));
    let resp = sim
        .http
        .post(sim.url("/admin/seed"))
        .json(&FixtureSpec::empty(1))
        .send()
        .unwrap();
    assert!(resp.status().is_success());
    assert_eq!(sim.truth().file_count, 0);
}

#[test]
fn admin_routes_hidden_outside_test_mode() {
    let mut config = SimConfig::new(FixtureSpec::listing(1));
    config.test_mode = false;
    let sim = Sim::start(config);
    let resp = sim.http.get(sim.url("/admin/truth")).send().unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    assert_eq!(sim.fault("DROP_NEXT_N", 1), StatusCode::NOT_FOUND);
    assert_eq!(
        sim.http
            .get(sim.url("/health"))
            .send()
            .unwrap()
            .text()
            .unwrap(),
        "ok"
    );
}

#[test]
fn throttle_bounds_transfer_rate() {
    let mut spec = FixtureSpec::listing(1);
    spec.file_size_bytes = 1 << 20;
    let sim = Sim::start(SimConfig::new(spec).throttled(2_000_000));
    let t = sim.login();
    let f = sim
        .truth()
        .files
        .into_iter()
        .find(|f| !f.cloud_native)
        .unwrap();
    let r = &f.revisions[0];
    let t0 = Instant::now();
    let body = sim
        .get(
            &t,
            &format!("/files/{}/revisions/{}/content", f.file_id, r.id),
        )
        .bytes()
        .unwrap();
    let secs = t0.elapsed().as_secs_f64();
    assert_eq!(body.len(), 1 << 20);
    // 1 MiB at 2 MB/s is about 0.52 s.
    assert!((0.4..1.5).contains(&secs), "{secs:.3}s");
}
