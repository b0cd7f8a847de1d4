#![allow(dead_code)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use kumoforge_core::engine::AcquisitionSidecar;
use kumoforge_core::provider::wire::WireAuthCode;
use kumoforge_sim::{FaultRequest, FixtureSpec, FixtureSummary, SimConfig, SimHandle, SimServer};

pub struct Run {
    pub status: i32,
    pub stdout: String,
    pub stderr: String,
}

impl From<Output> for Run {
    fn from(o: Output) -> Self {
        Run {
            status: o.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        }
    }
}

/// A simulator plus a scratch working directory for the CLI.
pub struct Bench {
    pub sim: SimHandle,
    pub dir: tempfile::TempDir,
}

impl Bench {
    pub fn new(spec: FixtureSpec) -> Self {
        Self::with_config(SimConfig::new(spec))
    }

    pub fn with_config(config: SimConfig) -> Self {
        Bench {
            sim: SimServer::start(config).expect("simulator starts"),
            dir: tempfile::tempdir().unwrap(),
        }
    }

    pub fn cwd(&self) -> &Path {
        self.dir.path()
    }

    /// Plays the browser half of the authorization flow and returns the
    /// code a user would paste.
    pub fn consent(&self) -> String {
        let code: WireAuthCode = reqwest::blocking::get(format!(
            "{}/oauth/authorize?client_id=kumoforge",
            self.sim.base_url()
        ))
        .unwrap()
        .json()
        .unwrap();
        code.code
    }

    /// Runs the CLI against the simulator with `input` on stdin.
    pub fn cli_with_input(&self, args: &[&str], input: &str) -> Run {
        let mut child = Command::new(env!("CARGO_BIN_EXE_kumoforge"))
            .args(args)
            .args(["--simulator-url", &self.sim.base_url()])
            .current_dir(self.cwd())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child
            .stdin
            .take()
            .unwrap()
            .write_all(input.as_bytes())
            .unwrap();
        child.wait_with_output().unwrap().into()
    }

    /// Runs the CLI, answering an authorization prompt if one appears.
    pub fn cli(&self, args: &[&str]) -> Run {
        let code = self.consent();
        self.cli_with_input(args, &format!("{code}\n"))
    }

    pub fn truth(&self) -> FixtureSummary {
        reqwest::blocking::get(format!("{}/admin/truth", self.sim.base_url()))
            .unwrap()
            .json()
            .unwrap()
    }

    pub fn fault(&self, kind: &str, n: u32) {
        let resp = reqwest::blocking::Client::new()
            .post(format!("{}/admin/fault", self.sim.base_url()))
            .json(&FaultRequest {
                kind: kind.into(),
                n: Some(n),
            })
            .send()
            .unwrap();
        assert!(resp.status().is_success());
    }

    pub fn user(&self) -> String {
        self.truth().user
    }

    pub fn evidence_root(&self) -> PathBuf {
        self.cwd().join("downloaded").join(self.user())
    }
}

pub fn sidecars(root: &Path) -> Vec<AcquisitionSidecar> {
    let mut out: Vec<AcquisitionSidecar> = fs::read_dir(root.join("metadata"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(".acquisition.json"))
        .map(|p| serde_json::from_slice(&fs::read(p).unwrap()).unwrap())
        .collect();
    out.sort_by(|a, b| a.file_id.cmp(&b.file_id));
    out
}

/// Lines between the log header and the summary line.
pub fn record_lines(stdout: &str) -> Vec<&str> {
    stdout
        .lines()
        .skip_while(|l| !l.starts_with("TIME(UTC)"))
        .skip(1)
        .take_while(|l| !l.contains(" files downloaded and "))
        .collect()
}

/// Seconds in a `Duration: h:mm:ss.ffffff` line.
pub fn duration_secs(stdout: &str) -> f64 {
    let text = stdout
        .lines()
        .find_map(|l| l.strip_prefix("Duration: "))
        .expect("duration line");
    let parts: Vec<&str> = text.split(':').collect();
    assert_eq!(parts.len(), 3, "{text}");
    parts[0].parse::<f64>().unwrap() * 3600.0
        + parts[1].parse::<f64>().unwrap() * 60.0
        + parts[2].parse::<f64>().unwrap()
}

/// Every regular file under `root`, relative, excluding bookkeeping.
pub fn content_files(root: &Path) -> Vec<PathBuf> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.push(p.strip_prefix(base).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.retain(|p| {
        let first = p
            .components()
            .next()
            .unwrap()
            .as_os_str()
            .to_string_lossy()
            .into_owned();
        first != "metadata" && first != "quarantine" && !first.ends_with(".log")
    });
    out.sort();
    out
}
