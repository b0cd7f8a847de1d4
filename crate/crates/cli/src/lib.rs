//! `kumoforge -s <service> (-l <filter> | -d <filter> | -csv <file>) [-p <path>]`

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use kumoforge_core::engine::{
    acquire, prepare, read_manifest_ids, render_listing, AcquireOptions, AcquisitionJob,
    EngineError, Plan, RetryPolicy, Workspace,
};
use kumoforge_core::model::LOG_HEADER;
use kumoforge_core::provider::{
    complete_auth, Driver, ProviderError, ProviderSession, Registry, ServiceId, TokenStore,
};
use kumoforge_core::FilterSpec;

pub const DEFAULT_SIMULATOR_URL: &str = "http://127.0.0.1:8765";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ITEM_FAILED: i32 = 2;
pub const EXIT_FATAL: i32 = 3;

pub const USAGE: &str = "\
usage: kumoforge -s <service> (-l <filter> | -d <filter> | -csv <file>) [-p <path>]
                 [--config-dir <dir>] [--simulator-url <url>]

  -s <service>        gdrive, dropbox (dbox), onedrive, box, simdrive
  -l <filter>         list files and write the discovery CSV
  -d <filter>         download files
  -csv <file>         download the files listed in a CSV manifest
  -p <path>           destination directory (default: downloaded/<user>/)

filters: all, doc, xls, ppt, text, pdf, officedocs, image, audio, video";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    List(FilterSpec),
    Download(FilterSpec),
    DownloadManifest(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliInvocation {
    pub service: ServiceId,
    pub action: Action,
    pub dest_override: Option<PathBuf>,
    pub config_dir: Option<PathBuf>,
    pub simulator_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Run(CliInvocation),
    Help,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

/// Parses arguments (without the program name). Total: every input yields
/// a command or a usage error.
pub fn parse_args<S: AsRef<str>>(argv: &[S]) -> Result<Command, UsageError> {
    let mut service = None;
    let mut action: Option<(&str, Action)> = None;
    let mut dest = None;
    let mut config_dir = None;
    let mut simulator_url = None;
    let mut seen = BTreeSet::new();

    let mut it = argv.iter().map(AsRef::as_ref);
    while let Some(flag) = it.next() {
        if flag == "-h" || flag == "--help" {
            return Ok(Command::Help);
        }
        if !matches!(
            flag,
            "-s" | "-l" | "-d" | "-csv" | "-p" | "--config-dir" | "--simulator-url"
        ) {
            return Err(usage(format!("unexpected argument '{flag}'")));
        }
        let value = it
            .next()
            .ok_or_else(|| usage(format!("{flag} requires a value")))?;
        if !seen.insert(flag) {
            return Err(usage(format!("{flag} given more than once")));
        }
        let new_action = match flag {
            "-s" => {
                service = Some(
                    value
                        .parse::<ServiceId>()
                        .map_err(|_| usage(format!("unknown service '{value}'")))?,
                );
                None
            }
            "-l" | "-d" => {
                let filter = value
                    .parse::<FilterSpec>()
                    .map_err(|e| usage(e.to_string()))?;
                Some(if flag == "-l" {
                    Action::List(filter)
                } else {
                    Action::Download(filter)
                })
            }
            "-csv" => Some(Action::DownloadManifest(PathBuf::from(value))),
            "-p" => {
                dest = Some(PathBuf::from(value));
                None
            }
            "--config-dir" => {
                config_dir = Some(PathBuf::from(value));
                None
            }
            _ => {
                simulator_url = Some(value.to_string());
                None
            }
        };
        if let Some(a) = new_action {
            if let Some((prev, _)) = &action {
                return Err(usage(format!("{prev} and {flag} cannot be combined")));
            }
            action = Some((flag, a));
        }
    }
    let service = service.ok_or_else(|| usage("missing -s <service>"))?;
    let (_, action) = action.ok_or_else(|| usage("missing action: -l, -d or -csv"))?;
    Ok(Command::Run(CliInvocation {
        service,
        action,
        dest_override: dest,
        config_dir,
        simulator_url,
    }))
}

pub type SharedWriter = Arc<Mutex<dyn Write + Send>>;

/// Process surroundings, injectable for tests.
pub struct CliEnv {
    pub cwd: PathBuf,
    pub input: Box<dyn BufRead>,
    pub out: SharedWriter,
    pub err: SharedWriter,
    pub retry: RetryPolicy,
}

impl CliEnv {
    pub fn process() -> std::io::Result<Self> {
        Ok(CliEnv {
            cwd: std::env::current_dir()?,
            input: Box::new(std::io::BufReader::new(std::io::stdin())),
            out: Arc::new(Mutex::new(std::io::stdout())),
            err: Arc::new(Mutex::new(std::io::stderr())),
            retry: RetryPolicy::default(),
        })
    }
}

fn say(w: &SharedWriter, text: &str) {
    let mut w = w.lock().unwrap_or_else(|e| e.into_inner());
    let _ = writeln!(w, "{text}");
    let _ = w.flush();
}

enum Failure {
    Fatal(String),
    Usage(String),
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Manifest { .. } | EngineError::UnknownManifestId(_) => {
                Failure::Usage(format!("{}: {e}", e.code()))
            }
            other => Failure::Fatal(format!("{}: {other}", other.code())),
        }
    }
}

impl From<ProviderError> for Failure {
    fn from(e: ProviderError) -> Self {
        Failure::Fatal(format!("{}: {e}", e.code()))
    }
}

/// Prints the authorization URL, reads the access code, and stores the
/// resulting token.
fn interactive_auth(
    driver: &dyn Driver,
    store: &TokenStore,
    env: &mut CliEnv,
) -> Result<ProviderSession, Failure> {
    let url = driver.begin_auth()?;
    say(&env.err, "Go to the following link in your browser:");
    say(&env.err, &url);
    {
        let mut w = env.err.lock().unwrap_or_else(|e| e.into_inner());
        let _ = write!(w, "Enter verification code: ");
        let _ = w.flush();
    }
    let mut code = String::new();
    env.input
        .read_line(&mut code)
        .map_err(|e| Failure::Fatal(format!("reading access code: {e}")))?;
    let code = code.trim();
    if code.is_empty() {
        return Err(Failure::Fatal(
            "AUTH_CODE_REJECTED: no access code entered".into(),
        ));
    }
    Ok(complete_auth(driver, code, store)?)
}

fn session_for(
    driver: &dyn Driver,
    store: &TokenStore,
    service: ServiceId,
    env: &mut CliEnv,
) -> Result<ProviderSession, Failure> {
    match store.load(service) {
        Ok(s) => Ok(s),
        Err(ProviderError::NotAuthenticated(_)) => interactive_auth(driver, store, env),
        Err(e) => Err(e.into()),
    }
}

/// Discovery and selection, re-authenticating once if the stored token is
/// no longer accepted.
fn plan_with_auth(
    driver: &dyn Driver,
    store: &TokenStore,
    inv: &CliInvocation,
    ws: &Workspace,
    filter: &FilterSpec,
    env: &mut CliEnv,
) -> Result<(ProviderSession, Plan), Failure> {
    let mut session = session_for(driver, store, inv.service, env)?;
    for attempt in 0..2 {
        match prepare(driver, &session, ws, filter, &env.retry) {
            Ok(plan) => return Ok((session, plan)),
            Err(EngineError::Provider(
                ProviderError::TokenExpired | ProviderError::NotAuthenticated(_),
            )) if attempt == 0 => {
                say(&env.err, "stored access token was rejected; re-authorizing");
                let _ = store.remove(inv.service);
                session = interactive_auth(driver, store, env)?;
            }
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!("second attempt always returns")
}

fn execute(inv: &CliInvocation, env: &mut CliEnv) -> Result<i32, Failure> {
    let ws = Workspace::new(&env.cwd);
    let config_dir = match &inv.config_dir {
        Some(d) => env.cwd.join(d),
        None => ws.config_dir(),
    };
    let store = TokenStore::new(config_dir);
    let url = inv
        .simulator_url
        .clone()
        .unwrap_or_else(|| DEFAULT_SIMULATOR_URL.to_string());
    let registry = Registry::with_defaults(&url);
    let driver = registry
        .get(inv.service)
        .ok_or_else(|| Failure::Usage(format!("service {} is not available", inv.service)))?;

    let filter = match &inv.action {
        Action::List(f) | Action::Download(f) => f.clone(),
        Action::DownloadManifest(path) => {
            FilterSpec::manifest(read_manifest_ids(&env.cwd.join(path))?)
        }
    };
    let (session, plan) = plan_with_auth(driver.as_ref(), &store, inv, &ws, &filter, env)?;

    if let Action::List(_) = inv.action {
        let shown = kumoforge_core::engine::FileManifest::new(
            session.service,
            session.user.clone(),
            plan.targets.clone(),
        );
        let mut w = env.out.lock().unwrap_or_else(|e| e.into_inner());
        let _ = write!(w, "{}", render_listing(&shown));
        let _ = w.flush();
        return Ok(EXIT_OK);
    }

    let destination = match &inv.dest_override {
        Some(p) => env.cwd.join(p),
        None => ws.downloads_for(&session.user),
    };
    let out = env.out.clone();
    let options = AcquireOptions {
        retry: env.retry,
        console: Some(Arc::new(move |line: &str| say(&out, line))),
        display_base: Some(env.cwd.clone()),
        ..AcquireOptions::default()
    };
    say(&env.out, LOG_HEADER);
    let job = AcquisitionJob::new(session, filter, destination);
    let job = acquire(driver.as_ref(), job, &plan.targets, &options)?;
    for f in &job.failures {
        let mut line = format!(
            "FAILED {} {} {}: {}",
            f.file_id, f.remote_path, f.code, f.message
        );
        if let Some(q) = &f.quarantine_path {
            line.push_str(&format!(" (quarantined at {q})"));
        }
        say(&env.err, &line);
    }
    say(&env.out, &job.summary_line());
    say(&env.out, &job.duration_line());
    Ok(if job.counters.failed > 0 {
        EXIT_ITEM_FAILED
    } else {
        EXIT_OK
    })
}

/// Runs a parsed invocation and returns the process exit status.
pub fn run(inv: &CliInvocation, env: &mut CliEnv) -> i32 {
    match execute(inv, env) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            say(&env.err, &msg);
            EXIT_USAGE
        }
        Err(Failure::Fatal(msg)) => {
            say(&env.err, &msg);
            EXIT_FATAL
        }
    }
}

/// Parses and runs; the whole program minus process plumbing.
pub fn main_with<S: AsRef<str>>(argv: &[S], env: &mut CliEnv) -> i32 {
    match parse_args(argv) {
        Ok(Command::Help) => {
            say(&env.out, USAGE);
            EXIT_OK
        }
        Ok(Command::Run(inv)) => run(&inv, env),
        Err(e) => {
            say(&env.err, &format!("error: {e}\n\n{USAGE}"));
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_cmd(argv: &[&str]) -> CliInvocation {
        match parse_args(argv).unwrap() {
            Command::Run(inv) => inv,
            Command::Help => panic!("help"),
        }
    }

    #[test]
    fn listing_examples() {
        let inv = run_cmd(&["-s", "dbox", "-l", "all"]);
        assert_eq!(inv.service, ServiceId::Dropbox);
        assert_eq!(inv.action, Action::List(FilterSpec::All));

        let inv = run_cmd(&["-s", "box", "-l", "image"]);
        assert_eq!(inv.service, ServiceId::Box);
        assert_eq!(inv.action, Action::List("image".parse().unwrap()));

        let inv = run_cmd(&["-s", "gdrive", "-csv", "/home/user/Desktop/gdrive_list.csv"]);
        assert_eq!(
            inv.action,
            Action::DownloadManifest("/home/user/Desktop/gdrive_list.csv".into())
        );
    }

    #[test]
    fn destination_and_simulator_flags() {
        let inv = run_cmd(&[
            "-s",
            "simdrive",
            "-d",
            "officedocs",
            "-p",
            "/home/user/Desktop/",
            "--simulator-url",
            "http://127.0.0.1:9",
            "--config-dir",
            "cfg",
        ]);
        assert_eq!(inv.dest_override, Some("/home/user/Desktop/".into()));
        assert_eq!(inv.simulator_url.as_deref(), Some("http://127.0.0.1:9"));
        assert_eq!(inv.config_dir, Some("cfg".into()));
        assert_eq!(inv.action, Action::Download("officedocs".parse().unwrap()));
    }

    #[test]
    fn usage_errors() {
        for argv in [
            &[
                "-s",
                "gdrive",
                "-d",
                "all",
                "-l",
                "-p",
                "/home/user/Desktop/",
            ][..],
            &["-s", "gdrive", "-d", "all", "-l", "all"],
            &["-s", "icloud", "-l", "all"],
            &["-s", "gdrive", "-l", "spreadsheets"],
            &["-s", "gdrive"],
            &["-l", "all"],
            &["-s", "gdrive", "-l"],
            &["-s", "gdrive", "-s", "box", "-l", "all"],
            &["-s", "gdrive", "-x", "all"],
            &[],
        ] {
            assert!(parse_args(argv).is_err(), "{argv:?}");
        }
    }

    #[test]
    fn help() {
        assert_eq!(parse_args(&["--help"]).unwrap(), Command::Help);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn token() -> impl Strategy<Value = String> {
            prop_oneof![
                Just("-s".to_string()),
                Just("-l".to_string()),
                Just("-d".to_string()),
                Just("-csv".to_string()),
                Just("-p".to_string()),
                Just("gdrive".to_string()),
                Just("dbox".to_string()),
                Just("all".to_string()),
                Just("pdf".to_string()),
                ".{0,8}",
            ]
        }

        proptest! {
            #[test]
            fn parse_is_total(argv in proptest::collection::vec(token(), 0..8)) {
                // Must return, never panic; a success has exactly one action.
                if let Ok(Command::Run(inv)) = parse_args(&argv) {
                    let actions = argv.iter().filter(|a| ["-l", "-d", "-csv"].contains(&a.as_str())).count();
                    prop_assert!(actions >= 1);
                    let _ = inv;
                }
            }
        }
    }
}
