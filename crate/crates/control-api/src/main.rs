use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use kumoforge_control_api::{ApiConfig, ControlServer, DEFAULT_PORT};
use kumoforge_core::provider::Registry;

#[derive(Debug, Parser)]
#[command(
    name = "kumoforge-gui",
    version,
    about = "Local control API for cloud drive acquisition"
)]
struct Args {
    #[arg(long, default_value_t = DEFAULT_PORT)]
    port: u16,
    /// Interface to bind. Anything other than loopback needs --allow-external.
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    allow_external: bool,
    /// Directory holding config/, localdata/ and downloaded/.
    #[arg(long, default_value = ".")]
    base_dir: PathBuf,
    #[arg(long)]
    config_dir: Option<PathBuf>,
    /// Web UI assets served at /.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[arg(long, default_value = "http://127.0.0.1:8765")]
    simulator_url: String,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    let config = ApiConfig {
        host: args.host,
        port: args.port,
        base_dir: args.base_dir,
        config_dir: args.config_dir,
        static_dir: args.static_dir,
        ..ApiConfig::new(".")
    };
    if !config.is_loopback() {
        if !args.allow_external {
            eprintln!(
                "refusing to bind {}: the control API has no authentication; pass --allow-external to override",
                config.host
            );
            return ExitCode::from(1);
        }
        eprintln!(
            "WARNING: binding {} exposes acquisition controls and evidence to the network",
            config.host
        );
    }
    let registry = Registry::with_defaults(&args.simulator_url);
    match ControlServer::start(config, registry) {
        Ok(handle) => {
            eprintln!("Running on {}/", handle.base_url());
            handle.wait();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    }
}
