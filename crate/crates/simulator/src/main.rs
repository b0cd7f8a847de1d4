use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use kumoforge_core::provider::Dialect;
use kumoforge_sim::{FixtureSpec, SimConfig, SimServer, ThrottleConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Listing,
    Desk,
}

#[derive(Debug, Parser)]
#[command(
    name = "simdrive",
    version,
    about = "Deterministic cloud drive simulator"
)]
struct Args {
    #[arg(long, default_value_t = 8765)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "listing")]
    preset: Preset,
    /// Overrides the preset's file count.
    #[arg(long)]
    files: Option<usize>,
    /// Overrides the preset's file size in bytes.
    #[arg(long)]
    size: Option<u64>,
    /// Metadata dialect: HASHED (MD5 in metadata) or UNHASHED (opaque rev only)
    #[arg(long)]
    dialect: Option<Dialect>,
    /// Caps content delivery at this rate, shared by all connections
    #[arg(long)]
    throttle_bytes_per_sec: Option<u64>,
    /// Enables the /admin endpoints.
    #[arg(long)]
    test_mode: bool,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    let mut spec = match args.preset {
        Preset::Listing => FixtureSpec::listing(args.seed),
        Preset::Desk => FixtureSpec::desk_scale(args.seed),
    };
    if let Some(n) = args.files {
        spec.file_count = n;
    }
    if let Some(s) = args.size {
        spec.file_size_bytes = s;
    }
    if let Some(d) = args.dialect {
        spec.dialect = d;
    }
    let config = SimConfig {
        host: args.host,
        port: args.port,
        throttle: args
            .throttle_bytes_per_sec
            .map(ThrottleConfig::rate)
            .unwrap_or_else(ThrottleConfig::unlimited),
        test_mode: args.test_mode,
        ..SimConfig::new(spec)
    };
    match SimServer::start(config) {
        Ok(handle) => {
            eprintln!("simdrive listening on {}", handle.base_url());
            handle.wait();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
