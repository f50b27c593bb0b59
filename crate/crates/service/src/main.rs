use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use epicontrol_service::{router, Service, ServiceConfig};

#[derive(Parser)]
#[command(
    name = "epicontrol-server",
    version,
    about = "Job service for epidemic calibration and lockdown optimisation"
)]
struct Args {
    /// Directory holding datasets/, jobs/ and artifacts/.
    #[arg(long, env = "EPICONTROL_SERVICE_DIR")]
    data_dir: PathBuf,
    #[arg(long, env = "EPICONTROL_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, env = "EPICONTROL_WORKERS")]
    workers: Option<usize>,
    /// Seed for submissions that do not set one.
    #[arg(long, env = "EPICONTROL_DEFAULT_SEED", default_value_t = 0)]
    default_seed: u64,
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let mut config = ServiceConfig::new(&args.data_dir);
    if let Some(w) = args.workers {
        config.workers = w.max(1);
    }
    config.default_seed = args.default_seed;
    let service = match Service::open(config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot open {}: {e}", args.data_dir.display());
            return ExitCode::from(2);
        }
    };
    let listener = match tokio::net::TcpListener::bind(args.bind).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot bind {}: {e}", args.bind);
            return ExitCode::from(2);
        }
    };
    log::info!("listening on {}", args.bind);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
        log::info!("shutting down");
    };
    match axum::serve(listener, router(service))
        .with_graceful_shutdown(shutdown)
        .await
    {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
