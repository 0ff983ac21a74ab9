use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tokio::net::TcpListener;
use tracing_subscriber::EnvFilter;
use wayfind_core::perception::DetectionScript;
use wayfind_server::stubs::{stub_detector_router, StubTts};
use wayfind_server::{router, serve, Runs};

#[derive(Parser)]
#[command(name = "wayfind-server", version, about = "wayfind HTTP service and stub backends")]
struct Args {
    #[arg(long, default_value = "info", global = true)]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Run a stub TTS endpoint (`POST /speak`).
    StubTts {
        #[arg(long, default_value = "127.0.0.1:8090")]
        addr: String,
        #[arg(long, default_value_t = 300)]
        ms_per_word: u64,
    },
    /// Run a scripted detector endpoint (`POST /detect`).
    StubDetector {
        #[arg(long, default_value = "127.0.0.1:8070")]
        addr: String,
        #[arg(long)]
        script: PathBuf,
    },
}

async fn ctrl_c() {
    let _ = tokio::signal::ctrl_c().await;
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_new(&args.log_level).context("bad --log-level")?)
        .with_writer(std::io::stderr)
        .init();

    let (addr, app, runs) = match args.command {
        Command::Serve { addr } => {
            let runs = Runs::default();
            (addr, router(runs.clone()), Some(runs))
        }
        Command::StubTts { addr, ms_per_word } => (addr, StubTts::new(ms_per_word).router(), None),
        Command::StubDetector { addr, script } => {
            let script = DetectionScript::load(&script)?;
            (addr, stub_detector_router(script), None)
        }
    };
    let listener = TcpListener::bind(&addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    serve(listener, app, async move {
        ctrl_c().await;
        if let Some(runs) = runs {
            runs.stop_all();
        }
    })
    .await?;
    Ok(())
}
