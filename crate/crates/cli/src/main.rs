use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;
use wayfind_client::{Client, ClientError};
use wayfind_core::api::{
    CalibrateRequest, GradCheckRequest, RunState, SizeReportRequest, StartRunRequest, TrainRequest,
};
use wayfind_core::finetune::{parse_dataset, ModelShape, TinyTwoHeadModel, TrainingConfig};
use wayfind_core::perception::BBox;
use wayfind_core::pipeline::{load_config, MetricsWriter, PipelineError};
use wayfind_core::quantization::LayerSpec;
use wayfind_server::{router, spawn, Runs, Spawned};

const EXIT_RUN_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INIT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "wayfind",
    version,
    about = "Scene-to-speech navigation pipeline",
    subcommand_negates_reqs = true
)]
struct Cli {
    /// Pipeline config (JSON).
    #[arg(long, required = true)]
    config: Option<PathBuf>,
    /// Frame directory, or `synthetic`.
    #[arg(long, default_value = "synthetic")]
    source: String,
    /// Detection script used instead of the configured backend.
    #[arg(long)]
    mock_detector: Option<PathBuf>,
    /// Print utterances instead of sending them to TTS.
    #[arg(long)]
    dry_run: bool,
    #[arg(long, default_value = "warn", value_parser = ["error", "warn", "info", "debug"], global = true)]
    log_level: String,
    /// Write one metrics record per cycle as JSON lines.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    /// Use a running service instead of an in-process one.
    #[arg(long, global = true)]
    server: Option<String>,
    /// Drive the cadence from a simulated clock (no real waiting).
    #[arg(long)]
    simulated_clock: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic model size after quantization.
    SizeReport {
        /// JSON list of `{"name", "element_count", "source_bits", "scale_count"}`.
        #[arg(long)]
        layers: PathBuf,
        #[arg(long, default_value_t = 4)]
        bits: u32,
    },
    /// Fine-tune the two-head model; prints one history record per epoch.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        /// TrainingConfig JSON; defaults when absent.
        #[arg(long)]
        training_config: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        hidden: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the best parameters here.
        #[arg(long)]
        params_out: Option<PathBuf>,
    },
    /// Check analytic gradients against central differences on a dataset.
    GradCheck {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 4)]
        hidden: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1e-4)]
        alpha: f64,
    },
    /// Focal length from an object of known height at a known distance.
    Calibrate {
        #[arg(long)]
        height_m: f64,
        #[arg(long)]
        distance_m: f64,
        /// `x1,y1,x2,y2` in pixels.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        bbox: Vec<f64>,
        /// Save the calibration record here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Self {
            code: EXIT_RUN_FAILED,
            err: e.into(),
        }
    }
}

fn fail(code: u8, err: impl Into<anyhow::Error>) -> Failure {
    Failure { code, err: err.into() }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

async fn connect(server: Option<&str>) -> anyhow::Result<(Client, Option<Spawned>)> {
    match server {
        Some(url) => Ok((Client::new(url), None)),
        None => {
            let local = spawn("127.0.0.1:0", router(Runs::default()))
                .await
                .context("starting in-process service")?;
            Ok((Client::new(&local.url()), Some(local)))
        }
    }
}

async fn run_pipeline(cli: &Cli, client: &Client) -> Result<(), Failure> {
    let path = cli.config.as_ref().expect("clap enforces --config");
    let mut config = load_config(path).map_err(|e| fail(EXIT_CONFIG, e))?;
    if let Some(script) = &cli.mock_detector {
        if !script.is_file() {
            return Err(fail(EXIT_CONFIG, PipelineError::FileNotFound(script.clone())));
        }
        config.perception.mock_script = Some(absolute(script));
    }
    if cli.dry_run {
        config.tts.dry_run = true;
    }
    let source = if cli.source == "synthetic" {
        cli.source.clone()
    } else {
        absolute(Path::new(&cli.source)).display().to_string()
    };
    let dry_run = config.tts.dry_run;

    let run_id = client
        .start_run(&StartRunRequest {
            config,
            source,
            simulated_clock: cli.simulated_clock,
        })
        .await
        .map_err(|e| match e.kind() {
            Some("InitializationError") => fail(EXIT_INIT, e),
            Some("SchemaViolation" | "FileNotFound") => fail(EXIT_CONFIG, e),
            _ => fail(EXIT_RUN_FAILED, e),
        })?;
    tracing::info!(run_id = %run_id, "run started");

    let mut metrics = match &cli.metrics_out {
        Some(p) => Some(MetricsWriter::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        ))),
        None => None,
    };
    let stdout = std::io::stdout();
    let mut offset = 0;
    let mut stop_requested = false;
    let ctrl_c = tokio::signal::ctrl_c();
    tokio::pin!(ctrl_c);
    loop {
        let status = client.run_status(&run_id, offset).await?;
        offset = status.next_offset;
        for rec in &status.records {
            if let Some(w) = metrics.as_mut() {
                w.write(&rec.metrics)?;
            }
            if dry_run {
                if let Some(u) = &rec.utterance {
                    let mut out = stdout.lock();
                    writeln!(out, "{u}")?;
                    out.flush()?;
                }
            }
        }
        match status.state {
            RunState::Running => {}
            RunState::Finished => {
                if let Some(s) = status.summary {
                    tracing::info!(cycles = s.cycles, dropped = s.dropped, stop = ?s.stop, "run finished");
                    if let Some(tts) = s.tts {
                        if tts.errors > 0 {
                            tracing::warn!(errors = tts.errors, last = ?tts.last_error, "tts errors during run");
                        }
                    }
                }
                return Ok(());
            }
            RunState::Failed => {
                let msg = status.error.map_or_else(|| "run failed".to_string(), |e| e.message);
                return Err(fail(EXIT_RUN_FAILED, anyhow::anyhow!(msg)));
            }
        }
        tokio::select! {
            _ = tokio::time::sleep(Duration::from_millis(50)) => {}
            _ = &mut ctrl_c, if !stop_requested => {
                stop_requested = true;
                tracing::info!("stopping after the current cycle");
                client.stop_run(&run_id).await?;
            }
        }
    }
}

fn model_for(inputs: usize, hidden: usize, seed: u64) -> TinyTwoHeadModel {
    TinyTwoHeadModel::init(ModelShape::new(inputs, hidden), seed)
}

async fn subcommand(cmd: &Command, client: &Client) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match cmd {
        Command::SizeReport { layers, bits } => {
            let layers: Vec<LayerSpec> = read_json(layers).map_err(|e| fail(EXIT_CONFIG, e))?;
            let report = client
                .size_report(&SizeReportRequest {
                    layers,
                    bit_width: *bits,
                })
                .await?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
        }
        Command::Train {
            train,
            val,
            training_config,
            hidden,
            seed,
            params_out,
        } => {
            let train_set = parse_dataset(&std::fs::read_to_string(train)?).map_err(|e| fail(EXIT_CONFIG, e))?;
            let val_set = parse_dataset(&std::fs::read_to_string(val)?).map_err(|e| fail(EXIT_CONFIG, e))?;
            let Some(first) = train_set.first() else {
                return Err(fail(EXIT_CONFIG, anyhow::anyhow!("training set is empty")));
            };
            let config: TrainingConfig = match training_config {
                Some(p) => read_json(p).map_err(|e| fail(EXIT_CONFIG, e))?,
                None => TrainingConfig::default(),
            };
            let outcome = client
                .train(&TrainRequest {
                    model: Some(model_for(first.x.len(), *hidden, *seed)),
                    shape: None,
                    seed: *seed,
                    train: train_set,
                    validation: val_set,
                    config,
                })
                .await?;
            for rec in &outcome.history {
                writeln!(out, "{}", serde_json::to_string(rec)?)?;
            }
            tracing::info!(best_epoch = ?outcome.best_epoch, stopped_early = outcome.stopped_early, "training done");
            if let Some(p) = params_out {
                std::fs::write(p, serde_json::to_string_pretty(&outcome.params)?)?;
            }
        }
        Command::GradCheck {
            data,
            hidden,
            seed,
            lambda,
            alpha,
        } => {
            let batch = parse_dataset(&std::fs::read_to_string(data)?).map_err(|e| fail(EXIT_CONFIG, e))?;
            let Some(first) = batch.first() else {
                return Err(fail(EXIT_CONFIG, anyhow::anyhow!("dataset is empty")));
            };
            let resp = client
                .grad_check(&GradCheckRequest {
                    model: model_for(first.x.len(), *hidden, *seed),
                    batch,
                    lambda: *lambda,
                    alpha: *alpha,
                    step: 1e-5,
                })
                .await?;
            writeln!(out, "{}", serde_json::to_string(&resp)?)?;
        }
        Command::Calibrate {
            height_m,
            distance_m,
            bbox,
            out: path,
        } => {
            let [x1, y1, x2, y2] = bbox[..] else {
                return Err(fail(EXIT_CONFIG, anyhow::anyhow!("--bbox needs four values")));
            };
            let record = client
                .calibrate(&CalibrateRequest {
                    known_height_m: *height_m,
                    known_distance_m: *distance_m,
                    bbox: BBox::new(x1, y1, x2, y2),
                })
                .await
                .map_err(|e| match e {
                    ClientError::Api { .. } => fail(EXIT_CONFIG, e),
                    other => fail(EXIT_RUN_FAILED, other),
                })?;
            let text = serde_json::to_string_pretty(&record)?;
            if let Some(p) = path {
                std::fs::write(p, &text)?;
            }
            writeln!(out, "{text}")?;
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::new(format!("{},hyper=warn,reqwest=warn", cli.log_level)))
        .with_writer(std::io::stderr)
        .init();

    let result = async {
        let (client, local) = connect(cli.server.as_deref()).await?;
        let r = match &cli.command {
            Some(cmd) => subcommand(cmd, &client).await,
            None => run_pipeline(&cli, &client).await,
        };
        if let Some(local) = local {
            let _ = local.shutdown().await;
        }
        r
    }
    .await;

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, err }) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
