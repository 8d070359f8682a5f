use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use calltriage::asr::{HttpTranscriptionBackend, TranscriptionBackend};
use calltriage::batch::{self, BatchOptions};
use calltriage::config::Config;
use calltriage::content::{HttpLlmBackend, LlmBackend};
use calltriage::pipeline::Pipeline;
use calltriage::queue::CallId;
use calltriage::record::CallRecord;
use calltriage::service::CallService;
use calltriage::stub::{FixtureSet, StubLlmBackend, StubTranscriptionBackend};
use calltriage::surge::{simulate_surge, SurgeParams};
use calltriage::{api, audio, scaling};
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "calltriage", version, about = "Offline emergency call triage")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = BackendMode::Stub)]
    backend_mode: BackendMode,
    /// Stub-mode fixture file. `process` falls back to `<dir>/fixtures.json`.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendMode {
    Stub,
    Live,
}

#[derive(Subcommand)]
enum Command {
    /// Score every WAV file in a directory.
    Process {
        dir: PathBuf,
        /// Fixed report timestamp (RFC 3339). Makes output reproducible.
        #[arg(long)]
        report_time: Option<DateTime<Utc>>,
        #[arg(long)]
        concurrency: Option<usize>,
    },
    /// Score a single WAV file.
    ScoreFile { wav: PathBuf },
    /// Predicted ASR word error rate for a model and training-set size.
    PredictWer {
        /// Model size in millions of parameters.
        #[arg(long)]
        params: f64,
        /// Hours of training audio.
        #[arg(long)]
        hours: f64,
    },
    /// Simulate a call surge against a fixed dispatcher pool.
    Simulate {
        #[arg(long, default_value_t = 200)]
        calls: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Mean arrivals per second.
        #[arg(long, default_value_t = 0.5)]
        rate: f64,
        #[arg(long, default_value_t = 4)]
        dispatchers: usize,
        #[arg(long, default_value_t = 0.5)]
        early_exit_probability: f64,
        #[arg(long, default_value_t = 90.0)]
        handle_time: f64,
    },
    /// Run the dispatcher HTTP service.
    Serve {
        /// Overrides `service.bind`.
        #[arg(long)]
        bind: Option<SocketAddr>,
        /// Overrides `service.storage_path`.
        #[arg(long)]
        storage: Option<PathBuf>,
    },
}

type CliResult<T> = Result<T, String>;

fn fail<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> String + '_ {
    move |e| format!("{context}: {e}")
}

type Backends = (Arc<dyn TranscriptionBackend>, Arc<dyn LlmBackend>);

fn backends(cli: &Cli, config: &Config, default_fixtures: Option<&Path>) -> CliResult<Backends> {
    match cli.backend_mode {
        BackendMode::Live => {
            let b = &config.backends;
            let asr = HttpTranscriptionBackend::new(&b.asr_url, b.asr_timeout())
                .map_err(fail("asr backend"))?;
            let llm = HttpLlmBackend::new(&b.llm_url, &b.llm_model, b.llm_timeout())
                .map_err(fail("llm backend"))?;
            Ok((Arc::new(asr), Arc::new(llm)))
        }
        BackendMode::Stub => {
            let path = cli.fixtures.clone().or_else(|| {
                default_fixtures
                    .map(Path::to_path_buf)
                    .filter(|p| p.exists())
            });
            let set = match path {
                Some(p) => {
                    FixtureSet::load(&p).map_err(fail(&format!("fixtures {}", p.display())))?
                }
                None => {
                    tracing::warn!("stub mode without fixtures: every transcription will fail");
                    FixtureSet::default()
                }
            };
            Ok((
                Arc::new(StubTranscriptionBackend::from_fixtures(&set)),
                Arc::new(StubLlmBackend::from_fixtures(&set)),
            ))
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serialisable output")
    );
}

async fn run(cli: Cli) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p).map_err(fail(&p.display().to_string()))?,
        None => Config::default(),
    };

    match &cli.command {
        Command::Process {
            dir,
            report_time,
            concurrency,
        } => {
            let (asr, llm) = backends(&cli, &config, Some(&dir.join("fixtures.json")))?;
            let options = BatchOptions {
                concurrency: *concurrency,
                report_time: *report_time,
            };
            let report = batch::batch_process(dir, Arc::new(config), asr, llm, &options)
                .await
                .map_err(fail(&dir.display().to_string()))?;
            if cli.json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_table());
            }
        }
        Command::ScoreFile { wav } => {
            let (asr, llm) = backends(
                &cli,
                &config,
                wav.parent().map(|d| d.join("fixtures.json")).as_deref(),
            )?;
            let buf = audio::load_audio_file(wav).map_err(fail(&wav.display().to_string()))?;
            let pipeline = Pipeline::new(Arc::new(config), asr, llm);
            let id = CallId(buf.source_id().to_owned());
            let record = CallRecord::new(
                id,
                Utc::now(),
                buf.source_id(),
                wav.display().to_string(),
                buf.duration(),
            );
            let record = pipeline.process_call(record, Arc::new(buf), |_| {}).await;
            if cli.json {
                print_json(&record);
            } else {
                print_record(&record);
            }
        }
        Command::PredictWer { params, hours } => {
            let wer = scaling::predict_wer(*params, *hours).map_err(|e| e.to_string())?;
            if cli.json {
                print_json(&serde_json::json!({
                    "model_params_millions": params,
                    "dataset_hours": hours,
                    "wer_percent": wer,
                }));
            } else {
                println!("predicted WER: {wer:.2}%");
            }
        }
        Command::Simulate {
            calls,
            seed,
            rate,
            dispatchers,
            early_exit_probability,
            handle_time,
        } => {
            let params = SurgeParams {
                n_calls: *calls,
                seed: *seed,
                arrival_rate: *rate,
                dispatchers: *dispatchers,
                early_exit_probability: *early_exit_probability,
                handle_time_secs: *handle_time,
                ..Default::default()
            };
            if params.arrival_rate.is_nan() || params.arrival_rate <= 0.0 {
                return Err("--rate must be positive".into());
            }
            let report = simulate_surge(&params);
            if cli.json {
                print_json(&report);
            } else {
                print!("{}", report.to_table());
            }
        }
        Command::Serve { bind, storage } => {
            if let Some(s) = storage {
                config.service.storage_path = s.clone();
            }
            let addr: SocketAddr = match bind {
                Some(a) => *a,
                None => config.service.bind.parse().map_err(fail("service.bind"))?,
            };
            let (asr, llm) = backends(&cli, &config, None)?;
            let (service, recovery) =
                CallService::start(config, asr, llm).map_err(fail("starting service"))?;
            tracing::info!(
                requeued = recovery.requeued,
                reprocessed = recovery.reprocessed,
                corrupt = recovery.corrupt.len(),
                "recovered state"
            );
            api::serve(service, addr).await.map_err(fail("server"))?;
        }
    }
    Ok(())
}

fn print_record(r: &CallRecord) {
    println!("source:      {}", r.source_id);
    println!("duration:    {:.2}s", r.audio_duration);
    if let Some(a) = &r.assignment {
        println!(
            "level:       {}{}",
            a.level.label(),
            if a.early_exit { " (early exit)" } else { "" }
        );
        println!("reasons:     {}", a.reason_codes.join("; "));
    }
    if let Some(t) = &r.transcript {
        println!("transcript:  {}", t.text);
        println!("confidence:  {:.3} {:?}", t.confidence, r.confidence_band);
    }
    if let Some(s) = &r.content_score {
        println!("content:     {}", s.s_c);
    }
    if let (Some(f), Some(d)) = (&r.features, &r.distress) {
        println!(
            "F0:          mean {:.1} Hz  sd {:.1}  cv {:.3}  jitter {:.4}",
            f.f0_mean, f.f0_std, f.f0_cv, f.jitter
        );
        println!(
            "distress:    {:.3}  (P {:.2} V {:.2} E {:.2} J {:.2})",
            d.composite, d.pitch_elevation, d.instability, d.energy, d.perturbation
        );
    }
    for e in &r.stage_errors {
        println!("note:        {e}");
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "calltriage=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
