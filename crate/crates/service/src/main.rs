use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use terratrace_core::analysis::{self, AnalysisError, AnalysisRequest};
use terratrace_core::ingest::{self, DEFAULT_MAX_CLOUD};
use terratrace_core::llm::{BackendKind, LlmBackend};
use terratrace_core::store::{self, DatasetManifest, MANIFEST_FILE};
use terratrace_core::synth::{self, FixtureSpec, Profile};
use terratrace_core::{ClassifierParams, GeoPolygon, RegionLayout, Store};
use terratrace_service::config::{self, AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "terratrace", version, about = "NDVI time-series store and land-use analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a store from an observation CSV.
    Ingest {
        /// Observation CSV: lat,lon,date,red,nir,cloud_fraction.
        #[arg(long)]
        obs: PathBuf,
        /// `default` for the California layout, or a manifest file / store
        /// directory whose layout is reused.
        #[arg(long, default_value = "default")]
        extent: String,
        /// Store directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Observations with a larger cloud fraction are dropped.
        #[arg(long, default_value_t = DEFAULT_MAX_CLOUD)]
        max_cloud: f64,
        /// Replace an existing store in `--out`.
        #[arg(long)]
        force: bool,
    },
    /// Analyze one polygon and print the report.
    Analyze {
        /// Store directory built by `ingest`.
        #[arg(long)]
        store: PathBuf,
        /// `{"vertices": [[lat, lon], ...]}` or a GeoJSON Polygon.
        #[arg(long)]
        polygon: PathBuf,
        /// First day of the analysis window (default: store start).
        #[arg(long)]
        from: Option<NaiveDate>,
        /// Last day of the analysis window (default: store end).
        #[arg(long)]
        to: Option<NaiveDate>,
        /// Polynomial fit degree, 0 to 12.
        #[arg(long)]
        degree: Option<usize>,
        /// Attach a narrative analysis from this backend.
        #[arg(long, value_enum)]
        llm: Option<LlmKind>,
        /// Classifier parameters as JSON.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Fire events CSV: lat,lon,date,confidence.
        #[arg(long)]
        fires: Option<PathBuf>,
        /// Service config JSON; command-line flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        /// Service config JSON; command-line flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Store directory built by `ingest`.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Listening port (default 8080; 0 picks a free one).
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// LLM backend for analyses and chat.
        #[arg(long, value_enum)]
        llm: Option<LlmKind>,
        /// Classifier parameters as JSON.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Fire events CSV: lat,lon,date,confidence.
        #[arg(long)]
        fires: Option<PathBuf>,
    },
    /// Write a seeded synthetic observation CSV.
    GenFixture {
        /// Output file, or `-` for standard output.
        #[arg(long)]
        out: PathBuf,
        /// Number of cells, laid out as a square block.
        #[arg(long, default_value_t = 100)]
        cells: usize,
        /// Length of the series in days from 2020-01-01.
        #[arg(long, default_value_t = 365)]
        days: u32,
        /// annual, evergreen, bare or mixed.
        #[arg(long, default_value = "annual")]
        profile: Profile,
        /// RNG seed; the same seed gives the same bytes.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Days between observations.
        #[arg(long, default_value_t = 5)]
        revisit: u32,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LlmKind {
    Mock,
    Remote,
}

impl From<LlmKind> for BackendKind {
    fn from(k: LlmKind) -> Self {
        match k {
            LlmKind::Mock => BackendKind::Mock,
            LlmKind::Remote => BackendKind::Remote,
        }
    }
}

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

trait FailureExt<T> {
    fn usage(self) -> Result<T, Failure>;
    fn data(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> FailureExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(io::stderr)
        .init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(2);
        }
    };
    match runtime.block_on(run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

async fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Ingest { obs, extent, out, max_cloud, force } => run_ingest(&obs, &extent, &out, max_cloud, force),
        Command::Analyze { store, polygon, from, to, degree, llm, params, fires, config } => {
            let mut cfg = match config {
                Some(path) => ServiceConfig::from_file(&path).usage()?,
                None => ServiceConfig::default(),
            };
            cfg.store_dir = Some(store);
            apply_overrides(&mut cfg, llm, params.as_deref(), fires)?;
            let polygon = read_polygon(&polygon).usage()?;
            run_analyze(&cfg, polygon, (from, to), degree, llm.is_some()).await
        }
        Command::Serve { config, store, port, host, llm, params, fires } => {
            let mut cfg = match config {
                Some(path) => ServiceConfig::from_file(&path).usage()?,
                None => ServiceConfig::default(),
            };
            if store.is_some() {
                cfg.store_dir = store;
            }
            if let Some(p) = port {
                cfg.port = p;
            }
            apply_overrides(&mut cfg, llm, params.as_deref(), fires)?;
            run_serve(&cfg, &host).await
        }
        Command::GenFixture { out, cells, days, profile, seed, revisit } => {
            if cells == 0 || days == 0 || revisit == 0 {
                return Err(Failure::Usage(anyhow!("--cells, --days and --revisit must be positive")));
            }
            let spec = FixtureSpec { revisit_days: revisit, ..FixtureSpec::new(cells, days, profile, seed) };
            let layout = RegionLayout::california();
            let summary = if out.as_os_str() == "-" {
                synth::generate(&spec, &layout, io::stdout().lock())
            } else {
                let file = File::create(&out).with_context(|| format!("cannot create {}", out.display())).data()?;
                synth::generate(&spec, &layout, file)
            }
            .context("writing fixture")
            .data()?;
            eprintln!("wrote {} rows over {} dates for {cells} cells", summary.rows, summary.dates);
            Ok(())
        }
    }
}

fn apply_overrides(cfg: &mut ServiceConfig, llm: Option<LlmKind>, params: Option<&Path>, fires: Option<PathBuf>) -> Result<(), Failure> {
    if let Some(kind) = llm {
        cfg.llm.kind = kind.into();
    }
    if let Some(path) = params {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).usage()?;
        cfg.classifier_params = serde_json::from_str::<ClassifierParams>(&text).with_context(|| format!("invalid params in {}", path.display())).usage()?;
    }
    if fires.is_some() {
        cfg.fire_csv = fires;
    }
    Ok(())
}

fn read_polygon(path: &Path) -> anyhow::Result<GeoPolygon> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read polygon file {}", path.display()))?;
    GeoPolygon::from_json(&text).with_context(|| format!("malformed polygon in {}", path.display()))
}

fn read_layout(extent: &str) -> anyhow::Result<RegionLayout> {
    if extent == "default" {
        return Ok(RegionLayout::california());
    }
    let mut path = PathBuf::from(extent);
    if path.is_dir() {
        path = path.join(MANIFEST_FILE);
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read extent manifest {}", path.display()))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))?;
    Ok(manifest.layout()?)
}

fn run_ingest(obs: &Path, extent: &str, out: &Path, max_cloud: f64, force: bool) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&max_cloud) {
        return Err(Failure::Usage(anyhow!("--max-cloud must be within [0, 1]")));
    }
    let layout = read_layout(extent).usage()?;
    let file = File::open(obs).with_context(|| format!("cannot open {}", obs.display())).data()?;
    let ingested = ingest::ingest(io::BufReader::new(file), &layout, max_cloud).with_context(|| format!("reading {}", obs.display())).data()?;
    for e in ingested.row_errors.iter().take(20) {
        eprintln!("{}: {e}", obs.display());
    }
    if ingested.row_errors.len() > 20 {
        eprintln!("{}: {} more rejected rows", obs.display(), ingested.row_errors.len() - 20);
    }
    let manifest = store::build_store(&ingested.samples, &layout, out, force).data()?;
    let summary = serde_json::json!({
        "rows": ingested.report.rows,
        "parsed": ingested.report.parsed,
        "rejected_rows": ingested.row_errors.len(),
        "cloud_filtered": ingested.report.cloud_filtered,
        "out_of_extent": ingested.report.out_of_extent,
        "undefined_ndvi": ingested.report.undefined_ndvi,
        "emitted": ingested.report.emitted(),
        "cells": manifest.total_cells(),
        "stored_samples": manifest.total_samples(),
        "date_range": manifest.date_range,
        "out": out,
    });
    print_json(&summary)
}

/// Prints the report; the narrative is only requested when `--llm` is given.
async fn run_analyze(cfg: &ServiceConfig, polygon: GeoPolygon, (from, to): (Option<NaiveDate>, Option<NaiveDate>), degree: Option<usize>, include_llm: bool) -> Result<(), Failure> {
    let store = Store::open(cfg.store_dir.as_deref().expect("store set by caller")).data()?;
    let fires = match &cfg.fire_csv {
        Some(path) => config::load_fire_file(path).data()?,
        None => Vec::new(),
    };
    let date_range = match (from, to, store.manifest().date_range) {
        (None, None, _) => None,
        (Some(f), Some(t), _) => Some((f, t)),
        (f, t, Some((lo, hi))) => Some((f.unwrap_or(lo), t.unwrap_or(hi))),
        (f, t, None) => Some((f.unwrap_or(NaiveDate::MIN), t.unwrap_or(NaiveDate::MAX))),
    };
    let req = AnalysisRequest { polygon, date_range, fit_degree: degree, params: None, include_llm };
    let options = cfg.analysis_options();
    let mut report = match analysis::run_analysis(&store, &fires, &req, &options) {
        Ok(r) => r,
        Err(AnalysisError::InvalidRequest(msg)) => return Err(Failure::Usage(anyhow!("invalid request: {msg}"))),
        Err(AnalysisError::InsufficientData(partial)) => {
            print_json(&partial)?;
            return Err(Failure::Data(anyhow!("insufficient data: {} curve points", partial.curve.len())));
        }
        Err(e) => return Err(Failure::Data(e.into())),
    };
    if req.include_llm {
        let backend = LlmBackend::from_config(&cfg.llm).usage()?;
        if let Err(e) = analysis::attach_llm(&mut report, &backend).await {
            eprintln!("warning: {e}");
        }
    }
    print_json(&report)
}

async fn run_serve(cfg: &ServiceConfig, host: &str) -> Result<(), Failure> {
    let state = AppState::load(cfg).map_err(|e| match e {
        config::SetupError::Config(_) | config::SetupError::NoStore | config::SetupError::Llm(_) => Failure::Usage(e.into()),
        other => Failure::Data(other.into()),
    })?;
    let listener = tokio::net::TcpListener::bind((host, cfg.port)).await.with_context(|| format!("cannot bind {host}:{}", cfg.port)).data()?;
    let addr = listener.local_addr().context("listener address").data()?;
    tracing::info!(cells = state.store.cell_count(), fires = state.fires.len(), "store loaded");
    eprintln!("listening on {addr}");
    terratrace_service::serve(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
    .context("server failed")
    .data()
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).context("writing output").data()?;
    writeln!(out).context("writing output").data()
}
