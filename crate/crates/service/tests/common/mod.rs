#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::Arc;

use terratrace_core::analysis::AnalysisOptions;
use terratrace_core::fire::FireEvent;
use terratrace_core::ingest::{self, DEFAULT_MAX_CLOUD};
use terratrace_core::llm::LlmBackend;
use terratrace_core::store::build_store;
use terratrace_core::synth::{self, FixtureSpec, Profile};
use terratrace_core::{GeoPoint, RegionLayout, Store};
use terratrace_service::AppState;

pub const BIN: &str = env!("CARGO_BIN_EXE_terratrace");

/// 10×10 mixed block; see `FixtureSpec::mixed_columns` for the split.
pub fn mixed_spec() -> FixtureSpec {
    FixtureSpec { revisit_days: 8, ..FixtureSpec::new(100, 365, Profile::Mixed, 11) }
}

pub fn build_fixture_store(spec: &FixtureSpec, dir: &Path) {
    let layout = RegionLayout::california();
    let mut csv = Vec::new();
    synth::generate(spec, &layout, &mut csv).unwrap();
    let ingested = ingest::ingest(csv.as_slice(), &layout, DEFAULT_MAX_CLOUD).unwrap();
    build_store(&ingested.samples, &layout, dir, false).unwrap();
}

pub struct TestServer {
    pub base: String,
    pub state: Arc<AppState>,
    _dir: tempfile::TempDir,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

pub async fn start_server(spec: &FixtureSpec, fires: Vec<FireEvent>, llm: LlmBackend) -> TestServer {
    let dir = tempfile::tempdir().unwrap();
    build_fixture_store(spec, dir.path());
    let state = Arc::new(AppState { store: Store::open(dir.path()).unwrap(), fires, options: AnalysisOptions::default(), llm });
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(terratrace_service::serve(listener, Arc::clone(&state), async move {
        let _ = rx.await;
    }));
    TestServer { base: format!("http://{addr}"), state, _dir: dir, shutdown: Some(tx) }
}

pub fn pt(lat: f64, lon: f64) -> GeoPoint {
    GeoPoint::new(lat, lon).unwrap()
}

/// `terratrace serve` child process; killed on drop.
pub struct ServeProcess {
    pub child: Child,
    pub addr: SocketAddr,
}

impl Drop for ServeProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn spawn_serve(args: &[&str]) -> ServeProcess {
    let mut child = Command::new(BIN).arg("serve").args(args).args(["--port", "0"]).stdout(Stdio::null()).stderr(Stdio::piped()).spawn().unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("serve exited before listening").unwrap();
        if let Some(a) = line.strip_prefix("listening on ") {
            break a.trim().parse().unwrap();
        }
    };
    // Keep draining so the child never blocks on a full pipe.
    std::thread::spawn(move || for _ in lines {});
    ServeProcess { child, addr }
}
