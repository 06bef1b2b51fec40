//! Service configuration file and startup state.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use terratrace_core::analysis::AnalysisOptions;
use terratrace_core::csvrows::CsvError;
use terratrace_core::fire::{self, FireEvent, FireReference, DEFAULT_RADIUS_KM};
use terratrace_core::llm::{LlmBackend, LlmConfig, LlmError};
use terratrace_core::store::StoreError;
use terratrace_core::{ClassifierParams, Store};
use thiserror::Error;

pub const DEFAULT_PORT: u16 = 8080;

/// JSON config file. Credentials never live here: the LLM endpoint and key
/// come from `TERRATRACE_LLM_URL` and `TERRATRACE_LLM_KEY`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub store_dir: Option<PathBuf>,
    pub port: u16,
    pub classifier_params: ClassifierParams,
    pub llm: LlmConfig,
    pub fire_csv: Option<PathBuf>,
    pub fire_radius_km: f64,
    pub fire_reference: FireReference,
    pub features_on_interpolated: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            store_dir: None,
            port: DEFAULT_PORT,
            classifier_params: ClassifierParams::default(),
            llm: LlmConfig::default(),
            fire_csv: None,
            fire_radius_km: DEFAULT_RADIUS_KM,
            fire_reference: FireReference::Centroid,
            features_on_interpolated: false,
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, SetupError> {
        let text = std::fs::read_to_string(path).map_err(|e| SetupError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| SetupError::Config(format!("{}: {e}", path.display())))
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            params: self.classifier_params,
            fire_radius_km: self.fire_radius_km,
            fire_reference: self.fire_reference,
            features_on_interpolated: self.features_on_interpolated,
        }
    }
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error("config: {0}")]
    Config(String),
    #[error("no store directory configured")]
    NoStore,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("fire csv {path}: {source}")]
    Fires { path: PathBuf, source: CsvError },
    #[error("cannot open {path}: {source}")]
    Open { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Everything a request handler reads. Immutable after startup.
#[derive(Debug)]
pub struct AppState {
    pub store: Store,
    pub fires: Vec<FireEvent>,
    pub options: AnalysisOptions,
    pub llm: LlmBackend,
}

impl AppState {
    pub fn load(config: &ServiceConfig) -> Result<Arc<Self>, SetupError> {
        config.classifier_params.validate().map_err(|e| SetupError::Config(e.to_string()))?;
        if config.fire_radius_km.is_nan() || config.fire_radius_km <= 0.0 {
            return Err(SetupError::Config(format!("fire_radius_km must be positive, got {}", config.fire_radius_km)));
        }
        let store = Store::open(config.store_dir.as_deref().ok_or(SetupError::NoStore)?)?;
        let fires = match &config.fire_csv {
            Some(path) => load_fire_file(path)?,
            None => Vec::new(),
        };
        let llm = LlmBackend::from_config(&config.llm)?;
        Ok(Arc::new(Self { store, fires, options: config.analysis_options(), llm }))
    }
}

pub fn load_fire_file(path: &Path) -> Result<Vec<FireEvent>, SetupError> {
    let file = std::fs::File::open(path).map_err(|source| SetupError::Open { path: path.to_path_buf(), source })?;
    let parsed = fire::load_fires(file).map_err(|source| SetupError::Fires { path: path.to_path_buf(), source })?;
    for e in &parsed.errors {
        tracing::warn!(file = %path.display(), "skipping fire row: {e}");
    }
    Ok(parsed.records)
}
