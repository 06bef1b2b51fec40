//! End-to-end polygon analysis: cells → series → mean curve → fit →
//! features → class, plus fire history and the optional narrative.

use base64::Engine;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{self, ClassifierParams, ClassifyError, CurveFeatures, LandUseClass, VegetationPresence};
use crate::curve::{self, SignatureCurve, DEFAULT_DEGREE, MAX_DEGREE};
use crate::dates;
use crate::fire::{self, FireEvent, FireRecord, FireReference, DEFAULT_RADIUS_KM};
use crate::geo::GeoPolygon;
use crate::llm::{self, AnalysisTable, LlmBackend, LlmError, LlmPayload};
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRequest {
    pub polygon: GeoPolygon,
    #[serde(default)]
    pub date_range: Option<(NaiveDate, NaiveDate)>,
    #[serde(default)]
    pub fit_degree: Option<usize>,
    #[serde(default)]
    pub params: Option<ClassifierParams>,
    #[serde(default)]
    pub include_llm: bool,
}

impl AnalysisRequest {
    pub fn new(polygon: GeoPolygon) -> Self {
        Self { polygon, date_range: None, fit_degree: None, params: None, include_llm: false }
    }
}

/// Service-wide analysis settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    pub params: ClassifierParams,
    pub fire_radius_km: f64,
    pub fire_reference: FireReference,
    /// Compute features on the daily-interpolated curve instead of the raw
    /// per-date means.
    pub features_on_interpolated: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { params: ClassifierParams::default(), fire_radius_km: DEFAULT_RADIUS_KM, fire_reference: FireReference::Centroid, features_on_interpolated: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub report_id: String,
    pub polygon: GeoPolygon,
    pub date_range: (NaiveDate, NaiveDate),
    pub cells: usize,
    /// Raw per-date means with the polynomial fit.
    pub curve: SignatureCurve,
    /// The same points rescaled to `[0, 1]`, when the curve is not constant.
    pub normalized: Option<Vec<(i32, f64)>>,
    pub features: Option<CurveFeatures>,
    pub class: LandUseClass,
    pub presence: Option<VegetationPresence>,
    pub fire_history: Vec<FireRecord>,
    pub llm_analysis: Option<AnalysisTable>,
    pub warnings: Vec<String>,
    pub params_used: ClassifierParams,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no cells in polygon")]
    NoCells,
    #[error("insufficient data: {} curve points", .0.curve.len())]
    InsufficientData(Box<AnalysisReport>),
}

impl From<ClassifyError> for AnalysisError {
    fn from(e: ClassifyError) -> Self {
        AnalysisError::InvalidRequest(e.to_string())
    }
}

/// The resolved request that identifies a report. Encoded into
/// `report_id` so a report can be recomputed from its id alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReportKey {
    polygon: GeoPolygon,
    date_range: (NaiveDate, NaiveDate),
    fit_degree: usize,
    params: ClassifierParams,
}

pub fn decode_report_id(id: &str) -> Option<AnalysisRequest> {
    let bytes = base64::engine::general_purpose::URL_SAFE_NO_PAD.decode(id).ok()?;
    let key: ReportKey = serde_json::from_slice(&bytes).ok()?;
    Some(AnalysisRequest { polygon: key.polygon, date_range: Some(key.date_range), fit_degree: Some(key.fit_degree), params: Some(key.params), include_llm: false })
}

pub fn run_analysis(store: &Store, fires: &[FireEvent], req: &AnalysisRequest, options: &AnalysisOptions) -> Result<AnalysisReport, AnalysisError> {
    let params = req.params.unwrap_or(options.params);
    params.validate()?;
    let degree = req.fit_degree.unwrap_or(DEFAULT_DEGREE);
    if degree > MAX_DEGREE {
        return Err(AnalysisError::InvalidRequest(format!("fit_degree {degree} outside 0..={MAX_DEGREE}")));
    }
    let date_range = req.date_range.or(store.manifest().date_range).unwrap_or((dates::epoch(), dates::epoch()));
    if date_range.0 > date_range.1 {
        return Err(AnalysisError::InvalidRequest(format!("date range {} > {}", date_range.0, date_range.1)));
    }

    let cells = store.cells_in_polygon(&req.polygon);
    if cells.is_empty() {
        return Err(AnalysisError::NoCells);
    }
    let series: Vec<_> = cells.iter().map(|&c| store.load_series(c, date_range.0, date_range.1)).collect();
    let mut warnings = Vec::new();

    let raw = match curve::mean_curve(&series) {
        Ok(c) => c,
        Err(e) => {
            warnings.push(format!("mean curve: {e}"));
            SignatureCurve::new(Vec::new(), 0)
        }
    };
    let interpolated = curve::interpolate_daily(&raw).ok();
    let fit_source = interpolated.as_ref().unwrap_or(&raw);
    let mut curve = raw.clone();
    match curve::polyfit(fit_source, degree) {
        Ok(fit) => curve.fit = Some(fit),
        Err(e) if !raw.is_empty() => warnings.push(format!("fit skipped: {e}")),
        Err(_) => {}
    }

    let feature_curve = if options.features_on_interpolated { interpolated.as_ref().unwrap_or(&raw) } else { &raw };
    let (features, class) = classify::classify_curve(feature_curve, &params)?;
    if let Some(w) = features.as_ref().and_then(|f| classify::peak_bound_warning(f, feature_curve, &params)) {
        warnings.push(w);
    }
    let presence = (!raw.is_empty()).then(|| classify::vegetation_presence(raw.values().sum::<f64>() / raw.len() as f64));
    let normalized = curve::normalize_curve(&raw).ok().map(|c| c.points);

    let fire_history = fire::fire_history(&req.polygon, fires, options.fire_radius_km, date_range, options.fire_reference)
        .map_err(|e| AnalysisError::InvalidRequest(e.to_string()))?;

    let key = ReportKey { polygon: req.polygon.clone(), date_range, fit_degree: degree, params };
    let report_id = base64::engine::general_purpose::URL_SAFE_NO_PAD.encode(serde_json::to_vec(&key).expect("key serializes"));

    let report = AnalysisReport {
        report_id,
        polygon: req.polygon.clone(),
        date_range,
        cells: cells.len(),
        curve,
        normalized,
        features,
        class,
        presence,
        fire_history,
        llm_analysis: None,
        warnings,
        params_used: params,
    };
    if class == LandUseClass::InsufficientData {
        return Err(AnalysisError::InsufficientData(Box::new(report)));
    }
    Ok(report)
}

/// LLM payload for a report; `None` when the report has no features.
pub fn report_payload(report: &AnalysisReport) -> Option<Result<LlmPayload, LlmError>> {
    let features = report.features.as_ref()?;
    let presence = report.presence.unwrap_or_else(|| classify::vegetation_presence(features.mean));
    Some(llm::render_curve_image(&report.curve).map(|png| llm::build_payload(features, presence, report.class, &png, &report.polygon)))
}

/// Runs the backend on the report and stores the table, or records a
/// warning when the backend fails.
pub async fn attach_llm(report: &mut AnalysisReport, backend: &LlmBackend) -> Result<(), LlmError> {
    let Some(payload) = report_payload(report) else {
        report.warnings.push("llm analysis skipped: no curve features".into());
        return Ok(());
    };
    match backend.analyze(&payload?).await {
        Ok(table) => {
            report.llm_analysis = Some(table);
            Ok(())
        }
        Err(e) => {
            report.warnings.push(format!("llm analysis unavailable: {e}"));
            Err(e)
        }
    }
}
