//! Narrative analysis of a signature curve by a language model.
//!
//! The curve is rendered to a small grayscale PNG, bundled with the curve
//! statistics, the vegetation-presence label and a prompt into a JSON
//! payload, and handed to a backend. The mock backend answers from the
//! payload alone; the remote backend speaks a chat-completions style API.

use std::sync::Arc;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::classify::{CurveFeatures, LandUseClass, VegetationPresence};
use crate::curve::{self, SignatureCurve};
use crate::geo::GeoPolygon;

pub const IMAGE_WIDTH: u32 = 320;
pub const IMAGE_HEIGHT: u32 = 200;
pub const IMAGE_MARGIN: u32 = 10;
pub const DEFAULT_MODEL: &str = "gpt-4-turbo-2024-04-09";
pub const ENV_KEY: &str = "TERRATRACE_LLM_KEY";
pub const ENV_URL: &str = "TERRATRACE_LLM_URL";

const PROMPT_PREFIX: &str = "The area of interest is defined by the ";
const PROMPT_SUFFIX: &str = ". Please analyze the land cover type at this location.";

const SYSTEM_INSTRUCTIONS: &str = "You are a remote-sensing analyst. You receive NDVI statistics, a grayscale plot of the \
normalized NDVI signature curve and a rule-based classification for an area of interest. Reply with a single JSON object \
with string fields land_cover, vegetation_health, seasonality and confidence_note.";

const TABLE_KEYS: [(&str, &str); 4] = [
    ("land_cover", "Land cover"),
    ("vegetation_health", "Vegetation health"),
    ("seasonality", "Seasonality"),
    ("confidence_note", "Confidence note"),
];

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("llm backend misconfigured: {0}")]
    Config(String),
    #[error("cannot render curve: {0}")]
    Render(String),
    #[error("llm request timed out after {0:?}; retry later")]
    Timeout(Duration),
    #[error("llm request failed{}: {message}{}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default(), if *retryable { "; retry later" } else { "" })]
    Http { status: Option<u16>, message: String, retryable: bool },
    #[error("unparseable response")]
    Unparseable { raw: String },
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Timeout(_) | LlmError::Http { retryable: true, .. })
    }
}

/// Deterministic 320×200 grayscale PNG of the normalized curve: white
/// background, black polyline, 10 px margins. Constant curves draw at
/// mid-height.
pub fn render_curve_image(curve: &SignatureCurve) -> Result<Vec<u8>, LlmError> {
    if curve.is_empty() {
        return Err(LlmError::Render("empty curve".into()));
    }
    let values: Vec<(i32, f64)> = match curve::normalize_curve(curve) {
        Ok(n) => n.points,
        Err(_) => curve.points.iter().map(|&(d, _)| (d, 0.5)).collect(),
    };
    let (w, h, m) = (IMAGE_WIDTH as i64, IMAGE_HEIGHT as i64, IMAGE_MARGIN as i64);
    let (x_span, y_span) = ((w - 1 - 2 * m) as f64, (h - 1 - 2 * m) as f64);
    let (d0, d1) = (values[0].0 as f64, values[values.len() - 1].0 as f64);
    let to_px = |&(d, v): &(i32, f64)| -> (i64, i64) {
        let x = if d1 > d0 { m as f64 + (d as f64 - d0) / (d1 - d0) * x_span } else { (w / 2) as f64 };
        let y = (h - 1 - m) as f64 - v * y_span;
        (x.round() as i64, y.round() as i64)
    };
    let mut pixels = vec![255u8; (w * h) as usize];
    let mut plot = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            pixels[(y * w + x) as usize] = 0;
        }
    };
    let px: Vec<(i64, i64)> = values.iter().map(to_px).collect();
    plot(px[0].0, px[0].1);
    for seg in px.windows(2) {
        draw_line(seg[0], seg[1], &mut plot);
    }

    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, IMAGE_WIDTH, IMAGE_HEIGHT);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| LlmError::Render(e.to_string()))?;
        writer.write_image_data(&pixels).map_err(|e| LlmError::Render(e.to_string()))?;
    }
    Ok(out)
}

/// Bresenham line including both end points.
fn draw_line((mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), plot: &mut impl FnMut(i64, i64)) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        plot(x0, y0);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

pub fn build_prompt(poly: &GeoPolygon) -> String {
    let coords: Vec<String> = poly.vertices().iter().map(|p| format!("({:.6},{:.6})", p.lat(), p.lon())).collect();
    format!("{PROMPT_PREFIX}[{}]{PROMPT_SUFFIX}", coords.join(","))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayloadStats {
    pub max: f64,
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub range: f64,
    pub growth_rate: f64,
    pub decline_rate: f64,
}

impl From<&CurveFeatures> for PayloadStats {
    fn from(f: &CurveFeatures) -> Self {
        Self { max: f.max, min: f.min, median: f.median, mean: f.mean, range: f.range, growth_rate: f.growth_rate, decline_rate: f.decline_rate }
    }
}

/// Everything sent to the model. Field order is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmPayload {
    pub coordinates: Vec<[f64; 2]>,
    pub stats: PayloadStats,
    pub vegetation: VegetationPresence,
    pub land_use: LandUseClass,
    pub image_b64: String,
    pub prompt: String,
}

impl LlmPayload {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("payload serializes")
    }

    /// Payload JSON without the image, for embedding as text.
    fn text_context(&self) -> String {
        let mut v = serde_json::to_value(self).expect("payload serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("image_b64");
        }
        v.to_string()
    }
}

pub fn build_payload(
    features: &CurveFeatures,
    presence: VegetationPresence,
    land_use: LandUseClass,
    image_png: &[u8],
    poly: &GeoPolygon,
) -> LlmPayload {
    LlmPayload {
        coordinates: poly.vertices().iter().map(|&p| p.into()).collect(),
        stats: features.into(),
        vegetation: presence,
        land_use,
        image_b64: base64::engine::general_purpose::STANDARD.encode(image_png),
        prompt: build_prompt(poly),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnalysisTable {
    pub rows: Vec<TableRow>,
}

impl AnalysisTable {
    pub fn get(&self, label: &str) -> Option<&str> {
        self.rows.iter().find(|r| r.label == label).map(|r| r.value.as_str())
    }

    fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        Self { rows: pairs.into_iter().map(|(label, value)| TableRow { label, value }).collect() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub timeout_secs: f64,
    pub max_concurrent: usize,
    pub max_tokens: u32,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self { kind: BackendKind::Mock, endpoint: None, model: DEFAULT_MODEL.into(), timeout_secs: 30.0, max_concurrent: 4, max_tokens: 1024 }
    }
}

#[derive(Debug, Clone)]
pub enum LlmBackend {
    Mock,
    Remote(RemoteBackend),
}

impl LlmBackend {
    /// Builds a backend from config; `TERRATRACE_LLM_URL` overrides the
    /// endpoint and `TERRATRACE_LLM_KEY` supplies the credential.
    pub fn from_config(config: &LlmConfig) -> Result<Self, LlmError> {
        Self::from_config_with(config, std::env::var(ENV_URL).ok(), std::env::var(ENV_KEY).ok())
    }

    pub fn from_config_with(config: &LlmConfig, url: Option<String>, key: Option<String>) -> Result<Self, LlmError> {
        match config.kind {
            BackendKind::Mock => Ok(LlmBackend::Mock),
            BackendKind::Remote => {
                let endpoint = url.or_else(|| config.endpoint.clone()).ok_or_else(|| LlmError::Config(format!("remote backend needs an endpoint ({ENV_URL})")))?;
                let api_key = key.ok_or_else(|| LlmError::Config(format!("remote backend needs a credential ({ENV_KEY})")))?;
                if config.timeout_secs.is_nan() || config.timeout_secs <= 0.0 || config.max_concurrent == 0 {
                    return Err(LlmError::Config("timeout_secs and max_concurrent must be positive".into()));
                }
                Ok(LlmBackend::Remote(RemoteBackend::new(RemoteConfig {
                    endpoint,
                    api_key,
                    model: config.model.clone(),
                    timeout: Duration::from_secs_f64(config.timeout_secs),
                    max_concurrent: config.max_concurrent,
                    max_tokens: config.max_tokens,
                })?))
            }
        }
    }

    pub async fn analyze(&self, payload: &LlmPayload) -> Result<AnalysisTable, LlmError> {
        match self {
            LlmBackend::Mock => Ok(mock_table(payload)),
            LlmBackend::Remote(r) => r.analyze(payload).await,
        }
    }

    pub async fn chat(&self, message: &str, payload: &LlmPayload) -> Result<String, LlmError> {
        match self {
            LlmBackend::Mock => Ok(mock_reply(message, payload)),
            LlmBackend::Remote(r) => r.chat(message, payload).await,
        }
    }
}

/// Table built from the payload alone; its land-cover row is the rule-based
/// class.
pub fn mock_table(payload: &LlmPayload) -> AnalysisTable {
    let s = &payload.stats;
    AnalysisTable::from_pairs([
        ("Land cover".to_string(), format!("{} (rule-based)", payload.land_use.describe())),
        ("Vegetation health".to_string(), format!("{} (mean NDVI {:.3}, median {:.3})", payload.vegetation.describe(), s.mean, s.median)),
        ("Seasonality".to_string(), format!("NDVI range {:.3} (min {:.3}, max {:.3}); largest step up {:+.4}, largest step down {:+.4}", s.range, s.min, s.max, s.growth_rate, s.decline_rate)),
        ("Confidence note".to_string(), "deterministic mock analysis; no language model was queried".to_string()),
    ])
}

pub fn mock_reply(message: &str, payload: &LlmPayload) -> String {
    format!(
        "Land cover: {} (rule-based). Vegetation: {}, median NDVI {:.3}, range {:.3}. You asked: \"{}\". This reply comes from the deterministic mock analyst.",
        payload.land_use.describe(),
        payload.vegetation.describe(),
        payload.stats.median,
        payload.stats.range,
        message.trim()
    )
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub api_key: String,
    pub model: String,
    pub timeout: Duration,
    pub max_concurrent: usize,
    pub max_tokens: u32,
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::Client,
    limiter: Arc<Semaphore>,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, LlmError> {
        let client = reqwest::Client::builder().timeout(config.timeout).build().map_err(|e| LlmError::Config(e.to_string()))?;
        let limiter = Arc::new(Semaphore::new(config.max_concurrent));
        Ok(Self { config, client, limiter })
    }

    fn user_content(&self, payload: &LlmPayload) -> serde_json::Value {
        serde_json::json!([
            { "type": "text", "text": format!("{}\n\nData: {}", payload.prompt, payload.text_context()) },
            { "type": "image_url", "image_url": { "url": format!("data:image/png;base64,{}", payload.image_b64) } }
        ])
    }

    pub async fn analyze(&self, payload: &LlmPayload) -> Result<AnalysisTable, LlmError> {
        let messages = serde_json::json!([
            { "role": "system", "content": SYSTEM_INSTRUCTIONS },
            { "role": "user", "content": self.user_content(payload) }
        ]);
        let text = self.complete(messages).await?;
        parse_table(&text).ok_or(LlmError::Unparseable { raw: text })
    }

    pub async fn chat(&self, message: &str, payload: &LlmPayload) -> Result<String, LlmError> {
        let messages = serde_json::json!([
            { "role": "system", "content": "You are a remote-sensing analyst answering questions about an NDVI analysis of an area of interest." },
            { "role": "user", "content": self.user_content(payload) },
            { "role": "user", "content": message }
        ]);
        self.complete(messages).await
    }

    async fn complete(&self, messages: serde_json::Value) -> Result<String, LlmError> {
        let _permit = self.limiter.acquire().await.map_err(|e| LlmError::Config(e.to_string()))?;
        let body = serde_json::json!({ "model": self.config.model, "messages": messages, "max_tokens": self.config.max_tokens });
        let deadline = self.config.timeout;
        let request = async {
            let resp = self.client.post(&self.config.endpoint).bearer_auth(&self.config.api_key).json(&body).send().await.map_err(|e| http_error(e, deadline))?;
            let status = resp.status();
            let text = resp.text().await.map_err(|e| http_error(e, deadline))?;
            if !status.is_success() {
                return Err(LlmError::Http {
                    status: Some(status.as_u16()),
                    message: text.chars().take(200).collect(),
                    retryable: status.is_server_error() || status.as_u16() == 429,
                });
            }
            Ok(text)
        };
        let raw = tokio::time::timeout(deadline, request).await.map_err(|_| LlmError::Timeout(deadline))??;
        first_choice_text(&raw).ok_or(LlmError::Unparseable { raw })
    }
}

fn http_error(e: reqwest::Error, deadline: Duration) -> LlmError {
    if e.is_timeout() {
        LlmError::Timeout(deadline)
    } else {
        LlmError::Http { status: e.status().map(|s| s.as_u16()), message: e.to_string(), retryable: e.is_connect() || e.is_request() }
    }
}

/// `choices[0].message.content` of a chat-completions response, as text.
fn first_choice_text(raw: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(raw).ok()?;
    let content = v.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Array(parts) => {
            let text: Vec<&str> = parts.iter().filter_map(|p| p.get("text").and_then(|t| t.as_str())).collect();
            (!text.is_empty()).then(|| text.join(""))
        }
        _ => None,
    }
}

/// Reads a model answer as either a JSON object with the four table keys or
/// a two-column markdown table.
pub fn parse_table(text: &str) -> Option<AnalysisTable> {
    parse_json_table(text).or_else(|| parse_markdown_table(text))
}

fn parse_json_table(text: &str) -> Option<AnalysisTable> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text.get(start..=end)?).ok()?;
    let mut pairs = Vec::new();
    for (key, label) in TABLE_KEYS {
        let value = match obj.get(key)? {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        pairs.push((label.to_string(), value));
    }
    Some(AnalysisTable::from_pairs(pairs))
}

fn parse_markdown_table(text: &str) -> Option<AnalysisTable> {
    let lines: Vec<Vec<String>> = text
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with('|'))
        .map(|l| l.trim_matches('|').split('|').map(|c| c.trim().to_string()).collect())
        .collect();
    let is_rule = |cells: &Vec<String>| cells.iter().all(|c| !c.is_empty() && c.chars().all(|ch| matches!(ch, '-' | ':' | ' ')));
    let mut pairs = Vec::new();
    for (i, cells) in lines.iter().enumerate() {
        if is_rule(cells) || lines.get(i + 1).is_some_and(is_rule) {
            continue;
        }
        if cells.len() == 2 && !cells[0].is_empty() {
            pairs.push((cells[0].clone(), cells[1].clone()));
        }
    }
    (!pairs.is_empty()).then(|| AnalysisTable::from_pairs(pairs))
}
