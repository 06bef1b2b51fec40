//! Phenology features and the threshold ladder that labels a curve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::SignatureCurve;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("insufficient data: {0} points")]
    InsufficientData(usize),
    #[error("invalid classifier params: {0}")]
    InvalidParams(String),
}

/// Thresholds in raw NDVI units. Rates are per consecutive sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierParams {
    pub veg_threshold: f64,
    pub peak_lo: f64,
    pub peak_hi: f64,
    pub rate_threshold: f64,
    /// A curve needs strictly more points than this.
    pub min_points: usize,
    pub decline_margin: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self { veg_threshold: 0.2, peak_lo: 0.2, peak_hi: 0.8, rate_threshold: 0.005, min_points: 10, decline_margin: 0.05 }
    }
}

impl ClassifierParams {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let vals = [self.veg_threshold, self.peak_lo, self.peak_hi, self.rate_threshold, self.decline_margin];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(ClassifyError::InvalidParams("thresholds must be finite".into()));
        }
        if self.peak_lo > self.peak_hi {
            return Err(ClassifyError::InvalidParams(format!("peak_lo {} > peak_hi {}", self.peak_lo, self.peak_hi)));
        }
        if self.rate_threshold < 0.0 || self.decline_margin < 0.0 {
            return Err(ClassifyError::InvalidParams("rate_threshold and decline_margin must be non-negative".into()));
        }
        if !(-1.0..=1.0).contains(&self.veg_threshold) {
            return Err(ClassifyError::InvalidParams(format!("veg_threshold {} outside [-1, 1]", self.veg_threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LandUseClass {
    InsufficientData,
    NonVegetative,
    SparseVegetation,
    AnnualCrop,
    PerennialVegetation,
}

impl LandUseClass {
    pub fn describe(&self) -> &'static str {
        match self {
            LandUseClass::InsufficientData => "insufficient data",
            LandUseClass::NonVegetative => "non-vegetative",
            LandUseClass::SparseVegetation => "sparse vegetation",
            LandUseClass::AnnualCrop => "annual crop",
            LandUseClass::PerennialVegetation => "perennial vegetation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VegetationPresence {
    NonVegetative,
    SomeVegetation,
    HealthyVegetation,
}

impl VegetationPresence {
    pub fn describe(&self) -> &'static str {
        match self {
            VegetationPresence::NonVegetative => "non-vegetative",
            VegetationPresence::SomeVegetation => "some vegetation",
            VegetationPresence::HealthyVegetation => "healthy vegetation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveFeatures {
    pub n_points: usize,
    pub min: f64,
    pub max: f64,
    pub range: f64,
    pub median: f64,
    pub mean: f64,
    /// Largest increase between consecutive samples.
    pub growth_rate: f64,
    /// Most negative change between consecutive samples.
    pub decline_rate: f64,
    pub peak_day: i32,
}

pub fn validate_curve(curve: &SignatureCurve, params: &ClassifierParams) -> bool {
    curve.len() > params.min_points
}

pub fn extract_features(curve: &SignatureCurve, params: &ClassifierParams) -> Result<CurveFeatures, ClassifyError> {
    if !validate_curve(curve, params) || curve.len() < 2 {
        return Err(ClassifyError::InsufficientData(curve.len()));
    }
    let mut sorted: Vec<f64> = curve.values().collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    let (min, max) = (sorted[0], sorted[n - 1]);
    // first occurrence of the maximum
    let peak_day = curve.points.iter().find(|&&(_, v)| v == max).map(|&(d, _)| d).unwrap_or_default();
    let diffs = curve.points.windows(2).map(|w| w[1].1 - w[0].1);
    let (growth_rate, decline_rate) = diffs.fold((f64::NEG_INFINITY, f64::INFINITY), |(g, d), x| (g.max(x), d.min(x)));
    Ok(CurveFeatures {
        n_points: n,
        min,
        max,
        range: max - min,
        median,
        mean: sorted.iter().sum::<f64>() / n as f64,
        growth_rate,
        decline_rate,
        peak_day,
    })
}

pub fn vegetation_presence(mean_ndvi: f64) -> VegetationPresence {
    if mean_ndvi < 0.1 {
        VegetationPresence::NonVegetative
    } else if mean_ndvi < 0.2 {
        VegetationPresence::SomeVegetation
    } else {
        VegetationPresence::HealthyVegetation
    }
}

/// Outcome of each annual-crop condition, kept so reports can explain
/// near misses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnualCropChecks {
    /// Some sample at or below `veg_threshold` is followed by one above it.
    pub rises: bool,
    pub peak_in_bounds: bool,
    /// A sample after the first maximum falls below `max − decline_margin`.
    pub declines: bool,
    pub rates: bool,
}

impl AnnualCropChecks {
    pub fn all(&self) -> bool {
        self.rises && self.peak_in_bounds && self.declines && self.rates
    }

    /// Every condition holds except the peak upper bound, and the peak is
    /// above it.
    pub fn only_peak_above_bound(&self, features: &CurveFeatures, params: &ClassifierParams) -> bool {
        self.rises && self.declines && self.rates && !self.peak_in_bounds && features.max > params.peak_hi
    }
}

pub fn annual_crop_checks(features: &CurveFeatures, curve: &SignatureCurve, params: &ClassifierParams) -> AnnualCropChecks {
    let mut lowest_so_far = f64::INFINITY;
    let mut rises = false;
    for v in curve.values() {
        if lowest_so_far <= params.veg_threshold && v > params.veg_threshold {
            rises = true;
            break;
        }
        lowest_so_far = lowest_so_far.min(v);
    }
    let peak_idx = curve.points.iter().position(|&(_, v)| v == features.max).unwrap_or(0);
    let declines = curve.points[peak_idx + 1..].iter().any(|&(_, v)| v < features.max - params.decline_margin);
    AnnualCropChecks {
        rises,
        peak_in_bounds: features.max >= params.peak_lo && features.max <= params.peak_hi,
        declines,
        rates: features.growth_rate > params.rate_threshold && features.decline_rate < -params.rate_threshold,
    }
}

/// Prefix of the report warning for curves that miss the annual-crop rules
/// only through the peak upper bound.
pub const PEAK_ABOVE_BOUND: &str = "AnnualCrop (peak above configured bound)";

pub fn peak_bound_warning(features: &CurveFeatures, curve: &SignatureCurve, params: &ClassifierParams) -> Option<String> {
    annual_crop_checks(features, curve, params)
        .only_peak_above_bound(features, params)
        .then(|| format!("{PEAK_ABOVE_BOUND}: max {:.4} exceeds peak_hi {:.4}", features.max, params.peak_hi))
}

/// First matching rule wins: too few points, low median, sparse median,
/// annual-crop pattern, otherwise perennial.
pub fn classify(features: &CurveFeatures, curve: &SignatureCurve, params: &ClassifierParams) -> Result<LandUseClass, ClassifyError> {
    params.validate()?;
    if !validate_curve(curve, params) {
        return Ok(LandUseClass::InsufficientData);
    }
    if features.median < 0.1 {
        return Ok(LandUseClass::NonVegetative);
    }
    if features.median < 0.2 {
        return Ok(LandUseClass::SparseVegetation);
    }
    if annual_crop_checks(features, curve, params).all() {
        return Ok(LandUseClass::AnnualCrop);
    }
    Ok(LandUseClass::PerennialVegetation)
}

/// Features plus class for a curve; short curves classify as
/// `InsufficientData` without features.
pub fn classify_curve(curve: &SignatureCurve, params: &ClassifierParams) -> Result<(Option<CurveFeatures>, LandUseClass), ClassifyError> {
    params.validate()?;
    match extract_features(curve, params) {
        Ok(f) => Ok((Some(f), classify(&f, curve, params)?)),
        Err(ClassifyError::InsufficientData(_)) => Ok((None, LandUseClass::InsufficientData)),
        Err(e) => Err(e),
    }
}
