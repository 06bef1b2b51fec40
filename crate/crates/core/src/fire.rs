//! Fire-event loading and distance-based fire history.

use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csvrows::{self, CsvError, Parsed};
use crate::geo::{haversine_km, GeoPoint, GeoPolygon};

pub const FIRE_HEADER: [&str; 4] = ["lat", "lon", "date", "confidence"];
pub const DEFAULT_RADIUS_KM: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FireError {
    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FireEvent {
    pub point: GeoPoint,
    pub date: NaiveDate,
    pub confidence: f64,
}

/// Flat JSON shape used in reports: `{lat, lon, date, confidence, distance_km}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FireRecord {
    pub lat: f64,
    pub lon: f64,
    pub date: NaiveDate,
    pub confidence: f64,
    pub distance_km: f64,
}

impl FireRecord {
    fn new(e: &FireEvent, distance_km: f64) -> Self {
        Self { lat: e.point.lat(), lon: e.point.lon(), date: e.date, confidence: e.confidence, distance_km }
    }
}

/// Point a polygon's fire history is measured from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FireReference {
    #[default]
    Centroid,
    NearestVertex,
}

pub fn load_fires<R: Read>(source: R) -> Result<Parsed<FireEvent>, CsvError> {
    csvrows::parse_rows(source, &FIRE_HEADER, |rec| {
        let lat = csvrows::field_f64(rec, 0, "lat")?;
        let lon = csvrows::field_f64(rec, 1, "lon")?;
        let point = GeoPoint::new(lat, lon).map_err(|e| e.to_string())?;
        let date = csvrows::field_date(rec, 2)?;
        let confidence = csvrows::field_unit(rec, 3, "confidence")?;
        Ok(FireEvent { point, date, confidence })
    })
}

/// Closest event by great-circle distance; ties go to the earlier date, then
/// to input order.
pub fn nearest_fire(p: GeoPoint, events: &[FireEvent]) -> Option<(FireEvent, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in events.iter().enumerate() {
        let d = haversine_km(p, e.point);
        let better = match best {
            None => true,
            Some((j, bd)) => d < bd || (d == bd && e.date < events[j].date),
        };
        if better {
            best = Some((i, d));
        }
    }
    best.map(|(i, d)| (events[i], d))
}

/// Events within `radius_km` of the polygon reference point and inside the
/// inclusive date range, sorted by distance then date.
pub fn fire_history(
    poly: &GeoPolygon,
    events: &[FireEvent],
    radius_km: f64,
    range: (NaiveDate, NaiveDate),
    reference: FireReference,
) -> Result<Vec<FireRecord>, FireError> {
    if radius_km.is_nan() || radius_km <= 0.0 {
        return Err(FireError::InvalidRadius(radius_km));
    }
    let centroid = poly.centroid();
    let distance = |p: GeoPoint| match reference {
        FireReference::Centroid => haversine_km(centroid, p),
        FireReference::NearestVertex => poly.vertices().iter().map(|&v| haversine_km(v, p)).fold(f64::INFINITY, f64::min),
    };
    let mut out: Vec<FireRecord> = events
        .iter()
        .filter(|e| e.date >= range.0 && e.date <= range.1)
        .filter_map(|e| {
            let d = distance(e.point);
            (d <= radius_km).then(|| FireRecord::new(e, d))
        })
        .collect();
    out.sort_by(|a, b| a.distance_km.total_cmp(&b.distance_km).then(a.date.cmp(&b.date)));
    Ok(out)
}
