//! Observation CSV parsing, cloud filtering, NDVI and grid assignment.

use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csvrows::{self, CsvError, Parsed};
use crate::dates;
use crate::geo::{CellId, GeoPoint, RegionLayout};

pub const OBSERVATION_HEADER: [&str; 6] = ["lat", "lon", "date", "red", "nir", "cloud_fraction"];

/// Scenes with more cloud than this are discarded.
pub const DEFAULT_MAX_CLOUD: f64 = 0.10;

/// One georeferenced reflectance sample (B4 red, B8 NIR).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub point: GeoPoint,
    pub date: NaiveDate,
    pub red: f64,
    pub nir: f64,
    pub cloud_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdviSample {
    pub cell: CellId,
    pub date: NaiveDate,
    pub ndvi: f64,
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("undefined NDVI")]
pub struct UndefinedNdvi;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub parsed: usize,
    pub cloud_filtered: usize,
    pub out_of_extent: usize,
    pub undefined_ndvi: usize,
}

impl IngestReport {
    pub fn emitted(&self) -> usize {
        self.parsed - self.cloud_filtered - self.out_of_extent - self.undefined_ndvi
    }
}

pub fn parse_observations<R: Read>(source: R) -> Result<Parsed<Observation>, CsvError> {
    csvrows::parse_rows(source, &OBSERVATION_HEADER, |rec| {
        let lat = csvrows::field_f64(rec, 0, "lat")?;
        let lon = csvrows::field_f64(rec, 1, "lon")?;
        let point = GeoPoint::new(lat, lon).map_err(|e| e.to_string())?;
        let date = csvrows::field_date(rec, 2)?;
        if dates::day_number(date).is_none() {
            return Err(format!("date {date} outside the storable range starting {}", dates::epoch()));
        }
        let red = csvrows::field_unit(rec, 3, "red")?;
        let nir = csvrows::field_unit(rec, 4, "nir")?;
        let cloud_fraction = csvrows::field_unit(rec, 5, "cloud_fraction")?;
        Ok(Observation { point, date, red, nir, cloud_fraction })
    })
}

/// Keeps observations with `cloud_fraction <= max_ratio`, in order.
pub fn filter_clouds(obs: Vec<Observation>, max_ratio: f64) -> Vec<Observation> {
    obs.into_iter().filter(|o| o.cloud_fraction <= max_ratio).collect()
}

pub fn compute_ndvi(nir: f64, red: f64) -> Result<f64, UndefinedNdvi> {
    let sum = nir + red;
    if sum == 0.0 {
        return Err(UndefinedNdvi);
    }
    Ok(((nir - red) / sum).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    pub samples: Vec<NdviSample>,
    pub out_of_extent: usize,
    pub undefined_ndvi: usize,
}

pub fn grid_assign(obs: &[Observation], layout: &RegionLayout) -> Assignment {
    let mut out = Assignment::default();
    for o in obs {
        let Some(cell) = layout.locate(o.point) else {
            out.out_of_extent += 1;
            continue;
        };
        match compute_ndvi(o.nir, o.red) {
            Ok(ndvi) => out.samples.push(NdviSample { cell, date: o.date, ndvi }),
            Err(UndefinedNdvi) => out.undefined_ndvi += 1,
        }
    }
    out
}

/// Parsed observations through cloud filtering and grid assignment, with
/// the counts that account for every input row.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub samples: Vec<NdviSample>,
    pub report: IngestReport,
    pub row_errors: Vec<csvrows::RowError>,
}

pub fn ingest<R: Read>(source: R, layout: &RegionLayout, max_cloud: f64) -> Result<Ingested, CsvError> {
    let parsed = parse_observations(source)?;
    let rows = parsed.rows();
    let n_parsed = parsed.records.len();
    let kept = filter_clouds(parsed.records, max_cloud);
    let cloud_filtered = n_parsed - kept.len();
    let assigned = grid_assign(&kept, layout);
    Ok(Ingested {
        report: IngestReport {
            rows,
            parsed: n_parsed,
            cloud_filtered,
            out_of_extent: assigned.out_of_extent,
            undefined_ndvi: assigned.undefined_ndvi,
        },
        samples: assigned.samples,
        row_errors: parsed.errors,
    })
}
