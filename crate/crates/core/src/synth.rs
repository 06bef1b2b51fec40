//! Seeded synthetic observation generator for desk-scale datasets.
//!
//! Cells form a square block of adjacent 500 m cells starting at an anchor
//! point. Each observation date emits one row per cell with a seasonal NDVI
//! profile, per-cell jitter and random cloud cover (about 15 % of rows are
//! cloudier than the default filter threshold).

use std::io::{self, Write};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dates;
use crate::geo::{self, CellId, GeoPoint, GeoPolygon, RegionLayout, METERS_PER_DEG};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Annual,
    Evergreen,
    Bare,
    /// Block split by column into thirds: annual, evergreen, bare.
    Mixed,
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "annual" => Ok(Profile::Annual),
            "evergreen" => Ok(Profile::Evergreen),
            "bare" => Ok(Profile::Bare),
            "mixed" => Ok(Profile::Mixed),
            _ => Err(format!("unknown profile {s:?} (annual|evergreen|bare|mixed)")),
        }
    }
}

/// Day-of-year landmarks of the annual profile. Base 0.15 before green-up,
/// peak 0.75, harvest down to a 0.22 stubble level. Fallow stays short
/// enough that the yearly median is above the sparse-vegetation cutoff.
pub const ANNUAL_GREEN_UP: u32 = 90;
pub const ANNUAL_PEAK: u32 = 180;
pub const ANNUAL_HARVEST: u32 = 255;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub cells: usize,
    pub days: u32,
    pub revisit_days: u32,
    pub profile: Profile,
    pub seed: u64,
    pub anchor: GeoPoint,
    pub start: NaiveDate,
}

impl FixtureSpec {
    pub fn new(cells: usize, days: u32, profile: Profile, seed: u64) -> Self {
        Self { cells, days, revisit_days: 5, profile, seed, anchor: GeoPoint::new(36.5, -120.5).expect("valid anchor"), start: dates::epoch() }
    }

    fn side(&self) -> u32 {
        (self.cells as f64).sqrt().ceil().max(1.0) as u32
    }

    /// Cells of the block in generation order, with their centers.
    pub fn cells(&self, layout: &RegionLayout) -> Result<Vec<(CellId, GeoPoint)>, String> {
        let origin = layout.locate(self.anchor).ok_or("anchor outside the layout extent")?;
        let region = layout.region(origin.region_id).ok_or("anchor region missing")?;
        let side = self.side();
        (0..self.cells as u32)
            .map(|k| {
                let cell = CellId::new(origin.region_id, origin.row + k / side, origin.col + k % side);
                geo::cell_center(cell, region).map(|p| (cell, p)).map_err(|_| format!("fixture block leaves region {}", origin.region_id))
            })
            .collect()
    }

    /// Rectangle around the whole block, 100 m outside the outermost centers.
    pub fn polygon(&self, layout: &RegionLayout) -> Result<GeoPolygon, String> {
        self.sub_polygon(layout, 0, self.side())
    }

    /// Rectangle around block columns `[col_lo, col_hi)`.
    pub fn sub_polygon(&self, layout: &RegionLayout, col_lo: u32, col_hi: u32) -> Result<GeoPolygon, String> {
        let side = self.side();
        let cells = self.cells(layout)?;
        let pts: Vec<GeoPoint> = cells.iter().enumerate().filter(|(k, _)| (col_lo..col_hi).contains(&(*k as u32 % side))).map(|(_, &(_, p))| p).collect();
        if pts.is_empty() {
            return Err("no cells in column range".into());
        }
        let pad_lat = 100.0 / METERS_PER_DEG;
        let pad_lon = pad_lat / pts[0].lat().to_radians().cos();
        let (mut s, mut n, mut w, mut e) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &pts {
            s = s.min(p.lat());
            n = n.max(p.lat());
            w = w.min(p.lon());
            e = e.max(p.lon());
        }
        let corner = |lat: f64, lon: f64| GeoPoint::new(lat, lon).map_err(|e| e.to_string());
        GeoPolygon::new(vec![
            corner(s - pad_lat, w - pad_lon)?,
            corner(s - pad_lat, e + pad_lon)?,
            corner(n + pad_lat, e + pad_lon)?,
            corner(n + pad_lat, w - pad_lon)?,
        ])
        .map_err(|e| e.to_string())
    }

    /// Block column ranges `[lo, hi)` of the three mixed-profile parts.
    pub fn mixed_columns(&self) -> [(Profile, u32, u32); 3] {
        let side = self.side();
        let start = |i: u32| (i * side).div_ceil(3);
        [(Profile::Annual, start(0), start(1)), (Profile::Evergreen, start(1), start(2)), (Profile::Bare, start(2), side)]
    }

    fn profile_of(&self, k: usize) -> Profile {
        match self.profile {
            Profile::Mixed => match (k as u32 % self.side()) * 3 / self.side() {
                0 => Profile::Annual,
                1 => Profile::Evergreen,
                _ => Profile::Bare,
            },
            p => p,
        }
    }
}

/// Noise-free NDVI of a profile on day-of-year `doy` (1-based).
pub fn profile_ndvi(profile: Profile, doy: u32) -> f64 {
    use std::f64::consts::{PI, TAU};
    match profile {
        Profile::Annual | Profile::Mixed => {
            if doy < ANNUAL_GREEN_UP {
                0.15
            } else if doy <= ANNUAL_PEAK {
                let x = (doy - ANNUAL_GREEN_UP) as f64 / (ANNUAL_PEAK - ANNUAL_GREEN_UP) as f64;
                0.15 + 0.6 * (0.5 * PI * x).sin().powi(2)
            } else if doy <= ANNUAL_HARVEST {
                0.75 - 0.53 * (doy - ANNUAL_PEAK) as f64 / (ANNUAL_HARVEST - ANNUAL_PEAK) as f64
            } else {
                0.22
            }
        }
        Profile::Evergreen => 0.8 + 0.02 * (TAU * doy as f64 / 365.0).sin(),
        Profile::Bare => 0.05,
    }
}

fn noise_amplitude(profile: Profile) -> f64 {
    match profile {
        Profile::Annual | Profile::Mixed => 0.02,
        Profile::Evergreen => 0.01,
        Profile::Bare => 0.02,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureSummary {
    pub rows: usize,
    pub dates: usize,
}

/// Writes observation CSV for `spec` to `out`. Same spec → same bytes.
pub fn generate<W: Write>(spec: &FixtureSpec, layout: &RegionLayout, out: W) -> io::Result<FixtureSummary> {
    let cells = spec.cells(layout).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut w = io::BufWriter::new(out);
    writeln!(w, "lat,lon,date,red,nir,cloud_fraction")?;
    let step = spec.revisit_days.max(1);
    let mut rows = 0;
    let mut n_dates = 0;
    for offset in (0..spec.days).step_by(step as usize) {
        let date = spec.start + chrono::Days::new(offset as u64);
        let doy = chrono::Datelike::ordinal(&date);
        n_dates += 1;
        for (k, &(_, p)) in cells.iter().enumerate() {
            let profile = spec.profile_of(k);
            let amp = noise_amplitude(profile);
            let ndvi = (profile_ndvi(profile, doy) + rng.random_range(-amp..=amp)).clamp(-0.95, 0.95);
            let brightness = 0.3 + rng.random_range(0.0..0.2);
            let nir = brightness * (1.0 + ndvi) / 2.0;
            let red = brightness * (1.0 - ndvi) / 2.0;
            let cloud = if rng.random_bool(0.15) { rng.random_range(0.11..=1.0) } else { rng.random_range(0.0..=0.10) };
            writeln!(w, "{:.6},{:.6},{},{:.6},{:.6},{:.4}", p.lat(), p.lon(), date, red, nir, cloud)?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(FixtureSummary { rows, dates: n_dates })
}
