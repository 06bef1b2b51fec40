#![allow(dead_code)]

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terratrace_core::geo::GeoError;
use terratrace_core::ingest::NdviSample;
use terratrace_core::{GeoPoint, GeoPolygon, RegionLayout};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn pt(lat: f64, lon: f64) -> GeoPoint {
    GeoPoint::new(lat, lon).unwrap()
}

pub fn epoch_plus(days: u64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(days)
}

/// Window around the corner shared by four California regions.
pub const WINDOW: (f64, f64, f64, f64) = (36.9, 37.6, -119.7, -118.9);

pub fn random_point(rng: &mut ChaCha8Rng, (s, n, w, e): (f64, f64, f64, f64)) -> GeoPoint {
    pt(rng.random_range(s..n), rng.random_range(w..e))
}

/// Star-shaped polygon around `center`: sorted angles with random radii,
/// which is always simple.
pub fn random_star(rng: &mut ChaCha8Rng, center: GeoPoint, max_radius_deg: f64) -> GeoPolygon {
    loop {
        let n = rng.random_range(3..12);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let verts: Vec<GeoPoint> = angles
            .iter()
            .map(|a| {
                let r = rng.random_range(0.05..1.0) * max_radius_deg;
                pt(center.lat() + r * a.sin(), center.lon() + r * a.cos())
            })
            .collect();
        match GeoPolygon::new(verts) {
            Ok(p) => return p,
            Err(GeoError::Degenerate | GeoError::SelfIntersecting(..) | GeoError::RepeatedVertex(_)) => continue,
            Err(e) => panic!("{e}"),
        }
    }
}

/// One sample per random point in `WINDOW`, spread over the first year.
pub fn window_samples(rng: &mut ChaCha8Rng, layout: &RegionLayout, n: usize) -> Vec<NdviSample> {
    (0..n)
        .map(|_| {
            let p = random_point(rng, WINDOW);
            NdviSample { cell: layout.locate(p).unwrap(), date: epoch_plus(rng.random_range(0..365)), ndvi: rng.random_range(-1.0..=1.0) }
        })
        .collect()
}
