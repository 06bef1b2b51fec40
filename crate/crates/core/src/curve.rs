//! Signature curves: per-day mean NDVI across cells, normalization,
//! daily interpolation and least-squares polynomial fits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::CellSeries;

pub const MAX_DEGREE: usize = 12;
/// Degree used for polygon queries.
pub const DEFAULT_DEGREE: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("no data")]
    NoData,
    #[error("degenerate normalization")]
    DegenerateNormalization,
    #[error("interpolation needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("underdetermined fit: degree {degree} needs {} points, got {points}", degree + 1)]
    Underdetermined { degree: usize, points: usize },
    #[error("fit degree {0} outside 0..={MAX_DEGREE}")]
    InvalidDegree(usize),
}

/// Least-squares polynomial in the scaled time variable
/// `t = (2·day − (t0 + t1)) / (t1 − t0)`, which maps `[t0, t1]` onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    pub degree: usize,
    /// Monomial coefficients in `t`, constant term first.
    pub coeffs: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyEval {
    pub value: f64,
    pub extrapolated: bool,
}

impl PolyFit {
    pub fn scale(&self, day: f64) -> f64 {
        if self.t1 == self.t0 {
            0.0
        } else {
            (2.0 * day - (self.t0 + self.t1)) / (self.t1 - self.t0)
        }
    }

    pub fn eval(&self, day: f64) -> f64 {
        let t = self.scale(day);
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn covers(&self, day: f64) -> bool {
        day >= self.t0 && day <= self.t1
    }

    /// Integer day in `[t0, t1]` where the fitted curve peaks; earliest on ties.
    pub fn argmax_day(&self) -> i64 {
        let (lo, hi) = (self.t0.ceil() as i64, self.t1.floor() as i64);
        let mut best = (lo, f64::NEG_INFINITY);
        for d in lo..=hi {
            let v = self.eval(d as f64);
            if v > best.1 {
                best = (d, v);
            }
        }
        best.0
    }
}

pub fn eval_poly(fit: &PolyFit, day: f64) -> PolyEval {
    PolyEval { value: fit.eval(day), extrapolated: !fit.covers(day) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureCurve {
    /// `(day, ndvi)` with strictly increasing days.
    pub points: Vec<(i32, f64)>,
    pub fit: Option<PolyFit>,
    pub contributing_cells: usize,
}

impl SignatureCurve {
    pub fn new(points: Vec<(i32, f64)>, contributing_cells: usize) -> Self {
        Self { points, fit: None, contributing_cells }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|&(_, v)| v)
    }

    pub fn with_fit(mut self, fit: PolyFit) -> Self {
        self.fit = Some(fit);
        self
    }
}

/// Mean NDVI per day over all cells with a sample that day. Samples with
/// NDVI ≤ 0 (bare soil, water, cloud residue) are dropped first.
pub fn mean_curve(series: &[CellSeries]) -> Result<SignatureCurve, CurveError> {
    let mut per_day: BTreeMap<u16, (f64, u32)> = BTreeMap::new();
    let mut contributing = 0;
    for s in series {
        let mut any = false;
        for &(day, v) in &s.samples {
            if v > 0.0 {
                let acc = per_day.entry(day).or_insert((0.0, 0));
                acc.0 += v as f64;
                acc.1 += 1;
                any = true;
            }
        }
        contributing += usize::from(any);
    }
    if per_day.is_empty() {
        return Err(CurveError::NoData);
    }
    let points = per_day.into_iter().map(|(d, (sum, n))| (d as i32, sum / n as f64)).collect();
    Ok(SignatureCurve::new(points, contributing))
}

/// Rescales values to `[0, 1]`. The result carries no fit.
pub fn normalize_curve(curve: &SignatureCurve) -> Result<SignatureCurve, CurveError> {
    let (min, max) = curve.values().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if curve.len() < 2 || max <= min {
        return Err(CurveError::DegenerateNormalization);
    }
    let span = max - min;
    let points = curve.points.iter().map(|&(d, v)| (d, (v - min) / span)).collect();
    Ok(SignatureCurve::new(points, curve.contributing_cells))
}

/// Linear interpolation onto every integer day between the first and last
/// sample. Original samples are kept as-is.
pub fn interpolate_daily(curve: &SignatureCurve) -> Result<SignatureCurve, CurveError> {
    if curve.len() < 2 {
        return Err(CurveError::TooFewPoints(curve.len()));
    }
    let first = curve.points[0].0;
    let last = curve.points[curve.len() - 1].0;
    let mut points = Vec::with_capacity((last - first + 1) as usize);
    for w in curve.points.windows(2) {
        let ((d0, v0), (d1, v1)) = (w[0], w[1]);
        points.push((d0, v0));
        let span = (d1 - d0) as f64;
        for d in d0 + 1..d1 {
            points.push((d, v0 + (v1 - v0) * (d - d0) as f64 / span));
        }
    }
    points.push(curve.points[curve.len() - 1]);
    Ok(SignatureCurve::new(points, curve.contributing_cells))
}

/// Least-squares polynomial of `degree` through the curve points, solved by
/// Householder QR on the Vandermonde matrix in the scaled time variable.
pub fn polyfit(curve: &SignatureCurve, degree: usize) -> Result<PolyFit, CurveError> {
    if degree > MAX_DEGREE {
        return Err(CurveError::InvalidDegree(degree));
    }
    let n = curve.len();
    let m = degree + 1;
    if n < m {
        return Err(CurveError::Underdetermined { degree, points: n });
    }
    let t0 = curve.points[0].0 as f64;
    let t1 = curve.points[n - 1].0 as f64;
    let mut fit = PolyFit { degree, coeffs: vec![0.0; m], t0, t1, rmse: 0.0 };

    // Column-major augmented matrix [A | b].
    let mut a = vec![0.0; n * (m + 1)];
    for (i, &(day, v)) in curve.points.iter().enumerate() {
        let t = fit.scale(day as f64);
        let mut p = 1.0;
        for j in 0..m {
            a[j * n + i] = p;
            p *= t;
        }
        a[m * n + i] = v;
    }
    householder_qr(&mut a, n, m + 1, m);

    for j in (0..m).rev() {
        let mut s = a[m * n + j];
        for k in j + 1..m {
            s -= a[k * n + j] * fit.coeffs[k];
        }
        let r = a[j * n + j];
        fit.coeffs[j] = if r == 0.0 { 0.0 } else { s / r };
    }

    let ss: f64 = curve.points.iter().map(|&(d, v)| (fit.eval(d as f64) - v).powi(2)).sum();
    fit.rmse = (ss / n as f64).sqrt();
    Ok(fit)
}

/// Reduces the first `k` columns of the column-major `rows × cols` matrix to
/// upper-triangular form, applying each reflection to all remaining columns.
fn householder_qr(a: &mut [f64], rows: usize, cols: usize, k: usize) {
    for j in 0..k.min(rows) {
        let col = &a[j * rows..(j + 1) * rows];
        let norm = col[j..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if col[j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = col[j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for c in j..cols {
            let column = &mut a[c * rows + j..(c + 1) * rows];
            let dot: f64 = v.iter().zip(column.iter()).map(|(x, y)| x * y).sum();
            let f = 2.0 * dot / vnorm2;
            for (y, x) in column.iter_mut().zip(&v) {
                *y -= f * x;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::CellId;
    use proptest::prelude::*;

    fn series(samples: Vec<(u16, f32)>) -> CellSeries {
        CellSeries { cell: CellId::new(0, 0, 0), samples }
    }

    fn curve(points: &[(i32, f64)]) -> SignatureCurve {
        SignatureCurve::new(points.to_vec(), 1)
    }

    #[test]
    fn mean_of_one_series() {
        let c = mean_curve(&[series(vec![(1, 0.25), (5, 0.5)])]).unwrap();
        assert_eq!(c.points, vec![(1, 0.25), (5, 0.5)]);
        assert_eq!(c.contributing_cells, 1);
    }

    #[test]
    fn mean_across_cells_and_positivity() {
        let c = mean_curve(&[series(vec![(10, 0.2), (11, 0.5)]), series(vec![(10, 0.6), (11, -0.3)]), series(vec![(12, 0.0)])]).unwrap();
        assert_eq!(c.points.len(), 2);
        assert!((c.points[0].1 - 0.4).abs() < 1e-7);
        assert_eq!(c.points[1], (11, 0.5));
        assert_eq!(c.contributing_cells, 2);
        assert_eq!(mean_curve(&[series(vec![])]), Err(CurveError::NoData));
        assert_eq!(mean_curve(&[]), Err(CurveError::NoData));
    }

    #[test]
    fn normalization() {
        let n = normalize_curve(&curve(&[(0, 0.2), (1, 0.6), (2, 1.0)])).unwrap();
        let vals: Vec<f64> = n.values().collect();
        assert_eq!(vals[0], 0.0);
        assert!((vals[1] - 0.5).abs() < 1e-12);
        assert_eq!(vals[2], 1.0);
        let unit = curve(&[(0, 0.0), (1, 0.25), (2, 1.0)]);
        assert_eq!(normalize_curve(&unit).unwrap().points, unit.points);
        assert_eq!(normalize_curve(&curve(&[(0, 0.3), (1, 0.3)])), Err(CurveError::DegenerateNormalization));
    }

    #[test]
    fn interpolation() {
        let c = interpolate_daily(&curve(&[(100, 0.2), (102, 0.4)])).unwrap();
        assert_eq!(c.points.len(), 3);
        assert!((c.points[1].1 - 0.3).abs() < 1e-12);
        let daily = curve(&[(1, 0.1), (2, 0.3), (3, 0.2)]);
        assert_eq!(interpolate_daily(&daily).unwrap(), daily);
        assert_eq!(interpolate_daily(&curve(&[(1, 0.1)])), Err(CurveError::TooFewPoints(1)));
    }

    #[test]
    fn interpolation_matches_segment_formula() {
        let raw = curve(&[(3, 0.1), (10, 0.7), (11, 0.65), (30, 0.2)]);
        let c = interpolate_daily(&raw).unwrap();
        assert_eq!(c.points.len(), 28);
        for &(d, v) in &c.points {
            let w = raw.points.windows(2).find(|w| w[0].0 <= d && d <= w[1].0).unwrap();
            let (x0, y0, x1, y1) = (w[0].0 as f64, w[0].1, w[1].0 as f64, w[1].1);
            let expected = y0 * (x1 - d as f64) / (x1 - x0) + y1 * (d as f64 - x0) / (x1 - x0);
            assert!((v - expected).abs() < 1e-12, "day {d}");
        }
        for p in &raw.points {
            assert!(c.points.contains(p));
        }
    }

    #[test]
    fn fit_errors() {
        let c = curve(&[(0, 0.1), (1, 0.2), (2, 0.3)]);
        assert_eq!(polyfit(&c, 3), Err(CurveError::Underdetermined { degree: 3, points: 3 }));
        assert_eq!(polyfit(&c, 13), Err(CurveError::InvalidDegree(13)));
    }

    #[test]
    fn constant_fit() {
        let pts: Vec<(i32, f64)> = (0..15).map(|d| (d * 7, 0.7)).collect();
        for degree in 0..=8 {
            let fit = polyfit(&curve(&pts), degree).unwrap();
            for d in 0..100 {
                assert!((fit.eval(d as f64) - 0.7).abs() < 1e-9, "degree {degree}");
            }
        }
    }

    #[test]
    fn degree_zero_eval() {
        let fit = PolyFit { degree: 0, coeffs: vec![0.42], t0: 0.0, t1: 10.0, rmse: 0.0 };
        assert_eq!(fit.eval(-50.0), 0.42);
        assert_eq!(eval_poly(&fit, 5.0), PolyEval { value: 0.42, extrapolated: false });
        assert!(eval_poly(&fit, 11.0).extrapolated);
    }

    #[test]
    fn serializes_curve_shape() {
        let mut c = curve(&[(1, 0.5), (2, 0.25)]);
        c.fit = Some(PolyFit { degree: 1, coeffs: vec![0.375, -0.125], t0: 1.0, t1: 2.0, rmse: 0.0 });
        let v: serde_json::Value = serde_json::to_value(&c).unwrap();
        assert_eq!(v["points"], serde_json::json!([[1, 0.5], [2, 0.25]]));
        assert_eq!(v["fit"]["degree"], 1);
        assert_eq!(v["fit"]["t0"], 1.0);
        assert_eq!(v["contributing_cells"], 1);
    }

    fn arb_curve() -> impl Strategy<Value = SignatureCurve> {
        proptest::collection::btree_map(0i32..400, 0.01f64..1.0, 2..60)
            .prop_map(|m| SignatureCurve::new(m.into_iter().collect(), 1))
    }

    proptest! {
        #[test]
        fn interpolation_idempotent(c in arb_curve()) {
            let once = interpolate_daily(&c).unwrap();
            prop_assert_eq!(interpolate_daily(&once).unwrap(), once);
        }

        #[test]
        fn normalization_keeps_extrema_positions(c in arb_curve()) {
            if let Ok(n) = normalize_curve(&c) {
                let argmax = |c: &SignatureCurve| c.points.iter().fold((i32::MIN, f64::NEG_INFINITY), |b, &(d, v)| if v > b.1 { (d, v) } else { b }).0;
                let argmin = |c: &SignatureCurve| c.points.iter().fold((i32::MIN, f64::INFINITY), |b, &(d, v)| if v < b.1 { (d, v) } else { b }).0;
                prop_assert_eq!(argmax(&n), argmax(&c));
                prop_assert_eq!(argmin(&n), argmin(&c));
                let lo = n.values().fold(f64::INFINITY, f64::min);
                let hi = n.values().fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!((lo, hi), (0.0, 1.0));
            }
        }

        #[test]
        fn rmse_non_increasing_in_degree(c in arb_curve()) {
            let mut prev = f64::INFINITY;
            for degree in 0..=8.min(c.len() - 1) {
                let r = polyfit(&c, degree).unwrap().rmse;
                prop_assert!(r <= prev + 1e-12, "degree {} rmse {} > {}", degree, r, prev);
                prev = r;
            }
        }

        #[test]
        fn exact_recovery(coeffs in proptest::collection::vec(-1.0f64..1.0, 1..=6), start in 0i32..200) {
            let deg = coeffs.len() - 1;
            let pts: Vec<(i32, f64)> = (0..25).map(|k| {
                let d = start + 3 * k;
                let t = (d - start) as f64 / 72.0;
                (d, coeffs.iter().rev().fold(0.0, |a, &c| a * t + c))
            }).collect();
            let c = curve(&pts);
            for degree in deg..=deg + 2 {
                let fit = polyfit(&c, degree).unwrap();
                prop_assert!(fit.rmse < 1e-9);
                for &(d, v) in &pts {
                    prop_assert!((fit.eval(d as f64) - v).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn eval_is_linear_in_coefficients(a in proptest::collection::vec(-1.0f64..1.0, 4), b in proptest::collection::vec(-1.0f64..1.0, 4), day in -50.0f64..450.0) {
            let mk = |coeffs: Vec<f64>| PolyFit { degree: 3, coeffs, t0: 0.0, t1: 365.0, rmse: 0.0 };
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let lhs = mk(sum).eval(day);
            let rhs = mk(a).eval(day) + mk(b).eval(day);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn mean_values_positive(vals in proptest::collection::vec(proptest::collection::vec(-1.0f32..=1.0, 5), 1..6)) {
            let ss: Vec<CellSeries> = vals.iter().map(|v| series(v.iter().enumerate().map(|(i, &x)| (i as u16, x)).collect())).collect();
            if let Ok(c) = mean_curve(&ss) {
                prop_assert!(c.values().all(|v| v > 0.0 && v <= 1.0));
                prop_assert!(c.contributing_cells >= 1);
            }
        }
    }
}
