//! Spatial reference: region tiling, 500 m cell geometry, polygon
//! containment and the two distance metrics used by queries.
//!
//! Cells are addressed on an equirectangular grid anchored at each region's
//! southwest corner. Longitude meters are scaled by the cosine of the
//! region-center latitude, so every region has a fixed, rectangular grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Meters per degree of latitude (and of longitude at the equator).
pub const METERS_PER_DEG: f64 = 111_320.0;

/// Mean Earth radius used by [`haversine_km`].
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Edge length of one dataset cell (0.25 km² per cell).
pub const CELL_SIZE_M: f64 = 500.0;

/// Cell offsets within this fraction of a cell boundary snap onto it, so a
/// point displaced by exactly k·500 m lands in cell k despite rounding in the
/// degree ↔ meter conversion.
const SNAP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("coordinate out of bounds: lat {lat}, lon {lon}")]
    OutOfBounds { lat: f64, lon: f64 },
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon repeats vertex {0} consecutively")]
    RepeatedVertex(usize),
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("degenerate polygon")]
    Degenerate,
    #[error("out of region")]
    OutOfRegion,
    #[error("cell ({row}, {col}) is outside region {region_id}")]
    InvalidCell { region_id: u8, row: u32, col: u32 },
    #[error("invalid bounding box")]
    InvalidBBox,
    #[error("invalid region layout: {0}")]
    InvalidLayout(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if lat.is_finite() && lon.is_finite() && (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) {
            Ok(Self { lat, lon })
        } else {
            Err(GeoError::OutOfBounds { lat, lon })
        }
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl TryFrom<[f64; 2]> for GeoPoint {
    type Error = GeoError;

    fn try_from([lat, lon]: [f64; 2]) -> Result<Self, Self::Error> {
        GeoPoint::new(lat, lon)
    }
}

impl From<GeoPoint> for [f64; 2] {
    fn from(p: GeoPoint) -> Self {
        [p.lat, p.lon]
    }
}

/// Latitude/longitude box. Region membership treats it as half-open
/// (`[min, max)` on both axes); range queries treat it as closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BBox {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self, GeoError> {
        let b = Self { lat_min, lat_max, lon_min, lon_max };
        if [lat_min, lat_max, lon_min, lon_max].iter().all(|v| v.is_finite()) && lat_min <= lat_max && lon_min <= lon_max {
            Ok(b)
        } else {
            Err(GeoError::InvalidBBox)
        }
    }

    /// Default dataset extent: the California bounding box.
    pub fn california() -> Self {
        Self { lat_min: 32.5, lat_max: 42.0, lon_min: -124.5, lon_max: -114.1 }
    }

    pub fn contains_half_open(&self, p: GeoPoint) -> bool {
        p.lat >= self.lat_min && p.lat < self.lat_max && p.lon >= self.lon_min && p.lon < self.lon_max
    }

    pub fn contains_closed(&self, p: GeoPoint) -> bool {
        p.lat >= self.lat_min && p.lat <= self.lat_max && p.lon >= self.lon_min && p.lon <= self.lon_max
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.lat_min <= other.lat_max && other.lat_min <= self.lat_max && self.lon_min <= other.lon_max && other.lon_min <= self.lon_max
    }

    pub fn center_lat(&self) -> f64 {
        0.5 * (self.lat_min + self.lat_max)
    }
}

/// Address of one 500 m cell. Ordering is (region, row, col).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub region_id: u8,
    pub row: u32,
    pub col: u32,
}

impl CellId {
    pub fn new(region_id: u8, row: u32, col: u32) -> Self {
        Self { region_id, row, col }
    }
}

impl std::fmt::Display for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{}", self.region_id, self.row, self.col)
    }
}

impl std::str::FromStr for CellId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected <region,row,col>, got {s:?}"));
        }
        let region_id = parts[0].parse().map_err(|e| format!("region: {e}"))?;
        let row = parts[1].parse().map_err(|e| format!("row: {e}"))?;
        let col = parts[2].parse().map_err(|e| format!("col: {e}"))?;
        Ok(CellId { region_id, row, col })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub region_id: u8,
    pub bounds: BBox,
    pub origin: GeoPoint,
    pub cell_size_m: f64,
}

impl RegionSpec {
    pub fn new(region_id: u8, bounds: BBox) -> Self {
        let origin = GeoPoint { lat: bounds.lat_min, lon: bounds.lon_min };
        Self { region_id, bounds, origin, cell_size_m: CELL_SIZE_M }
    }

    /// Meters per degree of longitude, fixed at the region-center latitude.
    pub fn meters_per_deg_lon(&self) -> f64 {
        METERS_PER_DEG * self.bounds.center_lat().to_radians().cos()
    }

    /// Grid height: the number of rows whose center lies inside the region.
    /// Points in the sliver above the last center fold into the last row.
    pub fn rows(&self) -> u32 {
        let h = (self.bounds.lat_max - self.origin.lat) * METERS_PER_DEG;
        (h / self.cell_size_m - 0.5).ceil().max(1.0) as u32
    }

    pub fn cols(&self) -> u32 {
        let w = (self.bounds.lon_max - self.origin.lon) * self.meters_per_deg_lon();
        (w / self.cell_size_m - 0.5).ceil().max(1.0) as u32
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        self.bounds.contains_half_open(p)
    }

    pub fn is_valid_cell(&self, c: CellId) -> bool {
        c.region_id == self.region_id && c.row < self.rows() && c.col < self.cols()
    }

    /// (north, east) offset in meters from the region origin.
    pub fn offset_m(&self, p: GeoPoint) -> (f64, f64) {
        ((p.lat - self.origin.lat) * METERS_PER_DEG, (p.lon - self.origin.lon) * self.meters_per_deg_lon())
    }

    /// Latitude of the center of `row`.
    pub fn row_center_lat(&self, row: u32) -> f64 {
        self.origin.lat + (row as f64 + 0.5) * self.cell_size_m / METERS_PER_DEG
    }

    fn validate(&self) -> Result<(), GeoError> {
        if !(self.cell_size_m > 0.0 && self.cell_size_m.is_finite()) {
            return Err(GeoError::InvalidLayout(format!("region {} has cell_size_m {}", self.region_id, self.cell_size_m)));
        }
        if !(self.bounds.lat_min < self.bounds.lat_max && self.bounds.lon_min < self.bounds.lon_max) {
            return Err(GeoError::InvalidLayout(format!("region {} has an empty box", self.region_id)));
        }
        Ok(())
    }
}

/// The set of regions tiling a dataset extent, sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionLayout {
    pub extent: BBox,
    pub regions: Vec<RegionSpec>,
}

impl RegionLayout {
    /// Splits `extent` into `rows × cols` equal boxes, ids row-major from
    /// the southwest corner. Shared edges are computed by the same expression
    /// on both sides, so neighbouring boxes meet without gaps.
    pub fn grid(extent: BBox, rows: u8, cols: u8) -> Result<Self, GeoError> {
        if rows == 0 || cols == 0 || rows as u16 * cols as u16 > 256 {
            return Err(GeoError::InvalidLayout(format!("{rows}x{cols} split")));
        }
        let dlat = (extent.lat_max - extent.lat_min) / rows as f64;
        let dlon = (extent.lon_max - extent.lon_min) / cols as f64;
        let lat_edge = |i: u8| if i == rows { extent.lat_max } else { extent.lat_min + i as f64 * dlat };
        let lon_edge = |j: u8| if j == cols { extent.lon_max } else { extent.lon_min + j as f64 * dlon };
        let mut regions = Vec::with_capacity(rows as usize * cols as usize);
        for i in 0..rows {
            for j in 0..cols {
                let bounds = BBox { lat_min: lat_edge(i), lat_max: lat_edge(i + 1), lon_min: lon_edge(j), lon_max: lon_edge(j + 1) };
                regions.push(RegionSpec::new(i * cols + j, bounds));
            }
        }
        Self::new(extent, regions)
    }

    /// Default layout: the California extent as a 4-row by 2-column split.
    pub fn california() -> Self {
        Self::grid(BBox::california(), 4, 2).expect("static layout is valid")
    }

    pub fn new(extent: BBox, mut regions: Vec<RegionSpec>) -> Result<Self, GeoError> {
        regions.sort_by_key(|r| r.region_id);
        for w in regions.windows(2) {
            if w[0].region_id == w[1].region_id {
                return Err(GeoError::InvalidLayout(format!("duplicate region id {}", w[0].region_id)));
            }
        }
        for r in &regions {
            r.validate()?;
        }
        Ok(Self { extent, regions })
    }

    pub fn region(&self, region_id: u8) -> Option<&RegionSpec> {
        self.regions.binary_search_by_key(&region_id, |r| r.region_id).ok().map(|i| &self.regions[i])
    }

    pub fn region_of(&self, p: GeoPoint) -> Option<u8> {
        region_of(p, &self.regions)
    }

    /// Region and cell of `p`, or `None` outside the extent.
    pub fn locate(&self, p: GeoPoint) -> Option<CellId> {
        let id = self.region_of(p)?;
        cell_of(p, self.region(id)?).ok()
    }
}

/// Region whose half-open box contains `p`.
pub fn region_of(p: GeoPoint, regions: &[RegionSpec]) -> Option<u8> {
    regions.iter().find(|r| r.contains(p)).map(|r| r.region_id)
}

pub fn cell_of(p: GeoPoint, region: &RegionSpec) -> Result<CellId, GeoError> {
    if !region.contains(p) {
        return Err(GeoError::OutOfRegion);
    }
    let (north, east) = region.offset_m(p);
    let index = |offset: f64, limit: u32| -> u32 {
        let k = (offset / region.cell_size_m + SNAP).floor().max(0.0) as u32;
        k.min(limit - 1)
    };
    Ok(CellId { region_id: region.region_id, row: index(north, region.rows()), col: index(east, region.cols()) })
}

pub fn cell_center(c: CellId, region: &RegionSpec) -> Result<GeoPoint, GeoError> {
    if !region.is_valid_cell(c) {
        return Err(GeoError::InvalidCell { region_id: c.region_id, row: c.row, col: c.col });
    }
    let north = (c.row as f64 + 0.5) * region.cell_size_m;
    let east = (c.col as f64 + 0.5) * region.cell_size_m;
    Ok(GeoPoint { lat: region.origin.lat + north / METERS_PER_DEG, lon: region.origin.lon + east / region.meters_per_deg_lon() })
}

/// Planar distance under the equirectangular projection centered at the
/// midpoint latitude.
pub fn euclid_dist_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let mid = (0.5 * (a.lat + b.lat)).to_radians();
    let dx = (b.lon - a.lon) * METERS_PER_DEG * mid.cos();
    let dy = (b.lat - a.lat) * METERS_PER_DEG;
    dx.hypot(dy)
}

pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Simple polygon in the lat/lon plane. Closure is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolygonRepr", into = "VerticesRepr")]
pub struct GeoPolygon {
    vertices: Vec<GeoPoint>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PolygonRepr {
    Vertices(VerticesRepr),
    GeoJson(GeoJsonPolygon),
}

#[derive(Serialize, Deserialize)]
struct VerticesRepr {
    vertices: Vec<[f64; 2]>,
}

/// `{"type": "Polygon", "coordinates": [[[lon, lat], ...], ...]}`; only the
/// outer ring is used.
#[derive(Deserialize)]
struct GeoJsonPolygon {
    #[serde(rename = "type")]
    kind: String,
    coordinates: Vec<Vec<[f64; 2]>>,
}

impl TryFrom<PolygonRepr> for GeoPolygon {
    type Error = GeoError;

    fn try_from(repr: PolygonRepr) -> Result<Self, Self::Error> {
        match repr {
            PolygonRepr::Vertices(v) => {
                let pts = v.vertices.into_iter().map(GeoPoint::try_from).collect::<Result<Vec<_>, _>>()?;
                GeoPolygon::new(pts)
            }
            PolygonRepr::GeoJson(g) => {
                if g.kind != "Polygon" {
                    return Err(GeoError::InvalidLayout(format!("unsupported geometry type {:?}", g.kind)));
                }
                let ring = g.coordinates.into_iter().next().ok_or(GeoError::TooFewVertices(0))?;
                let mut pts = ring.into_iter().map(|[lon, lat]| GeoPoint::new(lat, lon)).collect::<Result<Vec<_>, _>>()?;
                if pts.len() > 1 && pts.first() == pts.last() {
                    pts.pop();
                }
                GeoPolygon::new(pts)
            }
        }
    }
}

impl From<GeoPolygon> for VerticesRepr {
    fn from(p: GeoPolygon) -> Self {
        VerticesRepr { vertices: p.vertices.into_iter().map(Into::into).collect() }
    }
}

impl GeoPolygon {
    pub fn new(vertices: Vec<GeoPoint>) -> Result<Self, GeoError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeoError::TooFewVertices(n));
        }
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(GeoError::RepeatedVertex(i));
            }
        }
        let poly = Self { vertices };
        if n > 3 {
            for i in 0..n {
                // Adjacent edges share a vertex; only test non-adjacent pairs.
                for j in (i + 2)..n {
                    if i == 0 && j == n - 1 {
                        continue;
                    }
                    if segments_intersect(poly.edge(i), poly.edge(j)) {
                        return Err(GeoError::SelfIntersecting(i, j));
                    }
                }
            }
        }
        if poly.signed_area().abs() == 0.0 {
            return Err(GeoError::Degenerate);
        }
        Ok(poly)
    }

    /// Parses `{"vertices": [[lat, lon], ...]}` or a GeoJSON `Polygon`.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        &self.vertices
    }

    fn edge(&self, i: usize) -> (GeoPoint, GeoPoint) {
        (self.vertices[i], self.vertices[(i + 1) % self.vertices.len()])
    }

    /// Shoelace area in degree² (x = lon, y = lat); positive when
    /// counter-clockwise.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let (a, b) = self.edge(i);
                a.lon * b.lat - b.lon * a.lat
            })
            .sum::<f64>()
            / 2.0
    }

    pub fn bbox(&self) -> BBox {
        let mut b = BBox { lat_min: f64::INFINITY, lat_max: f64::NEG_INFINITY, lon_min: f64::INFINITY, lon_max: f64::NEG_INFINITY };
        for v in &self.vertices {
            b.lat_min = b.lat_min.min(v.lat);
            b.lat_max = b.lat_max.max(v.lat);
            b.lon_min = b.lon_min.min(v.lon);
            b.lon_max = b.lon_max.max(v.lon);
        }
        b
    }

    /// Arithmetic mean of the vertices.
    pub fn centroid(&self) -> GeoPoint {
        let n = self.vertices.len() as f64;
        let (lat, lon) = self.vertices.iter().fold((0.0, 0.0), |(a, b), v| (a + v.lat, b + v.lon));
        GeoPoint { lat: lat / n, lon: lon / n }
    }
}

fn orient(a: GeoPoint, b: GeoPoint, c: GeoPoint) -> f64 {
    (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon)
}

fn on_segment(p: GeoPoint, (a, b): (GeoPoint, GeoPoint)) -> bool {
    orient(a, b, p) == 0.0
        && p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

fn segments_intersect(s: (GeoPoint, GeoPoint), t: (GeoPoint, GeoPoint)) -> bool {
    let d1 = orient(t.0, t.1, s.0);
    let d2 = orient(t.0, t.1, s.1);
    let d3 = orient(s.0, s.1, t.0);
    let d4 = orient(s.0, s.1, t.1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(s.0, t) || on_segment(s.1, t) || on_segment(t.0, s) || on_segment(t.1, s)
}

/// Even-odd ray casting in the lat/lon plane. Points on an edge or vertex
/// count as inside.
pub fn point_in_polygon(p: GeoPoint, poly: &GeoPolygon) -> bool {
    let n = poly.vertices.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = poly.edge(i);
        if on_segment(p, (a, b)) {
            return true;
        }
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if p.lon < x {
                inside = !inside;
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn square() -> GeoPolygon {
        GeoPolygon::new(vec![pt(36.0, -120.0), pt(36.0, -119.0), pt(37.0, -119.0), pt(37.0, -120.0)]).unwrap()
    }

    fn region_at(lat: f64, lon: f64) -> RegionSpec {
        RegionSpec::new(0, BBox::new(lat, lat + 1.0, lon, lon + 1.0).unwrap())
    }

    #[test]
    fn point_bounds() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(GeoPoint::new(-90.0, 180.0).is_ok());
    }

    #[test]
    fn region_of_origin_and_outside() {
        let layout = RegionLayout::california();
        assert_eq!(layout.regions.len(), 8);
        for r in &layout.regions {
            assert_eq!(layout.region_of(r.origin), Some(r.region_id));
        }
        assert_eq!(layout.region_of(pt(0.0, 0.0)), None);
        // top and east edges of the extent are open
        assert_eq!(layout.region_of(pt(42.0, -120.0)), None);
        assert_eq!(layout.region_of(pt(40.0, -114.1)), None);
    }

    #[test]
    fn shared_boundary_goes_north() {
        let layout = RegionLayout::california();
        // region 0 spans [32.5, 34.875), region 2 starts at 34.875
        let south = layout.region(0).unwrap();
        let north = layout.region(2).unwrap();
        assert_eq!(south.bounds.lat_max, north.bounds.lat_min);
        assert_eq!(north.bounds.lat_min, 34.875);
        assert_eq!(layout.region_of(pt(34.875, -122.0)), Some(2));
        assert_eq!(layout.region_of(pt(34.874_999, -122.0)), Some(0));
        // shared west/east edge at lon -119.3 goes east
        assert_eq!(layout.region_of(pt(33.0, -119.3)), Some(1));
    }

    #[test]
    fn cell_of_offsets() {
        let r = region_at(36.0, -120.0);
        let mlon = r.meters_per_deg_lon();
        assert_eq!(cell_of(r.origin, &r).unwrap(), CellId::new(0, 0, 0));
        let p = pt(36.0 + 750.0 / METERS_PER_DEG, -120.0 + 250.0 / mlon);
        assert_eq!(cell_of(p, &r).unwrap(), CellId::new(0, 1, 0));
        let p = pt(36.0 + 500.0 / METERS_PER_DEG, -120.0);
        assert_eq!(cell_of(p, &r).unwrap(), CellId::new(0, 1, 0));
        let p = pt(36.0, -120.0 + 1000.0 / mlon);
        assert_eq!(cell_of(p, &r).unwrap().col, 2);
        assert_eq!(cell_of(pt(35.5, -120.0), &r), Err(GeoError::OutOfRegion));
    }

    #[test]
    fn cell_center_values() {
        let r = region_at(36.0, -120.0);
        let c = cell_center(CellId::new(0, 0, 0), &r).unwrap();
        let (n, e) = r.offset_m(c);
        assert!((n - 250.0).abs() < 1e-6 && (e - 250.0).abs() < 1e-6);
        let c = cell_center(CellId::new(0, 1, 1), &r).unwrap();
        assert!((c.lat() - (36.0 + 750.0 / 111_320.0)).abs() < 1e-12);
        assert!(cell_center(CellId::new(0, r.rows(), 0), &r).is_err());
        assert!(cell_center(CellId::new(3, 0, 0), &r).is_err());
    }

    #[test]
    fn cell_round_trip_every_cell() {
        let r = RegionSpec::new(5, BBox::new(36.0, 36.2, -120.0, -119.8).unwrap());
        for row in 0..r.rows() {
            for col in 0..r.cols() {
                let c = CellId::new(5, row, col);
                let center = cell_center(c, &r).unwrap();
                assert!(r.contains(center));
                assert_eq!(cell_of(center, &r).unwrap(), c);
            }
        }
    }

    #[test]
    fn polygon_validation() {
        assert_eq!(GeoPolygon::new(vec![pt(0.0, 0.0), pt(1.0, 1.0)]), Err(GeoError::TooFewVertices(2)));
        assert_eq!(GeoPolygon::new(vec![pt(0.0, 0.0), pt(0.0, 0.0), pt(1.0, 1.0)]), Err(GeoError::RepeatedVertex(0)));
        assert_eq!(GeoPolygon::new(vec![pt(0.0, 0.0), pt(1.0, 1.0), pt(2.0, 2.0)]), Err(GeoError::Degenerate));
        // bow tie
        let bow = GeoPolygon::new(vec![pt(0.0, 0.0), pt(1.0, 1.0), pt(1.0, 0.0), pt(0.0, 1.0)]);
        assert!(matches!(bow, Err(GeoError::SelfIntersecting(_, _))));
    }

    #[test]
    fn polygon_json_shapes() {
        let p = GeoPolygon::from_json(r#"{"vertices": [[36,-120],[36,-119],[37,-119],[37,-120]]}"#).unwrap();
        assert_eq!(p, square());
        let g = GeoPolygon::from_json(
            r#"{"type":"Polygon","coordinates":[[[-120,36],[-119,36],[-119,37],[-120,37],[-120,36]]]}"#,
        )
        .unwrap();
        assert_eq!(g, square());
        assert!(GeoPolygon::from_json(r#"{"vertices": [[36,-120],[36,-119]]}"#).is_err());
        let s = serde_json::to_string(&square()).unwrap();
        assert_eq!(s, r#"{"vertices":[[36.0,-120.0],[36.0,-119.0],[37.0,-119.0],[37.0,-120.0]]}"#);
    }

    #[test]
    fn point_in_square() {
        let sq = square();
        assert!(point_in_polygon(pt(36.5, -119.5), &sq));
        assert!(!point_in_polygon(pt(38.0, -119.5), &sq));
        assert!(!point_in_polygon(pt(36.5, -121.0), &sq));
        // boundary counts as inside
        assert!(point_in_polygon(pt(36.0, -119.5), &sq));
        assert!(point_in_polygon(pt(37.0, -119.0), &sq));
    }

    #[test]
    fn distances() {
        let a = pt(36.0, -120.0);
        assert_eq!(euclid_dist_m(a, a), 0.0);
        assert_eq!(haversine_km(a, a), 0.0);
        let b = pt(36.01, -120.0);
        assert!((euclid_dist_m(a, b) - 1113.2).abs() / 1113.2 < 0.01);
        let anti = haversine_km(pt(0.0, 0.0), pt(0.0, 180.0));
        assert!((anti - 20015.1).abs() < 0.1, "{anti}");
        let d = haversine_km(a, pt(36.0, -119.0));
        assert!((d - 90.0).abs() < 1.0, "{d}");
    }
}
