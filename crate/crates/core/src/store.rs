//! Regional tile store for per-cell NDVI series.
//!
//! Layout on disk: `manifest.json` plus one `region_<id>.ttrc` per non-empty
//! region. A tile is little-endian throughout:
//!
//! ```text
//! header   magic "TTRC" | version u16 | region_id u8 | reserved u8 (0)
//!          | rows u32 | cols u32 | cell_count u32
//! per cell region_id u8 | row u32 | col u32 | sample_count u32
//!          | sample_count × (day u16 | ndvi f32)
//! ```
//!
//! Cells appear in ascending (row, col) order and days strictly ascending
//! within a cell. Days count from 2020-01-01.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dates;
use crate::geo::{self, BBox, CellId, GeoPoint, GeoPolygon, RegionLayout, RegionSpec};
use crate::ingest::NdviSample;

pub const TILE_MAGIC: [u8; 4] = *b"TTRC";
pub const FORMAT_VERSION: u16 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const HEADER_LEN: usize = 20;
const CELL_HEADER_LEN: usize = 13;
const SAMPLE_LEN: usize = 6;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("output directory {0} is not empty (use --force to overwrite)")]
    NotEmpty(PathBuf),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("unsupported store version {0}")]
    Version(u16),
    #[error("corrupt tile {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("sample for cell {0} does not belong to the layout")]
    InvalidCell(CellId),
    #[error("sample date {0} outside the storable range")]
    DateOutOfRange(NaiveDate),
    #[error("store is empty")]
    Empty,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSeries {
    pub cell: CellId,
    /// `(day number, ndvi)` with strictly increasing days.
    pub samples: Vec<(u16, f32)>,
}

impl CellSeries {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.samples.iter().map(|&(d, _)| dates::date_of(d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionCount {
    pub region_id: u8,
    pub cells: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u16,
    pub extent: BBox,
    pub regions: Vec<RegionSpec>,
    pub date_range: Option<(NaiveDate, NaiveDate)>,
    pub counts: Vec<RegionCount>,
}

impl DatasetManifest {
    pub fn layout(&self) -> Result<RegionLayout, geo::GeoError> {
        RegionLayout::new(self.extent, self.regions.clone())
    }

    pub fn total_cells(&self) -> usize {
        self.counts.iter().map(|c| c.cells).sum()
    }

    pub fn total_samples(&self) -> usize {
        self.counts.iter().map(|c| c.samples).sum()
    }
}

pub fn tile_path(dir: &Path, region_id: u8) -> PathBuf {
    dir.join(format!("region_{region_id}.ttrc"))
}

type CellMap = BTreeMap<CellId, BTreeMap<u16, (f64, u32)>>;

/// Aggregates `samples` (averaging same cell and day) and writes the tiles
/// and manifest into `out_dir`.
pub fn build_store(samples: &[NdviSample], layout: &RegionLayout, out_dir: &Path, force: bool) -> Result<DatasetManifest, StoreError> {
    let mut per_region: BTreeMap<u8, CellMap> = BTreeMap::new();
    for s in samples {
        let region = layout.region(s.cell.region_id).filter(|r| r.is_valid_cell(s.cell)).ok_or(StoreError::InvalidCell(s.cell))?;
        let day = dates::day_number(s.date).ok_or(StoreError::DateOutOfRange(s.date))?;
        let acc = per_region.entry(region.region_id).or_default().entry(s.cell).or_default().entry(day).or_insert((0.0, 0));
        acc.0 += s.ndvi;
        acc.1 += 1;
    }

    prepare_dir(out_dir, force)?;

    let mut counts = Vec::with_capacity(layout.regions.len());
    let (mut first, mut last) = (u16::MAX, 0u16);
    for region in &layout.regions {
        let Some(cells) = per_region.get(&region.region_id) else {
            counts.push(RegionCount { region_id: region.region_id, cells: 0, samples: 0 });
            continue;
        };
        let n_samples: usize = cells.values().map(BTreeMap::len).sum();
        let mut buf = Vec::with_capacity(HEADER_LEN + cells.len() * CELL_HEADER_LEN + n_samples * SAMPLE_LEN);
        buf.extend_from_slice(&TILE_MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.push(region.region_id);
        buf.push(0);
        buf.extend_from_slice(&region.rows().to_le_bytes());
        buf.extend_from_slice(&region.cols().to_le_bytes());
        buf.extend_from_slice(&(cells.len() as u32).to_le_bytes());
        for (cell, days) in cells {
            buf.push(cell.region_id);
            buf.extend_from_slice(&cell.row.to_le_bytes());
            buf.extend_from_slice(&cell.col.to_le_bytes());
            buf.extend_from_slice(&(days.len() as u32).to_le_bytes());
            for (&day, &(sum, n)) in days {
                let mean = (sum / n as f64) as f32;
                buf.extend_from_slice(&day.to_le_bytes());
                buf.extend_from_slice(&mean.to_le_bytes());
                first = first.min(day);
                last = last.max(day);
            }
        }
        let path = tile_path(out_dir, region.region_id);
        fs::write(&path, &buf).map_err(io_err(&path))?;
        counts.push(RegionCount { region_id: region.region_id, cells: cells.len(), samples: n_samples });
    }

    let manifest = DatasetManifest {
        version: FORMAT_VERSION,
        extent: layout.extent,
        regions: layout.regions.clone(),
        date_range: (first <= last).then(|| (dates::date_of(first), dates::date_of(last))),
        counts,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}

fn prepare_dir(dir: &Path, force: bool) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::new();
    for e in fs::read_dir(dir).map_err(io_err(dir))? {
        entries.push(e.map_err(io_err(dir))?.path());
    }
    if entries.is_empty() {
        return Ok(());
    }
    if !force {
        return Err(StoreError::NotEmpty(dir.to_path_buf()));
    }
    for p in entries {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name == MANIFEST_FILE || (name.starts_with("region_") && name.ends_with(".ttrc")) {
            fs::remove_file(&p).map_err(io_err(&p))?;
        }
    }
    Ok(())
}

/// Cells of one region held in memory, sorted by (row, col).
#[derive(Debug)]
struct RegionTiles {
    spec: RegionSpec,
    cells: Vec<CellId>,
    centers: Vec<GeoPoint>,
    /// Sample range of each cell in `days` / `values`.
    spans: Vec<(usize, usize)>,
    days: Vec<u16>,
    values: Vec<f32>,
    /// `(row, first cell index, end cell index)` for each populated row.
    row_index: Vec<(u32, usize, usize)>,
}

impl RegionTiles {
    fn position(&self, cell: CellId) -> Option<usize> {
        self.cells.binary_search(&cell).ok()
    }

    fn row_lat(&self, i: usize) -> f64 {
        self.centers[self.row_index[i].1].lat()
    }

    fn cells_in_bbox(&self, bbox: &BBox, out: &mut Vec<CellId>) {
        let lo = self.row_index.partition_point(|&(_, s, _)| self.centers[s].lat() < bbox.lat_min);
        let hi = self.row_index.partition_point(|&(_, s, _)| self.centers[s].lat() <= bbox.lat_max);
        for &(_, start, end) in &self.row_index[lo..hi.max(lo)] {
            let row = &self.centers[start..end];
            let a = row.partition_point(|c| c.lon() < bbox.lon_min);
            let b = row.partition_point(|c| c.lon() <= bbox.lon_max);
            out.extend_from_slice(&self.cells[start + a..start + b.max(a)]);
        }
    }

    /// Updates `best` with any closer cell, scanning rows outward from the
    /// query latitude until the latitude gap alone exceeds the best distance.
    fn nearest(&self, p: GeoPoint, best: &mut Option<(f64, CellId)>) {
        let n = self.row_index.len();
        let pos = self.row_index.partition_point(|&(_, s, _)| self.centers[s].lat() < p.lat());
        let (mut up, mut down) = (pos, pos);
        loop {
            let gap_up = (up < n).then(|| (self.row_lat(up) - p.lat()).abs());
            let gap_down = (down > 0).then(|| (self.row_lat(down - 1) - p.lat()).abs());
            let (i, gap) = match (gap_up, gap_down) {
                (None, None) => return,
                (Some(g), None) => (up, g),
                (None, Some(g)) => (down - 1, g),
                (Some(gu), Some(gd)) => {
                    if gu <= gd {
                        (up, gu)
                    } else {
                        (down - 1, gd)
                    }
                }
            };
            if let Some((d, _)) = best {
                if gap * geo::METERS_PER_DEG > *d {
                    return;
                }
            }
            let (_, start, end) = self.row_index[i];
            for k in start..end {
                let d = geo::euclid_dist_m(p, self.centers[k]);
                let cand = (d, self.cells[k]);
                if best.is_none_or(|b| cand.0 < b.0 || (cand.0 == b.0 && cand.1 < b.1)) {
                    *best = Some(cand);
                }
            }
            if i == up {
                up += 1;
            } else {
                down -= 1;
            }
        }
    }
}

/// Read-only, in-memory view of a built store.
#[derive(Debug)]
pub struct Store {
    manifest: DatasetManifest,
    regions: Vec<RegionTiles>,
}

impl Store {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.version != FORMAT_VERSION {
            return Err(StoreError::Version(manifest.version));
        }
        let layout = manifest.layout().map_err(|e| StoreError::Corrupt { path: mpath.clone(), reason: e.to_string() })?;
        let mut regions = Vec::new();
        for count in &manifest.counts {
            if count.cells == 0 {
                continue;
            }
            let spec = layout.region(count.region_id).ok_or_else(|| StoreError::Corrupt {
                path: mpath.clone(),
                reason: format!("counts name unknown region {}", count.region_id),
            })?;
            let path = tile_path(dir, count.region_id);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let tiles = decode_tile(&bytes, spec).map_err(|reason| StoreError::Corrupt { path: path.clone(), reason })?;
            if tiles.cells.len() != count.cells || tiles.days.len() != count.samples {
                return Err(StoreError::Corrupt { path, reason: "tile contents disagree with manifest counts".into() });
            }
            regions.push(tiles);
        }
        Ok(Self { manifest, regions })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn cell_count(&self) -> usize {
        self.regions.iter().map(|r| r.cells.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_count() == 0
    }

    /// All stored cells in ascending order.
    pub fn cells(&self) -> impl Iterator<Item = CellId> + '_ {
        self.regions.iter().flat_map(|r| r.cells.iter().copied())
    }

    fn region(&self, region_id: u8) -> Option<&RegionTiles> {
        self.regions.iter().find(|r| r.spec.region_id == region_id)
    }

    pub fn contains(&self, cell: CellId) -> bool {
        self.region(cell.region_id).and_then(|r| r.position(cell)).is_some()
    }

    pub fn center(&self, cell: CellId) -> Option<GeoPoint> {
        let r = self.region(cell.region_id)?;
        r.position(cell).map(|i| r.centers[i])
    }

    /// Stored cells whose centers fall inside the closed box.
    pub fn query_bbox(&self, bbox: &BBox) -> Vec<CellId> {
        let mut out = Vec::new();
        for r in &self.regions {
            if r.spec.bounds.intersects(bbox) {
                r.cells_in_bbox(bbox, &mut out);
            }
        }
        out
    }

    /// Bounding-box prefilter followed by point-in-polygon on cell centers.
    pub fn cells_in_polygon(&self, poly: &GeoPolygon) -> Vec<CellId> {
        let mut cells = self.query_bbox(&poly.bbox());
        cells.retain(|&c| self.center(c).is_some_and(|p| geo::point_in_polygon(p, poly)));
        cells
    }

    /// Closest stored cell center to `p`; ties go to the smaller `CellId`.
    pub fn nearest_cell(&self, p: GeoPoint) -> Result<(CellId, f64), StoreError> {
        let mut best = None;
        for r in &self.regions {
            r.nearest(p, &mut best);
        }
        best.map(|(d, c)| (c, d)).ok_or(StoreError::Empty)
    }

    /// Samples of `cell` with `from <= date <= to`. Unknown cells give an
    /// empty series.
    pub fn load_series(&self, cell: CellId, from: NaiveDate, to: NaiveDate) -> CellSeries {
        let mut samples = Vec::new();
        if let Some(r) = self.region(cell.region_id) {
            if let Some(i) = r.position(cell) {
                let (lo, hi) = (dates::day_offset(from), dates::day_offset(to));
                let (s, e) = r.spans[i];
                let days = &r.days[s..e];
                let a = days.partition_point(|&d| (d as i64) < lo);
                let b = days.partition_point(|&d| (d as i64) <= hi);
                samples.extend((a..b.max(a)).map(|k| (days[k], r.values[s + k])));
            }
        }
        CellSeries { cell, samples }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], String> {
        let end = self.at + N;
        let slice = self.bytes.get(self.at..end).ok_or("truncated tile")?;
        self.at = end;
        Ok(slice.try_into().expect("slice has length N"))
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, String> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f32(&mut self) -> Result<f32, String> {
        Ok(f32::from_le_bytes(self.take()?))
    }
}

fn decode_tile(bytes: &[u8], spec: &RegionSpec) -> Result<RegionTiles, String> {
    let mut cur = Cursor { bytes, at: 0 };
    if cur.take::<4>()? != TILE_MAGIC {
        return Err("bad magic".into());
    }
    let version = cur.u16()?;
    if version != FORMAT_VERSION {
        return Err(format!("unsupported tile version {version}"));
    }
    let region_id = cur.u8()?;
    cur.u8()?;
    let (rows, cols) = (cur.u32()?, cur.u32()?);
    if region_id != spec.region_id || rows != spec.rows() || cols != spec.cols() {
        return Err("header does not match the manifest region".into());
    }
    let n_cells = cur.u32()? as usize;
    let mut t = RegionTiles {
        spec: spec.clone(),
        cells: Vec::with_capacity(n_cells),
        centers: Vec::with_capacity(n_cells),
        spans: Vec::with_capacity(n_cells),
        days: Vec::new(),
        values: Vec::new(),
        row_index: Vec::new(),
    };
    for _ in 0..n_cells {
        let cell = CellId { region_id: cur.u8()?, row: cur.u32()?, col: cur.u32()? };
        if !spec.is_valid_cell(cell) {
            return Err(format!("cell {cell} outside region grid"));
        }
        if t.cells.last().is_some_and(|&prev| prev >= cell) {
            return Err(format!("cell {cell} out of order"));
        }
        let n = cur.u32()? as usize;
        let start = t.days.len();
        for _ in 0..n {
            let (day, v) = (cur.u16()?, cur.f32()?);
            if t.days.len() > start && t.days.last().is_some_and(|&d| d >= day) {
                return Err(format!("cell {cell} days not strictly increasing"));
            }
            if !(-1.0..=1.0).contains(&v) {
                return Err(format!("cell {cell} ndvi {v} out of range"));
            }
            t.days.push(day);
            t.values.push(v);
        }
        t.spans.push((start, t.days.len()));
        t.centers.push(geo::cell_center(cell, spec).map_err(|e| e.to_string())?);
        match t.row_index.last_mut() {
            Some(last) if last.0 == cell.row => last.2 += 1,
            _ => t.row_index.push((cell.row, t.cells.len(), t.cells.len() + 1)),
        }
        t.cells.push(cell);
    }
    if cur.at != bytes.len() {
        return Err("trailing bytes".into());
    }
    Ok(t)
}
