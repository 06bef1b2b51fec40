//! Gridded NDVI time-series store and land-use analysis.
//!
//! Reflectance observations are cloud-filtered, turned into NDVI and
//! averaged into 500 m cells ([`ingest`], [`store`]). A polygon query
//! averages the cells it covers into a signature curve ([`curve`]), which is
//! summarised into phenology features and classified by threshold rules
//! ([`classify`]). [`fire`] adds nearby fire events and [`llm`] prepares the
//! payload for a narrative analysis. [`analysis`] wires these together.

pub mod analysis;
pub mod classify;
pub mod csvrows;
pub mod curve;
pub mod dates;
pub mod fire;
pub mod geo;
pub mod ingest;
pub mod llm;
pub mod store;
pub mod synth;

pub use analysis::{AnalysisError, AnalysisOptions, AnalysisReport, AnalysisRequest};
pub use classify::{ClassifierParams, CurveFeatures, LandUseClass, VegetationPresence};
pub use curve::{PolyFit, SignatureCurve};
pub use geo::{BBox, CellId, GeoPoint, GeoPolygon, RegionLayout, RegionSpec};
pub use store::{CellSeries, DatasetManifest, Store};
