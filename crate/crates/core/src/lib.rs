//! Core library for the `symgrid` surveillance pipeline: classify search
//! queries against symptom patterns, geocode location fixes into 500 m
//! half-grid squares, and aggregate distinct-searcher counts per grid, day
//! and time span, with privacy suppression and choropleth export.

pub mod grid;
pub mod hll;
pub mod ingest;
pub mod meta;
pub mod pattern;
pub mod report;
pub mod synth;
pub mod timespan;
pub mod wssci;

pub use grid::{BoundingBox, CoverageWindow, GridError, GridLevel, HalfGridCode};
pub use ingest::{IngestStats, LocationFix, Pseudonymizer, SearchLogRecord};
pub use pattern::{MatchResult, PatternSet, QueryPattern};
pub use timespan::{StudyWindow, TimeSpan, UtcOffset};
pub use wssci::{CountMode, WssciDaySet, WsscipCounter};
