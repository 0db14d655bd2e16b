//! Japanese standard grid-square (mesh) codes down to the 500 m half grid.
//!
//! A half-grid code is a 9-digit string: four digits of first mesh
//! (40-minute latitude band, 1-degree longitude band), two digits of second
//! mesh (8 x 8 subdivision, 10 km), two digits of third mesh (10 x 10
//! subdivision, 1 km) and one quadrant digit splitting the third mesh into
//! four 500 m cells (1=SW, 2=SE, 3=NW, 4=NE).
//!
//! All subdivision arithmetic runs in integer half-arc-seconds (1/7200
//! degree) so the 22.5-arc-second half-grid width is exact and cell
//! boundaries never depend on float rounding. Boxes are half-open on their
//! north and east edges, so every point belongs to exactly one cell.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Half arc-seconds per degree.
const UNITS_PER_DEG: i64 = 7200;

/// Cell extents in half-arc-second units, per mesh layer.
const FIRST_LAT: i64 = 4800; // 40 minutes
const FIRST_LON: i64 = 7200; // 1 degree
const SECOND_LAT: i64 = 600; // 5 minutes
const SECOND_LON: i64 = 900; // 7.5 minutes
const THIRD_LAT: i64 = 60; // 30 arc-seconds
const THIRD_LON: i64 = 90; // 45 arc-seconds
const HALF_LAT: i64 = 30; // 15 arc-seconds
const HALF_LON: i64 = 45; // 22.5 arc-seconds

/// Representable latitude band: first-mesh index must fit in two digits.
const MAX_LAT_UNITS: i64 = 100 * FIRST_LAT;
/// Representable longitude band: 100..200 degrees east.
const MIN_LON_UNITS: i64 = 100 * UNITS_PER_DEG;
const MAX_LON_UNITS: i64 = 200 * UNITS_PER_DEG;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("point ({lat}, {lon}) is outside the coverage window")]
    OutOfCoverage { lat: f64, lon: f64 },
    #[error("malformed grid code {code:?}: {reason}")]
    MalformedCode { code: String, reason: &'static str },
    #[error("invalid coverage window: {reason}")]
    BadWindow { reason: String },
}

/// Aggregation levels of the mesh hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridLevel {
    /// 9-digit code, 500 m cell.
    Half,
    /// 8-digit code, 1 km cell; covers 4 half grids.
    Third,
    /// 6-digit code, 10 km cell; covers 400 half grids.
    Second,
}

impl GridLevel {
    pub fn digits(self) -> usize {
        match self {
            GridLevel::Half => 9,
            GridLevel::Third => 8,
            GridLevel::Second => 6,
        }
    }

    /// Number of half grids nested in one cell of this level.
    pub fn half_grids_per_cell(self) -> usize {
        match self {
            GridLevel::Half => 1,
            GridLevel::Third => 4,
            GridLevel::Second => 400,
        }
    }
}

impl fmt::Display for GridLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridLevel::Half => "half",
            GridLevel::Third => "third",
            GridLevel::Second => "second",
        })
    }
}

impl FromStr for GridLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "half" => Ok(GridLevel::Half),
            "third" => Ok(GridLevel::Third),
            "second" => Ok(GridLevel::Second),
            other => Err(format!("unknown grid level {other:?} (expected half, third or second)")),
        }
    }
}

/// Geographic box in degrees, half-open on the north and east edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl BoundingBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.south && lat < self.north && lon >= self.west && lon < self.east
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.south + self.north) / 2.0, (self.west + self.east) / 2.0)
    }
}

/// Configurable window of accepted coordinates, defaulting to the Japan
/// first-mesh range. Half-open on north and east like cell boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageWindow {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl Default for CoverageWindow {
    fn default() -> Self {
        CoverageWindow { south: 20.0, west: 122.0, north: 46.0, east: 154.0 }
    }
}

impl CoverageWindow {
    pub fn new(south: f64, west: f64, north: f64, east: f64) -> Result<Self, GridError> {
        let w = CoverageWindow { south, west, north, east };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.south < self.north && self.west < self.east) {
            return Err(GridError::BadWindow {
                reason: format!(
                    "south < north and west < east required, got {},{},{},{}",
                    self.south, self.west, self.north, self.east
                ),
            });
        }
        let lat_ok = self.south >= 0.0 && self.north <= MAX_LAT_UNITS as f64 / UNITS_PER_DEG as f64;
        let lon_ok = self.west >= 100.0 && self.east <= 200.0;
        if !(lat_ok && lon_ok) {
            return Err(GridError::BadWindow {
                reason: format!(
                    "window must lie within the representable mesh range \
                     (lat 0..{:.4}, lon 100..200), got {},{},{},{}",
                    MAX_LAT_UNITS as f64 / UNITS_PER_DEG as f64,
                    self.south,
                    self.west,
                    self.north,
                    self.east
                ),
            });
        }
        Ok(())
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.south && lat < self.north && lon >= self.west && lon < self.east
    }
}

/// A 9-digit half-grid code, stored as ASCII digits.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfGridCode([u8; 9]);

impl HalfGridCode {
    pub fn as_str(&self) -> &str {
        // Construction guarantees ASCII digits.
        std::str::from_utf8(&self.0).expect("half-grid code is ASCII")
    }

    /// Parses and validates a 9-digit code.
    pub fn parse(code: &str) -> Result<Self, GridError> {
        let malformed = |reason| GridError::MalformedCode { code: code.to_string(), reason };
        let bytes = code.as_bytes();
        if bytes.len() != 9 {
            return Err(malformed("expected exactly 9 digits"));
        }
        let mut digits = [0u8; 9];
        for (i, &b) in bytes.iter().enumerate() {
            if !b.is_ascii_digit() {
                return Err(malformed("non-digit character"));
            }
            digits[i] = b;
        }
        let d = |i: usize| (digits[i] - b'0') as i64;
        if d(4) > 7 || d(5) > 7 {
            return Err(malformed("second-mesh digits must be 0-7"));
        }
        // Third-mesh digits are 0-9 by construction.
        if !(1..=4).contains(&d(8)) {
            return Err(malformed("quadrant digit must be 1-4"));
        }
        Ok(HalfGridCode(digits))
    }

    /// South-west corner in half-arc-second units: (lat, lon).
    fn corner_units(&self) -> (i64, i64) {
        let d = |i: usize| (self.0[i] - b'0') as i64;
        let quadrant = d(8) - 1;
        let lat = (d(0) * 10 + d(1)) * FIRST_LAT
            + d(4) * SECOND_LAT
            + d(6) * THIRD_LAT
            + (quadrant / 2) * HALF_LAT;
        let lon = (d(2) * 10 + d(3) + 100) * FIRST_LON
            + d(5) * SECOND_LON
            + d(7) * THIRD_LON
            + (quadrant % 2) * HALF_LON;
        (lat, lon)
    }

    /// The cell box in degrees.
    pub fn bounds(&self) -> BoundingBox {
        let (lat, lon) = self.corner_units();
        units_box(lat, lon, HALF_LAT, HALF_LON)
    }

    /// Global half-grid indices (lat, lon): counts of half-grid steps from
    /// the equator and from the 100-degree meridian origin.
    pub fn indices(&self) -> (i64, i64) {
        let (lat, lon) = self.corner_units();
        (lat / HALF_LAT, lon / HALF_LON)
    }

    /// Builds a code from global half-grid indices.
    pub fn from_indices(lat_idx: i64, lon_idx: i64) -> Result<Self, GridError> {
        let lat = lat_idx * HALF_LAT;
        let lon = lon_idx * HALF_LON;
        if !(0..MAX_LAT_UNITS).contains(&lat) || !(MIN_LON_UNITS..MAX_LON_UNITS).contains(&lon) {
            return Err(GridError::OutOfCoverage {
                lat: lat as f64 / UNITS_PER_DEG as f64,
                lon: lon as f64 / UNITS_PER_DEG as f64,
            });
        }
        Ok(Self::from_units(lat, lon))
    }

    /// Builds the code containing the given point in half-arc-second units.
    /// Caller guarantees the point is inside the representable range.
    fn from_units(lat: i64, lon: i64) -> Self {
        let p = lat / FIRST_LAT;
        let q = (lat % FIRST_LAT) / SECOND_LAT;
        let r = (lat % SECOND_LAT) / THIRD_LAT;
        let row = (lat % THIRD_LAT) / HALF_LAT;
        let u = lon / FIRST_LON - 100;
        let v = (lon % FIRST_LON) / SECOND_LON;
        let w = (lon % SECOND_LON) / THIRD_LON;
        let col = (lon % THIRD_LON) / HALF_LON;
        let quadrant = 1 + 2 * row + col;
        let digits = [
            b'0' + (p / 10) as u8,
            b'0' + (p % 10) as u8,
            b'0' + (u / 10) as u8,
            b'0' + (u % 10) as u8,
            b'0' + q as u8,
            b'0' + v as u8,
            b'0' + r as u8,
            b'0' + w as u8,
            b'0' + quadrant as u8,
        ];
        HalfGridCode(digits)
    }

    /// Prefix-truncates to a coarser level; `Half` returns the code itself.
    pub fn truncate(&self, level: GridLevel) -> String {
        self.as_str()[..level.digits()].to_string()
    }
}

impl fmt::Display for HalfGridCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for HalfGridCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HalfGridCode({})", self.as_str())
    }
}

impl FromStr for HalfGridCode {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for HalfGridCode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for HalfGridCode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        HalfGridCode::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn units_box(lat: i64, lon: i64, lat_extent: i64, lon_extent: i64) -> BoundingBox {
    let deg = |u: i64| u as f64 / UNITS_PER_DEG as f64;
    BoundingBox {
        south: deg(lat),
        west: deg(lon),
        north: deg(lat + lat_extent),
        east: deg(lon + lon_extent),
    }
}

/// Encodes a WGS84 point to its half-grid code using the default Japan
/// coverage window.
pub fn encode_half_grid(lat: f64, lon: f64) -> Result<HalfGridCode, GridError> {
    encode_half_grid_within(&CoverageWindow::default(), lat, lon)
}

/// Encodes a WGS84 point, accepting only points inside `window`.
pub fn encode_half_grid_within(
    window: &CoverageWindow,
    lat: f64,
    lon: f64,
) -> Result<HalfGridCode, GridError> {
    if !lat.is_finite() || !lon.is_finite() || !window.contains(lat, lon) {
        return Err(GridError::OutOfCoverage { lat, lon });
    }
    let lat_u = (lat * UNITS_PER_DEG as f64).floor() as i64;
    let lon_u = (lon * UNITS_PER_DEG as f64).floor() as i64;
    if !(0..MAX_LAT_UNITS).contains(&lat_u) || !(MIN_LON_UNITS..MAX_LON_UNITS).contains(&lon_u) {
        return Err(GridError::OutOfCoverage { lat, lon });
    }
    Ok(HalfGridCode::from_units(lat_u, lon_u))
}

/// Decodes a 9-digit half-grid code into its box.
pub fn decode_half_grid(code: &str) -> Result<BoundingBox, GridError> {
    Ok(HalfGridCode::parse(code)?.bounds())
}

/// Decodes a mesh code at any supported level (6, 8 or 9 digits) into the
/// box of the whole cell.
pub fn decode_code(code: &str) -> Result<BoundingBox, GridError> {
    let malformed = |reason| GridError::MalformedCode { code: code.to_string(), reason };
    match code.len() {
        9 => decode_half_grid(code),
        6 | 8 => {
            if !code.bytes().all(|b| b.is_ascii_digit()) {
                return Err(malformed("non-digit character"));
            }
            let d = |i: usize| (code.as_bytes()[i] - b'0') as i64;
            if d(4) > 7 || d(5) > 7 {
                return Err(malformed("second-mesh digits must be 0-7"));
            }
            let mut lat = (d(0) * 10 + d(1)) * FIRST_LAT + d(4) * SECOND_LAT;
            let mut lon = (d(2) * 10 + d(3) + 100) * FIRST_LON + d(5) * SECOND_LON;
            if code.len() == 6 {
                return Ok(units_box(lat, lon, SECOND_LAT, SECOND_LON));
            }
            lat += d(6) * THIRD_LAT;
            lon += d(7) * THIRD_LON;
            Ok(units_box(lat, lon, THIRD_LAT, THIRD_LON))
        }
        _ => Err(malformed("expected 6, 8 or 9 digits")),
    }
}

/// Truncates a half-grid code string to the given level.
pub fn truncate_to_level(code: &HalfGridCode, level: GridLevel) -> String {
    code.truncate(level)
}

/// Enumerates every half-grid code sharing a 6-, 8- or 9-digit prefix, in
/// ascending code order. A 6-digit prefix yields 400 codes, an 8-digit
/// prefix 4.
pub fn half_grids_with_prefix(prefix: &str) -> Result<Vec<HalfGridCode>, GridError> {
    let malformed = |reason| GridError::MalformedCode { code: prefix.to_string(), reason };
    match prefix.len() {
        9 => Ok(vec![HalfGridCode::parse(prefix)?]),
        8 => {
            let mut out = Vec::with_capacity(4);
            for quadrant in 1..=4 {
                out.push(HalfGridCode::parse(&format!("{prefix}{quadrant}"))?);
            }
            Ok(out)
        }
        6 => {
            let mut out = Vec::with_capacity(400);
            for r in 0..10 {
                for w in 0..10 {
                    for quadrant in 1..=4 {
                        out.push(HalfGridCode::parse(&format!("{prefix}{r}{w}{quadrant}"))?);
                    }
                }
            }
            out.sort();
            Ok(out)
        }
        _ => Err(malformed("expected a 6, 8 or 9 digit prefix")),
    }
}
