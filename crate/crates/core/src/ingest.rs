//! Log ingestion: CSV parsing, consent gating and pseudonymization.
//!
//! Raw user identifiers never leave this module; both parsers replace them
//! with salted one-way tokens before emitting records. Consent filtering
//! for location fixes happens here and nowhere else. Malformed lines are
//! dropped and counted per reason, never fatal; only an unreadable stream
//! aborts a run.

use std::collections::BTreeMap;
use std::io::Read;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::CoverageWindow;
use crate::pattern::normalize_query;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("pseudonymization salt must not be empty")]
    EmptySalt,
    #[error("unexpected CSV header: expected {expected:?}, got {got:?}")]
    BadHeader { expected: &'static str, got: String },
    #[error("failed to read input stream: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to read input stream: {0}")]
    Csv(#[from] csv::Error),
}

/// Why a record was dropped during ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Malformed,
    OutOfWindow,
    EmptyQuery,
    NoConsent,
    BadCoordinate,
    OutOfCoverage,
}

/// Per-stream ingestion counters. `records_read` always equals
/// `records_kept` plus the sum of all drop counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestStats {
    pub records_read: u64,
    pub records_kept: u64,
    pub drops_by_reason: BTreeMap<DropReason, u64>,
}

impl IngestStats {
    fn keep(&mut self) {
        self.records_read += 1;
        self.records_kept += 1;
    }

    fn drop(&mut self, reason: DropReason) {
        self.records_read += 1;
        *self.drops_by_reason.entry(reason).or_insert(0) += 1;
    }

    pub fn dropped(&self, reason: DropReason) -> u64 {
        self.drops_by_reason.get(&reason).copied().unwrap_or(0)
    }

    pub fn total_drops(&self) -> u64 {
        self.drops_by_reason.values().sum()
    }

    /// Field-wise addition, for merging per-file stats.
    pub fn merge(&mut self, other: &IngestStats) {
        self.records_read += other.records_read;
        self.records_kept += other.records_kept;
        for (&reason, &n) in &other.drops_by_reason {
            *self.drops_by_reason.entry(reason).or_insert(0) += n;
        }
    }
}

/// Salted one-way tokenizer for user identifiers. The salt is held only in
/// memory and never persisted.
#[derive(Clone)]
pub struct Pseudonymizer {
    salt: String,
}

impl Pseudonymizer {
    pub fn new(salt: &str) -> Result<Self, IngestError> {
        if salt.is_empty() {
            return Err(IngestError::EmptySalt);
        }
        Ok(Pseudonymizer { salt: salt.to_string() })
    }

    /// Deterministic keyed digest of a raw identifier, as 32 hex chars.
    pub fn token(&self, raw_id: &str) -> String {
        debug_assert!(!raw_id.is_empty());
        let mut hasher = Sha256::new();
        // Length-prefix the salt so (salt, id) boundaries are unambiguous.
        hasher.update((self.salt.len() as u64).to_be_bytes());
        hasher.update(self.salt.as_bytes());
        hasher.update(raw_id.as_bytes());
        let digest = hasher.finalize();
        hex::encode(&digest[..16])
    }
}

impl std::fmt::Debug for Pseudonymizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Pseudonymizer(..)") // never expose the salt
    }
}

/// A search-log record after pseudonymization. `query` is the raw query
/// text; normalization happens again at classification time.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchLogRecord {
    pub user: String,
    pub timestamp: i64,
    pub query: String,
}

/// A consented GPS fix after pseudonymization. Parsers only ever emit fixes
/// with `consent == true`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationFix {
    pub user: String,
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
    pub consent: bool,
}

/// Ingest-time filters resolved from run configuration.
#[derive(Debug, Clone, Default)]
pub struct IngestFilter {
    /// Half-open UTC epoch range; `None` disables window filtering.
    pub window_epoch: Option<std::ops::Range<i64>>,
    pub coverage: CoverageWindow,
}

impl IngestFilter {
    fn in_window(&self, epoch: i64) -> bool {
        self.window_epoch.as_ref().is_none_or(|w| w.contains(&epoch))
    }
}

const SEARCH_HEADER: &str = "user_id,timestamp,query";
const LOCATION_HEADER: &str = "user_id,timestamp,lat,lon,consent";

fn check_header(
    rdr: &mut csv::Reader<impl Read>,
    expected: &'static str,
) -> Result<(), IngestError> {
    let got = rdr.headers()?.iter().map(str::trim).collect::<Vec<_>>().join(",");
    if got != expected {
        return Err(IngestError::BadHeader { expected, got });
    }
    Ok(())
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader)
}

/// Accepts epoch seconds, RFC 3339, or `YYYY-MM-DDTHH:MM:SS` /
/// `YYYY-MM-DD HH:MM:SS` interpreted as UTC.
fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(epoch) = s.parse::<i64>() {
        return Some(epoch);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

/// Distinguishes per-record CSV problems (droppable) from stream failures.
fn record_or_fatal(
    result: Result<csv::StringRecord, csv::Error>,
) -> Result<Option<csv::StringRecord>, IngestError> {
    match result {
        Ok(rec) => Ok(Some(rec)),
        Err(e) => match e.kind() {
            csv::ErrorKind::Io(_) => Err(IngestError::Csv(e)),
            _ => Ok(None), // bad line, count as malformed
        },
    }
}

/// Parses a search-query log. Output preserves input order.
pub fn parse_search_log<R: Read>(
    reader: R,
    pseudo: &Pseudonymizer,
    filter: &IngestFilter,
) -> Result<(Vec<SearchLogRecord>, IngestStats), IngestError> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, SEARCH_HEADER)?;

    let mut records = Vec::new();
    let mut stats = IngestStats::default();
    for result in rdr.records() {
        let Some(rec) = record_or_fatal(result)? else {
            stats.drop(DropReason::Malformed);
            continue;
        };
        let (Some(raw_id), Some(ts_field), Some(query)) = (rec.get(0), rec.get(1), rec.get(2))
        else {
            stats.drop(DropReason::Malformed);
            continue;
        };
        let raw_id = raw_id.trim();
        if raw_id.is_empty() {
            stats.drop(DropReason::Malformed);
            continue;
        }
        let Some(timestamp) = parse_timestamp(ts_field) else {
            stats.drop(DropReason::Malformed);
            continue;
        };
        if normalize_query(query).is_empty() {
            stats.drop(DropReason::EmptyQuery);
            continue;
        }
        if !filter.in_window(timestamp) {
            stats.drop(DropReason::OutOfWindow);
            continue;
        }
        stats.keep();
        records.push(SearchLogRecord {
            user: pseudo.token(raw_id),
            timestamp,
            query: query.to_string(),
        });
    }
    Ok((records, stats))
}

/// Parses a location log. Fixes without consent are dropped here; nothing
/// downstream ever sees them.
pub fn parse_location_log<R: Read>(
    reader: R,
    pseudo: &Pseudonymizer,
    filter: &IngestFilter,
) -> Result<(Vec<LocationFix>, IngestStats), IngestError> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, LOCATION_HEADER)?;

    let mut fixes = Vec::new();
    let mut stats = IngestStats::default();
    for result in rdr.records() {
        let Some(rec) = record_or_fatal(result)? else {
            stats.drop(DropReason::Malformed);
            continue;
        };
        let fields: Option<(&str, &str, &str, &str, &str)> = match
            (rec.get(0), rec.get(1), rec.get(2), rec.get(3), rec.get(4))
        {
            (Some(a), Some(b), Some(c), Some(d), Some(e)) => Some((a, b, c, d, e)),
            _ => None,
        };
        let Some((raw_id, ts_field, lat_field, lon_field, consent_field)) = fields else {
            stats.drop(DropReason::Malformed);
            continue;
        };
        let raw_id = raw_id.trim();
        let timestamp = parse_timestamp(ts_field);
        let lat = lat_field.trim().parse::<f64>().ok();
        let lon = lon_field.trim().parse::<f64>().ok();
        let consent = parse_consent(consent_field);
        let (Some(timestamp), Some(lat), Some(lon), Some(consent)) =
            (timestamp, lat, lon, consent)
        else {
            stats.drop(DropReason::Malformed);
            continue;
        };
        if raw_id.is_empty() {
            stats.drop(DropReason::Malformed);
            continue;
        }
        if !consent {
            stats.drop(DropReason::NoConsent);
            continue;
        }
        if !lat.is_finite() || !lon.is_finite() || lat.abs() > 90.0 || lon.abs() > 180.0 {
            stats.drop(DropReason::BadCoordinate);
            continue;
        }
        if !filter.coverage.contains(lat, lon) {
            stats.drop(DropReason::OutOfCoverage);
            continue;
        }
        if !filter.in_window(timestamp) {
            stats.drop(DropReason::OutOfWindow);
            continue;
        }
        stats.keep();
        fixes.push(LocationFix { user: pseudo.token(raw_id), timestamp, lat, lon, consent });
    }
    Ok((fixes, stats))
}

fn parse_consent(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo() -> Pseudonymizer {
        Pseudonymizer::new("test-salt").unwrap()
    }

    fn assert_conserved(stats: &IngestStats) {
        assert_eq!(stats.records_read, stats.records_kept + stats.total_drops());
    }

    #[test]
    fn tokens_are_deterministic_and_distinct() {
        let p = Pseudonymizer::new("s").unwrap();
        assert_eq!(p.token("u1"), p.token("u1"));
        assert_ne!(p.token("u1"), p.token("u2"));
        assert_ne!(p.token("u1"), Pseudonymizer::new("s2").unwrap().token("u1"));
        assert_eq!(p.token("u1").len(), 32);
        assert!(p.token("u1").bytes().all(|b| b.is_ascii_hexdigit()));
    }

    #[test]
    fn empty_salt_refused() {
        assert!(matches!(Pseudonymizer::new(""), Err(IngestError::EmptySalt)));
    }

    #[test]
    fn search_log_happy_path() {
        let csv = "user_id,timestamp,query\n\
                   u1,1581638400,cough corona\n\
                   u2,1581638401,weather\n\
                   u3,1581638402,train times\n";
        let (recs, stats) = parse_search_log(csv.as_bytes(), &pseudo(), &Default::default()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(stats.records_kept, 3);
        assert_eq!(stats.total_drops(), 0);
        assert_conserved(&stats);
        // Input order preserved, raw ids replaced.
        assert_eq!(recs[0].query, "cough corona");
        assert_ne!(recs[0].user, "u1");
    }

    #[test]
    fn search_log_counts_malformed_and_window_drops() {
        let csv = "user_id,timestamp,query\n\
                   u1,1581638400,cough\n\
                   u2,not-a-time,cough\n\
                   u3,99,cough\n\
                   ,1581638400,cough\n\
                   u4,1581638400,   \n";
        let filter = IngestFilter {
            window_epoch: Some(1_581_600_000..1_581_700_000),
            coverage: CoverageWindow::default(),
        };
        let (recs, stats) = parse_search_log(csv.as_bytes(), &pseudo(), &filter).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(stats.records_read, 5);
        assert_eq!(stats.dropped(DropReason::Malformed), 2);
        assert_eq!(stats.dropped(DropReason::OutOfWindow), 1);
        assert_eq!(stats.dropped(DropReason::EmptyQuery), 1);
        assert_conserved(&stats);
    }

    #[test]
    fn search_log_accepts_iso_timestamps() {
        let csv = "user_id,timestamp,query\n\
                   u1,2020-02-14T00:00:00Z,cough\n\
                   u2,2020-02-14T00:00:00,cough\n";
        let (recs, _) = parse_search_log(csv.as_bytes(), &pseudo(), &Default::default()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].timestamp, recs[1].timestamp);
    }

    #[test]
    fn location_log_consent_gate() {
        let csv = "user_id,timestamp,lat,lon,consent\n\
                   u1,1581638400,43.05,141.35,true\n\
                   u2,1581638400,43.05,141.35,false\n\
                   u3,1581638400,43.05,141.35,0\n\
                   u4,1581638400,43.05,141.35,1\n";
        let (fixes, stats) =
            parse_location_log(csv.as_bytes(), &pseudo(), &Default::default()).unwrap();
        assert_eq!(fixes.len(), 2);
        assert!(fixes.iter().all(|f| f.consent));
        assert_eq!(stats.dropped(DropReason::NoConsent), 2);
        assert_conserved(&stats);
    }

    #[test]
    fn location_log_coordinate_checks() {
        let csv = "user_id,timestamp,lat,lon,consent\n\
                   u1,1581638400,91,141.35,true\n\
                   u2,1581638400,10.0,10.0,true\n\
                   u3,1581638400,43.05,141.35,true\n\
                   u4,1581638400,nope,141.35,true\n";
        let (fixes, stats) =
            parse_location_log(csv.as_bytes(), &pseudo(), &Default::default()).unwrap();
        assert_eq!(fixes.len(), 1);
        assert_eq!(stats.dropped(DropReason::BadCoordinate), 1);
        assert_eq!(stats.dropped(DropReason::OutOfCoverage), 1);
        assert_eq!(stats.dropped(DropReason::Malformed), 1);
        assert_conserved(&stats);
    }

    #[test]
    fn header_mismatch_is_fatal() {
        let csv = "who,when,what\nu1,1,2\n";
        assert!(matches!(
            parse_search_log(csv.as_bytes(), &pseudo(), &Default::default()),
            Err(IngestError::BadHeader { .. })
        ));
    }

    #[test]
    fn short_rows_count_as_malformed() {
        let csv = "user_id,timestamp,query\nu1,1581638400,cough\nu2,1581638400\n";
        let (recs, stats) = parse_search_log(csv.as_bytes(), &pseudo(), &Default::default()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(stats.dropped(DropReason::Malformed), 1);
        assert_conserved(&stats);
    }

    #[test]
    fn stats_merge_is_fieldwise() {
        let mut a = IngestStats::default();
        a.keep();
        a.drop(DropReason::Malformed);
        let mut b = IngestStats::default();
        b.drop(DropReason::Malformed);
        b.drop(DropReason::NoConsent);
        a.merge(&b);
        assert_eq!(a.records_read, 4);
        assert_eq!(a.records_kept, 1);
        assert_eq!(a.dropped(DropReason::Malformed), 2);
        assert_eq!(a.dropped(DropReason::NoConsent), 1);
        assert_conserved(&a);
    }
}
