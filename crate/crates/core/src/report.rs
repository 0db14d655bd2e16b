//! Block aggregation, small-count suppression, hotspot ranking, baseline
//! ratios and choropleth export.
//!
//! Reporting works on a materialized counts snapshot (cell -> count), so it
//! serves both freshly computed counters and counts loaded back from a
//! checkpoint.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::grid::{decode_code, GridLevel};
use crate::meta::OutputMeta;
use crate::timespan::TimeSpan;
use crate::wssci::CellKey;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("baseline file line {line}: {msg}")]
    Baseline { line: usize, msg: String },
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error("JSON encoding failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Sum of WSSCIphg over one mesh block, date range and span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockAggregate {
    pub block_code: String,
    pub date_range: (NaiveDate, NaiveDate),
    pub span: TimeSpan,
    pub total: u64,
}

/// Parameters echoed into ranked reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReportParams {
    pub level: GridLevel,
    pub span: TimeSpan,
    pub date_range: (NaiveDate, NaiveDate),
    pub suppression_threshold: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HotspotEntry {
    pub rank: u64,
    pub block_code: String,
    pub total: u64,
}

/// Ranked, suppression-filtered block totals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HotspotReport {
    pub params: ReportParams,
    pub entries: Vec<HotspotEntry>,
}

/// Groups cells of one span by block prefix and sums counts over the
/// inclusive date range. Output is sorted by block code.
pub fn aggregate_blocks(
    counts: &BTreeMap<CellKey, u64>,
    level: GridLevel,
    date_range: (NaiveDate, NaiveDate),
    span: TimeSpan,
) -> Vec<BlockAggregate> {
    let (from, to) = date_range;
    let mut totals: BTreeMap<String, u64> = BTreeMap::new();
    for (key, &count) in counts {
        if key.span != span || key.date < from || key.date > to {
            continue;
        }
        *totals.entry(key.grid.truncate(level)).or_insert(0) += count;
    }
    totals
        .into_iter()
        .map(|(block_code, total)| BlockAggregate { block_code, date_range, span, total })
        .collect()
}

/// Removes aggregates below the suppression threshold; threshold 0 is the
/// identity.
pub fn suppress_small_counts(aggs: Vec<BlockAggregate>, threshold: u64) -> Vec<BlockAggregate> {
    aggs.into_iter().filter(|a| a.total >= threshold).collect()
}

/// Top-k blocks by total, ties broken by ascending block code.
pub fn rank_hotspots(aggs: &[BlockAggregate], k: usize, params: ReportParams) -> HotspotReport {
    let mut sorted: Vec<&BlockAggregate> = aggs.iter().collect();
    sorted.sort_by(|a, b| b.total.cmp(&a.total).then_with(|| a.block_code.cmp(&b.block_code)));
    let entries = sorted
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, a)| HotspotEntry {
            rank: i as u64 + 1,
            block_code: a.block_code.clone(),
            total: a.total,
        })
        .collect();
    HotspotReport { params, entries }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRatio {
    pub block_code: String,
    pub wssci_total: u64,
    pub baseline: f64,
    pub ratio: f64,
}

/// Outcome of a baseline comparison: per-block ratios, blocks without
/// baseline coverage, and rows whose baseline value was unusable.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BaselineReport {
    pub ratios: Vec<BaselineRatio>,
    pub uncovered: Vec<String>,
    pub errors: Vec<(String, f64)>,
}

/// Reads a `block_code,value` CSV baseline file.
pub fn load_baseline<R: std::io::Read>(reader: R) -> Result<BTreeMap<String, f64>, ReportError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers().map_err(|e| ReportError::Baseline { line: 1, msg: e.to_string() })?;
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["block_code", "value"] {
        return Err(ReportError::Baseline {
            line: 1,
            msg: format!("expected header block_code,value, got {headers:?}"),
        });
    }
    let mut out = BTreeMap::new();
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| ReportError::Baseline { line, msg: e.to_string() })?;
        let (Some(code), Some(value)) = (rec.get(0), rec.get(1)) else {
            return Err(ReportError::Baseline { line, msg: "expected 2 fields".to_string() });
        };
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| ReportError::Baseline { line, msg: format!("bad value: {e}") })?;
        out.insert(code.trim().to_string(), value);
    }
    Ok(out)
}

/// Divides block totals by baseline values (e.g. population). Blocks with
/// no baseline entry are listed as uncovered; non-positive baselines become
/// error rows instead of ratios.
pub fn baseline_ratio(
    aggs: &[BlockAggregate],
    baseline: &BTreeMap<String, f64>,
) -> BaselineReport {
    let mut report = BaselineReport::default();
    for agg in aggs {
        match baseline.get(&agg.block_code) {
            None => report.uncovered.push(agg.block_code.clone()),
            Some(&value) if value <= 0.0 || !value.is_finite() => {
                report.errors.push((agg.block_code.clone(), value));
            }
            Some(&value) => report.ratios.push(BaselineRatio {
                block_code: agg.block_code.clone(),
                wssci_total: agg.total,
                baseline: value,
                ratio: agg.total as f64 / value,
            }),
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChoroplethFormat {
    Csv,
    Geojson,
}

impl std::str::FromStr for ChoroplethFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ChoroplethFormat::Csv),
            "geojson" => Ok(ChoroplethFormat::Geojson),
            other => Err(format!("unknown format {other:?} (expected csv or geojson)")),
        }
    }
}

/// Writes block aggregates with their cell geometry, sorted by block code,
/// in CSV or GeoJSON form. Output is byte-deterministic for identical
/// inputs and parameters.
pub fn emit_choropleth<W: Write>(
    aggs: &[BlockAggregate],
    format: ChoroplethFormat,
    meta: &OutputMeta,
    out: W,
) -> Result<(), ReportError> {
    let mut sorted: Vec<&BlockAggregate> = aggs.iter().collect();
    sorted.sort_by(|a, b| a.block_code.cmp(&b.block_code));
    match format {
        ChoroplethFormat::Csv => emit_csv(&sorted, meta, out),
        ChoroplethFormat::Geojson => emit_geojson(&sorted, meta, out),
    }
}

fn emit_csv<W: Write>(
    aggs: &[&BlockAggregate],
    meta: &OutputMeta,
    mut out: W,
) -> Result<(), ReportError> {
    for line in meta.comment_lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "block_code,south,west,north,east,total")?;
    for agg in aggs {
        let b = decode_code(&agg.block_code)?;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            agg.block_code, b.south, b.west, b.north, b.east, agg.total
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct GeoDoc<'a> {
    meta: &'a OutputMeta,
    #[serde(rename = "type")]
    kind: &'static str,
    features: Vec<Feature>,
}

#[derive(Serialize)]
struct Feature {
    #[serde(rename = "type")]
    kind: &'static str,
    properties: FeatureProps,
    geometry: Geometry,
}

#[derive(Serialize)]
struct FeatureProps {
    block_code: String,
    total: u64,
}

#[derive(Serialize)]
struct Geometry {
    #[serde(rename = "type")]
    kind: &'static str,
    coordinates: Vec<Vec<[f64; 2]>>,
}

fn emit_geojson<W: Write>(
    aggs: &[&BlockAggregate],
    meta: &OutputMeta,
    mut out: W,
) -> Result<(), ReportError> {
    let mut features = Vec::with_capacity(aggs.len());
    for agg in aggs {
        let b = decode_code(&agg.block_code)?;
        // Closed ring, counter-clockwise from the south-west corner.
        let ring = vec![
            [b.west, b.south],
            [b.east, b.south],
            [b.east, b.north],
            [b.west, b.north],
            [b.west, b.south],
        ];
        features.push(Feature {
            kind: "Feature",
            properties: FeatureProps { block_code: agg.block_code.clone(), total: agg.total },
            geometry: Geometry { kind: "Polygon", coordinates: vec![ring] },
        });
    }
    let doc = GeoDoc { meta, kind: "FeatureCollection", features };
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)?;
    Ok(())
}

/// Writes a ranked hotspot report as CSV.
pub fn write_hotspots<W: Write>(
    report: &HotspotReport,
    meta: &OutputMeta,
    mut out: W,
) -> Result<(), ReportError> {
    for line in meta.comment_lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(
        out,
        "# level={} span={} from={} to={} threshold={}",
        report.params.level,
        report.params.span,
        report.params.date_range.0,
        report.params.date_range.1,
        report.params.suppression_threshold
    )?;
    writeln!(out, "rank,block_code,total")?;
    for e in &report.entries {
        writeln!(out, "{},{},{}", e.rank, e.block_code, e.total)?;
    }
    Ok(())
}

/// Writes a baseline-ratio report as CSV; uncovered blocks and error rows
/// appear in trailing sections so nothing is silently dropped.
pub fn write_baseline_report<W: Write>(
    report: &BaselineReport,
    meta: &OutputMeta,
    mut out: W,
) -> Result<(), ReportError> {
    for line in meta.comment_lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "block_code,wssci_total,baseline,ratio")?;
    for r in &report.ratios {
        writeln!(out, "{},{},{},{}", r.block_code, r.wssci_total, r.baseline, r.ratio)?;
    }
    for code in &report.uncovered {
        writeln!(out, "{code},,,uncovered")?;
    }
    for (code, value) in &report.errors {
        writeln!(out, "{code},,{value},error:non-positive-baseline")?;
    }
    Ok(())
}
