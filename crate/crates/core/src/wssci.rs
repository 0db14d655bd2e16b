//! WSSCI identification and distinct-searcher counting per half grid.
//!
//! A WSSCI (web searcher suspicious of their own infection) is a user who
//! submitted at least one pattern-matching query. Joining WSSCI days with
//! location fixes yields the core statistic WSSCIphg: the number of
//! distinct WSSCI observed in one half grid, on one local date, within one
//! time span. Counters are mergeable so partitioned runs combine into the
//! same result as a single pass.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use chrono::{Days, NaiveDate};
use thiserror::Error;

use crate::grid::{encode_half_grid_within, CoverageWindow, HalfGridCode};
use crate::hll::{HyperLogLog, DEFAULT_PRECISION};
use crate::ingest::{LocationFix, SearchLogRecord};
use crate::pattern::{normalize_query, PatternSet};
use crate::timespan::{classify_timespan, StudyWindow, TimeSpan, UtcOffset};

#[derive(Debug, Error)]
pub enum CounterError {
    #[error("cannot merge counters of different modes ({a} vs {b})")]
    ModeMismatch { a: String, b: String },
    #[error("checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sketch(#[from] crate::hll::HllError),
}

/// How distinct users are accumulated per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMode {
    /// Exact token sets; counts are precise and mergeable.
    Exact,
    /// HyperLogLog sketch with the given precision; approximate counts
    /// (relative error about 1.04 / sqrt(2^precision)) with exact merge.
    Sketch { precision: u8 },
}

impl CountMode {
    pub fn sketch_default() -> Self {
        CountMode::Sketch { precision: DEFAULT_PRECISION }
    }

    fn label(self) -> String {
        self.to_string()
    }
}

impl std::fmt::Display for CountMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CountMode::Exact => f.write_str("exact"),
            CountMode::Sketch { precision } => write!(f, "sketch:{precision}"),
        }
    }
}

impl std::str::FromStr for CountMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(CountMode::Exact),
            "sketch" => Ok(CountMode::sketch_default()),
            other => {
                let precision = other
                    .strip_prefix("sketch:")
                    .and_then(|p| p.parse::<u8>().ok())
                    .ok_or_else(|| {
                        format!("unknown count mode {other:?} (expected exact or sketch[:P])")
                    })?;
                if !(crate::hll::MIN_PRECISION..=crate::hll::MAX_PRECISION).contains(&precision) {
                    return Err(format!(
                        "sketch precision {precision} outside {}..={}",
                        crate::hll::MIN_PRECISION,
                        crate::hll::MAX_PRECISION
                    ));
                }
                Ok(CountMode::Sketch { precision })
            }
        }
    }
}

/// The set of (user, local date) pairs classified as WSSCI.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WssciDaySet {
    by_user: BTreeMap<String, BTreeSet<NaiveDate>>,
}

impl WssciDaySet {
    pub fn insert(&mut self, user: &str, day: NaiveDate) {
        self.by_user.entry(user.to_string()).or_default().insert(day);
    }

    pub fn contains(&self, user: &str, day: NaiveDate) -> bool {
        self.by_user.get(user).is_some_and(|days| days.contains(&day))
    }

    /// Total number of (user, day) pairs.
    pub fn len(&self) -> usize {
        self.by_user.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_user.is_empty()
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.by_user.keys().map(String::as_str)
    }
}

/// Classifies search records against a pattern set. Each matching query at
/// local date `d` marks the user as WSSCI for dates `d ..= d + window_days`,
/// clipped to the study window when one is configured.
pub fn identify_wssci(
    records: &[SearchLogRecord],
    set: &PatternSet,
    window_days: u32,
    tz: UtcOffset,
    study: Option<&StudyWindow>,
) -> WssciDaySet {
    let mut out = WssciDaySet::default();
    for rec in records {
        let query = normalize_query(&rec.query);
        if !set.match_query(&query).matched() {
            continue;
        }
        let Some(base) = tz.local_date(rec.timestamp) else {
            continue;
        };
        for offset in 0..=window_days {
            let Some(day) = base.checked_add_days(Days::new(offset as u64)) else {
                break;
            };
            if study.is_none_or(|w| w.contains(day)) {
                out.insert(&rec.user, day);
            }
        }
    }
    out
}

/// Key of one counting cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub grid: HalfGridCode,
    pub date: NaiveDate,
    pub span: TimeSpan,
}

#[derive(Debug, Clone, PartialEq)]
enum Accumulator {
    Exact(BTreeSet<String>),
    Sketch(HyperLogLog),
}

impl Accumulator {
    fn insert(&mut self, user: &str) {
        match self {
            Accumulator::Exact(set) => {
                if !set.contains(user) {
                    set.insert(user.to_string());
                }
            }
            Accumulator::Sketch(hll) => hll.insert(user.as_bytes()),
        }
    }

    fn count(&self) -> u64 {
        match self {
            Accumulator::Exact(set) => set.len() as u64,
            Accumulator::Sketch(hll) => hll.estimate(),
        }
    }

    fn union(&mut self, other: &Accumulator) -> Result<(), CounterError> {
        match (self, other) {
            (Accumulator::Exact(a), Accumulator::Exact(b)) => {
                a.extend(b.iter().cloned());
                Ok(())
            }
            (Accumulator::Sketch(a), Accumulator::Sketch(b)) => Ok(a.merge(b)?),
            _ => unreachable!("mode checked before cell union"),
        }
    }
}

/// Distinct-WSSCI counter per (half grid, local date, time span).
#[derive(Debug, Clone, PartialEq)]
pub struct WsscipCounter {
    mode: CountMode,
    cells: BTreeMap<CellKey, Accumulator>,
}

impl WsscipCounter {
    pub fn new(mode: CountMode) -> Self {
        WsscipCounter { mode, cells: BTreeMap::new() }
    }

    pub fn mode(&self) -> CountMode {
        self.mode
    }

    /// Records one observation of a WSSCI user in a grid during a non-whole
    /// span; the whole-day cell is updated alongside.
    pub fn observe(&mut self, grid: HalfGridCode, date: NaiveDate, span: TimeSpan, user: &str) {
        debug_assert!(span != TimeSpan::Whole, "observe takes the measured span");
        let mode = self.mode;
        for s in [span, TimeSpan::Whole] {
            let key = CellKey { grid, date, span: s };
            let acc = self.cells.entry(key).or_insert_with(|| match mode {
                CountMode::Exact => Accumulator::Exact(BTreeSet::new()),
                CountMode::Sketch { precision } => {
                    Accumulator::Sketch(HyperLogLog::new(precision).expect("validated precision"))
                }
            });
            acc.insert(user);
        }
    }

    /// Count of one cell (0 when the cell has never been touched).
    pub fn count(&self, grid: HalfGridCode, date: NaiveDate, span: TimeSpan) -> u64 {
        self.cells.get(&CellKey { grid, date, span }).map_or(0, Accumulator::count)
    }

    /// Snapshot of every cell's count, keyed for reporting.
    pub fn counts(&self) -> BTreeMap<CellKey, u64> {
        self.cells.iter().map(|(k, v)| (*k, v.count())).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Cell-wise union with another counter of the same mode.
    pub fn merge_with(&mut self, other: &WsscipCounter) -> Result<(), CounterError> {
        if self.mode != other.mode {
            return Err(CounterError::ModeMismatch {
                a: self.mode.label(),
                b: other.mode.label(),
            });
        }
        for (key, acc) in &other.cells {
            match self.cells.get_mut(key) {
                Some(mine) => mine.union(acc)?,
                None => {
                    self.cells.insert(*key, acc.clone());
                }
            }
        }
        Ok(())
    }

    /// Per-grid, per-span totals over the 7 days starting at `week_start`:
    /// daily distinct counts summed across days, so a user active on two
    /// days contributes two.
    pub fn weekly_total(
        &self,
        week_start: NaiveDate,
    ) -> BTreeMap<(HalfGridCode, TimeSpan), u64> {
        let week_end = week_start
            .checked_add_days(Days::new(6))
            .expect("week end within calendar range");
        let mut totals = BTreeMap::new();
        for (key, acc) in &self.cells {
            if key.date >= week_start && key.date <= week_end {
                *totals.entry((key.grid, key.span)).or_insert(0) += acc.count();
            }
        }
        totals
    }
}

/// Merges two counters into a new one; the monoid operation behind
/// partitioned runs.
pub fn merge(a: &WsscipCounter, b: &WsscipCounter) -> Result<WsscipCounter, CounterError> {
    let mut out = a.clone();
    out.merge_with(b)?;
    Ok(out)
}

/// Joins WSSCI days with consent-filtered fixes. A user's fix in grid `g`
/// during span `s` on date `d` counts them in cells (g, d, s) and
/// (g, d, whole), at most once per cell.
pub fn count_wsscipphg(
    wssci: &WssciDaySet,
    fixes: &[LocationFix],
    tz: UtcOffset,
    coverage: &CoverageWindow,
    mode: CountMode,
) -> WsscipCounter {
    let mut counter = WsscipCounter::new(mode);
    for fix in fixes {
        debug_assert!(fix.consent, "ingest must have filtered consent already");
        let Some(date) = tz.local_date(fix.timestamp) else {
            continue;
        };
        if !wssci.contains(&fix.user, date) {
            continue;
        }
        let Ok(grid) = encode_half_grid_within(coverage, fix.lat, fix.lon) else {
            continue;
        };
        let span = classify_timespan(fix.timestamp, tz);
        counter.observe(grid, date, span, &fix.user);
    }
    counter
}

const CHECKPOINT_HEADER: &str = "# symgrid counter v1";
const SIDECAR_HEADER: &str = "# symgrid counter-users v1";

/// Writes the counts checkpoint: a versioned header, extra comment lines,
/// then `grid,date,span,count` rows in key order.
pub fn write_checkpoint<W: Write>(
    counter: &WsscipCounter,
    extra_comments: &[String],
    mut out: W,
) -> Result<(), CounterError> {
    writeln!(out, "{CHECKPOINT_HEADER} mode={}", counter.mode.label())?;
    for line in extra_comments {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "grid,date,span,count")?;
    for (key, acc) in &counter.cells {
        writeln!(out, "{},{},{},{}", key.grid, key.date, key.span, acc.count())?;
    }
    Ok(())
}

/// Writes the accumulator sidecar that makes a checkpoint resumable: exact
/// mode stores space-separated tokens per cell, sketch mode hex registers.
pub fn write_sidecar<W: Write>(
    counter: &WsscipCounter,
    extra_comments: &[String],
    mut out: W,
) -> Result<(), CounterError> {
    writeln!(out, "{SIDECAR_HEADER} mode={}", counter.mode.label())?;
    for line in extra_comments {
        writeln!(out, "# {line}")?;
    }
    for (key, acc) in &counter.cells {
        let payload = match acc {
            Accumulator::Exact(set) => set.iter().cloned().collect::<Vec<_>>().join(" "),
            Accumulator::Sketch(hll) => hll.to_hex(),
        };
        writeln!(out, "{},{},{},{payload}", key.grid, key.date, key.span)?;
    }
    Ok(())
}

fn parse_mode(label: &str) -> Option<CountMode> {
    label.parse().ok()
}

/// Reads a sidecar back into a full, mergeable counter.
pub fn read_sidecar<R: BufRead>(reader: R) -> Result<WsscipCounter, CounterError> {
    let err = |line: usize, msg: String| CounterError::Checkpoint { line, msg };
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| err(1, "empty sidecar".to_string()))?;
    let first = first?;
    let mode = first
        .strip_prefix(SIDECAR_HEADER)
        .and_then(|rest| rest.trim().strip_prefix("mode="))
        .and_then(parse_mode)
        .ok_or_else(|| err(1, format!("unrecognized sidecar header {first:?}")))?;

    let mut counter = WsscipCounter::new(mode);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(4, ',');
        let (grid, date, span, payload) =
            match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
                _ => return Err(err(line_no, "expected grid,date,span,payload".to_string())),
            };
        let grid = HalfGridCode::parse(grid).map_err(|e| err(line_no, e.to_string()))?;
        let date = NaiveDate::parse_from_str(date, "%Y-%m-%d")
            .map_err(|e| err(line_no, format!("bad date: {e}")))?;
        let span: TimeSpan = span.parse().map_err(|e| err(line_no, e))?;
        let key = CellKey { grid, date, span };
        let acc = match mode {
            CountMode::Exact => {
                let mut set = BTreeSet::new();
                for token in payload.split(' ').filter(|t| !t.is_empty()) {
                    set.insert(token.to_string());
                }
                Accumulator::Exact(set)
            }
            CountMode::Sketch { precision } => {
                Accumulator::Sketch(HyperLogLog::from_hex(precision, payload.trim())?)
            }
        };
        if counter.cells.insert(key, acc).is_some() {
            return Err(err(line_no, format!("duplicate cell {},{},{}", key.grid, key.date, key.span)));
        }
    }
    Ok(counter)
}

/// Reads only the counts from a checkpoint, for reporting without the
/// sidecar.
pub fn read_checkpoint_counts<R: BufRead>(
    reader: R,
) -> Result<BTreeMap<CellKey, u64>, CounterError> {
    let err = |line: usize, msg: String| CounterError::Checkpoint { line, msg };
    let mut out = BTreeMap::new();
    let mut saw_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.starts_with(CHECKPOINT_HEADER) {
            saw_header = true;
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') || line == "grid,date,span,count" {
            continue;
        }
        if !saw_header {
            return Err(err(line_no, "missing checkpoint header".to_string()));
        }
        let mut parts = line.splitn(4, ',');
        let (grid, date, span, count) =
            match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
                _ => return Err(err(line_no, "expected grid,date,span,count".to_string())),
            };
        let key = CellKey {
            grid: HalfGridCode::parse(grid).map_err(|e| err(line_no, e.to_string()))?,
            date: NaiveDate::parse_from_str(date, "%Y-%m-%d")
                .map_err(|e| err(line_no, format!("bad date: {e}")))?,
            span: span.parse().map_err(|e| err(line_no, e))?,
        };
        let count: u64 =
            count.trim().parse().map_err(|e| err(line_no, format!("bad count: {e}")))?;
        out.insert(key, count);
    }
    if !saw_header {
        return Err(err(1, "missing checkpoint header".to_string()));
    }
    Ok(out)
}
