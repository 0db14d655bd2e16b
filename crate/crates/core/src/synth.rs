//! Deterministic synthetic log generation with an optional planted cluster.
//!
//! Scenarios exist to verify the pipeline against known ground truth, not
//! to model epidemiology: users get a home half grid and wander a few cells
//! around it, emitting innocuous queries every day and symptom queries at a
//! configured rate. Cluster-affected users live in the target grids and
//! search at a boosted rate while the cluster is active. Everything flows
//! from the seed; identical configs produce byte-identical logs.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{encode_half_grid_within, CoverageWindow, GridError, GridLevel, HalfGridCode};
use crate::pattern::{expand_default_patterns, PatternKind, PatternSet};
use crate::report::HotspotReport;
use crate::timespan::{StudyWindow, UtcOffset};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("report level {level} does not match the ground truth's block codes")]
    LevelMismatch { level: GridLevel },
}

/// Non-matching queries emitted by every user. Kept clear of all pattern
/// vocabulary so the null scenario stays null.
const NOISE_QUERIES: [&str; 8] = [
    "weather tomorrow",
    "train schedule",
    "lunch menu",
    "news digest",
    "baseball scores",
    "movie times",
    "shoe sale",
    "curry recipe",
];

/// Token renderings of the wildcard main term, exercising prefix matching.
const WILDCARD_RENDERINGS: [&str; 2] = ["corona", "coronavirus"];

fn default_noise_queries() -> u32 {
    2
}

fn default_consent_rate() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovementConfig {
    /// GPS fixes per user per day.
    #[serde(default = "MovementConfig::default_fixes")]
    pub fixes_per_day: u32,
    /// Wander radius around the home grid, in half-grid steps per axis.
    #[serde(default = "MovementConfig::default_radius")]
    pub radius_grids: i64,
}

impl MovementConfig {
    fn default_fixes() -> u32 {
        3
    }

    fn default_radius() -> i64 {
        2
    }
}

impl Default for MovementConfig {
    fn default() -> Self {
        MovementConfig { fixes_per_day: 3, radius_grids: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    /// Target half-grid codes; affected users live and search here.
    pub grids: Vec<String>,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Fraction of users assigned to the cluster.
    pub user_fraction: f64,
    /// Per-day probability that an affected user emits a matching query
    /// while the cluster is active. Must exceed the background rate.
    pub match_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub users: u32,
    pub window: StudyWindow,
    #[serde(default)]
    pub tz: UtcOffset,
    #[serde(default)]
    pub coverage: CoverageWindow,
    /// Per-day probability that any user emits a matching query.
    pub background_match_rate: f64,
    #[serde(default = "default_noise_queries")]
    pub noise_queries_per_day: u32,
    /// Probability that a user consents to location use.
    #[serde(default = "default_consent_rate")]
    pub consent_rate: f64,
    #[serde(default)]
    pub cluster: Option<ClusterConfig>,
    #[serde(default)]
    pub movement: MovementConfig,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<Vec<HalfGridCode>, ScenarioError> {
        let invalid = |msg: String| ScenarioError::Invalid(msg);
        self.coverage.validate()?;
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if !rate_ok(self.background_match_rate) {
            return Err(invalid(format!(
                "background_match_rate {} outside [0, 1]",
                self.background_match_rate
            )));
        }
        if !rate_ok(self.consent_rate) {
            return Err(invalid(format!("consent_rate {} outside [0, 1]", self.consent_rate)));
        }
        if self.movement.radius_grids < 0 {
            return Err(invalid("radius_grids must be non-negative".to_string()));
        }
        let Some(cluster) = &self.cluster else {
            return Ok(Vec::new());
        };
        if !rate_ok(cluster.user_fraction) {
            return Err(invalid(format!(
                "cluster user_fraction {} outside [0, 1]",
                cluster.user_fraction
            )));
        }
        if !rate_ok(cluster.match_rate) || cluster.match_rate <= self.background_match_rate {
            return Err(invalid(format!(
                "cluster match_rate {} must lie in [0, 1] and exceed the background rate {}",
                cluster.match_rate, self.background_match_rate
            )));
        }
        if cluster.grids.is_empty() {
            return Err(invalid("cluster.grids must not be empty".to_string()));
        }
        if cluster.end < cluster.start {
            return Err(invalid("cluster end precedes start".to_string()));
        }
        if cluster.start < self.window.start || cluster.end > self.window.end {
            return Err(invalid("cluster date range must lie within the study window".to_string()));
        }
        let mut grids = Vec::with_capacity(cluster.grids.len());
        for code in &cluster.grids {
            let grid = HalfGridCode::parse(code)?;
            let (lat, lon) = grid.bounds().center();
            if !self.coverage.contains(lat, lon) {
                return Err(invalid(format!("cluster grid {code} lies outside coverage")));
            }
            grids.push(grid);
        }
        Ok(grids)
    }
}

/// Known answers derivable from the config alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub half_blocks: Vec<String>,
    pub third_blocks: Vec<String>,
    pub second_blocks: Vec<String>,
    pub active: Option<(NaiveDate, NaiveDate)>,
}

impl GroundTruth {
    pub fn blocks_at(&self, level: GridLevel) -> &[String] {
        match level {
            GridLevel::Half => &self.half_blocks,
            GridLevel::Third => &self.third_blocks,
            GridLevel::Second => &self.second_blocks,
        }
    }
}

/// Generated logs (CSV text, ready to ingest) plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub search_csv: String,
    pub location_csv: String,
    pub truth: GroundTruth,
}

struct UserState {
    raw_id: String,
    consent: bool,
    affected: bool,
    home: (i64, i64), // half-grid indices (lat, lon)
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    let cluster_grids = cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let patterns = expand_default_patterns();

    let truth = ground_truth(cfg, &cluster_grids);
    let index_bounds = coverage_index_bounds(&cfg.coverage);

    let n_affected = match &cfg.cluster {
        Some(c) => (cfg.users as f64 * c.user_fraction).round() as u32,
        None => 0,
    };

    let mut users = Vec::with_capacity(cfg.users as usize);
    for i in 0..cfg.users {
        let affected = i < n_affected;
        let consent = rng.random_bool(cfg.consent_rate);
        let home = if affected {
            cluster_grids[rng.random_range(0..cluster_grids.len())].indices()
        } else {
            random_home(&mut rng, &cfg.coverage)?
        };
        users.push(UserState { raw_id: format!("user-{i:05}"), consent, affected, home });
    }

    // (timestamp, rendered row) pairs, sorted before writing so file order
    // is stable regardless of generation order.
    let mut search_rows: Vec<(i64, String)> = Vec::new();
    let mut location_rows: Vec<(i64, String)> = Vec::new();

    for user in &users {
        for date in cfg.window.days() {
            let day_start = cfg.tz.date_start_epoch(date);
            let cluster_active = cfg.cluster.as_ref().is_some_and(|c| {
                user.affected && date >= c.start && date <= c.end
            });
            let rate = if cluster_active {
                cfg.cluster.as_ref().expect("checked").match_rate
            } else {
                cfg.background_match_rate
            };

            for _ in 0..cfg.noise_queries_per_day {
                let ts = day_start + rng.random_range(0..86_400i64);
                let query = NOISE_QUERIES[rng.random_range(0..NOISE_QUERIES.len())];
                search_rows.push((ts, format!("{},{},{}", user.raw_id, ts, query)));
            }
            if rate > 0.0 && rng.random_bool(rate) {
                let ts = day_start + rng.random_range(0..86_400i64);
                let query = render_matching_query(&mut rng, &patterns);
                search_rows.push((ts, format!("{},{},{}", user.raw_id, ts, query)));
            }

            for _ in 0..cfg.movement.fixes_per_day {
                let ts = day_start + rng.random_range(0..86_400i64);
                let grid = if cluster_active {
                    cluster_grids[rng.random_range(0..cluster_grids.len())]
                } else {
                    wander(&mut rng, user.home, cfg.movement.radius_grids, index_bounds)
                };
                let (lat, lon) = point_inside(&mut rng, grid);
                let mut row = String::new();
                write!(
                    row,
                    "{},{},{:.6},{:.6},{}",
                    user.raw_id, ts, lat, lon, user.consent
                )
                .expect("writing to string");
                location_rows.push((ts, row));
            }
        }
    }

    search_rows.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    location_rows.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    let mut search_csv = String::from("user_id,timestamp,query\n");
    for (_, row) in &search_rows {
        search_csv.push_str(row);
        search_csv.push('\n');
    }
    let mut location_csv = String::from("user_id,timestamp,lat,lon,consent\n");
    for (_, row) in &location_rows {
        location_csv.push_str(row);
        location_csv.push('\n');
    }

    Ok(Scenario { search_csv, location_csv, truth })
}

fn ground_truth(cfg: &ScenarioConfig, cluster_grids: &[HalfGridCode]) -> GroundTruth {
    let collect = |level: GridLevel| -> Vec<String> {
        cluster_grids
            .iter()
            .map(|g| g.truncate(level))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    };
    GroundTruth {
        half_blocks: collect(GridLevel::Half),
        third_blocks: collect(GridLevel::Third),
        second_blocks: collect(GridLevel::Second),
        active: cfg.cluster.as_ref().map(|c| (c.start, c.end)),
    }
}

/// Inclusive half-grid index bounds of cells fully inside the window.
fn coverage_index_bounds(coverage: &CoverageWindow) -> (i64, i64, i64, i64) {
    let lat_min = (coverage.south * 240.0).ceil() as i64; // 240 half grids per degree of latitude
    let lat_max = (coverage.north * 240.0).floor() as i64 - 1;
    let lon_min = (coverage.west * 160.0).ceil() as i64; // 160 per degree of longitude
    let lon_max = (coverage.east * 160.0).floor() as i64 - 1;
    (lat_min, lat_max, lon_min, lon_max)
}

fn random_home(rng: &mut ChaCha8Rng, coverage: &CoverageWindow) -> Result<(i64, i64), GridError> {
    let lat = rng.random_range(coverage.south..coverage.north);
    let lon = rng.random_range(coverage.west..coverage.east);
    Ok(encode_half_grid_within(coverage, lat, lon)?.indices())
}

fn wander(
    rng: &mut ChaCha8Rng,
    home: (i64, i64),
    radius: i64,
    bounds: (i64, i64, i64, i64),
) -> HalfGridCode {
    let (lat_min, lat_max, lon_min, lon_max) = bounds;
    let lat_idx = (home.0 + rng.random_range(-radius..=radius)).clamp(lat_min, lat_max);
    let lon_idx = (home.1 + rng.random_range(-radius..=radius)).clamp(lon_min, lon_max);
    HalfGridCode::from_indices(lat_idx, lon_idx)
        .expect("clamped indices stay inside the representable range")
}

/// Uniform point in the central 90% of the cell, so printing at 6 decimals
/// cannot move it across a boundary.
fn point_inside(rng: &mut ChaCha8Rng, grid: HalfGridCode) -> (f64, f64) {
    let b = grid.bounds();
    let u = 0.05 + 0.9 * rng.random::<f64>();
    let v = 0.05 + 0.9 * rng.random::<f64>();
    (b.south + u * (b.north - b.south), b.west + v * (b.east - b.west))
}

/// Renders a query matching a randomly chosen builtin pattern, shuffling
/// term order to exercise order-invariant matching.
fn render_matching_query(rng: &mut ChaCha8Rng, patterns: &PatternSet) -> String {
    let pattern = &patterns.patterns()[rng.random_range(0..patterns.len())];
    match pattern.kind {
        PatternKind::Single => pattern.terms[0].text.clone(),
        PatternKind::Double => {
            let main = &pattern.terms[0];
            let main_text = if main.wildcard {
                WILDCARD_RENDERINGS[rng.random_range(0..WILDCARD_RENDERINGS.len())].to_string()
            } else {
                main.text.clone()
            };
            let facet_text = pattern.terms[1].text.clone();
            if rng.random_bool(0.5) {
                format!("{main_text} {facet_text}")
            } else {
                format!("{facet_text} {main_text}")
            }
        }
    }
}

/// Detection quality of a hotspot report against planted ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionMetrics {
    /// Best (lowest) rank of any planted block, if present at all.
    pub planted_rank: Option<u64>,
    /// Fraction of report entries that are planted blocks.
    pub precision_at_k: f64,
    pub k: usize,
}

pub fn evaluate_detection(
    report: &HotspotReport,
    truth: &GroundTruth,
) -> Result<DetectionMetrics, ScenarioError> {
    let level = report.params.level;
    let planted = truth.blocks_at(level);
    if planted.iter().any(|code| code.len() != level.digits()) {
        return Err(ScenarioError::LevelMismatch { level });
    }
    let planted: BTreeSet<&str> = planted.iter().map(String::as_str).collect();
    let k = report.entries.len();
    let hits = report.entries.iter().filter(|e| planted.contains(e.block_code.as_str())).count();
    let planted_rank = report
        .entries
        .iter()
        .filter(|e| planted.contains(e.block_code.as_str()))
        .map(|e| e.rank)
        .min();
    let precision_at_k = if k == 0 { 0.0 } else { hits as f64 / k as f64 };
    Ok(DetectionMetrics { planted_rank, precision_at_k, k })
}
