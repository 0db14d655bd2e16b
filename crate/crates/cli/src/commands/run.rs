//! The end-to-end pipeline: ingest -> identify -> count -> aggregate ->
//! suppress -> rank -> emit. Shared by `run` and `simulate --then-run`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use serde::Serialize;

use symgrid_core::ingest::{
    parse_location_log, parse_search_log, IngestFilter, IngestStats, LocationFix, Pseudonymizer,
};
use symgrid_core::meta::OutputMeta;
use symgrid_core::pattern::{expand_default_patterns, load_pattern_file, PatternSet};
use symgrid_core::report::{
    aggregate_blocks, baseline_ratio, emit_choropleth, load_baseline, rank_hotspots,
    suppress_small_counts, write_baseline_report, write_hotspots, BlockAggregate,
    ChoroplethFormat, HotspotReport, ReportParams,
};
use symgrid_core::wssci::{
    count_wsscipphg, identify_wssci, read_sidecar, write_checkpoint, write_sidecar, CellKey,
    WssciDaySet, WsscipCounter,
};

use crate::config::RunConfig;
use crate::output::Staging;

pub struct PipelineResult {
    pub counter: WsscipCounter,
    pub search_stats: IngestStats,
    pub location_stats: IngestStats,
    pub wssci_user_days: usize,
    pub aggregates: Vec<BlockAggregate>,
    pub report: HotspotReport,
}

pub fn load_patterns(cfg: &RunConfig) -> Result<PatternSet> {
    match &cfg.patterns {
        None => Ok(expand_default_patterns()),
        Some(path) => {
            load_pattern_file(path).with_context(|| format!("loading patterns {}", path.display()))
        }
    }
}

/// Report date range: explicit flags win, then the study window, then the
/// extent of the data itself.
fn report_range(cfg: &RunConfig, counts: &BTreeMap<CellKey, u64>) -> (NaiveDate, NaiveDate) {
    let fallback = NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch date");
    let data_min = counts.keys().map(|k| k.date).min();
    let data_max = counts.keys().map(|k| k.date).max();
    let from = cfg
        .from
        .or(cfg.study_window.map(|w| w.start))
        .or(data_min)
        .unwrap_or(fallback);
    let to = cfg.to.or(cfg.study_window.map(|w| w.end)).or(data_max).unwrap_or(fallback);
    (from, to)
}

/// Splits fixes across workers by user token and merges the per-worker
/// counters; the merge monoid guarantees the result is independent of the
/// partitioning.
fn count_partitioned(
    wssci: &WssciDaySet,
    fixes: &[LocationFix],
    cfg: &RunConfig,
) -> Result<WsscipCounter> {
    if cfg.jobs <= 1 || fixes.len() < 2 {
        return Ok(count_wsscipphg(wssci, fixes, cfg.tz, &cfg.coverage, cfg.mode));
    }
    let shard_of = |fix: &LocationFix| {
        fix.user.bytes().fold(0usize, |acc, b| acc.wrapping_mul(31).wrapping_add(b as usize))
            % cfg.jobs
    };
    let mut shards: Vec<Vec<LocationFix>> = vec![Vec::new(); cfg.jobs];
    for fix in fixes {
        shards[shard_of(fix)].push(fix.clone());
    }
    let counters: Vec<WsscipCounter> = std::thread::scope(|scope| {
        let handles: Vec<_> = shards
            .iter()
            .map(|shard| {
                scope.spawn(|| count_wsscipphg(wssci, shard, cfg.tz, &cfg.coverage, cfg.mode))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("count worker panicked")).collect()
    });
    let mut total = WsscipCounter::new(cfg.mode);
    for counter in &counters {
        total.merge_with(counter).context("merging partition counters")?;
    }
    Ok(total)
}

pub fn run_pipeline(
    cfg: &RunConfig,
    salt: &str,
    search: &Path,
    locations: &Path,
    merge_with: Option<&Path>,
) -> Result<PipelineResult> {
    let patterns = load_patterns(cfg).context("stage patterns")?;
    let pseudo = Pseudonymizer::new(salt).context("stage pseudonymize")?;
    let filter = IngestFilter {
        window_epoch: cfg.study_window.map(|w| w.epoch_range(cfg.tz)),
        coverage: cfg.coverage,
    };

    let search_file =
        File::open(search).with_context(|| format!("stage ingest: opening {}", search.display()))?;
    let (records, search_stats) =
        parse_search_log(BufReader::new(search_file), &pseudo, &filter).context("stage ingest")?;

    let location_file = File::open(locations)
        .with_context(|| format!("stage ingest: opening {}", locations.display()))?;
    let (fixes, location_stats) =
        parse_location_log(BufReader::new(location_file), &pseudo, &filter)
            .context("stage ingest")?;

    let wssci = identify_wssci(
        &records,
        &patterns,
        cfg.window_days,
        cfg.tz,
        cfg.study_window.as_ref(),
    );
    let wssci_user_days = wssci.len();

    let mut counter = count_partitioned(&wssci, &fixes, cfg).context("stage count")?;

    if let Some(checkpoint) = merge_with {
        let sidecar_path = sidecar_path_for(checkpoint);
        let f = File::open(&sidecar_path).with_context(|| {
            format!("stage merge: opening checkpoint sidecar {}", sidecar_path.display())
        })?;
        let other = read_sidecar(BufReader::new(f)).context("stage merge")?;
        counter.merge_with(&other).context("stage merge")?;
    }

    let counts = counter.counts();
    let date_range = report_range(cfg, &counts);
    let params = ReportParams {
        level: cfg.level,
        span: cfg.span,
        date_range,
        suppression_threshold: cfg.threshold,
    };
    let aggregates = aggregate_blocks(&counts, cfg.level, date_range, cfg.span);
    let aggregates = suppress_small_counts(aggregates, cfg.threshold);
    let report = rank_hotspots(&aggregates, cfg.top, params);

    Ok(PipelineResult {
        counter,
        search_stats,
        location_stats,
        wssci_user_days,
        aggregates,
        report,
    })
}

pub fn sidecar_path_for(checkpoint: &Path) -> std::path::PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".users");
    checkpoint.with_file_name(name)
}

#[derive(Serialize)]
struct RunStatsDoc<'a> {
    meta: &'a OutputMeta,
    search: &'a IngestStats,
    locations: &'a IngestStats,
    wssci_user_days: usize,
    cells: usize,
    blocks_reported: usize,
}

/// Stages every pipeline output file (checkpoint + sidecar, choropleth,
/// hotspots, stats, optional baseline ratios) into `staging`.
pub fn stage_outputs(
    cfg: &RunConfig,
    meta: &OutputMeta,
    result: &PipelineResult,
    baseline: Option<&Path>,
    staging: &mut Staging,
) -> Result<()> {
    let comments = meta.comment_lines();

    let mut checkpoint = Vec::new();
    write_checkpoint(&result.counter, &comments, &mut checkpoint).context("stage emit")?;
    staging.stage("counter.csv", &checkpoint)?;

    let mut sidecar = Vec::new();
    write_sidecar(&result.counter, &comments, &mut sidecar).context("stage emit")?;
    staging.stage("counter.csv.users", &sidecar)?;

    let mut choropleth = Vec::new();
    emit_choropleth(&result.aggregates, cfg.format, meta, &mut choropleth)
        .context("stage emit")?;
    let choropleth_name = match cfg.format {
        ChoroplethFormat::Csv => "choropleth.csv",
        ChoroplethFormat::Geojson => "choropleth.geojson",
    };
    staging.stage(choropleth_name, &choropleth)?;

    let mut hotspots = Vec::new();
    write_hotspots(&result.report, meta, &mut hotspots).context("stage emit")?;
    staging.stage("hotspots.csv", &hotspots)?;

    let stats = RunStatsDoc {
        meta,
        search: &result.search_stats,
        locations: &result.location_stats,
        wssci_user_days: result.wssci_user_days,
        cells: result.counter.cell_count(),
        blocks_reported: result.report.entries.len(),
    };
    let mut stats_json = serde_json::to_vec_pretty(&stats).context("stage emit")?;
    stats_json.push(b'\n');
    staging.stage("stats.json", &stats_json)?;

    if let Some(baseline_path) = baseline {
        let f = File::open(baseline_path)
            .with_context(|| format!("stage baseline: opening {}", baseline_path.display()))?;
        let baseline_map = load_baseline(BufReader::new(f)).context("stage baseline")?;
        let ratio_report = baseline_ratio(&result.aggregates, &baseline_map);
        let mut out = Vec::new();
        write_baseline_report(&ratio_report, meta, &mut out).context("stage baseline")?;
        staging.stage("baseline_ratios.csv", &out)?;
    }
    Ok(())
}

/// Human summary printed after a successful run.
pub fn print_summary(result: &PipelineResult) {
    println!(
        "ingested: {} search records ({} dropped), {} fixes ({} dropped)",
        result.search_stats.records_kept,
        result.search_stats.total_drops(),
        result.location_stats.records_kept,
        result.location_stats.total_drops(),
    );
    println!(
        "wssci user-days: {}; cells: {}; blocks reported: {}",
        result.wssci_user_days,
        result.counter.cell_count(),
        result.report.entries.len()
    );
    if let Some(top) = result.report.entries.first() {
        println!("top hotspot: block {} total {}", top.block_code, top.total);
    }
}

pub fn execute(
    cfg: &RunConfig,
    salt: &str,
    search: &Path,
    locations: &Path,
    merge_with: Option<&Path>,
    baseline: Option<&Path>,
    out_dir: &Path,
) -> Result<()> {
    let result = run_pipeline(cfg, salt, search, locations, merge_with)?;
    let meta = cfg.output_meta(
        None,
        &[("search", search), ("locations", locations)],
    )?;
    let mut staging = Staging::new(out_dir)?;
    stage_outputs(cfg, &meta, &result, baseline, &mut staging)?;
    staging.commit().context("stage emit")?;
    print_summary(&result);
    Ok(())
}
