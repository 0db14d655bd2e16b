//! `report`: re-aggregate an existing counter checkpoint without
//! re-ingesting the raw logs.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{Context, Result};
use chrono::NaiveDate;

use symgrid_core::report::{
    aggregate_blocks, baseline_ratio, emit_choropleth, load_baseline, rank_hotspots,
    suppress_small_counts, write_baseline_report, write_hotspots, ChoroplethFormat, ReportParams,
};
use symgrid_core::wssci::read_checkpoint_counts;

use crate::config::RunConfig;
use crate::output::Staging;

pub fn execute(
    cfg: &RunConfig,
    counter_path: &Path,
    baseline: Option<&Path>,
    out_dir: &Path,
) -> Result<()> {
    let f = File::open(counter_path)
        .with_context(|| format!("opening checkpoint {}", counter_path.display()))?;
    let counts = read_checkpoint_counts(BufReader::new(f)).context("reading checkpoint")?;

    let fallback = NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch date");
    let from = cfg
        .from
        .or(cfg.study_window.map(|w| w.start))
        .or(counts.keys().map(|k| k.date).min())
        .unwrap_or(fallback);
    let to = cfg
        .to
        .or(cfg.study_window.map(|w| w.end))
        .or(counts.keys().map(|k| k.date).max())
        .unwrap_or(fallback);

    let params = ReportParams {
        level: cfg.level,
        span: cfg.span,
        date_range: (from, to),
        suppression_threshold: cfg.threshold,
    };
    let aggregates = aggregate_blocks(&counts, cfg.level, (from, to), cfg.span);
    let aggregates = suppress_small_counts(aggregates, cfg.threshold);
    let report = rank_hotspots(&aggregates, cfg.top, params);

    let meta = cfg.output_meta(None, &[("counter", counter_path)])?;
    let mut staging = Staging::new(out_dir)?;

    let mut choropleth = Vec::new();
    emit_choropleth(&aggregates, cfg.format, &meta, &mut choropleth)?;
    let name = match cfg.format {
        ChoroplethFormat::Csv => "choropleth.csv",
        ChoroplethFormat::Geojson => "choropleth.geojson",
    };
    staging.stage(name, &choropleth)?;

    let mut hotspots = Vec::new();
    write_hotspots(&report, &meta, &mut hotspots)?;
    staging.stage("hotspots.csv", &hotspots)?;

    if let Some(baseline_path) = baseline {
        let f = File::open(baseline_path)
            .with_context(|| format!("opening baseline {}", baseline_path.display()))?;
        let baseline_map = load_baseline(BufReader::new(f))?;
        let ratio_report = baseline_ratio(&aggregates, &baseline_map);
        let mut out = Vec::new();
        write_baseline_report(&ratio_report, &meta, &mut out)?;
        staging.stage("baseline_ratios.csv", &out)?;
    }

    staging.commit()?;
    println!(
        "reported {} blocks at level {} (span {}, {}..{})",
        report.entries.len(),
        cfg.level,
        cfg.span,
        from,
        to
    );
    Ok(())
}
