//! `ingest`: parse logs, report per-stream statistics and optionally write
//! the pseudonymized canonical streams for inspection.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use symgrid_core::ingest::{
    parse_location_log, parse_search_log, IngestFilter, IngestStats, Pseudonymizer,
};
use symgrid_core::meta::OutputMeta;

use crate::config::RunConfig;
use crate::output::Staging;

#[derive(Serialize)]
struct IngestStatsDoc<'a> {
    meta: &'a OutputMeta,
    search: Option<&'a IngestStats>,
    locations: Option<&'a IngestStats>,
}

fn print_stats(label: &str, stats: &IngestStats) {
    println!(
        "{label}: read {} kept {} dropped {}",
        stats.records_read,
        stats.records_kept,
        stats.total_drops()
    );
    for (reason, count) in &stats.drops_by_reason {
        println!("  {reason:?}: {count}", reason = reason);
    }
}

pub fn execute(
    cfg: &RunConfig,
    salt: &str,
    search: Option<&Path>,
    locations: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    if search.is_none() && locations.is_none() {
        bail!("nothing to ingest: pass --search and/or --locations");
    }
    let pseudo = Pseudonymizer::new(salt)?;
    let filter = IngestFilter {
        window_epoch: cfg.study_window.map(|w| w.epoch_range(cfg.tz)),
        coverage: cfg.coverage,
    };

    let mut inputs: Vec<(&str, &Path)> = Vec::new();
    if let Some(p) = search {
        inputs.push(("search", p));
    }
    if let Some(p) = locations {
        inputs.push(("locations", p));
    }
    let meta = cfg.output_meta(None, &inputs)?;

    let mut search_stats = None;
    let mut search_canonical = String::new();
    if let Some(path) = search {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let (records, stats) = parse_search_log(BufReader::new(f), &pseudo, &filter)?;
        print_stats("search", &stats);
        for line in meta.comment_lines() {
            writeln!(search_canonical, "# {line}")?;
        }
        writeln!(search_canonical, "user_token,timestamp,query")?;
        for r in &records {
            writeln!(search_canonical, "{},{},{}", r.user, r.timestamp, r.query)?;
        }
        search_stats = Some(stats);
    }

    let mut location_stats = None;
    let mut location_canonical = String::new();
    if let Some(path) = locations {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let (fixes, stats) = parse_location_log(BufReader::new(f), &pseudo, &filter)?;
        print_stats("locations", &stats);
        for line in meta.comment_lines() {
            writeln!(location_canonical, "# {line}")?;
        }
        writeln!(location_canonical, "user_token,timestamp,lat,lon")?;
        for fix in &fixes {
            writeln!(location_canonical, "{},{},{},{}", fix.user, fix.timestamp, fix.lat, fix.lon)?;
        }
        location_stats = Some(stats);
    }

    if let Some(out_dir) = out {
        let mut staging = Staging::new(out_dir)?;
        if search.is_some() {
            staging.stage("search.csv", search_canonical.as_bytes())?;
        }
        if locations.is_some() {
            staging.stage("locations.csv", location_canonical.as_bytes())?;
        }
        let doc = IngestStatsDoc {
            meta: &meta,
            search: search_stats.as_ref(),
            locations: location_stats.as_ref(),
        };
        let mut stats_json = serde_json::to_vec_pretty(&doc)?;
        stats_json.push(b'\n');
        staging.stage("stats.json", &stats_json)?;
        staging.commit()?;
        println!("wrote canonical streams to {}", out_dir.display());
    }
    Ok(())
}
