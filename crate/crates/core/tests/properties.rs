//! Property tests for the library's structural invariants.

use chrono::NaiveDate;
use proptest::prelude::*;

use symgrid_core::grid::{encode_half_grid, GridLevel, HalfGridCode};
use symgrid_core::ingest::{LocationFix, SearchLogRecord};
use symgrid_core::pattern::{expand_default_patterns, normalize_query, PatternTerm};
use symgrid_core::report::suppress_small_counts;
use symgrid_core::timespan::{TimeSpan, UtcOffset};
use symgrid_core::wssci::{count_wsscipphg, identify_wssci, merge, CountMode, WsscipCounter};

fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

proptest! {
    /// Every valid point lands in exactly one half grid: its own cell
    /// contains it, the eight neighbors do not.
    #[test]
    fn half_grids_partition_the_plane(
        lat in 20.0f64..46.0,
        lon in 122.0f64..154.0,
    ) {
        let code = encode_half_grid(lat, lon).unwrap();
        prop_assert!(code.bounds().contains(lat, lon));
        let (li, lo) = code.indices();
        for dlat in -1i64..=1 {
            for dlon in -1i64..=1 {
                if dlat == 0 && dlon == 0 {
                    continue;
                }
                let neighbor = HalfGridCode::from_indices(li + dlat, lo + dlon).unwrap();
                prop_assert!(!neighbor.bounds().contains(lat, lon));
            }
        }
    }

    /// Re-encoding a cell's center recovers the cell, and truncated codes
    /// spatially contain the member cell.
    #[test]
    fn roundtrip_and_nesting(
        lat_idx in (20i64 * 240)..(46 * 240),
        lon_idx in (122i64 * 160)..(154 * 160),
    ) {
        let code = HalfGridCode::from_indices(lat_idx, lon_idx).unwrap();
        let (clat, clon) = code.bounds().center();
        prop_assert_eq!(encode_half_grid(clat, clon).unwrap(), code);
        for level in [GridLevel::Third, GridLevel::Second] {
            let block = symgrid_core::grid::decode_code(&code.truncate(level)).unwrap();
            prop_assert!(block.contains(clat, clon));
        }
    }

    #[test]
    fn normalize_is_idempotent(s in any::<String>()) {
        let once = normalize_query(&s);
        prop_assert_eq!(normalize_query(&once), once);
    }

    /// Matching is invariant under term-order permutation: multi-word
    /// phrase terms travel as contiguous units, everything else may move
    /// freely.
    #[test]
    fn match_is_order_invariant(
        pattern_idx in 0usize..63,
        // No pattern word starts with q, x or z, so noise can never extend
        // or complete a phrase n-gram.
        noise in prop::collection::vec("[qxz][a-z]{0,7}", 0..4),
        seed in any::<u64>(),
    ) {
        let set = expand_default_patterns();
        let pattern = &set.patterns()[pattern_idx];
        let mut units: Vec<String> = pattern.terms.iter().map(|t| t.text.clone()).collect();
        units.extend(noise);

        // Deterministic shuffle derived from the seed.
        let mut shuffled = units.clone();
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            shuffled.swap(i, j);
        }

        let a = set.match_query(&units.join(" "));
        let b = set.match_query(&shuffled.join(" "));
        prop_assert!(a.matched());
        prop_assert!(b.matched());
        let mut ids_a = a.pattern_ids.clone();
        let mut ids_b = b.pattern_ids.clone();
        ids_a.sort();
        ids_b.sort();
        prop_assert_eq!(ids_a, ids_b);
    }

    /// The wildcard term matches exactly the tokens carrying its prefix.
    #[test]
    fn wildcard_prefix_soundness(suffix in "[a-z]{0,6}", other in "[a-z]{1,10}") {
        let set = expand_default_patterns();
        let term = PatternTerm::prefix("corona");
        let corona_like = format!("corona{suffix}");
        let single = |token: &str| {
            // A one-off single-term pattern isolates the term semantics.
            let p = symgrid_core::pattern::QueryPattern::single("probe", term.clone());
            let probe = symgrid_core::pattern::PatternSet::new(
                vec![p],
                symgrid_core::pattern::PatternSource::Builtin,
                Default::default(),
            )
            .unwrap();
            probe.match_query(token).matched()
        };
        prop_assert!(single(&corona_like));
        prop_assert_eq!(single(&other), other.starts_with("corona"));
        // And through the full set: a corona-prefixed token plus a facet
        // always matches some double pattern.
        let r = set.match_query(&format!("{corona_like} chills"));
        prop_assert!(r.pattern_ids.contains(&"corona+chills".to_string()));
    }

    /// Merge is a commutative monoid on counters (exact mode).
    #[test]
    fn merge_monoid_laws(
        obs_a in observations(),
        obs_b in observations(),
        obs_c in observations(),
    ) {
        let a = counter_from(&obs_a);
        let b = counter_from(&obs_b);
        let c = counter_from(&obs_c);
        let empty = WsscipCounter::new(CountMode::Exact);

        prop_assert_eq!(merge(&a, &empty).unwrap(), a.clone());
        prop_assert_eq!(merge(&empty, &a).unwrap(), a.clone());
        prop_assert_eq!(merge(&a, &b).unwrap(), merge(&b, &a).unwrap());
        let ab_c = merge(&merge(&a, &b).unwrap(), &c).unwrap();
        let a_bc = merge(&a, &merge(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(ab_c, a_bc);
    }

    /// Widening the attribution window never decreases any cell count.
    #[test]
    fn attribution_window_is_monotone(
        query_days in prop::collection::vec(0u64..10, 1..6),
        fix_days in prop::collection::vec(0u64..10, 1..6),
        window_days in 0u32..3,
    ) {
        let tz = UtcOffset::default();
        let set = expand_default_patterns();
        let base = date("2020-02-03");
        let records: Vec<SearchLogRecord> = query_days
            .iter()
            .map(|&d| SearchLogRecord {
                user: "u1".to_string(),
                timestamp: tz.date_start_epoch(base + chrono::Days::new(d)) + 36_000,
                query: "corona cough".to_string(),
            })
            .collect();
        let (lat, lon) = HalfGridCode::parse("533935992").unwrap().bounds().center();
        let fixes: Vec<LocationFix> = fix_days
            .iter()
            .map(|&d| LocationFix {
                user: "u1".to_string(),
                timestamp: tz.date_start_epoch(base + chrono::Days::new(d)) + 36_000,
                lat,
                lon,
                consent: true,
            })
            .collect();

        let cov = symgrid_core::grid::CoverageWindow::default();
        let narrow = count_wsscipphg(
            &identify_wssci(&records, &set, window_days, tz, None),
            &fixes, tz, &cov, CountMode::Exact);
        let wide = count_wsscipphg(
            &identify_wssci(&records, &set, window_days + 1, tz, None),
            &fixes, tz, &cov, CountMode::Exact);
        for (key, count) in narrow.counts() {
            prop_assert!(wide.counts().get(&key).copied().unwrap_or(0) >= count);
        }
    }

    /// Raising the suppression threshold only ever shrinks the output.
    #[test]
    fn suppression_threshold_is_monotone(totals in prop::collection::vec(0u64..20, 0..12), t in 0u64..10) {
        let aggs: Vec<_> = totals
            .iter()
            .enumerate()
            .map(|(i, &total)| symgrid_core::report::BlockAggregate {
                block_code: format!("5339{:02}99", i % 36),
                date_range: (date("2020-02-03"), date("2020-02-09")),
                span: TimeSpan::Whole,
                total,
            })
            .collect();
        let at_t = suppress_small_counts(aggs.clone(), t);
        let at_t1 = suppress_small_counts(aggs, t + 1);
        for agg in &at_t1 {
            prop_assert!(at_t.contains(agg));
        }
    }
}

/// Strategy: lists of (grid quadrant, day offset, span index, user index).
fn observations() -> impl Strategy<Value = Vec<(u8, u8, u8, u8)>> {
    prop::collection::vec((1u8..=4, 0u8..7, 0u8..3, 0u8..6), 0..24)
}

fn counter_from(obs: &[(u8, u8, u8, u8)]) -> WsscipCounter {
    let mut counter = WsscipCounter::new(CountMode::Exact);
    for &(quadrant, day, span_idx, user) in obs {
        let grid = HalfGridCode::parse(&format!("53393599{quadrant}")).unwrap();
        let d = date("2020-02-03") + chrono::Days::new(day as u64);
        let span = TimeSpan::NON_WHOLE[span_idx as usize];
        counter.observe(grid, d, span, &format!("u{user}"));
    }
    counter
}
