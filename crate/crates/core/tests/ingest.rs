use plcrca_core::cycle::{flag_productivity, parse_log, segment_cycles, write_log, CsvFormat, FlagPolicy};

/// Cut-out of a real machine log: five signals, time of day only, tab-separated.
const CUTOUT: &str = "Timestamp\tSignal 1\tSignal 2\tSignal 3\tSignal 4\tSignal 5\tCycle\tState
19:04:15.0684\t0\t1\t1\t1\t1\t1\t1
19:04:15.9605\t0\t1\t1\t1\t1\t1\t1
19:04:42.8403\t1\t0\t0\t0\t0\t1\t2
19:04:43.2353\t1\t0\t0\t0\t0\t1\t2
19:05:13.2559\t1\t0\t0\t1\t1\t1\t3
19:05:17.1166\t1\t0\t0\t0\t1\t1\t4
19:05:50.6370\t0\t1\t0\t0\t1\t1\t5
19:06:07.4969\t1\t0\t0\t1\t0\t1\t6
19:06:27.6087\t0\t0\t0\t0\t1\t1\t7
19:06:53.4058\t0\t0\t1\t1\t1\t2\t1
19:09:14.7522\t0\t1\t1\t1\t0\t2\t2
";

#[test]
fn machine_cutout_parses_and_segments() {
    let log = parse_log(CUTOUT.as_bytes(), CsvFormat::tsv()).unwrap();
    assert_eq!(log.rows.len(), 11);
    assert_eq!(log.dim(), 5);
    assert_eq!(log.cycle_ids(), vec![1, 2]);
    assert_eq!(log.feature_names[0], "Signal 1");

    let cycles = segment_cycles(&log);
    assert_eq!(cycles.len(), 2);
    assert_eq!(cycles[0].len(), 9);
    assert_eq!(cycles[1].len(), 2);
    assert!((cycles[0].duration_seconds - (2.0 * 60.0 + 12.5403)).abs() < 1e-9);
    assert!((cycles[1].duration_seconds - 141.3464).abs() < 1e-9);
    assert_eq!(cycles[0].matrix.row(2), &[1, 0, 0, 0, 0]);
    assert_eq!(cycles[0].states, vec![1, 1, 2, 2, 3, 4, 5, 6, 7]);
}

#[test]
fn cutout_survives_a_csv_round_trip() {
    let log = parse_log(CUTOUT.as_bytes(), CsvFormat::tsv()).unwrap();
    let mut out = Vec::new();
    write_log(&log, &mut out).unwrap();
    let back = parse_log(out.as_slice(), CsvFormat::default()).unwrap();
    assert_eq!(back.rows.iter().map(|r| &r.signals).collect::<Vec<_>>(), log.rows.iter().map(|r| &r.signals).collect::<Vec<_>>());
    let d0: Vec<i64> = log.rows.windows(2).map(|w| w[1].timestamp_us - w[0].timestamp_us).collect();
    let d1: Vec<i64> = back.rows.windows(2).map(|w| w[1].timestamp_us - w[0].timestamp_us).collect();
    assert_eq!(d0, d1);
}

#[test]
fn ideal_time_flags_the_slow_cycle() {
    let log = parse_log(CUTOUT.as_bytes(), CsvFormat::tsv()).unwrap();
    let cycles = segment_cycles(&log);
    // 132.5 s vs 141.3 s against 1.1 × 125 s
    let flags = flag_productivity(&cycles, &FlagPolicy::duration(Some(125.0))).unwrap();
    assert_eq!(flags.iter().map(|f| f.flag).collect::<Vec<_>>(), vec![0, 1]);
}
