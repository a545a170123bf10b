//! Scoring predicted root causes against ground truth, plus the score-scatter exports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::ops::Add;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::ensemble::RootCauseReport;
use crate::error::{RcaError, Result};
use crate::sim::GroundTruth;

/// Pair counts over (cycle, feature) in high-loss cycles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

/// Counts for one cycle's predicted and true feature sets.
pub fn confusion_sets(predicted: &[usize], truth: &[usize]) -> ConfusionCounts {
    let p: BTreeSet<usize> = predicted.iter().copied().collect();
    let t: BTreeSet<usize> = truth.iter().copied().collect();
    let tp = p.intersection(&t).count() as u64;
    ConfusionCounts {
        tp,
        fp: p.len() as u64 - tp,
        fn_: t.len() as u64 - tp,
    }
}

/// Sum of per-cycle counts over the flagged cycles. The reports must all come from
/// one model and cover exactly the cycles flagged in `truth`; an empty report list
/// counts every true pair as missed.
pub fn confusion(reports: &[RootCauseReport], truth: &GroundTruth) -> Result<ConfusionCounts> {
    if let Some(first) = reports.first() {
        if reports.iter().any(|r| r.model != first.model) {
            return Err(RcaError::Config("reports mix several models; evaluate one model at a time".into()));
        }
    }
    let expected: BTreeMap<u32, &[usize]> =
        truth.flagged().map(|t| (t.cycle, t.root_cause_features.as_slice())).collect();
    if reports.is_empty() {
        warn!("no reports to evaluate; every true root cause counts as missed");
        let fn_ = expected.values().map(|t| t.len() as u64).sum();
        return Ok(ConfusionCounts { tp: 0, fp: 0, fn_ });
    }
    let mut predicted: BTreeMap<u32, &[usize]> = BTreeMap::new();
    let mut duplicates = Vec::new();
    for r in reports {
        if predicted.insert(r.cycle, &r.root_causes).is_some() {
            duplicates.push(r.cycle);
        }
    }
    let missing: Vec<u32> = expected.keys().filter(|c| !predicted.contains_key(c)).copied().collect();
    let unexpected: Vec<u32> = predicted.keys().filter(|c| !expected.contains_key(c)).copied().collect();
    if !missing.is_empty() || !unexpected.is_empty() || !duplicates.is_empty() {
        return Err(RcaError::CoverageMismatch(format!(
            "flagged cycles without a report: {missing:?}; reports for cycles not flagged in the truth: {unexpected:?}; duplicated reports: {duplicates:?}"
        )));
    }
    Ok(expected
        .iter()
        .map(|(c, t)| confusion_sets(predicted[c], t))
        .fold(ConfusionCounts::default(), Add::add))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn metrics(c: ConfusionCounts) -> MetricSet {
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MetricSet { precision, recall, f1 }
}

/// Half-away-from-zero rounding to 3 decimals.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub model: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl MetricsRecord {
    pub fn new(model: &str, c: ConfusionCounts) -> Self {
        let m = metrics(c);
        Self {
            model: model.to_string(),
            precision: round3(m.precision),
            recall: round3(m.recall),
            f1: round3(m.f1),
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
        }
    }
}

/// One `score ≥ 2` entry of a report.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub cycle: u32,
    pub feature_name: String,
    pub score: u8,
}

pub fn scatter_points(reports: &[RootCauseReport], names: &[String]) -> Vec<ScatterPoint> {
    let mut out = Vec::new();
    for r in reports {
        for (f, &s) in r.scores.iter().enumerate() {
            if s >= 2 {
                out.push(ScatterPoint {
                    cycle: r.cycle,
                    feature_name: names[f].clone(),
                    score: s,
                });
            }
        }
    }
    out
}

pub fn write_scatter_csv<W: Write>(points: &[ScatterPoint], sink: W) -> Result<()> {
    // explicit header so an empty export still carries one
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    w.write_record(["cycle", "feature_name", "score"])?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scatter_csv<R: Read>(source: R) -> Result<Vec<ScatterPoint>> {
    let mut r = csv::Reader::from_reader(source);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

fn color(feature: usize) -> String {
    // golden-angle hue steps keep neighbouring features apart
    let hue = (feature as f64 * 137.507_764) % 360.0;
    format!("hsl({hue:.1},70%,45%)")
}

/// Cycle on x, score on y, one colour per feature. Features sharing a point are
/// drawn as concentric rings, so the outer radius grows with how many share it.
pub fn render_scatter_svg(points: &[ScatterPoint], names: &[String]) -> String {
    const W: f64 = 900.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 60.0;
    const RIGHT: f64 = 170.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 50.0;
    const RING: f64 = 3.0;
    let (lo, hi) = points
        .iter()
        .fold((u32::MAX, 0u32), |(lo, hi), p| (lo.min(p.cycle), hi.max(p.cycle)));
    let (lo, hi) = if points.is_empty() { (0, 1) } else { (lo, hi.max(lo + 1)) };
    let x = |c: u32| LEFT + (c - lo) as f64 / (hi - lo) as f64 * (W - LEFT - RIGHT);
    let y = |s: f64| H - BOTTOM - (s - 1.5) / 3.0 * (H - TOP - BOTTOM);
    let index = |name: &str| names.iter().position(|n| n == name).unwrap_or(0);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b}" stroke="black"/>"#,
        b = H - BOTTOM,
        r = W - RIGHT
    );
    for s in 2..=4 {
        let ys = y(s as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{ys}" x2="{r}" y2="{ys}" stroke="#ddd"/><text x="{tx}" y="{ty}" text-anchor="end">{s}</text>"##,
            r = W - RIGHT,
            tx = LEFT - 8.0,
            ty = ys + 4.0
        );
    }
    for c in [lo, hi] {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{c}</text>"#, x(c), H - BOTTOM + 18.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">cycle</text><text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">root-cause score</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 10.0,
        H / 2.0,
        H / 2.0
    );

    let mut groups: BTreeMap<(u32, u8), Vec<usize>> = BTreeMap::new();
    for p in points {
        groups.entry((p.cycle, p.score)).or_default().push(index(&p.feature_name));
    }
    for ((c, s), mut feats) in groups {
        feats.sort_unstable();
        let n = feats.len();
        for (k, f) in feats.iter().enumerate() {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{}" fill="{}"><title>cycle {c}: {} scored {s}</title></circle>"#,
                x(c),
                y(s as f64),
                RING * (n - k) as f64,
                color(*f),
                names.get(*f).map_or("?", String::as_str)
            );
        }
    }

    let present: BTreeSet<usize> = points.iter().map(|p| index(&p.feature_name)).collect();
    for (row, f) in present.iter().enumerate() {
        let ly = TOP + 16.0 * row as f64;
        let _ = writeln!(
            svg,
            r#"<circle cx="{}" cy="{ly}" r="5" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            W - RIGHT + 20.0,
            color(*f),
            W - RIGHT + 30.0,
            ly + 4.0,
            names[*f]
        );
    }
    svg.push_str("</svg>\n");
    svg
}
