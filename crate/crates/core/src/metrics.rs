//! Match metrics, report aggregation, APU partitioning and fine-tune pair export.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{MatchRecord, RecordEvent, TickSample};

pub const MAX_SUPPLY: u32 = 200;

pub const BUCKET_LABELS: [&str; 4] = ["Top 25% APU, 0-25%", "25-50% APU", "50-75% APU", "Bottom 25% APU, 75-100%"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub id: String,
    pub won: bool,
    pub reward: i8,
    pub pbr: f64,
    pub rur: f64,
    pub apu: f64,
    pub tr: f64,
    pub horizon_tick: u32,
    pub final_tick: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("record {0} has no tick samples")]
    NoSamples(String),
    #[error("record {0} declares no tech or building kinds")]
    NoKinds(String),
    #[error("no reports to aggregate")]
    Empty,
    #[error("unknown bucket `{0}`")]
    UnknownBucket(String),
}

/// First sampled tick at full supply, or the last sampled tick.
pub fn horizon(samples: &[TickSample]) -> Option<u32> {
    let last = samples.last()?.tick;
    Some(
        samples
            .iter()
            .find(|s| s.supply_used >= MAX_SUPPLY && s.supply_cap >= MAX_SUPPLY)
            .map(|s| s.tick)
            .unwrap_or(last),
    )
}

/// Metrics from raw samples, `total_kinds` being the tech and building kinds on offer.
pub fn compute_samples(
    id: &str,
    samples: &[TickSample],
    total_kinds: u32,
    reward: i8,
) -> Result<MetricsReport, MetricsError> {
    let h = horizon(samples).ok_or_else(|| MetricsError::NoSamples(id.into()))?;
    if total_kinds == 0 {
        return Err(MetricsError::NoKinds(id.into()));
    }
    let window: Vec<&TickSample> = samples.iter().filter(|s| s.tick <= h).collect();
    let denom = h.max(1) as f64;
    let capped = window.iter().filter(|s| s.at_population_cap).count() as f64;
    let at_h = window.last().copied().unwrap_or(&samples[0]);
    let spent = (at_h.total_minerals_spent + at_h.total_gas_spent) as f64;
    let apu = if window.is_empty() {
        0.0
    } else {
        window
            .iter()
            .map(|s| if s.supply_cap == 0 { 0.0 } else { s.supply_used as f64 / s.supply_cap as f64 })
            .sum::<f64>()
            / window.len() as f64
    };
    let done = samples.iter().map(|s| s.completed_kinds).max().unwrap_or(0);
    Ok(MetricsReport {
        id: id.into(),
        won: reward == 1,
        reward,
        pbr: (capped / denom).min(1.0),
        rur: spent / denom,
        apu: apu.min(1.0),
        tr: (done as f64 / total_kinds as f64).min(1.0),
        horizon_tick: h,
        final_tick: samples.last().map(|s| s.tick).unwrap_or(0),
    })
}

pub fn compute(record: &MatchRecord) -> Result<MetricsReport, MetricsError> {
    let samples: Vec<TickSample> = record.samples().copied().collect();
    compute_samples(&record.header.match_id, &samples, record.header.total_kinds, record.reward().unwrap_or(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub wins: usize,
    pub total: usize,
    pub win_rate: String,
    pub pbr: f64,
    pub rur: f64,
    pub apu: f64,
    pub tr: f64,
}

pub fn aggregate(label: &str, reports: &[MetricsReport]) -> Result<SummaryRow, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let wins = reports.iter().filter(|r| r.won).count();
    Ok(SummaryRow {
        label: label.into(),
        wins,
        total: reports.len(),
        win_rate: format!("{wins}/{}", reports.len()),
        pbr: mean(|r| r.pbr),
        rur: mean(|r| r.rur),
        apu: mean(|r| r.apu),
        tr: mean(|r| r.tr),
    })
}

/// Plain-text report, one row per summary.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
    let mut out =
        format!("{:<width$}  {:>8}  {:>7}  {:>9}  {:>7}  {:>7}\n", "Agent", "Win Rate", "PBR", "RUR", "APU", "TR");
    for r in rows {
        out.push_str(&format!(
            "{:<width$}  {:>8}  {:>7.4}  {:>9.4}  {:>7.4}  {:>7.4}\n",
            r.label, r.win_rate, r.pbr, r.rur, r.apu, r.tr
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub ids: Vec<String>,
    pub apus: Vec<f64>,
}

/// Won matches ranked by APU, highest first, split into four near-equal buckets.
pub fn partition_by_apu(reports: &[MetricsReport]) -> [Bucket; 4] {
    let mut wins: Vec<&MetricsReport> = reports.iter().filter(|r| r.won).collect();
    wins.sort_by(|a, b| b.apu.total_cmp(&a.apu).then_with(|| a.id.cmp(&b.id)));
    let (base, extra) = (wins.len() / 4, wins.len() % 4);
    let mut rest = wins.as_slice();
    std::array::from_fn(|i| {
        let size = base + usize::from(i < extra);
        let (head, tail) = rest.split_at(size);
        rest = tail;
        Bucket {
            label: BUCKET_LABELS[i].into(),
            ids: head.iter().map(|r| r.id.clone()).collect(),
            apus: head.iter().map(|r| r.apu).collect(),
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "filter", content = "bucket")]
pub enum PairFilter {
    All,
    Wins,
    Bucket(usize),
}

impl std::str::FromStr for PairFilter {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "all" => return Ok(PairFilter::All),
            "wins" => return Ok(PairFilter::Wins),
            "top" => return Ok(PairFilter::Bucket(0)),
            "bottom" => return Ok(PairFilter::Bucket(3)),
            _ => {}
        }
        if let Some(i) = t.strip_prefix('q').and_then(|d| d.parse::<usize>().ok()) {
            if (1..=4).contains(&i) {
                return Ok(PairFilter::Bucket(i - 1));
            }
        }
        BUCKET_LABELS
            .iter()
            .position(|l| l.eq_ignore_ascii_case(s.trim()))
            .map(PairFilter::Bucket)
            .ok_or_else(|| MetricsError::UnknownBucket(s.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetunePair {
    pub input: String,
    pub output: String,
}

/// One (period summary, decisions) pair per inference of every record passing `filter`.
pub fn export_finetune_pairs(records: &[MatchRecord], filter: PairFilter) -> Result<Vec<FinetunePair>, MetricsError> {
    let keep: Option<BTreeSet<String>> = match filter {
        PairFilter::All => None,
        PairFilter::Wins => Some(records.iter().filter(|r| r.won()).map(|r| r.header.match_id.clone()).collect()),
        PairFilter::Bucket(i) => {
            let reports = records.iter().map(compute).collect::<Result<Vec<_>, _>>()?;
            let bucket = partition_by_apu(&reports)
                .into_iter()
                .nth(i)
                .ok_or_else(|| MetricsError::UnknownBucket(i.to_string()))?;
            Some(bucket.ids.into_iter().collect())
        }
    };
    let mut pairs = Vec::new();
    for r in records {
        if keep.as_ref().is_some_and(|k| !k.contains(&r.header.match_id)) {
            continue;
        }
        let mut inputs: BTreeMap<u64, String> = BTreeMap::new();
        for e in &r.events {
            match e {
                RecordEvent::PeriodSummary { inference, text, .. } => {
                    inputs.insert(*inference, text.clone());
                }
                RecordEvent::ExtractedActions { inference, tokens, .. } => {
                    if let Some(input) = inputs.remove(inference) {
                        let mut output = String::from("Decisions:\n");
                        for (i, t) in tokens.iter().enumerate() {
                            output.push_str(&format!("{i}: <{t}>\n"));
                        }
                        pairs.push(FinetunePair { input, output });
                    }
                }
                _ => {}
            }
        }
    }
    Ok(pairs)
}
