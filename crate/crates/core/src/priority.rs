//! Priority scores, rankings and rank-shift diagnostics.
//!
//! `priority = 0.6 · norm(predicted damage) + 0.4 · vulnerability`, with
//! min-max normalization over the ranked set. Rank 1 is the highest priority.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Region};
use crate::error::{Error, Result};

pub const DAMAGE_WEIGHT: f64 = 0.6;
pub const VULNERABILITY_WEIGHT: f64 = 0.4;
/// Poverty rate (%) above which a row counts as high-poverty.
pub const HIGH_POVERTY_THRESHOLD: f64 = 35.0;
pub const TOP_TIER_FRACTION: f64 = 0.2;

pub const RANKING_COLUMNS: [&str; 7] = [
    "upazila_id",
    "district",
    "region",
    "predicted_damage",
    "vulnerability_score",
    "priority_score",
    "rank",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorityEntry {
    pub upazila_id: String,
    pub district: String,
    pub region: Region,
    pub predicted_damage: f64,
    pub vulnerability_score: f64,
    pub priority_score: f64,
    pub rank: usize,
}

/// Identity of a row being ranked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowMeta {
    pub upazila_id: String,
    pub district: String,
    pub region: Region,
}

/// `(v − min) / (max − min)`; constant input maps to all zeros.
pub fn min_max_norm(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("cannot normalize non-finite value {v}")));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values.iter().map(|v| (v - min) / (max - min)).collect())
}

/// Raw priority scores in input order.
pub fn priority_values(predictions: &[f64], vulnerabilities: &[f64]) -> Result<Vec<f64>> {
    if predictions.len() != vulnerabilities.len() {
        return Err(Error::shape(format!(
            "{} predictions vs {} vulnerability scores",
            predictions.len(),
            vulnerabilities.len()
        )));
    }
    if let Some((i, v)) = vulnerabilities
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::invalid(format!("vulnerability {v} at row {i} is outside [0, 1]")));
    }
    let norm = min_max_norm(predictions)?;
    Ok(norm
        .iter()
        .zip(vulnerabilities)
        .map(|(n, v)| DAMAGE_WEIGHT * n + VULNERABILITY_WEIGHT * v)
        .collect())
}

/// Descending score; ties go to higher vulnerability, then the smaller id.
fn priority_order(a: &PriorityEntry, b: &PriorityEntry) -> Ordering {
    b.priority_score
        .total_cmp(&a.priority_score)
        .then(b.vulnerability_score.total_cmp(&a.vulnerability_score))
        .then_with(|| a.upazila_id.cmp(&b.upazila_id))
}

/// Scores and ranks rows; the result is sorted by rank.
pub fn priority_scores(meta: &[RowMeta], predictions: &[f64], vulnerabilities: &[f64]) -> Result<Vec<PriorityEntry>> {
    if meta.len() != predictions.len() {
        return Err(Error::shape(format!("{} rows vs {} predictions", meta.len(), predictions.len())));
    }
    let scores = priority_values(predictions, vulnerabilities)?;
    let mut entries: Vec<PriorityEntry> = meta
        .iter()
        .zip(predictions.iter().zip(vulnerabilities).zip(&scores))
        .map(|(m, ((&p, &v), &s))| PriorityEntry {
            upazila_id: m.upazila_id.clone(),
            district: m.district.clone(),
            region: m.region,
            predicted_damage: p,
            vulnerability_score: v,
            priority_score: s,
            rank: 0,
        })
        .collect();
    entries.sort_by(priority_order);
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(entries)
}

/// Ranks every row of `data`, with vulnerability normalized over `data`.
pub fn rank_dataset(data: &Dataset, predictions: &[f64]) -> Result<Vec<PriorityEntry>> {
    let meta: Vec<RowMeta> = data
        .records()
        .iter()
        .map(|r| RowMeta {
            upazila_id: r.upazila_id.clone(),
            district: r.district.clone(),
            region: r.region,
        })
        .collect();
    priority_scores(&meta, predictions, &data.vulnerability_scores())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson correlation; errors when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::invalid("correlation needs at least 2 values"));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numeric("correlation is undefined for constant input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks in ascending order, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson over average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} vs {} values", x.len(), y.len())));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankShiftReport {
    pub schema_version: u32,
    pub n: usize,
    /// Percent of rows whose rank changed at all.
    pub pct_reranked: f64,
    /// Percent of rows that moved three or more positions.
    pub pct_reranked_3plus: f64,
    pub score_correlation: f64,
    pub rank_correlation: f64,
    /// Mean of `reference rank − candidate rank`; positive means the
    /// candidate gives higher priority.
    pub mean_shift: f64,
    pub haor_mean_shift: Option<f64>,
    pub non_haor_mean_shift: Option<f64>,
    /// Needs poverty rates; `None` without them or without high-poverty rows.
    pub high_poverty_mean_shift: Option<f64>,
    pub top_tier_size: usize,
    pub entered_top_tier: Vec<String>,
    pub left_top_tier: Vec<String>,
}

fn correlation_or_identity(a: &[f64], b: &[f64], f: fn(&[f64], &[f64]) -> Result<f64>) -> Result<f64> {
    if a == b {
        return Ok(1.0);
    }
    f(a, b)
}

fn subgroup_mean(shifts: &[(&str, f64)], keep: impl Fn(&str) -> bool) -> Option<f64> {
    let v: Vec<f64> = shifts.iter().filter(|(id, _)| keep(id)).map(|&(_, s)| s).collect();
    (!v.is_empty()).then(|| mean(&v))
}

/// Compares two rankings of the same rows.
pub fn compare_rankings(reference: &[PriorityEntry], candidate: &[PriorityEntry]) -> Result<RankShiftReport> {
    compare_rankings_with_poverty(reference, candidate, None)
}

/// [`compare_rankings`] plus the high-poverty subgroup shift.
pub fn compare_rankings_with_poverty(
    reference: &[PriorityEntry],
    candidate: &[PriorityEntry],
    poverty: Option<&HashMap<String, f64>>,
) -> Result<RankShiftReport> {
    if reference.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let by_id: HashMap<&str, &PriorityEntry> = candidate.iter().map(|e| (e.upazila_id.as_str(), e)).collect();
    if by_id.len() != candidate.len() || candidate.len() != reference.len() {
        return Err(Error::invalid("rankings cover different upazila id sets"));
    }
    let mut pairs = Vec::with_capacity(reference.len());
    for r in reference {
        let c = by_id
            .get(r.upazila_id.as_str())
            .ok_or_else(|| Error::invalid(format!("upazila `{}` missing from candidate ranking", r.upazila_id)))?;
        pairs.push((r, *c));
    }
    if pairs.iter().map(|(r, _)| r.upazila_id.as_str()).collect::<HashSet<_>>().len() != pairs.len() {
        return Err(Error::invalid("reference ranking repeats an upazila id"));
    }

    let n = pairs.len();
    let shifts: Vec<(&str, f64)> = pairs
        .iter()
        .map(|(r, c)| (r.upazila_id.as_str(), r.rank as f64 - c.rank as f64))
        .collect();
    let moved = |k: f64| 100.0 * shifts.iter().filter(|(_, s)| s.abs() >= k).count() as f64 / n as f64;
    let ref_scores: Vec<f64> = pairs.iter().map(|(r, _)| r.priority_score).collect();
    let cand_scores: Vec<f64> = pairs.iter().map(|(_, c)| c.priority_score).collect();
    let region: HashMap<&str, Region> = pairs.iter().map(|(r, _)| (r.upazila_id.as_str(), r.region)).collect();

    let top = ((TOP_TIER_FRACTION * n as f64).ceil() as usize).min(n);
    let in_top = |entries: Vec<&PriorityEntry>| -> HashSet<String> {
        entries.into_iter().filter(|e| e.rank <= top).map(|e| e.upazila_id.clone()).collect()
    };
    let ref_top = in_top(pairs.iter().map(|(r, _)| *r).collect());
    let cand_top = in_top(pairs.iter().map(|(_, c)| *c).collect());
    let mut entered: Vec<String> = cand_top.difference(&ref_top).cloned().collect();
    let mut left: Vec<String> = ref_top.difference(&cand_top).cloned().collect();
    entered.sort();
    left.sort();

    Ok(RankShiftReport {
        schema_version: 1,
        n,
        pct_reranked: moved(1.0),
        pct_reranked_3plus: moved(3.0),
        score_correlation: correlation_or_identity(&ref_scores, &cand_scores, pearson)?,
        rank_correlation: correlation_or_identity(&ref_scores, &cand_scores, spearman)?,
        mean_shift: mean(&shifts.iter().map(|&(_, s)| s).collect::<Vec<_>>()),
        haor_mean_shift: subgroup_mean(&shifts, |id| region[id] == Region::Haor),
        non_haor_mean_shift: subgroup_mean(&shifts, |id| region[id] == Region::NonHaor),
        high_poverty_mean_shift: poverty.and_then(|p| {
            subgroup_mean(&shifts, |id| p.get(id).is_some_and(|&v| v > HIGH_POVERTY_THRESHOLD))
        }),
        top_tier_size: top,
        entered_top_tier: entered,
        left_top_tier: left,
    })
}

pub fn write_ranking_to<W: Write>(entries: &[PriorityEntry], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RANKING_COLUMNS)?;
    for e in entries {
        w.write_record([
            e.upazila_id.clone(),
            e.district.clone(),
            e.region.as_str().to_string(),
            e.predicted_damage.to_string(),
            e.vulnerability_score.to_string(),
            e.priority_score.to_string(),
            e.rank.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_ranking(entries: &[PriorityEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_ranking_to(entries, f)
}

/// Reads a ranking CSV and checks that ranks form a permutation of 1..N.
pub fn read_ranking<R: Read>(reader: R) -> Result<Vec<PriorityEntry>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RANKING_COLUMNS {
        return Err(Error::invalid(format!(
            "ranking header {header:?} does not match {RANKING_COLUMNS:?}"
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let num = |c: usize| -> Result<f64> {
            rec[c].trim().parse::<f64>().map_err(|e| Error::Field {
                row,
                column: RANKING_COLUMNS[c].into(),
                message: e.to_string(),
            })
        };
        out.push(PriorityEntry {
            upazila_id: rec[0].to_string(),
            district: rec[1].to_string(),
            region: rec[2].parse().map_err(|m: String| Error::Field {
                row,
                column: "region".into(),
                message: m,
            })?,
            predicted_damage: num(3)?,
            vulnerability_score: num(4)?,
            priority_score: num(5)?,
            rank: rec[6].trim().parse().map_err(|e: std::num::ParseIntError| Error::Field {
                row,
                column: "rank".into(),
                message: e.to_string(),
            })?,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut seen = vec![false; out.len()];
    for e in &out {
        if e.rank == 0 || e.rank > out.len() || std::mem::replace(&mut seen[e.rank - 1], true) {
            return Err(Error::invalid(format!("ranks are not a permutation of 1..{}", out.len())));
        }
    }
    Ok(out)
}

pub fn load_ranking(path: impl AsRef<Path>) -> Result<Vec<PriorityEntry>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ranking(f)
}
