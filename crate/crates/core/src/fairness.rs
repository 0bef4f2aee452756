//! Performance and group-fairness metrics.
//!
//! Group metrics take one group key per row. Group means and MAEs accumulate
//! in row order; variances are population variances over groups.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Region;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub spd: f64,
    pub prediction_variance: f64,
    pub regional_gap: f64,
    pub equal_opportunity: f64,
    pub mae_std_across_districts: f64,
    pub haor_mae: Option<f64>,
    pub non_haor_mae: Option<f64>,
    pub district_mae: BTreeMap<String, f64>,
    pub district_mean_prediction: BTreeMap<String, f64>,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == 0 || b == 0 {
        return Err(Error::EmptyDataset);
    }
    if a != b {
        return Err(Error::shape(format!("{a} values vs {b}")));
    }
    Ok(())
}

pub fn performance_metrics(actual: &[f64], predicted: &[f64]) -> Result<PerformanceReport> {
    check_lengths(actual.len(), predicted.len())?;
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    let (mut ss_res, mut abs, mut ss_tot) = (0.0, 0.0, 0.0);
    for (a, p) in actual.iter().zip(predicted) {
        ss_res += (a - p) * (a - p);
        abs += (a - p).abs();
        ss_tot += (a - mean) * (a - mean);
    }
    if ss_tot == 0.0 {
        return Err(Error::Numeric("R² is undefined for constant actual values".into()));
    }
    let mse = ss_res / n;
    Ok(PerformanceReport {
        mse,
        mae: abs / n,
        rmse: mse.sqrt(),
        r2: 1.0 - ss_res / ss_tot,
    })
}

/// Mean of `values` per group, keyed by group.
pub fn group_means<G: Ord + Clone>(values: &[f64], groups: &[G]) -> Result<BTreeMap<G, f64>> {
    check_lengths(values.len(), groups.len())?;
    let mut acc: BTreeMap<G, (f64, usize)> = BTreeMap::new();
    for (v, g) in values.iter().zip(groups) {
        let e = acc.entry(g.clone()).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    Ok(acc.into_iter().map(|(g, (s, c))| (g, s / c as f64)).collect())
}

/// Mean absolute error per group.
pub fn group_maes<G: Ord + Clone>(actual: &[f64], predicted: &[f64], groups: &[G]) -> Result<BTreeMap<G, f64>> {
    check_lengths(actual.len(), predicted.len())?;
    let errors: Vec<f64> = actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).collect();
    group_means(&errors, groups)
}

fn spread(values: impl Iterator<Item = f64>, what: &str) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.len() < 2 {
        log::warn!("{what}: only one group present, reporting 0");
        return 0.0;
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Largest gap between group mean predictions.
pub fn statistical_parity_difference<G: Ord + Clone>(predicted: &[f64], groups: &[G]) -> Result<f64> {
    Ok(spread(group_means(predicted, groups)?.into_values(), "statistical parity difference"))
}

/// Population variance of the group mean predictions.
pub fn prediction_variance<G: Ord + Clone>(predicted: &[f64], groups: &[G]) -> Result<f64> {
    let means: Vec<f64> = group_means(predicted, groups)?.into_values().collect();
    if means.len() < 2 {
        log::warn!("prediction variance: only one group present, reporting 0");
    }
    Ok(population_variance(&means))
}

/// `|MAE_haor − MAE_non_haor|`.
pub fn regional_fairness_gap(actual: &[f64], predicted: &[f64], regions: &[Region]) -> Result<f64> {
    let maes = group_maes(actual, predicted, regions)?;
    match (maes.get(&Region::Haor), maes.get(&Region::NonHaor)) {
        (Some(h), Some(n)) => Ok((h - n).abs()),
        _ => Err(Error::invalid("regional gap needs both haor and non-haor rows")),
    }
}

/// Largest gap between group MAEs.
pub fn equal_opportunity<G: Ord + Clone>(actual: &[f64], predicted: &[f64], groups: &[G]) -> Result<f64> {
    Ok(spread(group_maes(actual, predicted, groups)?.into_values(), "equal opportunity"))
}

/// Population standard deviation of group MAEs.
pub fn mae_std_across_groups<G: Ord + Clone>(actual: &[f64], predicted: &[f64], groups: &[G]) -> Result<f64> {
    let maes: Vec<f64> = group_maes(actual, predicted, groups)?.into_values().collect();
    Ok(population_variance(&maes).sqrt())
}

/// `100 · (baseline − fair) / baseline`; negative when the fair value is larger.
pub fn improvement_pct(fair: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0) || !fair.is_finite() {
        return Err(Error::invalid(format!(
            "improvement needs a positive baseline (got {baseline}) and finite fair value"
        )));
    }
    Ok(100.0 * (baseline - fair) / baseline)
}

/// All group metrics with districts as the protected groups. The regional
/// gap is 0 (with a warning) when only one region is present.
pub fn fairness_report(
    actual: &[f64],
    predicted: &[f64],
    districts: &[String],
    regions: &[Region],
) -> Result<FairnessReport> {
    check_lengths(actual.len(), predicted.len())?;
    check_lengths(actual.len(), districts.len())?;
    check_lengths(actual.len(), regions.len())?;
    let region_mae = group_maes(actual, predicted, regions)?;
    let haor_mae = region_mae.get(&Region::Haor).copied();
    let non_haor_mae = region_mae.get(&Region::NonHaor).copied();
    let regional_gap = match (haor_mae, non_haor_mae) {
        (Some(h), Some(n)) => (h - n).abs(),
        _ => {
            log::warn!("regional gap: only one region present, reporting 0");
            0.0
        }
    };
    Ok(FairnessReport {
        spd: statistical_parity_difference(predicted, districts)?,
        prediction_variance: prediction_variance(predicted, districts)?,
        regional_gap,
        equal_opportunity: equal_opportunity(actual, predicted, districts)?,
        mae_std_across_districts: mae_std_across_groups(actual, predicted, districts)?,
        haor_mae,
        non_haor_mae,
        district_mae: group_maes(actual, predicted, districts)?,
        district_mean_prediction: group_means(predicted, districts)?,
    })
}

/// Per-metric improvement of `fair` over `baseline` (metrics where the
/// baseline is 0 are omitted).
pub fn improvement_table(fair: &FairnessReport, baseline: &FairnessReport) -> BTreeMap<String, f64> {
    [
        ("spd", fair.spd, baseline.spd),
        ("prediction_variance", fair.prediction_variance, baseline.prediction_variance),
        ("regional_gap", fair.regional_gap, baseline.regional_gap),
        ("equal_opportunity", fair.equal_opportunity, baseline.equal_opportunity),
        (
            "mae_std_across_districts",
            fair.mae_std_across_districts,
            baseline.mae_std_across_districts,
        ),
    ]
    .into_iter()
    .filter_map(|(k, f, b)| improvement_pct(f, b).ok().map(|v| (k.to_string(), v)))
    .collect()
}
