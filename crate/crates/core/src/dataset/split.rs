use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::rng::{streams, RngStream};

/// Per-district train/test row indices, each sorted ascending.
///
/// Each district contributes `round((1 - train_fraction) · size)` test rows,
/// at least one, and always leaves at least one training row.
pub fn stratified_split_indices(
    data: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} not in (0, 1)"
        )));
    }
    let test_fraction = 1.0 - train_fraction;
    let district_of = data.district_indices();
    let mut by_district: Vec<Vec<usize>> = vec![Vec::new(); data.n_districts()];
    for (row, &d) in district_of.iter().enumerate() {
        by_district[d].push(row);
    }
    let mut rng = RngStream::new(seed, streams::SPLIT);
    let mut train = Vec::with_capacity(data.len());
    let mut test = Vec::new();
    for (d, rows) in by_district.iter_mut().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 2 {
            return Err(Error::invalid(format!(
                "district `{}` has {} record(s); stratified splitting needs at least 2",
                data.district_labels()[d],
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        let n_test = ((rows.len() as f64 * test_fraction).round() as usize).clamp(1, rows.len() - 1);
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified-by-district split; both portions keep the full district label list.
pub fn stratified_split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = stratified_split_indices(data, train_fraction, seed)?;
    Ok((data.subset(&train)?, data.subset(&test)?))
}
