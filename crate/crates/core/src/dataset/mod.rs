//! Upazila records, validation, feature engineering, standardization,
//! stratified splitting and synthetic data generation.

mod csv_io;
mod features;
mod split;
mod standardize;
pub mod synthetic;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub use csv_io::{load_csv, read_csv, write_csv, write_csv_to, CSV_COLUMNS};
pub use features::{engineer_features, DerivedMetrics, NormContext, INFRA_EMBANKMENT_SUBSTITUTE};
pub use split::{stratified_split, stratified_split_indices};
pub use standardize::{fit_standardization, StandardizationParams};
pub use synthetic::{generate_synthetic, FeatureSpec, SyntheticConfig, SyntheticDataset, SyntheticManifest};

/// The eleven model inputs, in matrix column order.
pub const FEATURE_NAMES: [&str; 11] = [
    "poverty_rate",
    "pop_density",
    "agri_dependency",
    "housing_quality",
    "flood_depth",
    "flood_duration",
    "dist_to_rivers",
    "elevation",
    "roads_damaged",
    "tubewells_damaged",
    "health_facilities_affected",
];

pub const N_FEATURES: usize = FEATURE_NAMES.len();

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Haor,
    NonHaor,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Haor => "haor",
            Region::NonHaor => "non_haor",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "haor" => Ok(Region::Haor),
            "non_haor" => Ok(Region::NonHaor),
            other => Err(format!("unknown region label `{other}` (expected haor or non_haor)")),
        }
    }
}

/// One upazila: pre-flood vulnerability, flood exposure, recorded damage and
/// the protected attributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpazilaRecord {
    pub upazila_id: String,
    pub district: String,
    pub region: Region,
    /// percent
    pub poverty_rate: f64,
    /// persons per km²
    pub pop_density: f64,
    /// percent
    pub agri_dependency: f64,
    /// index on a 1-5 scale
    pub housing_quality: f64,
    /// meters
    pub flood_depth: f64,
    /// days
    pub flood_duration: f64,
    /// km
    pub dist_to_rivers: f64,
    /// meters
    pub elevation: f64,
    /// km
    pub roads_damaged: f64,
    pub tubewells_damaged: u32,
    pub health_facilities_affected: u32,
    /// USD millions; the regression target
    pub damage_usd_m: f64,
}

impl UpazilaRecord {
    pub fn features(&self) -> [f64; N_FEATURES] {
        [
            self.poverty_rate,
            self.pop_density,
            self.agri_dependency,
            self.housing_quality,
            self.flood_depth,
            self.flood_duration,
            self.dist_to_rivers,
            self.elevation,
            self.roads_damaged,
            f64::from(self.tubewells_damaged),
            f64::from(self.health_facilities_affected),
        ]
    }

    /// Checks field ranges. `row` is the 1-based data row used in messages.
    pub fn validate(&self, row: usize) -> Result<()> {
        let fail = |column: &str, message: String| Error::Field {
            row,
            column: column.to_owned(),
            message,
        };
        if self.upazila_id.trim().is_empty() {
            return Err(fail("upazila_id", "empty identifier".into()));
        }
        if self.district.trim().is_empty() {
            return Err(fail("district", "empty district label".into()));
        }
        let checks: [(&str, f64, f64, f64); 10] = [
            ("poverty_rate", self.poverty_rate, 0.0, 100.0),
            ("pop_density", self.pop_density, 0.0, f64::INFINITY),
            ("agri_dependency", self.agri_dependency, 0.0, 100.0),
            ("housing_quality", self.housing_quality, 1.0, 5.0),
            ("flood_depth", self.flood_depth, 0.0, f64::INFINITY),
            ("flood_duration", self.flood_duration, 0.0, f64::INFINITY),
            ("dist_to_rivers", self.dist_to_rivers, 0.0, f64::INFINITY),
            ("elevation", self.elevation, f64::NEG_INFINITY, f64::INFINITY),
            ("roads_damaged", self.roads_damaged, 0.0, f64::INFINITY),
            ("damage_usd_m", self.damage_usd_m, 0.0, f64::INFINITY),
        ];
        for (column, value, lo, hi) in checks {
            if !value.is_finite() {
                return Err(fail(column, format!("value {value} is not finite")));
            }
            if value < lo || value > hi {
                let range = if hi.is_finite() {
                    format!("outside [{lo}, {hi}]")
                } else {
                    format!("below {lo}")
                };
                return Err(fail(column, format!("value {value} {range}")));
            }
        }
        if self.pop_density <= 0.0 {
            return Err(fail("pop_density", "population density must be positive".into()));
        }
        Ok(())
    }
}

/// A validated, ordered collection of records.
///
/// `district_labels` fixes the class index of each district (its position in
/// the list). Subsets made with [`Dataset::subset`] keep the parent's labels so
/// that class indices stay aligned across train and test portions.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    records: Vec<UpazilaRecord>,
    district_labels: Vec<String>,
    district_regions: Vec<Region>,
    pub standardization: Option<StandardizationParams>,
}

impl Dataset {
    /// Validates `records` and derives district labels in first-appearance order.
    pub fn new(records: Vec<UpazilaRecord>) -> Result<Self> {
        let mut labels: Vec<String> = Vec::new();
        for r in &records {
            if !labels.contains(&r.district) {
                labels.push(r.district.clone());
            }
        }
        Self::with_labels(records, labels)
    }

    /// Validates `records` against an explicit district label list.
    pub fn with_labels(records: Vec<UpazilaRecord>, district_labels: Vec<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let index: HashMap<&str, usize> = district_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        if index.len() != district_labels.len() {
            return Err(Error::invalid("duplicate district label"));
        }
        let mut regions: Vec<Option<Region>> = vec![None; district_labels.len()];
        let mut seen_ids = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            let row = i + 1;
            r.validate(row)?;
            if !seen_ids.insert(r.upazila_id.as_str()) {
                return Err(Error::Field {
                    row,
                    column: "upazila_id".into(),
                    message: format!("duplicate identifier `{}`", r.upazila_id),
                });
            }
            let d = *index.get(r.district.as_str()).ok_or_else(|| Error::Field {
                row,
                column: "district".into(),
                message: format!("unknown district `{}`", r.district),
            })?;
            match regions[d] {
                None => regions[d] = Some(r.region),
                Some(reg) if reg != r.region => {
                    return Err(Error::Field {
                        row,
                        column: "region".into(),
                        message: format!(
                            "district `{}` was {reg} on an earlier row but {} here",
                            r.district, r.region
                        ),
                    })
                }
                Some(_) => {}
            }
        }
        // Labels carried over from a parent may be absent in a subset; their
        // region is unknown here and defaults to non-haor.
        let district_regions = regions
            .into_iter()
            .map(|r| r.unwrap_or(Region::NonHaor))
            .collect();
        Ok(Dataset {
            records,
            district_labels,
            district_regions,
            standardization: None,
        })
    }

    pub fn records(&self) -> &[UpazilaRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_order(&self) -> &'static [&'static str; N_FEATURES] {
        &FEATURE_NAMES
    }

    pub fn district_labels(&self) -> &[String] {
        &self.district_labels
    }

    pub fn n_districts(&self) -> usize {
        self.district_labels.len()
    }

    pub fn district_region(&self, district: usize) -> Region {
        self.district_regions[district]
    }

    pub fn district_index(&self, label: &str) -> Option<usize> {
        self.district_labels.iter().position(|l| l == label)
    }

    /// Class index of every row's district.
    pub fn district_indices(&self) -> Vec<usize> {
        let index: HashMap<&str, usize> = self
            .district_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        self.records
            .iter()
            .map(|r| index[r.district.as_str()])
            .collect()
    }

    pub fn districts(&self) -> Vec<String> {
        self.records.iter().map(|r| r.district.clone()).collect()
    }

    pub fn regions(&self) -> Vec<Region> {
        self.records.iter().map(|r| r.region).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.upazila_id.clone()).collect()
    }

    /// Vulnerability composite per row, normalized over this whole dataset.
    pub fn vulnerability_scores(&self) -> Vec<f64> {
        let ctx = NormContext::from_records(&self.records);
        self.records
            .iter()
            .map(|r| engineer_features(r, &ctx).vulnerability_score)
            .collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.damage_usd_m).collect()
    }

    /// Raw (unstandardized) `N × 11` feature matrix.
    pub fn feature_matrix(&self) -> Matrix {
        let rows: Vec<[f64; N_FEATURES]> = self.records.iter().map(|r| r.features()).collect();
        Matrix::from_rows(&rows).expect("fixed-width rows")
    }

    /// Feature matrix standardized with the attached parameters.
    pub fn standardized_features(&self) -> Result<Matrix> {
        let params = self
            .standardization
            .as_ref()
            .ok_or_else(|| Error::invalid("dataset has no standardization parameters"))?;
        params.transform(&self.feature_matrix())
    }

    /// Rows at `idx` (in that order), keeping this dataset's district labels.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        let records = idx.iter().map(|&i| self.records[i].clone()).collect();
        let mut out = Dataset::with_labels(records, self.district_labels.clone())?;
        out.district_regions = self.district_regions.clone();
        out.standardization = self.standardization.clone();
        Ok(out)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn record(id: &str, district: &str, region: Region, poverty: f64, damage: f64) -> UpazilaRecord {
        UpazilaRecord {
            upazila_id: id.into(),
            district: district.into(),
            region,
            poverty_rate: poverty,
            pop_density: 1000.0,
            agri_dependency: 60.0,
            housing_quality: 2.5,
            flood_depth: 3.0,
            flood_duration: 15.0,
            dist_to_rivers: 2.0,
            elevation: 8.0,
            roads_damaged: 20.0,
            tubewells_damaged: 400,
            health_facilities_affected: 5,
            damage_usd_m: damage,
        }
    }
}
