use serde::{Deserialize, Serialize};

use super::UpazilaRecord;

/// No per-upazila embankment figure exists in the schema; the infrastructure
/// index uses this column in the embankment slot.
pub const INFRA_EMBANKMENT_SUBSTITUTE: &str = "health_facilities_affected";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    fn over(values: impl Iterator<Item = f64>) -> Self {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        MinMax { min, max }
    }

    /// Min-max scaled and clamped to [0, 1]; a degenerate range contributes 0.
    pub fn scale(&self, v: f64) -> f64 {
        if self.max > self.min {
            ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// Per-component min/max used to normalize the composite indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormContext {
    pub poverty_rate: MinMax,
    pub agri_dependency: MinMax,
    pub housing_quality: MinMax,
    /// flood_depth × flood_duration
    pub flood_extent: MinMax,
    pub roads_damaged: MinMax,
    pub tubewells_damaged: MinMax,
    pub health_facilities_affected: MinMax,
}

impl NormContext {
    pub fn from_records(records: &[UpazilaRecord]) -> Self {
        NormContext {
            poverty_rate: MinMax::over(records.iter().map(|r| r.poverty_rate)),
            agri_dependency: MinMax::over(records.iter().map(|r| r.agri_dependency)),
            housing_quality: MinMax::over(records.iter().map(|r| r.housing_quality)),
            flood_extent: MinMax::over(records.iter().map(flood_extent)),
            roads_damaged: MinMax::over(records.iter().map(|r| r.roads_damaged)),
            tubewells_damaged: MinMax::over(records.iter().map(|r| f64::from(r.tubewells_damaged))),
            health_facilities_affected: MinMax::over(
                records.iter().map(|r| f64::from(r.health_facilities_affected)),
            ),
        }
    }
}

/// Flood-extent proxy: depth (m) × duration (days).
pub fn flood_extent(r: &UpazilaRecord) -> f64 {
    r.flood_depth * r.flood_duration
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedMetrics {
    pub vulnerability_score: f64,
    pub infra_damage_index: f64,
}

/// Weighted composites over min-max normalized components:
///
/// * vulnerability = 0.3·poverty + 0.25·agriculture + 0.25·housing + 0.2·extent,
///   with housing inverted (poorer housing is more vulnerable);
/// * infrastructure = 0.4·roads + 0.35·tubewells + 0.25·health facilities.
pub fn engineer_features(record: &UpazilaRecord, ctx: &NormContext) -> DerivedMetrics {
    let poverty = ctx.poverty_rate.scale(record.poverty_rate);
    let agri = ctx.agri_dependency.scale(record.agri_dependency);
    let housing = if ctx.housing_quality.max > ctx.housing_quality.min {
        1.0 - ctx.housing_quality.scale(record.housing_quality)
    } else {
        0.0
    };
    let extent = ctx.flood_extent.scale(flood_extent(record));
    let vulnerability_score = 0.3 * poverty + 0.25 * agri + 0.25 * housing + 0.2 * extent;

    let roads = ctx.roads_damaged.scale(record.roads_damaged);
    let tubewells = ctx.tubewells_damaged.scale(f64::from(record.tubewells_damaged));
    let health = ctx
        .health_facilities_affected
        .scale(f64::from(record.health_facilities_affected));
    let infra_damage_index = 0.4 * roads + 0.35 * tubewells + 0.25 * health;

    DerivedMetrics {
        vulnerability_score: vulnerability_score.clamp(0.0, 1.0),
        infra_damage_index: infra_damage_index.clamp(0.0, 1.0),
    }
}
