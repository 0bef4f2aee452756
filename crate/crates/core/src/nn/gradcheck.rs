//! Central finite-difference checks of analytic gradients.

use std::ops::Range;

use rand::seq::index::sample;
use serde::Serialize;

use super::rng::RngStream;
use crate::error::{Error, Result};

/// A named slice of a flat parameter vector (one layer's weights, say).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpan {
    pub name: String,
    pub range: Range<usize>,
}

impl ParamSpan {
    pub fn new(name: impl Into<String>, range: Range<usize>) -> Self {
        ParamSpan {
            name: name.into(),
            range,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Maximum relative error accepted.
    pub tolerance: f64,
    /// Base step; the actual step is `step · max(1, |θ|)`.
    pub step: f64,
    /// Denominator floor for the relative error, so that two near-zero
    /// gradients are compared absolutely.
    pub floor: f64,
    /// Check at most this many coordinates per span (sampled with `seed`).
    pub max_per_span: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            tolerance: 1e-4,
            step: 1e-5,
            floor: 1e-6,
            max_per_span: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpanError {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub spans: Vec<SpanError>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against central differences of `loss` around `params`.
///
/// `loss` must be a pure function of the parameter vector; it is evaluated
/// twice at `params` up front and the check aborts if the two values differ.
pub fn finite_diff_check<F>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    spans: &[ParamSpan],
    config: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if params.len() != analytic.len() {
        return Err(Error::shape(format!(
            "{} parameters but {} analytic gradients",
            params.len(),
            analytic.len()
        )));
    }
    let first = loss(params)?;
    let second = loss(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Numeric(format!(
            "non-deterministic forward: {first} vs {second} on identical parameters"
        )));
    }

    let mut rng = RngStream::new(config.seed, "gradcheck");
    let mut theta = params.to_vec();
    let mut out = Vec::with_capacity(spans.len());
    for span in spans {
        if span.range.end > params.len() {
            return Err(Error::shape(format!(
                "span `{}` ends at {} beyond {} parameters",
                span.name,
                span.range.end,
                params.len()
            )));
        }
        let len = span.range.len();
        let picks: Vec<usize> = match config.max_per_span {
            Some(k) if k < len => {
                let mut v: Vec<usize> = sample(&mut rng, len, k).into_iter().collect();
                v.sort_unstable();
                v
            }
            _ => (0..len).collect(),
        };
        let mut worst = 0.0f64;
        let mut worst_index = None;
        for off in picks.iter().copied() {
            let i = span.range.start + off;
            let h = config.step * params[i].abs().max(1.0);
            theta[i] = params[i] + h;
            let plus = loss(&theta)?;
            theta[i] = params[i] - h;
            let minus = loss(&theta)?;
            theta[i] = params[i];
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic[i], numeric, config.floor);
            if !(err <= worst) {
                worst = err;
                worst_index = Some(i);
            }
        }
        out.push(SpanError {
            name: span.name.clone(),
            checked: picks.len(),
            max_rel_error: worst,
            worst_index,
        });
    }
    let max_rel_error = out.iter().map(|s| s.max_rel_error).fold(0.0, f64::max);
    let passed = out.iter().all(|s| s.max_rel_error <= config.tolerance);
    Ok(GradCheckReport {
        spans: out,
        max_rel_error,
        tolerance: config.tolerance,
        passed,
    })
}
