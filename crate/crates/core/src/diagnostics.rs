//! Convergence diagnostics, posterior summaries and slice-fit comparisons.

use serde::{Deserialize, Serialize};

pub use crate::density::{GevFit, UniformFit};
use crate::density::{mean, quantile_sorted, DensityKind};
use crate::ensemble::{measurements_from_parameters, MeasurementSet};
use crate::error::{Error, Result};
use crate::likelihood::{fit_slice, slice, AmplitudeGrid, LikelihoodModel, SliceDensity};
use crate::params::ParameterVector;
use crate::sampler::{Chain, PriorSpec};

pub const MIN_RHAT_LENGTH: usize = 10;
pub const MIN_SUMMARY_SAMPLES: usize = 100;
/// Posterior-predictive ensemble size.
pub const PREDICTIVE_DRAWS: usize = 100;

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Potential scale reduction factor of equal-length sequences:
/// `√(((n−1)/n·W + B/n) / W)`.
pub fn rhat(sequences: &[Vec<f64>]) -> Result<f64> {
    if sequences.len() < 2 {
        return Err(Error::Config(format!(
            "R-hat needs at least 2 chains, got {}",
            sequences.len()
        )));
    }
    let n = sequences[0].len();
    if sequences.iter().any(|s| s.len() != n) {
        return Err(Error::Config("R-hat needs chains of equal length".into()));
    }
    if n < MIN_RHAT_LENGTH {
        return Err(Error::Config(format!(
            "R-hat needs at least {MIN_RHAT_LENGTH} samples per chain, got {n}"
        )));
    }
    let w = sequences.iter().map(|s| variance(s)).sum::<f64>() / sequences.len() as f64;
    if !(w > 0.0) {
        return Err(Error::Degenerate(
            "every chain is constant; within-chain variance is zero".into(),
        ));
    }
    let means: Vec<f64> = sequences.iter().map(|s| mean(s)).collect();
    let b_over_n = variance(&means);
    let nf = n as f64;
    Ok((((nf - 1.0) / nf * w + b_over_n) / w).sqrt())
}

/// Post-burn-in column `j` of each chain, checking the parameter names agree.
fn columns(chains: &[Chain], j: usize) -> Result<Vec<Vec<f64>>> {
    check_names(chains)?;
    Ok(chains.iter().map(|c| c.column(j)).collect())
}

fn check_names(chains: &[Chain]) -> Result<()> {
    let first = chains
        .first()
        .ok_or_else(|| Error::Config("no chains given".into()))?;
    if let Some((i, c)) = chains.iter().enumerate().find(|(_, c)| c.names != first.names) {
        return Err(Error::Config(format!(
            "chain {i} has parameters {:?}, expected {:?}",
            c.names, first.names
        )));
    }
    Ok(())
}

/// Basic Gelman-Rubin R̂ of parameter `j` over post-burn-in samples.
pub fn gelman_rubin(chains: &[Chain], j: usize) -> Result<f64> {
    rhat(&columns(chains, j)?)
}

/// Split-R̂: each chain's post-burn-in half is treated as its own sequence.
pub fn split_gelman_rubin(chains: &[Chain], j: usize) -> Result<f64> {
    let halves: Vec<Vec<f64>> = columns(chains, j)?
        .into_iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [c[..h].to_vec(), c[c.len() - h..].to_vec()]
        })
        .collect();
    rhat(&halves)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub confidence: f64,
    pub samples: usize,
    pub parameters: Vec<ParameterSummary>,
}

impl SummaryStats {
    pub fn get(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// Mean, sample sd and equal-tailed percentile interval of one sample.
pub fn summarize_values(name: &str, values: &[f64], confidence: f64) -> Result<ParameterSummary> {
    if values.len() < MIN_SUMMARY_SAMPLES {
        return Err(Error::Config(format!(
            "summaries need at least {MIN_SUMMARY_SAMPLES} samples, got {}",
            values.len()
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Config("confidence must lie in (0, 1)".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - confidence);
    let m = mean(&sorted);
    let s = ParameterSummary {
        name: name.to_string(),
        mean: m,
        sd: variance(&sorted).sqrt(),
        ci_low: quantile_sorted(&sorted, tail),
        ci_high: quantile_sorted(&sorted, 1.0 - tail),
    };
    debug_assert!(s.ci_low <= s.mean && s.mean <= s.ci_high, "{s:?}");
    Ok(s)
}

/// Per-parameter summary pooled over the post-burn-in rows of all chains.
pub fn summarize(chains: &[Chain], confidence: f64) -> Result<SummaryStats> {
    check_names(chains)?;
    let names = &chains[0].names;
    let parameters = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let pooled: Vec<f64> = chains.iter().flat_map(|c| c.column(j)).collect();
            summarize_values(name, &pooled, confidence)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SummaryStats {
        confidence,
        samples: chains.iter().map(|c| c.kept().len()).sum(),
        parameters,
    })
}

/// `count` rows taken at a fixed stride from the pooled post-burn-in rows.
pub fn thinned_draws(chains: &[Chain], count: usize) -> Result<Vec<Vec<f64>>> {
    check_names(chains)?;
    let pooled: Vec<&Vec<f64>> = chains.iter().flat_map(|c| c.kept()).collect();
    if count == 0 || pooled.len() < count {
        return Err(Error::Config(format!(
            "cannot thin {} rows to {count} draws",
            pooled.len()
        )));
    }
    let stride = pooled.len() / count;
    Ok((0..count).map(|i| pooled[i * stride].clone()).collect())
}

/// Backbone curves simulated at posterior draws, with the measurement
/// extraction settings stored in `model`.
pub fn posterior_predictive(
    model: &LikelihoodModel,
    names: &[String],
    draws: &[Vec<f64>],
) -> Result<MeasurementSet> {
    let vectors = draws
        .iter()
        .map(|row| {
            let mut pv = ParameterVector::new();
            for (name, &v) in names.iter().zip(row) {
                let unit = model
                    .model
                    .kind
                    .descriptor(name)
                    .map(|d| d.unit)
                    .unwrap_or("");
                pv.push(name, v, unit)?;
            }
            Ok(pv)
        })
        .collect::<Result<Vec<_>>>()?;
    measurements_from_parameters(&model.model, vectors, &model.initial, &model.extraction)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceComparison {
    pub level: f64,
    pub measured: SliceDensity,
    pub predicted: SliceDensity,
}

/// Fits `kind` at every level to both sets.
pub fn compare_slices(
    measured: &MeasurementSet,
    predicted: &MeasurementSet,
    grid: &AmplitudeGrid,
    kind: DensityKind,
) -> Result<Vec<SliceComparison>> {
    let a = slice(measured, grid)?;
    let b = slice(predicted, grid)?;
    grid.levels()
        .iter()
        .zip(a.iter().zip(&b))
        .map(|(&level, (fa, fb))| {
            Ok(SliceComparison {
                level,
                measured: fit_slice(level, fa, kind)?,
                predicted: fit_slice(level, fb, kind)?,
            })
        })
        .collect()
}

/// Width of the band at each prior edge inspected for piled-up mass.
pub const BOUNDARY_BAND: f64 = 0.05;
/// Mass in one edge band above which a warning is raised (four times the
/// share a flat posterior would put there).
pub const BOUNDARY_MASS: f64 = 0.2;

/// Warnings for parameters whose posterior mass crowds a prior bound.
pub fn boundary_warnings(chains: &[Chain], prior: &PriorSpec) -> Result<Vec<String>> {
    check_names(chains)?;
    let mut out = Vec::new();
    for b in prior.bounds() {
        let Some(j) = chains[0].index_of(&b.name) else {
            continue;
        };
        let pooled: Vec<f64> = chains.iter().flat_map(|c| c.column(j)).collect();
        if pooled.is_empty() {
            continue;
        }
        let n = pooled.len() as f64;
        let band = BOUNDARY_BAND * b.width();
        let low = pooled.iter().filter(|&&v| v <= b.lower + band).count() as f64 / n;
        let high = pooled.iter().filter(|&&v| v >= b.upper - band).count() as f64 / n;
        for (edge, value, mass) in [("lower", b.lower, low), ("upper", b.upper, high)] {
            if mass > BOUNDARY_MASS {
                out.push(format!(
                    "{:.0}% of the `{}` posterior lies within {:.0}% of its {edge} prior bound {value}; \
                     the prior may exclude the supported region",
                    100.0 * mass,
                    b.name,
                    100.0 * BOUNDARY_BAND
                ));
            }
        }
    }
    Ok(out)
}
