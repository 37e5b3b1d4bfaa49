//! Amplitude-sliced likelihood built from an ensemble of backbone curves.
//!
//! The ensemble is cut at a handful of amplitude levels. At each level the
//! backbone frequencies of all curves form a sample to which a density is
//! fitted. A candidate parameter vector is scored by simulating its backbone
//! and summing the log densities of its frequencies at the same levels.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::{extract_backbone, BackboneCurve};
use crate::density::{Density, DensityKind};
use crate::dynamics::{simulate_decay, ModelSpec, State};
use crate::ensemble::{ExtractionSettings, MeasurementSet};
use crate::error::{Error, Result};
use crate::io;
use crate::params::ParameterVector;

/// Default grid: fractions of the common amplitude support.
pub const DEFAULT_GRID_FRACTIONS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

/// Candidate decays are cut off at the first maximum below this fraction of
/// the lowest grid level.
pub const CANDIDATE_STOP_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeGrid {
    levels: Vec<f64>,
}

impl AmplitudeGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::Config(format!(
                "an amplitude grid needs at least 2 levels, got {}",
                levels.len()
            )));
        }
        if levels.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::Config("grid levels must be positive and finite".into()));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid levels must be strictly increasing".into()));
        }
        Ok(AmplitudeGrid { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// How grid levels are chosen when a likelihood is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpec {
    /// Fractions in (0, 1) of the common amplitude support `[lo, hi]`.
    Quantiles(Vec<f64>),
    /// Amplitudes in metres.
    Explicit(Vec<f64>),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Quantiles(DEFAULT_GRID_FRACTIONS.to_vec())
    }
}

impl GridSpec {
    pub fn resolve(&self, curves: &[BackboneCurve]) -> Result<AmplitudeGrid> {
        match self {
            GridSpec::Explicit(levels) => AmplitudeGrid::new(levels.clone()),
            GridSpec::Quantiles(fractions) => {
                if fractions.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
                    return Err(Error::Config(
                        "grid fractions must lie strictly between 0 and 1".into(),
                    ));
                }
                let (lo, hi) = common_support(curves)?;
                AmplitudeGrid::new(fractions.iter().map(|q| lo + q * (hi - lo)).collect())
            }
        }
    }
}

/// Amplitude interval covered by every curve: `(max of minima, min of maxima)`.
pub fn common_support(curves: &[BackboneCurve]) -> Result<(f64, f64)> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (i, c) in curves.iter().enumerate() {
        let (a, b) = c
            .amplitude_range()
            .ok_or_else(|| Error::Degenerate(format!("curve {i} is empty")))?;
        lo = lo.max(a);
        hi = hi.min(b);
    }
    if curves.is_empty() || !(lo < hi) {
        return Err(Error::GridCoverage { level: lo, count: 0 });
    }
    Ok((lo, hi))
}

/// Frequencies of every curve at every level; curves out of range at a level
/// are skipped. Each level keeps its samples sorted.
pub fn slice(set: &MeasurementSet, grid: &AmplitudeGrid) -> Result<Vec<Vec<f64>>> {
    grid.levels()
        .iter()
        .map(|&level| {
            let mut f: Vec<f64> = set
                .curves
                .iter()
                .filter_map(|c| c.frequency_at(level))
                .collect();
            if f.len() < 2 {
                return Err(Error::GridCoverage {
                    level,
                    count: f.len(),
                });
            }
            f.sort_by(f64::total_cmp);
            Ok(f)
        })
        .collect()
}

/// Density fitted to the frequencies of one amplitude slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDensity {
    pub level: f64,
    pub density: Density,
    /// `(f_min, f_max)` in Hz.
    pub support: (f64, f64),
}

impl SliceDensity {
    pub fn kind(&self) -> DensityKind {
        self.density.kind()
    }

    pub fn ln_pdf(&self, f: f64) -> f64 {
        self.density.ln_pdf(f)
    }
}

pub fn fit_slice(level: f64, frequencies: &[f64], kind: DensityKind) -> Result<SliceDensity> {
    let mut sorted = frequencies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let density = Density::fit(&sorted, kind).map_err(|e| match e {
        Error::Fit(msg) => Error::Fit(format!("slice at {level:.4e} m: {msg}")),
        other => other,
    })?;
    let support = density.support();
    Ok(SliceDensity {
        level,
        density,
        support,
    })
}

/// Immutable likelihood: grid, slice densities and everything needed to
/// simulate a candidate backbone the same way the measurements were made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodModel {
    pub grid: AmplitudeGrid,
    pub densities: Vec<SliceDensity>,
    pub model: ModelSpec,
    pub initial: State,
    pub extraction: ExtractionSettings,
}

impl LikelihoodModel {
    pub fn build(
        set: &MeasurementSet,
        grid: &GridSpec,
        kind: DensityKind,
        model: ModelSpec,
        initial: State,
        extraction: ExtractionSettings,
    ) -> Result<Self> {
        if set.curves.len() < 2 {
            return Err(Error::Config(format!(
                "a likelihood needs at least 2 measured curves, got {}",
                set.curves.len()
            )));
        }
        model.validate()?;
        let grid = grid.resolve(&set.curves)?;
        let slices = slice(set, &grid)?;
        let densities = grid
            .levels()
            .iter()
            .zip(&slices)
            .map(|(&level, f)| fit_slice(level, f, kind))
            .collect::<Result<Vec<_>>>()?;
        Ok(LikelihoodModel {
            grid,
            densities,
            model,
            initial,
            extraction,
        })
    }

    pub fn kind(&self) -> DensityKind {
        self.densities[0].kind()
    }

    /// Backbone of the model at `theta`, simulated only down to the amplitudes
    /// the grid needs.
    pub fn candidate_backbone(&self, theta: &ParameterVector) -> Result<BackboneCurve> {
        let spec = self
            .model
            .with_values(theta.iter().map(|p| (p.name.as_str(), p.value)))?;
        self.backbone_of(&spec)
    }

    fn backbone_of(&self, spec: &ModelSpec) -> Result<BackboneCurve> {
        let stop = CANDIDATE_STOP_FRACTION * self.grid.levels()[0];
        let ts = simulate_decay(spec, &self.initial, &self.extraction.decay, Some(stop))?;
        let mut curve = extract_backbone(&ts, 0.5 * stop)?;
        curve.source = Some(spec.clone());
        Ok(curve)
    }

    /// Candidate backbone frequencies at each grid level; `None` where the
    /// candidate does not reach a level.
    pub fn candidate_frequencies(&self, theta: &ParameterVector) -> Result<Vec<Option<f64>>> {
        let curve = self.candidate_backbone(theta)?;
        Ok(self
            .grid
            .levels()
            .iter()
            .map(|&a| curve.frequency_at(a))
            .collect())
    }

    /// `Σ_j ln p̂_j(f_j(θ))`; `−∞` when the candidate cannot be simulated or
    /// misses a level.
    pub fn log_likelihood(&self, theta: &ParameterVector) -> f64 {
        match self.candidate_frequencies(theta) {
            Ok(freqs) => self.score(&freqs),
            Err(e) => {
                log::debug!("candidate rejected: {e}");
                f64::NEG_INFINITY
            }
        }
    }

    /// Same as [`log_likelihood`](Self::log_likelihood) with values given
    /// positionally for `names`.
    pub fn log_likelihood_at(&self, names: &[String], values: &[f64]) -> f64 {
        let spec = match self
            .model
            .with_values(names.iter().map(String::as_str).zip(values.iter().copied()))
        {
            Ok(s) => s,
            Err(e) => {
                log::debug!("candidate rejected: {e}");
                return f64::NEG_INFINITY;
            }
        };
        match self.backbone_of(&spec) {
            Ok(curve) => {
                let freqs: Vec<Option<f64>> = self
                    .grid
                    .levels()
                    .iter()
                    .map(|&a| curve.frequency_at(a))
                    .collect();
                self.score(&freqs)
            }
            Err(e) => {
                log::debug!("candidate rejected: {e}");
                f64::NEG_INFINITY
            }
        }
    }

    /// Joint log density of one frequency per level.
    pub fn score(&self, freqs: &[Option<f64>]) -> f64 {
        let mut total = 0.0;
        for (d, f) in self.densities.iter().zip(freqs) {
            match f {
                Some(f) => total += d.ln_pdf(*f),
                None => return f64::NEG_INFINITY,
            }
        }
        total
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: LikelihoodModel = io::read_json(path)?;
        if model.densities.len() != model.grid.len() {
            return Err(Error::parse(
                path,
                format!(
                    "{} densities for {} grid levels",
                    model.densities.len(),
                    model.grid.len()
                ),
            ));
        }
        AmplitudeGrid::new(model.grid.levels.clone())
            .map_err(|e| Error::parse(path, e.to_string()))?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ModelKind;
    use crate::ensemble::{generate_measurements, Bounds, Provenance, TrueDistribution};
    use approx::assert_relative_eq;

    fn flat_curve(f: f64) -> BackboneCurve {
        BackboneCurve::from_pairs(&[(0.02, f), (0.015, f), (0.01, f), (0.005, f)]).unwrap()
    }

    fn injected(curves: Vec<BackboneCurve>) -> MeasurementSet {
        MeasurementSet {
            curves,
            draws: Vec::new(),
            provenance: Provenance::Injected,
        }
    }

    fn case1_template() -> ModelSpec {
        ModelSpec::from_values(
            ModelKind::CubicStiffness,
            &[("m", 1.0), ("k1", 6500.0), ("k2", 6.25e6), ("c1", 1.1)],
        )
        .unwrap()
    }

    fn case1_set(count: usize, seed: u64) -> MeasurementSet {
        let dist = TrueDistribution::new(vec![
            Bounds::new("k1", 6000.0, 7000.0),
            Bounds::new("k2", 6.0e6, 6.5e6),
            Bounds::new("c1", 0.2, 2.0),
        ])
        .unwrap();
        generate_measurements(
            &case1_template(),
            &dist,
            count,
            &State::new(0.02, 0.0),
            &ExtractionSettings::default(),
            seed,
        )
        .unwrap()
    }

    fn theta(pairs: &[(&str, f64)]) -> ParameterVector {
        let mut pv = ParameterVector::new();
        for &(n, v) in pairs {
            pv.push(n, v, "").unwrap();
        }
        pv
    }

    #[test]
    fn grid_validation() {
        assert!(AmplitudeGrid::new(vec![0.01]).is_err());
        assert!(AmplitudeGrid::new(vec![0.02, 0.01]).is_err());
        assert!(AmplitudeGrid::new(vec![0.01, 0.01]).is_err());
        assert!(AmplitudeGrid::new(vec![0.01, 0.02]).is_ok());
    }

    #[test]
    fn quantile_grid_spans_common_support() {
        let a = BackboneCurve::from_pairs(&[(0.02, 13.0), (0.002, 12.8)]).unwrap();
        let b = BackboneCurve::from_pairs(&[(0.015, 13.0), (0.004, 12.8)]).unwrap();
        assert_eq!(common_support(&[a.clone(), b.clone()]).unwrap(), (0.004, 0.015));
        let grid = GridSpec::default().resolve(&[a, b]).unwrap();
        let expect = [0.0062, 0.0084, 0.0106, 0.0128];
        for (l, e) in grid.levels().iter().zip(expect) {
            assert_relative_eq!(*l, e, max_relative = 1e-12);
        }
    }

    #[test]
    fn identical_curves_slice_identically() {
        let set = injected(vec![flat_curve(7.0), flat_curve(7.0)]);
        let grid = AmplitudeGrid::new(vec![0.008, 0.012, 0.016]).unwrap();
        for level in slice(&set, &grid).unwrap() {
            assert_eq!(level, vec![7.0, 7.0]);
        }
    }

    #[test]
    fn level_above_support_is_coverage_error() {
        let set = injected(vec![flat_curve(7.0), flat_curve(7.5)]);
        let grid = AmplitudeGrid::new(vec![0.01, 0.05]).unwrap();
        assert!(matches!(
            slice(&set, &grid),
            Err(Error::GridCoverage { count: 0, .. })
        ));
    }

    #[test]
    fn uniform_score_algebra() {
        let set = injected(vec![flat_curve(6.4), flat_curve(8.0), flat_curve(7.0)]);
        let grid = GridSpec::Explicit(vec![0.008, 0.012, 0.016]);
        let model = LikelihoodModel::build(
            &set,
            &grid,
            DensityKind::Uniform,
            case1_template(),
            State::new(0.02, 0.0),
            ExtractionSettings::default(),
        )
        .unwrap();
        let inside = model.score(&[Some(7.1), Some(6.5), Some(7.9)]);
        assert_relative_eq!(inside, -3.0 * 1.6f64.ln(), max_relative = 1e-12);
        assert!((inside - -1.4100).abs() < 1e-4);
        assert_eq!(model.score(&[Some(7.1), Some(8.2), Some(7.9)]), f64::NEG_INFINITY);
        assert_eq!(model.score(&[Some(7.1), None, Some(7.9)]), f64::NEG_INFINITY);
    }

    #[test]
    fn central_candidate_beats_prior_corner() {
        let set = case1_set(20, 11);
        let model = LikelihoodModel::build(
            &set,
            &GridSpec::default(),
            DensityKind::Kde,
            case1_template(),
            State::new(0.02, 0.0),
            ExtractionSettings::default(),
        )
        .unwrap();
        let central = model.log_likelihood(&theta(&[("k1", 6500.0), ("k2", 6.25e6), ("c1", 1.1)]));
        let corner = model.log_likelihood(&theta(&[("k1", 7700.0), ("k2", 6.7e6), ("c1", 2.9)]));
        assert!(central.is_finite());
        assert!(central >= corner, "{central} vs {corner}");
        let again = model.log_likelihood(&theta(&[("k1", 6500.0), ("k2", 6.25e6), ("c1", 1.1)]));
        assert_eq!(central.to_bits(), again.to_bits());
        let positional = model.log_likelihood_at(
            &["k1".into(), "k2".into(), "c1".into()],
            &[6500.0, 6.25e6, 1.1],
        );
        assert_eq!(central.to_bits(), positional.to_bits());
    }

    #[test]
    fn infeasible_candidates_score_minus_infinity() {
        let set = case1_set(6, 3);
        let model = LikelihoodModel::build(
            &set,
            &GridSpec::default(),
            DensityKind::Kde,
            case1_template(),
            State::new(0.02, 0.0),
            ExtractionSettings::default(),
        )
        .unwrap();
        let negative = theta(&[("k1", -10.0), ("k2", 6.25e6), ("c1", 1.1)]);
        assert_eq!(model.log_likelihood(&negative), f64::NEG_INFINITY);
        let unknown = theta(&[("k9", 1.0)]);
        assert_eq!(model.log_likelihood(&unknown), f64::NEG_INFINITY);
    }

    #[test]
    fn permuting_curves_changes_nothing() {
        let set = case1_set(12, 5);
        let mut rev = set.clone();
        rev.curves.reverse();
        let args = |s: &MeasurementSet| {
            LikelihoodModel::build(
                s,
                &GridSpec::default(),
                DensityKind::Kde,
                case1_template(),
                State::new(0.02, 0.0),
                ExtractionSettings::default(),
            )
            .unwrap()
        };
        let (a, b) = (args(&set), args(&rev));
        assert_eq!(a, b);
        let t = theta(&[("k1", 6400.0), ("k2", 6.3e6), ("c1", 0.9)]);
        assert_eq!(a.log_likelihood(&t).to_bits(), b.log_likelihood(&t).to_bits());
    }

    #[test]
    fn model_serializes_round_trip() {
        let set = case1_set(8, 9);
        let model = LikelihoodModel::build(
            &set,
            &GridSpec::default(),
            DensityKind::Kde,
            case1_template(),
            State::new(0.02, 0.0),
            ExtractionSettings::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("likelihood.json");
        model.save(&path).unwrap();
        let back = LikelihoodModel::load(&path).unwrap();
        assert_eq!(back, model);
    }
}
