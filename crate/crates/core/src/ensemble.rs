//! Measurement ensembles: sets of backbone curves, either simulated from a
//! uniform "true" parameter distribution or loaded from disk.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbone::{extract_backbone, AmplitudeFloor, BackboneCurve};
use crate::dynamics::{simulate_decay, DecaySettings, ModelSpec, State};
use crate::error::{Error, Result};
use crate::io;
use crate::params::ParameterVector;

/// Closed interval `[lower, upper]` for one named parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn new(name: &str, lower: f64, upper: f64) -> Self {
        Bounds {
            name: name.to_string(),
            lower,
            upper,
        }
    }

    /// Uniform bounds with the given mean and standard deviation.
    pub fn from_moments(name: &str, mean: f64, sd: f64) -> Self {
        let (lower, upper) = uniform_bounds_from_moments(mean, sd);
        Bounds::new(name, lower, upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }

    /// Mean and standard deviation of the uniform distribution on the bounds.
    pub fn moments(&self) -> (f64, f64) {
        (self.midpoint(), self.width() / 12f64.sqrt())
    }
}

/// Inverts the uniform moment formulas: half-width `sd·√3` around `mean`.
pub fn uniform_bounds_from_moments(mean: f64, sd: f64) -> (f64, f64) {
    let half = sd * 3f64.sqrt();
    (mean - half, mean + half)
}

/// Independent uniform distributions over the varied parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueDistribution {
    pub bounds: Vec<Bounds>,
}

impl TrueDistribution {
    pub fn new(bounds: Vec<Bounds>) -> Result<Self> {
        let d = TrueDistribution { bounds };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, b) in self.bounds.iter().enumerate() {
            if !(b.lower.is_finite() && b.upper.is_finite()) || b.lower > b.upper {
                return Err(Error::Config(format!(
                    "true distribution of `{}` needs finite lower <= upper",
                    b.name
                )));
            }
            if self.bounds[..i].iter().any(|o| o.name == b.name) {
                return Err(Error::Config(format!("`{}` listed twice", b.name)));
            }
        }
        Ok(())
    }

    /// Draws `count` parameter vectors, one uniform variate per varied
    /// parameter in declaration order.
    pub fn draw(&self, count: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                self.bounds
                    .iter()
                    .map(|b| b.lower + rng.random::<f64>() * b.width())
                    .collect()
            })
            .collect()
    }
}

/// Settings shared by every backbone extraction from a simulated decay.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtractionSettings {
    pub decay: DecaySettings,
    pub floor: AmplitudeFloor,
}

/// Integrates a free decay and extracts its backbone curve.
///
/// With the automatic floor the decay is cut off once maxima drop below half
/// the floor implied by the initial amplitude, which cannot remove any maxima
/// the extraction would keep.
pub fn simulate_backbone(
    spec: &ModelSpec,
    ic: &State,
    settings: &ExtractionSettings,
) -> Result<BackboneCurve> {
    let stop = match settings.floor {
        AmplitudeFloor::Absolute(a) => a,
        AmplitudeFloor::Auto => {
            let omega = 2.0 * std::f64::consts::PI / spec.linear_period()?;
            let amplitude = ic.x.hypot(ic.v / omega);
            0.5 * settings.floor.for_initial_amplitude(amplitude)
        }
    };
    let ts = simulate_decay(spec, ic, &settings.decay, Some(stop))?;
    let floor = settings.floor.resolve(&ts);
    let mut curve = extract_backbone(&ts, floor)?;
    curve.source = Some(spec.clone());
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic {
        distribution: TrueDistribution,
        seed: u64,
    },
    /// Simulated at explicitly listed parameter vectors.
    Injected,
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub curves: Vec<BackboneCurve>,
    /// Generating parameters per curve; empty for sets loaded from plain CSVs.
    pub draws: Vec<ParameterVector>,
    pub provenance: Provenance,
}

/// Simulates one backbone per parameter vector. Members run in parallel;
/// output order follows input order.
pub fn measurements_from_parameters(
    template: &ModelSpec,
    draws: Vec<ParameterVector>,
    ic: &State,
    settings: &ExtractionSettings,
) -> Result<MeasurementSet> {
    if draws.len() < 2 {
        return Err(Error::Config(format!(
            "a measurement set needs at least 2 curves, got {}",
            draws.len()
        )));
    }
    let curves = draws
        .par_iter()
        .enumerate()
        .map(|(index, draw)| {
            let member = || -> Result<BackboneCurve> {
                let spec = template.with_values(draw.iter().map(|p| (p.name.as_str(), p.value)))?;
                simulate_backbone(&spec, ic, settings)
            };
            member().map_err(|source| Error::Member {
                index,
                source: Box::new(source),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementSet {
        curves,
        draws,
        provenance: Provenance::Injected,
    })
}

/// Draws `count` parameter vectors from `dist` with a ChaCha20 stream seeded
/// by `seed`, then simulates each member. The draws are fixed before any
/// parallel work so the result depends only on the seed.
pub fn generate_measurements(
    template: &ModelSpec,
    dist: &TrueDistribution,
    count: usize,
    ic: &State,
    settings: &ExtractionSettings,
    seed: u64,
) -> Result<MeasurementSet> {
    dist.validate()?;
    if count < 2 {
        return Err(Error::Config(format!(
            "a measurement set needs at least 2 curves, got {count}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let draws = dist
        .draw(count, &mut rng)
        .into_iter()
        .map(|values| {
            let mut pv = ParameterVector::new();
            for (b, v) in dist.bounds.iter().zip(values) {
                let unit = template
                    .kind
                    .descriptor(&b.name)
                    .map(|d| d.unit)
                    .ok_or_else(|| {
                        Error::Config(format!("{:?} has no parameter `{}`", template.kind, b.name))
                    })?;
                pv.push(&b.name, v, unit)?;
            }
            Ok(pv)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = measurements_from_parameters(template, draws, ic, settings)?;
    set.provenance = Provenance::Synthetic {
        distribution: dist.clone(),
        seed,
    };
    Ok(set)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    provenance: Provenance,
    curves: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extra: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parameters: Option<ParameterVector>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn curve_file(i: usize) -> String {
    format!("curve_{i:03}.csv")
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Writes one CSV per curve plus `manifest.json`. `extra` is embedded
    /// verbatim (e.g. the resolved run configuration). The manifest is
    /// written last.
    pub fn save(&self, dir: &Path, extra: Option<serde_json::Value>) -> Result<()> {
        let mut entries = Vec::with_capacity(self.curves.len());
        for (i, curve) in self.curves.iter().enumerate() {
            let file = curve_file(i);
            io::atomic_write(&dir.join(&file), curve.to_csv().as_bytes())?;
            entries.push(ManifestEntry {
                file,
                parameters: self.draws.get(i).cloned(),
            });
        }
        let manifest = Manifest {
            provenance: self.provenance.clone(),
            curves: entries,
            extra,
        };
        io::write_json(&dir.join(MANIFEST_FILE), &manifest)
    }

    /// Loads a directory written by [`MeasurementSet::save`]; without a
    /// manifest, every `*.csv` file (sorted by name) is read as a curve.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let (files, draws, provenance) = if manifest_path.exists() {
            let manifest: Manifest = io::read_json(&manifest_path)?;
            let draws: Vec<ParameterVector> =
                manifest.curves.iter().filter_map(|e| e.parameters.clone()).collect();
            let draws = if draws.len() == manifest.curves.len() {
                draws
            } else {
                Vec::new()
            };
            let files = manifest.curves.into_iter().map(|e| dir.join(e.file)).collect();
            (files, draws, manifest.provenance)
        } else {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            (
                files,
                Vec::new(),
                Provenance::File {
                    path: dir.to_path_buf(),
                },
            )
        };
        let curves = files
            .iter()
            .map(|path| {
                let text = io::read_to_string(path)?;
                BackboneCurve::from_csv(&text).map_err(|m| Error::parse(path, m))
            })
            .collect::<Result<Vec<_>>>()?;
        if curves.len() < 2 {
            return Err(Error::Config(format!(
                "{} holds {} curves, need at least 2",
                dir.display(),
                curves.len()
            )));
        }
        Ok(MeasurementSet {
            curves,
            draws,
            provenance,
        })
    }

    /// Reads the embedded `extra` value of a saved manifest, if any.
    pub fn load_manifest_extra(dir: &Path) -> Result<Option<serde_json::Value>> {
        let manifest: Manifest = io::read_json(&dir.join(MANIFEST_FILE))?;
        Ok(manifest.extra)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ModelKind;
    use approx::assert_relative_eq;

    fn case1() -> ModelSpec {
        ModelSpec::from_values(
            ModelKind::CubicStiffness,
            &[("m", 1.0), ("k1", 6500.0), ("k2", 6.5e6), ("c1", 0.8)],
        )
        .unwrap()
    }

    fn case1_truth() -> TrueDistribution {
        TrueDistribution::new(vec![
            Bounds::new("k1", 6000.0, 7000.0),
            Bounds::new("k2", 6.0e6, 6.5e6),
            Bounds::new("c1", 0.2, 2.0),
        ])
        .unwrap()
    }

    #[test]
    fn bounds_from_moments() {
        let (lo, hi) = uniform_bounds_from_moments(6500.0, 288.68);
        assert!((lo - 6000.0).abs() < 0.01 && (hi - 7000.0).abs() < 0.01);
        assert_eq!(uniform_bounds_from_moments(5.0, 0.0), (5.0, 5.0));
        let (lo, hi) = uniform_bounds_from_moments(1.1, 0.52);
        assert_relative_eq!(lo, 0.199, epsilon = 1e-3);
        assert_relative_eq!(hi, 2.001, epsilon = 1e-3);
        let b = Bounds::new("x", 2.0, 8.0);
        let (mean, sd) = b.moments();
        let back = Bounds::from_moments("x", mean, sd);
        assert_relative_eq!(back.lower, 2.0, max_relative = 1e-12);
        assert_relative_eq!(back.upper, 8.0, max_relative = 1e-12);
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(TrueDistribution::new(vec![Bounds::new("k1", 2.0, 1.0)]).is_err());
        assert!(TrueDistribution::new(vec![
            Bounds::new("k1", 1.0, 2.0),
            Bounds::new("k1", 1.0, 2.0)
        ])
        .is_err());
        assert!(TrueDistribution::new(vec![Bounds::new("k1", 1.0, 1.0)]).is_ok());
    }

    #[test]
    fn draw_moments_converge() {
        let dist = case1_truth();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let draws = dist.draw(1000, &mut rng);
        for (j, b) in dist.bounds.iter().enumerate() {
            let vals: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let (mu, sd) = b.moments();
            // four standard errors of the mean; within 1 % of the mean for k1 and k2
            let se = sd / n.sqrt();
            assert!((mean - mu).abs() < 4.0 * se, "{}: {mean} vs {mu}", b.name);
            if b.name != "c1" {
                assert!((mean - mu).abs() < 0.01 * mu.abs());
            }
            // sampling error of a sd estimate at n = 1000 is about 1.4 %
            assert!((var.sqrt() - sd).abs() < 0.05 * sd, "{}: {} vs {sd}", b.name, var.sqrt());
            assert!(vals.iter().all(|&v| b.contains(v)));
        }
    }

    #[test]
    fn count_below_two_rejected() {
        let err = generate_measurements(
            &case1(),
            &case1_truth(),
            1,
            &State::new(0.02, 0.0),
            &ExtractionSettings::default(),
            1,
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn generation_is_reproducible_and_degenerate_bounds_collapse() {
        let ic = State::new(0.02, 0.0);
        let settings = ExtractionSettings::default();
        let a = generate_measurements(&case1(), &case1_truth(), 3, &ic, &settings, 5).unwrap();
        let b = generate_measurements(&case1(), &case1_truth(), 3, &ic, &settings, 5).unwrap();
        assert_eq!(a, b);

        let fixed = TrueDistribution::new(vec![
            Bounds::new("k1", 6500.0, 6500.0),
            Bounds::new("c1", 0.8, 0.8),
        ])
        .unwrap();
        let set = generate_measurements(&case1(), &fixed, 3, &ic, &settings, 9).unwrap();
        assert_eq!(set.curves[0], set.curves[1]);
        assert_eq!(set.curves[1], set.curves[2]);
    }

    #[test]
    fn member_failure_names_the_draw() {
        let draws = vec![
            ParameterVector::new().with("k1", 6500.0, "N/m").unwrap(),
            ParameterVector::new().with("m", -1.0, "kg").unwrap(),
        ];
        let err = measurements_from_parameters(
            &case1(),
            draws,
            &State::new(0.02, 0.0),
            &ExtractionSettings::default(),
        );
        assert!(matches!(err, Err(Error::Member { index: 1, .. })));
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let set = generate_measurements(
            &case1(),
            &case1_truth(),
            3,
            &State::new(0.02, 0.0),
            &ExtractionSettings::default(),
            3,
        )
        .unwrap();
        set.save(dir.path(), Some(serde_json::json!({"note": 1})))
            .unwrap();
        let back = MeasurementSet::load(dir.path()).unwrap();
        assert_eq!(back.provenance, set.provenance);
        assert_eq!(back.draws, set.draws);
        for (a, b) in back.curves.iter().zip(&set.curves) {
            assert_eq!(a.points, b.points);
        }
        assert_eq!(
            MeasurementSet::load_manifest_extra(dir.path()).unwrap(),
            Some(serde_json::json!({"note": 1}))
        );

        std::fs::remove_file(dir.path().join(MANIFEST_FILE)).unwrap();
        let plain = MeasurementSet::load(dir.path()).unwrap();
        assert_eq!(plain.len(), 3);
        assert!(matches!(plain.provenance, Provenance::File { .. }));
    }
}
