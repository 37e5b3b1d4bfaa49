//! Backbone-curve extraction from free decays by peak picking.
//!
//! Displacement maxima are located and refined with a three-point parabola;
//! the reciprocal of the time between successive maxima is the instantaneous
//! frequency, paired with the amplitude of the earlier maximum.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelSpec, TimeSeries};
use crate::error::{Error, Result};

/// Absolute floor under which maxima are treated as noise.
pub const AMPLITUDE_NOISE_FLOOR: f64 = 1e-6;
/// Fraction of the first maximum used by the automatic floor.
pub const AMPLITUDE_FLOOR_FRACTION: f64 = 0.01;

const MIN_PEAKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub t: f64,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackbonePoint {
    pub amplitude: f64,
    pub frequency_hz: f64,
}

/// Amplitude/frequency pairs in decay order (decreasing amplitude).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BackboneCurve {
    pub points: Vec<BackbonePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<ModelSpec>,
}

/// How the peak-picking amplitude threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeFloor {
    /// `max(1e-6 m, 1 % of the first maximum)`.
    #[default]
    Auto,
    Absolute(f64),
}

impl AmplitudeFloor {
    pub fn resolve(&self, ts: &TimeSeries) -> f64 {
        match *self {
            AmplitudeFloor::Absolute(a) => a,
            AmplitudeFloor::Auto => {
                let first = first_maximum(&ts.x).unwrap_or(0.0);
                AMPLITUDE_NOISE_FLOOR.max(AMPLITUDE_FLOOR_FRACTION * first)
            }
        }
    }

    /// Floor implied by an initial displacement, used to stop integration early.
    pub fn for_initial_amplitude(&self, x0: f64) -> f64 {
        match *self {
            AmplitudeFloor::Absolute(a) => a,
            AmplitudeFloor::Auto => AMPLITUDE_NOISE_FLOOR.max(AMPLITUDE_FLOOR_FRACTION * x0.abs()),
        }
    }
}

fn first_maximum(x: &[f64]) -> Option<f64> {
    x.windows(3)
        .find(|w| w[0] < w[1] && w[1] >= w[2])
        .map(|w| w[1])
}

/// Local maxima `x[i-1] < x[i] >= x[i+1]` above `min_amplitude`, refined by
/// parabolic interpolation through the three samples.
pub fn pick_peaks(ts: &TimeSeries, min_amplitude: f64) -> Result<Vec<Peak>> {
    if ts.len() < 3 {
        return Err(Error::InsufficientDecay {
            found: 0,
            needed: MIN_PEAKS,
        });
    }
    let mut peaks = Vec::new();
    for i in 1..ts.len() - 1 {
        let (y0, y1, y2) = (ts.x[i - 1], ts.x[i], ts.x[i + 1]);
        if !(y0 < y1 && y1 >= y2 && y1 > min_amplitude) {
            continue;
        }
        let curvature = y0 - 2.0 * y1 + y2;
        let offset = if curvature < 0.0 {
            (0.5 * (y0 - y2) / curvature).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        peaks.push(Peak {
            t: ts.time(i) + offset * ts.dt,
            a: y1 - 0.25 * (y0 - y2) * offset,
        });
    }
    if peaks.len() < MIN_PEAKS {
        return Err(Error::InsufficientDecay {
            found: peaks.len(),
            needed: MIN_PEAKS,
        });
    }
    Ok(peaks)
}

/// Converts successive peaks into backbone points; the last peak has no
/// successor and is dropped.
pub fn backbone_from_peaks(peaks: &[Peak]) -> BackboneCurve {
    let points = peaks
        .windows(2)
        .map(|w| BackbonePoint {
            amplitude: w[0].a,
            frequency_hz: 1.0 / (w[1].t - w[0].t),
        })
        .collect();
    BackboneCurve {
        points,
        source: None,
    }
}

pub fn extract_backbone(ts: &TimeSeries, min_amplitude: f64) -> Result<BackboneCurve> {
    Ok(backbone_from_peaks(&pick_peaks(ts, min_amplitude)?))
}

impl BackboneCurve {
    pub fn new(points: Vec<BackbonePoint>) -> Result<Self> {
        let curve = BackboneCurve {
            points,
            source: None,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(amplitude, frequency_hz)| BackbonePoint {
                    amplitude,
                    frequency_hz,
                })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            if !(p.amplitude > 0.0 && p.amplitude.is_finite()) {
                return Err(Error::Degenerate(format!(
                    "backbone amplitude {} is not positive",
                    p.amplitude
                )));
            }
            if !(p.frequency_hz > 0.0 && p.frequency_hz.is_finite()) {
                return Err(Error::Degenerate(format!(
                    "backbone frequency {} is not positive and finite",
                    p.frequency_hz
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(min, max)` amplitude covered by the curve.
    pub fn amplitude_range(&self) -> Option<(f64, f64)> {
        let mut it = self.points.iter().map(|p| p.amplitude);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), a| (lo.min(a), hi.max(a))))
    }

    pub fn frequency_at(&self, amplitude: f64) -> Option<f64> {
        frequency_at(self, amplitude)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["amplitude_m", "frequency_hz"]).unwrap();
        for p in &self.points {
            w.write_record([p.amplitude.to_string(), p.frequency_hz.to_string()])
                .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    /// Parses the two-column `amplitude, frequency_hz` format. Curves stored
    /// in increasing amplitude order are flipped into decay order.
    pub fn from_csv(text: &str) -> std::result::Result<Self, String> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut points = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record.map_err(|e| e.to_string())?;
            if record.len() != 2 {
                return Err(format!("row {}: expected 2 columns", line + 2));
            }
            let parse = |i: usize| {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| format!("row {}: {e}", line + 2))
            };
            points.push(BackbonePoint {
                amplitude: parse(0)?,
                frequency_hz: parse(1)?,
            });
        }
        if points.len() >= 2 && points[0].amplitude < points[points.len() - 1].amplitude {
            points.reverse();
        }
        BackboneCurve::new(points).map_err(|e| e.to_string())
    }
}

/// Linear interpolation of frequency in amplitude; `None` outside the curve's
/// amplitude range. The first bracketing segment in decay order is used.
pub fn frequency_at(curve: &BackboneCurve, amplitude: f64) -> Option<f64> {
    let (lo, hi) = curve.amplitude_range()?;
    if !(amplitude >= lo && amplitude <= hi) {
        return None;
    }
    let pts = &curve.points;
    if let Some(p) = pts.iter().find(|p| p.amplitude == amplitude) {
        return Some(p.frequency_hz);
    }
    pts.windows(2).find_map(|w| {
        let (p, q) = (w[0], w[1]);
        let (a0, a1) = (p.amplitude.min(q.amplitude), p.amplitude.max(q.amplitude));
        if amplitude < a0 || amplitude > a1 {
            return None;
        }
        let s = (amplitude - p.amplitude) / (q.amplitude - p.amplitude);
        Some(p.frequency_hz + s * (q.frequency_hz - p.frequency_hz))
    })
}

/// Centered moving average of the frequencies, `window` points wide.
pub fn smoothed_frequencies(curve: &BackboneCurve, window: usize) -> Vec<f64> {
    let f: Vec<f64> = curve.points.iter().map(|p| p.frequency_hz).collect();
    let half = window / 2;
    (0..f.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(f.len());
            f[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}
