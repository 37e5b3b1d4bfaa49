//! File helpers: atomic writes and the time-series CSV format.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};

/// Writes `contents` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partially written file.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

impl TimeSeries {
    /// Two-column `t, x` CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t_s", "x_m"]).unwrap();
        for (i, x) in self.x.iter().enumerate() {
            w.write_record([self.time(i).to_string(), x.to_string()])
                .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    /// Parses a uniformly sampled `t, x` CSV. Velocities are reconstructed by
    /// central differences (one-sided at the ends).
    pub fn from_csv(text: &str) -> std::result::Result<Self, String> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut t = Vec::new();
        let mut x = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record.map_err(|e| e.to_string())?;
            if record.len() < 2 {
                return Err(format!("row {}: expected at least 2 columns", line + 2));
            }
            let parse = |i: usize| {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| format!("row {}: {e}", line + 2))
            };
            t.push(parse(0)?);
            x.push(parse(1)?);
        }
        if t.len() < 3 {
            return Err("time series needs at least 3 samples".into());
        }
        let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        if !(dt > 0.0) {
            return Err("time column must be increasing".into());
        }
        for (i, w) in t.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                return Err(format!("row {}: sampling is not uniform", i + 3));
            }
        }
        let n = x.len();
        let mut v = vec![0.0; n];
        v[0] = (x[1] - x[0]) / dt;
        v[n - 1] = (x[n - 1] - x[n - 2]) / dt;
        for i in 1..n - 1 {
            v[i] = (x[i + 1] - x[i - 1]) / (2.0 * dt);
        }
        TimeSeries::new(dt, t[0], x, v).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("a.txt");
        atomic_write(&path, b"first").unwrap();
        atomic_write(&path, b"second").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second");
        let leftovers: Vec<_> = fs::read_dir(path.parent().unwrap()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn time_series_csv_round_trip() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.1).sin()).collect();
        let ts = TimeSeries::new(0.01, 0.5, x.clone(), vec![0.0; 50]).unwrap();
        let text = ts.to_csv();
        assert!(text.starts_with("t_s,x_m\n"));
        let back = TimeSeries::from_csv(&text).unwrap();
        assert_eq!(back.x, x);
        assert!((back.dt - 0.01).abs() < 1e-12);
        assert!((back.t0 - 0.5).abs() < 1e-12);
        // d/dt sin(10 t) at t = t0 + 0.25 is 10 cos(2.5)
        assert!((back.v[25] - 10.0 * (2.5f64).cos()).abs() < 0.02);
    }

    #[test]
    fn non_uniform_time_series_rejected() {
        let text = "t_s,x_m\n0,0\n0.1,1\n0.3,0\n0.4,1\n";
        assert!(TimeSeries::from_csv(text).is_err());
    }
}
