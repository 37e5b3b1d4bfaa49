//! One-dimensional densities fitted to slice samples: Gaussian KDE with
//! Silverman's bandwidth, the uniform MLE and a maximum-likelihood GEV.

use argmin::core::{CostFunction, Executor, State as _, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Gaussian kernel density estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    pub bandwidth: f64,
    pub samples: Vec<f64>,
}

/// Relative floor on the KDE bandwidth, scaled by the mean absolute sample.
pub const KDE_BANDWIDTH_FLOOR: f64 = 1e-4;

impl Kde {
    pub fn fit(samples: &[f64]) -> Result<Self> {
        check_samples(samples, 2)?;
        let n = samples.len() as f64;
        let sd = sample_sd(samples);
        let iqr = {
            let mut s = samples.to_vec();
            s.sort_by(f64::total_cmp);
            quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25)
        };
        let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
        let silverman = 0.9 * spread * n.powf(-0.2);
        let scale = samples.iter().map(|v| v.abs()).sum::<f64>() / n;
        let floor = KDE_BANDWIDTH_FLOOR * scale;
        let bandwidth = silverman.max(floor);
        if !(bandwidth > 0.0) {
            return Err(Error::Fit("KDE bandwidth collapsed to zero".into()));
        }
        Ok(Kde {
            bandwidth,
            samples: samples.to_vec(),
        })
    }

    /// Log density, computed with log-sum-exp so far tails stay finite.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let terms = self.samples.iter().map(|&s| -0.5 * ((x - s) / h).powi(2));
        let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = terms.map(|t| (t - max).exp()).sum();
        max + sum.ln() - (self.samples.len() as f64).ln() - h.ln() - LN_SQRT_2PI
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Evaluation support: five bandwidths beyond the extreme samples.
    pub fn support(&self) -> (f64, f64) {
        let lo = self.samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo - 5.0 * self.bandwidth, hi + 5.0 * self.bandwidth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformFit {
    pub a: f64,
    pub b: f64,
}

impl UniformFit {
    /// Maximum-likelihood fit: the sample range.
    pub fn fit(samples: &[f64]) -> Result<Self> {
        check_samples(samples, 2)?;
        let a = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let b = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(a < b) {
            return Err(Error::Fit(format!(
                "uniform fit needs distinct samples, all equal to {a}"
            )));
        }
        Ok(UniformFit { a, b })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x >= self.a && x <= self.b {
            -(self.b - self.a).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }
}

/// Generalized extreme value distribution with shape `k`, scale `sigma` and
/// location `mu`: `F(x) = exp(−(1 + k (x − μ)/σ)^(−1/k))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevFit {
    pub k: f64,
    pub sigma: f64,
    pub mu: f64,
}

/// Shapes closer to zero than this use the Gumbel limit.
const GUMBEL_EPS: f64 = 1e-9;
const GEV_MIN_SAMPLES: usize = 8;
const GEV_MAX_ITERS: u64 = 5000;

impl GevFit {
    pub fn new(k: f64, sigma: f64, mu: f64) -> Result<Self> {
        if !(sigma > 0.0) || !k.is_finite() || !mu.is_finite() {
            return Err(Error::Fit(format!(
                "invalid GEV parameters k={k}, sigma={sigma}, mu={mu}"
            )));
        }
        Ok(GevFit { k, sigma, mu })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        gev_ln_pdf(x, self.k, self.sigma, self.mu)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        if self.k.abs() < GUMBEL_EPS {
            return (-(-z).exp()).exp();
        }
        let t = 1.0 + self.k * z;
        if t <= 0.0 {
            return if self.k > 0.0 { 0.0 } else { 1.0 };
        }
        (-t.powf(-1.0 / self.k)).exp()
    }

    /// Inverse CDF for `p` in (0, 1).
    pub fn quantile(&self, p: f64) -> f64 {
        let y = -p.ln();
        if self.k.abs() < GUMBEL_EPS {
            self.mu - self.sigma * y.ln()
        } else {
            self.mu + self.sigma * (y.powf(-self.k) - 1.0) / self.k
        }
    }

    /// Finite support `(lower, upper)`; infinite ends where unbounded.
    pub fn support(&self) -> (f64, f64) {
        if self.k > GUMBEL_EPS {
            (self.mu - self.sigma / self.k, f64::INFINITY)
        } else if self.k < -GUMBEL_EPS {
            (f64::NEG_INFINITY, self.mu - self.sigma / self.k)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        }
    }

    /// Probability-weighted-moment (L-moment) estimate, used to start the
    /// likelihood maximization.
    pub fn from_l_moments(samples: &[f64]) -> Result<Self> {
        check_samples(samples, 3)?;
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
        for (i, &x) in s.iter().enumerate() {
            let i = i as f64;
            b0 += x;
            b1 += x * i / (n - 1.0);
            b2 += x * i * (i - 1.0) / ((n - 1.0) * (n - 2.0));
        }
        b0 /= n;
        b1 /= n;
        b2 /= n;
        let l1 = b0;
        let l2 = 2.0 * b1 - b0;
        let l3 = 6.0 * b2 - 6.0 * b1 + b0;
        if !(l2 > 0.0) {
            return Err(Error::Fit("GEV start: zero sample dispersion".into()));
        }
        let t3 = l3 / l2;
        let c = 2.0 / (3.0 + t3) - std::f64::consts::LN_2 / 3f64.ln();
        // Hosking's shape has the opposite sign convention
        let kh = 7.8590 * c + 2.9554 * c * c;
        let (sigma, mu) = if kh.abs() < 1e-6 {
            let sigma = l2 / std::f64::consts::LN_2;
            (sigma, l1 - 0.577_215_664_901_532_9 * sigma)
        } else {
            let g = gamma(1.0 + kh);
            let sigma = l2 * kh / ((1.0 - 2f64.powf(-kh)) * g);
            (sigma, l1 - sigma * (1.0 - g) / kh)
        };
        GevFit::new(-kh, sigma, mu)
    }

    /// Maximum-likelihood fit by Nelder-Mead over `(k, ln σ, μ)`.
    pub fn fit(samples: &[f64]) -> Result<Self> {
        check_samples(samples, GEV_MIN_SAMPLES)?;
        let start = GevFit::from_l_moments(samples).or_else(|_| {
            let sd = sample_sd(samples);
            GevFit::new(0.0, sd.max(1e-12), mean(samples))
        })?;
        let cost = GevNegLogLik { samples };
        // a start outside the support has infinite cost; fall back to Gumbel
        let start = if cost.eval(&[start.k, start.sigma.ln(), start.mu]).is_finite() {
            start
        } else {
            let sigma = sample_sd(samples) * 6f64.sqrt() / std::f64::consts::PI;
            GevFit::new(0.0, sigma.max(1e-12), mean(samples) - 0.5772 * sigma)?
        };
        let x0 = vec![start.k, start.sigma.ln(), start.mu];
        let steps = [0.1, 0.2, 0.2 * start.sigma];
        let simplex: Vec<Vec<f64>> = std::iter::once(x0.clone())
            .chain((0..3).map(|i| {
                let mut v = x0.clone();
                v[i] += steps[i];
                v
            }))
            .collect();
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-12)
            .map_err(|e| Error::Fit(e.to_string()))?;
        let res = Executor::new(cost, solver)
            .configure(|state| state.max_iters(GEV_MAX_ITERS))
            .run()
            .map_err(|e| Error::Fit(e.to_string()))?;
        let state = res.state();
        let best = state
            .get_best_param()
            .cloned()
            .ok_or_else(|| Error::Fit("GEV optimizer returned no parameters".into()))?;
        if let TerminationStatus::Terminated(TerminationReason::MaxItersReached) =
            state.get_termination_status()
        {
            return Err(Error::Fit(format!(
                "GEV likelihood did not converge in {GEV_MAX_ITERS} iterations \
                 (last k={:.4}, sigma={:.4e}, mu={:.4}, nll={:.6})",
                best[0],
                best[1].exp(),
                best[2],
                state.get_best_cost()
            )));
        }
        GevFit::new(best[0], best[1].exp(), best[2])
    }
}

fn gev_ln_pdf(x: f64, k: f64, sigma: f64, mu: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let z = (x - mu) / sigma;
    if k.abs() < GUMBEL_EPS {
        return -sigma.ln() - z - (-z).exp();
    }
    let t = 1.0 + k * z;
    if t <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let lt = t.ln();
    -sigma.ln() - (1.0 + 1.0 / k) * lt - (-lt / k).exp()
}

struct GevNegLogLik<'a> {
    samples: &'a [f64],
}

impl GevNegLogLik<'_> {
    fn eval(&self, p: &[f64]) -> f64 {
        let (k, sigma, mu) = (p[0], p[1].exp(), p[2]);
        let ll: f64 = self.samples.iter().map(|&x| gev_ln_pdf(x, k, sigma, mu)).sum();
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    }
}

impl CostFunction for GevNegLogLik<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(p))
    }
}

/// The density families available for amplitude slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    #[default]
    Kde,
    Uniform,
    Gev,
}

impl std::str::FromStr for DensityKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "kde" => Ok(DensityKind::Kde),
            "uniform" => Ok(DensityKind::Uniform),
            "gev" => Ok(DensityKind::Gev),
            other => Err(format!("unknown density kind `{other}` (kde, uniform, gev)")),
        }
    }
}

/// A fitted density of one of the supported families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Density {
    Kde(Kde),
    Uniform(UniformFit),
    Gev(GevFit),
}

impl Density {
    pub fn fit(samples: &[f64], kind: DensityKind) -> Result<Self> {
        Ok(match kind {
            DensityKind::Kde => Density::Kde(Kde::fit(samples)?),
            DensityKind::Uniform => Density::Uniform(UniformFit::fit(samples)?),
            DensityKind::Gev => Density::Gev(GevFit::fit(samples)?),
        })
    }

    pub fn kind(&self) -> DensityKind {
        match self {
            Density::Kde(_) => DensityKind::Kde,
            Density::Uniform(_) => DensityKind::Uniform,
            Density::Gev(_) => DensityKind::Gev,
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            Density::Kde(d) => d.ln_pdf(x),
            Density::Uniform(d) => d.ln_pdf(x),
            Density::Gev(d) => d.ln_pdf(x),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Interval carrying (essentially) all of the probability mass.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Density::Kde(d) => d.support(),
            Density::Uniform(d) => (d.a, d.b),
            Density::Gev(d) => {
                let (lo, hi) = d.support();
                (lo.max(d.quantile(1e-9)), hi.min(d.quantile(1.0 - 1e-9)))
            }
        }
    }
}

fn check_samples(samples: &[f64], min: usize) -> Result<()> {
    if samples.len() < min {
        return Err(Error::Fit(format!(
            "need at least {min} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("samples must be finite".into()));
    }
    Ok(())
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n − 1 denominator); zero for fewer than 2 values.
pub(crate) fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
        h * (0.5 * (f(a) + f(b)) + inner)
    }

    #[test]
    fn uniform_fit_is_sample_range() {
        let u = UniformFit::fit(&[7.0, 6.4, 8.0]).unwrap();
        assert_eq!((u.a, u.b), (6.4, 8.0));
        assert_relative_eq!(u.ln_pdf(7.0), -(1.6f64).ln(), max_relative = 1e-12);
        assert_eq!(u.ln_pdf(8.0001), f64::NEG_INFINITY);
        assert!(UniformFit::fit(&[7.0, 7.0]).is_err());
        assert!(UniformFit::fit(&[7.0]).is_err());
    }

    #[test]
    fn kde_degenerate_sample_uses_floor() {
        let kde = Kde::fit(&[7.0; 4]).unwrap();
        assert_relative_eq!(kde.bandwidth, 7e-4, max_relative = 1e-12);
        let peak = kde.pdf(7.0);
        for x in [6.999, 7.0005, 6.0, 8.0] {
            assert!(kde.pdf(x) < peak);
        }
    }

    #[test]
    fn kde_integrates_to_one() {
        let samples = [6.45, 6.9, 7.1, 7.3, 7.32, 7.8, 8.05];
        let kde = Kde::fit(&samples).unwrap();
        let (a, b) = kde.support();
        let total = trapezoid(|x| kde.pdf(x), a, b, 20_000);
        assert!((total - 1.0).abs() < 1e-6, "{total}");
        for i in 0..=100 {
            let x = a + (b - a) * i as f64 / 100.0;
            assert!(kde.pdf(x) > 0.0);
        }
    }

    #[test]
    fn kde_far_tail_is_finite() {
        let kde = Kde::fit(&[1.0, 2.0, 3.0]).unwrap();
        let v = kde.ln_pdf(1e3);
        assert!(v.is_finite() && v < -1e4);
    }

    #[test]
    fn silverman_bandwidth_matches_formula() {
        let samples: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let kde = Kde::fit(&samples).unwrap();
        let sd = sample_sd(&samples);
        let iqr = 74.25 - 24.75;
        let h = 0.9 * sd.min(iqr / 1.34) * 100f64.powf(-0.2);
        assert_relative_eq!(kde.bandwidth, h, max_relative = 1e-12);
    }

    #[test]
    fn gev_quantile_inverts_cdf() {
        for k in [-0.4, 0.0, 0.292] {
            let g = GevFit::new(k, 0.085, 1.635).unwrap();
            for p in [0.01, 0.3, 0.5, 0.9, 0.999] {
                assert_relative_eq!(g.cdf(g.quantile(p)), p, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn gev_pdf_integrates_to_one() {
        for k in [-0.372, 0.292] {
            let g = GevFit::new(k, 0.085, 1.635).unwrap();
            let (a, b) = Density::Gev(g).support();
            let total = trapezoid(|x| g.pdf(x), a, b, 200_000);
            assert!((total - 1.0).abs() < 1e-4, "k={k}: {total}");
        }
    }

    #[test]
    fn gev_round_trip_recovers_parameters() {
        let truth = GevFit::new(0.292, 0.085, 1.635).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2024);
        let samples: Vec<f64> = (0..5000)
            .map(|_| truth.quantile(rng.random_range(1e-12..1.0)))
            .collect();
        let fit = GevFit::fit(&samples).unwrap();
        assert_relative_eq!(fit.k, truth.k, max_relative = 0.10);
        assert_relative_eq!(fit.sigma, truth.sigma, max_relative = 0.10);
        assert_relative_eq!(fit.mu, truth.mu, max_relative = 0.10);
    }

    #[test]
    fn gev_needs_eight_samples() {
        assert!(matches!(
            GevFit::fit(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn gev_bounded_shape_fit() {
        let truth = GevFit::new(-0.372, 0.076, 1.521).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let samples: Vec<f64> = (0..3000)
            .map(|_| truth.quantile(rng.random_range(1e-12..1.0)))
            .collect();
        let fit = GevFit::fit(&samples).unwrap();
        assert!((fit.k - truth.k).abs() < 0.05, "{fit:?}");
        assert_relative_eq!(fit.sigma, truth.sigma, max_relative = 0.1);
        assert_relative_eq!(fit.mu, truth.mu, max_relative = 0.01);
    }

    #[test]
    fn density_kind_parsing() {
        assert_eq!("KDE".parse::<DensityKind>().unwrap(), DensityKind::Kde);
        assert_eq!("uniform".parse::<DensityKind>().unwrap(), DensityKind::Uniform);
        assert!("normal".parse::<DensityKind>().is_err());
    }
}
