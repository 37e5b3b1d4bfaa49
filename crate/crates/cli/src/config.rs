//! Run configuration. Parameter keys carry their unit (`k1_n_per_m`,
//! `kn_n_per_m3`, ...) and are resolved against the chosen model kind.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nlupdate::backbone::AmplitudeFloor;
use nlupdate::density::DensityKind;
use nlupdate::dynamics::{DecaySettings, ModelKind, ModelSpec, State};
use nlupdate::ensemble::{Bounds, ExtractionSettings, TrueDistribution};
use nlupdate::likelihood::{GridSpec, DEFAULT_GRID_FRACTIONS};
use nlupdate::params::ParameterVector;
use nlupdate::sampler::{McmcSettings, PriorSpec, ProposalSpec, DEFAULT_PROPOSAL_FRACTION};

use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub model: ModelSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurements: Option<MeasurementsSection>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub prior: BTreeMap<String, RangeSpec>,
    #[serde(default)]
    pub proposal: ProposalSection,
    #[serde(default)]
    pub mcmc: McmcSection,
    #[serde(default)]
    pub extraction: ExtractionSection,
    #[serde(default)]
    pub likelihood: LikelihoodSection,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    /// Width of the `tanh(v/ε)` smoothing of `sign(v)` for dry friction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friction_smoothing_m_per_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub x0_m: f64,
    #[serde(default)]
    pub v0_m_per_s: f64,
    /// Bouc-Wen hysteretic state; ignored by other models.
    #[serde(default)]
    pub z0: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            x0_m: 0.02,
            v0_m_per_s: 0.0,
            z0: 0.0,
        }
    }
}

/// Either `lower`/`upper` or `mean`/`sd` of a uniform distribution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
}

impl RangeSpec {
    fn bounds(&self, name: &str, at: &str) -> Result<Bounds> {
        match (self.lower, self.upper, self.mean, self.sd) {
            (Some(lo), Some(hi), None, None) => {
                if !(lo <= hi) {
                    return Err(config_err(format!("{at}: lower {lo} exceeds upper {hi}")));
                }
                Ok(Bounds::new(name, lo, hi))
            }
            (None, None, Some(mean), Some(sd)) => {
                if !(sd >= 0.0) {
                    return Err(config_err(format!("{at}: sd must be non-negative")));
                }
                Ok(Bounds::from_moments(name, mean, sd))
            }
            _ => Err(config_err(format!(
                "{at}: give either `lower` and `upper` or `mean` and `sd`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Uniform bounds of the varied parameters.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bounds: BTreeMap<String, RangeSpec>,
    /// Explicit parameter sets, simulated instead of random draws.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<BTreeMap<String, f64>>,
}

fn default_count() -> usize {
    50
}

fn default_seed() -> u64 {
    1
}

/// Externally measured backbone curves (a directory of two-column CSVs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementsSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalSection {
    /// Standard deviation as a fraction of each prior width.
    #[serde(default = "default_proposal_fraction")]
    pub fraction: f64,
    /// Absolute standard deviations overriding `fraction`, keyed like the prior.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sd: BTreeMap<String, f64>,
    /// Rescale the proposal with pilot runs before sampling.
    #[serde(default)]
    pub tune: bool,
    #[serde(default = "default_tune_iterations")]
    pub tune_iterations: usize,
    #[serde(default = "default_tune_rounds")]
    pub tune_rounds: usize,
}

fn default_proposal_fraction() -> f64 {
    DEFAULT_PROPOSAL_FRACTION
}

fn default_tune_iterations() -> usize {
    2000
}

fn default_tune_rounds() -> usize {
    10
}

impl Default for ProposalSection {
    fn default() -> Self {
        ProposalSection {
            fraction: default_proposal_fraction(),
            sd: BTreeMap::new(),
            tune: false,
            tune_iterations: default_tune_iterations(),
            tune_rounds: default_tune_rounds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSection {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    /// Chain `i` uses seed `seed + i`.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_iterations() -> usize {
    20_000
}

fn default_chains() -> usize {
    4
}

fn default_burn_in() -> f64 {
    nlupdate::sampler::DEFAULT_BURN_IN_FRACTION
}

impl Default for McmcSection {
    fn default() -> Self {
        McmcSection {
            iterations: default_iterations(),
            chains: default_chains(),
            burn_in_fraction: default_burn_in(),
            seed: default_seed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionSection {
    #[serde(default = "default_steps")]
    pub steps_per_period: f64,
    #[serde(default = "default_periods")]
    pub periods: f64,
    /// Absolute peak floor; omitted means `max(1e-6 m, 1 % of the first peak)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_amplitude_m: Option<f64>,
}

fn default_steps() -> f64 {
    DecaySettings::default().steps_per_period
}

fn default_periods() -> f64 {
    DecaySettings::default().periods
}

impl Default for ExtractionSection {
    fn default() -> Self {
        ExtractionSection {
            steps_per_period: default_steps(),
            periods: default_periods(),
            min_amplitude_m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikelihoodSection {
    #[serde(default)]
    pub density: DensityKind,
    /// Levels as fractions of the common amplitude support.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_fractions: Option<Vec<f64>>,
    /// Explicit levels in metres; takes precedence over `grid_fractions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels_m: Option<Vec<f64>>,
}

impl Default for LikelihoodSection {
    fn default() -> Self {
        LikelihoodSection {
            density: DensityKind::Kde,
            grid_fractions: Some(DEFAULT_GRID_FRACTIONS.to_vec()),
            levels_m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "default_predictive")]
    pub predictive_draws: usize,
    /// Density family for the measured vs predicted comparison; defaults to
    /// the likelihood's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison_density: Option<DensityKind>,
    #[serde(default = "default_true")]
    pub plots: bool,
}

fn default_confidence() -> f64 {
    0.95
}

fn default_predictive() -> usize {
    nlupdate::diagnostics::PREDICTIVE_DRAWS
}

fn default_true() -> bool {
    true
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            confidence: default_confidence(),
            predictive_draws: default_predictive(),
            comparison_density: None,
            plots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_out() }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub chains: Option<usize>,
}

impl RunConfig {
    /// Reads a TOML config, or the config embedded in a JSON run or
    /// measurement manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let cfg: RunConfig = if is_json {
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            let inner = value
                .get("config")
                .or_else(|| value.get("extra").and_then(|e| e.get("config")))
                .cloned()
                .unwrap_or(value);
            let cfg: RunConfig = serde_json::from_value(inner)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            cfg.validate()?;
            cfg
        } else {
            Self::from_toml(&text).map_err(|e| match e {
                CliError::Config(m) => config_err(format!("{}: {m}", path.display())),
                other => other,
            })?
        };
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.mcmc.seed = seed;
            if let Some(t) = &mut self.truth {
                t.seed = seed;
            }
        }
        if let Some(c) = o.chains {
            self.mcmc.chains = c;
        }
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        self.template()?;
        self.initial_state()?;
        if let Some(t) = &self.truth {
            if t.samples.is_empty() {
                self.true_distribution()?;
                if t.count < 2 {
                    return Err(config_err(format!(
                        "[truth] count must be at least 2, got {}",
                        t.count
                    )));
                }
            } else {
                if !t.bounds.is_empty() {
                    return Err(config_err(
                        "[truth] give either `bounds` or `samples`, not both",
                    ));
                }
                self.injected_draws()?;
            }
        }
        if !self.prior.is_empty() {
            let prior = self.prior_spec()?;
            self.proposal_spec(&prior)?;
        }
        if self.mcmc.chains == 0 {
            return Err(config_err("[mcmc] chains must be at least 1"));
        }
        self.mcmc_settings().validate().map_err(|e| config_err(format!("[mcmc] {e}")))?;
        self.extraction_settings()?;
        self.grid_spec()?;
        if !(self.report.confidence > 0.0 && self.report.confidence < 1.0) {
            return Err(config_err("[report] confidence must lie in (0, 1)"));
        }
        if self.report.predictive_draws < 2 {
            return Err(config_err("[report] predictive_draws must be at least 2"));
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind
    }

    fn param_name(&self, key: &str, section: &str) -> Result<&'static str> {
        let kind = self.kind();
        kind.descriptor_by_key(key).map(|d| d.name).ok_or_else(|| {
            let expected: Vec<&str> = kind.parameters().iter().map(|d| d.key).collect();
            config_err(format!(
                "[{section}] unknown key `{key}` for model `{}`; expected one of {}",
                kind.as_str(),
                expected.join(", ")
            ))
        })
    }

    /// Ranges keyed by parameter name, in the model's parameter order.
    fn ordered_bounds(&self, ranges: &BTreeMap<String, RangeSpec>, section: &str) -> Result<Vec<Bounds>> {
        for key in ranges.keys() {
            self.param_name(key, section)?;
        }
        self.kind()
            .parameters()
            .iter()
            .filter_map(|d| ranges.get(d.key).map(|r| (d, r)))
            .map(|(d, r)| r.bounds(d.name, &format!("[{section}] {}", d.key)))
            .collect()
    }

    /// Model with every parameter set. Parameters missing from
    /// `[model.parameters]` take the midpoint of their truth or prior range.
    pub fn template(&self) -> Result<ModelSpec> {
        let kind = self.kind();
        for key in self.model.parameters.keys() {
            self.param_name(key, "model.parameters")?;
        }
        let truth = match &self.truth {
            Some(t) => self.ordered_bounds(&t.bounds, "truth.bounds")?,
            None => Vec::new(),
        };
        let prior = self.ordered_bounds(&self.prior, "prior")?;
        let mut values = Vec::new();
        for d in kind.parameters() {
            let v = self
                .model
                .parameters
                .get(d.key)
                .copied()
                .or_else(|| truth.iter().find(|b| b.name == d.name).map(Bounds::midpoint))
                .or_else(|| prior.iter().find(|b| b.name == d.name).map(Bounds::midpoint))
                .or_else(|| {
                    self.truth
                        .as_ref()
                        .and_then(|t| t.samples.first())
                        .and_then(|s| s.get(d.key).copied())
                })
                .ok_or_else(|| {
                    config_err(format!(
                        "[model.parameters] missing `{}` ({} [{}])",
                        d.key, d.name, d.unit
                    ))
                })?;
            values.push((d.name, v));
        }
        let mut spec = ModelSpec::from_values(kind, &values)
            .map_err(|e| config_err(format!("[model] {e}")))?;
        spec.friction_smoothing = self.model.friction_smoothing_m_per_s;
        spec.validate().map_err(|e| config_err(format!("[model] {e}")))?;
        Ok(spec)
    }

    pub fn initial_state(&self) -> Result<State> {
        let i = &self.initial;
        if !(i.x0_m.is_finite() && i.v0_m_per_s.is_finite() && i.z0.is_finite()) {
            return Err(config_err("[initial] values must be finite"));
        }
        if i.x0_m == 0.0 && i.v0_m_per_s == 0.0 {
            return Err(config_err("[initial] x0_m and v0_m_per_s are both zero; nothing decays"));
        }
        Ok(if self.kind().has_hysteresis() {
            State::with_z(i.x0_m, i.v0_m_per_s, i.z0)
        } else {
            State::new(i.x0_m, i.v0_m_per_s)
        })
    }

    pub fn true_distribution(&self) -> Result<TrueDistribution> {
        let t = self
            .truth
            .as_ref()
            .ok_or_else(|| config_err("a [truth] section is required to generate measurements"))?;
        if t.bounds.is_empty() {
            return Err(config_err("[truth] needs `bounds` or `samples`"));
        }
        TrueDistribution::new(self.ordered_bounds(&t.bounds, "truth.bounds")?)
            .map_err(|e| config_err(format!("[truth] {e}")))
    }

    /// Explicit `[[truth.samples]]` rows as parameter vectors.
    pub fn injected_draws(&self) -> Result<Vec<ParameterVector>> {
        let Some(t) = &self.truth else {
            return Ok(Vec::new());
        };
        if !t.samples.is_empty() && t.samples.len() < 2 {
            return Err(config_err("[[truth.samples]] needs at least 2 rows"));
        }
        t.samples
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut pv = ParameterVector::new();
                for d in self.kind().parameters() {
                    if let Some(&v) = row.get(d.key) {
                        pv.push(d.name, v, d.unit).map_err(|e| config_err(e.to_string()))?;
                    }
                }
                for key in row.keys() {
                    self.param_name(key, &format!("truth.samples[{i}]"))?;
                }
                Ok(pv)
            })
            .collect()
    }

    pub fn prior_spec(&self) -> Result<PriorSpec> {
        if self.prior.is_empty() {
            return Err(config_err("a [prior] section is required for sampling"));
        }
        PriorSpec::new(self.ordered_bounds(&self.prior, "prior")?)
            .map_err(|e| config_err(format!("[prior] {e}")))
    }

    pub fn proposal_spec(&self, prior: &PriorSpec) -> Result<ProposalSpec> {
        let p = &self.proposal;
        if !(p.fraction > 0.0 && p.fraction.is_finite()) {
            return Err(config_err("[proposal] fraction must be positive"));
        }
        let mut sd: Vec<f64> = prior.bounds().iter().map(|b| p.fraction * b.width()).collect();
        for (key, &value) in &p.sd {
            let name = self.param_name(key, "proposal.sd")?;
            let j = prior
                .bounds()
                .iter()
                .position(|b| b.name == name)
                .ok_or_else(|| config_err(format!("[proposal.sd] `{key}` is not a sampled parameter")))?;
            sd[j] = value;
        }
        ProposalSpec::new(sd).map_err(|e| config_err(format!("[proposal] {e}")))
    }

    pub fn mcmc_settings(&self) -> McmcSettings {
        McmcSettings {
            iterations: self.mcmc.iterations,
            burn_in_fraction: self.mcmc.burn_in_fraction,
        }
    }

    pub fn chain_seeds(&self) -> Vec<u64> {
        (0..self.mcmc.chains as u64)
            .map(|i| self.mcmc.seed.wrapping_add(i))
            .collect()
    }

    pub fn extraction_settings(&self) -> Result<ExtractionSettings> {
        let e = &self.extraction;
        if !(e.steps_per_period >= 20.0 && e.periods > 0.0) {
            return Err(config_err(
                "[extraction] steps_per_period must be at least 20 and periods positive",
            ));
        }
        let floor = match e.min_amplitude_m {
            None => AmplitudeFloor::Auto,
            Some(a) if a > 0.0 => AmplitudeFloor::Absolute(a),
            Some(a) => return Err(config_err(format!("[extraction] min_amplitude_m {a} must be positive"))),
        };
        Ok(ExtractionSettings {
            decay: DecaySettings {
                steps_per_period: e.steps_per_period,
                periods: e.periods,
            },
            floor,
        })
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let l = &self.likelihood;
        let spec = match (&l.levels_m, &l.grid_fractions) {
            (Some(levels), _) => GridSpec::Explicit(levels.clone()),
            (None, Some(f)) => GridSpec::Quantiles(f.clone()),
            (None, None) => GridSpec::default(),
        };
        let values = match &spec {
            GridSpec::Explicit(v) | GridSpec::Quantiles(v) => v,
        };
        if values.len() < 2 || values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err(
                "[likelihood] grid needs at least 2 strictly increasing values",
            ));
        }
        if let GridSpec::Quantiles(f) = &spec {
            if f.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
                return Err(config_err("[likelihood] grid_fractions must lie in (0, 1)"));
            }
        }
        Ok(spec)
    }

    pub fn comparison_density(&self) -> DensityKind {
        self.report.comparison_density.unwrap_or(self.likelihood.density)
    }

    /// `(key, unit)` of a parameter name, for table headers.
    pub fn key_of(&self, name: &str) -> (&'static str, &'static str) {
        self.kind()
            .descriptor(name)
            .map(|d| (d.key, d.unit))
            .unwrap_or(("", ""))
    }
}
