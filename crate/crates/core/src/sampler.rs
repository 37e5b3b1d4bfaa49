//! Random-walk Metropolis-Hastings over a uniform prior.

use rand::distr::Open01;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::Bounds;
use crate::error::{Error, Result};

/// Proposal standard deviation as a fraction of each prior width.
pub const DEFAULT_PROPOSAL_FRACTION: f64 = 0.05;
pub const DEFAULT_BURN_IN_FRACTION: f64 = 0.1;
pub const MIN_ITERATIONS: usize = 100;

/// Independent uniform priors on closed intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorSpec {
    bounds: Vec<Bounds>,
}

impl PriorSpec {
    pub fn new(bounds: Vec<Bounds>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Config("prior has no parameters".into()));
        }
        for (i, b) in bounds.iter().enumerate() {
            if !(b.lower.is_finite() && b.upper.is_finite() && b.lower < b.upper) {
                return Err(Error::Config(format!(
                    "prior bounds for `{}` must satisfy lower < upper, got [{}, {}]",
                    b.name, b.lower, b.upper
                )));
            }
            if bounds[..i].iter().any(|o| o.name == b.name) {
                return Err(Error::Config(format!("duplicate prior parameter `{}`", b.name)));
            }
        }
        Ok(PriorSpec { bounds })
    }

    pub fn bounds(&self) -> &[Bounds] {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.bounds.iter().map(|b| b.name.clone()).collect()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.bounds.iter().map(Bounds::midpoint).collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.bounds.len()
            && self.bounds.iter().zip(theta).all(|(b, &v)| b.contains(v))
    }

    /// 0 inside the closed box, −∞ outside.
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        if self.contains(theta) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Per-parameter standard deviations of the Gaussian random walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSpec {
    pub sd: Vec<f64>,
}

impl ProposalSpec {
    pub fn new(sd: Vec<f64>) -> Result<Self> {
        if sd.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config(format!(
                "proposal standard deviations must be positive, got {sd:?}"
            )));
        }
        Ok(ProposalSpec { sd })
    }

    /// `fraction` of each prior width.
    pub fn from_prior(prior: &PriorSpec, fraction: f64) -> Result<Self> {
        Self::new(prior.bounds.iter().map(|b| fraction * b.width()).collect())
    }
}

/// A proposal kernel `q(θ' | θ)`.
pub trait Proposal {
    fn propose<R: Rng>(&self, current: &[f64], rng: &mut R) -> Vec<f64>;
    /// `ln q(to | from)` up to a constant shared by all pairs.
    fn ln_q(&self, to: &[f64], from: &[f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianRandomWalk {
    sd: Vec<f64>,
}

impl GaussianRandomWalk {
    pub fn new(spec: &ProposalSpec) -> Self {
        GaussianRandomWalk {
            sd: spec.sd.clone(),
        }
    }
}

impl Proposal for GaussianRandomWalk {
    fn propose<R: Rng>(&self, current: &[f64], rng: &mut R) -> Vec<f64> {
        current
            .iter()
            .zip(&self.sd)
            .map(|(&x, &s)| {
                let z: f64 = rng.sample(StandardNormal);
                x + s * z
            })
            .collect()
    }

    fn ln_q(&self, to: &[f64], from: &[f64]) -> f64 {
        to.iter()
            .zip(from)
            .zip(&self.sd)
            .map(|((a, b), s)| -0.5 * ((a - b) / s).powi(2))
            .sum()
    }
}

/// `min(1, p(θ') q(θ|θ') / (p(θ) q(θ'|θ)))` from log quantities.
pub fn acceptance_probability(
    lp_proposed: f64,
    lp_current: f64,
    ln_q_reverse: f64,
    ln_q_forward: f64,
) -> f64 {
    if lp_proposed == f64::NEG_INFINITY {
        return 0.0;
    }
    let log_ratio = (lp_proposed + ln_q_reverse) - (lp_current + ln_q_forward);
    if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

/// Sampler state between iterations. Cloning it checkpoints the chain,
/// random stream included.
#[derive(Debug, Clone)]
pub struct MhState {
    pub theta: Vec<f64>,
    pub log_posterior: f64,
    rng: ChaCha20Rng,
}

impl MhState {
    pub fn new<F>(target: &F, prior: &PriorSpec, theta0: Vec<f64>, seed: u64) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + ?Sized,
    {
        let lp = log_posterior(target, prior, &theta0);
        if !prior.contains(&theta0) {
            return Err(Error::Initialization(format!(
                "start {theta0:?} lies outside the prior bounds"
            )));
        }
        if !lp.is_finite() {
            return Err(Error::Initialization(format!(
                "target is not finite at start {theta0:?} (got {lp})"
            )));
        }
        Ok(MhState {
            theta: theta0,
            log_posterior: lp,
            rng: ChaCha20Rng::seed_from_u64(seed),
        })
    }

    /// One Metropolis-Hastings transition; returns whether the proposal was
    /// accepted.
    pub fn step<F, P>(&mut self, target: &F, prior: &PriorSpec, proposal: &P) -> bool
    where
        F: Fn(&[f64]) -> f64 + ?Sized,
        P: Proposal,
    {
        let candidate = proposal.propose(&self.theta, &mut self.rng);
        let lp = log_posterior(target, prior, &candidate);
        let alpha = acceptance_probability(
            lp,
            self.log_posterior,
            proposal.ln_q(&self.theta, &candidate),
            proposal.ln_q(&candidate, &self.theta),
        );
        let u: f64 = self.rng.sample(Open01);
        if u <= alpha {
            self.theta = candidate;
            self.log_posterior = lp;
            true
        } else {
            false
        }
    }
}

/// Prior plus target; the target is skipped outside the prior support.
fn log_posterior<F>(target: &F, prior: &PriorSpec, theta: &[f64]) -> f64
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let lp = prior.log_prior(theta);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    let t = target(theta);
    if t.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp + t
    }
}

/// Output of one Metropolis-Hastings run. Row 0 is the start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub names: Vec<String>,
    pub samples: Vec<Vec<f64>>,
    pub log_posterior: Vec<f64>,
    /// Whether the transition into each row was accepted; `false` for row 0.
    pub accepted_flags: Vec<bool>,
    pub accepted: usize,
    pub seed: u64,
    pub burn_in: usize,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        acceptance_rate(self)
    }

    /// Rows after burn-in.
    pub fn kept(&self) -> &[Vec<f64>] {
        &self.samples[self.burn_in..]
    }

    /// Post-burn-in values of parameter `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.kept().iter().map(|r| r[j]).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// CSV with one row per iteration: parameters, `log_posterior`, `accepted`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.names.clone();
        header.push("log_posterior".into());
        header.push("accepted".into());
        w.write_record(&header).unwrap();
        for ((row, lp), acc) in self
            .samples
            .iter()
            .zip(&self.log_posterior)
            .zip(&self.accepted_flags)
        {
            let mut rec: Vec<String> = row.iter().map(f64::to_string).collect();
            rec.push(lp.to_string());
            rec.push(u8::from(*acc).to_string());
            w.write_record(&rec).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    /// Parses [`to_csv`](Self::to_csv) output; seed and burn-in come from the
    /// companion manifest.
    pub fn from_csv(text: &str, seed: u64, burn_in: usize) -> std::result::Result<Self, String> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = r
            .headers()
            .map_err(|e| e.to_string())?
            .iter()
            .map(str::to_string)
            .collect();
        let d = header.len().checked_sub(2).filter(|d| *d > 0).ok_or("too few columns")?;
        if header[d] != "log_posterior" || header[d + 1] != "accepted" {
            return Err("last two columns must be `log_posterior,accepted`".into());
        }
        let mut chain = Chain {
            names: header[..d].to_vec(),
            samples: Vec::new(),
            log_posterior: Vec::new(),
            accepted_flags: Vec::new(),
            accepted: 0,
            seed,
            burn_in,
        };
        for (line, record) in r.records().enumerate() {
            let record = record.map_err(|e| e.to_string())?;
            let parse = |i: usize| {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| format!("row {}: {e}", line + 2))
            };
            let row = (0..d).map(parse).collect::<std::result::Result<Vec<_>, _>>()?;
            chain.samples.push(row);
            chain.log_posterior.push(parse(d)?);
            let acc = match &record[d + 1] {
                "0" => false,
                "1" => true,
                other => return Err(format!("row {}: bad accepted flag `{other}`", line + 2)),
            };
            chain.accepted += usize::from(acc);
            chain.accepted_flags.push(acc);
        }
        if chain.samples.is_empty() || burn_in >= chain.samples.len() {
            return Err(format!(
                "burn-in {burn_in} must be smaller than the {} stored rows",
                chain.samples.len()
            ));
        }
        Ok(chain)
    }

    pub fn manifest(&self, prior: &PriorSpec, proposal: &ProposalSpec) -> ChainManifest {
        ChainManifest {
            seed: self.seed,
            iterations: self.len(),
            burn_in: self.burn_in,
            accepted: self.accepted,
            acceptance_rate: self.acceptance_rate(),
            start: self.samples[0].clone(),
            prior: prior.clone(),
            proposal: proposal.clone(),
        }
    }
}

/// Metadata stored next to a chain CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainManifest {
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub start: Vec<f64>,
    pub prior: PriorSpec,
    pub proposal: ProposalSpec,
}

/// `accepted / (T − 1)`; zero for a single-row chain.
pub fn acceptance_rate(chain: &Chain) -> f64 {
    if chain.len() < 2 {
        0.0
    } else {
        chain.accepted as f64 / (chain.len() - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcSettings {
    /// Rows per chain, start included.
    pub iterations: usize,
    pub burn_in_fraction: f64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            iterations: 20_000,
            burn_in_fraction: DEFAULT_BURN_IN_FRACTION,
        }
    }
}

impl McmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < MIN_ITERATIONS {
            return Err(Error::Config(format!(
                "at least {MIN_ITERATIONS} iterations are required, got {}",
                self.iterations
            )));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::Config("burn-in fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn burn_in(&self) -> usize {
        (self.burn_in_fraction * self.iterations as f64).round() as usize
    }
}

/// Single Metropolis-Hastings chain with a Gaussian random walk.
pub fn mh_run<F>(
    target: &F,
    prior: &PriorSpec,
    proposal: &ProposalSpec,
    theta0: Vec<f64>,
    settings: &McmcSettings,
    seed: u64,
) -> Result<Chain>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    settings.validate()?;
    check_dims(prior, proposal, &theta0)?;
    let kernel = GaussianRandomWalk::new(proposal);
    let mut state = MhState::new(target, prior, theta0, seed)?;
    let t = settings.iterations;
    let mut chain = Chain {
        names: prior.names(),
        samples: Vec::with_capacity(t),
        log_posterior: Vec::with_capacity(t),
        accepted_flags: Vec::with_capacity(t),
        accepted: 0,
        seed,
        burn_in: settings.burn_in(),
    };
    chain.samples.push(state.theta.clone());
    chain.log_posterior.push(state.log_posterior);
    chain.accepted_flags.push(false);
    for _ in 1..t {
        let acc = state.step(target, prior, &kernel);
        chain.accepted += usize::from(acc);
        chain.samples.push(state.theta.clone());
        chain.log_posterior.push(state.log_posterior);
        chain.accepted_flags.push(acc);
    }
    Ok(chain)
}

fn check_dims(prior: &PriorSpec, proposal: &ProposalSpec, theta0: &[f64]) -> Result<()> {
    if proposal.sd.len() != prior.dim() || theta0.len() != prior.dim() {
        return Err(Error::Config(format!(
            "dimension mismatch: prior {}, proposal {}, start {}",
            prior.dim(),
            proposal.sd.len(),
            theta0.len()
        )));
    }
    Ok(())
}

/// Draws per start candidate before falling back to the whole prior box.
const START_ATTEMPTS: usize = 200;

/// Starting points for `seeds.len()` chains. One chain starts at the prior
/// midpoint. Several chains get Latin-hypercube strata of the prior box, a
/// random point inside each, redrawn until the target is finite.
pub fn overdispersed_starts<F>(target: &F, prior: &PriorSpec, seeds: &[u64]) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    let n = seeds.len();
    if n == 0 {
        return Err(Error::Config("at least one chain is required".into()));
    }
    if n == 1 {
        return Ok(vec![prior.midpoint()]);
    }
    let mut layout = ChaCha20Rng::seed_from_u64(seeds[0]);
    layout.set_stream(2);
    let strata: Vec<Vec<usize>> = (0..prior.dim())
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut layout);
            p
        })
        .collect();
    seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let cell = |rng: &mut ChaCha20Rng, whole: bool| -> Vec<f64> {
                prior
                    .bounds
                    .iter()
                    .zip(&strata)
                    .map(|(b, perm)| {
                        let u: f64 = rng.random();
                        if whole {
                            b.lower + u * b.width()
                        } else {
                            b.lower + (perm[i] as f64 + u) / n as f64 * b.width()
                        }
                    })
                    .collect()
            };
            for whole in [false, true] {
                for _ in 0..START_ATTEMPTS {
                    let theta = cell(&mut rng, whole);
                    if log_posterior(target, prior, &theta).is_finite() {
                        return Ok(theta);
                    }
                }
            }
            Err(Error::Initialization(format!(
                "no start with finite target found for chain {i} after {} draws",
                2 * START_ATTEMPTS
            )))
        })
        .collect()
}

/// Independent chains run in parallel, one seed each. Without explicit
/// starts, [`overdispersed_starts`] is used.
pub fn run_chains<F>(
    target: &F,
    prior: &PriorSpec,
    proposal: &ProposalSpec,
    settings: &McmcSettings,
    seeds: &[u64],
    starts: Option<Vec<Vec<f64>>>,
) -> Result<Vec<Chain>>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    for (i, s) in seeds.iter().enumerate() {
        if seeds[..i].contains(s) {
            return Err(Error::Config(format!("chain seeds must be distinct, {s} repeats")));
        }
    }
    let starts = match starts {
        Some(s) if s.len() == seeds.len() => s,
        Some(s) => {
            return Err(Error::Config(format!(
                "{} starts given for {} chains",
                s.len(),
                seeds.len()
            )))
        }
        None => overdispersed_starts(target, prior, seeds)?,
    };
    seeds
        .par_iter()
        .zip(starts)
        .map(|(&seed, theta0)| mh_run(target, prior, proposal, theta0, settings, seed))
        .collect()
}

/// Acceptance band the pilot tuner aims for.
pub const TUNING_TARGET: (f64, f64) = (0.2, 0.5);

/// Rescales the proposal with short pilot runs until the pilot acceptance
/// rate falls inside [`TUNING_TARGET`] or `rounds` pilots have run.
pub fn tune_proposal<F>(
    target: &F,
    prior: &PriorSpec,
    proposal: &ProposalSpec,
    theta0: &[f64],
    pilot_iterations: usize,
    rounds: usize,
    seed: u64,
) -> Result<ProposalSpec>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let settings = McmcSettings {
        iterations: pilot_iterations,
        burn_in_fraction: 0.0,
    };
    let mut current = proposal.clone();
    let mut start = theta0.to_vec();
    for round in 0..rounds {
        let chain = mh_run(target, prior, &current, start, &settings, seed.wrapping_add(round as u64))?;
        let rate = chain.acceptance_rate();
        log::info!("pilot {round}: acceptance {rate:.3} with sd {:?}", current.sd);
        if rate >= TUNING_TARGET.0 && rate <= TUNING_TARGET.1 {
            break;
        }
        let factor = (rate / 0.35).clamp(0.1, 3.0);
        current = ProposalSpec::new(current.sd.iter().map(|s| s * factor).collect())?;
        start = chain.samples.last().unwrap().clone();
    }
    Ok(current)
}
