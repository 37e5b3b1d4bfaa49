//! Subcommand implementations and the on-disk layout of a run:
//!
//! ```text
//! <out>/measurements/   curve_NNN.csv + manifest.json
//! <out>/likelihood.json
//! <out>/chains/         chain_I.csv + chain_I.json
//! <out>/run.json        resolved config and chain index
//! <out>/report/         summary.txt, parameters.csv, slices.csv, warnings.txt,
//!                       report.json and SVG plots
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nlupdate::backbone::extract_backbone;
use nlupdate::diagnostics::{
    boundary_warnings, compare_slices, gelman_rubin, posterior_predictive, split_gelman_rubin,
    summarize, thinned_draws, SliceComparison, SummaryStats, MIN_RHAT_LENGTH,
};
use nlupdate::dynamics::TimeSeries;
use nlupdate::ensemble::{
    generate_measurements, measurements_from_parameters, MeasurementSet, Provenance,
};
use nlupdate::io;
use nlupdate::likelihood::LikelihoodModel;
use nlupdate::sampler::{
    overdispersed_starts, run_chains, tune_proposal, Chain, ChainManifest, PriorSpec, ProposalSpec,
};

use crate::config::RunConfig;
use crate::svg::{self, Series, PALETTE};
use crate::{CliError, Result};

pub const RUN_MANIFEST: &str = "run.json";

pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        Layout {
            root: cfg.output.dir.clone(),
        }
    }

    pub fn measurements(&self) -> PathBuf {
        self.root.join("measurements")
    }

    pub fn likelihood(&self) -> PathBuf {
        self.root.join("likelihood.json")
    }

    pub fn chains(&self) -> PathBuf {
        self.root.join("chains")
    }

    pub fn run_manifest(&self) -> PathBuf {
        self.root.join(RUN_MANIFEST)
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    io::atomic_write(path, text.as_bytes())?;
    Ok(())
}

fn config_value(cfg: &RunConfig) -> serde_json::Value {
    serde_json::json!({ "config": cfg })
}

/// Simulates the measurement ensemble described by `[truth]`.
pub fn generate(cfg: &RunConfig) -> Result<MeasurementSet> {
    let template = cfg.template()?;
    let ic = cfg.initial_state()?;
    let settings = cfg.extraction_settings()?;
    let injected = cfg.injected_draws()?;
    let set = if !injected.is_empty() {
        measurements_from_parameters(&template, injected, &ic, &settings)?
    } else {
        let dist = cfg.true_distribution()?;
        let t = cfg.truth.as_ref().expect("checked by true_distribution");
        generate_measurements(&template, &dist, t.count, &ic, &settings, t.seed)?
    };
    let dir = Layout::new(cfg).measurements();
    set.save(&dir, Some(config_value(cfg)))?;
    log::info!("wrote {} backbone curves to {}", set.len(), dir.display());
    Ok(set)
}

/// Extracts backbones from measured free-decay time series (`t_s, x_m` CSV
/// files, or directories of them).
pub fn extract(cfg: &RunConfig, inputs: &[PathBuf]) -> Result<MeasurementSet> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(|e| CliError::Io {
                    path: input.clone(),
                    source: e,
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.len() < 2 {
        return Err(CliError::Config(format!(
            "extract needs at least 2 time series, found {}",
            files.len()
        )));
    }
    let floor = cfg.extraction_settings()?.floor;
    let curves = files
        .iter()
        .map(|path| {
            let text = io::read_to_string(path)?;
            let ts = TimeSeries::from_csv(&text).map_err(|m| nlupdate::Error::Parse {
                path: path.clone(),
                message: m,
            })?;
            let mut curve = extract_backbone(&ts, floor.resolve(&ts))?;
            curve.source = None;
            Ok(curve)
        })
        .collect::<Result<Vec<_>>>()?;
    let set = MeasurementSet {
        curves,
        draws: Vec::new(),
        provenance: Provenance::File {
            path: inputs[0].clone(),
        },
    };
    let dir = Layout::new(cfg).measurements();
    set.save(&dir, Some(config_value(cfg)))?;
    log::info!("extracted {} backbone curves into {}", set.len(), dir.display());
    Ok(set)
}

/// The measured ensemble: `[measurements] dir` if set, otherwise the output
/// of a previous `generate` or `extract`.
pub fn load_measurements(cfg: &RunConfig) -> Result<MeasurementSet> {
    let dir = match &cfg.measurements {
        Some(m) => m.dir.clone(),
        None => Layout::new(cfg).measurements(),
    };
    if !dir.exists() {
        return Err(CliError::Config(format!(
            "no measurements at {}; run `generate` or `extract` first, or set [measurements] dir",
            dir.display()
        )));
    }
    Ok(MeasurementSet::load(&dir)?)
}

pub fn build_likelihood(cfg: &RunConfig) -> Result<LikelihoodModel> {
    let set = load_measurements(cfg)?;
    let model = LikelihoodModel::build(
        &set,
        &cfg.grid_spec()?,
        cfg.likelihood.density,
        cfg.template()?,
        cfg.initial_state()?,
        cfg.extraction_settings()?,
    )?;
    let path = Layout::new(cfg).likelihood();
    model.save(&path)?;
    log::info!(
        "likelihood with {} {:?} slices at {:?} m written to {}",
        model.densities.len(),
        model.kind(),
        model.grid.levels(),
        path.display()
    );
    Ok(model)
}

fn load_likelihood(cfg: &RunConfig) -> Result<LikelihoodModel> {
    let path = Layout::new(cfg).likelihood();
    if !path.exists() {
        return Err(CliError::Config(format!(
            "{} not found; run `build-likelihood` first",
            path.display()
        )));
    }
    Ok(LikelihoodModel::load(&path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub csv: String,
    pub manifest: String,
    pub seed: u64,
    pub burn_in: usize,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub proposal: ProposalSpec,
    pub tuned: bool,
    pub chains: Vec<ChainEntry>,
}

pub fn sample(cfg: &RunConfig) -> Result<Vec<Chain>> {
    let model = load_likelihood(cfg)?;
    let prior = cfg.prior_spec()?;
    let mut proposal = cfg.proposal_spec(&prior)?;
    let settings = cfg.mcmc_settings();
    let seeds = cfg.chain_seeds();
    let names = prior.names();
    let target = |theta: &[f64]| model.log_likelihood_at(&names, theta);
    let starts = overdispersed_starts(&target, &prior, &seeds)?;
    if cfg.proposal.tune {
        proposal = tune_proposal(
            &target,
            &prior,
            &proposal,
            &starts[0],
            cfg.proposal.tune_iterations,
            cfg.proposal.tune_rounds,
            seeds[0].wrapping_add(1_000_003),
        )?;
        log::info!("tuned proposal sd {:?}", proposal.sd);
    }
    log::info!(
        "running {} chain(s) of {} iterations",
        seeds.len(),
        settings.iterations
    );
    let chains = run_chains(&target, &prior, &proposal, &settings, &seeds, Some(starts))?;
    let layout = Layout::new(cfg);
    let dir = layout.chains();
    let mut entries = Vec::new();
    for (i, chain) in chains.iter().enumerate() {
        let csv = format!("chain_{i}.csv");
        let manifest = format!("chain_{i}.json");
        write_text(&dir.join(&csv), &chain.to_csv())?;
        io::write_json(&dir.join(&manifest), &chain.manifest(&prior, &proposal))?;
        log::info!(
            "chain {i} (seed {}): acceptance {:.3}",
            chain.seed,
            chain.acceptance_rate()
        );
        entries.push(ChainEntry {
            csv,
            manifest,
            seed: chain.seed,
            burn_in: chain.burn_in,
            acceptance_rate: chain.acceptance_rate(),
        });
    }
    let run = RunManifest {
        config: cfg.clone(),
        proposal,
        tuned: cfg.proposal.tune,
        chains: entries,
    };
    io::write_json(&layout.run_manifest(), &run)?;
    Ok(chains)
}

/// Chains written by a previous `sample`.
pub fn load_chains(cfg: &RunConfig) -> Result<(Vec<Chain>, PriorSpec)> {
    let layout = Layout::new(cfg);
    let path = layout.run_manifest();
    if !path.exists() {
        return Err(CliError::Config(format!(
            "{} not found; run `sample` first",
            path.display()
        )));
    }
    let run: RunManifest = io::read_json(&path)?;
    let mut prior = None;
    let mut chains = Vec::new();
    for e in &run.chains {
        let m: ChainManifest = io::read_json(&layout.chains().join(&e.manifest))?;
        let csv_path = layout.chains().join(&e.csv);
        let text = io::read_to_string(&csv_path)?;
        let chain = Chain::from_csv(&text, m.seed, m.burn_in).map_err(|message| {
            nlupdate::Error::Parse {
                path: csv_path.clone(),
                message,
            }
        })?;
        prior.get_or_insert(m.prior);
        chains.push(chain);
    }
    let prior = prior.ok_or_else(|| CliError::Config(format!("{} lists no chains", path.display())))?;
    Ok((chains, prior))
}

/// Everything `report` computes, also written as `report/report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub names: Vec<String>,
    pub summary: SummaryStats,
    pub acceptance: Vec<f64>,
    /// Basic and split R̂ per parameter; absent for a single chain.
    pub rhat: Option<Vec<f64>>,
    pub split_rhat: Option<Vec<f64>>,
    pub slices: Vec<SliceComparison>,
    pub warnings: Vec<String>,
    /// Mean and sd of the generating parameters, when known.
    pub truth: Vec<Option<(f64, f64)>>,
    pub prior: Vec<(f64, f64)>,
    pub notes: Vec<String>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v.sqrt())
}

pub fn report(cfg: &RunConfig) -> Result<Report> {
    let (chains, prior) = load_chains(cfg)?;
    let model = load_likelihood(cfg)?;
    let measured = load_measurements(cfg)?;
    report_from(cfg, &chains, &prior, &model, &measured)
}

pub fn report_from(
    cfg: &RunConfig,
    chains: &[Chain],
    prior: &PriorSpec,
    model: &LikelihoodModel,
    measured: &MeasurementSet,
) -> Result<Report> {
    let names = chains[0].names.clone();
    let confidence = cfg.report.confidence;
    let summary = summarize(chains, confidence)?;
    let mut notes = Vec::new();
    let (rhat, split_rhat) = if chains.len() < 2 {
        notes.push("R-hat not computed: only one chain was run".to_string());
        (None, None)
    } else if chains.iter().any(|c| c.kept().len() < MIN_RHAT_LENGTH) {
        notes.push(format!(
            "R-hat not computed: chains keep fewer than {MIN_RHAT_LENGTH} rows after burn-in"
        ));
        (None, None)
    } else {
        let basic = (0..names.len())
            .map(|j| gelman_rubin(chains, j))
            .collect::<nlupdate::Result<Vec<_>>>()?;
        let split = (0..names.len())
            .map(|j| split_gelman_rubin(chains, j))
            .collect::<nlupdate::Result<Vec<_>>>()?;
        (Some(basic), Some(split))
    };
    let draws = thinned_draws(chains, cfg.report.predictive_draws)?;
    let predicted = posterior_predictive(model, &names, &draws)?;
    let slices = compare_slices(measured, &predicted, &model.grid, cfg.comparison_density())?;
    let warnings = boundary_warnings(chains, prior)?;
    let truth = names
        .iter()
        .map(|n| {
            let v: Vec<f64> = measured
                .draws
                .iter()
                .filter_map(|d| d.get(n).ok())
                .collect();
            (v.len() >= 2 && v.len() == measured.draws.len()).then(|| mean_sd(&v))
        })
        .collect();
    let report = Report {
        names,
        summary,
        acceptance: chains.iter().map(Chain::acceptance_rate).collect(),
        rhat,
        split_rhat,
        slices,
        warnings,
        truth,
        prior: prior.bounds().iter().map(|b| b.moments()).collect(),
        notes,
    };
    let dir = Layout::new(cfg).report();
    write_text(&dir.join("summary.txt"), &summary_text(cfg, &report))?;
    write_text(&dir.join("parameters.csv"), &parameters_csv(cfg, &report))?;
    write_text(&dir.join("slices.csv"), &slices_csv(&report))?;
    let mut warn = report.warnings.join("\n");
    if !warn.is_empty() {
        warn.push('\n');
    }
    write_text(&dir.join("warnings.txt"), &warn)?;
    io::write_json(&dir.join("report.json"), &report)?;
    if cfg.report.plots {
        write_plots(cfg, &dir, chains, &report, model, measured, &predicted)?;
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report)
}

fn summary_text(cfg: &RunConfig, r: &Report) -> String {
    let mut s = String::new();
    if let Some(t) = &cfg.title {
        writeln!(s, "{t}").unwrap();
    }
    writeln!(
        s,
        "model {}, {} chain(s), {} pooled post-burn-in samples, {:.0}% intervals",
        cfg.kind().as_str(),
        r.acceptance.len(),
        r.summary.samples,
        100.0 * r.summary.confidence
    )
    .unwrap();
    let acc: Vec<String> = r.acceptance.iter().map(|a| format!("{a:.3}")).collect();
    writeln!(s, "acceptance: {}", acc.join(" ")).unwrap();
    writeln!(s).unwrap();
    writeln!(
        s,
        "{:<6} {:>14} {:>14} {:>14} {:>14} {:>10}",
        "param", "mean", "sd", "ci_low", "ci_high", "rhat"
    )
    .unwrap();
    for (j, p) in r.summary.parameters.iter().enumerate() {
        let rhat = r
            .rhat
            .as_ref()
            .map(|v| format!("{:.4}", v[j]))
            .unwrap_or_else(|| "-".into());
        writeln!(
            s,
            "{:<6} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>10}",
            p.name, p.mean, p.sd, p.ci_low, p.ci_high, rhat
        )
        .unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "slice density supports ({:?}):", cfg.comparison_density()).unwrap();
    for c in &r.slices {
        writeln!(
            s,
            "  a = {:.6e} m  measured [{:.4}, {:.4}] Hz  predicted [{:.4}, {:.4}] Hz",
            c.level, c.measured.support.0, c.measured.support.1, c.predicted.support.0, c.predicted.support.1
        )
        .unwrap();
    }
    for n in &r.notes {
        writeln!(s, "note: {n}").unwrap();
    }
    for w in &r.warnings {
        writeln!(s, "warning: {w}").unwrap();
    }
    s
}

fn parameters_csv(cfg: &RunConfig, r: &Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "parameter", "key", "unit", "true_mean", "true_sd", "prior_mean", "prior_sd", "posterior_mean",
        "posterior_sd", "ci_low", "ci_high", "rhat", "split_rhat",
    ])
    .unwrap();
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (j, p) in r.summary.parameters.iter().enumerate() {
        let (key, unit) = cfg.key_of(&p.name);
        let truth = r.truth[j];
        w.write_record([
            p.name.clone(),
            key.to_string(),
            unit.to_string(),
            opt(truth.map(|t| t.0)),
            opt(truth.map(|t| t.1)),
            r.prior[j].0.to_string(),
            r.prior[j].1.to_string(),
            p.mean.to_string(),
            p.sd.to_string(),
            p.ci_low.to_string(),
            p.ci_high.to_string(),
            opt(r.rhat.as_ref().map(|v| v[j])),
            opt(r.split_rhat.as_ref().map(|v| v[j])),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

fn slices_csv(r: &Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "level_m", "measured_kind", "measured_min_hz", "measured_max_hz", "predicted_kind",
        "predicted_min_hz", "predicted_max_hz",
    ])
    .unwrap();
    for c in &r.slices {
        w.write_record([
            c.level.to_string(),
            format!("{:?}", c.measured.kind()).to_lowercase(),
            c.measured.support.0.to_string(),
            c.measured.support.1.to_string(),
            format!("{:?}", c.predicted.kind()).to_lowercase(),
            c.predicted.support.0.to_string(),
            c.predicted.support.1.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

fn label(cfg: &RunConfig, name: &str) -> String {
    let (_, unit) = cfg.key_of(name);
    if unit.is_empty() || unit == "-" {
        name.to_string()
    } else {
        format!("{name} [{unit}]")
    }
}

fn write_plots(
    cfg: &RunConfig,
    dir: &Path,
    chains: &[Chain],
    r: &Report,
    model: &LikelihoodModel,
    measured: &MeasurementSet,
    predicted: &MeasurementSet,
) -> Result<()> {
    for (j, name) in r.names.iter().enumerate() {
        let series: Vec<Series> = chains
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let pts: Vec<(f64, f64)> = c
                    .samples
                    .iter()
                    .enumerate()
                    .map(|(t, row)| (t as f64, row[j]))
                    .collect();
                Series::line(svg::decimate(&pts, 2000), PALETTE[i % PALETTE.len()])
                    .thin(0.8, 0.8)
                    .labelled(&format!("chain {i} (seed {})", c.seed))
            })
            .collect();
        let svg = svg::line_plot(&format!("trace of {name}"), "iteration", &label(cfg, name), &series);
        write_text(&dir.join(format!("trace_{name}.svg")), &svg)?;
    }

    let pooled: Vec<Vec<f64>> = chains.iter().flat_map(|c| c.kept().iter().cloned()).collect();
    let pooled = svg::decimate(&pooled, 1500);
    let columns: Vec<Vec<f64>> = (0..r.names.len())
        .map(|j| pooled.iter().map(|row| row[j]).collect())
        .collect();
    let labels: Vec<String> = r.names.iter().map(|n| label(cfg, n)).collect();
    write_text(
        &dir.join("pairs.svg"),
        &svg::scatter_matrix("posterior draws", &labels, &columns),
    )?;

    let curve_series = |set: &MeasurementSet, color: &str| -> Vec<Series> {
        set.curves
            .iter()
            .map(|c| {
                let pts = c.points.iter().map(|p| (p.frequency_hz, p.amplitude)).collect();
                Series::line(pts, color).thin(0.6, 0.35)
            })
            .collect()
    };
    let mut series = curve_series(predicted, PALETTE[0]);
    let measured_series = curve_series(measured, "#222222")
        .into_iter()
        .map(|s| s.thin(1.0, 0.8));
    series.extend(measured_series);
    if let Some(s) = series.first_mut() {
        s.label = Some("posterior predictive".into());
    }
    if let Some(s) = series.get_mut(predicted.curves.len()) {
        s.label = Some("measured".into());
    }
    let fmin = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(f64::INFINITY, f64::min);
    let fmax = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(f64::NEG_INFINITY, f64::max);
    for &a in model.grid.levels() {
        series.push(Series::line(vec![(fmin, a), (fmax, a)], PALETTE[1]).thin(0.8, 0.8).dashed());
    }
    write_text(
        &dir.join("backbones.svg"),
        &svg::line_plot("backbone curves", "frequency [Hz]", "amplitude [m]", &series),
    )?;

    for (j, c) in r.slices.iter().enumerate() {
        let lo = c.measured.support.0.min(c.predicted.support.0);
        let hi = c.measured.support.1.max(c.predicted.support.1);
        let d = 0.05 * (hi - lo).max(1e-12);
        let xs: Vec<f64> = (0..=400).map(|i| lo - d + (hi - lo + 2.0 * d) * i as f64 / 400.0).collect();
        let curve = |s: &nlupdate::likelihood::SliceDensity| -> Vec<(f64, f64)> {
            xs.iter().map(|&x| (x, s.density.pdf(x))).collect()
        };
        let series = vec![
            Series::line(curve(&c.measured), "#333333").labelled("measured"),
            Series::line(curve(&c.predicted), PALETTE[0]).labelled("posterior predictive"),
        ];
        let svg = svg::line_plot(
            &format!("frequency density at a = {:.4e} m", c.level),
            "frequency [Hz]",
            "density [1/Hz]",
            &series,
        );
        write_text(&dir.join(format!("slice_{j}.svg")), &svg)?;
    }
    Ok(())
}

/// `generate` (unless `[measurements] dir` is set), `build-likelihood`,
/// `sample` and `report` in sequence.
pub fn pipeline(cfg: &RunConfig) -> Result<Report> {
    let measured = if cfg.measurements.is_none() {
        generate(cfg)?
    } else {
        load_measurements(cfg)?
    };
    build_likelihood(cfg)?;
    let model = load_likelihood(cfg)?;
    let chains = sample(cfg)?;
    let prior = cfg.prior_spec()?;
    report_from(cfg, &chains, &prior, &model, &measured)
}
