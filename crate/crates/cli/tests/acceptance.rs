//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! ```text
//! cargo test --release -p nlupdate-cli --test acceptance
//! ```

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use nlupdate::density::GevFit;
use nlupdate::dynamics::ModelKind;
use nlupdate::ensemble::{simulate_backbone, Bounds};
use nlupdate::sampler::{mh_run, McmcSettings, PriorSpec, ProposalSpec};
use nlupdate_cli::{Report, RunConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn within_rel(value: f64, target: f64, tol: f64) -> bool {
    ((value - target) / target).abs() <= tol
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

/// Runs `nlupdate pipeline` on a shipped config into a scratch directory and
/// reads back the report.
fn run_pipeline(name: &str, out: &Path) -> Result<(Report, f64), String> {
    let start = Instant::now();
    let run = Command::new(env!("CARGO_BIN_EXE_nlupdate"))
        .args(["pipeline", "--config"])
        .arg(config_path(name))
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| format!("cannot launch nlupdate: {e}"))?;
    if !run.status.success() {
        return Err(format!(
            "nlupdate pipeline on {name} failed with {}: {}",
            run.status,
            String::from_utf8_lossy(&run.stderr).trim()
        ));
    }
    let text = std::fs::read_to_string(out.join("report/report.json")).map_err(|e| e.to_string())?;
    let report = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    Ok((report, start.elapsed().as_secs_f64()))
}

fn mean_sd(r: &Report, name: &str) -> (f64, f64) {
    let p = r.summary.get(name).expect("parameter in report");
    (p.mean, p.sd)
}

fn criterion_1(scratch: &Path) -> Outcome {
    let (r, secs) = match run_pipeline("case1.toml", &scratch.join("case1")) {
        Ok(v) => v,
        Err(e) => return Outcome { pass: false, detail: e },
    };
    let (k1, k1_sd) = mean_sd(&r, "k1");
    let (k2, k2_sd) = mean_sd(&r, "k2");
    let (c1, c1_sd) = mean_sd(&r, "c1");
    let checks = [
        ("k1 mean", k1, 6500.0, 0.02),
        ("k2 mean", k2, 6.25e6, 0.02),
        ("c1 mean", c1, 1.1, 0.15),
        ("k1 sd", k1_sd, 245.15, 0.40),
        ("k2 sd", k2_sd, 0.14e6, 0.40),
        ("c1 sd", c1_sd, 0.5, 0.40),
    ];
    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, v, t, tol)| !within_rel(*v, *t, *tol))
        .map(|c| c.0)
        .collect();
    let mut detail = format!(
        "k1 {k1:.2} ± {k1_sd:.2}, k2 {k2:.4e} ± {k2_sd:.3e}, c1 {c1:.3} ± {c1_sd:.3}; {secs:.0} s"
    );
    if !failed.is_empty() {
        detail.push_str(&format!("; out of tolerance: {}", failed.join(", ")));
    }
    Outcome {
        pass: failed.is_empty(),
        detail,
    }
}

fn criterion_2(scratch: &Path) -> Outcome {
    let (r, secs) = match run_pipeline("case4.toml", &scratch.join("case4")) {
        Ok(v) => v,
        Err(e) => return Outcome { pass: false, detail: e },
    };
    let targets = [("A", 1.25), ("alpha", 0.65), ("beta", 1.52), ("gamma", 1.52)];
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, target) in targets {
        let (m, _) = mean_sd(&r, name);
        let ok = within_rel(m, target, 0.10);
        pass &= ok;
        parts.push(format!("{name} {m:.3} (target {target}{})", if ok { "" } else { ", out" }));
    }
    let acc_ok = r.acceptance.iter().all(|a| (0.2..=0.7).contains(a));
    pass &= acc_ok;
    let acc: Vec<String> = r.acceptance.iter().map(|a| format!("{a:.3}")).collect();
    Outcome {
        pass,
        detail: format!(
            "{}; acceptance {}{}; {secs:.0} s",
            parts.join(", "),
            acc.join("/"),
            if acc_ok { "" } else { " (out of [0.2, 0.7])" }
        ),
    }
}

fn criteria_3_4(scratch: &Path) -> (Outcome, Outcome) {
    let (r, _) = match run_pipeline("experimental.toml", &scratch.join("experimental")) {
        Ok(v) => v,
        Err(e) => {
            let o = || Outcome {
                pass: false,
                detail: e.clone(),
            };
            return (o(), o());
        }
    };
    let kl = r.summary.get("KL").unwrap();
    let width = kl.ci_high - kl.ci_low;
    let mean_ok = (75.0..=86.0).contains(&kl.mean);
    let width_ok = within_rel(width, 96.9 - 63.7, 0.30);
    let mid = &r.slices[r.slices.len() / 2];
    let (lo, hi) = mid.measured.support;
    let mid_ok = (lo - 6.450).abs() <= 0.05 && (hi - 8.051).abs() <= 0.05;
    let c3 = Outcome {
        pass: mean_ok && width_ok && mid_ok,
        detail: format!(
            "KL mean {:.2}{}, CI ({:.2}, {:.2}) width {width:.2}{}, Mid slice at {:.3e} m measured ({lo:.3}, {hi:.3}) Hz{} predicted ({:.3}, {:.3}) Hz",
            kl.mean,
            if mean_ok { "" } else { " (out of [75, 86])" },
            kl.ci_low,
            kl.ci_high,
            if width_ok { "" } else { " (out of 33.2 ± 30%)" },
            mid.level,
            if mid_ok { "" } else { " (off (6.450, 8.051) by more than 0.05)" },
            mid.predicted.support.0,
            mid.predicted.support.1,
        ),
    };
    let c4 = match &r.rhat {
        Some(rhat) => {
            let pass = r.acceptance.len() == 4 && rhat.iter().all(|v| *v <= 1.05);
            let parts: Vec<String> = r
                .names
                .iter()
                .zip(rhat)
                .map(|(n, v)| format!("{n} {v:.5}"))
                .collect();
            Outcome {
                pass,
                detail: format!("{} chains, R-hat {}", r.acceptance.len(), parts.join(", ")),
            }
        }
        None => Outcome {
            pass: false,
            detail: "R-hat missing from report".into(),
        },
    };
    (c3, c4)
}

fn criterion_5() -> Outcome {
    let cfg = RunConfig::load(&config_path("case1.toml")).unwrap();
    let spec = cfg.template().unwrap();
    let curve = simulate_backbone(&spec, &cfg.initial_state().unwrap(), &cfg.extraction_settings().unwrap()).unwrap();
    let p = &spec.params;
    let (m, k1, k2) = (p.get("m").unwrap(), p.get("k1").unwrap(), p.get("k2").unwrap());
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for pt in &curve.points {
        let a = pt.amplitude;
        if 0.75 * (k2 / k1) * a * a > 0.3 {
            continue;
        }
        let oracle = (k1 / m + 0.75 * (k2 / m) * a * a).sqrt() / (2.0 * std::f64::consts::PI);
        worst = worst.max(((pt.frequency_hz - oracle) / oracle).abs());
        checked += 1;
    }
    Outcome {
        pass: checked > 0 && worst <= 0.02,
        detail: format!(
            "{checked} backbone points (k1 {k1}, k2 {k2:.3e}, c1 {}), worst relative error {:.3}%",
            p.get("c1").unwrap(),
            100.0 * worst
        ),
    }
}

fn criterion_6() -> Outcome {
    let cfg = RunConfig::load(&config_path("case1.toml")).unwrap();
    let spec = cfg.template().unwrap().with_values([("k2", 0.0)]).unwrap();
    assert_eq!(spec.kind, ModelKind::CubicStiffness);
    let curve = simulate_backbone(&spec, &cfg.initial_state().unwrap(), &cfg.extraction_settings().unwrap()).unwrap();
    let (m, k1) = (spec.params.get("m").unwrap(), spec.params.get("k1").unwrap());
    let fn_hz = (k1 / m).sqrt() / (2.0 * std::f64::consts::PI);
    let worst = curve
        .points
        .iter()
        .map(|p| ((p.frequency_hz - fn_hz) / fn_hz).abs())
        .fold(0.0, f64::max);
    let (lo, hi) = curve.amplitude_range().unwrap();
    Outcome {
        pass: curve.len() > 10 && worst <= 1e-3,
        detail: format!(
            "{} points over a ∈ ({lo:.2e}, {hi:.2e}) m, f_n {fn_hz:.5} Hz, worst relative deviation {:.4}%",
            curve.len(),
            100.0 * worst
        ),
    }
}

fn criterion_7() -> Outcome {
    let prior = PriorSpec::new(vec![Bounds::new("x", -10.0, 10.0)]).unwrap();
    let proposal = ProposalSpec::new(vec![2.4]).unwrap();
    let settings = McmcSettings {
        iterations: 20_000,
        burn_in_fraction: 0.1,
    };
    let target = |x: &[f64]| -0.5 * x[0] * x[0];
    let chain = mh_run(&target, &prior, &proposal, vec![0.0], &settings, 1).unwrap();
    let x = chain.column(0);
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Outcome {
        pass: mean.abs() < 0.05 && var > 0.9 && var < 1.1,
        detail: format!(
            "mean {mean:.4}, variance {var:.4} from {} post-burn-in draws, acceptance {:.3}",
            x.len(),
            chain.acceptance_rate()
        ),
    }
}

fn criterion_8() -> Outcome {
    let truth = GevFit::new(0.292, 0.085, 1.635).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let draws: Vec<f64> = (0..5000)
        .map(|_| truth.quantile(rng.random_range(f64::EPSILON..1.0)))
        .collect();
    match GevFit::fit(&draws) {
        Ok(fit) => {
            let pass = within_rel(fit.k, truth.k, 0.1)
                && within_rel(fit.sigma, truth.sigma, 0.1)
                && within_rel(fit.mu, truth.mu, 0.1);
            Outcome {
                pass,
                detail: format!("fitted (k, σ, μ) = ({:.4}, {:.4}, {:.4})", fit.k, fit.sigma, fit.mu),
            }
        }
        Err(e) => Outcome {
            pass: false,
            detail: e.to_string(),
        },
    }
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut report = |id: u32, o: Outcome| {
        println!(
            "criterion {id}: {} {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, o));
    };
    report(1, criterion_1(scratch.path()));
    report(2, criterion_2(scratch.path()));
    let (c3, c4) = criteria_3_4(scratch.path());
    report(3, c3);
    report(4, c4);
    report(5, criterion_5());
    report(6, criterion_6());
    report(7, criterion_7());
    report(8, criterion_8());
    println!(
        "criterion 9: NOTE posterior sds of the other numerical cases and their acceptance rates are \
         not compared against published values; property tests cover them"
    );
    let failed: Vec<u32> = results.iter().filter(|(_, o)| !o.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" ({failed:?})")
        }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
