use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nlupdate::dynamics::{simulate_decay, DecaySettings, ModelKind, ModelSpec, State};
use nlupdate_cli::Report;

const SMALL: &str = r#"
[model]
kind = "cantilever_magnet"
parameters = { m_kg = 0.03842, c_ns_per_m = 0.07098 }

[initial]
x0_m = 1.0e-5

[[truth.samples]]
kl_n_per_m = 82.59
kn_n_per_m3 = 9.16e9
[[truth.samples]]
kl_n_per_m = 71.58
kn_n_per_m3 = 25.60e9
[[truth.samples]]
kl_n_per_m = 62.91
kn_n_per_m3 = 49.30e9
[[truth.samples]]
kl_n_per_m = 95.33
kn_n_per_m3 = 0.75e9

[prior]
kl_n_per_m = { lower = 50.0, upper = 110.0 }
kn_n_per_m3 = { lower = 0.0, upper = 50.0e9 }

[proposal]
fraction = 0.3

[mcmc]
iterations = 400
chains = 2
seed = 5

[likelihood]
density = "uniform"
grid_fractions = [0.25, 0.5, 0.75]

[report]
predictive_draws = 20
"#;

fn nlupdate(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlupdate"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "error")
        .output()
        .expect("launch nlupdate")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn pipeline_is_bitwise_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let first = nlupdate(&["pipeline"], &cfg, &out);
    assert!(first.status.success(), "{}", stderr(&first));
    let a = snapshot(&out);
    for expected in [
        "measurements/manifest.json",
        "likelihood.json",
        "chains/chain_0.csv",
        "chains/chain_1.json",
        "run.json",
        "report/summary.txt",
        "report/parameters.csv",
        "report/slices.csv",
        "report/warnings.txt",
        "report/pairs.svg",
        "report/trace_KL.svg",
        "report/backbones.svg",
        "report/slice_1.svg",
    ] {
        assert!(a.contains_key(Path::new(expected)), "missing {expected}");
    }
    let second = nlupdate(&["pipeline"], &cfg, &out);
    assert!(second.status.success());
    assert_eq!(a, snapshot(&out));

    // The run manifest carries the resolved config and reproduces the run.
    let again = nlupdate(&["pipeline"], &out.join("run.json"), &out);
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(a, snapshot(&out));
}

#[test]
fn stepwise_commands_match_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let piped = tmp.path().join("piped");
    assert!(nlupdate(&["pipeline"], &cfg, &piped).status.success());
    let steps = tmp.path().join("steps");
    for cmd in ["generate", "build-likelihood", "sample", "report"] {
        let o = nlupdate(&[cmd], &cfg, &steps);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let strip = |m: BTreeMap<PathBuf, Vec<u8>>| -> BTreeMap<PathBuf, Vec<u8>> {
        m.into_iter()
            .filter(|(p, _)| p != Path::new("run.json") && p != Path::new("measurements/manifest.json"))
            .collect()
    };
    assert_eq!(strip(snapshot(&piped)), strip(snapshot(&steps)));
}

#[test]
fn chain_csvs_have_one_row_per_iteration() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    assert!(nlupdate(&["pipeline"], &cfg, &out).status.success());
    let text = std::fs::read_to_string(out.join("chains/chain_0.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "KL,kn,log_posterior,accepted");
    assert_eq!(lines.count(), 400);
    let report: Report =
        serde_json::from_str(&std::fs::read_to_string(out.join("report/report.json")).unwrap()).unwrap();
    assert_eq!(report.names, vec!["KL", "kn"]);
    assert!(report.rhat.is_some());
    assert_eq!(report.slices.len(), 3);
}

#[test]
fn single_chain_report_omits_rhat() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let o = nlupdate(&["pipeline", "--chains", "1"], &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(out.join("report/summary.txt")).unwrap();
    assert!(summary.contains("R-hat not computed"), "{summary}");
    let csv = std::fs::read_to_string(out.join("report/parameters.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",,"), "{csv}");
}

#[test]
fn seed_override_changes_chains() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(nlupdate(&["pipeline"], &cfg, &a).status.success());
    assert!(nlupdate(&["pipeline", "--seed", "77"], &cfg, &b).status.success());
    let ca = std::fs::read(a.join("chains/chain_0.csv")).unwrap();
    let cb = std::fs::read(b.join("chains/chain_0.csv")).unwrap();
    assert_ne!(ca, cb);
    let manifest = std::fs::read_to_string(b.join("chains/chain_0.json")).unwrap();
    assert!(manifest.contains("\"seed\": 77"), "{manifest}");
}

#[test]
fn too_few_curves_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
[model]
kind = "cubic_stiffness"
parameters = { m_kg = 1.0, c1_ns_per_m = 1.1, k2_n_per_m3 = 6.25e6 }

[truth]
count = 1
bounds.k1_n_per_m = { lower = 6000.0, upper = 7000.0 }
"#;
    let cfg = write_config(tmp.path(), text);
    let o = nlupdate(&["generate"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at least 2"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("kl_n_per_m = { lower", "kl_per_m = { lower"));
    let o = nlupdate(&["pipeline"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kl_per_m"), "{}", stderr(&o));
}

#[test]
fn bad_arguments_exit_with_two() {
    let o = Command::new(env!("CARGO_BIN_EXE_nlupdate"))
        .args(["sample", "--chains", "many"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nlupdate(&["generate"], &tmp.path().join("absent.toml"), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn unreachable_grid_is_a_numerical_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace("grid_fractions = [0.25, 0.5, 0.75]", "levels_m = [1.0e-3, 2.0e-3]");
    let cfg = write_config(tmp.path(), &text);
    let o = nlupdate(&["pipeline"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("grid coverage"), "{}", stderr(&o));
}

#[test]
fn commands_out_of_order_explain_what_is_missing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let o = nlupdate(&["sample"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("build-likelihood"), "{}", stderr(&o));
}

#[test]
fn extract_reads_time_series() {
    let tmp = tempfile::tempdir().unwrap();
    let series = tmp.path().join("series");
    std::fs::create_dir(&series).unwrap();
    for (i, k1) in [6200.0, 6500.0, 6800.0].into_iter().enumerate() {
        let spec = ModelSpec::from_values(
            ModelKind::CubicStiffness,
            &[("m", 1.0), ("k1", k1), ("k2", 6.25e6), ("c1", 1.1)],
        )
        .unwrap();
        let ts = simulate_decay(&spec, &State::new(0.02, 0.0), &DecaySettings::default(), None).unwrap();
        std::fs::write(series.join(format!("run_{i}.csv")), ts.to_csv()).unwrap();
    }
    let text = r#"
[model]
kind = "cubic_stiffness"
parameters = { m_kg = 1.0, k1_n_per_m = 6500.0, k2_n_per_m3 = 6.25e6, c1_ns_per_m = 1.1 }
"#;
    let cfg = write_config(tmp.path(), text);
    let out = tmp.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_nlupdate"))
        .args(["extract", "--input"])
        .arg(&series)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let set = nlupdate::ensemble::MeasurementSet::load(&out.join("measurements")).unwrap();
    assert_eq!(set.len(), 3);
    let f0: Vec<f64> = set.curves.iter().map(|c| c.points.last().unwrap().frequency_hz).collect();
    assert!(f0[0] < f0[1] && f0[1] < f0[2], "{f0:?}");
    assert!(set.draws.is_empty());
}
