//! End-to-end runs of the `sieve` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn sieve(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sieve"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run sieve")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn report(path: PathBuf) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

const STEVENS_BASIS: [&str; 6] = ["--orders", "2,2", "--total-degree", "2", "--domain", "0:1,0:1"];

fn stevens_panel(dir: &Path, distortion: f64, seed: u64, out: &str) {
    let d = distortion.to_string();
    let s = seed.to_string();
    ok(&sieve(
        dir,
        &[
            "generate", "--truth", "stevens", "--kappa", "1", "--distortion", &d, "--errors", "iid",
            "--sigma2", "0.01", "--n", "500", "--tasks", "10", "--domain", "0:1,0:1", "--seed", &s,
            "--out", out,
        ],
    ));
}

fn stevens_test(dir: &Path, data: &str, out: &str) -> Value {
    let r = format!("{data}/responses.csv");
    let s = format!("{data}/stimuli.csv");
    let mut args = vec!["test", "--data", &r, "--stimuli", &s, "--constraint", "stevens", "--sigma", "plugin", "--out", out];
    args.extend(STEVENS_BASIS);
    let o = sieve(dir, &args);
    ok(&o);
    report(dir.join(out).join("report.json"))
}

#[test]
fn fit_of_the_synthetic_stevens_panel_has_six_terms() {
    let dir = tempfile::tempdir().unwrap();
    stevens_panel(dir.path(), 0.0, 7, "data");
    let mut args = vec![
        "fit", "--data", "data/responses.csv", "--stimuli", "data/stimuli.csv", "--out", "fit",
        "--derivative", "1,0", "--resolution", "5",
    ];
    args.extend(STEVENS_BASIS);
    ok(&sieve(dir.path(), &args));
    let r = report(dir.path().join("fit/report.json"));
    assert_eq!(r["params"], 6);
    assert_eq!(r["beta_hat"].as_array().unwrap().len(), 6);
    assert_eq!(r["version"], "sieve 0.1.0");
    assert_eq!(r["config"]["basis"]["total_degree"], 2);
    let surface = std::fs::read_to_string(dir.path().join("fit/surface.csv")).unwrap();
    let mut lines = surface.lines();
    assert_eq!(lines.next().unwrap(), "x1,x2,fhat,d1_0");
    assert_eq!(lines.count(), 25);
}

#[test]
fn missing_cell_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.csv"), "task_id,x1\na,-0.5\nb,0\nc,0.5\n").unwrap();
    std::fs::write(
        dir.path().join("r.csv"),
        "subject_id,task_id,response\n1,a,1\n1,b,2\n1,c,3\n2,a,1\n2,c,3\n",
    )
    .unwrap();
    let o = sieve(dir.path(), &["fit", "--data", "r.csv", "--stimuli", "s.csv", "--orders", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("incomplete panel at subject 2, task b"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn more_terms_than_tasks_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    stevens_panel(dir.path(), 0.0, 1, "data");
    let o = sieve(
        dir.path(),
        &["fit", "--data", "data/responses.csv", "--stimuli", "data/stimuli.csv", "--orders", "3,3", "--domain", "0:1,0:1"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("T = 10 < P = 16"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn stevens_null_is_retained_in_nine_of_ten_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut kept = 0;
    for seed in 0..100 {
        stevens_panel(dir.path(), 0.0, 1000 + seed, "data");
        let r = stevens_test(dir.path(), "data", "test");
        assert_eq!(r["wald"]["df"], 5);
        if r["wald"]["p_chi2"].as_f64().unwrap() > 0.05 {
            kept += 1;
        }
    }
    assert!(kept >= 90, "null retained in {kept}/100 runs");
}

#[test]
fn cubic_distortion_is_rejected_in_nine_of_ten_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut rejected = 0;
    for seed in 0..100 {
        stevens_panel(dir.path(), 0.2, 2000 + seed, "data");
        let r = stevens_test(dir.path(), "data", "test");
        if r["wald"]["p_chi2"].as_f64().unwrap() < 0.01 {
            rejected += 1;
        }
    }
    assert!(rejected >= 90, "distortion detected in {rejected}/100 runs");
}

#[test]
fn identity_restriction_at_the_estimate_gives_zero_statistic() {
    let dir = tempfile::tempdir().unwrap();
    stevens_panel(dir.path(), 0.0, 3, "data");
    let mut args = vec!["fit", "--data", "data/responses.csv", "--stimuli", "data/stimuli.csv", "--out", "fit"];
    args.extend(STEVENS_BASIS);
    ok(&sieve(dir.path(), &args));
    let beta: Vec<f64> = report(dir.path().join("fit/report.json"))["beta_hat"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let mut csv = String::from("c1,c2,c3,c4,c5,c6,gamma0\n");
    for (j, b) in beta.iter().enumerate() {
        let row: Vec<String> = (0..6).map(|k| if k == j { "1".into() } else { "0".into() }).collect();
        csv.push_str(&format!("{},{b:e}\n", row.join(",")));
    }
    std::fs::write(dir.path().join("m.csv"), csv).unwrap();
    let mut args = vec![
        "test", "--data", "data/responses.csv", "--stimuli", "data/stimuli.csv", "--constraint", "matrix_file",
        "--matrix-file", "m.csv", "--out", "test",
    ];
    args.extend(STEVENS_BASIS);
    ok(&sieve(dir.path(), &args));
    let r = report(dir.path().join("test/report.json"));
    assert!(r["wald"]["statistic"].as_f64().unwrap() < 1e-18, "{}", r["wald"]);
    assert_eq!(r["wald"]["df"], 6);
}

#[test]
fn degenerate_known_covariance_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    stevens_panel(dir.path(), 0.0, 4, "data");
    let ids: Vec<String> = (1..=10).map(|j| format!("t{j}")).collect();
    let mut csv = ids.join(",") + "\n";
    for _ in 0..10 {
        csv.push_str(&["0"; 10].join(","));
        csv.push('\n');
    }
    std::fs::write(dir.path().join("sigma.csv"), csv).unwrap();
    let mut args = vec![
        "test", "--data", "data/responses.csv", "--stimuli", "data/stimuli.csv", "--constraint", "stevens",
        "--sigma", "known", "--sigma-file", "sigma.csv", "--out", "test",
    ];
    args.extend(STEVENS_BASIS);
    let o = sieve(dir.path(), &args);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!dir.path().join("test").exists());
}

#[test]
fn bad_configs_produce_one_diagnostic_and_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    stevens_panel(dir.path(), 0.0, 5, "data");
    let base = ["test", "--data", "data/responses.csv", "--stimuli", "data/stimuli.csv"];
    for extra in [
        vec!["--orders", "2,2", "--domain", "0:1,0:1", "--constraint", "nonsense"],
        vec!["--orders", "2,2", "--domain", "0:1,0:1", "--constraint", "stevens", "--sigma", "known"],
        vec!["--orders", "2,x", "--constraint", "stevens"],
        vec!["--orders", "2,2", "--domain", "0:1", "--constraint", "stevens"],
        vec!["--orders", "2,2", "--domain", "0:1,0:1", "--constraint", "point", "--points", "0.5,0.5"],
    ] {
        let mut args: Vec<&str> = base.to_vec();
        args.extend(extra.iter());
        let o = sieve(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{extra:?}: {}", stderr(&o));
        assert_eq!(stderr(&o).trim_end().lines().count(), 1, "{extra:?}: {}", stderr(&o));
    }
    std::fs::write(dir.path().join("c.toml"), "[basis]\nordres = [2]\n").unwrap();
    let o = sieve(dir.path(), &["fit", "--config", "c.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("c.toml"));
}

#[test]
fn config_file_supplies_settings_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    stevens_panel(dir.path(), 0.0, 6, "data");
    std::fs::write(
        dir.path().join("run.toml"),
        "data = \"data/responses.csv\"\nstimuli = \"data/stimuli.csv\"\nout = \"from_file\"\n\
         [basis]\norders = [1, 1]\ndomain = [[0.0, 1.0], [0.0, 1.0]]\n\
         [constraint]\nkind = \"point\"\npoints = [[0.5, 0.5]]\nvalues = [0.0]\n",
    )
    .unwrap();
    ok(&sieve(dir.path(), &["test", "--config", "run.toml"]));
    let r = report(dir.path().join("from_file/report.json"));
    assert_eq!(r["params"], 4);
    assert_eq!(r["wald"]["df"], 1);
    ok(&sieve(dir.path(), &["test", "--config", "run.toml", "--orders", "2,2", "--out", "flags"]));
    let r = report(dir.path().join("flags/report.json"));
    assert_eq!(r["params"], 9);
    assert_eq!(r["config"]["constraint"]["kind"], "point");
}

fn cubic_panel(dir: &Path, seed: &str) {
    std::fs::write(
        dir.join("cubic.toml"),
        "[generate]\nn = 500\n\
         dgp = { truth = { kind = \"polynomial\", spec = { family = \"legendre\", orders = [3], domain = [[-1.0, 1.0]] }, coeffs = [0.2, 1.0, -0.5, 0.8] }, errors = { kind = \"iid\", sigma2 = 0.01 }, domain = [[-1.0, 1.0]] }\n\
         [design]\ntasks = 20\n",
    )
    .unwrap();
    ok(&sieve(dir, &["generate", "--config", "cubic.toml", "--seed", seed, "--out", "cubic"]));
}

#[test]
fn cv_selects_the_cubic() {
    let dir = tempfile::tempdir().unwrap();
    cubic_panel(dir.path(), "1");
    ok(&sieve(
        dir.path(),
        &["cv", "--data", "cubic/responses.csv", "--stimuli", "cubic/stimuli.csv", "--degrees", "1..6", "--out", "cv"],
    ));
    let r = report(dir.path().join("cv/report.json"));
    let cands = r["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 6);
    let chosen = &cands[r["selected"].as_u64().unwrap() as usize];
    assert_eq!(chosen["orders"][0], 3);
    assert_eq!(chosen["selected"], true);
    assert!(r["tie_break"].as_str().unwrap().contains("fewer terms"));
}

#[test]
fn cv_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    cubic_panel(dir.path(), "2");
    let data = ["--data", "cubic/responses.csv", "--stimuli", "cubic/stimuli.csv"];
    let mut args = vec!["cv"];
    args.extend(data);
    args.extend(["--degrees", "4..4", "--out", "one"]);
    ok(&sieve(dir.path(), &args));
    let r = report(dir.path().join("one/report.json"));
    assert_eq!(r["candidates"].as_array().unwrap().len(), 1);
    assert_eq!(r["selected"], 0);
    let mut args = vec!["cv"];
    args.extend(data);
    args.extend(["--degrees", "25..30", "--out", "none"]);
    let o = sieve(dir.path(), &args);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!dir.path().join("none").exists());
}

#[test]
fn design_command() {
    let dir = tempfile::tempdir().unwrap();
    let dev = |t: &str| {
        let out = format!("h{t}");
        ok(&sieve(dir.path(), &["design", "--generator", "halton", "--tasks", t, "--dim", "1", "--orders", "4", "--out", &out]));
        report(dir.path().join(out).join("report.json"))["gram_deviation"].as_f64().unwrap()
    };
    assert!(dev("256") < dev("64"));
    ok(&sieve(dir.path(), &["design", "--generator", "grid", "--counts", "3", "--domain", "-1:1", "--orders", "2", "--out", "g"]));
    let csv = std::fs::read_to_string(dir.path().join("g/stimuli.csv")).unwrap();
    let xs: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(xs, vec![-1.0, 0.0, 1.0]);
    let o = sieve(dir.path(), &["design", "--generator", "halton", "--tasks", "100", "--dim", "9", "--orders", "1,1,1,1,1,1,1,1,1", "--out", "d9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unsupported dimension 9"), "{}", stderr(&o));
}

const RATE_STUDY: &str = "seed = 3\n\
[simulate]\nstudy = \"rate\"\nreps = 20\nns = [50, 200]\ntasks = [10]\ngrid_resolution = 21\n\
dgp = { truth = { kind = \"polynomial\", spec = { family = \"legendre\", orders = [2], domain = [[-1.0, 1.0]] }, coeffs = [0.1, 0.5, -0.3] }, errors = { kind = \"factor\", sigma2_nu = 1.0, sigma2_u = 1.0 }, domain = [[-1.0, 1.0]] }\n\
[basis]\norders = [2]\n";

#[test]
fn simulate_writes_tidy_cells_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("rate.toml"), RATE_STUDY).unwrap();
    ok(&sieve(dir.path(), &["simulate", "--config", "rate.toml", "--out", "a"]));
    ok(&sieve(dir.path(), &["simulate", "--config", "rate.toml", "--out", "b"]));
    let a = std::fs::read(dir.path().join("a/cells.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b/cells.csv")).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a/study.json")).unwrap(),
        std::fs::read(dir.path().join("b/study.json")).unwrap()
    );
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "cell,n,tasks,params,reps,failures,metric,value");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.contains(",median_sup_error,")));
    let study = report(dir.path().join("a/study.json"));
    assert_eq!(study["result"]["kind"], "convergence");
    assert!(study["result"]["slope"]["slope"].as_f64().unwrap() < 0.0);

    let o = sieve(dir.path(), &["simulate", "--config", "rate.toml", "--reps", "0", "--out", "z"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("z").exists());
}

#[test]
fn simulate_wald_study_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "seed = 9\n\
[simulate]\nstudy = \"wald\"\nreps = 200\nns = [300]\ntasks = [10]\nlevel = 0.05\n\
dgp = { truth = { kind = \"polynomial\", spec = { family = \"legendre\", orders = [2], domain = [[-1.0, 1.0]] }, coeffs = [0.1, 0.5, -0.3] }, errors = { kind = \"iid\", sigma2 = 1.0 }, domain = [[-1.0, 1.0]] }\n\
[basis]\norders = [2]\n\
[sigma]\nmode = \"plugin\"\n\
[constraint]\nkind = \"point\"\npoints = [[0.0], [0.5]]\n";
    std::fs::write(dir.path().join("wald.toml"), cfg).unwrap();
    ok(&sieve(dir.path(), &["simulate", "--config", "wald.toml", "--out", "w"]));
    let study = report(dir.path().join("w/study.json"));
    let cell = &study["result"]["cells"][0];
    let rate = cell["rejection_rate"].as_f64().unwrap();
    assert!((0.0..0.15).contains(&rate), "{rate}");
    assert!(cell["median_plugin_gap"].as_f64().is_some());
    assert_eq!(study["config"]["sigma"], "plug_in");
}
