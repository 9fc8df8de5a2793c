use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ppisvrg"))
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    fs::write(&path, body).unwrap();
    path
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(cmd).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn ok(output: &Output) {
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
}

fn error_json(output: &Output) -> Value {
    assert!(!output.status.success());
    let text = String::from_utf8_lossy(&output.stderr);
    let v: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap_or_else(|e| panic!("{e}: {text}"));
    v["error"].clone()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

const QUADRATIC: &str = r#"
seed = 11

[data.synthetic]
n = 200
N = 400
outcome_kind = "continuous"
theta_star = [1.0]
pred_noise_sigma = 0.5

[optimizer]
eta = 0.1
inner_steps = 50
epochs = 12
theta0 = [4.0]
"#;

#[test]
fn gen_writes_dataset_and_echo_reproduces_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), QUADRATIC);
    let first = tmp.path().join("a");
    ok(&run("gen", &cfg, &first, &[]));
    let csv = fs::read(first.join("dataset.csv")).unwrap();
    let meta: Value = serde_json::from_slice(&fs::read(first.join("dataset.json")).unwrap()).unwrap();
    assert_eq!((meta["n"].as_u64(), meta["N"].as_u64()), (Some(200), Some(400)));
    assert_eq!(String::from_utf8_lossy(&csv).lines().count(), 601);

    let second = tmp.path().join("b");
    ok(&run("gen", &first.join("config.toml"), &second, &[]));
    assert_eq!(fs::read(second.join("dataset.csv")).unwrap(), csv);

    let third = tmp.path().join("c");
    ok(&run("gen", &cfg, &third, &["--seed", "12"]));
    assert_ne!(fs::read(third.join("dataset.csv")).unwrap(), csv);
}

#[test]
fn compare_gap_columns_match_when_predictions_are_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
seed = 3
[data.synthetic]
n = 40
N = 0
outcome_kind = "continuous"
dim = 3
theta_star = [1.0, -0.5, 2.0]
pred_noise_sigma = 0.0

[model]
kind = "ridge"
regularization = 0.1

[optimizer]
inner_steps = 30
epochs = 5
record_every = 5
"#,
    );
    let out = tmp.path().join("out");
    ok(&run("compare", &cfg, &out, &[]));
    let read = |alg: &str| fs::read_to_string(out.join(format!("trajectory_{alg}.csv"))).unwrap();
    let (svrg, ppi) = (read("svrg"), read("ppi_svrg"));
    assert_eq!(column(&svrg, "gap"), column(&ppi, "gap"));
    assert!(column(&svrg, "gap").iter().any(|g| !g.is_empty()));
    assert_eq!(svrg, ppi);
    for alg in ["sgd", "ppi_svrg_pp"] {
        assert!(read(alg).starts_with("epoch,t,gap,v_norm,mu_norm\n"));
    }
}

#[test]
fn optimize_json_embeds_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), QUADRATIC);
    let out = tmp.path().join("out");
    ok(&run("optimize", &cfg, &out, &["--format", "json"]));
    let doc: Value = serde_json::from_slice(&fs::read(out.join("trajectory.json")).unwrap()).unwrap();
    assert_eq!(doc["config"]["seed"], 11);
    assert_eq!(doc["config"]["output"]["format"], "json");
    assert_eq!(doc["trajectory"]["algorithm"], "ppi_svrg");
    assert_eq!(doc["trajectory"]["gaps"].as_array().unwrap().len(), 13);
    assert_eq!(doc["trajectory"]["total_inner_iterations"], 600);
}

#[test]
fn mc_forest_analog_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
seed = 5
[data.synthetic]
n = 160
N = 1436
outcome_kind = "binary"
prevalence = 0.1516
flip_prob = 0.05

[model]
kind = "mean_sq"
aux_mode = "calibrated"

[optimizer]
eta = 0.01
inner_steps = 200
epochs = 3

[protocol]
reps = 6

[protocol.bootstrap]
reps = 5
"#,
    );
    let out = tmp.path().join("out");
    ok(&run("mc", &cfg, &out, &["--jobs", "1"]));
    let csv = fs::read_to_string(out.join("mc.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 15);
    let gammas: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(gammas.into_iter().collect::<Vec<_>>(), ["0.1", "0.2", "0.3", "0.4", "0.5"]);
    for m in ["naive", "ppi", "ppi_svrg"] {
        assert_eq!(rows.iter().filter(|r| r.starts_with(&format!("{m},"))).count(), 5);
    }

    let again = tmp.path().join("again");
    ok(&run("mc", &out.join("config.toml"), &again, &[]));
    assert_eq!(fs::read_to_string(again.join("mc.csv")).unwrap(), csv);
}

#[test]
fn bound_holds_on_certified_quadratic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), QUADRATIC);
    let out = tmp.path().join("out");
    ok(&run("bound", &cfg, &out, &["--format", "json"]));
    let doc: Value = serde_json::from_slice(&fs::read(out.join("bound.json")).unwrap()).unwrap();
    assert_eq!(doc["satisfied"], true);
    assert_eq!(doc["alpha"], 0.5);
    assert_eq!(doc["beta"], 0.125);
    assert_eq!(doc["floor"], 0.25);
    assert_eq!(doc["bound_curve"].as_array().unwrap().len(), 13);
    assert_eq!(doc["empirical_gaps"].as_array().unwrap().len(), 13);
    assert_eq!(doc["config"]["seed"], 11);
}

#[test]
fn bound_refuses_large_step() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &QUADRATIC.replace("eta = 0.1", "eta = 0.5"));
    let err = error_json(&run("bound", &cfg, &tmp.path().join("out"), &[]));
    assert_eq!(err["kind"], "invalid_step_size");
    assert_eq!(err["field"], "optimizer.eta");
    assert!(!tmp.path().join("out").join("bound.json").exists());
}

#[test]
fn config_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let both = QUADRATIC.replace("[data.synthetic]", "[data]\npath = \"x.csv\"\n[data.synthetic]");
    let err = error_json(&run("optimize", &write_config(tmp.path(), &both), tmp.path(), &[]));
    assert_eq!((err["kind"].as_str(), err["field"].as_str()), (Some("config"), Some("data")));

    let typo = QUADRATIC.replace("epochs = 12", "epoch = 12");
    let err = error_json(&run("optimize", &write_config(tmp.path(), &typo), tmp.path(), &[]));
    assert!(err["message"].as_str().unwrap().contains("epoch"));

    let out = bin().arg("gen").output().unwrap();
    assert_eq!(error_json(&out)["field"], "config");
}

#[test]
fn file_dataset_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), QUADRATIC);
    let gen_dir = tmp.path().join("gen");
    ok(&run("gen", &cfg, &gen_dir, &[]));
    let from_file = QUADRATIC.replace(
        "[data.synthetic]\nn = 200\nN = 400\noutcome_kind = \"continuous\"\ntheta_star = [1.0]\npred_noise_sigma = 0.5\n",
        &format!("[data]\npath = {:?}\n", gen_dir.join("dataset.csv")),
    );
    assert_ne!(from_file, QUADRATIC);
    let file_cfg = write_config(tmp.path(), &from_file);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&run("optimize", &cfg, &a, &[]));
    ok(&run("optimize", &file_cfg, &b, &[]));
    assert_eq!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(b.join("trajectory.csv")).unwrap());
}
