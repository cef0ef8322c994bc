use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_ebin");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let status = Command::new(BIN)
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .args(extra)
        .stderr(Stdio::null())
        .status()
        .unwrap();
    status.code().unwrap()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn geodesic_run_succeeds_and_lists_its_files() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("g");
    assert_eq!(run("geodesic", &configs().join("geodesic.conf"), &out, &[]), 0);
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["checks"][0]["name"], "energy_conservation");
    let mut listed: Vec<String> = m["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap().to_string()).collect();
    listed.push("manifest.json".into());
    listed.sort();
    let mut present: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    present.sort();
    assert_eq!(listed, present);
}

#[test]
fn failed_check_exits_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.conf",
        "metric_scale = 2\nvelocity = constant:0.4,-0.5,0.2,0.3,0.5,-0.7\ndt = 0.1\nenergy_tolerance = 1e-300\n",
    );
    let out = tmp.path().join("o");
    assert_eq!(run("geodesic", &cfg, &out, &[]), 1);
    let m = manifest(&out);
    assert_eq!(m["status"], "check_failed");
    assert_eq!(m["checks"][0]["pass"], false);
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    for (i, body) in ["colour = blue\n", "dt = fast\n", "dt = 0.1\ndt = 0.2\n", "nu = -1\n", "noise_basis = lie:sin1\n"]
        .iter()
        .enumerate()
    {
        let cfg = write_config(tmp.path(), &format!("c{i}.conf"), body);
        let out = tmp.path().join(format!("o{i}"));
        assert_eq!(run("geodesic", &cfg, &out, &[]), 2, "config {body:?}");
        let m = manifest(&out);
        assert_eq!(m["exit_code"], 2);
        assert!(m["failure"]["message"].as_str().unwrap().len() > 3);
    }
    let missing = tmp.path().join("absent.conf");
    assert_eq!(run("geodesic", &missing, &tmp.path().join("m"), &[]), 2);
}

#[test]
fn usage_errors_exit_two() {
    let status = Command::new(BIN).arg("levitate").stderr(Stdio::null()).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = Command::new(BIN).arg("geodesic").stderr(Stdio::null()).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn collapsing_metric_exits_three_with_the_failure_time() {
    // g(t) = (1 - 3t/4)^(4/3) I reaches zero at t = 4/3
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.conf", "initial = conformal:-1\nt_end = 2\ndt = 1e-3\n");
    let out = tmp.path().join("o");
    assert_eq!(run("geodesic", &cfg, &out, &[]), 3);
    let m = manifest(&out);
    assert_eq!(m["status"], "degenerate_metric");
    let t = m["failure"]["time"].as_f64().unwrap();
    assert!(t > 1.2 && t <= 4.0 / 3.0 + 1e-3, "failure time {t}");
    assert!(m["failure"]["min_eigenvalue"].as_f64().unwrap() < 1e-3);
}

#[test]
fn unwritable_output_exits_four() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    assert_eq!(run("geodesic", &configs().join("geodesic.conf"), &blocker, &[]), 4);
}

#[test]
fn noiseless_el_matches_the_geodesic() {
    let tmp = TempDir::new().unwrap();
    let body = "metric_scale = 2\nvelocity = constant:0.4,-0.5,0.2,0.3,0.5,-0.7\nnoise_basis = elementary\ndt = 1e-2\n";
    let cfg = write_config(tmp.path(), "c.conf", body);
    assert_eq!(run("geodesic", &cfg, &tmp.path().join("g"), &[]), 0);
    assert_eq!(run("el", &cfg, &tmp.path().join("e"), &[]), 0);
    let rows = |p: PathBuf| -> Vec<Vec<f64>> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
            .collect()
    };
    let g = rows(tmp.path().join("g/trajectory.csv"));
    let e = rows(tmp.path().join("e/trajectory.csv"));
    assert_eq!(g.len(), e.len());
    assert_eq!(e[0].len(), 14);
    for (a, b) in g.iter().zip(&e) {
        for c in 0..8 {
            assert!((a[c] - b[c]).abs() <= 1e-10, "{} vs {}", a[c], b[c]);
        }
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("sde.conf");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let ca = run("sde", &cfg, &a, &["--samples", "400", "--threads", "1"]);
    let cb = run("sde", &cfg, &b, &["--samples", "400", "--threads", "8"]);
    assert_eq!(ca, cb);
    for f in ["samples.csv", "drift.csv", "sde_summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_override_changes_samples_and_digest() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("sde.conf");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run("sde", &cfg, &a, &["--samples", "50", "--seed", "1"]);
    run("sde", &cfg, &b, &["--samples", "50", "--seed", "2"]);
    assert_ne!(std::fs::read(a.join("drift.csv")).unwrap(), std::fs::read(b.join("drift.csv")).unwrap());
    assert_ne!(manifest(&a)["config_digest"], manifest(&b)["config_digest"]);
    assert_eq!(manifest(&a)["seed"], 1);
}

#[test]
fn digest_tracks_settings_not_formatting() {
    let tmp = TempDir::new().unwrap();
    let base = "initial = conformal:1\ndt = 0.01\n";
    let c1 = write_config(tmp.path(), "c1.conf", base);
    let c2 = write_config(tmp.path(), "c2.conf", &format!("# same run\n\n{base}output_dir = elsewhere\n"));
    let c3 = write_config(tmp.path(), "c3.conf", "initial = conformal:1\ndt = 0.02\n");
    let digest = |c: &Path, o: &str| {
        let out = tmp.path().join(o);
        assert_eq!(run("geodesic", c, &out, &[]), 0);
        manifest(&out)["config_digest"].as_str().unwrap().to_string()
    };
    let (d1, d2, d3) = (digest(&c1, "o1"), digest(&c2, "o2"), digest(&c3, "o3"));
    assert_eq!(d1, d2);
    assert_ne!(d1, d3);
    assert_eq!(d1.len(), 64);
}

#[test]
fn verification_reports_carry_the_digest() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run("verify-ibp", &configs().join("verify-ibp.conf"), &out, &["--samples", "200"]), 0);
    let m = manifest(&out);
    let text = std::fs::read_to_string(out.join("report.json")).unwrap();
    let r: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(r["config_digest"], m["config_digest"]);
    assert_eq!(r["samples"], 200);
    let pos = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
    assert!(pos("lhs") < pos("rhs") && pos("rhs") < pos("se") && pos("se") < pos("samples") && pos("samples") < pos("pass"));
}

#[test]
fn field_files_feed_the_initial_metric() {
    let tmp = TempDir::new().unwrap();
    let csv = "point,g11,g12,g22\n0,2.0,0.1,1.0\n1,2.0,0.0,1.0\n2,1.5,0.0,1.0\n3,1.0,0.0,1.0\n";
    std::fs::write(tmp.path().join("g0.csv"), csv).unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.conf",
        "dimension = 2\nlattice_points = 2\nextent = 1\ninitial = file:g0.csv\nvelocity = constant:0.1,0,0.1\ndt = 0.1\n",
    );
    let out = tmp.path().join("o");
    assert_eq!(run("geodesic", &cfg, &out, &[]), 0);
    let traj = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,point_index,g11,g12,g22\n0.0,0,2.0,0.1,1.0\n"));

    let bad = write_config(tmp.path(), "bad.conf", "dimension = 2\nlattice_points = 4\ninitial = file:g0.csv\n");
    assert_eq!(run("geodesic", &bad, &tmp.path().join("b"), &[]), 2);
}

#[test]
fn convergence_reports_the_fitted_order() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run("convergence", &configs().join("convergence.conf"), &out, &[]), 0);
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("dt,error,fitted_order"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.windows(2).all(|w| w[1][0] < w[0][0] && w[1][1] < w[0][1]));
    assert!(rows[0][2] >= 3.5);
}

#[test]
fn config_seeds_parse_or_fail_cleanly() {
    use ebin_cli::config::RunConfig;
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/run_config");
    let mut valid = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        if let Ok(cfg) = RunConfig::parse(&text) {
            if cfg.validate().is_ok() {
                valid += 1;
            }
        }
    }
    assert!(valid >= 10);
}
