use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use mfswarm::evolution::{evolve, SwarmEvaluator};
use mfswarm::{ExperimentConfig, Repertoire};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfswarm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY: [&str; 8] = ["--generations", "2", "--batch", "4", "--evals", "1", "--duration", "60"];

fn evolve_to(dir: &Path, name: &str, seed: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["--seed", seed, "evolve", "--out", p(&out)];
    args.extend(TINY);
    args.extend(extra);
    ok(&args);
    out
}

#[test]
fn evolve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = evolve_to(dir.path(), "a.jsonl", "7", &[]);
    let b = evolve_to(dir.path(), "b.jsonl", "7", &["--workers", "1"]);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());

    let mut cfg = ExperimentConfig { seed: 7, ..Default::default() };
    cfg.evolution.generations = 2;
    cfg.evolution.batch = 4;
    cfg.evolution.evals_per_individual = 1;
    cfg.world.duration = 60.0;
    let evaluator = SwarmEvaluator::new(cfg.world.clone()).unwrap();
    let lib = evolve(&evaluator, &cfg.evolution, cfg.binning(), 7, cfg.config_hash()).unwrap();
    assert_eq!(String::from_utf8(bytes).unwrap(), lib.to_jsonl());

    let c = evolve_to(dir.path(), "c.jsonl", "8", &[]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn replay_names_a_bad_bin() {
    let dir = tempfile::tempdir().unwrap();
    let a = evolve_to(dir.path(), "a.jsonl", "1", &[]);
    let trace = dir.path().join("t.jsonl");
    let out = run(&["replay", "--archive", p(&a), "--bin", "99,0,0", "--out", p(&trace)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("(99, 0, 0)"), "{err}");

    let rep = Repertoire::load(&a).unwrap();
    let empty = (0..10).map(|i| mfswarm::Bin::new(i, 0, 0)).find(|b| rep.get(*b).is_none()).unwrap();
    let out = run(&["replay", "--archive", p(&a), "--bin", &format!("{},0,0", empty.0[0]), "--out", p(&trace)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains(&empty.to_string()));

    let good = rep.bins().next().unwrap();
    let arg = format!("{},{},{}", good.0[0], good.0[1], good.0[2]);
    ok(&["--seed", "3", "replay", "--archive", p(&a), "--bin", &arg, "--out", p(&trace), "--every", "10", "--duration", "60"]);
    let first = std::fs::read(&trace).unwrap();
    // step 0 and every 10th of 120 steps; the sampling steps are among them
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 13);
    ok(&["--seed", "3", "replay", "--archive", p(&a), "--bin", &arg, "--out", p(&trace), "--every", "10", "--duration", "60"]);
    assert_eq!(std::fs::read(&trace).unwrap(), first);
}

#[test]
fn merge_commutes() {
    let dir = tempfile::tempdir().unwrap();
    let a = evolve_to(dir.path(), "a.jsonl", "1", &[]);
    let b = evolve_to(dir.path(), "b.jsonl", "2", &[]);
    let ab = dir.path().join("ab.jsonl");
    let ba = dir.path().join("ba.jsonl");
    ok(&["merge", p(&a), p(&b), "--out", p(&ab)]);
    ok(&["merge", p(&b), p(&a), "--out", p(&ba)]);
    assert_eq!(std::fs::read(&ab).unwrap(), std::fs::read(&ba).unwrap());
    let merged = Repertoire::load(&ab).unwrap();
    let (ra, rb) = (Repertoire::load(&a).unwrap(), Repertoire::load(&b).unwrap());
    assert!(merged.len() >= ra.len().max(rb.len()));
    assert!(ra.bins().chain(rb.bins()).all(|bin| merged.get(bin).is_some()));
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("exp.toml");
    std::fs::write(&file, "seed = 3\n[evolution]\nbatch = 6\ngenerations = 9\n[world]\nduration = 120.0\n").unwrap();
    let out = ok(&["--config", p(&file), "config", "--batch", "4"]);
    let cfg = ExperimentConfig::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!((cfg.seed, cfg.evolution.batch, cfg.evolution.generations, cfg.world.duration), (3, 4, 9, 120.0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("# effective configuration"));
    let out = ok(&["--config", p(&file), "--seed", "11", "config"]);
    let cfg = ExperimentConfig::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!((cfg.seed, cfg.evolution.batch), (11, 6));
    let out = ok(&["config"]);
    let cfg = ExperimentConfig::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[world]\nwarp = 3\n").unwrap();
    for args in [
        vec!["evolve", "--out", "x.jsonl", "--bogus"],
        vec!["--config", p(&bad), "config"],
        vec!["--config", "/nonexistent/exp.toml", "config"],
        vec!["heatmap", "--archive", "/nonexistent/a.jsonl", "--axis", "network", "--out", "h.csv"],
        vec!["config", "--agents", "3"],
        vec!["frobnicate"],
    ] {
        let out = run(&args);
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let out = run(&["heatmap", "--archive", "/nonexistent/a.jsonl", "--axis", "network", "--out", "h.csv"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/a.jsonl"));
}

#[test]
fn studies_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = evolve_to(d, "a.jsonl", "5", &[]);
    let rep = Repertoire::load(&a).unwrap();
    let bins: Vec<String> = rep.bins().map(|b| format!("{},{},{}", b.0[0], b.0[1], b.0[2])).collect();

    let heat = d.join("heat.csv");
    ok(&["heatmap", "--archive", p(&a), "--axis", "network", "--out", p(&heat)]);
    let text = std::fs::read_to_string(&heat).unwrap();
    assert_eq!(text.lines().count(), 1 + 1 + 16);
    assert!(text.starts_with("row,s0,s1,"));

    let re = d.join("re.jsonl");
    let report = d.join("re.csv");
    ok(&["--seed", "2", "reevaluate", "--archive", p(&a), "--out", p(&re), "--report", p(&report), "--evals", "2", "--duration", "60"]);
    assert_eq!(std::fs::read_to_string(&report).unwrap().lines().count(), 1 + rep.len());

    let tr = d.join("tr");
    let targs = ["--seed", "4", "transition", "--archive", p(&a), "--from", &bins[0], "--to", bins.last().unwrap(), "--out-dir", p(&tr), "--repetitions", "3", "--window", "30", "--duration", "60"];
    ok(&targs);
    let summary = std::fs::read_to_string(tr.join("transition_summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "metric,transition_mean,band_low,band_high,within_band");
    assert_eq!(std::fs::read_to_string(tr.join("transition_windows.csv")).unwrap().lines().count(), 1 + 9);
    let series = std::fs::read(tr.join("transition_series.csv")).unwrap();
    ok(&targs);
    assert_eq!(std::fs::read(tr.join("transition_series.csv")).unwrap(), series);

    let el = d.join("el");
    let sidecar = d.join("a.uncertainty.jsonl");
    for b in &bins[..2.min(bins.len())] {
        ok(&["ellipse", "--archive", p(&a), "--bin", b, "--out-dir", p(&el), "--repetitions", "4", "--duration", "60", "--sidecar", p(&sidecar)]);
    }
    ok(&["ellipse", "--archive", p(&a), "--bin", &bins[0], "--out-dir", p(&el), "--repetitions", "4", "--duration", "60", "--sidecar", p(&sidecar)]);
    assert_eq!(std::fs::read_to_string(&sidecar).unwrap().lines().count(), 2.min(bins.len()));
    assert_eq!(std::fs::read_to_string(el.join("ellipse_samples.csv")).unwrap().lines().count(), 5);
    assert_eq!(std::fs::read_to_string(el.join("ellipse_slices.csv")).unwrap().lines().count(), 4);

    let ab = d.join("ab");
    ok(&["ablate", "--out-dir", p(&ab), "--runs", "2", "--masks", "11111111,01111111"]
        .into_iter()
        .chain(TINY)
        .collect::<Vec<_>>());
    let runs = std::fs::read_to_string(ab.join("ablation_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 4);
    let summary = std::fs::read_to_string(ab.join("ablation_summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("11111111,"));
}

#[test]
fn interrupt_leaves_a_valid_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.jsonl");
    let mut child = bin()
        .args(["--seed", "1", "--workers", "1", "evolve", "--out", p(&out), "--generations", "100000", "--batch", "4", "--evals", "1", "--duration", "60"])
        .stderr(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    loop {
        let line = lines.next().expect("evolve exited early").unwrap();
        if line.starts_with("generation 3:") {
            break;
        }
    }
    let status = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(status.success());
    let rest: Vec<String> = lines.map_while(Result::ok).collect();
    let code = child.wait().unwrap().code();
    assert_eq!(code, Some(130), "{rest:?}");
    assert!(rest.iter().any(|l| l.starts_with("interrupted: snapshot")), "{rest:?}");
    let rep = Repertoire::load(&out).unwrap();
    assert!(!rep.is_empty());
    assert!(!dir.path().join("run.jsonl.tmp").exists());
}
