use std::fs;
use std::path::Path;
use std::process::Command;

use fairdarts::derivation::{parse_genotype, ChainGenotype};
use fairdarts::searchspace::{OpKind, INTERMEDIATE_NODES};

const BIN: &str = env!("CARGO_BIN_EXE_fairdarts");

const TINY: &str = r#"
name = "tiny"
seeds = [0, 1]

[spec]
space = "s2"
layers = 3
feature_dim = 4

[search]
mode = "sigmoid"
loss_variant = "squared"
epochs = 3
batch_size = 64

[data]
dim = 4
n_train = 128
n_val = 128
"#;

fn fairdarts(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(BIN)
        .args(args)
        .env("FAIRDARTS_OUT", out)
        .output()
        .expect("binary runs")
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for f in ["trajectory.csv", "final_alpha.json", "genotype.txt", "report.json"] {
        files.push((f.to_string(), fs::read(dir.join(f)).unwrap()));
    }
    files
}

#[test]
fn search_is_deterministic_and_derive_reads_its_alpha() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.cfg");
    fs::write(&cfg, TINY).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = fairdarts(&["search", "--config", cfg.to_str().unwrap(), "--seed", "1"], out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let run_a = a.join("tiny").join("1");
    assert_eq!(read_all(&run_a), read_all(&b.join("tiny").join("1")));
    assert!(!a.join("tiny").join("0").exists());

    let alpha = run_a.join("final_alpha.json");
    let o = fairdarts(&["derive", "--alpha", alpha.to_str().unwrap(), "--mode", "fair", "--threshold", "0.85"], tmp.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    ChainGenotype::from_json(text.trim()).unwrap();

    let traj = run_a.join("trajectory.csv");
    let o = fairdarts(&["analyze", "--trajectory", traj.to_str().unwrap(), "--mode", "sigmoid"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["epochs"].as_array().unwrap().len(), 4);
}

#[test]
fn effective_config_is_written() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.cfg");
    fs::write(&cfg, TINY).unwrap();
    let o = fairdarts(&["search", "--config", cfg.to_str().unwrap(), "--seed", "0"], tmp.path());
    assert!(o.status.success());
    let written = fs::read_to_string(tmp.path().join("tiny").join("config.toml")).unwrap();
    let parsed = fairdarts::harness::ExperimentConfig::parse(&written).unwrap();
    let mut original = fairdarts::harness::ExperimentConfig::parse(TINY).unwrap();
    original.seeds = vec![0];
    assert_eq!(parsed, original);
}

#[test]
fn sample_respects_skip_cap() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fairdarts(&["sample", "--m", "2", "--count", "7"], tmp.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    for l in lines {
        let g = parse_genotype(l).unwrap();
        for cell in g.cells() {
            assert!(cell.count(OpKind::Skip) <= 2);
            assert_eq!(cell.genes.len(), 2 * INTERMEDIATE_NODES);
        }
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(fairdarts(&["nonsense"], tmp.path()).status.code(), Some(1));
    assert_eq!(fairdarts(&["search"], tmp.path()).status.code(), Some(1));
    assert_eq!(
        fairdarts(&["search", "--config", "/no/such/file.cfg"], tmp.path()).status.code(),
        Some(1)
    );
    let bad = tmp.path().join("bad.cfg");
    fs::write(&bad, TINY.replace("n_val = 128", "n_val = 128\nbogus = 1")).unwrap();
    let o = fairdarts(&["search", "--config", bad.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    assert_eq!(fairdarts(&["--help"], tmp.path()).status.code(), Some(0));
}
