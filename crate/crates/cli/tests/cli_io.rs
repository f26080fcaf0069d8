//! End-to-end checks of the binary: exit codes, output schemas, seed
//! precedence, and byte-level determinism across worker counts.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bandlab"));
    c.env_remove("BANDLAB_WORKERS");
    c
}

fn tmp(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("cli_io")
        .join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().to_string(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn unknown_config_key_exits_64() {
    let dir = tmp("unknown_key");
    let cfg = write_config(&dir, "l = 8\nxi_re = 0.5\nbanana = 1\n");
    let status = bin()
        .args(["theta", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(64));
}

#[test]
fn mismatched_experiment_name_exits_64() {
    let dir = tmp("wrong_experiment");
    let cfg = write_config(&dir, "experiment = \"deloc\"\nl = 8\nxi_re = 0.5\n");
    let status = bin()
        .args(["theta", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(64));
}

#[test]
fn malformed_worker_count_exits_64() {
    let dir = tmp("bad_workers");
    let cfg = write_config(&dir, "l = 8\nxi_re = 0.5\n");
    let status = bin()
        .env("BANDLAB_WORKERS", "many")
        .args(["theta", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(64));
}

#[test]
fn empty_sample_set_is_degenerate_exit_2() {
    let dir = tmp("degenerate");
    let cfg = write_config(&dir, "w = 3\nl = 3\ne = 0.0\neta = 0.5\nsamples = 0\n");
    let out = dir.join("out");
    let status = bin()
        .args(["local-law", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n_samples"], 0);
    assert_eq!(report["degenerate"], true);
    assert_eq!(report["pass"], serde_json::Value::Null);
    // Header only, no data rows.
    let csv = std::fs::read_to_string(out.join("local_law.csv")).unwrap();
    assert_eq!(csv, "sample,max_entry_dev,max_block_trace_dev,M_eta\n");
}

#[test]
fn csv_headers_match_schemas() {
    let dir = tmp("schemas");
    let run = |cmd: &str, cfg_text: &str, out: &str| -> PathBuf {
        let cfg_path = dir.join(format!("{cmd}.toml"));
        std::fs::write(&cfg_path, cfg_text).unwrap();
        let out_dir = dir.join(out);
        let status = bin()
            .args([cmd, "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out_dir)
            .status()
            .unwrap();
        assert!(
            status.code() == Some(0) || status.code() == Some(1),
            "{cmd} exited {:?}",
            status.code()
        );
        out_dir
    };
    let header = |dir: &Path, file: &str| -> String {
        std::fs::read_to_string(dir.join(file))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };

    let d = run("theta", "l = 6\nxi_re = 0.4\n", "theta");
    assert_eq!(header(&d, "theta.csv"), "s1,s2,re,im,abs,envelope_value");

    let d = run(
        "kloop",
        "l = 3\ne = 0.0\nt = 0.4\nsigma = \"+-\"\n",
        "kloop",
    );
    assert_eq!(
        header(&d, "kloop.csv"),
        "sigma,diffs,re,im,closed_re,closed_im"
    );

    let d = run(
        "ward",
        "w = 3\nl = 3\ne = 0.0\nt = 0.4\nsamples = 2\n",
        "ward",
    );
    assert_eq!(header(&d, "ward.csv"), "n,sigma,a,residual");
    assert_eq!(header(&d, "ward_k.csv"), "n,sigma,level,residual");

    let d = run(
        "local-law",
        "w = 3\nl = 3\ne = 0.0\neta = 0.5\nsamples = 2\n",
        "ll",
    );
    assert_eq!(
        header(&d, "local_law.csv"),
        "sample,max_entry_dev,max_block_trace_dev,M_eta"
    );

    let d = run("deloc", "w = 3\nl = 3\nsamples = 2\n", "deloc");
    assert_eq!(header(&d, "deloc.csv"), "sample,stat,n_bulk");
    assert_eq!(header(&d, "deloc_oracle.csv"), "sample,stat,n_bulk");

    let d = run(
        "que",
        "w = 3\nl = 3\ne = 0.0\nwindow = 3\nsamples = 2\n",
        "que",
    );
    assert_eq!(header(&d, "que.csv"), "sample,block_a1,block_a2,stat");

    let d = run(
        "qdiff",
        "w = 3\nl = 3\ne = 0.0\neta = 0.5\nsamples = 2\n",
        "qdiff",
    );
    let want = "a1,a2,b1,b2,emp_re,emp_im,pred_re,pred_im,stderr";
    assert_eq!(header(&d, "qdiff.csv"), want);
    assert_eq!(header(&d, "qdiff_pp.csv"), want);

    let d = run("universality", "w = 3\nl = 3\nsamples = 2\n", "univ");
    assert_eq!(
        header(&d, "universality.csv"),
        "ensemble,ou_t,mean_r,stderr,n_gaps"
    );

    let d = run(
        "decay",
        "w = 3\nl = 4\ne = 0.0\nt = 0.5\nsamples = 2\n",
        "decay",
    );
    assert_eq!(header(&d, "decay.csv"), "dist,mean_abs_LK,envelope,ratio");

    let d = run(
        "clt",
        "w = 3\nl = 4\ne = 0.0\neta = 0.4\nsamples = 3\n",
        "clt",
    );
    assert_eq!(header(&d, "clt.csv"), "dist,corr,stderr");
}

#[test]
fn reduce_flag_shrinks_qdiff_to_offset_rows() {
    let dir = tmp("reduce");
    let cfg = write_config(&dir, "w = 3\nl = 3\ne = 0.0\neta = 0.5\nsamples = 2\n");
    let full = dir.join("full");
    let reduced = dir.join("reduced");
    assert_eq!(
        bin()
            .args(["qdiff", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&full)
            .status()
            .unwrap()
            .code(),
        Some(0)
    );
    assert_eq!(
        bin()
            .args(["qdiff", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&reduced)
            .arg("--reduce")
            .status()
            .unwrap()
            .code(),
        Some(0)
    );
    let rows = |p: PathBuf| std::fs::read_to_string(p).unwrap().lines().count() - 1;
    // 9 blocks: full table has 81 pair rows, reduced one row per offset.
    assert_eq!(rows(full.join("qdiff.csv")), 81);
    assert_eq!(rows(reduced.join("qdiff.csv")), 9);
    assert_eq!(rows(reduced.join("qdiff_pp.csv")), 9);
}

#[test]
fn seed_precedence_cli_over_config() {
    let dir = tmp("seed");
    let cfg = write_config(
        &dir,
        "seed = 11\nw = 3\nl = 3\ne = 0.0\neta = 0.5\nsamples = 3\n",
    );
    let run = |out: &str, extra: &[&str]| -> Vec<(String, Vec<u8>)> {
        let out_dir = dir.join(out);
        let mut cmd = bin();
        cmd.args(["local-law", "--config"]).arg(&cfg);
        cmd.arg("--out").arg(&out_dir);
        cmd.args(extra);
        assert_eq!(cmd.status().unwrap().code(), Some(0));
        read_dir_bytes(&out_dir)
    };
    let a = run("a", &[]);
    let b = run("b", &["--seed", "11"]);
    let c = run("c", &["--seed", "12"]);
    assert_eq!(a, b, "explicit seed equal to config seed must match");
    assert_ne!(a, c, "different seed must change the sampled outputs");
}

#[test]
fn outputs_identical_for_any_worker_count() {
    let dir = tmp("workers");
    let cfg = write_config(&dir, "w = 3\nl = 3\ne = 0.0\neta = 0.5\nsamples = 6\n");
    let run = |out: &str, workers: &str| -> Vec<(String, Vec<u8>)> {
        let out_dir = dir.join(out);
        let status = bin()
            .env("BANDLAB_WORKERS", workers)
            .args(["qdiff", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .arg("--reduce")
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        read_dir_bytes(&out_dir)
    };
    let solo = run("w1", "1");
    let four = run("w4", "4");
    let seven = run("w7", "7");
    assert_eq!(solo, four);
    assert_eq!(solo, seven);
}
