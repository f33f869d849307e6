use std::process::Command;

fn tvprox() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tvprox"))
}

const QUICK: &[&str] = &["--size", "16", "--phantoms", "1", "--mode", "aniso", "--fpg-budget", "0"];

#[test]
fn denoise_writes_table_and_images() {
    let dir = tempfile::tempdir().unwrap();
    let status = tvprox()
        .arg("denoise")
        .args(QUICK)
        .args(["--gamma", "0.1,0.01", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let table = std::fs::read_to_string(dir.path().join("aniso/table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("lambda,gamma,cost_acc,psnr_tv,psnr_gt,iters,seconds"));
    assert_eq!(lines.count(), 2);
    assert!(table.lines().skip(1).all(|l| l.ends_with(",nan")));
    let run = dir.path().join("aniso/lambda_5e-1/gamma_1e-1/phantom_0");
    for f in ["trace.csv", "recon.pgm", "recon.csv", "diff_tv.pgm", "diff_gt.pgm"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    assert!(std::fs::read_to_string(run.join("recon.pgm")).unwrap().starts_with("P2\n16 16\n255\n"));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    std::fs::write(&cfg, "# quick run\ngamma = 0.5\nlambda = 0.2\nsize = 16\nphantoms = 1\nfpg_budget = 0\nimages = false\n").unwrap();
    let status = tvprox()
        .args(["denoise", "--mode", "iso", "--lambda", "0.3", "--timing", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let table = std::fs::read_to_string(dir.path().join("iso/table.csv")).unwrap();
    let row = table.lines().nth(1).unwrap();
    assert!(row.starts_with("0.3,0.5,"), "{row}");
    assert!(!row.ends_with(",nan"));
    assert!(!dir.path().join("iso/lambda_3e-1").exists());
}

#[test]
fn ct_runs_with_fixed_budget_reference() {
    let dir = tempfile::tempdir().unwrap();
    let status = tvprox()
        .args(["ct", "--size", "16", "--phantoms", "1", "--mode", "aniso", "--angles", "8"])
        .args(["--gamma", "0.01", "--fpg-budget", "10", "--no-images", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let budget = std::fs::read_to_string(dir.path().join("aniso/table_fpg50.csv")).unwrap();
    assert!(budget.starts_with("lambda,gamma,cost_acc_fpg50,psnr_tv_fpg50\n"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["denoise", "--gamma", "-1"],
        vec!["denoise", "--mode", "l2"],
        vec!["ct", "--solver", "sgd"],
        vec!["denoise", "--size", "4"],
        vec!["denoise", "--config", "/nonexistent/file.cfg"],
        vec!["prox-check", "--tau", "0"],
    ] {
        let out = tvprox().args(&args).arg("--out").arg(dir.path()).output();
        let out = match args[0] {
            "prox-check" => tvprox().args(&args).output(),
            _ => out,
        }
        .unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "task = ct\n").unwrap();
    let out = tvprox().args(["denoise", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn prox_check_reports_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let out = tvprox()
        .args(["prox-check", "--size", "16", "--tau", "0.01,0.1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.contains("\naniso,0.01,") && text.contains("\niso,0.1,"));
    assert!(dir.path().join("prox_check.csv").exists());
}
