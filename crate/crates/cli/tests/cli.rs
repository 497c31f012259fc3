use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn advslam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advslam"))
        .args(args)
        .env("ADVSLAM_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, attack: &str) -> String {
    let path = dir.join("exp.ini");
    let text = format!(
        "[dataset]\nsource = synthetic\n\n[synthetic]\nframes = 6\n\n[run]\nseed = 3\n\n{attack}"
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const FGSM: &str = "[attack]\ntarget = rgb\nmethod = fgsm\nepsilon = 0.05\n";

#[test]
fn run_writes_a_reproducible_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), FGSM);
    let a = dir.path().join("a");
    let out = advslam(&["run", &config, "-o", a.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.contains("ate_mean = "), "{summary}");
    for f in ["config.ini", "frames.csv", "ate.csv", "summary.txt", "trajectory.txt", "groundtruth.txt"] {
        assert!(a.join(f).exists(), "{f}");
    }

    // rerun from the echoed config
    let b = dir.path().join("b");
    let echo = a.join("config.ini");
    assert_eq!(code(&advslam(&["run", echo.to_str().unwrap(), "-o", b.to_str().unwrap()])), 0);
    for f in ["frames.csv", "ate.csv", "summary.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ini");
    fs::write(&bad, "[dataset]\nsource = synthetic\nbogus = 1\n").unwrap();
    assert_eq!(code(&advslam(&["run", bad.to_str().unwrap()])), 1);

    let missing = dir.path().join("missing.ini");
    fs::write(&missing, "[dataset]\nsource = tum\npath = nowhere\n").unwrap();
    assert_eq!(code(&advslam(&["run", missing.to_str().unwrap()])), 2);

    let absent = dir.path().join("absent.ini");
    assert_eq!(code(&advslam(&["run", absent.to_str().unwrap()])), 1);
    assert_eq!(code(&advslam(&["frobnicate"])), 1);
    assert_eq!(code(&advslam(&["--help"])), 0);
    let config = write_config(dir.path(), FGSM);
    assert_eq!(code(&advslam(&["sweep", &config, "--eps", "0.1", "--schedules", "sometimes"])), 1);
    assert_eq!(code(&advslam(&["plotdata", dir.path().to_str().unwrap(), "--kind", "pie"])), 1);
}

#[test]
fn sweep_prints_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), FGSM);
    let out_dir = dir.path().join("sweep");
    let out = advslam(&[
        "sweep",
        &config,
        "--eps",
        "0,0.3",
        "--schedules",
        "all,rate:1/2",
        "-o",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    // header, baseline, 2 x 2 cells
    assert_eq!(rows.len(), 6);
    let baseline_ate = rows[1].split(',').nth(3).unwrap();
    assert!(rows[2].starts_with("all,0,ok,"));
    assert_eq!(rows[2].split(',').nth(3).unwrap(), baseline_ate);
    assert_eq!(fs::read_to_string(out_dir.join("sweep.csv")).unwrap(), csv);
    let table = fs::read_to_string(out_dir.join("untracked_table.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "schedule,baseline,0,0.3");
}

#[test]
fn plot_data_from_baseline_and_attacked_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), FGSM);
    let base = dir.path().join("base");
    assert_eq!(code(&advslam(&["baseline", &config, "-o", base.to_str().unwrap()])), 0);
    let out = advslam(&["plotdata", base.to_str().unwrap(), "--kind", "trajectory2d"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(base.join("trajectory2d.csv")).unwrap();
    let series: std::collections::BTreeSet<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(series.into_iter().collect::<Vec<_>>(), ["baseline"]);
    assert_eq!(csv.lines().count(), 7);
    assert!(base.join("trajectory2d_groundtruth.csv").exists());

    let attacked_cfg = write_config(dir.path(), &format!("{FGSM}\n"));
    let text = fs::read_to_string(&attacked_cfg).unwrap().replace("seed = 3", "seed = 3\nbaseline = true");
    fs::write(&attacked_cfg, text).unwrap();
    let rep = dir.path().join("attacked");
    assert_eq!(code(&advslam(&["run", &attacked_cfg, "-o", rep.to_str().unwrap()])), 0);
    let plots = dir.path().join("plots");
    assert_eq!(code(&advslam(&["plotdata", rep.to_str().unwrap(), "--kind", "trajectory2d", "-o", plots.to_str().unwrap()])), 0);
    let csv = fs::read_to_string(plots.join("trajectory2d.csv")).unwrap();
    assert!(csv.contains("\nbaseline,0,") && csv.contains("\nattacked,0,"));

    assert_eq!(code(&advslam(&["plotdata", rep.to_str().unwrap(), "--kind", "timeline", "-o", plots.to_str().unwrap()])), 0);
    let timeline = fs::read_to_string(plots.join("timeline.csv")).unwrap();
    assert_eq!(timeline.lines().next().unwrap(), "frame,exec_time,moving_avg,ate,attacked");
    assert_eq!(timeline.lines().count(), 7);
    // all frames attacked: one span
    let spans = fs::read_to_string(plots.join("timeline_spans.csv")).unwrap();
    assert_eq!(spans.lines().nth(1).unwrap().split(',').take(3).collect::<Vec<_>>(), ["A", "0", "5"]);
}

#[test]
fn synth_output_runs_as_a_tum_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.ini");
    fs::write(&spec, "[synthetic]\nframes = 5\ntrajectory = linear\n").unwrap();
    let seq = dir.path().join("seq");
    let out = advslam(&["synth", spec.to_str().unwrap(), "-o", seq.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_dir(seq.join("rgb")).unwrap().count(), 5);

    let camera = fs::read_to_string(seq.join("camera.txt")).unwrap();
    let k: Vec<&str> = camera.split_whitespace().collect();
    let config = dir.path().join("tum.ini");
    fs::write(
        &config,
        format!(
            "[dataset]\nsource = tum\npath = seq\nfx = {}\nfy = {}\ncx = {}\ncy = {}\n",
            k[0], k[1], k[2], k[3]
        ),
    )
    .unwrap();
    let out = advslam(&["baseline", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.contains("untracked_fraction = 0"), "{summary}");
}
