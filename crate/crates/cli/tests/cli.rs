use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dopplerloc::acoustic::read_wav;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn dopplerloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dopplerloc")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn plan_channels_lists_23_slots() {
    let o = dopplerloc(&["plan-channels"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("channels     23"), "{text}");
    assert_eq!(text.lines().filter(|l| l.trim_end().ends_with(" Hz") && l.starts_with("  ")).count(), 23);
}

#[test]
fn plan_channels_with_guard_fits_fewer() {
    let o = dopplerloc(&["plan-channels", "--guard", "0.2"]);
    assert!(o.status.success());
    assert!(!stdout(&o).contains("channels     23"));
}

#[test]
fn missing_config_is_a_configuration_error() {
    let o = dopplerloc(&["direction"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));
}

#[test]
fn unreadable_config_is_an_io_error() {
    let o = dopplerloc(&["direction", "--config", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn malformed_config_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[world\nspeed = 1").unwrap();
    let o = dopplerloc(&["direction", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tracking_a_shake_scenario_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = dopplerloc(&[
        "track",
        "--config",
        fixture("paper_layout.toml").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_of_range_duty_is_rejected() {
    let o = dopplerloc(&["track", "--config", fixture("walk.toml").to_str().unwrap(), "--duty", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

fn direction_run(dir: &Path, seed: &str) -> Output {
    dopplerloc(&[
        "direction",
        "--config",
        fixture("direction_room.toml").to_str().unwrap(),
        "--trials",
        "2",
        "--seed",
        seed,
        "--out-dir",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn direction_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = direction_run(&a, "5");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("trials       2"));
    for f in ["direction_trials.csv", "direction_cdf.csv", "direction_summary.txt", "direction_estimates.csv"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    let manifest = std::fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("command = direction"));
    assert!(manifest.contains("seed = 5"));
    assert_eq!(manifest.lines().filter(|l| l.starts_with("output = ")).count(), 4);
    let trials = std::fs::read_to_string(a.join("direction_trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 3);

    assert!(direction_run(&b, "5").status.success());
    assert_eq!(trials, std::fs::read_to_string(b.join("direction_trials.csv")).unwrap());
    assert_eq!(manifest, std::fs::read_to_string(b.join("manifest.txt")).unwrap());
}

#[test]
fn localize_with_injected_directions() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("paper_layout.toml")).unwrap();
    let config = dir.path().join("injected.toml");
    std::fs::write(&config, format!("{text}direction_sigma_deg = 2.66\n")).unwrap();
    let out = dir.path().join("out");
    let o = dopplerloc(&[
        "localize",
        "--config",
        config.to_str().unwrap(),
        "--trials",
        "10",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trials = std::fs::read_to_string(out.join("localization_trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 141);
    // injected directions skip the regression, so there are no estimates
    assert!(!out.join("localization_estimates.csv").exists());
}

#[test]
fn synth_writes_a_readable_recording() {
    let dir = tempfile::tempdir().unwrap();
    let o = dopplerloc(&[
        "synth",
        "--config",
        fixture("direction_room.toml").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pcm = read_wav(&dir.path().join("recording.wav")).unwrap();
    assert_eq!(pcm.sample_rate, 44100.0);
    assert!(pcm.len() > 44100);
    let header = |f: &str| {
        std::fs::read_to_string(dir.path().join(f))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(header("trajectory.csv"), "t,px,py,pz,vx,vy,vz,ax,ay,az,qw,qx,qy,qz");
    assert_eq!(header("imu.csv"), "t,ax,ay,az,gx,gy,gz");
    assert_eq!(header("oracle.csv"), "t,anchor_id,phi_true,f_shift_true,L_true");
    assert_eq!(header("phase_tracks.csv"), "t,anchor_id,theta,f_shift,v_rel,s_rel,lock_quality");
    assert!(dir.path().join("filter_1.txt").is_file());
}
