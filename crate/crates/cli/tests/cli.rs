use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn secdiff(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_secdiff"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_f32(path: &Path) -> Vec<f32> {
    std::fs::read(path)
        .unwrap()
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn setup(steps: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = secdiff(
        &["gen-params", "--output", "w.cdm", "--seed", "1"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::write(
        dir.path().join("run.cfg"),
        format!("params=w.cdm\nseed=7\nsteps={steps}\n"),
    )
    .unwrap();
    dir
}

fn free_ports() -> Vec<u16> {
    let ls: Vec<TcpListener> = (0..3)
        .map(|_| TcpListener::bind("127.0.0.1:0").unwrap())
        .collect();
    ls.iter().map(|l| l.local_addr().unwrap().port()).collect()
}

#[test]
fn plain_sampling_is_rerun_identical() {
    let dir = setup(50);
    for name in ["a", "b"] {
        let pgm = format!("{name}.pgm");
        let o = secdiff(
            &["sample", "--config", "run.cfg", "--output", &pgm],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a.pgm")).unwrap();
    assert!(a.starts_with(b"P5\n28 28\n255\n"));
    assert_eq!(a, std::fs::read(dir.path().join("b.pgm")).unwrap());
    assert_eq!(
        read_f32(&dir.path().join("a.f32")),
        read_f32(&dir.path().join("b.f32"))
    );
}

#[test]
fn mpc_local_matches_plain_twin() {
    let dir = setup(10);
    let p = secdiff(
        &["sample", "--config", "run.cfg", "--output", "p.pgm"],
        dir.path(),
    );
    assert!(p.status.success(), "{}", stderr(&p));
    let m = secdiff(
        &[
            "sample",
            "--config",
            "run.cfg",
            "--mode",
            "mpc-local",
            "--output",
            "m.pgm",
            "--json",
        ],
        dir.path(),
    );
    assert!(m.status.success(), "{}", stderr(&m));
    let report: serde_json::Value = serde_json::from_str(&stdout(&m)).unwrap();
    assert!(report["rounds"].as_u64().unwrap() > 0);
    let a = read_f32(&dir.path().join("p.f32"));
    let b = read_f32(&dir.path().join("m.f32"));
    assert_eq!(a.len(), 784);
    let worst = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0f32, f32::max);
    assert!(worst <= 1e-2, "max diff {worst}");
}

#[test]
fn tcp_daemons_match_local_run() {
    let dir = setup(3);
    let ports = free_ports();
    let mut cfg = String::from("params=w.cdm\nseed=7\nsteps=3\ntimeout_secs=20\n");
    for (i, p) in ports.iter().enumerate() {
        cfg.push_str(&format!("party{i}=127.0.0.1:{p}\n"));
    }
    std::fs::write(dir.path().join("tcp.cfg"), cfg).unwrap();
    let daemons: Vec<_> = (0..3)
        .map(|i| {
            Command::new(env!("CARGO_BIN_EXE_secdiff"))
                .args(["party", "--id", &i.to_string(), "--config", "tcp.cfg"])
                .current_dir(dir.path())
                .stdout(Stdio::piped())
                .stderr(Stdio::piped())
                .spawn()
                .unwrap()
        })
        .collect();
    let t = secdiff(
        &[
            "sample", "--config", "tcp.cfg", "--mode", "mpc-tcp", "--output", "t.pgm",
        ],
        dir.path(),
    );
    let outs: Vec<Output> = daemons
        .into_iter()
        .map(|d| d.wait_with_output().unwrap())
        .collect();
    assert!(t.status.success(), "{}", stderr(&t));
    for (i, o) in outs.iter().enumerate() {
        assert!(o.status.success(), "party {i}: {}", stderr(o));
        assert!(stdout(o).contains("rounds="));
    }
    let l = secdiff(
        &[
            "sample",
            "--config",
            "run.cfg",
            "--mode",
            "mpc-local",
            "--output",
            "l.pgm",
        ],
        dir.path(),
    );
    assert!(l.status.success(), "{}", stderr(&l));
    assert_eq!(
        std::fs::read(dir.path().join("t.f32")).unwrap(),
        std::fs::read(dir.path().join("l.f32")).unwrap()
    );
    let total = |s: &str| {
        s.lines()
            .find(|l| l.starts_with("total_bytes="))
            .map(str::to_owned)
    };
    assert_eq!(total(&stdout(&t)), total(&stdout(&l)));
}

#[test]
fn missing_param_file_is_an_io_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "params=nowhere.cdm\n").unwrap();
    let o = secdiff(
        &["sample", "--config", "run.cfg", "--output", "x.pgm"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("nowhere.cdm"));
}

#[test]
fn corrupted_param_file_is_a_checksum_error() {
    let dir = setup(1);
    let p = dir.path().join("w.cdm");
    let mut bytes = std::fs::read(&p).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&p, bytes).unwrap();
    let o = secdiff(
        &["sample", "--config", "run.cfg", "--output", "x.pgm"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(6), "{}", stderr(&o));
}

#[test]
fn argument_errors_exit_with_two() {
    let dir = setup(1);
    std::fs::write(dir.path().join("typo.cfg"), "stepz=3\n").unwrap();
    let cases: [&[&str]; 6] = [
        &["party", "--id", "3", "--config", "run.cfg"],
        &["bench", "--protocol", "mul", "--size", "1", "--trials", "0"],
        &["bench", "--protocol", "gelu"],
        &["accuracy", "--activation", "gelu"],
        &[
            "fit",
            "--function",
            "silu",
            "--interval",
            "1,1",
            "--degree",
            "2",
        ],
        &["sample", "--config", "typo.cfg", "--output", "x.pgm"],
    ];
    for args in cases {
        let o = secdiff(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn unreachable_peers_exit_with_handshake_code() {
    let dir = setup(1);
    let ports = free_ports();
    let mut cfg = String::from("params=w.cdm\ntimeout_secs=1\n");
    for (i, p) in ports.iter().enumerate() {
        cfg.push_str(&format!("party{i}=127.0.0.1:{p}\n"));
    }
    std::fs::write(dir.path().join("tcp.cfg"), cfg).unwrap();
    let o = secdiff(
        &[
            "sample", "--config", "tcp.cfg", "--mode", "mpc-tcp", "--output", "x.pgm",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn bench_reports_mul_payload_and_baseline_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let o = secdiff(
        &["bench", "--protocol", "mul", "--size", "1", "--json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["results"][0]["payload_bytes"].as_f64(), Some(24.0));
    assert_eq!(v["results"][0]["rounds"].as_f64(), Some(1.0));
    let o = secdiff(
        &[
            "bench",
            "--protocol",
            "softmax,baseline-softmax",
            "--size",
            "16",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("ratio softmax n=16"));
}

#[test]
fn accuracy_reports_grid_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = secdiff(
        &["accuracy", "--activation", "silu", "--grid", "100000"],
        dir.path(),
    );
    assert!(o.status.success());
    let mse: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("approx.mse="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((1e-6..=1e-3).contains(&mse), "{mse}");
    let o = secdiff(
        &["accuracy", "--activation", "exp", "--grid", "4096"],
        dir.path(),
    );
    assert!(
        stdout(&o).contains("approx.max_abs=4.848"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn fit_writes_a_loadable_coefficient_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = secdiff(
        &["fit", "--function", "mish", "--output", "mish.txt"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::write(
        dir.path().join("run.cfg"),
        "activation=mish\nactivation_coefficients=mish.txt\n",
    )
    .unwrap();
    let o = secdiff(
        &["accuracy", "--activation", "mish", "--config", "run.cfg"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = secdiff(&["fit", "--function", "exp", "--degree", "0"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("fit.max_abs="));
}
