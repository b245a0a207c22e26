use std::path::PathBuf;
use std::process::Command;

use ecm_cli::{run_args, CliError};

fn data(path: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(path)
        .display()
        .to_string()
}

fn ecm(args: &[&str]) -> Result<String, CliError> {
    let mut all = vec!["ecm".to_string()];
    all.extend(args.iter().map(|s| s.to_string()));
    run_args(all)
}

fn with_inputs(cmd: &str, machine: &str, kernel: &str, rest: &[&str]) -> Result<String, CliError> {
    let m = data(&format!("machines/{machine}.machine"));
    let k = data(&format!("kernels/{kernel}.kernel"));
    let mut args = vec![cmd, "--machine", &m, "--kernel", &k];
    args.extend_from_slice(rest);
    ecm(&args)
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

const CUBE: [&str; 6] = ["--nk", "276", "--nj", "276", "--ni", "276"];

#[test]
fn predict_jacobi_in_memory() {
    let out = with_inputs("predict", "snb", "jacobi2d", &["--nj", "1000", "--ni", "1000000", "--integer"]).unwrap();
    assert!(out.contains("{6 || 8 | 10 | 10 | 22} cy"), "{out}");
    assert!(out.contains("{8 \\ 18 \\ 28 \\ 50} cy"), "{out}");
    assert!(out.contains("n_S = 3"), "{out}");
    assert!(out.contains("L3-Mem 40 B/LUP"), "{out}");
    let auto = with_inputs("predict", "snb", "jacobi2d", &["--nj", "1000", "--ni", "1000000"]).unwrap();
    assert!(auto.contains("{6 || 8 | 10 | 10 | 21.6} cy"), "{auto}");
}

#[test]
fn predict_uxx_on_both_machines() {
    let snb = with_inputs("predict", "snb", "uxx_dp", &[&CUBE[..], &["--integer"]].concat()).unwrap();
    assert!(snb.contains("{84 \\ 84 \\ 84 \\ 104} cy"), "{snb}");
    assert!(snb.contains("bottleneck DIV"), "{snb}");
    let ivb = with_inputs("predict", "ivb", "uxx_dp_nodiv", &[&CUBE[..], &["--t-ol", "56", "--integer"]].concat()).unwrap();
    assert!(ivb.contains("{56 \\ 58 \\ 78 \\ 103} cy"), "{ivb}");
}

#[test]
fn predict_csv_and_temporal_blocking() {
    let out = with_inputs("predict", "snb", "daxpy", &["--ni", "16777216", "--csv"]).unwrap();
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, ["location", "cycles", "MLUP/s", "Gflop/s"]);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][0], "L1");
    let tb = with_inputs("predict", "snb", "daxpy", &["--ni", "16777216", "--what-if", "temporal-blocking"]).unwrap();
    assert!(tb.contains("what-if temporal blocking"), "{tb}");
}

#[test]
fn scale_csv_header_and_jacobi_blocks() {
    let out = with_inputs("scale", "snb", "jacobi2d", &["--nj", "1000", "--ni", "1000000", "--csv"]).unwrap();
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, ["n", "P_ecm", "ceiling", "P", "saturated", "max_block_size"]);
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[0][5], "436906");
    assert_eq!(rows[7][5], "54613");
    assert_eq!(rows[1][4], "false");
    assert_eq!(rows[2][4], "true");
    let text = with_inputs("scale", "snb", "jacobi2d", &["--nj", "1000", "--ni", "1000000"]).unwrap();
    assert!(text.contains("n_S = 3"), "{text}");
}

#[test]
fn blocking_tables() {
    let out = with_inputs("blocking", "snb", "jacobi2d", &["--nj", "1000", "--ni", "1000000", "--level", "L3", "--csv"]).unwrap();
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, ["n", "b_i"]);
    let blocks: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(blocks.first(), Some(&"436906"));
    assert_eq!(blocks.last(), Some(&"54613"));
    let uxx = with_inputs("blocking", "snb", "uxx_dp", &[&CUBE[..], &["--level", "L3", "--threads", "1"]].concat()).unwrap();
    assert!(uxx.contains("b_j"), "{uxx}");
    assert!(uxx.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["1", "791"]), "{uxx}");
}

#[test]
fn usage_errors() {
    let too_many = with_inputs("blocking", "snb", "uxx_dp", &[&CUBE[..], &["--level", "L3", "--threads", "9"]].concat());
    assert!(matches!(too_many, Err(CliError::Usage(_))));
    let mem = with_inputs("blocking", "snb", "uxx_dp", &[&CUBE[..], &["--level", "MEM"]].concat());
    assert!(matches!(mem, Err(CliError::Usage(_))));
    let l4 = with_inputs("blocking", "snb", "uxx_dp", &[&CUBE[..], &["--level", "L4"]].concat());
    assert!(matches!(l4, Err(CliError::Usage(_))));
    let missing = with_inputs("predict", "snb", "jacobi2d", &["--ni", "1000"]);
    assert!(matches!(missing, Err(CliError::Usage(_))));
    let extra = with_inputs("predict", "snb", "daxpy", &["--ni", "1000", "--nj", "10"]);
    assert!(matches!(extra, Err(CliError::Usage(_))));
    let freq = with_inputs("predict", "snb", "daxpy", &["--ni", "1000", "--freq-ghz", "0"]);
    assert!(matches!(freq, Err(CliError::Usage(_))));
    assert!(matches!(ecm(&["frobnicate"]), Err(CliError::Usage(_))));
}

#[test]
fn bad_input_files() {
    let err = with_inputs("predict", "nonexistent", "daxpy", &["--ni", "1000"]).unwrap_err();
    assert!(matches!(err, CliError::Io { .. }));
    assert_eq!(err.exit_code(), 1);
    let dir = std::env::temp_dir().join(format!("ecm-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.machine");
    std::fs::write(&bad, "name = x\nclock_ghz = fast\n").unwrap();
    let k = data("kernels/daxpy.kernel");
    let err = ecm(&["predict", "--machine", bad.to_str().unwrap(), "--kernel", &k, "--ni", "100"]).unwrap_err();
    assert!(matches!(err, CliError::Input { .. }), "{err}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn scan_shows_the_layer_condition_plateaus() {
    let out = with_inputs("scan", "snb", "jacobi2d", &["--nj", "100", "--range", "100:10000000:log"]).unwrap();
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, ["N_i", "lc_level", "B_C_mem", "T_ECM_mem", "P_mem_MLUPs"]);
    let perf: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    for w in perf.windows(2) {
        assert!(w[1] <= w[0] + 1e-9);
    }
    let mut plateaus: Vec<String> = rows.iter().map(|r| r[1].clone()).collect();
    plateaus.dedup();
    assert_eq!(plateaus, ["L1", "L2", "L3", "none"]);
    let distinct: Vec<&str> = rows.iter().map(|r| r[4].as_str()).fold(Vec::new(), |mut v, p| {
        if v.last() != Some(&p) {
            v.push(p);
        }
        v
    });
    assert_eq!(distinct, ["655.34", "584.416", "527.344", "435.484"]);
}

#[test]
fn scan_edge_ranges() {
    let one = with_inputs("scan", "snb", "jacobi2d", &["--nj", "100", "--range", "5000:5000:1"]).unwrap();
    assert_eq!(csv_rows(&one).1.len(), 1);
    let empty = with_inputs("scan", "snb", "jacobi2d", &["--nj", "100", "--range", "5000:10:1"]);
    assert!(matches!(empty, Err(CliError::Usage(_))));
}

#[test]
fn roofline_saturates_before_ecm() {
    let out = with_inputs("roofline", "snb", "longrange_sp", &["--nk", "480", "--nj", "480", "--ni", "480", "--bj", "64"]).unwrap();
    assert!(out.contains("saturation: roofline n = 4, ECM n_S = 8"), "{out}");
    let csv = with_inputs("roofline", "snb", "longrange_sp", &["--nk", "480", "--nj", "480", "--ni", "480", "--bj", "64", "--csv"]).unwrap();
    let (header, rows) = csv_rows(&csv);
    assert_eq!(header, ["n", "P_roofline", "limiter", "P_ecm"]);
    for r in &rows {
        let roof: f64 = r[1].parse().unwrap();
        let ecm: f64 = r[3].parse().unwrap();
        assert!(roof + 1e-6 >= ecm, "{r:?}");
    }
}

#[test]
fn validate_against_the_simulator() {
    let out = with_inputs("validate", "snb", "jacobi2d", &["--nj", "256", "--ni", "512", "--cache-kb", "4,32,256", "--csv"]).unwrap();
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, ["boundary", "model_B_per_LUP", "sim_B_per_LUP", "rel_err"]);
    assert_eq!(rows.len(), 3);
    for r in &rows {
        let err: f64 = r[3].parse().unwrap();
        assert!(err.abs() < 0.05, "{r:?}");
    }
    let wrong = with_inputs("validate", "snb", "jacobi2d", &["--nj", "256", "--ni", "512", "--cache-kb", "4,32"]);
    assert!(matches!(wrong, Err(CliError::Usage(_))));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_ecm");
    let m = data("machines/snb.machine");
    let k = data("kernels/jacobi2d.kernel");
    let ok = Command::new(bin)
        .args(["predict", "--machine", &m, "--kernel", &k, "--nj", "1000", "--ni", "1000000", "--integer"])
        .output()
        .unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("{8 \\ 18 \\ 28 \\ 50} cy"));
    let usage = Command::new(bin)
        .args(["blocking", "--machine", &m, "--kernel", &k, "--nj", "10", "--ni", "10", "--level", "L3", "--threads", "99"])
        .output()
        .unwrap();
    assert_eq!(usage.status.code(), Some(2));
    assert!(usage.stdout.is_empty());
    assert!(!usage.stderr.is_empty());
    let io = Command::new(bin)
        .args(["predict", "--machine", "/nonexistent.machine", "--kernel", &k, "--nj", "10", "--ni", "10"])
        .output()
        .unwrap();
    assert_eq!(io.status.code(), Some(1));
    let parse = Command::new(bin).arg("predict").output().unwrap();
    assert_eq!(parse.status.code(), Some(2));
}
