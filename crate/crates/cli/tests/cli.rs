use std::path::Path;
use std::process::{Command, Output};

use pwomm::harness::{parse_report, Status, TableRow};

fn pwomm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pwomm")).args(args).output().expect("binary runs")
}

fn table(path: &Path) -> Vec<TableRow> {
    parse_report(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.csv");
    let o = pwomm(&["gen", "--test", "test2", "--ell", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some("index,x,y,value"));
    assert_eq!(text.lines().count(), 1 + 256);
}

#[test]
fn poles_reports_indicator_error() {
    let o = pwomm(&["poles", "--test", "test3", "--ell", "2"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 31);
    assert!(String::from_utf8_lossy(&o.stderr).contains("indicator_error="));
}

#[test]
fn solve_prints_a_single_row() {
    let o = pwomm(&["solve", "--test", "test3", "--ell", "2", "--method", "spp", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = parse_report(&String::from_utf8_lossy(&o.stdout)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].method.as_str(), rows[0].n), ("spp", 256));
    assert_eq!(rows[0].status, Status::Accurate);
}

#[test]
fn bench_is_deterministic_apart_from_timings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small table\ntest = test3\nell = 2\nmethods = tpa, spp\nrepeats = 2\n").unwrap();
    let mut tables = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("t{k}.csv"));
        let o = pwomm(&["bench", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        tables.push(table(&out).iter().map(TableRow::without_timings).collect::<Vec<_>>());
    }
    assert_eq!(tables[0].len(), 2);
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn failed_rows_give_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.cfg");
    std::fs::write(&cfg, "test = test3\nell = 2\nmethods = none\nrepeats = 1\nomm_max_iter = 3\n").unwrap();
    let o = pwomm(&["bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let rows = parse_report(&String::from_utf8_lossy(&o.stdout)).unwrap();
    assert_eq!(rows[0].status, Status::Unconverged);
}

#[test]
fn bad_input_is_an_error() {
    assert_eq!(pwomm(&["bench", "--ell", "0"]).status.code(), Some(2));
    assert_eq!(pwomm(&["solve", "--method", "tpa,spp"]).status.code(), Some(2));
    assert_eq!(pwomm(&["bench", "--config", "/nonexistent/x.cfg"]).status.code(), Some(2));
    assert!(!pwomm(&["solve", "--method", "bogus"]).status.success());
}
