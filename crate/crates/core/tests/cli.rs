use std::path::PathBuf;
use std::process::{Command, Output};

use oocluster::config::{Config, ConfigError};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oocluster"))
}

fn write_config(name: &str, extra: &str) -> PathBuf {
    let base = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/defaults.conf")).unwrap();
    let mut cfg = Config::parse(&base).unwrap();
    for line in extra.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').unwrap();
        cfg.set(k.trim(), v.trim()).unwrap();
    }
    let text: String = oocluster::config::KEYS
        .iter()
        .filter_map(|k| cfg.get(k).map(|v| format!("{k} = {v}\n")))
        .collect();
    let path = std::env::temp_dir().join(format!("oocluster-{}-{name}.conf", std::process::id()));
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn shipped_defaults_parse() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/defaults.conf")).unwrap();
    Config::parse(&text).unwrap().to_params().unwrap();
}

#[test]
fn run_is_deterministic() {
    let cfg = write_config("run", "INOBJ = 100\nSIMTIME = 900\nALGORITHM = cactis");
    let a = stdout(&bin().args(["run", "-c"]).arg(&cfg).output().unwrap());
    let b = stdout(&bin().args(["run", "-c"]).arg(&cfg).output().unwrap());
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 2, "header plus one row");
}

#[test]
fn sweep_emits_one_row_per_job() {
    let cfg = write_config("sweep", "INOBJ = 100\nSIMTIME = 600");
    let out = bin()
        .args(["sweep", "-c"])
        .arg(&cfg)
        .args(["--vary", "IBUFF", "--values", "10..30:10", "--seeds", "1..2", "--algorithms", "cactis,ck"])
        .output()
        .unwrap();
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1 + 2 * 3 * 2);
}

#[test]
fn bad_mix_names_the_keys() {
    let err = Config::parse("PT1 = 0.5\nPT2 = 0.5").unwrap().to_params().unwrap_err();
    match &err {
        ConfigError::BadMix { keys, .. } => assert_eq!(keys, "PT1, PT2"),
        other => panic!("unexpected {other:?}"),
    }
    let cfg = write_config("badmix", "PT3 = 0.9");
    let out = bin().args(["run", "-c"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("PT3"));
}

#[test]
fn unknown_parameter_is_rejected() {
    assert_eq!(
        Config::parse("INOBJ = 10\nFOO = 1").unwrap_err(),
        ConfigError::UnknownParam { line: 2, key: "FOO".into() }
    );
}
