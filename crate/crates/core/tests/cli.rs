use std::process::{Command, Output};

use serde_json::Value;

fn tsvf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsvf"))
        .args(args)
        .env_remove("TSVF_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

#[test]
fn eval_singlet_xy_reports_elements_and_product_rule_failure() {
    let out = tsvf(&["eval", "--builtin", "singlet-xy"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["scenario"], "singlet-xy");
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    let elements = r["elements"].as_array().unwrap();
    assert_eq!(elements.len(), 3);
    for e in elements {
        assert_eq!(e["status"], "certain");
        assert_eq!(e["element"]["eigenvalue"], -1.0);
        assert!((e["element"]["probability"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
    let rule = &r["product_rule"][0];
    assert_eq!(rule["status"], "fails");
    assert_eq!(rule["lhs"], -1.0);
    assert_eq!(rule["rhs"], 1.0);
    let verdicts: Vec<&str> = r["queries"].as_array().unwrap().iter().map(|q| q["verdict"].as_str().unwrap()).collect();
    assert_eq!(verdicts, ["true", "true", "true", "false"]);
}

#[test]
fn strict_meaningless_exits_two() {
    let out = tsvf(&["eval", "--builtin", "three-z-x-z", "--strict-meaningless"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["queries"][0]["verdict"], "meaningless");
    assert_eq!(tsvf(&["eval", "--builtin", "three-z-x-z"]).status.code(), Some(0));
}

#[test]
fn check_singlet_xy_agrees() {
    let out = tsvf(&["check", "--builtin", "singlet-xy"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert!(r["max_discrepancy"].as_f64().unwrap() < 1e-12);
    assert_eq!(r["passed"], true);
}

#[test]
fn check_random_is_ordered_and_reproducible() {
    let args = ["check", "--builtin", "stapp-cf-z", "--random", "20", "--dim", "3", "--events", "2", "--seed", "11"];
    let a = tsvf(&args);
    let b = tsvf(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let r = json(&a);
    let labels: Vec<String> = r["random"]["cases"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["label"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(labels, (0..20).map(|i| format!("random-{i}")).collect::<Vec<_>>());
}

#[test]
fn every_builtin_runs_under_every_command() {
    for name in ["singlet-xy", "three-z-x-z", "stapp-cf-z", "stapp-cf-x"] {
        for cmd in [
            vec!["eval", "--builtin", name],
            vec!["check", "--builtin", name],
            vec!["simulate", "--builtin", name, "--samples", "2000", "--seed", "1"],
        ] {
            let out = tsvf(&cmd);
            assert_eq!(out.status.code(), Some(0), "{cmd:?}: {}", String::from_utf8_lossy(&out.stderr));
            json(&out);
        }
        let first_obs = json(&tsvf(&["eval", "--builtin", name]))["elements"][0]["observable"]
            .as_str()
            .unwrap()
            .to_string();
        let out = tsvf(&["elements", "--builtin", name, "--obs", &first_obs]);
        assert_eq!(out.status.code(), Some(0), "elements {name}");
    }
}

#[test]
fn output_is_byte_identical_across_runs() {
    let a = tsvf(&["simulate", "--builtin", "stapp-cf-x", "--samples", "5000", "--seed", "3"]);
    let b = tsvf(&["simulate", "--builtin", "stapp-cf-x", "--samples", "5000", "--seed", "3"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn seed_flag_beats_environment() {
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_tsvf"));
        cmd.args(["simulate", "--builtin", "stapp-cf-x", "--samples", "100"]);
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        match env {
            Some(e) => cmd.env("TSVF_SEED", e),
            None => cmd.env_remove("TSVF_SEED"),
        };
        json(&cmd.output().unwrap())["seed"].as_u64().unwrap()
    };
    assert_eq!(run(None, None), 7);
    assert_eq!(run(Some("12"), None), 12);
    assert_eq!(run(Some("12"), Some("4")), 4);
}

#[test]
fn fmt_prints_canonical_text() {
    let dir = std::env::temp_dir().join(format!("tsvf-fmt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("s.tsvf");
    std::fs::write(&path, "space 2\nstate u = |up>   # comment\npre u\npost u\n").unwrap();
    let out = tsvf(&["fmt", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8(out.stdout.clone()).unwrap(),
        "scenario unnamed\nspace 2\nstate u = [1,0 0,0]\npre u\npost u\n"
    );
    std::fs::write(&path, &out.stdout).unwrap();
    assert_eq!(tsvf(&["fmt", path.to_str().unwrap()]).stdout, out.stdout);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn errors_exit_one_with_stderr_only() {
    for args in [
        vec!["nonsense"],
        vec!["eval"],
        vec!["eval", "--builtin", "nope"],
        vec!["eval", "/definitely/not/here.tsvf"],
        vec!["elements", "--builtin", "singlet-xy", "--obs", "nope"],
        vec!["simulate", "--builtin", "singlet-xy", "--samples", "0"],
    ] {
        let out = tsvf(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn parse_errors_carry_position() {
    let dir = std::env::temp_dir().join(format!("tsvf-err-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.tsvf");
    std::fs::write(&path, "space 2\nstate u = |up> +\n").unwrap();
    let out = tsvf(&["eval", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(tsvf(&["--help"]).status.code(), Some(0));
    let v = tsvf(&["--version"]);
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).contains(env!("CARGO_PKG_VERSION")));
}
