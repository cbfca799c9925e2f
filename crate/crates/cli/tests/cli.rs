use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use market_core::market::io::{instance_to_json, parse_instance};
use market_core::{MarketKind, UtilityFamily};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn md(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_md")).args(args).output().expect("md runs")
}

fn md_path(args: &[&str], path: &Path) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    all.insert(1, path.to_str().unwrap());
    md(&all)
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn f(name: &str) -> String {
    fixture(name).to_str().unwrap().to_string()
}

#[test]
fn solve_linear_lindahl_certifies() {
    let out = md(&["solve", &f("lindahl_linear.json")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&out);
    assert_eq!(doc["form"], "lindahl");
    assert_eq!(doc["report"]["certified"], true);
    assert!(doc["method"].as_str().unwrap().starts_with("nsw"));
    let x: Vec<f64> = serde_json::from_value(doc["allocation"].clone()).unwrap();
    assert!((x.iter().sum::<f64>() - 4.0).abs() < 1e-9);
}

#[test]
fn solve_output_passes_verify() {
    let dir = tempfile::tempdir().unwrap();
    for (inst, method) in [
        ("lindahl_linear.json", "shmyrev"),
        ("lindahl_linear.json", "eg"),
        ("fisher_linear.json", "eg"),
        ("fisher_linear.json", "nsw"),
        ("fisher_linear.json", "shmyrev"),
        ("fisher_nested.json", "eg"),
    ] {
        let sol = dir.path().join("sol.json");
        let out = md(&["solve", &f(inst), "--method", method, "--out", sol.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{inst} {method}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
        let out = md(&["verify", &f(inst), sol.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{inst} {method}");
        assert_eq!(json(&out)["certified"], true);
    }
}

#[test]
fn solve_chores_reports_kkt() {
    for name in ["chores_linear.json", "lindahl_chores.json"] {
        let out = md(&["solve", &f(name), "--method", "chores-kkt"]);
        assert_eq!(code(&out), 0, "{name}");
        let doc = json(&out);
        assert_eq!(doc["report"]["certified"], true);
        let kkt = doc["kkt"].as_object().expect("kkt breakdown");
        for key in ["primal", "dual", "complementarity", "stationarity_prices", "stationarity_beta", "subgradient"] {
            assert!(kkt[key].as_f64().unwrap() < 1e-8, "{name} {key}");
        }
    }
}

#[test]
fn chores_2x2_equilibria() {
    // p = (1, 1) with each agent on its cheaper chore is an equilibrium.
    // So is p = (4/3, 2/3), where agent 1 splits its work.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eq.json");
    let check = |p: [f64; 2], x: [[f64; 2]; 2]| {
        let doc = serde_json::json!({"form": "fisher", "prices": p, "allocations": x});
        std::fs::write(&path, doc.to_string()).unwrap();
        code(&md(&["verify", &f("chores_linear.json"), path.to_str().unwrap()]))
    };
    assert_eq!(check([1.0, 1.0], [[1.0, 0.0], [0.0, 1.0]]), 0);
    assert_eq!(check([4.0 / 3.0, 2.0 / 3.0], [[0.75, 0.0], [0.25, 1.0]]), 0);
    assert_eq!(check([1.1, 0.9], [[1.0, 0.0], [0.0, 1.0]]), 4);
}

#[test]
fn malformed_json_exits_2_with_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"market":"fisher","items":"goods","goods":2,"agents":[{"budget":"x"}]}"#).unwrap();
    let out = md_path(&["solve"], &bad);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("agents[0].budget"), "{err}");
    assert!(out.stdout.is_empty());

    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&md_path(&["solve"], &bad)), 2);
}

#[test]
fn invalid_instance_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("neg.json");
    std::fs::write(
        &bad,
        r#"{"market":"fisher","items":"goods","goods":2,"agents":[{"budget":-1,"utility":{"kind":"linear","a":[1,2]}}]}"#,
    )
    .unwrap();
    assert_eq!(code(&md_path(&["solve"], &bad)), 2);
}

#[test]
fn incompatible_method_exits_3() {
    assert_eq!(code(&md(&["solve", &f("chores_linear.json"), "--method", "eg"])), 3);
    assert_eq!(code(&md(&["solve", &f("lindahl_linear.json"), "--method", "chores-kkt"])), 3);
    // Nested utilities have no Shmyrev program.
    assert_eq!(code(&md(&["solve", &f("fisher_nested.json"), "--method", "shmyrev"])), 3);
}

#[test]
fn uncertified_result_exits_4() {
    let out = md(&["solve", &f("lindahl_linear.json"), "--method", "shmyrev", "--precision", "1e-2", "--tol", "1e-12"]);
    assert_eq!(code(&out), 4);
    assert_eq!(json(&out)["report"]["certified"], false);
}

#[test]
fn missing_file_exits_1() {
    assert_eq!(code(&md(&["solve", "/nonexistent/instance.json"])), 1);
}

#[test]
fn dynamics_prd_lindahl_gs_converges() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trace.csv");
    let out = md(&[
        "dynamics",
        &f("lindahl_linear.json"),
        "--rule",
        "prd-lindahl-gs",
        "--iters",
        "1000",
        "--trace",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let doc = json(&out);
    assert!(doc["residual"].as_f64().unwrap() < 1e-5);
    assert_eq!(doc["report"]["certified"], true);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "iter,potential,kl,residual");
    assert_eq!(text.lines().count(), doc["iterations"].as_u64().unwrap() as usize + 2);
}

fn trace(args: &[&str]) -> Vec<Vec<String>> {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trace.csv");
    let mut all = args.to_vec();
    all.extend(["--trace", csv.to_str().unwrap()]);
    assert_eq!(code(&md(&all)), 0);
    std::fs::read_to_string(&csv).unwrap().lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn tatonnement_nested_residual_decays() {
    let rows = trace(&["dynamics", &f("fisher_nested.json"), "--rule", "tat-fisher"]);
    let r: Vec<f64> = rows.iter().map(|row| row[3].parse().unwrap()).collect();
    assert!(*r.last().unwrap() < 1e-7);
    let burn_in = 20;
    let tail = &r[burn_in..];
    // Monotone up to floating-point noise at the level of the final residual.
    for w in tail.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn zero_iterations_gives_one_row() {
    let rows = trace(&["dynamics", &f("fisher_nested.json"), "--rule", "tat-fisher", "--iters", "0"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "0");
}

#[test]
fn dynamics_is_deterministic_for_a_seed() {
    let args = ["dynamics", &f("fisher_linear.json"), "--rule", "prd-fisher-gs", "--seed", "7", "--with-b"];
    let a = trace(&args);
    assert_eq!(a, trace(&args));
    assert_ne!(
        a[0],
        trace(&["dynamics", &f("fisher_linear.json"), "--rule", "prd-fisher-gs", "--seed", "8", "--with-b"])[0]
    );
    assert_eq!(a[0].len(), 4 + 4);
}

#[test]
fn trace_floats_round_trip() {
    let rows = trace(&["dynamics", &f("fisher_linear.json"), "--rule", "prd-fisher-gs", "--iters", "5"]);
    for row in &rows {
        let v: f64 = row[1].parse().unwrap();
        assert_eq!(format!("{v:.16e}"), row[1]);
    }
}

#[test]
fn dynamics_rule_mismatch_exits_3() {
    assert_eq!(code(&md(&["dynamics", &f("fisher_nested.json"), "--rule", "prd-lindahl-gs"])), 3);
    assert_eq!(code(&md(&["dynamics", &f("fisher_nested.json"), "--rule", "prd-fisher-tc"])), 3);
}

#[test]
fn dualize_linear_lindahl_is_leontief_fisher() {
    let out = md(&["dualize", &f("lindahl_linear.json")]);
    assert_eq!(code(&out), 0);
    let dual = parse_instance(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(dual.kind(), MarketKind::FisherGoods);
    let orig = parse_instance(&std::fs::read_to_string(fixture("lindahl_linear.json")).unwrap()).unwrap();
    for (u, v) in dual.utilities().unwrap().iter().zip(orig.utilities().unwrap()) {
        let (UtilityFamily::Leontief { a, .. }, UtilityFamily::Linear { a: b, .. }) = (u, v) else {
            panic!("expected Leontief dual of a linear utility, got {u:?}");
        };
        assert_eq!(a, b);
    }
}

#[test]
fn dualize_twice_restores_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let once = dir.path().join("once.json");
    let twice = dir.path().join("twice.json");
    for name in ["lindahl_linear.json", "fisher_nested.json", "chores_linear.json"] {
        assert_eq!(code(&md(&["dualize", &f(name), "--out", once.to_str().unwrap()])), 0);
        assert_eq!(code(&md_path(&["dualize", "--out", twice.to_str().unwrap()], &once)), 0);
        let a = parse_instance(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap();
        let b = parse_instance(&std::fs::read_to_string(&twice).unwrap()).unwrap();
        assert_eq!(a.kind(), b.kind());
        assert_eq!(a.budgets(), b.budgets());
        // Equal up to the scalar prefactor, which the JSON omits when it is one.
        for p in [[1.0, 2.0, 0.5], [0.3, 0.3, 3.0]] {
            let p = &p[..a.m()];
            for i in 0..a.n() {
                match (a.utilities(), b.utilities()) {
                    (Ok(ua), Ok(ub)) => {
                        let (x, y) = (ua[i].eval(p).unwrap(), ub[i].eval(p).unwrap());
                        assert!((x - y).abs() < 1e-9 * x.abs().max(1.0), "{name}: {x} vs {y}");
                    }
                    _ => {
                        let (da, db) = (a.disutilities().unwrap(), b.disutilities().unwrap());
                        let (x, y) = (da[i].eval(p).unwrap(), db[i].eval(p).unwrap());
                        assert!((x - y).abs() < 1e-9 * x.abs().max(1.0), "{name}: {x} vs {y}");
                    }
                }
            }
        }
    }
}

#[test]
fn verify_etoe_equilibrium_two() {
    let out = md(&["verify", &f("etoe.json"), &f("etoe_equilibrium2.json")]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["certified"], true);
}

#[test]
fn verify_rejects_perturbed_prices() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("etoe_equilibrium2.json")).unwrap()).unwrap();
    doc["prices"][0][0] = 0.5.into();
    let path = dir.path().join("perturbed.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = md(&["verify", &f("etoe.json"), path.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    assert_eq!(json(&out)["certified"], false);
}

#[test]
fn verify_form_mismatch_exits_3() {
    assert_eq!(code(&md(&["verify", &f("fisher_linear.json"), &f("etoe_equilibrium2.json")])), 3);
}

#[test]
fn fixtures_round_trip() {
    for entry in std::fs::read_dir(fixture("")).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let Ok(inst) = parse_instance(&text) else { continue };
        assert_eq!(parse_instance(&instance_to_json(&inst)).unwrap(), inst, "{}", path.display());
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_md"))
            .args(["solve", &f("lindahl_linear.json")])
            .env("MD_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("3"));
}
