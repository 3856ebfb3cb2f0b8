use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn starfd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starfd"))
        .args(args)
        .output()
        .expect("spawn starfd")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "name = small\nsweep = elements\nvalues = 2, 3\ntrials = 3\n\
                     methods = oracle, random, alternating\nobjective = maxrate:3\n\
                     [scenario]\nmode = MS\nphase_levels = 2\n[random]\nbudget = 10\n";

const TINY_NEURAL: &str = "name = tiny\nvalues = 3\ntrials = 4\nmethods = alternating, neural\n\
                           objective = maxrate:20\n\
                           [scenario]\nn_tx = 2\nmode = MS\nphase_levels = 2\nsi_leak_db = -90\nd_fb = 0.3\n\
                           [neural]\nsamples = 200\nenvironments = 40\nval_environments = 10\nhidden = 8\n\
                           critic_epochs = 2\ngenerator_epochs = 2\n\
                           [oracle_check]\ninstances = 5\nalt_min = 0\nneural_min = 0\n";

#[test]
fn validate_reports_lines_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_cfg(dir.path(), "good.cfg", SMALL);
    let o = starfd(&["validate", &good]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("18 rows"));

    let bad = write_cfg(
        dir.path(),
        "bad.cfg",
        "name = b\n[scenario]\nphase_levels = 3\nwhat = 1\n",
    );
    let o = starfd(&["validate", &bad]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.contains("line 3: phase levels must be 0 or a power of two"),
        "{err}"
    );
    assert!(err.contains("line 4: unknown key 'what'"), "{err}");

    let o = starfd(&["validate", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(starfd(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(starfd(&["run"]).status.code(), Some(1));
    assert_eq!(starfd(&["--help"]).status.code(), Some(0));
}

#[test]
fn run_summarize_plot_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "small.cfg", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, jobs) in [(&a, "1"), (&b, "3")] {
        let o = starfd(&[
            "run",
            &cfg,
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
            "--jobs",
            jobs,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let ra = fs::read(a.join("results.csv")).unwrap();
    assert_eq!(ra, fs::read(b.join("results.csv")).unwrap());
    assert!(a.join("configs.csv").exists());
    let text = String::from_utf8(ra).unwrap();
    assert_eq!(text.lines().count(), 19);

    let results = a.join("results.csv");
    let o = starfd(&["summarize", results.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("oracle"));
    let summary = a.join("summary.csv");
    assert!(summary.exists());

    let svg = dir.path().join("chart.svg");
    let o = starfd(&[
        "plot",
        summary.to_str().unwrap(),
        "--x",
        "M",
        "--y",
        "rate_dl",
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svg_text = fs::read_to_string(&svg).unwrap();
    assert!(svg_text.starts_with("<svg"));
    assert_eq!(svg_text.matches("<polyline").count(), 3);

    let o = starfd(&["plot", summary.to_str().unwrap(), "--y", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = starfd(&["summarize", dir.path().join("none.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let junk = write_cfg(dir.path(), "junk.csv", "a,b\n1,2\n");
    assert_eq!(starfd(&["summarize", &junk]).status.code(), Some(2));

    let cfg = write_cfg(dir.path(), "small.cfg", SMALL);
    let o = starfd(&["eval", &cfg, "--model", dir.path().join("nope.txt").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.txt"));
}

#[test]
fn train_eval_and_oracle_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "tiny.cfg", TINY_NEURAL);
    let model = dir.path().join("models/tiny.txt");
    let o = starfd(&["train", &cfg, "--out", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(fs::read_to_string(&model).unwrap().starts_with("starfd-model 1"));

    let o = starfd(&["eval", &cfg, "--model", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("neural"));

    let with_model = TINY_NEURAL.replace("[neural]\n", &format!("[neural]\nmodel = {}\n", model.display()));
    let cfg2 = write_cfg(dir.path(), "tiny2.cfg", &with_model);
    let o = starfd(&["oracle-check", &cfg2]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("neural within 15%"));

    let strict = with_model.replace("neural_min = 0", "neural_min = 5\nneural_tol = 0");
    let cfg3 = write_cfg(dir.path(), "tiny3.cfg", &strict);
    let o = starfd(&["oracle-check", &cfg3]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stderr(&o).contains("below threshold"));

    let wrong = write_cfg(dir.path(), "wrong.cfg", &SMALL.replace("values = 2, 3", "values = 2"));
    let o = starfd(&["eval", &wrong, "--model", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
