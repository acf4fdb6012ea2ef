use slide_core::harness::checkpoint::load_checkpoint;
use slide_core::harness::commands;
use slide_core::harness::config::RunConfig;
use slide_core::harness::log::{run_episode, Controller};
use slide_core::harness::metrics::compute_metrics;
use slide_core::learning::rollout::Actor;

const TINY: &str = r#"
[train]
instances = 2
epochs = 2

[distill]
instances = 2
epochs = 3

[eval]
episodes = 2

[[curriculum.stages]]
name = "flat6"
scenario = "flat6"
epochs = 2
"#;

fn tiny(preset: &str, dir: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::from_toml_str(TINY, Some(preset)).unwrap();
    cfg.out_dir = dir.to_path_buf();
    cfg
}

#[test]
fn baseline_slides_flat6_without_fault() {
    let cfg = RunConfig::from_toml_str("", Some("flat6")).unwrap();
    let log = run_episode(&cfg.sim, Controller::Baseline, 1).unwrap();
    assert!(log.fault.is_none(), "{:?}", log.fault);
    let sliding: Vec<_> = log.rows.iter().filter(|r| r.sliding).collect();
    let touching = sliding.iter().filter(|r| r.in_contact).count();
    assert!(touching * 10 >= sliding.len() * 9, "contact on {touching}/{} sliding steps", sliding.len());
    let m = compute_metrics(&log, &cfg.eval.window).unwrap();
    assert!(m.mean_tilt_deg < 10.0 && !m.fault);
}

#[test]
fn student_checkpoint_drives_an_episode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny("flat6", dir.path());
    let summary = commands::distill(&cfg, None).unwrap();
    assert!(summary.heldout_mse.is_finite() && summary.samples > 0);
    let ck = load_checkpoint(&dir.path().join("student.json")).unwrap();
    let actor = Actor::Deterministic { net: &ck.actor, normalizer: &ck.normalizer, input: ck.input };
    let a = run_episode(&cfg.sim, Controller::Variable(actor), 5).unwrap();
    let b = run_episode(&cfg.sim, Controller::Variable(actor), 5).unwrap();
    assert_eq!(a.rows.len(), b.rows.len());
    assert!(a.rows.iter().zip(&b.rows).all(|(x, y)| x.action == y.action && x.position == y.position));
    assert!(a.rows.iter().all(|r| r.action.iter().all(|&u| u > 0.0 && u < 1.0)));
}

#[test]
fn finetune_then_eval_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny("flat6", &dir.path().join("distill"));
    commands::distill(&cfg, None).unwrap();
    let ft = tiny("flat6", &dir.path().join("ft"));
    let out = commands::finetune(&ft, &dir.path().join("distill/student.json")).unwrap();
    assert_eq!(out.history.len(), 2);
    assert!(out.history.iter().all(|h| h.gain_violations == 0));
    let ev = tiny("wsw", &dir.path().join("eval"));
    let ms = commands::eval(&ev, Some(&dir.path().join("ft/finetune.json")), true).unwrap();
    assert_eq!(ms.len(), 2);
    let text = std::fs::read_to_string(dir.path().join("eval/metrics.csv")).unwrap();
    assert_eq!(text.lines().count(), 4, "header, two episodes, mean row");
}

#[test]
fn config_round_trips_through_toml() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny("step1cm", dir.path());
    let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap(), None).unwrap();
    assert_eq!(back, cfg);
}
