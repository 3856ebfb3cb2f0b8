use starfd_core::harness::{emit_config, plot_svg, rows_to_csv, summarize, Axes, Summary};
use starfd_core::neural::{train_pipeline, ModelBundle, PipelineSizes, TrainHyper};
use starfd_core::{evaluate, gen_channels, parse_config, run_plan, Objective, Rng, RunOptions, ScenarioSpec, StarMode};

#[test]
fn plan_to_chart() {
    let plan = parse_config(
        "name = wf\nsweep = phase_levels\nvalues = 0, 2, 8\ntrials = 3\nmethods = random, alternating\n\
         objective = maxrate:3\n[scenario]\nn_elems = 16\n[random]\nbudget = 20\n",
    )
    .unwrap();
    assert_eq!(parse_config(&emit_config(&plan)).unwrap(), plan);
    let rows = run_plan(&plan, 5, RunOptions::default()).unwrap();
    assert_eq!(rows.len(), 18);
    let summary = summarize(&rows_to_csv(&rows)).unwrap();
    assert_eq!(summary.rows.len(), 6);
    assert!(summary.rows.iter().all(|r| r.n == 3 && r.m == 16));
    let back = Summary::from_csv(&summary.to_csv()).unwrap();
    let svg = plot_svg(&back.rows, &Axes::new("L", "rate_dl").unwrap()).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains("L (phase levels)"));
}

#[test]
fn trained_bundle_survives_disk_round_trip() {
    let family = ScenarioSpec {
        n_tx: 2,
        n_elems: 3,
        mode: StarMode::Ms,
        phase_levels: 2,
        ..ScenarioSpec::default()
    };
    let tiny = TrainHyper {
        hidden: vec![8],
        epochs: 2,
        ..TrainHyper::default()
    };
    let sizes = PipelineSizes {
        samples: 100,
        environments: 20,
        val_environments: 5,
        critic: tiny.clone(),
        generator: tiny,
    };
    let obj = Objective::MaxRateSubjectToSi { epsilon_db: 10.0 };
    let (bundle, critic_rep, gen_rep) = train_pipeline(&family, obj, &sizes, 3).unwrap();
    assert_eq!(critic_rep.epoch_losses.len(), 2);
    assert_eq!(gen_rep.val_scores.len(), 2);

    let path = std::env::temp_dir().join(format!("starfd-workflow-{}.txt", std::process::id()));
    bundle.save(&path).unwrap();
    let loaded = ModelBundle::load(&path).unwrap();
    std::fs::remove_file(&path).unwrap();

    let ch = gen_channels(&family, &mut Rng::new(9)).unwrap();
    let (a, la) = bundle.infer(&ch).unwrap();
    let (b, lb) = loaded.infer(&ch).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        evaluate(&family, &ch, &a, &la).unwrap(),
        evaluate(&family, &ch, &b, &lb).unwrap()
    );
}
