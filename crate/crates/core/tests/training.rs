//! Two-step training, zero-shot evaluation and experiment reports on small
//! generated data.

use sugdg::harness::{
    compare, evaluate, parse_report_csv, report_csv, run_sweep, sweep_reports, train_two_step, TrainConfig, SOURCE_ONLY,
    SUG,
};
use sugdg::net::{Checkpoint, ModelParams, NetShape};
use sugdg::split::SplitMethod;
use sugdg::synth::{generate_synthetic, SynthSpec};

fn tiny_spec() -> SynthSpec {
    let mut spec = SynthSpec::bundled();
    spec.points_per_cloud = 32;
    spec.source_per_class = vec![6; 4];
    for t in &mut spec.targets {
        t.per_class = vec![3; 4];
    }
    spec
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        lr: 5e-3,
        step1_epochs: 4,
        step2_epochs: 3,
        points: 32,
        embed_widths: vec![16, 32],
        head_widths: vec![16],
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_reproducible() {
    let data = generate_synthetic(&tiny_spec()).unwrap();
    let config = tiny_config();
    let a = train_two_step(&config, &data.source, None).unwrap();
    let b = train_two_step(&config, &data.source, None).unwrap();
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
    assert_eq!(a.log_csv(), b.log_csv());
    assert_eq!(a.step2_epochs, 3);
    assert!(a.aborted.is_none());
    let other = train_two_step(&TrainConfig { seed: 1, ..config }, &data.source, None).unwrap();
    assert_ne!(a.checkpoint.to_bytes(), other.checkpoint.to_bytes());
}

#[test]
fn no_step_two_ignores_alignment_settings() {
    let data = generate_synthetic(&tiny_spec()).unwrap();
    let base = TrainConfig {
        step2_epochs: 0,
        ..tiny_config()
    };
    let varied = TrainConfig {
        lambda: 3.0,
        sda: false,
        split_method: SplitMethod::Geometric,
        ..base.clone()
    };
    let a = train_two_step(&base, &data.source, None).unwrap();
    let b = train_two_step(&varied, &data.source, None).unwrap();
    assert_eq!(a.checkpoint.params, b.checkpoint.params);
    assert!(a.split.is_none() && a.assignment.is_none());
    assert!(a.log.iter().all(|r| r.phase == 1));
}

#[test]
fn step_two_logs_every_term() {
    let data = generate_synthetic(&tiny_spec()).unwrap();
    let out = train_two_step(&tiny_config(), &data.source, None).unwrap();
    let csv = out.log_csv();
    assert!(csv.starts_with("step,L_cls,L_ALI_geo,L_ALI_sem,L_total\n"));
    let phase2: Vec<_> = out.log.iter().filter(|r| r.phase == 2).collect();
    assert!(!phase2.is_empty());
    for r in phase2 {
        let l = r.loss;
        assert!((l.total - (l.cls + 0.5 * l.ali)).abs() < 1e-12);
        assert!((l.ali - (l.ali_geo + l.ali_sem)).abs() < 1e-12);
    }
    let split = out.split.unwrap();
    split.validate(&data.source.labels(), 4).unwrap();
}

#[test]
fn plateau_stops_step_two_early() {
    let data = generate_synthetic(&tiny_spec()).unwrap();
    let config = TrainConfig {
        step2_epochs: 40,
        plateau_window: 1,
        plateau_threshold: 1e6,
        ..tiny_config()
    };
    let out = train_two_step(&config, &data.source, None).unwrap();
    assert_eq!(out.step2_epochs, 2);
    assert_eq!(out.total_epochs(), 6);
}

#[test]
fn overfits_a_small_clean_set() {
    let mut spec = tiny_spec();
    spec.source_profiles.truncate(1);
    let data = generate_synthetic(&spec).unwrap();
    let config = TrainConfig {
        q: 0.0,
        lr: 1e-2,
        weight_decay: 0.0,
        step1_epochs: 60,
        step2_epochs: 0,
        augment_jitter: 0.0,
        augment_rotation: 0.0,
        ..tiny_config()
    };
    let out = train_two_step(&config, &data.source, None).unwrap();
    let mut per_epoch = vec![(0.0, 0usize); config.step1_epochs];
    for r in &out.log {
        per_epoch[r.epoch].0 += r.loss.cls;
        per_epoch[r.epoch].1 += 1;
    }
    let means: Vec<f64> = per_epoch.iter().map(|(s, n)| s / *n as f64).collect();
    let windows: Vec<f64> = means.chunks(10).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    for pair in windows.windows(2) {
        assert!(pair[1] <= pair[0], "windowed loss rose: {windows:?}");
    }
    let train = evaluate(&out.checkpoint, std::slice::from_ref(&data.source)).unwrap();
    assert_eq!(train[0].accuracy, 100.0);
}

#[test]
fn constant_model_scores_one_over_c() {
    let data = generate_synthetic(&tiny_spec()).unwrap();
    let shape = NetShape {
        embed: vec![3, 8],
        head: vec![8, 4, 4],
    };
    let mut params = ModelParams::zeros(shape).unwrap();
    let last = params.len() - 4;
    params.values_mut()[last + 2] = 1.0;
    let checkpoint = Checkpoint {
        params,
        class_names: data.source.class_names.clone(),
        adam: None,
    };
    for t in evaluate(&checkpoint, &data.targets).unwrap() {
        assert_eq!(t.accuracy, 25.0);
        assert_eq!(t.per_class, vec![Some(0.0), Some(0.0), Some(100.0), Some(0.0)]);
        assert_eq!(t.class_avg(), 25.0);
    }
}

#[test]
fn evaluation_leaves_the_checkpoint_untouched() {
    let data = generate_synthetic(&tiny_spec()).unwrap();
    let out = train_two_step(&tiny_config(), &data.source, None).unwrap();
    let before = out.checkpoint.to_bytes();
    let results = evaluate(&out.checkpoint, &data.targets).unwrap();
    assert_eq!(out.checkpoint.to_bytes(), before);
    for t in &results {
        let from_confusion: Vec<f64> = t
            .confusion
            .iter()
            .enumerate()
            .map(|(i, row)| 100.0 * row[i] as f64 / row.iter().sum::<usize>() as f64)
            .collect();
        let mean = from_confusion.iter().sum::<f64>() / 4.0;
        assert!((t.class_avg() - mean).abs() < 1e-9);
    }
    let mut renamed = data.targets[0].clone();
    renamed.class_names[0] = "other".into();
    assert!(evaluate(&out.checkpoint, &[renamed]).is_err());
}

#[test]
fn sweep_pairs_arms_on_shared_data() {
    let spec = tiny_spec();
    let config = tiny_config();
    let (data, runs) = run_sweep(&config, &spec, &[3, 4]).unwrap();
    assert_eq!(data, generate_synthetic(&spec).unwrap());
    for e in &runs {
        assert_eq!(e.source_only.outcome.step1_epochs, e.sug.outcome.total_epochs());
        assert_eq!(e.source_only.outcome.step2_epochs, 0);
        assert_eq!(e.source_only.report.config_hash, e.sug.report.config_hash);
        for r in [&e.source_only.report, &e.sug.report] {
            let mean = r.targets.iter().map(|t| t.accuracy).sum::<f64>() / r.targets.len() as f64;
            assert!((r.avg - mean).abs() < 1e-9);
            assert!(r.targets.iter().all(|t| (0.0..=100.0).contains(&t.accuracy)));
        }
    }
    let reports = sweep_reports(&runs);
    assert_eq!(reports.len(), 4);
    let csv = report_csv(&reports).unwrap();
    let (names, rows) = parse_report_csv(&csv).unwrap();
    assert_eq!(names, vec!["scan".to_string(), "distorted".to_string()]);
    for (row, report) in rows.iter().zip(&reports) {
        assert_eq!(row.avg, report.avg);
        assert_eq!(row.accuracies, report.targets.iter().map(|t| t.accuracy).collect::<Vec<_>>());
    }
    let cmp = compare(&reports, SOURCE_ONLY, SUG).unwrap();
    assert_eq!(cmp.seeds, vec![3, 4]);
}
