use rand::Rng as _;

use super::*;
use crate::data::TimeSeriesSample;

fn dataset(domain: Domain, task: Task, n: usize, seed: u64, offset: f64) -> DomainDataset {
    let mut r = rng::stream(seed, "trainer-test", &[]);
    let samples = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0) + offset).collect();
            let signal = x[6] + 0.5 * x[7] - offset * 1.5;
            let y = match task {
                Task::Regression => 10.0 + 2.0 * signal,
                Task::Classification => f64::from(u8::from(signal > 0.6)),
            };
            TimeSeriesSample {
                x: Tensor::new(vec![4, 2], x).unwrap(),
                y,
                domain,
                latent: None,
            }
        })
        .collect();
    DomainDataset::new(domain, task, samples).unwrap()
}

fn small(variant: Variant, task: Task) -> TrainingConfig {
    TrainingConfig {
        batch_size: 8,
        epochs: 3,
        hidden: 4,
        features: 3,
        attention: 3,
        mlp_hidden: 4,
        seed: 11,
        execution: Execution::Sequential,
        ..TrainingConfig::desk(variant, task)
    }
}

#[test]
fn toml_overrides_the_selected_profile() {
    let cfg = TrainingConfig::from_toml_str("variant = \"BASE_DANN\"\nepochs = 7\nlambda = 0.2\n").unwrap();
    assert_eq!(cfg.variant, Variant::BaseDann);
    assert_eq!((cfg.epochs, cfg.lambda, cfg.hidden), (7, 0.2, 32));
    let paper = TrainingConfig::from_toml_str("desk_scale = false\ntask = \"classification\"").unwrap();
    assert_eq!(paper, TrainingConfig::paper_scale(Variant::Cmtn, Task::Classification));
    assert_eq!(TrainingConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    assert!(matches!(TrainingConfig::from_toml_str("epoch = 3"), Err(Error::Config(_))));
    assert!(matches!(TrainingConfig::from_toml_str("dropout_rate = 1.0"), Err(Error::Config(_))));
    assert!(TrainingConfig::from_toml_str("variant = \"VRADA\"").is_err());
    assert!(TrainingConfig::from_toml_str("batch_size = \"big\"").is_err());
}

#[test]
fn paper_profile_matches_published_settings() {
    let c = TrainingConfig::paper_scale(Variant::Cmtn, Task::Regression);
    assert_eq!((c.batch_size, c.hidden, c.mlp_hidden, c.features), (512, 500, 100, 100));
    assert_eq!((c.learning_rate, c.lambda, c.dropout_rate), (0.003, 0.005, 0.1));
    let g = TrainingConfig::paper_scale(Variant::BaseDann, Task::Regression);
    assert_eq!((g.learning_rate, g.lambda, g.dropout_rate), (0.003, 0.0001, 0.1));
    let s = TrainingConfig::paper_scale(Variant::LstmS2t, Task::Regression);
    assert_eq!((s.learning_rate, s.dropout_rate), (0.0001, 0.5));
    assert!(!c.desk_scale);
}

#[test]
fn validation_rejects_bad_settings() {
    let ok = small(Variant::Cmtn, Task::Regression);
    assert!(ok.validate().is_ok());
    for broken in [
        TrainingConfig { batch_size: 1, ..ok.clone() },
        TrainingConfig { learning_rate: 0.0, ..ok.clone() },
        TrainingConfig { lambda: -1.0, ..ok.clone() },
        TrainingConfig { beta2: 1.0, ..ok.clone() },
        TrainingConfig { hidden: 0, ..ok.clone() },
        TrainingConfig { clip_norm: f64::NAN, ..ok.clone() },
    ] {
        assert!(matches!(broken.validate(), Err(Error::Config(_))), "{broken:?}");
    }
    let s2t = TrainingConfig { batch_size: 1, ..small(Variant::LstmS2t, Task::Regression) };
    assert!(s2t.validate().is_ok());
}

#[test]
fn zero_epochs_returns_initial_parameters() {
    let src = dataset(Domain::Source, Task::Regression, 32, 1, 0.0);
    let tgt = dataset(Domain::Target, Task::Regression, 32, 2, 0.5);
    let cfg = TrainingConfig { epochs: 0, domain_normalization: false, ..small(Variant::Cmtn, Task::Regression) };
    let (model, result) = train(&cfg, &src, Some(&tgt)).unwrap();
    let fresh = Cmtn::new(cfg.variant, cfg.task, cfg.dims(2), rng::derive_seed(cfg.seed, "init", &[])).unwrap();
    assert_eq!(model.params, fresh.params);
    let (matched, _) = train(&TrainingConfig { domain_normalization: true, ..cfg }, &src, Some(&tgt)).unwrap();
    assert_eq!(matched.params.theta_s, fresh.params.theta_s);
    assert_ne!(matched.params.theta_t, fresh.params.theta_t);
    assert!(result.history.is_empty());
    assert!(result.metrics["source_train"].mape.is_some());
}

#[test]
fn identical_seeds_give_identical_models() {
    let src = dataset(Domain::Source, Task::Classification, 64, 1, 0.0);
    let tgt = dataset(Domain::Target, Task::Classification, 40, 2, 0.5);
    let cfg = small(Variant::Cmtn, Task::Classification);
    let (a, ra) = train(&cfg, &src, Some(&tgt)).unwrap();
    let (b, rb) = train(&cfg, &src, Some(&tgt)).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.history, rb.history);
    assert_eq!(ra.history.len(), cfg.epochs);
    let (c, _) = train(&TrainingConfig { seed: 12, ..cfg }, &src, Some(&tgt)).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn execution_mode_does_not_change_the_result() {
    let src = dataset(Domain::Source, Task::Regression, 48, 3, 0.0);
    let tgt = dataset(Domain::Target, Task::Regression, 48, 4, 0.5);
    let cfg = small(Variant::CmtnNga, Task::Regression);
    let (a, _) = train(&cfg, &src, Some(&tgt)).unwrap();
    let par = TrainingConfig { execution: Execution::Parallel, ..cfg };
    let (b, _) = train(&par, &src, Some(&tgt)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_lambda_baseline_tracks_source_only_training() {
    let src = dataset(Domain::Source, Task::Regression, 48, 5, 0.0);
    let tgt = dataset(Domain::Target, Task::Regression, 48, 6, 0.5);
    let dann_cfg = TrainingConfig { lambda: 0.0, ..small(Variant::BaseDann, Task::Regression) };
    let s2t_cfg = TrainingConfig { variant: Variant::LstmS2t, ..dann_cfg.clone() };
    let (dann, _) = train(&dann_cfg, &src, Some(&tgt)).unwrap();
    let (s2t, _) = train(&s2t_cfg, &src, None).unwrap();
    assert_eq!(dann.params.theta_c, s2t.params.theta_c);
    assert_eq!(dann.params.phi_l, s2t.params.phi_l);
    let fresh = Cmtn::new(Variant::LstmS2t, Task::Regression, s2t_cfg.dims(2), rng::derive_seed(11, "init", &[])).unwrap();
    assert_eq!(s2t.params.phi_d, fresh.params.phi_d);
    assert_eq!(s2t.params.theta_t, fresh.params.theta_t);
}

#[test]
fn training_reduces_the_label_loss() {
    let src = dataset(Domain::Source, Task::Regression, 128, 7, 0.0);
    let tgt = dataset(Domain::Target, Task::Regression, 64, 8, 0.0);
    let cfg = TrainingConfig { epochs: 15, learning_rate: 0.01, ..small(Variant::Cmtn, Task::Regression) };
    let (_, r) = train(&cfg, &src, Some(&tgt)).unwrap();
    let first = r.history[0].label_loss;
    let last = r.history.last().unwrap().label_loss;
    assert!(last < 0.5 * first, "{first} -> {last}");
}

#[test]
fn classification_trains_on_a_balanced_source() {
    let src = dataset(Domain::Source, Task::Classification, 120, 9, 0.0);
    let tgt = dataset(Domain::Target, Task::Classification, 40, 10, 0.5);
    assert!(src.count_class(1) < src.count_class(0));
    let cfg = small(Variant::CmtnNla, Task::Classification);
    let (model, r) = train(&cfg, &src, Some(&tgt)).unwrap();
    let m = &r.metrics["source_train"];
    assert_eq!(m.counts, vec![src.count_class(0), src.count_class(1)]);
    assert!(m.auc.is_some() && m.accuracy.is_some());
    let p = model.predict_target(&tgt.samples[0].x).unwrap();
    assert!(matches!(p, Prediction::Classification { .. }));
    let unbalanced = TrainingConfig { balance_classes: false, ..cfg };
    let (other, _) = train(&unbalanced, &src, Some(&tgt)).unwrap();
    assert_ne!(other.params, model.params);
}

#[test]
fn adversarial_training_needs_target_data() {
    let src = dataset(Domain::Source, Task::Regression, 16, 1, 0.0);
    let cfg = small(Variant::Cmtn, Task::Regression);
    assert!(matches!(train(&cfg, &src, None), Err(Error::Usage(_))));
    assert!(matches!(train(&cfg, &src, Some(&src)), Err(Error::Usage(_))));
    let big = TrainingConfig { batch_size: 17, ..cfg.clone() };
    let tgt = dataset(Domain::Target, Task::Regression, 16, 2, 0.0);
    assert!(matches!(train(&big, &src, Some(&tgt)), Err(Error::Config(_))));
    let cls = dataset(Domain::Target, Task::Classification, 16, 2, 0.0);
    assert!(matches!(train(&cfg, &src, Some(&cls)), Err(Error::Config(_))));
}

#[test]
fn non_finite_loss_names_the_first_bad_batch() {
    let src = dataset(Domain::Source, Task::Regression, 32, 1, 0.0);
    let mut tgt = dataset(Domain::Target, Task::Regression, 24, 2, 0.0);
    tgt.samples[13].x.data_mut()[0] = f64::NAN;
    let cfg = small(Variant::Cmtn, Task::Regression);
    let mut batcher = Batcher::new(&src, Some(&tgt), cfg.batch_size, rng::derive_seed(cfg.seed, "batches", &[])).unwrap();
    let mut expected = None;
    'outer: for epoch in 0..cfg.epochs {
        for (b, batch) in batcher.epoch(epoch as u64).iter().enumerate() {
            if batch.mixed.iter().any(|s| std::ptr::eq(*s, &tgt.samples[13])) {
                expected = Some((epoch, b));
                break 'outer;
            }
        }
    }
    let (epoch, batch) = expected.expect("poisoned sample is drawn");
    match train(&cfg, &src, Some(&tgt)) {
        Err(Error::NonFinite { epoch: e, batch: b }) => assert_eq!((e, b), (epoch, batch)),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}
