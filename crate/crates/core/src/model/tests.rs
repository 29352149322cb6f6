use rand::Rng as _;

use crate::layers::ParamGroup;

use super::*;
use crate::data::TimeSeriesSample;
use crate::exec::Execution;

fn dims() -> ModelDims {
    ModelDims {
        sensors: 3,
        features: 4,
        hidden: 4,
        attention: 3,
        mlp_hidden: 4,
    }
}

fn sample(seed: u64, domain: Domain, task: Task) -> TimeSeriesSample {
    let mut r = rng::stream(seed, "sample", &[]);
    let x = Tensor::new(vec![6, 3], (0..18).map(|_| r.random_range(-1.5..1.5)).collect()).unwrap();
    let y = match task {
        Task::Regression => r.random_range(-1.0..1.0),
        Task::Classification => f64::from(r.random_range(0..2u8)),
    };
    TimeSeriesSample {
        x,
        y,
        domain,
        latent: None,
    }
}

fn batch(task: Task) -> (Vec<TimeSeriesSample>, Vec<TimeSeriesSample>) {
    let src = (0..2).map(|i| sample(10 + i, Domain::Source, task)).collect();
    let tgt = (0..2).map(|i| sample(20 + i, Domain::Target, task)).collect();
    (src, tgt)
}

fn train_opts(lambda: f64) -> LossOptions {
    LossOptions {
        lambda,
        dropout_rate: 0.2,
        seed: 77,
        training: true,
        execution: Execution::Sequential,
    }
}

#[test]
fn zero_network_outputs_the_label_bias() {
    let mut m = Cmtn::zeros(Variant::Cmtn, Task::Regression, dims()).unwrap();
    m.params.phi_l.b_out = Tensor::new(vec![1, 1], vec![0.625]).unwrap();
    let s = sample(1, Domain::Source, Task::Regression);
    let rec = m.forward(&s.x, Domain::Source, &ForwardMode::eval()).unwrap();
    assert_eq!(rec.label.data(), &[0.625]);
    assert_eq!(rec.domain_logits.unwrap().data(), &[0.0, 0.0]);
    let alpha = rec.alpha.unwrap();
    assert_eq!(alpha.len(), 6);
    assert!(alpha.iter().flatten().all(|&a| a == 0.25));
    assert_eq!(rec.gamma.unwrap().len(), 5);
    assert_eq!(rec.context.shape(), &[1, 8]);
}

#[test]
fn uniform_attention_equals_no_attention_on_scaled_features() {
    let d = dims();
    let mut full = Cmtn::new(Variant::Cmtn, Task::Regression, d, 3).unwrap();
    full.params.theta_c.dynamic = crate::layers::DynamicAttnParams::zeros(d.hidden, d.features, d.attention);
    let mut nla = full.clone();
    nla.variant = Variant::CmtnNla;
    let k = d.features as f64;
    let lstm = &mut nla.params.theta_c.lstm;
    for w in [&mut lstm.w_input, &mut lstm.w_forget, &mut lstm.w_cell, &mut lstm.w_output] {
        let cols = w.cols();
        for v in &mut w.data_mut()[..d.features * cols] {
            *v /= k;
        }
    }
    for i in 0..5 {
        let s = sample(100 + i, Domain::Target, Task::Regression);
        let a = full.forward(&s.x, Domain::Target, &ForwardMode::eval()).unwrap();
        let b = nla.forward(&s.x, Domain::Target, &ForwardMode::eval()).unwrap();
        assert!((a.label.item().unwrap() - b.label.item().unwrap()).abs() < 1e-12);
        assert!(b.alpha.is_none());
    }
}

#[test]
fn forward_is_deterministic_for_a_dropout_seed() {
    let m = Cmtn::new(Variant::Cmtn, Task::Classification, dims(), 5).unwrap();
    let s = sample(2, Domain::Source, Task::Classification);
    let mode = ForwardMode::train(0.5, 0.5, 1234);
    let a = m.forward(&s.x, Domain::Source, &mode).unwrap();
    let b = m.forward(&s.x, Domain::Source, &mode).unwrap();
    assert_eq!(a, b);
    let c = m.forward(&s.x, Domain::Source, &ForwardMode::train(0.5, 0.5, 1235)).unwrap();
    assert_ne!(a.label, c.label);
}

#[test]
fn attention_traces_follow_the_variant() {
    let s = sample(3, Domain::Source, Task::Regression);
    for v in Variant::ALL {
        let m = Cmtn::new(v, Task::Regression, dims(), 1).unwrap();
        let rec = m.forward(&s.x, Domain::Source, &ForwardMode::eval()).unwrap();
        assert_eq!(rec.alpha.is_some(), v.has_dynamic_attention(), "{v}");
        assert_eq!(rec.gamma.is_some(), v.has_temporal_attention(), "{v}");
        assert_eq!(rec.domain_logits.is_some(), v.is_adversarial(), "{v}");
        let width = if v.has_temporal_attention() { 8 } else { 4 };
        assert_eq!(rec.context.shape(), &[1, width], "{v}");
        if let Some(g) = rec.gamma {
            assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn bad_input_shape_is_rejected() {
    let m = Cmtn::new(Variant::Cmtn, Task::Regression, dims(), 1).unwrap();
    let x = Tensor::zeros(&[6, 4]);
    assert!(matches!(
        m.forward(&x, Domain::Source, &ForwardMode::eval()),
        Err(Error::Dimension { .. })
    ));
    let short = Tensor::zeros(&[1, 3]);
    assert!(m.forward(&short, Domain::Source, &ForwardMode::eval()).is_err());
    let nga = Cmtn::new(Variant::CmtnNga, Task::Regression, dims(), 1).unwrap();
    assert!(nga.forward(&short, Domain::Source, &ForwardMode::eval()).is_ok());
}

#[test]
fn source_only_baseline_refuses_target_training() {
    let m = Cmtn::new(Variant::LstmS2t, Task::Regression, dims(), 1).unwrap();
    let t = sample(4, Domain::Target, Task::Regression);
    let err = m.forward(&t.x, Domain::Target, &ForwardMode::train(0.0, 0.0, 0));
    assert!(matches!(err, Err(Error::Usage(_))));
    assert!(m.predict_target(&t.x).is_ok());
    let s = sample(5, Domain::Source, Task::Regression);
    assert!(matches!(m.total_loss(&[&s], &[&t], &train_opts(0.1)), Err(Error::Usage(_))));
    assert!(m.total_loss(&[&s], &[], &train_opts(0.1)).is_ok());
}

#[test]
fn adversarial_variants_need_both_domains() {
    let m = Cmtn::new(Variant::Cmtn, Task::Regression, dims(), 1).unwrap();
    let (src, tgt) = batch(Task::Regression);
    let opts = train_opts(0.1);
    assert!(matches!(m.total_loss(&[&src[0]], &[&src[0], &src[1]], &opts), Err(Error::Usage(_))));
    assert!(matches!(m.total_loss(&[], &[&src[0], &tgt[0]], &opts), Err(Error::Usage(_))));
    assert!(matches!(m.total_loss(&[&tgt[0]], &[&src[0], &tgt[0]], &opts), Err(Error::Usage(_))));
    assert!(m.total_loss(&[&src[0]], &[&src[0], &tgt[0]], &opts).is_ok());
}

#[test]
fn perfect_prediction_leaves_only_the_domain_term() {
    let mut m = Cmtn::zeros(Variant::Cmtn, Task::Regression, dims()).unwrap();
    let s = sample(6, Domain::Source, Task::Regression);
    m.params.phi_l.b_out = Tensor::new(vec![1, 1], vec![s.y]).unwrap();
    let r = m.loss_and_gradients(&[&s], &[&s], &LossOptions::eval(0.5)).unwrap();
    assert_eq!(r.label, 0.0);
    assert!((r.domain - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((r.total - std::f64::consts::LN_2).abs() < 1e-15);
}

fn theta_and_label_grads(m: &Cmtn, r: &LossReport) -> Vec<Tensor> {
    m.params
        .partitions()
        .into_iter()
        .zip(&r.grads)
        .filter(|(p, _)| *p != Partition::PhiD)
        .map(|(_, g)| g.clone())
        .collect()
}

#[test]
fn zero_lambda_removes_the_domain_branch_from_features() {
    let (src, tgt) = batch(Task::Regression);
    for v in [Variant::Cmtn, Variant::CmtnNde, Variant::BaseDann] {
        let m = Cmtn::new(v, Task::Regression, dims(), 8).unwrap();
        let labelled = [&src[0], &src[1]];
        let adv = m.total_loss(&labelled, &[&src[0], &tgt[0], &tgt[1]], &train_opts(0.0)).unwrap();
        let plain = m.loss_and_gradients(&labelled, &[], &train_opts(0.0)).unwrap();
        assert_eq!(theta_and_label_grads(&m, &adv), theta_and_label_grads(&m, &plain), "{v}");
        assert!(adv.domain > 0.0);
    }
}

#[test]
fn zero_lambda_baseline_matches_source_only_lstm() {
    let (src, tgt) = batch(Task::Classification);
    let dann = Cmtn::new(Variant::BaseDann, Task::Classification, dims(), 4).unwrap();
    let s2t = Cmtn::new(Variant::LstmS2t, Task::Classification, dims(), 4).unwrap();
    assert_eq!(dann.params.theta_c, s2t.params.theta_c);
    assert_eq!(dann.params.phi_l, s2t.params.phi_l);
    let labelled = [&src[0], &src[1]];
    let a = dann.total_loss(&labelled, &[&src[0], &tgt[0]], &train_opts(0.0)).unwrap();
    let b = s2t.total_loss(&labelled, &[], &train_opts(0.0)).unwrap();
    assert_eq!(a.label, b.label);
    assert_eq!(theta_and_label_grads(&dann, &a), theta_and_label_grads(&s2t, &b));
    assert!(b.grads.iter().zip(s2t.params.partitions()).all(|(g, p)| p != Partition::PhiD || g.norm_sq() == 0.0));
    assert_eq!(b.domain, 0.0);
}

#[test]
fn single_domain_batches_respect_the_partition() {
    let (src, tgt) = batch(Task::Regression);
    let m = Cmtn::new(Variant::Cmtn, Task::Regression, dims(), 2).unwrap();
    let parts = m.params.partitions();
    let opts = train_opts(0.3);
    let norms = |r: &LossReport, part: Partition| -> f64 {
        r.grads.iter().zip(&parts).filter(|(_, p)| **p == part).map(|(g, _)| g.norm_sq()).sum()
    };
    let src_only = m.loss_and_gradients(&[&src[0], &src[1]], &[&src[0], &src[1]], &opts).unwrap();
    assert_eq!(norms(&src_only, Partition::ThetaT), 0.0);
    assert!(norms(&src_only, Partition::ThetaS) > 0.0);
    let tgt_only = m.loss_and_gradients(&[], &[&tgt[0], &tgt[1]], &opts).unwrap();
    assert_eq!(norms(&tgt_only, Partition::ThetaS), 0.0);
    assert!(norms(&tgt_only, Partition::ThetaT) > 0.0);
    assert_eq!(norms(&tgt_only, Partition::PhiL), 0.0);
}

#[test]
fn gradients_match_finite_differences_of_the_saddle_objective() {
    let lambda = 0.3;
    for (v, task) in [
        (Variant::Cmtn, Task::Regression),
        (Variant::Cmtn, Task::Classification),
        (Variant::CmtnNde, Task::Regression),
        (Variant::CmtnNga, Task::Classification),
        (Variant::CmtnNla, Task::Regression),
        (Variant::BaseDann, Task::Regression),
    ] {
        let (src, tgt) = batch(task);
        let m = Cmtn::new(v, task, dims(), 6).unwrap();
        let opts = train_opts(lambda);
        let labelled = [&src[0], &src[1]];
        let mixed = [&src[0], &src[1], &tgt[0], &tgt[1]];
        let report = m.total_loss(&labelled, &mixed, &opts).unwrap();
        let parts = m.params.partitions();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for (k, grad) in report.grads.iter().enumerate() {
            let mut numeric = vec![0.0; grad.len()];
            for (i, slot) in numeric.iter_mut().enumerate() {
                let eval = |delta: f64| {
                    let mut p = m.clone();
                    p.params.tensors_mut()[k].data_mut()[i] += delta;
                    let (ly, ld) = p.objective_terms(&labelled, &mixed, &opts).unwrap();
                    if parts[k] == Partition::PhiD {
                        ld
                    } else {
                        ly - lambda * ld
                    }
                };
                *slot = (eval(eps) - eval(-eps)) / (2.0 * eps);
            }
            // Components below 1e-6 sit at the difference quotient's noise floor.
            let err = grad
                .data()
                .iter()
                .zip(&numeric)
                .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-6))
                .fold(0.0, f64::max);
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "{v} {task:?}: {worst}");
    }
}

#[test]
fn parallel_and_sequential_gradients_are_bit_identical() {
    let (src, tgt) = batch(Task::Classification);
    let m = Cmtn::new(Variant::Cmtn, Task::Classification, dims(), 12).unwrap();
    let mut opts = train_opts(0.1);
    let seq = m.total_loss(&[&src[0], &src[1]], &[&src[0], &tgt[0], &tgt[1]], &opts).unwrap();
    opts.execution = Execution::Parallel;
    let par = m.total_loss(&[&src[0], &src[1]], &[&src[0], &tgt[0], &tgt[1]], &opts).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn target_prediction_uses_only_target_route() {
    let m = Cmtn::new(Variant::Cmtn, Task::Classification, dims(), 13).unwrap();
    let t = sample(30, Domain::Target, Task::Classification);
    let p = m.predict_target(&t.x).unwrap();
    let rec = m.forward(&t.x, Domain::Target, &ForwardMode::eval()).unwrap();
    assert_eq!(p, m.interpret(&rec.label).unwrap());
    let Prediction::Classification { class, scores } = &p else { panic!("expected classes") };
    assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(*class, usize::from(scores[1] > scores[0]));

    let mut other = m.clone();
    for t in other.params.phi_d.tensors_mut().into_iter().chain(other.params.theta_s.tensors_mut()) {
        for v in t.data_mut() {
            *v = *v * 3.0 + 1.0;
        }
    }
    assert_eq!(other.predict_target(&t.x).unwrap(), p);
    other.params.theta_t.bias.data_mut()[0] += 0.5;
    assert_ne!(other.predict_target(&t.x).unwrap(), p);
}

#[test]
fn regression_predictions_are_in_label_units() {
    let mut m = Cmtn::zeros(Variant::BaseDann, Task::Regression, dims()).unwrap();
    m.params.phi_l.b_out = Tensor::new(vec![1, 1], vec![0.5]).unwrap();
    m.scaler.label_mean = 10.0;
    m.scaler.label_std = 4.0;
    let s = sample(31, Domain::Target, Task::Regression);
    assert_eq!(m.predict_target(&s.x).unwrap(), Prediction::Regression(12.0));
}

#[test]
fn scaler_standardizes_source_columns() {
    let samples: Vec<TimeSeriesSample> = (0..20)
        .map(|i| {
            let mut s = sample(40 + i, Domain::Source, Task::Regression);
            for row in s.x.data_mut().chunks_mut(3) {
                row[0] = row[0] * 5.0 + 100.0;
            }
            s.y = 3.0 + s.y * 2.0;
            s
        })
        .collect();
    let data = DomainDataset::new(Domain::Source, Task::Regression, samples).unwrap();
    let sc = Scaler::fit(&data).unwrap();
    assert!((sc.input_mean[0] - 100.0).abs() < 2.0);
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    let mut n = 0.0;
    for s in &data.samples {
        let t = sc.transform(&s.x).unwrap();
        for row in t.data().chunks(3) {
            for j in 0..3 {
                sum[j] += row[j];
                sq[j] += row[j] * row[j];
            }
            n += 1.0;
        }
    }
    for j in 0..3 {
        assert!((sum[j] / n).abs() < 1e-9);
        assert!((sq[j] / n - 1.0).abs() < 1e-9);
    }
    let y = data.samples[3].y;
    assert!((sc.unscale_label(sc.scale_label(y)) - y).abs() < 1e-12);
}

#[test]
fn checkpoint_round_trip_is_value_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let mut m = Cmtn::new(Variant::CmtnNga, Task::Classification, dims(), 21).unwrap();
    m.scaler.input_mean = vec![0.1, 1.0 / 3.0, -7.25];
    m.params.phi_l.b_out.data_mut()[0] = std::f64::consts::PI * 1e-17;
    let config = serde_json::json!({"lr": 0.003});
    m.save(&path, Some(config.clone())).unwrap();
    let back = Cmtn::load(&path).unwrap();
    assert_eq!(back, m);
    for (a, b) in back.params.tensors().iter().zip(m.params.tensors()) {
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert_eq!(Checkpoint::load(&path).unwrap().config, Some(config));

    let mut bad = Checkpoint::from_model(&m, None);
    bad.tensors[0].shape = vec![2, 2];
    assert!(matches!(bad.into_model(), Err(Error::Data(_))));
    let mut wrong = Checkpoint::from_model(&m, None);
    wrong.variant = Variant::Cmtn;
    assert!(wrong.into_model().is_err());
    assert!(matches!(Cmtn::load(&dir.path().join("missing.json")), Err(Error::Io { .. })));
}
