//! Label loss on labelled source samples plus the domain loss on a mixed
//! batch. The adversarial sign lives in the gradient reversal layer, so the
//! gradients returned here are those of `L_y - λ L_d` for the shared
//! parameters and of `L_d` for the domain head.

use super::{Cmtn, ForwardMode, Variant};
use crate::data::{Domain, Task, TimeSeriesSample};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::layers::{domain_loss, label_loss, Targets};
use crate::rng;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOptions {
    pub lambda: f64,
    pub dropout_rate: f64,
    /// Base seed of this step's dropout masks.
    pub seed: u64,
    /// Evaluate with dropout active.
    pub training: bool,
    pub execution: Execution,
}

impl LossOptions {
    pub fn eval(lambda: f64) -> Self {
        LossOptions {
            lambda,
            dropout_rate: 0.0,
            seed: 0,
            training: false,
            execution: Execution::Sequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// `label + domain`, for monitoring.
    pub total: f64,
    /// Mean label loss over the labelled batch.
    pub label: f64,
    /// Mean domain loss over the mixed batch.
    pub domain: f64,
    /// One tensor per parameter, in canonical order.
    pub grads: Vec<Tensor>,
}

struct Item<'a> {
    sample: &'a TimeSeriesSample,
    w_label: f64,
    w_domain: f64,
    slot: u64,
}

struct ItemResult {
    label: f64,
    domain: f64,
    grads: Option<Vec<Tensor>>,
}

impl Cmtn {
    /// Combined objective with gradients. Requires both domains in the mixed
    /// batch for adversarial variants.
    pub fn total_loss(
        &self,
        labelled: &[&TimeSeriesSample],
        mixed: &[&TimeSeriesSample],
        opts: &LossOptions,
    ) -> Result<LossReport> {
        if labelled.is_empty() {
            return Err(Error::Usage("empty labelled batch".into()));
        }
        if self.variant.is_adversarial() {
            let has = |d: Domain| mixed.iter().any(|s| s.domain == d);
            if !has(Domain::Source) || !has(Domain::Target) {
                return Err(Error::Usage(format!(
                    "{} needs source and target samples in the domain batch",
                    self.variant
                )));
            }
        }
        self.loss_and_gradients(labelled, mixed, opts)
    }

    /// Like [`Cmtn::total_loss`] without the batch-composition checks.
    pub fn loss_and_gradients(
        &self,
        labelled: &[&TimeSeriesSample],
        mixed: &[&TimeSeriesSample],
        opts: &LossOptions,
    ) -> Result<LossReport> {
        let results = self.evaluate(labelled, mixed, opts, true)?;
        let mut grads: Vec<Tensor> = self.params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        let (mut label, mut domain) = (0.0, 0.0);
        for r in results {
            label += r.label;
            domain += r.domain;
            if let Some(g) = r.grads {
                for (acc, gi) in grads.iter_mut().zip(g) {
                    for (a, b) in acc.data_mut().iter_mut().zip(gi.data()) {
                        *a += b;
                    }
                }
            }
        }
        Ok(LossReport {
            total: label + domain,
            label,
            domain,
            grads,
        })
    }

    /// `(L_y, L_d)` without gradients.
    pub fn objective_terms(
        &self,
        labelled: &[&TimeSeriesSample],
        mixed: &[&TimeSeriesSample],
        opts: &LossOptions,
    ) -> Result<(f64, f64)> {
        let results = self.evaluate(labelled, mixed, opts, false)?;
        Ok(results.iter().fold((0.0, 0.0), |(l, d), r| (l + r.label, d + r.domain)))
    }

    fn evaluate(
        &self,
        labelled: &[&TimeSeriesSample],
        mixed: &[&TimeSeriesSample],
        opts: &LossOptions,
        with_grads: bool,
    ) -> Result<Vec<ItemResult>> {
        if !opts.lambda.is_finite() || opts.lambda < 0.0 {
            return Err(Error::Config(format!("lambda {} must be finite and non-negative", opts.lambda)));
        }
        if let Some(s) = labelled.iter().find(|s| s.domain != Domain::Source) {
            return Err(Error::Usage(format!("labelled batch holds a {:?} sample", s.domain)));
        }
        let adversarial = self.variant.is_adversarial();
        if !adversarial && mixed.iter().any(|s| s.domain == Domain::Target) {
            return Err(Error::Usage("LSTM_S2T cannot train on target samples".into()));
        }
        let items = self.items(labelled, if adversarial { mixed } else { &[] });
        let results = opts
            .execution
            .map(&items, |item| self.evaluate_item(item, opts, with_grads));
        results.into_iter().collect()
    }

    /// One work item per distinct sample: labelled samples first, then mixed
    /// samples that were not already labelled.
    fn items<'a>(&self, labelled: &[&'a TimeSeriesSample], mixed: &[&'a TimeSeriesSample]) -> Vec<Item<'a>> {
        let w_label = 1.0 / labelled.len().max(1) as f64;
        let w_domain = 1.0 / mixed.len().max(1) as f64;
        let mut items: Vec<Item<'a>> = labelled
            .iter()
            .enumerate()
            .map(|(i, s)| Item {
                sample: s,
                w_label,
                w_domain: 0.0,
                slot: i as u64,
            })
            .collect();
        let mut next = labelled.len() as u64;
        for s in mixed {
            match items.iter_mut().find(|it| std::ptr::eq(it.sample, *s) && it.w_domain == 0.0) {
                Some(it) => it.w_domain = w_domain,
                None => {
                    items.push(Item {
                        sample: s,
                        w_label: 0.0,
                        w_domain,
                        slot: next,
                    });
                    next += 1;
                }
            }
        }
        items
    }

    fn evaluate_item(&self, item: &Item<'_>, opts: &LossOptions, with_grads: bool) -> Result<ItemResult> {
        let s = item.sample;
        let x = self.scaler.transform_for(&s.x, s.domain)?;
        let mut tape = Tape::new();
        let (vars, leaves) = self.params.bind(&mut tape);
        let mode = ForwardMode {
            training: opts.training,
            lambda: opts.lambda,
            dropout_rate: opts.dropout_rate,
            dropout_seed: rng::derive_seed(opts.seed, "sample", &[item.slot]),
        };
        let with_label = item.w_label > 0.0;
        let with_domain = item.w_domain > 0.0 && self.variant != Variant::LstmS2t;
        let pass = self.build(&mut tape, &vars, &x, s.domain, &mode, with_label, with_domain)?;

        let mut terms: Vec<Var> = Vec::new();
        let mut label = 0.0;
        if let Some(pred) = pass.label {
            let loss = match self.task {
                Task::Regression => label_loss(&mut tape, pred, Targets::Regression(&[self.scaler.scale_label(s.y)]))?,
                Task::Classification => label_loss(&mut tape, pred, Targets::Classification(&[s.class()]))?,
            };
            label = item.w_label * tape.value(loss).item()?;
            terms.push(tape.scale(loss, item.w_label));
        }
        let mut domain = 0.0;
        if let Some(logits) = pass.domain {
            let loss = domain_loss(&mut tape, logits, &[s.domain.label()])?;
            domain = item.w_domain * tape.value(loss).item()?;
            terms.push(tape.scale(loss, item.w_domain));
        }
        let grads = match (with_grads, terms.as_slice()) {
            (false, _) | (_, []) => None,
            (true, [only]) => Some(tape.backward(*only, &leaves)?.into_tensors()),
            (true, [a, b, ..]) => {
                let sum = tape.add(*a, *b)?;
                Some(tape.backward(sum, &leaves)?.into_tensors())
            }
        };
        Ok(ItemResult { label, domain, grads })
    }
}
