//! The partitioned parameter set: per-domain extractors, shared causal
//! layers, and the two heads.

use serde::{Deserialize, Serialize};

use super::{ModelDims, Variant};
use crate::data::Task;
use crate::layers::{
    DynamicAttnParams, DynamicAttnVars, ExtractorParams, ExtractorVars, HeadParams, HeadVars,
    LstmParams, LstmVars, ParamGroup, TemporalAttnParams, TemporalAttnVars,
};
use crate::rng;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    ThetaS,
    ThetaT,
    ThetaC,
    PhiL,
    PhiD,
}

impl Partition {
    pub fn prefix(self) -> &'static str {
        match self {
            Partition::ThetaS => "theta_s",
            Partition::ThetaT => "theta_t",
            Partition::ThetaC => "theta_c",
            Partition::PhiL => "phi_l",
            Partition::PhiD => "phi_d",
        }
    }
}

/// Shared causal-mechanism parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedParams {
    pub lstm: LstmParams,
    pub temporal: TemporalAttnParams,
    pub dynamic: DynamicAttnParams,
    /// Domain-agnostic affine projection, used only by the variant without
    /// per-domain extractors.
    pub projection: ExtractorParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmtnParams {
    pub theta_s: ExtractorParams,
    pub theta_t: ExtractorParams,
    pub theta_c: SharedParams,
    pub phi_l: HeadParams,
    pub phi_d: HeadParams,
}

#[derive(Debug, Clone, Copy)]
pub struct CmtnVars {
    pub theta_s: ExtractorVars,
    pub theta_t: ExtractorVars,
    pub lstm: LstmVars,
    pub temporal: TemporalAttnVars,
    pub dynamic: DynamicAttnVars,
    pub projection: ExtractorVars,
    pub phi_l: HeadVars,
    pub phi_d: HeadVars,
}

/// Width of the LSTM input and of the heads for a given wiring.
pub(crate) fn widths(dims: &ModelDims, variant: Variant) -> (usize, usize) {
    let lstm_in = if variant.has_extractor() { dims.features } else { dims.sensors };
    let ctx = if variant.has_temporal_attention() { 2 * dims.hidden } else { dims.hidden };
    (lstm_in, ctx)
}

pub(crate) fn label_outputs(task: Task) -> usize {
    match task {
        Task::Regression => 1,
        Task::Classification => 2,
    }
}

impl CmtnParams {
    /// Random initialization. Every group draws from its own stream, so
    /// variants that share a group's shape also share its initial values.
    /// The target extractor starts as a copy of the source extractor.
    pub fn init(dims: &ModelDims, variant: Variant, task: Task, seed: u64) -> Self {
        let (lstm_in, ctx) = widths(dims, variant);
        let s = |name: &str| rng::stream(seed, "init", &[rng::derive_seed(0, name, &[])]);
        let theta_s = ExtractorParams::init(dims.sensors, dims.features, &mut s("theta_s"));
        CmtnParams {
            theta_t: theta_s.clone(),
            theta_s,
            theta_c: SharedParams {
                lstm: LstmParams::init(lstm_in, dims.hidden, &mut s("theta_c.lstm")),
                temporal: TemporalAttnParams::init(dims.hidden, &mut s("theta_c.temporal")),
                dynamic: DynamicAttnParams::init(
                    dims.hidden,
                    dims.features,
                    dims.attention,
                    &mut s("theta_c.dynamic"),
                ),
                projection: ExtractorParams::init(dims.sensors, dims.features, &mut s("theta_c.projection")),
            },
            phi_l: HeadParams::init(ctx, dims.mlp_hidden, label_outputs(task), &mut s("phi_l")),
            phi_d: HeadParams::init(ctx, dims.mlp_hidden, 2, &mut s("phi_d")),
        }
    }

    pub fn zeros(dims: &ModelDims, variant: Variant, task: Task) -> Self {
        let (lstm_in, ctx) = widths(dims, variant);
        CmtnParams {
            theta_s: ExtractorParams::zeros(dims.sensors, dims.features),
            theta_t: ExtractorParams::zeros(dims.sensors, dims.features),
            theta_c: SharedParams {
                lstm: LstmParams::zeros(lstm_in, dims.hidden),
                temporal: TemporalAttnParams::zeros(dims.hidden),
                dynamic: DynamicAttnParams::zeros(dims.hidden, dims.features, dims.attention),
                projection: ExtractorParams::zeros(dims.sensors, dims.features),
            },
            phi_l: HeadParams::zeros(ctx, dims.mlp_hidden, label_outputs(task)),
            phi_d: HeadParams::zeros(ctx, dims.mlp_hidden, 2),
        }
    }

    /// `(name, partition, tensor)` in canonical order.
    pub fn named(&self) -> Vec<(String, Partition, &Tensor)> {
        let mut out = Vec::new();
        push_group(&mut out, Partition::ThetaS, "theta_s", &self.theta_s);
        push_group(&mut out, Partition::ThetaT, "theta_t", &self.theta_t);
        push_group(&mut out, Partition::ThetaC, "theta_c.lstm", &self.theta_c.lstm);
        push_group(&mut out, Partition::ThetaC, "theta_c.temporal", &self.theta_c.temporal);
        push_group(&mut out, Partition::ThetaC, "theta_c.dynamic", &self.theta_c.dynamic);
        push_group(&mut out, Partition::ThetaC, "theta_c.projection", &self.theta_c.projection);
        push_group(&mut out, Partition::PhiL, "phi_l", &self.phi_l);
        push_group(&mut out, Partition::PhiD, "phi_d", &self.phi_d);
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named().into_iter().map(|(_, _, t)| t).collect()
    }

    pub fn partitions(&self) -> Vec<Partition> {
        self.named().into_iter().map(|(_, p, _)| p).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.theta_s.tensors_mut();
        out.extend(self.theta_t.tensors_mut());
        out.extend(self.theta_c.lstm.tensors_mut());
        out.extend(self.theta_c.temporal.tensors_mut());
        out.extend(self.theta_c.dynamic.tensors_mut());
        out.extend(self.theta_c.projection.tensors_mut());
        out.extend(self.phi_l.tensors_mut());
        out.extend(self.phi_d.tensors_mut());
        out
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Registers every tensor as a leaf; the returned list is in canonical order.
    pub fn bind(&self, tape: &mut Tape) -> (CmtnVars, Vec<Var>) {
        let leaves: Vec<Var> = self.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect();
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &leaves[at..at + n];
            at += n;
            s.to_vec()
        };
        let vars = CmtnVars {
            theta_s: ExtractorParams::vars_from(&take(2)),
            theta_t: ExtractorParams::vars_from(&take(2)),
            lstm: LstmParams::vars_from(&take(8)),
            temporal: TemporalAttnParams::vars_from(&take(2)),
            dynamic: DynamicAttnParams::vars_from(&take(4)),
            projection: ExtractorParams::vars_from(&take(2)),
            phi_l: HeadParams::vars_from(&take(4)),
            phi_d: HeadParams::vars_from(&take(4)),
        };
        (vars, leaves)
    }
}

fn push_group<'a, G: ParamGroup>(
    out: &mut Vec<(String, Partition, &'a Tensor)>,
    part: Partition,
    prefix: &str,
    group: &'a G,
) {
    for (name, t) in group.names().into_iter().zip(group.tensors()) {
        out.push((format!("{prefix}.{name}"), part, t));
    }
}
