//! Building blocks of the network. Vectors flowing between layers are
//! `1 x n` row tensors; a window of readings is an `N x M` matrix.

mod attention;
mod extractor;
mod head;
pub mod init;
mod loss;
mod lstm;

pub use attention::{
    dynamic_attention, temporal_attention, DynamicAttnParams, DynamicAttnVars, DynamicAttention,
    TemporalAttnParams, TemporalAttnVars, TemporalAttention,
};
pub use extractor::{feature_extract, ExtractorParams, ExtractorVars};
pub use head::{head_forward, Dropout, HeadParams, HeadVars};
pub use loss::{domain_loss, label_loss, Targets};
pub use lstm::{lstm_step, LstmParams, LstmVars};

use crate::tensor::{Tape, Tensor, Var};

/// A fixed list of named tensors that can be bound onto a tape as leaves.
pub trait ParamGroup {
    type Vars: Copy;

    fn names(&self) -> Vec<&'static str>;
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;
    /// Rebuilds the handle struct from leaves in `tensors()` order.
    fn vars_from(vars: &[Var]) -> Self::Vars;

    fn bind(&self, tape: &mut Tape) -> Self::Vars {
        let vars: Vec<Var> = self.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect();
        Self::vars_from(&vars)
    }
}

/// `ones(rows x 1) * row`: stacks a `1 x n` row `rows` times.
pub(crate) fn tile_rows(tape: &mut Tape, row: Var, rows: usize) -> crate::Result<Var> {
    if rows == 1 {
        return Ok(row);
    }
    let ones = tape.constant(Tensor::ones(&[rows, 1]));
    tape.matmul(ones, row)
}
