use rand::Rng as _;

use super::{init, ParamGroup};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tensor::{Tape, Tensor, Var};

/// One tanh hidden layer followed by an affine output.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `in x hidden`
    pub w_hidden: Tensor,
    /// `1 x hidden`
    pub b_hidden: Tensor,
    /// `hidden x out`
    pub w_out: Tensor,
    /// `1 x out`
    pub b_out: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub w_hidden: Var,
    pub b_hidden: Var,
    pub w_out: Var,
    pub b_out: Var,
}

impl HeadParams {
    pub fn init(input: usize, hidden: usize, out: usize, rng: &mut Rng) -> Self {
        HeadParams {
            w_hidden: init::glorot(input, hidden, rng),
            b_hidden: Tensor::zeros(&[1, hidden]),
            w_out: init::glorot(hidden, out, rng),
            b_out: Tensor::zeros(&[1, out]),
        }
    }

    pub fn zeros(input: usize, hidden: usize, out: usize) -> Self {
        HeadParams {
            w_hidden: Tensor::zeros(&[input, hidden]),
            b_hidden: Tensor::zeros(&[1, hidden]),
            w_out: Tensor::zeros(&[hidden, out]),
            b_out: Tensor::zeros(&[1, out]),
        }
    }

    pub fn input(&self) -> usize {
        self.w_hidden.rows()
    }
}

impl ParamGroup for HeadParams {
    type Vars = HeadVars;

    fn names(&self) -> Vec<&'static str> {
        vec!["w_hidden", "b_hidden", "w_out", "b_out"]
    }

    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w_hidden, &self.b_hidden, &self.w_out, &self.b_out]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_hidden, &mut self.b_hidden, &mut self.w_out, &mut self.b_out]
    }

    fn vars_from(v: &[Var]) -> HeadVars {
        HeadVars {
            w_hidden: v[0],
            b_hidden: v[1],
            w_out: v[2],
            b_out: v[3],
        }
    }
}

/// Inverted dropout on the hidden activations, active only in training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f64,
    pub training: bool,
    pub seed: u64,
}

impl Dropout {
    pub fn off() -> Self {
        Dropout {
            rate: 0.0,
            training: false,
            seed: 0,
        }
    }

    pub fn validate(rate: f64) -> Result<()> {
        if (0.0..1.0).contains(&rate) {
            Ok(())
        } else {
            Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")))
        }
    }

    /// Scaled keep-mask; `None` when dropout is the identity.
    pub fn mask(&self, width: usize) -> Result<Option<Tensor>> {
        Dropout::validate(self.rate)?;
        if !self.training || self.rate == 0.0 {
            return Ok(None);
        }
        let mut r = rng::stream(self.seed, "dropout", &[]);
        let keep = 1.0 / (1.0 - self.rate);
        let data = (0..width)
            .map(|_| if r.random::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        Ok(Some(Tensor::from_parts(vec![1, width], data)))
    }
}

/// `tanh(c W_h + b_h)`, optional dropout, then `· W_o + b_o`.
pub fn head_forward(tape: &mut Tape, c: Var, p: HeadVars, dropout: Dropout) -> Result<Var> {
    let (cs, ws) = (tape.shape(c), tape.shape(p.w_hidden));
    if cs.len() != 2 || cs[1] != ws[0] {
        return Err(Error::Dimension {
            op: "head_forward",
            left: cs.to_vec(),
            right: ws.to_vec(),
        });
    }
    let rows = cs[0];
    let lin = tape.matmul(c, p.w_hidden)?;
    let bias = super::tile_rows(tape, p.b_hidden, rows)?;
    let pre = tape.add(lin, bias)?;
    let mut hidden = tape.tanh(pre);
    let width = tape.shape(hidden)[1];
    if let Some(mask) = dropout.mask(rows * width)? {
        let mask = tape.constant(mask.reshaped(&[rows, width])?);
        hidden = tape.mul(hidden, mask)?;
    }
    let out = tape.matmul(hidden, p.w_out)?;
    let bias = super::tile_rows(tape, p.b_out, rows)?;
    tape.add(out, bias)
}
