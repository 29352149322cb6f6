use super::{init, tile_rows, ParamGroup};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor, Var};

/// Per-domain input transform `f_t = tanh(x_t W + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorParams {
    /// `M x K`
    pub weight: Tensor,
    /// `1 x K`
    pub bias: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct ExtractorVars {
    pub weight: Var,
    pub bias: Var,
}

impl ExtractorParams {
    pub fn init(sensors: usize, features: usize, rng: &mut Rng) -> Self {
        ExtractorParams {
            weight: init::glorot(sensors, features, rng),
            bias: Tensor::zeros(&[1, features]),
        }
    }

    pub fn zeros(sensors: usize, features: usize) -> Self {
        ExtractorParams {
            weight: Tensor::zeros(&[sensors, features]),
            bias: Tensor::zeros(&[1, features]),
        }
    }
}

impl ParamGroup for ExtractorParams {
    type Vars = ExtractorVars;

    fn names(&self) -> Vec<&'static str> {
        vec!["weight", "bias"]
    }

    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn vars_from(v: &[Var]) -> ExtractorVars {
        ExtractorVars {
            weight: v[0],
            bias: v[1],
        }
    }
}

/// Maps an `N x M` window to `N x K` features.
pub fn feature_extract(tape: &mut Tape, x: Var, p: ExtractorVars) -> Result<Var> {
    let (xs, ws) = (tape.shape(x), tape.shape(p.weight));
    if xs.len() != 2 || xs[1] != ws[0] {
        return Err(Error::Dimension {
            op: "feature_extract",
            left: xs.to_vec(),
            right: ws.to_vec(),
        });
    }
    let rows = xs[0];
    let lin = tape.matmul(x, p.weight)?;
    let bias = tile_rows(tape, p.bias, rows)?;
    let pre = tape.add(lin, bias)?;
    Ok(tape.tanh(pre))
}
