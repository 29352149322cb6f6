//! Sensor-level (dynamic) and time-level (temporal) attention.

use super::{init, tile_rows, ParamGroup};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor, Var};

/// Scores each feature of `f_t` against the previous hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicAttnParams {
    /// `(H + K) x A`, applied to `[h_{t-1} ; f_t]`.
    pub w: Tensor,
    /// `1 x A`, scaled by the scalar feature `f_{t,k}`.
    pub u: Tensor,
    /// `1 x A`
    pub b: Tensor,
    /// `A x 1`
    pub v: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct DynamicAttnVars {
    pub w: Var,
    pub u: Var,
    pub b: Var,
    pub v: Var,
}

impl DynamicAttnParams {
    pub fn init(hidden: usize, features: usize, width: usize, rng: &mut Rng) -> Self {
        DynamicAttnParams {
            w: init::glorot(hidden + features, width, rng),
            u: init::glorot(1, width, rng),
            b: Tensor::zeros(&[1, width]),
            v: init::glorot(width, 1, rng),
        }
    }

    pub fn zeros(hidden: usize, features: usize, width: usize) -> Self {
        DynamicAttnParams {
            w: Tensor::zeros(&[hidden + features, width]),
            u: Tensor::zeros(&[1, width]),
            b: Tensor::zeros(&[1, width]),
            v: Tensor::zeros(&[width, 1]),
        }
    }
}

impl ParamGroup for DynamicAttnParams {
    type Vars = DynamicAttnVars;

    fn names(&self) -> Vec<&'static str> {
        vec!["w", "u", "b", "v"]
    }

    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w, &self.u, &self.b, &self.v]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.u, &mut self.b, &mut self.v]
    }

    fn vars_from(v: &[Var]) -> DynamicAttnVars {
        DynamicAttnVars {
            w: v[0],
            u: v[1],
            b: v[2],
            v: v[3],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DynamicAttention {
    /// `1 x K`, sums to one.
    pub alpha: Var,
    /// `alpha ⊙ f_t`
    pub weighted: Var,
}

/// `e_k = v^T tanh([h_prev ; f] W + u f_k + b)`, `alpha = softmax(e)`,
/// and the features reweighted elementwise by `alpha`.
pub fn dynamic_attention(
    tape: &mut Tape,
    h_prev: Var,
    f: Var,
    p: DynamicAttnVars,
) -> Result<DynamicAttention> {
    let (hs, fs, ws) = (tape.shape(h_prev), tape.shape(f), tape.shape(p.w));
    let ok = hs.len() == 2 && fs.len() == 2 && hs[0] == 1 && fs[0] == 1 && hs[1] + fs[1] == ws[0];
    if !ok {
        return Err(Error::Dimension {
            op: "dynamic_attention",
            left: [hs, fs].concat(),
            right: ws.to_vec(),
        });
    }
    let k = fs[1];
    let z = tape.concat(&[h_prev, f], 1)?;
    let shared = tape.matmul(z, p.w)?;
    let shared = tape.add(shared, p.b)?;
    let shared = tile_rows(tape, shared, k)?;
    let f_col = tape.reshape(f, &[k, 1])?;
    let per_feature = tape.matmul(f_col, p.u)?;
    let pre = tape.add(shared, per_feature)?;
    let act = tape.tanh(pre);
    let scores = tape.matmul(act, p.v)?;
    let scores = tape.reshape(scores, &[1, k])?;
    let alpha = tape.softmax(scores);
    let weighted = tape.mul(alpha, f)?;
    Ok(DynamicAttention { alpha, weighted })
}

/// Bilinear score of every earlier hidden state against the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalAttnParams {
    /// `H x H`
    pub w: Tensor,
    /// `1 x 1`
    pub b: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct TemporalAttnVars {
    pub w: Var,
    pub b: Var,
}

impl TemporalAttnParams {
    pub fn init(hidden: usize, rng: &mut Rng) -> Self {
        TemporalAttnParams {
            w: init::glorot(hidden, hidden, rng),
            b: Tensor::zeros(&[1, 1]),
        }
    }

    pub fn zeros(hidden: usize) -> Self {
        TemporalAttnParams {
            w: Tensor::zeros(&[hidden, hidden]),
            b: Tensor::zeros(&[1, 1]),
        }
    }
}

impl ParamGroup for TemporalAttnParams {
    type Vars = TemporalAttnVars;

    fn names(&self) -> Vec<&'static str> {
        vec!["w", "b"]
    }

    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w, &self.b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.b]
    }

    fn vars_from(v: &[Var]) -> TemporalAttnVars {
        TemporalAttnVars { w: v[0], b: v[1] }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TemporalAttention {
    /// `1 x 2H`: attended context followed by `h_N`.
    pub context: Var,
    /// `1 x (N - 1)`
    pub gamma: Var,
}

/// Attends over `h_1..h_{N-1}` (rows of `h`) with `h_N` as the query.
pub fn temporal_attention(tape: &mut Tape, h: Var, p: TemporalAttnVars) -> Result<TemporalAttention> {
    let (hs, ws) = (tape.shape(h).to_vec(), tape.shape(p.w).to_vec());
    if hs.len() != 2 || ws != [hs[1], hs[1]] {
        return Err(Error::Dimension {
            op: "temporal_attention",
            left: hs,
            right: ws,
        });
    }
    let n = hs[0];
    if n < 2 {
        return Err(Error::Argument(format!(
            "temporal attention needs at least 2 hidden states, got {n}"
        )));
    }
    let earlier = tape.slice_rows(h, 0, n - 1)?;
    let last = tape.slice_rows(h, n - 1, n)?;
    let query = tape.matmul(last, p.w)?;
    let query = tape.transpose(query)?;
    let scores = tape.matmul(earlier, query)?;
    let bias = tile_rows(tape, p.b, n - 1)?;
    let scores = tape.add(scores, bias)?;
    let scores = tape.tanh(scores);
    let scores = tape.reshape(scores, &[1, n - 1])?;
    let gamma = tape.softmax(scores);
    let attended = tape.matmul(gamma, earlier)?;
    let context = tape.concat(&[attended, last], 1)?;
    Ok(TemporalAttention { context, gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tensor::finite_difference_check;
    use rand::Rng as _;

    fn rand_t(shape: &[usize], r: &mut Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn single_feature_gets_all_the_weight() {
        let mut r = rng::stream(1, "dyn", &[]);
        let mut tape = Tape::new();
        let p = DynamicAttnParams::init(3, 1, 4, &mut r).bind(&mut tape);
        let h = tape.constant(rand_t(&[1, 3], &mut r));
        let f = tape.constant(Tensor::new(vec![1, 1], vec![0.7]).unwrap());
        let out = dynamic_attention(&mut tape, h, f, p).unwrap();
        assert_eq!(tape.value(out.alpha).data(), &[1.0]);
        assert_eq!(tape.value(out.weighted).data(), &[0.7]);
    }

    #[test]
    fn zero_scoring_vector_is_uniform() {
        let mut r = rng::stream(2, "dyn", &[]);
        let mut params = DynamicAttnParams::init(3, 4, 5, &mut r);
        params.v = Tensor::zeros(&[5, 1]);
        let mut tape = Tape::new();
        let p = params.bind(&mut tape);
        let h = tape.constant(rand_t(&[1, 3], &mut r));
        let fv = rand_t(&[1, 4], &mut r);
        let f = tape.constant(fv.clone());
        let out = dynamic_attention(&mut tape, h, f, p).unwrap();
        assert!(tape.value(out.alpha).data().iter().all(|&a| a == 0.25));
        assert_eq!(tape.value(out.weighted), &fv.map(|v| v * 0.25));
    }

    #[test]
    fn dynamic_attention_weights_and_gradient() {
        let mut r = rng::stream(3, "dyn", &[]);
        let params = DynamicAttnParams::init(4, 5, 6, &mut r);
        let (h, f) = (rand_t(&[1, 4], &mut r), rand_t(&[1, 5], &mut r));
        let mut tape = Tape::new();
        let p = params.bind(&mut tape);
        let (hv, fv) = (tape.constant(h.clone()), tape.constant(f.clone()));
        let out = dynamic_attention(&mut tape, hv, fv, p).unwrap();
        let alpha = tape.value(out.alpha).data();
        assert!(alpha.iter().all(|&a| a > 0.0));
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let mut all: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
        all.extend([h, f]);
        let w = rand_t(&[1, 5], &mut r);
        let err = finite_difference_check(
            |t, v| {
                let out = dynamic_attention(t, v[4], v[5], DynamicAttnParams::vars_from(&v[..4]))?;
                let w = t.constant(w.clone());
                let y = t.mul(out.weighted, w)?;
                t.sum(y, None)
            },
            &all,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn dynamic_attention_rejects_bad_shapes() {
        let mut tape = Tape::new();
        let p = DynamicAttnParams::zeros(3, 4, 2).bind(&mut tape);
        let h = tape.constant(Tensor::zeros(&[1, 3]));
        let f = tape.constant(Tensor::zeros(&[1, 5]));
        assert!(matches!(dynamic_attention(&mut tape, h, f, p), Err(Error::Dimension { .. })));
    }

    #[test]
    fn two_steps_attend_to_the_first() {
        let mut r = rng::stream(4, "tmp", &[]);
        let mut tape = Tape::new();
        let p = TemporalAttnParams::init(3, &mut r).bind(&mut tape);
        let hv = rand_t(&[2, 3], &mut r);
        let h = tape.constant(hv.clone());
        let out = temporal_attention(&mut tape, h, p).unwrap();
        assert_eq!(tape.value(out.gamma).data(), &[1.0]);
        assert_eq!(tape.value(out.context).data(), hv.data());
    }

    #[test]
    fn zero_bilinear_is_uniform() {
        let mut r = rng::stream(5, "tmp", &[]);
        let mut tape = Tape::new();
        let p = TemporalAttnParams::zeros(3).bind(&mut tape);
        let h = tape.constant(rand_t(&[5, 3], &mut r));
        let out = temporal_attention(&mut tape, h, p).unwrap();
        assert!(tape.value(out.gamma).data().iter().all(|&g| g == 0.25));
    }

    #[test]
    fn single_step_is_rejected() {
        let mut tape = Tape::new();
        let p = TemporalAttnParams::zeros(3).bind(&mut tape);
        let h = tape.constant(Tensor::zeros(&[1, 3]));
        assert!(matches!(temporal_attention(&mut tape, h, p), Err(Error::Argument(_))));
    }

    #[test]
    fn temporal_attention_weights_and_gradient() {
        let mut r = rng::stream(6, "tmp", &[]);
        let mut params = TemporalAttnParams::init(4, &mut r);
        params.b = Tensor::new(vec![1, 1], vec![0.3]).unwrap();
        let h = rand_t(&[6, 4], &mut r);
        let mut tape = Tape::new();
        let p = params.bind(&mut tape);
        let hv = tape.constant(h.clone());
        let out = temporal_attention(&mut tape, hv, p).unwrap();
        let gamma = tape.value(out.gamma).data();
        assert_eq!(gamma.len(), 5);
        assert!((gamma.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(tape.shape(out.context), &[1, 8]);

        let w = rand_t(&[1, 8], &mut r);
        let err = finite_difference_check(
            |t, v| {
                let out = temporal_attention(t, v[2], TemporalAttnParams::vars_from(&v[..2]))?;
                let w = t.constant(w.clone());
                let y = t.mul(out.context, w)?;
                let y = t.tanh(y);
                t.sum(y, None)
            },
            &[params.w.clone(), params.b.clone(), h],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }
}
