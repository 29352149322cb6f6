use super::{init, ParamGroup};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor, Var};

/// Single-layer LSTM cell. Each gate reads `[x_t ; h_{t-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `(K + H) x H` each.
    pub w_input: Tensor,
    pub w_forget: Tensor,
    pub w_cell: Tensor,
    pub w_output: Tensor,
    /// `1 x H` each.
    pub b_input: Tensor,
    pub b_forget: Tensor,
    pub b_cell: Tensor,
    pub b_output: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w: [Var; 4],
    pub b: [Var; 4],
}

impl LstmParams {
    /// Glorot weights, zero biases except the forget gate at 1.
    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let rows = input + hidden;
        LstmParams {
            w_input: init::glorot(rows, hidden, rng),
            w_forget: init::glorot(rows, hidden, rng),
            w_cell: init::glorot(rows, hidden, rng),
            w_output: init::glorot(rows, hidden, rng),
            b_input: Tensor::zeros(&[1, hidden]),
            b_forget: Tensor::ones(&[1, hidden]),
            b_cell: Tensor::zeros(&[1, hidden]),
            b_output: Tensor::zeros(&[1, hidden]),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = Tensor::zeros(&[input + hidden, hidden]);
        let b = Tensor::zeros(&[1, hidden]);
        LstmParams {
            w_input: w.clone(),
            w_forget: w.clone(),
            w_cell: w.clone(),
            w_output: w,
            b_input: b.clone(),
            b_forget: b.clone(),
            b_cell: b.clone(),
            b_output: b,
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_input.cols()
    }

    pub fn input(&self) -> usize {
        self.w_input.rows() - self.hidden()
    }
}

impl ParamGroup for LstmParams {
    type Vars = LstmVars;

    fn names(&self) -> Vec<&'static str> {
        vec![
            "w_input", "w_forget", "w_cell", "w_output", "b_input", "b_forget", "b_cell",
            "b_output",
        ]
    }

    fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.w_input,
            &self.w_forget,
            &self.w_cell,
            &self.w_output,
            &self.b_input,
            &self.b_forget,
            &self.b_cell,
            &self.b_output,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_input,
            &mut self.w_forget,
            &mut self.w_cell,
            &mut self.w_output,
            &mut self.b_input,
            &mut self.b_forget,
            &mut self.b_cell,
            &mut self.b_output,
        ]
    }

    fn vars_from(v: &[Var]) -> LstmVars {
        LstmVars {
            w: [v[0], v[1], v[2], v[3]],
            b: [v[4], v[5], v[6], v[7]],
        }
    }
}

/// One recurrence step; returns `(h_t, c_t)`.
pub fn lstm_step(tape: &mut Tape, x: Var, h_prev: Var, c_prev: Var, p: LstmVars) -> Result<(Var, Var)> {
    let hidden = tape.shape(p.b[0])[1];
    let rows = tape.shape(p.w[0])[0];
    let (xs, hs, cs) = (tape.shape(x), tape.shape(h_prev), tape.shape(c_prev));
    if xs.len() != 2 || xs[0] != 1 || xs[1] + hidden != rows || hs != [1, hidden] || cs != [1, hidden] {
        return Err(Error::Dimension {
            op: "lstm_step",
            left: [tape.shape(x), tape.shape(h_prev)].concat(),
            right: tape.shape(p.w[0]).to_vec(),
        });
    }
    let z = tape.concat(&[x, h_prev], 1)?;
    let mut pre = [z; 4];
    for (g, slot) in pre.iter_mut().enumerate() {
        let lin = tape.matmul(z, p.w[g])?;
        *slot = tape.add(lin, p.b[g])?;
    }
    let i = tape.sigmoid(pre[0]);
    let f = tape.sigmoid(pre[1]);
    let g = tape.tanh(pre[2]);
    let o = tape.sigmoid(pre[3]);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tensor::finite_difference_check;
    use rand::Rng as _;

    fn row(n: usize, r: &mut Rng) -> Tensor {
        Tensor::new(vec![1, n], (0..n).map(|_| r.random_range(-1.5..1.5)).collect()).unwrap()
    }

    /// Plain-loop LSTM cell, written without the tape.
    fn reference_step(x: &[f64], h: &[f64], c: &[f64], p: &LstmParams) -> (Vec<f64>, Vec<f64>) {
        let hidden = h.len();
        let z: Vec<f64> = x.iter().chain(h).copied().collect();
        let gate = |w: &Tensor, b: &Tensor, j: usize| {
            let mut acc = b.data()[j];
            for (r, zr) in z.iter().enumerate() {
                acc += zr * w.data()[r * hidden + j];
            }
            acc
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h_out = vec![0.0; hidden];
        let mut c_out = vec![0.0; hidden];
        for j in 0..hidden {
            let i = sig(gate(&p.w_input, &p.b_input, j));
            let f = sig(gate(&p.w_forget, &p.b_forget, j));
            let g = gate(&p.w_cell, &p.b_cell, j).tanh();
            let o = sig(gate(&p.w_output, &p.b_output, j));
            c_out[j] = f * c[j] + i * g;
            h_out[j] = o * c_out[j].tanh();
        }
        (h_out, c_out)
    }

    #[test]
    fn zero_everything_gives_zero_state() {
        let mut tape = Tape::new();
        let p = LstmParams::zeros(3, 4).bind(&mut tape);
        let x = tape.constant(Tensor::zeros(&[1, 3]));
        let h = tape.constant(Tensor::zeros(&[1, 4]));
        let (h1, c1) = lstm_step(&mut tape, x, h, h, p).unwrap();
        assert_eq!(tape.value(h1), &Tensor::zeros(&[1, 4]));
        assert_eq!(tape.value(c1), &Tensor::zeros(&[1, 4]));
    }

    #[test]
    fn zero_weights_halve_the_cell() {
        let mut tape = Tape::new();
        let p = LstmParams::zeros(3, 2).bind(&mut tape);
        let x = tape.constant(Tensor::new(vec![1, 3], vec![0.3, -2.0, 5.0]).unwrap());
        let h = tape.constant(Tensor::zeros(&[1, 2]));
        let c = tape.constant(Tensor::new(vec![1, 2], vec![4.0, -1.0]).unwrap());
        let (_, c1) = lstm_step(&mut tape, x, h, c, p).unwrap();
        assert_eq!(tape.value(c1).data(), &[2.0, -0.5]);
    }

    #[test]
    fn matches_reference_on_random_trials() {
        let mut r = rng::stream(11, "lstm-ref", &[]);
        for trial in 0..100 {
            let (k, hdim) = (1 + trial % 5, 1 + (trial * 3) % 7);
            let mut p = LstmParams::init(k, hdim, &mut r);
            for b in [&mut p.b_input, &mut p.b_cell, &mut p.b_output] {
                *b = row(hdim, &mut r);
            }
            let (x, h, c) = (row(k, &mut r), row(hdim, &mut r), row(hdim, &mut r));
            let mut tape = Tape::new();
            let vars = p.bind(&mut tape);
            let (xv, hv, cv) = (tape.constant(x.clone()), tape.constant(h.clone()), tape.constant(c.clone()));
            let (h1, c1) = lstm_step(&mut tape, xv, hv, cv, vars).unwrap();
            let (rh, rc) = reference_step(x.data(), h.data(), c.data(), &p);
            for (a, b) in tape.value(h1).data().iter().zip(&rh).chain(tape.value(c1).data().iter().zip(&rc)) {
                assert!((a - b).abs() < 1e-12, "trial {trial}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut tape = Tape::new();
        let p = LstmParams::zeros(3, 2).bind(&mut tape);
        let x = tape.constant(Tensor::zeros(&[1, 4]));
        let h = tape.constant(Tensor::zeros(&[1, 2]));
        assert!(matches!(lstm_step(&mut tape, x, h, h, p), Err(Error::Dimension { .. })));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng::stream(12, "lstm-fd", &[]);
        let p = LstmParams::init(3, 4, &mut r);
        let (x, h, c) = (row(3, &mut r), row(4, &mut r), row(4, &mut r));
        let mut params: Vec<Tensor> = p.tensors().into_iter().cloned().collect();
        params.extend([x, h, c]);
        let err = finite_difference_check(
            |t, v| {
                let vars = LstmParams::vars_from(&v[..8]);
                let (h1, c1) = lstm_step(t, v[8], v[9], v[10], vars)?;
                let (h2, _) = lstm_step(t, v[8], h1, c1, vars)?;
                let s = t.mul(h2, h2)?;
                t.sum(s, None)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }
}
