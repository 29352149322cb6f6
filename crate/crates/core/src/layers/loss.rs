use crate::data::Task;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Labels for a batch of predictions.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Regression(&'a [f64]),
    Classification(&'a [usize]),
}

impl Targets<'_> {
    pub fn task(&self) -> Task {
        match self {
            Targets::Regression(_) => Task::Regression,
            Targets::Classification(_) => Task::Classification,
        }
    }

    fn len(&self) -> usize {
        match self {
            Targets::Regression(y) => y.len(),
            Targets::Classification(y) => y.len(),
        }
    }
}

fn mean_cross_entropy(tape: &mut Tape, logits: Var, classes: &[usize]) -> Result<Var> {
    let shape = tape.shape(logits).to_vec();
    if shape.len() != 2 || shape[0] != classes.len() {
        return Err(Error::Dimension {
            op: "cross_entropy",
            left: shape,
            right: vec![classes.len()],
        });
    }
    let width = shape[1];
    if let Some(&bad) = classes.iter().find(|&&c| c >= width) {
        return Err(Error::Argument(format!("class {bad} out of range for {width} logits")));
    }
    let logp = tape.log_softmax(logits);
    let picks: Vec<usize> = classes.iter().enumerate().map(|(i, &c)| i * width + c).collect();
    let picked = tape.gather(logp, &picks)?;
    let mean = tape.mean(picked, None)?;
    Ok(tape.scale(mean, -1.0))
}

/// Mean squared error for regression (`B x 1` predictions), mean
/// cross-entropy over softmax for classification (`B x C` logits).
pub fn label_loss(tape: &mut Tape, pred: Var, targets: Targets<'_>) -> Result<Var> {
    let n = tape.shape(pred)[0];
    if n != targets.len() || targets.len() == 0 {
        return Err(Error::Dimension {
            op: "label_loss",
            left: tape.shape(pred).to_vec(),
            right: vec![targets.len()],
        });
    }
    match targets {
        Targets::Regression(y) => {
            let pred_len = tape.value(pred).len();
            if pred_len != y.len() {
                return Err(Error::Dimension {
                    op: "label_loss",
                    left: tape.shape(pred).to_vec(),
                    right: vec![y.len()],
                });
            }
            let target = tape.constant(Tensor::new(tape.shape(pred).to_vec(), y.to_vec())?);
            let diff = tape.sub(pred, target)?;
            let sq = tape.mul(diff, diff)?;
            tape.mean(sq, None)
        }
        Targets::Classification(c) => mean_cross_entropy(tape, pred, c),
    }
}

/// Mean cross-entropy of two-way domain logits against `D` in {0, 1}.
pub fn domain_loss(tape: &mut Tape, logits: Var, domains: &[usize]) -> Result<Var> {
    if let Some(&bad) = domains.iter().find(|&&d| d > 1) {
        return Err(Error::Argument(format!("domain label {bad} is not 0 or 1")));
    }
    if tape.shape(logits).get(1) != Some(&2) {
        return Err(Error::Dimension {
            op: "domain_loss",
            left: tape.shape(logits).to_vec(),
            right: vec![domains.len(), 2],
        });
    }
    mean_cross_entropy(tape, logits, domains)
}
