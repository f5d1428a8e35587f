//! One-hidden-layer ReLU perceptron: the logit oracle queried by inference.
//!
//! Parameters live in one flat buffer laid out as `W1 (h x d)`, `b1 (h)`,
//! `W2 (c x h)`, `b2 (c)`, all row-major. The same order is used by the
//! optimizer, the pruning ranking, and the model file.

mod io;
mod prune;
mod train;

pub use io::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use prune::{prune, ModelDiff};
pub use train::{
    fine_tune, loss_and_gradient, train, Adam, EpochRecord, FineTuneOutcome, ModelSelection,
    TrainConfig, TrainOutcome,
};

use rand::Rng;

use crate::error::{Error, Result};
use crate::seeded_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input: usize,
    hidden: usize,
    classes: usize,
    params: Vec<f64>,
}

impl MlpModel {
    /// All-zero parameters.
    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        let len = param_count(input, hidden, classes);
        Self {
            input,
            hidden,
            classes,
            params: vec![0.0; len],
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(input: usize, hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        if input == 0 || hidden == 0 || classes == 0 {
            return Err(Error::invalid(format!(
                "layer sizes must be positive, got d={input} h={hidden} c={classes}"
            )));
        }
        let mut model = Self::zeros(input, hidden, classes);
        let mut rng = seeded_rng(seed);
        let limit1 = (6.0 / (input + hidden) as f64).sqrt();
        for w in model.w1_mut() {
            *w = rng.random_range(-limit1..limit1);
        }
        let limit2 = (6.0 / (hidden + classes) as f64).sqrt();
        for w in model.w2_mut() {
            *w = rng.random_range(-limit2..limit2);
        }
        Ok(model)
    }

    /// Builds a model from explicit row-major parameter blocks.
    pub fn from_parts(
        input: usize,
        hidden: usize,
        classes: usize,
        w1: &[f64],
        b1: &[f64],
        w2: &[f64],
        b2: &[f64],
    ) -> Result<Self> {
        let expect = [
            (hidden * input, w1.len(), "W1"),
            (hidden, b1.len(), "b1"),
            (classes * hidden, w2.len(), "W2"),
            (classes, b2.len(), "b2"),
        ];
        for (want, got, name) in expect {
            if want != got {
                return Err(Error::invalid(format!(
                    "{name} has {got} entries, expected {want}"
                )));
            }
        }
        let params: Vec<f64> = [w1, b1, w2, b2].concat();
        Self::from_flat(input, hidden, classes, params)
    }

    pub(crate) fn from_flat(
        input: usize,
        hidden: usize,
        classes: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        if params.len() != param_count(input, hidden, classes) {
            return Err(Error::invalid(
                "parameter buffer does not match layer sizes",
            ));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("parameter {i} is not finite")));
        }
        Ok(Self {
            input,
            hidden,
            classes,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Every parameter in file order.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        [w1, b1, w2, b2]
    }

    pub fn w1(&self) -> &[f64] {
        let [w1, b1, ..] = self.offsets();
        &self.params[w1..b1]
    }

    pub fn b1(&self) -> &[f64] {
        let [_, b1, w2, _] = self.offsets();
        &self.params[b1..w2]
    }

    pub fn w2(&self) -> &[f64] {
        let [_, _, w2, b2] = self.offsets();
        &self.params[w2..b2]
    }

    pub fn b2(&self) -> &[f64] {
        let [.., b2] = self.offsets();
        &self.params[b2..]
    }

    fn w1_mut(&mut self) -> &mut [f64] {
        let [w1, b1, ..] = self.offsets();
        &mut self.params[w1..b1]
    }

    fn w2_mut(&mut self) -> &mut [f64] {
        let [_, _, w2, b2] = self.offsets();
        &mut self.params[w2..b2]
    }

    /// Number of connection weights (biases excluded).
    pub fn weight_count(&self) -> usize {
        self.hidden * (self.input + self.classes)
    }

    /// Number of connection weights that are exactly zero.
    pub fn zero_weight_count(&self) -> usize {
        self.w1()
            .iter()
            .chain(self.w2())
            .filter(|&&w| w == 0.0)
            .count()
    }

    /// Positions in [`MlpModel::params`] that hold connection weights.
    pub(crate) fn weight_positions(&self) -> impl Iterator<Item = usize> {
        let [w1, b1, w2, b2] = self.offsets();
        (w1..b1).chain(w2..b2)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input {
            return Err(Error::Dimension {
                expected: self.input,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Hidden pre-activations `W1 x + b1`, written into `out`.
    pub(crate) fn hidden_pre(&self, x: &[f64], out: &mut [f64]) {
        let w1 = self.w1();
        for ((o, row), b) in out
            .iter_mut()
            .zip(w1.chunks_exact(self.input))
            .zip(self.b1())
        {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Output logits from hidden activations.
    pub(crate) fn output_from_hidden(&self, act: &[f64], out: &mut [f64]) {
        let w2 = self.w2();
        for ((o, row), b) in out
            .iter_mut()
            .zip(w2.chunks_exact(self.hidden))
            .zip(self.b2())
        {
            *o = b + row.iter().zip(act).map(|(w, a)| w * a).sum::<f64>();
        }
    }

    /// `W2 relu(W1 x + b1) + b2`, without softmax.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut hidden = vec![0.0; self.hidden];
        self.hidden_pre(x, &mut hidden);
        for h in &mut hidden {
            *h = h.max(0.0);
        }
        let mut out = vec![0.0; self.classes];
        self.output_from_hidden(&hidden, &mut out);
        Ok(out)
    }

    /// Argmax of the logits, ties toward the smallest class.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Fraction of `samples` classified correctly; zero for an empty slice.
    pub fn accuracy<'a, I>(&self, samples: I) -> Result<f64>
    where
        I: IntoIterator<Item = &'a crate::dataset::LabeledSample>,
    {
        let mut total = 0usize;
        let mut correct = 0usize;
        for s in samples {
            total += 1;
            if self.predict(&s.features)? == s.label {
                correct += 1;
            }
        }
        Ok(if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        })
    }
}

fn param_count(input: usize, hidden: usize, classes: usize) -> usize {
    hidden * input + hidden + classes * hidden + classes
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}
