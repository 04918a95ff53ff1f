use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DatasetShard, FlError};
use crate::Scalar;

/// Layer sizes: input, hidden layers (tanh), output (softmax).
/// No hidden layers gives multinomial logistic regression.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl Shape {
    pub fn new(input: usize, hidden: Vec<usize>, output: usize) -> Result<Self, FlError> {
        if input == 0 || output < 2 || hidden.contains(&0) {
            return Err(FlError::Shape(format!(
                "invalid layer sizes {input} {hidden:?} {output}"
            )));
        }
        Ok(Self { input, hidden, output })
    }

    pub fn logistic(input: usize, output: usize) -> Result<Self, FlError> {
        Self::new(input, Vec::new(), output)
    }

    /// All layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(self.input);
        d.extend(&self.hidden);
        d.push(self.output);
        d
    }

    pub fn from_dims(dims: &[usize]) -> Result<Self, FlError> {
        match dims {
            [input, hidden @ .., output] if dims.len() >= 2 => Self::new(*input, hidden.to_vec(), *output),
            _ => Err(FlError::Shape(format!("need at least two layer sizes, got {dims:?}"))),
        }
    }

    pub fn param_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(weights_offset, bias_offset, fan_in, fan_out)` per layer. Weights are
    /// stored row-major as `fan_out x fan_in`, followed by the biases.
    pub(crate) fn layers(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut off = 0;
        self.dims()
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let layer = (off, off + i * o, i, o);
                off += i * o + o;
                layer
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights<T> {
    pub values: Vec<T>,
    pub shape: Shape,
}

impl<T: Scalar> ModelWeights<T> {
    pub fn new(values: Vec<T>, shape: Shape) -> Result<Self, FlError> {
        if values.len() != shape.param_count() {
            return Err(FlError::Shape(format!(
                "{} values for a shape with {} parameters",
                values.len(),
                shape.param_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FlError::NonFinite);
        }
        Ok(Self { values, shape })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            values: vec![T::zero(); shape.param_count()],
            shape,
        }
    }

    pub fn param_count(&self) -> usize {
        self.values.len()
    }

    pub fn cast<U: Scalar>(&self) -> ModelWeights<U> {
        ModelWeights {
            values: self.values.iter().map(|v| U::of_f64(v.as_f64())).collect(),
            shape: self.shape.clone(),
        }
    }

    /// Output-layer logits for one input row.
    pub fn logits(&self, x: &[T]) -> Vec<T> {
        let mut a = x.to_vec();
        let layers = self.shape.layers();
        for (l, &(w_off, b_off, fan_in, fan_out)) in layers.iter().enumerate() {
            let mut z = self.values[b_off..b_off + fan_out].to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &self.values[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                *zo = *zo + dot(row, &a);
            }
            if l + 1 < layers.len() {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            a = z;
        }
        a
    }

    pub fn predict(&self, x: &[T]) -> usize {
        argmax(&self.logits(x))
    }

    /// Mean cross-entropy over `rows` of `shard`, and optionally its gradient.
    pub fn loss_and_grad(&self, shard: &DatasetShard<T>, rows: &[usize], grad: Option<&mut [T]>) -> T {
        let layers = self.shape.layers();
        let n = T::of_f64(rows.len() as f64);
        let mut total = T::zero();
        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(layers.len() + 1);
        for &r in rows {
            acts.clear();
            acts.push(shard.row(r).to_vec());
            for (l, &(w_off, b_off, fan_in, fan_out)) in layers.iter().enumerate() {
                let prev = &acts[l];
                let mut z = self.values[b_off..b_off + fan_out].to_vec();
                for (o, zo) in z.iter_mut().enumerate() {
                    *zo = *zo + dot(&self.values[w_off + o * fan_in..w_off + (o + 1) * fan_in], prev);
                }
                if l + 1 < layers.len() {
                    z.iter_mut().for_each(|v| *v = v.tanh());
                }
                acts.push(z);
            }
            let label = shard.labels[r];
            let probs = softmax(acts.last().unwrap());
            total = total - probs[label].max(T::min_positive_value()).ln();
            let Some(g) = grad.as_deref_mut() else { continue };

            // delta = dL/dz for the current layer, averaged over rows.
            let mut delta: Vec<T> = probs;
            delta[label] = delta[label] - T::one();
            delta.iter_mut().for_each(|d| *d = *d / n);
            for l in (0..layers.len()).rev() {
                let (w_off, b_off, fan_in, fan_out) = layers[l];
                let prev = &acts[l];
                for o in 0..fan_out {
                    let d = delta[o];
                    g[b_off + o] = g[b_off + o] + d;
                    let gw = &mut g[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                    for (gi, &p) in gw.iter_mut().zip(prev) {
                        *gi = *gi + d * p;
                    }
                }
                if l > 0 {
                    let mut back = vec![T::zero(); fan_in];
                    for (o, &d) in delta.iter().enumerate() {
                        let row = &self.values[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                        for (bi, &wv) in back.iter_mut().zip(row) {
                            *bi = *bi + d * wv;
                        }
                    }
                    // tanh' = 1 - a^2
                    for (bi, &a) in back.iter_mut().zip(prev) {
                        *bi = *bi * (T::one() - a * a);
                    }
                    delta = back;
                }
            }
        }
        total / n
    }
}

/// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
pub fn init_model<T: Scalar>(shape: &Shape, seed: u64) -> ModelWeights<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![T::zero(); shape.param_count()];
    for (w_off, b_off, fan_in, _) in shape.layers() {
        let r = 1.0 / (fan_in as f64).sqrt();
        for v in &mut values[w_off..b_off] {
            *v = T::of_f64(rng.gen_range(-r..r));
        }
    }
    ModelWeights {
        values,
        shape: shape.clone(),
    }
}

/// Fraction of rows whose argmax logit equals the label.
pub fn evaluate<T: Scalar>(w: &ModelWeights<T>, test: &DatasetShard<T>) -> Result<f64, FlError> {
    check_dims(w, test)?;
    if test.is_empty() {
        return Ok(0.0);
    }
    let correct = (0..test.len())
        .filter(|&r| w.predict(test.row(r)) == test.labels[r])
        .count();
    Ok(correct as f64 / test.len() as f64)
}

pub(crate) fn check_dims<T: Scalar>(w: &ModelWeights<T>, shard: &DatasetShard<T>) -> Result<(), FlError> {
    if shard.feature_dim() != w.shape.input {
        return Err(FlError::Shape(format!(
            "model expects {} features, data has {}",
            w.shape.input,
            shard.feature_dim()
        )));
    }
    if shard.class_count() > w.shape.output {
        return Err(FlError::Shape(format!(
            "model has {} outputs, data has {} classes",
            w.shape.output,
            shard.class_count()
        )));
    }
    Ok(())
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let m = z.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let e: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest value; the first one wins ties.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
