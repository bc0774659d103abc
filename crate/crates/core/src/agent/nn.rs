//! Dense networks over a flat parameter buffer with hand-written backprop.

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One affine layer stored at `offset`: weights `out × in` row-major, then bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub offset: usize,
}

impl Linear {
    pub fn param_count(&self) -> usize {
        self.out_dim * (self.in_dim + 1)
    }

    fn weights<'a, T: Scalar>(&self, params: &'a [T]) -> ArrayView2<'a, T> {
        let n = self.out_dim * self.in_dim;
        ArrayView2::from_shape((self.out_dim, self.in_dim), &params[self.offset..self.offset + n])
            .expect("layer shape")
    }

    fn bias<'a, T: Scalar>(&self, params: &'a [T]) -> ArrayView1<'a, T> {
        let start = self.offset + self.out_dim * self.in_dim;
        ArrayView1::from(&params[start..start + self.out_dim])
    }
}

/// Stack of affine layers with ReLU between them (and optionally after the last).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub relu_last: bool,
}

/// Activations kept from a forward pass for backprop.
pub struct MlpTrace<T> {
    /// Input of each layer.
    inputs: Vec<Array2<T>>,
    output: Array2<T>,
}

impl<T> MlpTrace<T> {
    pub fn output(&self) -> &Array2<T> {
        &self.output
    }
}

impl Mlp {
    pub fn new(sizes: &[usize], offset: usize, relu_last: bool) -> Self {
        let mut layers = Vec::with_capacity(sizes.len().saturating_sub(1));
        let mut off = offset;
        for w in sizes.windows(2) {
            let l = Linear {
                in_dim: w[0],
                out_dim: w[1],
                offset: off,
            };
            off += l.param_count();
            layers.push(l);
        }
        Mlp { layers, relu_last }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Linear::param_count).sum()
    }

    pub fn end(&self) -> usize {
        self.layers.last().map_or(0, |l| l.offset + l.param_count())
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    /// Uniform `±1/sqrt(fan_in)` initialisation of this network's slice.
    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, params: &mut [T], rng: &mut R) {
        for l in &self.layers {
            let bound = 1.0 / (l.in_dim as f64).sqrt();
            for p in &mut params[l.offset..l.offset + l.param_count()] {
                *p = T::from_f64_lossy(rng.random_range(-bound..bound));
            }
        }
    }

    fn activated(&self, i: usize) -> bool {
        i + 1 < self.layers.len() || self.relu_last
    }

    pub fn forward<T: Scalar>(&self, params: &[T], x: ArrayView2<T>) -> MlpTrace<T> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = h.dot(&l.weights(params).t());
            z += &l.bias(params);
            if self.activated(i) {
                z.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
            }
            inputs.push(h);
            h = z;
        }
        MlpTrace { inputs, output: h }
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        trace: &MlpTrace<T>,
        dout: Array2<T>,
        grads: &mut [T],
    ) -> Array2<T> {
        let mut d = dout;
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let out = if i + 1 == self.layers.len() {
                &trace.output
            } else {
                &trace.inputs[i + 1]
            };
            if self.activated(i) {
                d.zip_mut_with(out, |g, o| {
                    if *o <= T::zero() {
                        *g = T::zero();
                    }
                });
            }
            let n = l.out_dim * l.in_dim;
            let (w_grad, rest) = grads[l.offset..l.offset + l.param_count()].split_at_mut(n);
            let mut gw = ArrayViewMut2::from_shape((l.out_dim, l.in_dim), w_grad).expect("layer shape");
            ndarray::linalg::general_mat_mul(T::one(), &d.t(), &trace.inputs[i], T::one(), &mut gw);
            let mut gb = ArrayViewMut1::from(rest);
            gb += &d.sum_axis(Axis(0));
            d = d.dot(&l.weights(params));
        }
        d
    }
}

/// Combines value and advantage streams: `Q = V + A - mean(A)`.
pub fn dueling_combine<T: Scalar>(value: ArrayView2<T>, adv: ArrayView2<T>) -> Array2<T> {
    let n = T::from_usize(adv.ncols()).unwrap();
    let mut q = adv.to_owned();
    for (mut row, v) in q.rows_mut().into_iter().zip(value.column(0)) {
        let mean = row.sum() / n;
        row.mapv_inplace(|a| a + *v - mean);
    }
    q
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QNetShape {
    pub input_dim: usize,
    pub hidden: usize,
    pub n_actions: usize,
}

/// Encoder (one ReLU layer) feeding three-layer value and advantage streams.
#[derive(Clone, Debug, PartialEq)]
pub struct DuelingQNetwork<T> {
    shape: QNetShape,
    encoder: Mlp,
    value: Mlp,
    advantage: Mlp,
    pub params: Vec<T>,
}

pub struct QTrace<T> {
    enc: MlpTrace<T>,
    val: MlpTrace<T>,
    adv: MlpTrace<T>,
    q: Array2<T>,
}

impl<T> QTrace<T> {
    pub fn q(&self) -> &Array2<T> {
        &self.q
    }
}

impl<T: Scalar> DuelingQNetwork<T> {
    /// Zero-initialised network.
    pub fn zeros(shape: QNetShape) -> Self {
        let h = shape.hidden;
        let encoder = Mlp::new(&[shape.input_dim, h], 0, true);
        let value = Mlp::new(&[h, h, h, 1], encoder.end(), false);
        let advantage = Mlp::new(&[h, h, h, shape.n_actions], value.end(), false);
        let params = vec![T::zero(); advantage.end()];
        DuelingQNetwork {
            shape,
            encoder,
            value,
            advantage,
            params,
        }
    }

    pub fn new<R: Rng + ?Sized>(shape: QNetShape, rng: &mut R) -> Self {
        let mut net = Self::zeros(shape);
        for m in [&net.encoder, &net.value, &net.advantage] {
            m.init(&mut net.params, rng);
        }
        net
    }

    pub fn shape(&self) -> QNetShape {
        self.shape
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> QTrace<T> {
        let enc = self.encoder.forward(&self.params, x);
        let val = self.value.forward(&self.params, enc.output().view());
        let adv = self.advantage.forward(&self.params, enc.output().view());
        let q = dueling_combine(val.output().view(), adv.output().view());
        QTrace { enc, val, adv, q }
    }

    pub fn q_batch(&self, x: ArrayView2<T>) -> Array2<T> {
        self.forward(x).q
    }

    /// Q-values of one input; errors on non-finite activations.
    pub fn q_values(&self, input: &[T]) -> Result<Vec<T>> {
        if input.len() != self.shape.input_dim {
            return Err(Error::Dimension {
                expected: self.shape.input_dim,
                got: input.len(),
            });
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row shape");
        let q = self.q_batch(x);
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Q-value activations".into()));
        }
        Ok(q.into_raw_vec_and_offset().0)
    }

    /// Gradient of the loss w.r.t. all parameters given `dq = dL/dQ`.
    pub fn backward(&self, trace: &QTrace<T>, dq: &Array2<T>) -> Vec<T> {
        let mut grads = vec![T::zero(); self.params.len()];
        let n = T::from_usize(self.shape.n_actions).unwrap();
        let row_sums = dq.sum_axis(Axis(1));
        let dv = row_sums.clone().insert_axis(Axis(1));
        let mut da = dq.clone();
        for (mut row, s) in da.rows_mut().into_iter().zip(row_sums.iter()) {
            let m = *s / n;
            row.mapv_inplace(|g| g - m);
        }
        let mut dh = self.value.backward(&self.params, &trace.val, dv, &mut grads);
        dh += &self.advantage.backward(&self.params, &trace.adv, da, &mut grads);
        self.encoder.backward(&self.params, &trace.enc, dh, &mut grads);
        grads
    }

    pub fn copy_from(&mut self, other: &Self) {
        self.params.copy_from_slice(&other.params);
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// Adaptive-moment optimiser over a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        self.t += 1;
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let one = T::one();
        let c1 = T::from_f64_lossy(1.0 - self.beta1.powi(self.t));
        let c2 = T::from_f64_lossy(1.0 - self.beta2.powi(self.t));
        let lr = T::from_f64_lossy(self.lr);
        let eps = T::from_f64_lossy(self.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (one - b1) * *g;
            *v = b2 * *v + (one - b2) * *g * *g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p = *p - lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dueling_identity() {
        let v = array![[1.0f64]];
        let a = array![[1.0, 2.0, 3.0]];
        assert_eq!(dueling_combine(v.view(), a.view()), array![[0.0, 1.0, 2.0]]);
        let shifted = a.mapv(|x| x + 10.0);
        assert_eq!(dueling_combine(v.view(), shifted.view()), array![[0.0, 1.0, 2.0]]);
    }

    #[test]
    fn zero_params_give_zero_q() {
        let net = DuelingQNetwork::<f64>::zeros(QNetShape {
            input_dim: 4,
            hidden: 8,
            n_actions: 3,
        });
        assert_eq!(net.q_values(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
        assert!(net.q_values(&[1.0]).is_err());
    }

    #[test]
    fn lr_zero_keeps_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = DuelingQNetwork::<f32>::new(
            QNetShape {
                input_dim: 3,
                hidden: 4,
                n_actions: 2,
            },
            &mut rng,
        );
        let mut p = net.params.clone();
        let mut adam = Adam::new(p.len(), 0.0);
        let g: Vec<f32> = (0..p.len()).map(|i| i as f32 * 0.1 - 1.0).collect();
        adam.step(&mut p, &g);
        assert_eq!(p, net.params);
    }
}
