use rand::Rng;

use super::tensor::{affine, Scalar, Tensor};
use super::NnError;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T = f32> {
    /// [out, in]
    pub w: Tensor<T>,
    /// [out]
    pub b: Tensor<T>,
}

pub struct LinearGrad<T> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    /// He-style init scaled by fan-in.
    pub fn init<R: Rng + ?Sized>(inp: usize, out: usize, rng: &mut R) -> Self {
        let std = (2.0 / inp.max(1) as f64).sqrt();
        Linear {
            w: Tensor::randn(&[out, inp], std, rng),
            b: Tensor::zeros(&[out]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        affine(x, &self.w, &self.b)
    }

    pub fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>) -> LinearGrad<T> {
        let (out, inp) = (self.out_dim(), self.in_dim());
        let mut dx = Tensor::zeros(&[x.rows(), inp]);
        let mut dw = self.w.zeros_like();
        let mut db = self.b.zeros_like();
        for r in 0..x.rows() {
            let xr = x.row(r);
            let dyr = dy.row(r);
            let dxr = dx.row_mut(r);
            for o in 0..out {
                let g = dyr[o];
                if g == T::zero() {
                    continue;
                }
                db.data[o] = db.data[o] + g;
                let wr = &self.w.data[o * inp..(o + 1) * inp];
                let dwr = &mut dw.data[o * inp..(o + 1) * inp];
                for i in 0..inp {
                    dxr[i] = dxr[i] + g * wr[i];
                    dwr[i] = dwr[i] + g * xr[i];
                }
            }
        }
        LinearGrad { dx, dw, db }
    }
}

/// Batch normalisation over the feature axis of a [B, d] matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
}

pub struct BnCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

pub struct BnGrad<T> {
    pub dx: Tensor<T>,
    pub dgamma: Tensor<T>,
    pub dbeta: Tensor<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(d: usize) -> Self {
        BatchNorm {
            gamma: Tensor::filled(&[d], T::one()),
            beta: Tensor::zeros(&[d]),
            running_mean: Tensor::zeros(&[d]),
            running_var: Tensor::filled(&[d], T::one()),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Normalises with batch statistics (biased variance).
    pub fn forward_train(&self, x: &Tensor<T>) -> (Tensor<T>, BnCache<T>) {
        let (n, d) = (x.rows(), x.cols());
        let nf = T::c(n as f64);
        let mut mean = vec![T::zero(); d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m = *m + *v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / nf);
        let mut var = vec![T::zero(); d];
        for r in 0..n {
            for j in 0..d {
                let c = x.row(r)[j] - mean[j];
                var[j] = var[j] + c * c;
            }
        }
        var.iter_mut().for_each(|v| *v = *v / nf);
        let eps = T::c(self.eps);
        let inv_std: Vec<T> = var.iter().map(|v| T::one() / (*v + eps).sqrt()).collect();
        let mut xhat = Tensor::zeros(&[n, d]);
        let mut y = Tensor::zeros(&[n, d]);
        for r in 0..n {
            for j in 0..d {
                let h = (x.row(r)[j] - mean[j]) * inv_std[j];
                xhat.row_mut(r)[j] = h;
                y.row_mut(r)[j] = self.gamma.data[j] * h + self.beta.data[j];
            }
        }
        (
            y,
            BnCache {
                xhat,
                inv_std,
                mean,
                var,
            },
        )
    }

    /// Folds batch statistics into the running estimates (unbiased variance).
    pub fn update_running(&mut self, cache: &BnCache<T>, batch: usize) {
        let m = T::c(self.momentum);
        let corr = if batch > 1 {
            T::c(batch as f64 / (batch as f64 - 1.0))
        } else {
            T::one()
        };
        for j in 0..self.dim() {
            self.running_mean.data[j] =
                (T::one() - m) * self.running_mean.data[j] + m * cache.mean[j];
            self.running_var.data[j] =
                (T::one() - m) * self.running_var.data[j] + m * cache.var[j] * corr;
        }
    }

    pub fn forward_infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let eps = T::c(self.eps);
        let mut y = x.clone();
        for r in 0..x.rows() {
            for (j, v) in y.row_mut(r).iter_mut().enumerate() {
                let inv = T::one() / (self.running_var.data[j] + eps).sqrt();
                *v = self.gamma.data[j] * (*v - self.running_mean.data[j]) * inv
                    + self.beta.data[j];
            }
        }
        y
    }

    pub fn backward(&self, cache: &BnCache<T>, dy: &Tensor<T>) -> BnGrad<T> {
        let (n, d) = (dy.rows(), dy.cols());
        let nf = T::c(n as f64);
        let mut dgamma = Tensor::zeros(&[d]);
        let mut dbeta = Tensor::zeros(&[d]);
        for r in 0..n {
            for j in 0..d {
                dbeta.data[j] = dbeta.data[j] + dy.row(r)[j];
                dgamma.data[j] = dgamma.data[j] + dy.row(r)[j] * cache.xhat.row(r)[j];
            }
        }
        let mut dx = Tensor::zeros(&[n, d]);
        for r in 0..n {
            for j in 0..d {
                let dxhat = dy.row(r)[j] * self.gamma.data[j];
                let v = nf * dxhat - dbeta.data[j] * self.gamma.data[j]
                    - cache.xhat.row(r)[j] * dgamma.data[j] * self.gamma.data[j];
                dx.row_mut(r)[j] = v * cache.inv_std[j] / nf;
            }
        }
        BnGrad { dx, dgamma, dbeta }
    }
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU given its input.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    Tensor {
        shape: dy.shape.clone(),
        data: x
            .data
            .iter()
            .zip(&dy.data)
            .map(|(a, g)| if *a > T::zero() { *g } else { T::zero() })
            .collect(),
    }
}

pub fn sigmoid_scalar<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// Inverted dropout; returns the output and the scaled keep mask.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(x: &Tensor<T>, rate: f64, rng: &mut R) -> (Tensor<T>, Tensor<T>) {
    if rate <= 0.0 {
        return (x.clone(), Tensor::filled(&x.shape, T::one()));
    }
    let keep = T::c(1.0 / (1.0 - rate));
    let mask = Tensor {
        shape: x.shape.clone(),
        data: (0..x.len())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect(),
    };
    let y = x.zip_map(&mask, |a, m| a * m).expect("same shape");
    (y, mask)
}

/// Softmax over the entries of `z` where `mask` is true; masked entries get
/// probability zero. An all-false mask yields all zeros.
pub fn masked_softmax<T: Scalar>(z: &[T], mask: &[bool]) -> Vec<T> {
    let mut max = T::neg_infinity();
    for (v, m) in z.iter().zip(mask) {
        if *m && *v > max {
            max = *v;
        }
    }
    if max == T::neg_infinity() {
        return vec![T::zero(); z.len()];
    }
    let mut out: Vec<T> = z
        .iter()
        .zip(mask)
        .map(|(v, m)| if *m { (*v - max).exp() } else { T::zero() })
        .collect();
    let s = out.iter().fold(T::zero(), |a, b| a + *b);
    out.iter_mut().for_each(|v| *v = *v / s);
    out
}

/// Backward through softmax given its output `p`.
pub fn softmax_backward<T: Scalar>(p: &[T], dp: &[T]) -> Vec<T> {
    let dot = p.iter().zip(dp).fold(T::zero(), |a, (x, g)| a + *x * *g);
    p.iter().zip(dp).map(|(x, g)| *x * (*g - dot)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_forward_known() {
        let l = Linear {
            w: Tensor::matrix(2, 3, vec![1.0f64, 0.0, -1.0, 2.0, 1.0, 0.5]),
            b: Tensor::from_vec(vec![0.5, -1.0]),
        };
        let y = l.forward(&Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(y.data, vec![-1.5, 4.5]);
    }

    #[test]
    fn linear_rejects_bad_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = Linear::<f32>::init(3, 2, &mut rng);
        let err = l.forward(&Tensor::zeros(&[1, 4])).unwrap_err();
        assert!(matches!(err, NnError::ShapeMismatch { .. }));
    }

    #[test]
    fn batchnorm_normalises() {
        let bn = BatchNorm::<f64>::new(1);
        let x = Tensor::matrix(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let (y, c) = bn.forward_train(&x);
        let mean: f64 = y.data.iter().sum::<f64>() / 4.0;
        let var: f64 = y.data.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.25 / (1.25 + 1e-5)).abs() < 1e-9);
        assert_eq!(c.mean, vec![2.5]);
    }

    #[test]
    fn running_stats_use_unbiased_variance() {
        let mut bn = BatchNorm::<f64>::new(1);
        bn.momentum = 1.0;
        let x = Tensor::matrix(2, 1, vec![0.0, 2.0]);
        let (_, c) = bn.forward_train(&x);
        bn.update_running(&c, 2);
        assert_eq!(bn.running_mean.data, vec![1.0]);
        assert_eq!(bn.running_var.data, vec![2.0]);
    }

    #[test]
    fn softmax_masks_and_sums_to_one() {
        let p = masked_softmax(&[1.0f64, 100.0, 2.0], &[true, false, true]);
        assert_eq!(p[1], 0.0);
        assert!((p[0] + p[2] - 1.0).abs() < 1e-12);
        assert!(p[2] > p[0]);
        assert_eq!(masked_softmax(&[1.0f64], &[false]), vec![0.0]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
        assert!(sigmoid_scalar(-800.0f64) >= 0.0);
        assert!(sigmoid_scalar(800.0f64) <= 1.0);
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(vec![1.0f32, 2.0]);
        assert_eq!(dropout(&x, 0.0, &mut rng).0, x);
        let (y, m) = dropout(&Tensor::filled(&[1000], 1.0f64), 0.5, &mut rng);
        let kept = m.data.iter().filter(|v| **v > 0.0).count();
        assert!((400..600).contains(&kept));
        assert!(y.data.iter().all(|v| *v == 0.0 || *v == 2.0));
    }
}
