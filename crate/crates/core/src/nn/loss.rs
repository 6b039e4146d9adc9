use super::layers::sigmoid_scalar;
use super::tensor::{Scalar, Tensor};

pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy of probabilities `p` against targets `y`.
pub fn bce<T: Scalar>(p: &[T], y: &[T]) -> T {
    let eps = T::c(BCE_EPS);
    let n = T::c(p.len().max(1) as f64);
    let total = p.iter().zip(y).fold(T::zero(), |acc, (p, y)| {
        let pc = p.max(eps).min(T::one() - eps);
        acc - (*y * pc.ln() + (T::one() - *y) * (T::one() - pc).ln())
    });
    total / n
}

/// BCE of sigmoid(z) against `y`, with the gradient w.r.t. the logits.
/// Where the clamp is active the gradient is zero, matching the loss.
pub fn bce_with_logits<T: Scalar>(z: &Tensor<T>, y: &Tensor<T>) -> (T, Tensor<T>) {
    let eps = T::c(BCE_EPS);
    let n = T::c(z.len().max(1) as f64);
    let p: Vec<T> = z.data.iter().map(|v| sigmoid_scalar(*v)).collect();
    let loss = bce(&p, &y.data);
    let grad = p
        .iter()
        .zip(&y.data)
        .map(|(p, y)| {
            if *p < eps || *p > T::one() - eps {
                T::zero()
            } else {
                (*p - *y) / n
            }
        })
        .collect();
    (
        loss,
        Tensor {
            shape: z.shape.clone(),
            data: grad,
        },
    )
}

/// Mean squared error and its gradient w.r.t. `a`.
pub fn mse<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> (T, Tensor<T>) {
    let n = T::c(a.len().max(1) as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(a.len());
    for (x, y) in a.data.iter().zip(&b.data) {
        let d = *x - *y;
        loss = loss + d * d;
        grad.push(T::c(2.0) * d / n);
    }
    (
        loss / n,
        Tensor {
            shape: a.shape.clone(),
            data: grad,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_half_is_ln2() {
        assert!((bce(&[0.5f64], &[1.0]) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_clamps_extremes() {
        let v = bce(&[0.0f64], &[1.0]);
        assert!((v - -(1e-7f64).ln()).abs() < 1e-9);
        assert!(v.is_finite());
    }

    #[test]
    fn bce_logit_gradient() {
        let z = Tensor::from_vec(vec![0.0f64, 2.0]);
        let y = Tensor::from_vec(vec![1.0, 0.0]);
        let (_, g) = bce_with_logits(&z, &y);
        assert!((g.data[0] - (-0.25)).abs() < 1e-12);
        let s = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((g.data[1] - s / 2.0).abs() < 1e-12);
    }

    #[test]
    fn mse_known() {
        let a = Tensor::from_vec(vec![1.0f64, 3.0]);
        let b = Tensor::from_vec(vec![0.0, 1.0]);
        let (l, g) = mse(&a, &b);
        assert_eq!(l, 2.5);
        assert_eq!(g.data, vec![1.0, 2.0]);
    }
}
