use super::tensor::{Scalar, Tensor};

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW<T = f32> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u32,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    /// One update. `params` and `grads` must line up and keep the same
    /// order between calls.
    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: Vec<&Tensor<T>>) {
        assert_eq!(params.len(), grads.len(), "param/grad count");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| g.zeros_like()).collect();
            self.v = grads.iter().map(|g| g.zeros_like()).collect();
        }
        self.t += 1;
        let (b1, b2) = (T::c(self.beta1), T::c(self.beta2));
        let bc1 = T::c(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = T::c(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::c(self.lr);
        let decay = T::c(self.lr * self.weight_decay);
        let eps = T::c(self.eps);
        // moments of never-touched weights decay into subnormals, which are
        // very slow on most CPUs
        let flush = |x: T| if x.abs() < T::min_positive_value() { T::zero() } else { x };
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = flush(b1 * m.data[i] + (T::one() - b1) * gi);
                v.data[i] = flush(b2 * v.data[i] + (T::one() - b2) * gi * gi);
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                let x = p.data[i] - decay * p.data[i];
                p.data[i] = x - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut opt = AdamW::<f64>::new(0.1, 0.0);
        let mut p = Tensor::from_vec(vec![1.0]);
        let g = Tensor::from_vec(vec![1.0]);
        opt.step(vec![&mut p], vec![&g]);
        assert!((p.data[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn decay_is_decoupled() {
        let mut opt = AdamW::<f64>::new(0.1, 0.5);
        let mut p = Tensor::from_vec(vec![2.0]);
        let g = Tensor::from_vec(vec![0.0]);
        opt.step(vec![&mut p], vec![&g]);
        assert!((p.data[0] - 1.9).abs() < 1e-12);
    }
}
