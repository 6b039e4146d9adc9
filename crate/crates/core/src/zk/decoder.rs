//! The extraction decoder in the form the circuit proves: BatchNorm folded
//! into the first affine layer, BF16 parameters, fixed-point arithmetic and
//! the polynomial activation.

use serde::{Deserialize, Serialize};

use super::bf16::{quantize_bf16, Bf16};
use super::compile::forward_bounds;
use super::fixed::FixedPointCodec;
use super::ZkError;
use crate::insertion::Params;
use crate::nn::Scalar;

pub fn poly_relu(x: f64) -> f64 {
    x * x + x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Poly,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Poly => poly_relu(x),
        }
    }
}

/// BatchNorm → fc1 → act → fc2 in f64, infer mode.
pub fn unfolded_forward<T: Scalar>(p: &Params<T>, x: &[f64], act: Activation) -> Vec<f64> {
    let bn = &p.re_bn;
    let f = |t: T| t.to_f64().unwrap_or(f64::NAN);
    let xb: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let inv = 1.0 / (f(bn.running_var.data[i]) + bn.eps).sqrt();
            f(bn.gamma.data[i]) * (v - f(bn.running_mean.data[i])) * inv + f(bn.beta.data[i])
        })
        .collect();
    let affine = |w: &[T], b: &[T], x: &[f64]| -> Vec<f64> {
        b.iter()
            .enumerate()
            .map(|(o, bo)| f(*bo) + x.iter().enumerate().map(|(i, xi)| f(w[o * x.len() + i]) * xi).sum::<f64>())
            .collect()
    };
    let h: Vec<f64> = affine(&p.re_fc1.w.data, &p.re_fc1.b.data, &xb)
        .into_iter()
        .map(|v| act.apply(v))
        .collect();
    affine(&p.re_fc2.w.data, &p.re_fc2.b.data, &h)
}

/// Decoder with the BatchNorm merged into fc1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldedDecoder {
    pub d: usize,
    pub hidden: usize,
    pub n_bits: usize,
    /// [hidden, d]
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// [n_bits, hidden]
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// BN(x) = a⊙x + c with a = γ/√(v+ε), c = β − a⊙μ, so
/// fc1(BN(x)) = (W·diag(a))x + (W·c + b).
pub fn fold_batchnorm<T: Scalar>(p: &Params<T>) -> Result<FoldedDecoder, ZkError> {
    let f = |t: T| t.to_f64().unwrap_or(f64::NAN);
    let bn = &p.re_bn;
    let (hidden, d) = (p.re_fc1.w.rows(), p.re_fc1.w.cols());
    let n_bits = p.re_fc2.w.rows();
    let mut a = Vec::with_capacity(d);
    let mut c = Vec::with_capacity(d);
    for i in 0..d {
        let v = f(bn.running_var.data[i]);
        if v.is_nan() || v <= 0.0 {
            return Err(ZkError::DegenerateVariance { channel: i });
        }
        let ai = f(bn.gamma.data[i]) / (v + bn.eps).sqrt();
        a.push(ai);
        c.push(f(bn.beta.data[i]) - ai * f(bn.running_mean.data[i]));
    }
    let mut w1 = vec![0.0; hidden * d];
    let mut b1 = vec![0.0; hidden];
    for o in 0..hidden {
        let mut acc = f(p.re_fc1.b.data[o]);
        for i in 0..d {
            let w = f(p.re_fc1.w.data[o * d + i]);
            w1[o * d + i] = w * a[i];
            acc += w * c[i];
        }
        b1[o] = acc;
    }
    Ok(FoldedDecoder {
        d,
        hidden,
        n_bits,
        w1,
        b1,
        w2: p.re_fc2.w.data.iter().map(|v| f(*v)).collect(),
        b2: p.re_fc2.b.data.iter().map(|v| f(*v)).collect(),
    })
}

impl FoldedDecoder {
    pub fn forward(&self, x: &[f64], act: Activation) -> Vec<f64> {
        let h: Vec<f64> = (0..self.hidden)
            .map(|o| {
                let row = &self.w1[o * self.d..(o + 1) * self.d];
                act.apply(self.b1[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            })
            .collect();
        (0..self.n_bits)
            .map(|j| {
                let row = &self.w2[j * self.hidden..(j + 1) * self.hidden];
                self.b2[j] + row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    pub fn quantize(&self) -> QuantizedDecoder {
        let q = |v: &[f64]| v.iter().map(|x| quantize_bf16(*x as f32)).collect();
        QuantizedDecoder {
            d: self.d,
            hidden: self.hidden,
            n_bits: self.n_bits,
            w1: q(&self.w1),
            b1: q(&self.b1),
            w2: q(&self.w2),
            b2: q(&self.b2),
            threshold: 0.0,
        }
    }
}

/// Folded decoder with BF16 parameters. `threshold` is the logit cut for a
/// 1 bit; logit 0 is sigmoid 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedDecoder {
    pub d: usize,
    pub hidden: usize,
    pub n_bits: usize,
    pub w1: Vec<Bf16>,
    pub b1: Vec<Bf16>,
    pub w2: Vec<Bf16>,
    pub b2: Vec<Bf16>,
    pub threshold: f64,
}

/// Fixed-point integers of every parameter, in circuit order.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedParams {
    pub w1: Vec<i64>,
    pub b1: Vec<i64>,
    pub w2: Vec<i64>,
    pub b2: Vec<i64>,
}

impl FixedParams {
    pub fn flat(&self) -> Vec<i64> {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedOutput {
    pub logits: Vec<i128>,
    pub bits: Vec<u8>,
}

impl QuantizedDecoder {
    pub fn fixed_params(&self, codec: &FixedPointCodec) -> FixedParams {
        let e = |v: &[Bf16]| v.iter().map(|b| codec.encode(b.to_f32() as f64)).collect();
        FixedParams {
            w1: e(&self.w1),
            b1: e(&self.b1),
            w2: e(&self.w2),
            b2: e(&self.b2),
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Reference semantics of the circuit: integer fixed point, a floor
    /// rescale after every multiplication, poly_relu, then the threshold.
    /// Inputs and fc1 outputs outside the range checks of the circuit are
    /// rejected here too.
    pub fn infer_fixed(&self, x: &[i64], codec: &FixedPointCodec) -> Result<QuantizedOutput, ZkError> {
        if x.len() != self.d {
            return Err(ZkError::InputLength {
                expected: self.d,
                got: x.len(),
            });
        }
        let bounds = forward_bounds(self, codec)?;
        let within = |v: i128, bits: u32| -(1i128 << bits) <= v && v < 1i128 << bits;
        if let Some(v) = x.iter().find(|v| !within(**v as i128, bounds.input_bits)) {
            return Err(ZkError::OutOfRange {
                stage: "input",
                value: codec.decode(*v as i128),
            });
        }
        let p = self.fixed_params(codec);
        let mut h = Vec::with_capacity(self.hidden);
        for o in 0..self.hidden {
            let mut acc = p.b1[o] as i128;
            for i in 0..self.d {
                acc += codec.truncate(p.w1[o * self.d + i] as i128 * x[i] as i128);
            }
            if !within(acc, bounds.hidden_bits) {
                return Err(ZkError::OutOfRange {
                    stage: "fc1 output",
                    value: codec.decode(acc),
                });
            }
            h.push(codec.truncate(acc * acc) + acc);
        }
        let t = codec.encode(self.threshold) as i128;
        let logits: Vec<i128> = (0..self.n_bits)
            .map(|j| {
                let mut acc = p.b2[j] as i128;
                for (o, hv) in h.iter().enumerate() {
                    acc += codec.truncate(p.w2[j * self.hidden + o] as i128 * hv);
                }
                acc
            })
            .collect();
        let bits = logits.iter().map(|z| u8::from(*z >= t)).collect();
        Ok(QuantizedOutput { logits, bits })
    }

    pub fn infer(&self, embedding: &[f64], codec: &FixedPointCodec) -> Result<QuantizedOutput, ZkError> {
        let x: Vec<i64> = embedding.iter().map(|v| codec.encode(*v)).collect();
        self.infer_fixed(&x, codec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub lo: f64,
    pub hi: f64,
    pub max_abs_err: f64,
    pub mean_abs_err: f64,
}

/// |poly_relu − relu| on a grid of `step` over [lo, hi], summarised in
/// `bins` equal intervals.
pub fn calibration_table(lo: f64, hi: f64, step: f64, bins: usize) -> Vec<CalibrationRow> {
    let n = ((hi - lo) / step).round() as usize;
    let width = (hi - lo) / bins as f64;
    let mut rows: Vec<(f64, f64, usize)> = vec![(0.0, 0.0, 0); bins];
    for k in 0..=n {
        let x = lo + k as f64 * step;
        let err = (poly_relu(x) - x.max(0.0)).abs();
        let b = (((x - lo) / width) as usize).min(bins - 1);
        rows[b].0 = rows[b].0.max(err);
        rows[b].1 += err;
        rows[b].2 += 1;
    }
    rows.iter()
        .enumerate()
        .map(|(b, (mx, sum, cnt))| CalibrationRow {
            lo: lo + b as f64 * width,
            hi: lo + (b + 1) as f64 * width,
            max_abs_err: *mx,
            mean_abs_err: sum / (*cnt).max(1) as f64,
        })
        .collect()
}

impl FoldedDecoder {
    /// Random decoder with He-style scales, for equivalence checks and gate
    /// counts independent of a trained model.
    pub fn random(d: usize, hidden: usize, n_bits: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, sd: f64| -> Vec<f64> {
            let dist = Normal::new(0.0, sd).expect("positive sd");
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        };
        FoldedDecoder {
            d,
            hidden,
            n_bits,
            w1: draw(hidden * d, (2.0 / d as f64).sqrt()),
            b1: draw(hidden, 0.1),
            w2: draw(n_bits * hidden, (2.0 / hidden as f64).sqrt()),
            b2: draw(n_bits, 0.1),
        }
    }
}
