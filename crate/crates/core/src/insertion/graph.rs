//! Forward and backward pieces shared by insertion, extraction and training.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::features::SparseVec;
use super::model::Params;
use crate::nn::layers::{self, masked_softmax, relu, relu_backward, softmax_backward, BnCache};
use crate::nn::{Linear, NnError, Scalar, Tensor};

/// Pre-activation of the encoder projection for a batch of sparse rows.
pub fn encoder_forward<T: Scalar>(enc: &Linear<T>, xs: &[&SparseVec]) -> Result<Tensor<T>, NnError> {
    let (d, inp) = (enc.out_dim(), enc.in_dim());
    let mut y = Tensor::zeros(&[xs.len(), d]);
    for (r, x) in xs.iter().enumerate() {
        let row = y.row_mut(r);
        row.copy_from_slice(&enc.b.data);
        for (i, v) in x.idx.iter().zip(&x.val) {
            let i = *i as usize;
            if i >= inp {
                return Err(NnError::ShapeMismatch {
                    expected: vec![inp],
                    got: vec![i + 1],
                });
            }
            let v = T::c(*v as f64);
            for (o, out) in row.iter_mut().enumerate() {
                *out = *out + enc.w.data[o * inp + i] * v;
            }
        }
    }
    Ok(y)
}

pub fn encoder_backward<T: Scalar>(xs: &[&SparseVec], dpre: &Tensor<T>, g: &mut Linear<T>) {
    let (d, inp) = (g.out_dim(), g.in_dim());
    for (r, x) in xs.iter().enumerate() {
        let dy = dpre.row(r);
        for o in 0..d {
            g.b.data[o] = g.b.data[o] + dy[o];
        }
        for (i, v) in x.idx.iter().zip(&x.val) {
            let v = T::c(*v as f64);
            for (o, gy) in dy.iter().enumerate() {
                let k = o * inp + *i as usize;
                g.w.data[k] = g.w.data[k] + *gy * v;
            }
        }
    }
}

/// ReLU(encoder(x)).
pub fn encode_rows<T: Scalar>(enc: &Linear<T>, xs: &[&SparseVec]) -> Result<Tensor<T>, NnError> {
    Ok(relu(&encoder_forward(enc, xs)?))
}

/// Softmax over consecutive groups of `group` columns, masked per row.
pub fn group_softmax<T: Scalar>(z: &Tensor<T>, masks: &[&[bool]], group: usize) -> Tensor<T> {
    let mut p = z.zeros_like();
    for r in 0..z.rows() {
        let (zr, m) = (z.row(r), masks[r]);
        let pr = p.row_mut(r);
        for g in 0..zr.len() / group {
            let span = g * group..(g + 1) * group;
            let out = masked_softmax(&zr[span.clone()], &m[span.clone()]);
            pr[span].copy_from_slice(&out);
        }
    }
    p
}

pub fn group_softmax_backward<T: Scalar>(p: &Tensor<T>, dp: &Tensor<T>, group: usize) -> Tensor<T> {
    let mut dz = p.zeros_like();
    for r in 0..p.rows() {
        let (pr, gr) = (p.row(r), dp.row(r));
        let out = dz.row_mut(r);
        for g in 0..pr.len() / group {
            let span = g * group..(g + 1) * group;
            let v = softmax_backward(&pr[span.clone()], &gr[span.clone()]);
            out[span].copy_from_slice(&v);
        }
    }
    dz
}

/// One-hot of each group's argmax (lowest index on ties). Groups with no
/// mass stay zero.
pub fn group_onehot<T: Scalar>(p: &Tensor<T>, group: usize) -> Tensor<T> {
    let mut out = p.zeros_like();
    for r in 0..p.rows() {
        let src = p.row(r);
        let dst = out.row_mut(r);
        for (g, chunk) in src.chunks(group).enumerate() {
            let mut best: Option<usize> = None;
            for (j, v) in chunk.iter().enumerate() {
                if *v > T::zero() && best.is_none_or(|b| *v > chunk[b]) {
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                dst[g * group + j] = T::one();
            }
        }
    }
    out
}

/// Mean of the selected rename-slot distributions, per row. Rows with no
/// selection pool to zero.
pub fn pool_var<T: Scalar>(p_var: &Tensor<T>, selected: &[Vec<usize>], v: usize) -> Tensor<T> {
    let mut out = Tensor::zeros(&[p_var.rows(), v]);
    for (r, sel) in selected.iter().enumerate() {
        if sel.is_empty() {
            continue;
        }
        let k = T::c(1.0 / sel.len() as f64);
        let src = p_var.row(r);
        let dst = out.row_mut(r);
        for s in sel {
            for j in 0..v {
                dst[j] = dst[j] + src[s * v + j] * k;
            }
        }
    }
    out
}

pub fn pool_var_backward<T: Scalar>(
    dpooled: &Tensor<T>,
    selected: &[Vec<usize>],
    slots: usize,
    v: usize,
) -> Tensor<T> {
    let mut out = Tensor::zeros(&[dpooled.rows(), slots * v]);
    for (r, sel) in selected.iter().enumerate() {
        if sel.is_empty() {
            continue;
        }
        let k = T::c(1.0 / sel.len() as f64);
        let src = dpooled.row(r);
        let dst = out.row_mut(r);
        for s in sel {
            for j in 0..v {
                dst[s * v + j] = dst[s * v + j] + src[j] * k;
            }
        }
    }
    out
}

pub struct RfCache<T> {
    syn: Tensor<T>,
    var: Tensor<T>,
    fuse_in: Tensor<T>,
    pre: Tensor<T>,
}

/// R_f: ReLU(fuse([c ‖ syn_proj(p_syn) ‖ var_proj(pooled p_var)])).
pub fn rf_forward<T: Scalar>(
    p: &Params<T>,
    c: &Tensor<T>,
    syn: &Tensor<T>,
    var: &Tensor<T>,
) -> Result<(Tensor<T>, RfCache<T>), NnError> {
    let ps = p.rf_syn.forward(syn)?;
    let pv = p.rf_var.forward(var)?;
    if c.rows() != ps.rows() || c.cols() != ps.cols() {
        return Err(NnError::ShapeMismatch {
            expected: ps.shape.clone(),
            got: c.shape.clone(),
        });
    }
    let fuse_in = c.hcat(&ps).hcat(&pv);
    let pre = p.rf_fuse.forward(&fuse_in)?;
    let f = relu(&pre);
    Ok((
        f,
        RfCache {
            syn: syn.clone(),
            var: var.clone(),
            fuse_in,
            pre,
        },
    ))
}

/// Returns gradients w.r.t. (c, p_syn, pooled p_var).
pub fn rf_backward<T: Scalar>(
    p: &Params<T>,
    cache: &RfCache<T>,
    df: &Tensor<T>,
    g: &mut Params<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let d = p.rf_fuse.out_dim();
    let dpre = relu_backward(&cache.pre, df);
    let fuse = p.rf_fuse.backward(&cache.fuse_in, &dpre);
    g.rf_fuse.w.add_assign(&fuse.dw);
    g.rf_fuse.b.add_assign(&fuse.db);
    let (dc, rest) = fuse.dx.hsplit(d);
    let (dps, dpv) = rest.hsplit(d);
    let syn = p.rf_syn.backward(&cache.syn, &dps);
    g.rf_syn.w.add_assign(&syn.dw);
    g.rf_syn.b.add_assign(&syn.db);
    let var = p.rf_var.backward(&cache.var, &dpv);
    g.rf_var.w.add_assign(&var.dw);
    g.rf_var.b.add_assign(&var.db);
    (dc, syn.dx, var.dx)
}

pub struct ReCache<T> {
    bn: BnCache<T>,
    xb: Tensor<T>,
    a1: Tensor<T>,
    mask: Tensor<T>,
    d1: Tensor<T>,
}

impl<T> ReCache<T> {
    pub fn bn(&self) -> &BnCache<T> {
        &self.bn
    }

    pub fn into_bn(self) -> BnCache<T> {
        self.bn
    }
}

/// R_e in training mode: batch statistics and live dropout. Returns logits.
pub fn re_forward_train<T: Scalar, R: Rng + ?Sized>(
    p: &Params<T>,
    x: &Tensor<T>,
    dropout: f64,
    rng: &mut R,
) -> Result<(Tensor<T>, ReCache<T>), NnError> {
    let (xb, bn) = p.re_bn.forward_train(x);
    let a1 = p.re_fc1.forward(&xb)?;
    let (d1, mask) = layers::dropout(&relu(&a1), dropout, rng);
    let z = p.re_fc2.forward(&d1)?;
    Ok((
        z,
        ReCache {
            bn,
            xb,
            a1,
            mask,
            d1,
        },
    ))
}

pub fn re_backward<T: Scalar>(
    p: &Params<T>,
    cache: &ReCache<T>,
    dz: &Tensor<T>,
    g: &mut Params<T>,
) -> Tensor<T> {
    let fc2 = p.re_fc2.backward(&cache.d1, dz);
    g.re_fc2.w.add_assign(&fc2.dw);
    g.re_fc2.b.add_assign(&fc2.db);
    let dr = fc2.dx.zip_map(&cache.mask, |a, m| a * m).expect("mask shape");
    let da1 = relu_backward(&cache.a1, &dr);
    let fc1 = p.re_fc1.backward(&cache.xb, &da1);
    g.re_fc1.w.add_assign(&fc1.dw);
    g.re_fc1.b.add_assign(&fc1.db);
    let bn = p.re_bn.backward(&cache.bn, &fc1.dx);
    g.re_bn.gamma.add_assign(&bn.dgamma);
    g.re_bn.beta.add_assign(&bn.dbeta);
    bn.dx
}

/// R_e in inference mode: running statistics, no dropout. Returns logits.
pub fn re_infer<T: Scalar>(p: &Params<T>, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let xb = p.re_bn.forward_infer(x);
    p.re_fc2.forward(&relu(&p.re_fc1.forward(&xb)?))
}

/// i.i.d. N(0, σ²) draws.
pub fn gaussian_noise<R: Rng + ?Sized>(n: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    (0..n).map(|_| normal.sample(rng)).collect()
}

pub struct PerturbCache<T> {
    out: Tensor<T>,
    active: Vec<bool>,
    sums: Vec<T>,
    group: usize,
}

/// Adds noise on the support of every distribution group, clamps at zero
/// and renormalises. A group whose entries all clamp to zero is left as is.
pub fn perturb_groups<T: Scalar, R: Rng + ?Sized>(
    p: &Tensor<T>,
    group: usize,
    sigma: f64,
    rng: &mut R,
) -> (Tensor<T>, PerturbCache<T>) {
    let mut out = p.clone();
    let mut active = vec![false; p.len()];
    let mut sums = Vec::with_capacity(p.len() / group.max(1));
    if sigma <= 0.0 {
        for (a, v) in active.iter_mut().zip(&p.data) {
            *a = *v > T::zero();
        }
        sums.resize(p.len() / group.max(1), T::zero());
        return (
            out.clone(),
            PerturbCache {
                out,
                active,
                sums,
                group,
            },
        );
    }
    let noise = gaussian_noise(p.len(), sigma, rng);
    for (gi, chunk) in out.data.chunks_mut(group).enumerate() {
        let base = gi * group;
        let mut q = vec![T::zero(); chunk.len()];
        let mut s = T::zero();
        let mut support = false;
        for (j, v) in chunk.iter().enumerate() {
            if *v > T::zero() {
                support = true;
                let x = *v + T::c(noise[base + j]);
                if x > T::zero() {
                    q[j] = x;
                    active[base + j] = true;
                    s = s + x;
                }
            }
        }
        if !support || s == T::zero() {
            for j in 0..chunk.len() {
                active[base + j] = chunk[j] > T::zero();
            }
            sums.push(T::zero());
            continue;
        }
        for (v, x) in chunk.iter_mut().zip(&q) {
            *v = *x / s;
        }
        sums.push(s);
    }
    (
        out.clone(),
        PerturbCache {
            out,
            active,
            sums,
            group,
        },
    )
}

pub fn perturb_backward<T: Scalar>(cache: &PerturbCache<T>, dout: &Tensor<T>) -> Tensor<T> {
    let mut dp = dout.zeros_like();
    let g = cache.group;
    for (gi, s) in cache.sums.iter().enumerate() {
        let span = gi * g..(gi + 1) * g;
        if *s == T::zero() {
            for k in span {
                if cache.active[k] {
                    dp.data[k] = dout.data[k];
                }
            }
            continue;
        }
        let dot = span
            .clone()
            .fold(T::zero(), |a, k| a + cache.out.data[k] * dout.data[k]);
        for k in span {
            if cache.active[k] {
                dp.data[k] = (dout.data[k] - dot) / *s;
            }
        }
    }
    dp
}
