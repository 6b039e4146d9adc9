//! Joint training of the insertion and extraction networks.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::insertion::graph::{self, ReCache};
use crate::insertion::{
    plan_from, BitMessage, Capacity, InsertError, ModelBundle, ModelConfig, Params, Prepared,
    SiteDistributions,
};
use crate::nn::layers::{relu, relu_backward, BnCache};
use crate::nn::loss::{bce, bce_with_logits, mse};
use crate::nn::{AdamW, Scalar, Tensor};
use crate::syntax::SyntaxTree;
use crate::transform::apply_with;
use crate::transform::vocab::Vocabulary;

pub mod gradcheck;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("no training program passes the capacity check")]
    EmptyCorpus,
    #[error(transparent)]
    Insert(#[from] InsertError),
    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub w_f: f64,
    pub w_d: f64,
    pub w_r: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub sigma_p: f64,
    pub n_bits: usize,
    pub seed: u64,
    /// Feed R_f the argmax one-hot in the forward pass and pass gradients
    /// to the soft distributions unchanged.
    pub straight_through: bool,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            w_f: 1.0,
            w_d: 1.0,
            w_r: 0.05,
            epochs: 20,
            batch_size: 16,
            lr: 1e-3,
            weight_decay: 0.01,
            sigma_p: 0.1,
            n_bits: 4,
            seed: 0,
            straight_through: true,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Hyper-parameters of the original large-scale setup.
    pub fn large_scale() -> Self {
        TrainConfig {
            lr: 5e-5,
            straight_through: false,
            model: ModelConfig::large_scale(),
            ..TrainConfig::default()
        }
    }

    /// Longer schedule used for the desk-scale detectability runs.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 500,
            lr: 3e-4,
            ..TrainConfig::default()
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            w_f: self.w_f,
            w_d: self.w_d,
            w_r: self.w_r,
            sigma_p: self.sigma_p,
            straight_through: self.straight_through,
        }
    }

    fn model_config(&self) -> ModelConfig {
        ModelConfig {
            n_bits: self.n_bits,
            ..self.model.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_f: f64,
    pub w_d: f64,
    pub w_r: f64,
    pub sigma_p: f64,
    pub straight_through: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_f: f64,
    pub l_d: f64,
    pub l_r: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(l_f: f64, l_d: f64, l_r: f64, w: &LossWeights) -> Self {
        LossBreakdown {
            l_f,
            l_d,
            l_r,
            total: w.w_f * l_f + w.w_d * l_d + w.w_r * l_r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub l_f: f64,
    pub l_d: f64,
    pub l_r: f64,
    pub total: f64,
}

fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// BCE(M, M′) for soft predictions.
pub fn detectability_loss(m: &BitMessage, soft: &[f64]) -> f64 {
    bce(soft, &m.as_floats::<f64>())
}

/// BCE(M, M̂′) for soft predictions made from perturbed distributions.
pub fn robustness_loss(m: &BitMessage, soft_hat: &[f64]) -> f64 {
    bce(soft_hat, &m.as_floats::<f64>())
}

/// MSE between approximated and true watermarked features plus BCE against
/// the detached hard extraction.
pub fn functionality_loss(approx: &[f64], true_feature: &[f64], soft: &[f64], hard: &BitMessage) -> f64 {
    let n = approx.len().max(1) as f64;
    let term1 = approx
        .iter()
        .zip(true_feature)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    term1 + bce(soft, &hard.as_floats::<f64>())
}

/// Loss, gradients and side outputs of one batch.
pub struct StepResult<T> {
    pub loss: LossBreakdown,
    pub grads: Params<T>,
    bn: BnCache<T>,
    /// Bit accuracy of R_e on the approximated features.
    pub approx_bit_acc: f64,
}

fn group_rows<'a>(prep: &'a [&Prepared], f: impl Fn(&'a Prepared) -> &'a [bool]) -> Vec<&'a [bool]> {
    prep.iter().map(|p| f(p)).collect()
}

/// Forward and backward pass over a batch of `(program, message)` pairs.
/// The argmax plan and the rewrite are constants; gradients flow through
/// the distributions, R_f, R_e and the encoder on both the original and the
/// rewritten code. The hard targets M′ are detached.
pub fn loss_and_grads<T: Scalar, R: Rng + ?Sized>(
    model: &ModelBundle<T>,
    batch: &[(&Prepared, &BitMessage)],
    w: &LossWeights,
    rng: &mut R,
) -> Result<StepResult<T>, InsertError> {
    let cfg = &model.config;
    let p = &model.params;
    let v = model.vocab.len().max(1);
    let b = batch.len();
    let preps: Vec<&Prepared> = batch.iter().map(|(p, _)| *p).collect();
    let xs: Vec<_> = preps.iter().map(|p| &p.features).collect();
    let mut msg_data = Vec::with_capacity(b * cfg.n_bits);
    for (_, m) in batch {
        if m.len() != cfg.n_bits {
            return Err(InsertError::MessageLength {
                expected: cfg.n_bits,
                got: m.len(),
            });
        }
        msg_data.extend(m.as_floats::<T>());
    }
    let msg = Tensor::matrix(b, cfg.n_bits, msg_data);

    // code and message features, then both heads
    let pre_c = graph::encoder_forward(&p.encoder, &xs)?;
    let c = relu(&pre_c);
    let r = p.r_m.forward(&msg)?;
    let h = c.hcat(&r);
    let p_syn = graph::group_softmax(&p.s_d1.forward(&h)?, &group_rows(&preps, |x| &x.syn_mask), cfg.max_alts);
    let p_var = graph::group_softmax(&p.s_d2.forward(&h)?, &group_rows(&preps, |x| &x.var_mask), v);

    // non-differentiable: argmax plan, rewrite, true watermarked feature
    let mut selected = Vec::with_capacity(b);
    let mut wm_feats = Vec::with_capacity(b);
    for (i, prep) in preps.iter().enumerate() {
        let d = SiteDistributions::from_rows(prep, cfg, p_syn.row(i), p_var.row(i), cfg.rename_top_k);
        let plan = plan_from(prep, &d, &model.vocab);
        let tree = apply_with(&prep.tree, &prep.analysis, &plan)?;
        let analysis = crate::transform::Analysis::new(&tree);
        wm_feats.push(crate::insertion::features::code_features(
            &tree,
            &analysis,
            cfg.buckets,
            cfg.max_sites,
            cfg.max_alts,
        ));
        selected.push(d.selected);
    }
    let wm_refs: Vec<_> = wm_feats.iter().collect();
    let pre_cw = graph::encoder_forward(&p.encoder, &wm_refs)?;
    let c_w = relu(&pre_cw);
    let hard = graph::re_infer(p, &c_w)?.map(|z| if z >= T::zero() { T::one() } else { T::zero() });

    // clean path through R_f and R_e
    let relax = |syn: &Tensor<T>, var: &Tensor<T>| {
        if w.straight_through {
            (graph::group_onehot(syn, cfg.max_alts), graph::group_onehot(var, v))
        } else {
            (syn.clone(), var.clone())
        }
    };
    let (syn_in, var_in) = relax(&p_syn, &p_var);
    let pooled = graph::pool_var(&var_in, &selected, v);
    let (f, rf_cache) = graph::rf_forward(p, &c, &syn_in, &pooled)?;
    let (z, re_cache): (Tensor<T>, ReCache<T>) = graph::re_forward_train(p, &f, cfg.dropout, rng)?;

    // perturbed path
    let (syn_hat, syn_pc) = graph::perturb_groups(&p_syn, cfg.max_alts, w.sigma_p, rng);
    let (var_hat, var_pc) = graph::perturb_groups(&p_var, v, w.sigma_p, rng);
    let (syn_hat_in, var_hat_in) = relax(&syn_hat, &var_hat);
    let pooled_hat = graph::pool_var(&var_hat_in, &selected, v);
    let (f_hat, rf_cache_hat) = graph::rf_forward(p, &c, &syn_hat_in, &pooled_hat)?;
    let (z_hat, re_cache_hat) = graph::re_forward_train(p, &f_hat, cfg.dropout, rng)?;

    let (mse_l, dmse) = mse(&f, &c_w);
    let (bce_hard, dz_hard) = bce_with_logits(&z, &hard);
    let (l_d, dz_d) = bce_with_logits(&z, &msg);
    let (l_r, dz_r) = bce_with_logits(&z_hat, &msg);
    let loss = LossBreakdown::new(to_f64(mse_l) + to_f64(bce_hard), to_f64(l_d), to_f64(l_r), w);

    let mut correct = 0usize;
    for (zv, mv) in z.data.iter().zip(&msg.data) {
        if (*zv >= T::zero()) == (*mv > T::c(0.5)) {
            correct += 1;
        }
    }

    // backward
    let (wf, wd, wr) = (T::c(w.w_f), T::c(w.w_d), T::c(w.w_r));
    let mut g = p.zeros_like();
    let dz = dz_hard.zip_map(&dz_d, |a, b| wf * a + wd * b)?;
    let mut df = graph::re_backward(p, &re_cache, &dz, &mut g);
    df.add_assign(&dmse.map(|x| wf * x));
    let df_hat = graph::re_backward(p, &re_cache_hat, &dz_r.map(|x| wr * x), &mut g);

    let (mut dc, mut dsyn, dpool) = graph::rf_backward(p, &rf_cache, &df, &mut g);
    let (dc_hat, dsyn_hat, dpool_hat) = graph::rf_backward(p, &rf_cache_hat, &df_hat, &mut g);
    dc.add_assign(&dc_hat);
    dsyn.add_assign(&graph::perturb_backward(&syn_pc, &dsyn_hat));
    let mut dvar = graph::pool_var_backward(&dpool, &selected, cfg.rename_slots, v);
    let dvar_hat = graph::pool_var_backward(&dpool_hat, &selected, cfg.rename_slots, v);
    dvar.add_assign(&graph::perturb_backward(&var_pc, &dvar_hat));

    let dz1 = graph::group_softmax_backward(&p_syn, &dsyn, cfg.max_alts);
    let dz2 = graph::group_softmax_backward(&p_var, &dvar, v);
    let s1 = p.s_d1.backward(&h, &dz1);
    g.s_d1.w.add_assign(&s1.dw);
    g.s_d1.b.add_assign(&s1.db);
    let s2 = p.s_d2.backward(&h, &dz2);
    g.s_d2.w.add_assign(&s2.dw);
    g.s_d2.b.add_assign(&s2.db);
    let mut dh = s1.dx;
    dh.add_assign(&s2.dx);
    let (dc_h, dr) = dh.hsplit(cfg.d_enc);
    dc.add_assign(&dc_h);
    let rm = p.r_m.backward(&msg, &dr);
    g.r_m.w.add_assign(&rm.dw);
    g.r_m.b.add_assign(&rm.db);
    let dpre = relu_backward(&pre_c, &dc);
    graph::encoder_backward(&xs, &dpre, &mut g.encoder);
    // the rewrite is constant but S_e(S(T,M)) still depends on the encoder
    let dpre_w = relu_backward(&pre_cw, &dmse.map(|x| -wf * x));
    graph::encoder_backward(&wm_refs, &dpre_w, &mut g.encoder);

    let bn = re_cache.into_bn();
    Ok(StepResult {
        loss,
        grads: g,
        bn,
        approx_bit_acc: correct as f64 / msg.len().max(1) as f64,
    })
}

/// Programs that can carry `n_bits`, with the capacity of those that cannot.
pub fn capacity_filter(
    trees: &[SyntaxTree],
    cfg: &ModelConfig,
    vocab: &Vocabulary,
) -> (Vec<Prepared>, Vec<(usize, Capacity)>) {
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for (i, t) in trees.iter().enumerate() {
        let prep = Prepared::new(t, cfg, vocab);
        match prep.check_capacity(cfg.n_bits) {
            Ok(()) => ok.push(prep),
            Err(_) => skipped.push((i, prep.capacity(cfg.n_bits))),
        }
    }
    (ok, skipped)
}

pub struct TrainOutput {
    pub model: ModelBundle,
    pub log: Vec<StepLog>,
    pub skipped: Vec<(usize, Capacity)>,
}

/// Train from scratch. `on_epoch` sees the model and the steps of every
/// finished epoch.
pub fn train(
    trees: &[SyntaxTree],
    cfg: &TrainConfig,
    vocab: &Vocabulary,
    mut on_epoch: impl FnMut(usize, &ModelBundle, &[StepLog]) -> Result<(), TrainError>,
) -> Result<TrainOutput, TrainError> {
    let mut model = ModelBundle::<f32>::new(cfg.model_config(), vocab, cfg.seed);
    let (progs, skipped) = capacity_filter(trees, &model.config, &model.vocab);
    if progs.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0000_7a17);
    let mut opt = AdamW::<f32>::new(cfg.lr, cfg.weight_decay);
    let weights = cfg.weights();
    let bs = cfg.batch_size.max(2);
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..progs.len()).collect();
    for epoch in 0..cfg.epochs {
        let first = log.len();
        order.shuffle(&mut rng);
        for chunk in order.chunks(bs) {
            if chunk.len() < 2 {
                continue;
            }
            let msgs: Vec<BitMessage> = chunk
                .iter()
                .map(|_| BitMessage::random(cfg.n_bits, &mut rng))
                .collect();
            let batch: Vec<(&Prepared, &BitMessage)> =
                chunk.iter().zip(&msgs).map(|(i, m)| (&progs[*i], m)).collect();
            let step = loss_and_grads(&model, &batch, &weights, &mut rng)?;
            model.params.re_bn.update_running(&step.bn, batch.len());
            let grads: Vec<(String, _, &Tensor<f32>)> = step.grads.named();
            opt.step(
                model.params.tensors_mut(),
                grads.iter().map(|(_, _, t)| *t).collect(),
            );
            log.push(StepLog {
                step: log.len(),
                l_f: step.loss.l_f,
                l_d: step.loss.l_d,
                l_r: step.loss.l_r,
                total: step.loss.total,
            });
        }
        on_epoch(epoch, &model, &log[first..])?;
    }
    Ok(TrainOutput {
        model,
        log,
        skipped,
    })
}

pub fn write_log(log: &[StepLog], out: &mut impl Write) -> std::io::Result<()> {
    for l in log {
        serde_json::to_writer(&mut *out, l)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
