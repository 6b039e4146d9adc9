//! Central finite-difference check of the analytic training gradients.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{loss_and_grads, LossWeights};
use crate::insertion::{BitMessage, InsertError, ModelBundle, ModelConfig, Prepared};

/// Denominator floor of the relative error. Central differences of a loss
/// near 1 carry roundoff around 1e-12 at h = 1e-4, so smaller gradients
/// cannot be resolved to 1e-4 relative accuracy.
pub const DENOM_FLOOR: f64 = 1e-7;
pub const DEFAULT_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheck {
    pub entries: Vec<GradCheckEntry>,
}

/// Submodule owning a parameter tensor.
pub fn submodule(tensor: &str) -> &'static str {
    let head = tensor.split('.').next().unwrap_or("");
    match head {
        "encoder" => "encoder",
        "r_m" => "R_m",
        "s_d1" => "S_d1",
        "s_d2" => "S_d2",
        h if h.starts_with("rf_") => "R_f",
        h if h.starts_with("re_") => "R_e",
        _ => "other",
    }
}

/// |a − n| / max(|a|, |n|, DENOM_FLOOR).
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(DENOM_FLOOR)
}

impl GradCheck {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_err).fold(0.0, f64::max)
    }

    /// (entries checked, max rel err) per submodule.
    pub fn by_submodule(&self) -> BTreeMap<&'static str, (usize, f64)> {
        let mut out: BTreeMap<&'static str, (usize, f64)> = BTreeMap::new();
        for e in &self.entries {
            let s = out.entry(submodule(&e.tensor)).or_default();
            s.0 += 1;
            s.1 = s.1.max(e.rel_err);
        }
        out
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

/// Small model used for exhaustive checks.
pub fn micro_config(n_bits: usize) -> ModelConfig {
    ModelConfig {
        n_bits,
        d_enc: 8,
        buckets: 128,
        rename_slots: 4,
        rename_top_k: 2,
        vocab_size: 32,
        hidden: 8,
        ..ModelConfig::default()
    }
}

/// Compares analytic gradients of the total loss with central differences
/// of step `h`. Dropout and perturbation noise are replayed from `seed` for
/// every evaluation. `per_tensor` limits the entries checked in each tensor
/// (largest analytic gradients first, then random ones); `None` checks all.
pub fn gradient_check(
    model: &ModelBundle<f64>,
    batch: &[(&Prepared, &BitMessage)],
    w: &LossWeights,
    seed: u64,
    h: f64,
    per_tensor: Option<usize>,
) -> Result<GradCheck, InsertError> {
    let total = |m: &ModelBundle<f64>| -> Result<f64, InsertError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(loss_and_grads(m, batch, w, &mut rng)?.loss.total)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let analytic = loss_and_grads(model, batch, w, &mut rng)?.grads;
    let names: Vec<(String, Vec<f64>)> = analytic
        .named()
        .into_iter()
        .map(|(n, _, t)| (n, t.data.clone()))
        .collect();
    let mut pick = ChaCha8Rng::seed_from_u64(seed ^ 0x9c);
    let mut probe = model.clone();
    let mut out = GradCheck::default();
    for (k, (name, grad)) in names.iter().enumerate() {
        let idx: Vec<usize> = match per_tensor {
            Some(n) if n < grad.len() => {
                let mut order: Vec<usize> = (0..grad.len()).collect();
                order.sort_by(|a, b| grad[*b].abs().total_cmp(&grad[*a].abs()));
                let mut chosen: Vec<usize> = order[..n / 2].to_vec();
                for i in sample(&mut pick, grad.len(), n) {
                    if chosen.len() == n {
                        break;
                    }
                    if !chosen.contains(&i) {
                        chosen.push(i);
                    }
                }
                chosen
            }
            _ => (0..grad.len()).collect(),
        };
        for i in idx {
            let orig = probe.params.tensors_mut()[k].data[i];
            probe.params.tensors_mut()[k].data[i] = orig + h;
            let up = total(&probe)?;
            probe.params.tensors_mut()[k].data[i] = orig - h;
            let down = total(&probe)?;
            probe.params.tensors_mut()[k].data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            out.entries.push(GradCheckEntry {
                tensor: name.clone(),
                index: i,
                analytic: grad[i],
                numeric,
                rel_err: rel_err(grad[i], numeric),
            });
        }
    }
    Ok(out)
}
