//! The insertion model: predicts per-site choices and renames from code and
//! message features, then rewrites the code accordingly.

pub mod features;
pub mod graph;
pub mod model;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{NnError, Scalar, Tensor};
use crate::syntax::scope::name_key;
use crate::syntax::SyntaxTree;
use crate::transform::vocab::Vocabulary;
use crate::transform::{apply_with, Analysis, TransformError, TransformPlan};
use features::{code_features, grid_sites, SparseVec};
pub use model::{Heads, ModelBundle, ModelConfig, Params};

#[derive(Debug, thiserror::Error)]
pub enum InsertError {
    #[error("program has {sites} usable sites but the message needs {required}")]
    Capacity { sites: usize, required: usize },
    #[error("message has {got} bits, model expects {expected}")]
    MessageLength { expected: usize, got: usize },
    #[error("invalid bit string `{0}`")]
    InvalidBits(String),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// A fixed-length bit string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BitMessage(Vec<u8>);

impl BitMessage {
    pub fn new(bits: Vec<u8>) -> Result<Self, InsertError> {
        if bits.iter().any(|b| *b > 1) {
            return Err(InsertError::InvalidBits(format!("{bits:?}")));
        }
        Ok(BitMessage(bits))
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        BitMessage((0..n).map(|_| rng.gen_range(0..2u8)).collect())
    }

    /// All 2ⁿ messages in counting order, most significant bit first.
    pub fn all(n: usize) -> Vec<Self> {
        (0..1u32 << n)
            .map(|v| BitMessage((0..n).map(|i| ((v >> (n - 1 - i)) & 1) as u8).collect()))
            .collect()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn complement(&self) -> Self {
        BitMessage(self.0.iter().map(|b| 1 - b).collect())
    }

    pub fn as_floats<T: Scalar>(&self) -> Vec<T> {
        self.0.iter().map(|b| T::c(*b as f64)).collect()
    }
}

impl FromStr for BitMessage {
    type Err = InsertError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || !s.chars().all(|c| c == '0' || c == '1') {
            return Err(InsertError::InvalidBits(s.to_string()));
        }
        Ok(BitMessage(s.bytes().map(|b| b - b'0').collect()))
    }
}

impl TryFrom<String> for BitMessage {
    type Error = InsertError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BitMessage> for String {
    fn from(m: BitMessage) -> String {
        m.to_string()
    }
}

impl fmt::Display for BitMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenameSlot {
    pub site: usize,
    pub var: String,
}

/// A program with everything insertion needs precomputed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub tree: SyntaxTree,
    pub analysis: Analysis,
    /// Site ids of the grid slots the syntactic head controls.
    pub slots: Vec<usize>,
    pub syn_mask: Vec<bool>,
    pub renames: Vec<RenameSlot>,
    pub var_mask: Vec<bool>,
    pub features: SparseVec,
    alt_counts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capacity {
    pub sites: usize,
    pub required: usize,
}

impl Prepared {
    pub fn new(tree: &SyntaxTree, cfg: &ModelConfig, vocab: &Vocabulary) -> Self {
        let analysis = Analysis::new(tree);
        let features = code_features(tree, &analysis, cfg.buckets, cfg.max_sites, cfg.max_alts);
        let mut slots = Vec::new();
        let mut syn_mask = vec![false; cfg.grid()];
        let mut alt_counts = Vec::new();
        if cfg.heads != Heads::VarOnly {
            for (j, s) in grid_sites(&analysis, cfg.max_sites).into_iter().enumerate() {
                for a in &s.alternatives {
                    if *a < cfg.max_alts {
                        syn_mask[j * cfg.max_alts + a] = true;
                    }
                }
                slots.push(s.id);
                alt_counts.push(s.alternatives.len());
            }
        }
        let v = vocab.len();
        let mut renames = Vec::new();
        let mut var_mask = vec![false; cfg.rename_slots * v];
        if cfg.heads != Heads::SynOnly && v > 0 {
            let none = BTreeSet::new();
            for s in analysis.rename_sites() {
                if renames.len() == cfg.rename_slots {
                    break;
                }
                let var = s.variable.clone().expect("rename site has a variable");
                let k = renames.len();
                let mut any = false;
                for (j, w) in vocab.words().iter().enumerate() {
                    if analysis.rename_allowed(&var, w, &none) {
                        var_mask[k * v + j] = true;
                        any = true;
                    }
                }
                if any {
                    renames.push(RenameSlot { site: s.id, var });
                    alt_counts.push(s.alternatives.len());
                } else {
                    var_mask[k * v..(k + 1) * v].iter_mut().for_each(|m| *m = false);
                }
            }
        }
        Prepared {
            tree: tree.clone(),
            analysis,
            slots,
            syn_mask,
            renames,
            var_mask,
            features,
            alt_counts,
        }
    }

    /// Usable sites against ⌈n_bits / log2(geometric-mean alternatives)⌉.
    pub fn capacity(&self, n_bits: usize) -> Capacity {
        let sites = self.alt_counts.len();
        if sites == 0 {
            return Capacity {
                sites,
                required: n_bits.max(1),
            };
        }
        let mean_bits =
            self.alt_counts.iter().map(|a| (*a as f64).log2()).sum::<f64>() / sites as f64;
        Capacity {
            sites,
            required: (n_bits as f64 / mean_bits).ceil() as usize,
        }
    }

    pub fn check_capacity(&self, n_bits: usize) -> Result<(), InsertError> {
        let c = self.capacity(n_bits);
        if c.sites == 0 || c.sites < c.required {
            return Err(InsertError::Capacity {
                sites: c.sites,
                required: c.required,
            });
        }
        Ok(())
    }
}

/// Per-slot distributions. `syn[j]` has `max_alts` entries for grid slot
/// `j`; `var[k]` has one entry per vocabulary word for rename slot `k`;
/// `selected` lists the rename slots that will be applied.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteDistributions<T = f32> {
    pub syn: Vec<Vec<T>>,
    pub var: Vec<Vec<T>>,
    pub selected: Vec<usize>,
}

impl<T: Scalar> SiteDistributions<T> {
    /// Read the used slots out of full-width rows.
    pub fn from_rows(prep: &Prepared, cfg: &ModelConfig, syn: &[T], var: &[T], top_k: usize) -> Self {
        let a = cfg.max_alts;
        let v = var.len() / cfg.rename_slots.max(1);
        let syn: Vec<Vec<T>> = (0..prep.slots.len())
            .map(|j| syn[j * a..(j + 1) * a].to_vec())
            .collect();
        let var: Vec<Vec<T>> = (0..prep.renames.len())
            .map(|k| var[k * v..(k + 1) * v].to_vec())
            .collect();
        let selected = select_renames(&var, top_k);
        SiteDistributions { syn, var, selected }
    }

    /// Padded syn grid and pooled variable distribution.
    pub fn flatten(&self, cfg: &ModelConfig, v: usize) -> (Vec<T>, Vec<T>) {
        let mut syn = vec![T::zero(); cfg.grid()];
        for (j, row) in self.syn.iter().enumerate().take(cfg.max_sites) {
            syn[j * cfg.max_alts..j * cfg.max_alts + row.len()].copy_from_slice(row);
        }
        let mut pooled = vec![T::zero(); v];
        if !self.selected.is_empty() {
            let k = T::c(1.0 / self.selected.len() as f64);
            for s in &self.selected {
                for (p, x) in pooled.iter_mut().zip(&self.var[*s]) {
                    *p = *p + *x * k;
                }
            }
        }
        (syn, pooled)
    }
}

fn argmax<T: Scalar>(row: &[T]) -> (usize, T) {
    let mut best = (0, T::neg_infinity());
    for (i, v) in row.iter().enumerate() {
        if *v > best.1 {
            best = (i, *v);
        }
    }
    best
}

/// The `top_k` rename slots with the most confident distributions.
pub fn select_renames<T: Scalar>(var: &[Vec<T>], top_k: usize) -> Vec<usize> {
    let mut conf: Vec<(usize, T)> = var
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().any(|v| *v > T::zero()))
        .map(|(k, row)| (k, argmax(row).1))
        .collect();
    conf.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    let mut out: Vec<usize> = conf.into_iter().take(top_k).map(|(k, _)| k).collect();
    out.sort_unstable();
    out
}

/// Argmax plan: best alternative per slot and best free word per selected
/// rename slot.
pub fn plan_from<T: Scalar>(
    prep: &Prepared,
    d: &SiteDistributions<T>,
    vocab: &Vocabulary,
) -> TransformPlan {
    let mut plan = TransformPlan::default();
    for (j, row) in d.syn.iter().enumerate() {
        let site = &prep.analysis.sites[prep.slots[j]];
        let best = site
            .alternatives
            .iter()
            .copied()
            .filter(|a| *a < row.len())
            .max_by(|a, b| {
                row[*a]
                    .partial_cmp(&row[*b])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.cmp(a))
            });
        if let Some(alt) = best {
            plan.choices.insert(site.id, alt);
        }
    }
    let mut taken = BTreeSet::new();
    for k in &d.selected {
        let row = &d.var[*k];
        let var = &prep.renames[*k].var;
        let mut order: Vec<usize> = (0..row.len()).filter(|j| row[*j] > T::zero()).collect();
        order.sort_by(|a, b| {
            row[*b]
                .partial_cmp(&row[*a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(b))
        });
        if let Some(j) = order
            .into_iter()
            .find(|j| prep.analysis.rename_allowed(var, vocab.word(*j), &taken))
        {
            taken.insert(name_key(vocab.word(j)));
            plan.renames.insert(var.clone(), vocab.word(j).to_string());
        }
    }
    plan
}

fn row<T: Scalar>(v: &[T]) -> Tensor<T> {
    Tensor::matrix(1, v.len(), v.to_vec())
}

/// Code feature of a tree: the shared encoder applied to its hashed
/// features.
pub fn encode_code<T: Scalar>(tree: &SyntaxTree, model: &ModelBundle<T>) -> Vec<T> {
    let cfg = &model.config;
    let analysis = Analysis::new(tree);
    let x = code_features(tree, &analysis, cfg.buckets, cfg.max_sites, cfg.max_alts);
    encode_sparse(&x, model)
}

pub fn encode_sparse<T: Scalar>(x: &SparseVec, model: &ModelBundle<T>) -> Vec<T> {
    graph::encode_rows(&model.params.encoder, &[x])
        .expect("features match the encoder width")
        .data
}

pub fn embed_message<T: Scalar>(m: &BitMessage, model: &ModelBundle<T>) -> Result<Vec<T>, InsertError> {
    check_len(m, model)?;
    Ok(model.params.r_m.forward(&row(&m.as_floats::<T>()))?.data)
}

fn check_len<T>(m: &BitMessage, model: &ModelBundle<T>) -> Result<(), InsertError> {
    if m.len() != model.config.n_bits {
        return Err(InsertError::MessageLength {
            expected: model.config.n_bits,
            got: m.len(),
        });
    }
    Ok(())
}

/// Distributions for an already prepared program. Returns the code feature
/// alongside.
pub fn predict_prepared<T: Scalar>(
    prep: &Prepared,
    m: &BitMessage,
    model: &ModelBundle<T>,
) -> Result<(Vec<T>, SiteDistributions<T>), InsertError> {
    check_len(m, model)?;
    let cfg = &model.config;
    let p = &model.params;
    let c = graph::encode_rows(&p.encoder, &[&prep.features])?;
    let r = p.r_m.forward(&row(&m.as_floats::<T>()))?;
    let h = c.hcat(&r);
    let syn = graph::group_softmax(&p.s_d1.forward(&h)?, &[&prep.syn_mask], cfg.max_alts);
    let var = graph::group_softmax(&p.s_d2.forward(&h)?, &[&prep.var_mask], model.vocab.len().max(1));
    let d = SiteDistributions::from_rows(prep, cfg, &syn.data, &var.data, cfg.rename_top_k);
    Ok((c.data, d))
}

pub fn predict<T: Scalar>(
    tree: &SyntaxTree,
    m: &BitMessage,
    model: &ModelBundle<T>,
) -> Result<SiteDistributions<T>, InsertError> {
    let prep = Prepared::new(tree, &model.config, &model.vocab);
    if prep.alt_counts.is_empty() {
        return Err(InsertError::Capacity {
            sites: 0,
            required: model.config.n_bits.max(1),
        });
    }
    Ok(predict_prepared(&prep, m, model)?.1)
}

/// Gaussian noise on every distribution, clamped and renormalised.
pub fn perturb<T: Scalar, R: Rng + ?Sized>(d: &SiteDistributions<T>, sigma_p: f64, rng: &mut R) -> SiteDistributions<T> {
    let mut noisy = |rows: &Vec<Vec<T>>| -> Vec<Vec<T>> {
        rows.iter()
            .map(|r| graph::perturb_groups(&self::row(r), r.len().max(1), sigma_p, rng).0.data)
            .collect()
    };
    SiteDistributions {
        syn: noisy(&d.syn),
        var: noisy(&d.var),
        selected: d.selected.clone(),
    }
}

#[derive(Debug, Clone)]
pub struct Insertion<T = f32> {
    pub tree: SyntaxTree,
    pub plan: TransformPlan,
    pub dists: SiteDistributions<T>,
}

pub fn insert_prepared<T: Scalar>(
    prep: &Prepared,
    m: &BitMessage,
    model: &ModelBundle<T>,
) -> Result<Insertion<T>, InsertError> {
    prep.check_capacity(model.config.n_bits)?;
    let (_, dists) = predict_prepared(prep, m, model)?;
    let plan = plan_from(prep, &dists, &model.vocab);
    let tree = apply_with(&prep.tree, &prep.analysis, &plan)?;
    Ok(Insertion { tree, plan, dists })
}

/// Watermark `tree` with `m`.
pub fn insert<T: Scalar>(
    tree: &SyntaxTree,
    m: &BitMessage,
    model: &ModelBundle<T>,
) -> Result<Insertion<T>, InsertError> {
    insert_prepared(&Prepared::new(tree, &model.config, &model.vocab), m, model)
}

/// R_f's estimate of the watermarked code feature.
pub fn approximate_feature<T: Scalar>(
    code_feat: &[T],
    d: &SiteDistributions<T>,
    model: &ModelBundle<T>,
) -> Result<Vec<T>, InsertError> {
    let cfg = &model.config;
    if code_feat.len() != cfg.d_enc {
        return Err(NnError::ShapeMismatch {
            expected: vec![cfg.d_enc],
            got: vec![code_feat.len()],
        }
        .into());
    }
    let v = model.vocab.len();
    if d.syn.len() > cfg.max_sites
        || d.syn.iter().any(|r| r.len() != cfg.max_alts)
        || d.var.iter().any(|r| r.len() != v)
        || d.selected.iter().any(|k| *k >= d.var.len())
    {
        return Err(NnError::ShapeMismatch {
            expected: vec![cfg.max_sites, cfg.max_alts, v],
            got: vec![d.syn.len(), d.syn.first().map_or(0, Vec::len), d.var.first().map_or(0, Vec::len)],
        }
        .into());
    }
    let (syn, pooled) = d.flatten(cfg, v);
    let (f, _) = graph::rf_forward(&model.params, &row(code_feat), &row(&syn), &row(&pooled))?;
    Ok(f.data)
}
