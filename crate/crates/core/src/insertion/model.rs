use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::serialize::{self, LayerKind, LayerParams};
use crate::nn::{BatchNorm, Linear, NnError, Scalar, Tensor};
use crate::transform::vocab::Vocabulary;

/// Which decoder heads may change the code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Heads {
    #[default]
    Both,
    SynOnly,
    VarOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_bits: usize,
    pub d_enc: usize,
    /// Hashed n-gram buckets.
    pub buckets: usize,
    /// S_d1 grid rows.
    pub max_sites: usize,
    /// S_d1 grid columns.
    pub max_alts: usize,
    /// Variables that get an S_d2 distribution.
    pub rename_slots: usize,
    /// Variables actually renamed per insertion.
    pub rename_top_k: usize,
    pub vocab_size: usize,
    /// Hidden width of R_e.
    pub hidden: usize,
    pub dropout: f64,
    pub heads: Heads,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_bits: 4,
            d_enc: 64,
            buckets: 4096,
            max_sites: 16,
            max_alts: 8,
            rename_slots: 4,
            rename_top_k: 2,
            vocab_size: 512,
            hidden: 32,
            dropout: 0.1,
            heads: Heads::Both,
        }
    }
}

impl ModelConfig {
    /// Dimensions of the original large-backbone model, kept for reference.
    pub fn large_scale() -> Self {
        ModelConfig {
            n_bits: 4,
            d_enc: 768,
            max_sites: 32,
            max_alts: 10,
            rename_slots: 1,
            rename_top_k: 1,
            vocab_size: 32100,
            hidden: 768,
            ..ModelConfig::default()
        }
    }

    pub fn grid(&self) -> usize {
        self.max_sites * self.max_alts
    }

    pub fn encoder_in(&self) -> usize {
        self.buckets + self.grid()
    }

    /// `(name, [out, in])` of every linear layer.
    pub fn linear_shapes(&self) -> Vec<(&'static str, [usize; 2])> {
        let d = self.d_enc;
        vec![
            ("encoder", [d, self.encoder_in()]),
            ("r_m", [d, self.n_bits]),
            ("s_d1", [self.grid(), 2 * d]),
            ("s_d2", [self.rename_slots * self.vocab_size, 2 * d]),
            ("rf_syn", [d, self.grid()]),
            ("rf_var", [d, self.vocab_size]),
            ("rf_fuse", [d, 3 * d]),
            ("re_fc1", [self.hidden, d]),
            ("re_fc2", [self.n_bits, self.hidden]),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params<T = f32> {
    pub encoder: Linear<T>,
    pub r_m: Linear<T>,
    pub s_d1: Linear<T>,
    pub s_d2: Linear<T>,
    pub rf_syn: Linear<T>,
    pub rf_var: Linear<T>,
    pub rf_fuse: Linear<T>,
    pub re_bn: BatchNorm<T>,
    pub re_fc1: Linear<T>,
    pub re_fc2: Linear<T>,
}

impl<T: Scalar> Params<T> {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lin = |[out, inp]: [usize; 2]| Linear::init(inp, out, &mut rng);
        let s = cfg.linear_shapes();
        Params {
            encoder: lin(s[0].1),
            r_m: lin(s[1].1),
            s_d1: lin(s[2].1),
            s_d2: lin(s[3].1),
            rf_syn: lin(s[4].1),
            rf_var: lin(s[5].1),
            rf_fuse: lin(s[6].1),
            re_bn: BatchNorm::new(cfg.d_enc),
            re_fc1: lin(s[7].1),
            re_fc2: lin(s[8].1),
        }
    }

    fn linears(&self) -> [(&'static str, &Linear<T>); 9] {
        [
            ("encoder", &self.encoder),
            ("r_m", &self.r_m),
            ("s_d1", &self.s_d1),
            ("s_d2", &self.s_d2),
            ("rf_syn", &self.rf_syn),
            ("rf_var", &self.rf_var),
            ("rf_fuse", &self.rf_fuse),
            ("re_fc1", &self.re_fc1),
            ("re_fc2", &self.re_fc2),
        ]
    }

    /// Trainable tensors with stable names and order.
    pub fn named(&self) -> Vec<(String, LayerKind, &Tensor<T>)> {
        let mut out = Vec::new();
        for (name, l) in self.linears() {
            out.push((format!("{name}.w"), LayerKind::Linear, &l.w));
            out.push((format!("{name}.b"), LayerKind::Linear, &l.b));
        }
        out.push(("re_bn.gamma".into(), LayerKind::BatchNorm, &self.re_bn.gamma));
        out.push(("re_bn.beta".into(), LayerKind::BatchNorm, &self.re_bn.beta));
        out
    }

    /// Same order as [`Params::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for l in [
            &mut self.encoder,
            &mut self.r_m,
            &mut self.s_d1,
            &mut self.s_d2,
            &mut self.rf_syn,
            &mut self.rf_var,
            &mut self.rf_fuse,
            &mut self.re_fc1,
            &mut self.re_fc2,
        ] {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        out.push(&mut self.re_bn.gamma);
        out.push(&mut self.re_bn.beta);
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = T::zero());
        }
        z
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        let l = |x: &Linear<T>| Linear {
            w: x.w.cast(),
            b: x.b.cast(),
        };
        Params {
            encoder: l(&self.encoder),
            r_m: l(&self.r_m),
            s_d1: l(&self.s_d1),
            s_d2: l(&self.s_d2),
            rf_syn: l(&self.rf_syn),
            rf_var: l(&self.rf_var),
            rf_fuse: l(&self.rf_fuse),
            re_bn: BatchNorm {
                gamma: self.re_bn.gamma.cast(),
                beta: self.re_bn.beta.cast(),
                running_mean: self.re_bn.running_mean.cast(),
                running_var: self.re_bn.running_var.cast(),
                eps: self.re_bn.eps,
                momentum: self.re_bn.momentum,
            },
            re_fc1: l(&self.re_fc1),
            re_fc2: l(&self.re_fc2),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, _, t)| t.all_finite())
            && self.re_bn.running_mean.all_finite()
            && self.re_bn.running_var.all_finite()
    }
}

/// Everything needed to insert and extract: configuration, rename
/// vocabulary and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle<T = f32> {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: Params<T>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    vocab: Vec<String>,
}

impl<T: Scalar> ModelBundle<T> {
    /// Fresh model. The vocabulary is cut to `config.vocab_size`.
    pub fn new(mut config: ModelConfig, vocab: &Vocabulary, seed: u64) -> Self {
        let vocab = vocab.truncated(config.vocab_size);
        config.vocab_size = vocab.len();
        let params = Params::init(&config, seed);
        ModelBundle {
            config,
            vocab,
            params,
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelBundle<U> {
        ModelBundle {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self.params.cast(),
        }
    }
}

impl ModelBundle<f32> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = Meta {
            config: self.config.clone(),
            vocab: self.vocab.words().to_vec(),
        };
        let mut layers: Vec<LayerParams> = self
            .params
            .named()
            .into_iter()
            .map(|(name, kind, t)| LayerParams {
                name,
                kind,
                tensor: t.clone(),
            })
            .collect();
        for (name, t) in [
            ("re_bn.running_mean", &self.params.re_bn.running_mean),
            ("re_bn.running_var", &self.params.re_bn.running_var),
        ] {
            layers.push(LayerParams {
                name: name.into(),
                kind: LayerKind::BatchNorm,
                tensor: t.clone(),
            });
        }
        serialize::encode(serde_json::to_value(meta).expect("meta serializes"), &layers)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let (meta, layers) = serialize::decode(bytes)?;
        let meta: Meta =
            serde_json::from_value(meta).map_err(|e| NnError::Format(format!("meta: {e}")))?;
        let vocab = Vocabulary::from_text(&meta.vocab.join("\n"));
        if vocab.len() != meta.config.vocab_size {
            return Err(NnError::Format("vocabulary size disagrees with config".into()));
        }
        let mut params = Params::<f32>::init(&meta.config, 0);
        let mut by_name: std::collections::BTreeMap<String, Tensor<f32>> =
            layers.into_iter().map(|l| (l.name, l.tensor)).collect();
        let names: Vec<String> = params.named().into_iter().map(|(n, _, _)| n).collect();
        let mut take = |name: &str, dst: &mut Tensor<f32>| -> Result<(), NnError> {
            let t = by_name
                .remove(name)
                .ok_or_else(|| NnError::Format(format!("missing tensor {name}")))?;
            dst.check_same(&t)?;
            *dst = t;
            Ok(())
        };
        for (name, dst) in names.iter().zip(params.tensors_mut()) {
            take(name, dst)?;
        }
        take("re_bn.running_mean", &mut params.re_bn.running_mean)?;
        take("re_bn.running_var", &mut params.re_bn.running_var)?;
        if let Some(extra) = by_name.keys().next() {
            return Err(NnError::Format(format!("unexpected tensor {extra}")));
        }
        Ok(ModelBundle {
            config: meta.config,
            vocab,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, crate::Error> {
        let bytes = std::fs::read(path).map_err(|e| crate::Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelBundle {
        let cfg = ModelConfig {
            d_enc: 8,
            vocab_size: 16,
            buckets: 64,
            ..ModelConfig::default()
        };
        ModelBundle::new(cfg, &Vocabulary::builtin(), 3)
    }

    #[test]
    fn large_scale_shapes() {
        let s = ModelConfig::large_scale().linear_shapes();
        let get = |n: &str| s.iter().find(|(k, _)| *k == n).unwrap().1;
        assert_eq!(get("rf_fuse"), [768, 2304]);
        assert_eq!(get("r_m"), [768, 4]);
        assert_eq!(get("s_d1"), [320, 1536]);
        assert_eq!(get("s_d2"), [32100, 1536]);
        assert_eq!(get("re_fc1")[1], 768);
        assert_eq!(get("re_fc2")[0], 4);
    }

    #[test]
    fn shapes_follow_config() {
        let m = small();
        assert_eq!(m.params.encoder.w.shape, vec![8, 64 + 128]);
        assert_eq!(m.params.s_d2.w.shape, vec![4 * 16, 16]);
        assert_eq!(m.params.re_fc2.w.shape, vec![4, 32]);
        assert_eq!(m.vocab.len(), 16);
    }

    #[test]
    fn bytes_round_trip() {
        let mut m = small();
        m.params.re_bn.running_var.data[0] = 0.25;
        let back = ModelBundle::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn same_seed_same_params() {
        assert_eq!(small(), small());
    }

    #[test]
    fn rejects_missing_tensor() {
        let m = small();
        let meta = serde_json::json!({"config": m.config, "vocab": m.vocab.words()});
        let bytes = serialize::encode(meta, &[]);
        assert!(ModelBundle::from_bytes(&bytes).is_err());
    }
}
