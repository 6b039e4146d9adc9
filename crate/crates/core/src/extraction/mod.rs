//! Signature recovery and the statistics used to decide ownership.

use serde::{Deserialize, Serialize};

use crate::insertion::features::SparseVec;
use crate::insertion::graph::{encode_rows, re_infer};
use crate::insertion::{encode_code, BitMessage, ModelBundle};
use crate::nn::layers::sigmoid_scalar;
use crate::nn::{Scalar, Tensor};
use crate::syntax::SyntaxTree;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectError {
    #[error("messages differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty score list")]
    EmptyScores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionResult {
    pub bits: BitMessage,
    pub soft: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub p_null: f64,
    pub z_threshold: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            p_null: 0.5,
            z_threshold: 2.0,
        }
    }
}

fn from_logits<T: Scalar>(z: &[T]) -> ExtractionResult {
    let soft: Vec<f64> = z
        .iter()
        .map(|v| sigmoid_scalar(v.to_f64().unwrap_or(0.0)))
        .collect();
    let bits = soft.iter().map(|p| u8::from(*p >= 0.5)).collect();
    ExtractionResult {
        bits: BitMessage::new(bits).expect("0/1 bits"),
        soft,
    }
}

/// Decoder logits for a code feature.
pub fn decode_feature<T: Scalar>(feature: &[T], model: &ModelBundle<T>) -> Vec<T> {
    let x = Tensor::matrix(1, feature.len(), feature.to_vec());
    re_infer(&model.params, &x)
        .expect("feature width matches the decoder")
        .data
}

pub fn extract<T: Scalar>(tree: &SyntaxTree, model: &ModelBundle<T>) -> ExtractionResult {
    from_logits(&decode_feature(&encode_code(tree, model), model))
}

/// Batched extraction over precomputed sparse features.
pub fn extract_many<T: Scalar>(xs: &[&SparseVec], model: &ModelBundle<T>) -> Vec<ExtractionResult> {
    if xs.is_empty() {
        return Vec::new();
    }
    let c = encode_rows(&model.params.encoder, xs).expect("feature width matches the encoder");
    let z = re_infer(&model.params, &c).expect("decoder shapes");
    (0..z.rows()).map(|r| from_logits(z.row(r))).collect()
}

fn matches(m: &BitMessage, m2: &BitMessage) -> Result<usize, DetectError> {
    if m.len() != m2.len() {
        return Err(DetectError::LengthMismatch(m.len(), m2.len()));
    }
    Ok(m.bits().iter().zip(m2.bits()).filter(|(a, b)| a == b).count())
}

/// (N − n·p) / sqrt(n·p·(1−p)) with N the number of matching bits.
pub fn z_score(m: &BitMessage, m_prime: &BitMessage, cfg: &DetectionConfig) -> Result<f64, DetectError> {
    let n_match = matches(m, m_prime)? as f64;
    let n = m.len() as f64;
    let p = cfg.p_null;
    Ok((n_match - n * p) / (n * p * (1.0 - p)).sqrt())
}

pub fn ber(m: &BitMessage, m_prime: &BitMessage) -> Result<f64, DetectError> {
    let same = matches(m, m_prime)?;
    Ok((m.len() - same) as f64 / m.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub is_watermarked: bool,
    pub z: f64,
}

pub fn decide(m: &BitMessage, m_prime: &BitMessage, cfg: &DetectionConfig) -> Result<Detection, DetectError> {
    let z = z_score(m, m_prime, cfg)?;
    Ok(Detection {
        is_watermarked: z >= cfg.z_threshold,
        z,
    })
}

pub fn detect<T: Scalar>(
    tree: &SyntaxTree,
    m: &BitMessage,
    model: &ModelBundle<T>,
    cfg: &DetectionConfig,
) -> Result<Detection, DetectError> {
    decide(m, &extract(tree, model).bits, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auroc: f64,
    pub tpr: f64,
    pub fpr: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pass_rate: Option<f64>,
}

/// Mann–Whitney AUROC: P(pos > neg) + ½·P(pos = neg).
pub fn auroc(pos: &[f64], neg: &[f64]) -> Result<f64, DetectError> {
    if pos.is_empty() || neg.is_empty() {
        return Err(DetectError::EmptyScores);
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|v| (*v, true))
        .chain(neg.iter().map(|v| (*v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum += mean_rank * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

pub fn roc_metrics(wm_z: &[f64], clean_z: &[f64], tau: f64) -> Result<MetricsReport, DetectError> {
    let auroc = auroc(wm_z, clean_z)?;
    let rate = |v: &[f64]| v.iter().filter(|z| **z >= tau).count() as f64 / v.len() as f64;
    Ok(MetricsReport {
        auroc,
        tpr: rate(wm_z),
        fpr: rate(clean_z),
        pass_rate: None,
    })
}
