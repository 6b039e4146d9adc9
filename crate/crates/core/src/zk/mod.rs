//! Zero-knowledge verification of an extracted watermark.
//!
//! The statement is "the committed decoder, applied to this public code
//! embedding, yields bits whose BER against a private message is at most θ".
//! Decoder parameters and the message stay private wires.

pub mod backend;
pub mod bf16;
pub mod circuit;
pub mod compile;
pub mod decoder;
pub mod field;
pub mod fixed;

#[cfg(test)]
mod tests;

use serde::Serialize;

pub use backend::{commit_private, ProofArtifact, ProofBackend, ReferenceBackend, VerifierKey};
pub use circuit::{compose, Builder, Circuit, Gate, GateCounts};
pub use compile::{claim_outputs, compile_ber, compile_forward, theta_fixed};
pub use decoder::{fold_batchnorm, poly_relu, Activation, FoldedDecoder, QuantizedDecoder};
pub use field::Fe;
pub use fixed::FixedPointCodec;

use crate::insertion::{encode_code, BitMessage, ModelBundle};
use crate::nn::Scalar;
use crate::syntax::SyntaxTree;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ZkError {
    #[error("BatchNorm running variance is not positive on channel {channel}")]
    DegenerateVariance { channel: usize },
    #[error("{stage} needs {bits} bits, more than the field allows")]
    OverflowRisk { stage: String, bits: u32 },
    #[error("cannot compose: {outputs} outputs feed {ports} ports")]
    ArityMismatch { outputs: usize, ports: usize },
    #[error("witness violates gate {gate}")]
    UnsatisfiableWitness { gate: usize },
    #[error("expected {expected} inputs, got {got}")]
    InputLength { expected: usize, got: usize },
    #[error("threshold {0} outside [0, 1]")]
    InvalidTheta(f64),
    #[error("malformed circuit: {0}")]
    Malformed(String),
    #[error("bad proof file: {0}")]
    Format(String),
    #[error("{stage} value {value} is outside the range the circuit accepts")]
    OutOfRange { stage: &'static str, value: f64 },
    #[error("private inputs do not match the registered commitment")]
    CommitmentMismatch,
}

/// Everything the prover and verifier share for one decoder and θ.
#[derive(Debug, Clone)]
pub struct WatermarkCircuit {
    pub decoder: QuantizedDecoder,
    pub codec: FixedPointCodec,
    pub theta_fp: i64,
    /// zkFeedForward ∘ zkBER with valid_BER claimed to be 1.
    pub circuit: Circuit,
}

impl WatermarkCircuit {
    pub fn new<T: Scalar>(model: &ModelBundle<T>, theta: f64, codec: FixedPointCodec) -> Result<Self, ZkError> {
        let decoder = fold_batchnorm(&model.params)?.quantize();
        let theta_fp = theta_fixed(theta, &codec)?;
        let chain = compose(&compile_forward(&decoder, &codec)?, &compile_ber(decoder.n_bits, theta, &codec)?)?;
        Ok(WatermarkCircuit {
            decoder,
            codec,
            theta_fp,
            circuit: claim_outputs(&chain, Fe::ONE),
        })
    }

    /// Owner-side setup: commits to the decoder and `m`.
    pub fn setup(&self, m: &BitMessage, salt: &[u8; 32]) -> Result<VerifierKey, ZkError> {
        let commitment = commit_private(&self.private_inputs(m)?, salt);
        Ok(VerifierKey::for_circuit(
            &self.circuit,
            self.decoder.n_bits,
            self.theta_fp,
            self.codec.frac_bits,
            commitment,
        ))
    }

    /// Public inputs: the fixed-point embedding, then θ.
    pub fn public_inputs(&self, embedding: &[f64]) -> Result<Vec<Fe>, ZkError> {
        if embedding.len() != self.decoder.d {
            return Err(ZkError::InputLength {
                expected: self.decoder.d,
                got: embedding.len(),
            });
        }
        let mut out = Vec::with_capacity(embedding.len() + 1);
        for v in embedding {
            if !v.is_finite() || v.abs() > self.codec.input_bound {
                return Err(ZkError::OutOfRange {
                    stage: "input",
                    value: *v,
                });
            }
            out.push(Fe::from_i64(self.codec.encode(*v)));
        }
        out.push(Fe::from_i64(self.theta_fp));
        Ok(out)
    }

    /// Private inputs: decoder parameters, then M.
    pub fn private_inputs(&self, m: &BitMessage) -> Result<Vec<Fe>, ZkError> {
        if m.len() != self.decoder.n_bits {
            return Err(ZkError::InputLength {
                expected: self.decoder.n_bits,
                got: m.len(),
            });
        }
        let mut out: Vec<Fe> = self.decoder.fixed_params(&self.codec).flat().into_iter().map(Fe::from_i64).collect();
        out.extend(m.bits().iter().map(|b| Fe::new(*b as u64)));
        Ok(out)
    }

    pub fn prove(
        &self,
        backend: &dyn ProofBackend,
        vk: &VerifierKey,
        embedding: &[f64],
        m: &BitMessage,
        salt: &[u8; 32],
    ) -> Result<ProofArtifact, ZkError> {
        backend.prove(&self.circuit, vk, &self.public_inputs(embedding)?, &self.private_inputs(m)?, salt)
    }
}

/// Embedding of `tree` as the prover publishes it.
pub fn public_embedding<T: Scalar>(tree: &SyntaxTree, model: &ModelBundle<T>) -> Vec<f64> {
    encode_code(tree, model)
        .into_iter()
        .map(|v| v.to_f64().unwrap_or(f64::NAN))
        .collect()
}

/// How often the proved decoder (folded, BF16, fixed point, poly_relu)
/// agrees with the float ReLU decoder used for detection. Embeddings the
/// circuit rejects count as disagreements and are tallied separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgreementReport {
    pub samples: usize,
    pub bit_agreement: f64,
    pub word_agreement: f64,
    pub out_of_range: usize,
}

pub fn agreement<T: Scalar>(
    model: &ModelBundle<T>,
    embeddings: &[Vec<f64>],
    codec: &FixedPointCodec,
) -> Result<AgreementReport, ZkError> {
    let folded = fold_batchnorm(&model.params)?;
    let q = folded.quantize();
    let (mut bits, mut words, mut total, mut out_of_range) = (0usize, 0usize, 0usize, 0usize);
    for x in embeddings {
        let reference: Vec<u8> = folded.forward(x, Activation::Relu).iter().map(|z| u8::from(*z >= 0.0)).collect();
        total += reference.len();
        let proved = match q.infer(x, codec) {
            Ok(o) => o.bits,
            Err(ZkError::OutOfRange { .. }) => {
                out_of_range += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let same = reference.iter().zip(&proved).filter(|(a, b)| a == b).count();
        bits += same;
        words += usize::from(same == reference.len());
    }
    Ok(AgreementReport {
        samples: embeddings.len(),
        bit_agreement: bits as f64 / total.max(1) as f64,
        word_agreement: words as f64 / embeddings.len().max(1) as f64,
        out_of_range,
    })
}
