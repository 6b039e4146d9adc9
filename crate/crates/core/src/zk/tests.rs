use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backend::{ProofArtifact, ProofBackend, ReferenceBackend, VerifierKey};
use super::circuit::{compose, Builder, Circuit, Hint};
use super::compile::{affine, claim_outputs, compile_ber, compile_forward};
use super::decoder::{
    calibration_table, fold_batchnorm, poly_relu, unfolded_forward, Activation, FoldedDecoder, QuantizedDecoder,
};
use super::field::Fe;
use super::fixed::FixedPointCodec;
use super::{WatermarkCircuit, ZkError};
use crate::extraction::ber;
use crate::insertion::{BitMessage, ModelBundle, ModelConfig};
use crate::transform::vocab::Vocabulary;

fn fe(v: &[i64]) -> Vec<Fe> {
    v.iter().map(|x| Fe::from_i64(*x)).collect()
}

fn bits(v: &[Fe]) -> Vec<u8> {
    v.iter().map(|x| x.value() as u8).collect()
}

fn random_input(d: usize, rng: &mut ChaCha8Rng) -> Vec<i64> {
    (0..d).map(|_| rng.gen_range(-(2 << 16)..(2 << 16))).collect()
}

fn circuit_bits(c: &Circuit, dec: &QuantizedDecoder, codec: &FixedPointCodec, x: &[i64]) -> Vec<u8> {
    let w = c
        .evaluate(&fe(x), &fe(&dec.fixed_params(codec).flat()), &[])
        .unwrap();
    c.check(&w).unwrap();
    bits(&c.read(&w, &c.outputs))
}

fn small_model(seed: u64) -> ModelBundle<f32> {
    let cfg = ModelConfig {
        d_enc: 16,
        hidden: 8,
        buckets: 64,
        vocab_size: 16,
        ..ModelConfig::default()
    };
    ModelBundle::new(cfg, &Vocabulary::builtin(), seed)
}

#[test]
fn poly_relu_examples() {
    assert_eq!(poly_relu(0.0), 0.0);
    assert_eq!(poly_relu(2.0), 6.0);
    assert_eq!(poly_relu(-1.0), 0.0);
}

#[test]
fn calibration_over_unit_interval() {
    // |x² + x − relu(x)| is x² on [0, 1] and |x² + x| ≤ 1/4 on [−1, 0]
    let rows = calibration_table(-1.0, 1.0, 1e-4, 8);
    let max = rows.iter().map(|r| r.max_abs_err).fold(0.0, f64::max);
    assert!((max - 1.0).abs() < 1e-9);
    for r in rows.iter().filter(|r| r.hi <= 0.0) {
        assert!(r.max_abs_err <= 0.25 + 1e-12, "{r:?}");
    }
    assert!(rows[4].max_abs_err < 0.0626 && rows[4].max_abs_err > 0.0624);
}

#[test]
fn calibration_table_matches_reference() {
    // independently computed on a 0.001 grid over [-4, 4]
    let want = [
        (12.0, 8.8363335),
        (6.0, 3.8353335),
        (2.0, 0.8343335),
        (0.25, 0.1666665),
        (0.998001, 0.3328335),
        (3.996001, 2.3318335),
        (8.994001, 6.3308335),
        (16.0, 12.3335),
    ];
    let rows = calibration_table(-4.0, 4.0, 1e-3, 8);
    for (r, (mx, mean)) in rows.iter().zip(want) {
        assert!((r.max_abs_err - mx).abs() < 1e-6, "{r:?}");
        assert!((r.mean_abs_err - mean).abs() < 1e-6, "{r:?}");
    }
}

#[test]
fn identity_batchnorm_folds_to_identity() {
    let mut m = small_model(1);
    let bn = &mut m.params.re_bn;
    bn.gamma.data.iter_mut().for_each(|v| *v = 1.0);
    bn.beta.data.iter_mut().for_each(|v| *v = 0.0);
    bn.running_mean.data.iter_mut().for_each(|v| *v = 0.0);
    bn.running_var.data.iter_mut().for_each(|v| *v = 1.0);
    bn.eps = 0.0;
    let f = fold_batchnorm(&m.params).unwrap();
    let w: Vec<f64> = m.params.re_fc1.w.data.iter().map(|v| *v as f64).collect();
    let b: Vec<f64> = m.params.re_fc1.b.data.iter().map(|v| *v as f64).collect();
    assert_eq!(f.w1, w);
    assert_eq!(f.b1, b);
}

#[test]
fn folded_matches_unfolded() {
    let mut m = small_model(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bn = &mut m.params.re_bn;
    for i in 0..bn.gamma.data.len() {
        bn.gamma.data[i] = rng.gen_range(0.5..2.0);
        bn.beta.data[i] = rng.gen_range(-1.0..1.0);
        bn.running_mean.data[i] = rng.gen_range(-1.0..1.0);
        bn.running_var.data[i] = rng.gen_range(0.05..3.0);
    }
    let f = fold_batchnorm(&m.params).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-3.0..3.0)).collect();
        for act in [Activation::Relu, Activation::Poly] {
            let a = unfolded_forward(&m.params, &x, act);
            let b = f.forward(&x, act);
            for (u, v) in a.iter().zip(&b) {
                worst = worst.max((u - v).abs());
            }
        }
    }
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn zero_variance_is_rejected() {
    let mut m = small_model(4);
    m.params.re_bn.running_var.data[3] = 0.0;
    assert_eq!(fold_batchnorm(&m.params), Err(ZkError::DegenerateVariance { channel: 3 }));
}

#[test]
fn identity_affine_passes_inputs_through() {
    let (d, f) = (8usize, 16u32);
    let mut b = Builder::new();
    let x: Vec<_> = (0..d).map(|_| b.public_input()).collect();
    let one = b.constant(Fe::new(1 << f));
    let zero = b.constant(Fe::ZERO);
    let w: Vec<_> = (0..d * d).map(|k| if k / d == k % d { one } else { zero }).collect();
    let bias = vec![zero; d];
    for y in affine(&mut b, &w, &bias, &x, f, 24) {
        b.output(y);
    }
    let c = b.finish();
    c.validate().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let v: Vec<i64> = (0..d).map(|_| rng.gen_range(-(1 << 22)..(1 << 22))).collect();
        let w = c.evaluate(&fe(&v), &[], &[]).unwrap();
        c.check(&w).unwrap();
        let out: Vec<i64> = c.read(&w, &c.outputs).iter().map(|x| x.signed() as i64).collect();
        assert_eq!(out, v);
    }
}

#[test]
fn circuit_matches_plaintext_quantized_inference() {
    let codec = FixedPointCodec::default();
    for d in [32, 64] {
        let dec = FoldedDecoder::random(d, 16, 4, d as u64).quantize();
        let c = compile_forward(&dec, &codec).unwrap();
        c.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let x = random_input(d, &mut rng);
            assert_eq!(circuit_bits(&c, &dec, &codec, &x), dec.infer_fixed(&x, &codec).unwrap().bits);
        }
    }
}

#[test]
fn out_of_range_inputs_fail_on_both_paths() {
    let codec = FixedPointCodec::default();
    let dec = FoldedDecoder::random(8, 4, 4, 7).quantize();
    let c = compile_forward(&dec, &codec).unwrap();
    let mut x = vec![0i64; 8];
    x[2] = codec.encode(40.0);
    let r = dec.infer_fixed(&x, &codec);
    assert!(matches!(r, Err(ZkError::OutOfRange { stage: "input", .. })), "{r:?}");
    let w = c.evaluate(&fe(&x), &fe(&dec.fixed_params(&codec).flat()), &[]).unwrap();
    assert!(c.check(&w).is_err());
}

#[test]
fn gate_count_is_linear_in_width() {
    let codec = FixedPointCodec::default();
    let counts: Vec<usize> = [32, 64, 128]
        .iter()
        .map(|d| {
            compile_forward(&FoldedDecoder::random(*d, 16, 4, 8).quantize(), &codec)
                .unwrap()
                .counts()
        })
        .map(|c| c.total - c.constant)
        .collect();
    // constants are shared, so only the other gates grow with d
    let (a, b) = (counts[1] - counts[0], counts[2] - counts[1]);
    assert_eq!(b, 2 * a, "{counts:?}");
}

fn ber_valid(c: &Circuit, theta_fp: i64, m: &[u8], m2: &[u8]) -> Result<Fe, ZkError> {
    let w = c.evaluate(&fe(&[theta_fp]), &fe(&m.iter().map(|b| *b as i64).collect::<Vec<_>>()), &fe(&m2.iter().map(|b| *b as i64).collect::<Vec<_>>()))?;
    c.check(&w)?;
    Ok(c.read(&w, &c.outputs)[0])
}

fn nibble(v: usize) -> Vec<u8> {
    (0..4).map(|i| ((v >> i) & 1) as u8).collect()
}

#[test]
fn ber_circuit_matches_brute_force() {
    let codec = FixedPointCodec::default();
    for theta in [0.0, 0.25, 0.5] {
        let c = compile_ber(4, theta, &codec).unwrap();
        c.validate().unwrap();
        let t = codec.encode(theta);
        for a in 0..16 {
            for b in 0..16 {
                let (m, m2) = (nibble(a), nibble(b));
                let truth = ber(&BitMessage::new(m.clone()).unwrap(), &BitMessage::new(m2.clone()).unwrap()).unwrap() <= theta;
                assert_eq!(ber_valid(&c, t, &m, &m2).unwrap(), Fe::new(truth as u64), "{theta} {a} {b}");
            }
        }
    }
}

#[test]
fn ber_circuit_examples() {
    let codec = FixedPointCodec::default();
    let c = compile_ber(4, 0.25, &codec).unwrap();
    let t = codec.encode(0.25);
    assert_eq!(ber_valid(&c, t, &[0, 0, 0, 0], &[1, 1, 1, 1]).unwrap(), Fe::ZERO);
    for theta in [0.0, 0.1, 1.0] {
        let c = compile_ber(4, theta, &codec).unwrap();
        assert_eq!(ber_valid(&c, codec.encode(theta), &[1, 0, 1, 1], &[1, 0, 1, 1]).unwrap(), Fe::ONE);
    }
    // θ is pinned: a different public θ breaks the witness
    assert!(ber_valid(&c, codec.encode(1.0), &[0, 0, 0, 0], &[1, 1, 1, 1]).is_err());
    assert_eq!(compile_ber(4, 1.5, &codec).unwrap_err(), ZkError::InvalidTheta(1.5));
}

#[test]
fn claimed_validity_is_unsatisfiable_above_theta() {
    let codec = FixedPointCodec::default();
    let mut cases = 0;
    for theta in [0.0, 0.25, 0.5] {
        let c = claim_outputs(&compile_ber(4, theta, &codec).unwrap(), Fe::ONE);
        let t = codec.encode(theta);
        let sign = c
            .hint_wires()
            .into_iter()
            .find(|(h, _)| *h == Hint::NonNegative)
            .unwrap()
            .1;
        for a in 0..16 {
            for b in 0..16 {
                let (m, m2) = (nibble(a), nibble(b));
                if ber(&BitMessage::new(m.clone()).unwrap(), &BitMessage::new(m2.clone()).unwrap()).unwrap() <= theta {
                    continue;
                }
                cases += 1;
                assert!(matches!(ber_valid(&c, t, &m, &m2), Err(ZkError::UnsatisfiableWitness { .. })));
                // a dishonest comparison bit
                for forged in [Fe::ONE, Fe::ZERO, Fe::new(2)] {
                    let forced = HashMap::from([(sign, forged)]);
                    let w = c
                        .evaluate_forced(&fe(&[t]), &fe(&m.iter().map(|b| *b as i64).collect::<Vec<_>>()), &fe(&m2.iter().map(|b| *b as i64).collect::<Vec<_>>()), &forced)
                        .unwrap();
                    assert!(c.check(&w).is_err());
                }
            }
        }
    }
    assert_eq!(cases, 240 + 176 + 80);
}

#[test]
fn composed_circuit_equals_piped_evaluation() {
    let codec = FixedPointCodec::default();
    let dec = FoldedDecoder::random(32, 8, 4, 9).quantize();
    let fwd = compile_forward(&dec, &codec).unwrap();
    let ber_c = compile_ber(4, 0.25, &codec).unwrap();
    let both = compose(&fwd, &ber_c).unwrap();
    both.validate().unwrap();
    assert_eq!(both.public.len(), 32 + 1);
    assert_eq!(both.private.len(), dec.param_count() + 4);
    assert!(both.ports.is_empty());
    assert_eq!(both.outputs.len(), 1);
    let params = fe(&dec.fixed_params(&codec).flat());
    let theta = Fe::from_i64(codec.encode(0.25));
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..1000 {
        let x = fe(&random_input(32, &mut rng));
        let m: Vec<Fe> = (0..4).map(|_| Fe::new(rng.gen_range(0..2))).collect();
        let w1 = fwd.evaluate(&x, &params, &[]).unwrap();
        let m2 = fwd.read(&w1, &fwd.outputs);
        let w2 = ber_c.evaluate(&[theta], &m, &m2).unwrap();
        let piped = ber_c.read(&w2, &ber_c.outputs);
        let public: Vec<Fe> = x.iter().copied().chain([theta]).collect();
        let private: Vec<Fe> = params.iter().copied().chain(m).collect();
        let w = both.evaluate(&public, &private, &[]).unwrap();
        both.check(&w).unwrap();
        assert_eq!(both.read(&w, &both.outputs), piped);
    }
}

struct Fixture {
    wc: WatermarkCircuit,
    vk: VerifierKey,
    proof: ProofArtifact,
    embedding: Vec<f64>,
    m: BitMessage,
}

const SALT: [u8; 32] = [42; 32];

fn fixture() -> Fixture {
    let model = small_model(11);
    let wc = WatermarkCircuit::new(&model, 0.25, FixedPointCodec::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let embedding: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..1.5)).collect();
    let m = BitMessage::new(wc.decoder.infer(&embedding, &wc.codec).unwrap().bits).unwrap();
    let vk = wc.setup(&m, &SALT).unwrap();
    let proof = wc.prove(&ReferenceBackend, &vk, &embedding, &m, &SALT).unwrap();
    Fixture {
        wc,
        vk,
        proof,
        embedding,
        m,
    }
}

#[test]
fn honest_proof_verifies_and_round_trips() {
    let f = fixture();
    assert_eq!(f.proof.claimed, 1);
    assert!(ReferenceBackend.verify(&f.proof, &f.vk));
    let (pb, vb) = (f.proof.to_bytes(), f.vk.to_bytes());
    assert_eq!(ProofArtifact::from_bytes(&pb).unwrap(), f.proof);
    assert_eq!(VerifierKey::from_bytes(&vb).unwrap(), f.vk);
    assert!(ReferenceBackend.verify_bytes(&pb, &vb));
    assert_eq!(&pb[..4], b"RMPF");
    assert_eq!(&vb[..4], b"RMVK");
    // proving is deterministic
    let again = f.wc.prove(&ReferenceBackend, &f.vk, &f.embedding, &f.m, &SALT).unwrap();
    assert_eq!(again, f.proof);
}

#[test]
fn stripped_watermark_cannot_be_proved() {
    let f = fixture();
    let wrong = f.m.complement();
    let vk = f.wc.setup(&wrong, &SALT).unwrap();
    assert!(matches!(
        f.wc.prove(&ReferenceBackend, &vk, &f.embedding, &wrong, &SALT),
        Err(ZkError::UnsatisfiableWitness { .. })
    ));
}

#[test]
fn prover_must_use_the_registered_message() {
    let f = fixture();
    let other = f.m.complement();
    assert_eq!(
        f.wc.prove(&ReferenceBackend, &f.vk, &f.embedding, &other, &SALT),
        Err(ZkError::CommitmentMismatch)
    );
    assert_eq!(
        f.wc.prove(&ReferenceBackend, &f.vk, &f.embedding, &f.m, &[0; 32]),
        Err(ZkError::CommitmentMismatch)
    );
}

#[test]
fn single_byte_tampers_fail_verification() {
    let f = fixture();
    let (pb, vb) = (f.proof.to_bytes(), f.vk.to_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for k in 0..100 {
        let (mut p, mut v) = (pb.clone(), vb.clone());
        let flip: u8 = rng.gen_range(1..=255);
        match k % 3 {
            0 => {
                let i = rng.gen_range(0..p.len());
                p[i] ^= flip;
            }
            1 => {
                let i = rng.gen_range(0..v.len());
                v[i] ^= flip;
            }
            _ => {
                // a byte inside the public inputs
                let start = 4 + 4 + 32 + 4 + 8 + 4;
                let i = start + rng.gen_range(0..f.proof.public.len() * 8);
                p[i] ^= flip;
            }
        }
        assert!(!ReferenceBackend.verify_bytes(&p, &v), "mutation {k}");
    }
}

#[test]
fn swapped_embedding_fails_verification() {
    let f = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let mut forged = f.proof.clone();
        let i = rng.gen_range(0..f.embedding.len());
        let v = f.wc.codec.encode(rng.gen_range(0.0..1.5));
        if Fe::from_i64(v) == forged.public[i] {
            continue;
        }
        forged.public[i] = Fe::from_i64(v);
        assert!(!ReferenceBackend.verify(&forged, &f.vk));
        assert!(!ReferenceBackend.verify_bytes(&forged.to_bytes(), &f.vk.to_bytes()));
    }
}

#[test]
fn malformed_files_verify_false() {
    let f = fixture();
    let (pb, vb) = (f.proof.to_bytes(), f.vk.to_bytes());
    assert!(!ReferenceBackend.verify_bytes(&pb[..pb.len() - 1], &vb));
    assert!(!ReferenceBackend.verify_bytes(&pb, &vb[..10]));
    assert!(!ReferenceBackend.verify_bytes(&[], &[]));
    let mut longer = pb.clone();
    longer.push(0);
    assert!(!ReferenceBackend.verify_bytes(&longer, &vb));
    let mut zero = f.proof.clone();
    zero.claimed = 0;
    assert!(!ReferenceBackend.verify(&zero, &f.vk));
}
