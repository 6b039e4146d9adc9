//! Circuits for decoder inference and the BER gate.

use super::circuit::{Builder, Circuit, Gate, Wire};
use super::decoder::QuantizedDecoder;
use super::field::Fe;
use super::fixed::FixedPointCodec;
use super::ZkError;

/// Every signed intermediate stays below 2^60. Truncation recovers
/// (q, r) uniquely only while 2^(bits + 1 + shift) < p, which this keeps.
pub const MAX_BITS: u32 = 60;

/// Smallest b with v < 2^b.
fn bits_for(v: u128) -> u32 {
    128 - v.leading_zeros()
}

fn guard(stage: &str, bound: u128) -> Result<u32, ZkError> {
    let b = bits_for(bound);
    if b > MAX_BITS {
        return Err(ZkError::OverflowRisk {
            stage: stage.to_string(),
            bits: b,
        });
    }
    Ok(b)
}

fn pw_bits(b: u32) -> u128 {
    1u128 << b
}

fn tensor_bits(v: &[i64]) -> u32 {
    bits_for(v.iter().map(|x| x.unsigned_abs() as u128).max().unwrap_or(0))
}

/// max over rows of |b_o| + Σ_i ⌈|w_oi|·x / 2^f⌉ + cols, the last term
/// covering the floor of every product.
fn row_bound(w: &[i64], b: &[i64], cols: usize, x: u128, f: u32) -> u128 {
    b.iter()
        .enumerate()
        .map(|(o, bo)| {
            let s: u128 = w[o * cols..(o + 1) * cols]
                .iter()
                .map(|v| (v.unsigned_abs() as u128 * x).div_ceil(1 << f))
                .sum();
            bo.unsigned_abs() as u128 + s + cols as u128
        })
        .max()
        .unwrap_or(0)
}

/// Bit widths (of fixed-point magnitudes) sizing every range check.
/// Private parameters are range-checked per tensor and the hidden
/// accumulator against the smaller of its worst case and the codec's
/// activation bound, so a dishonest witness cannot wrap the field before
/// it fails a range gate.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardBounds {
    pub input_bits: u32,
    pub param_bits: [u32; 4],
    pub product1_bits: u32,
    pub hidden_bits: u32,
    pub square_bits: u32,
    pub act_bits: u32,
    pub product2_bits: u32,
    pub logit_bits: u32,
}

pub fn forward_bounds(dec: &QuantizedDecoder, codec: &FixedPointCodec) -> Result<ForwardBounds, ZkError> {
    let p = dec.fixed_params(codec);
    let f = codec.frac_bits;
    let input_bits = guard("input", pw_bits(codec.bits(codec.input_bound)) - 1)?;
    let param_bits = [tensor_bits(&p.w1), tensor_bits(&p.b1), tensor_bits(&p.w2), tensor_bits(&p.b2)];
    let pw = pw_bits;
    let product1_bits = guard("fc1 product", pw(param_bits[0] + input_bits) - 1)?;
    guard("fc1 sum", pw(param_bits[1]) + dec.d as u128 * (pw(product1_bits.saturating_sub(f)) + 1))?;
    let hidden = row_bound(&p.w1, &p.b1, dec.d, pw(input_bits), f);
    let hidden_bits = guard("fc1 output", hidden)?.min(codec.bits(codec.activation_bound));
    let square_bits = guard("poly_relu square", pw(2 * hidden_bits) - 1)?;
    let act = pw(square_bits.saturating_sub(f)) + 1 + pw(hidden_bits);
    let act_bits = guard("poly_relu", act)?;
    let product2_bits = guard("fc2 product", pw(param_bits[2] + act_bits) - 1)?;
    let logit = pw(param_bits[3]) + dec.hidden as u128 * (pw(product2_bits.saturating_sub(f)) + 1);
    let threshold = codec.encode(dec.threshold).unsigned_abs() as u128;
    let logit_bits = guard("fc2 sum", logit + threshold)?;
    Ok(ForwardBounds {
        input_bits,
        param_bits,
        product1_bits,
        hidden_bits,
        square_bits,
        act_bits,
        product2_bits,
        logit_bits,
    })
}

/// y = b + Σ trunc(W·x) with W row-major [bias.len(), x.len()]; every
/// product is rescaled by 2^f with quotients of `q_bits`.
pub fn affine(b: &mut Builder, w: &[Wire], bias: &[Wire], x: &[Wire], f: u32, q_bits: u32) -> Vec<Wire> {
    let cols = x.len();
    bias.iter()
        .enumerate()
        .map(|(o, bo)| {
            let mut acc = *bo;
            for (i, xi) in x.iter().enumerate() {
                let p = b.mul(w[o * cols + i], *xi);
                let t = b.truncate(p, f, q_bits);
                acc = b.add(acc, t);
            }
            acc
        })
        .collect()
}

/// zkFeedForward: public embedding wires, private parameter wires in
/// [`super::decoder::FixedParams::flat`] order, n_bits boolean outputs.
pub fn compile_forward(dec: &QuantizedDecoder, codec: &FixedPointCodec) -> Result<Circuit, ZkError> {
    let bd = forward_bounds(dec, codec)?;
    let f = codec.frac_bits;
    let mut b = Builder::new();
    let x: Vec<Wire> = (0..dec.d).map(|_| b.public_input()).collect();
    let private = |n: usize, bits: u32, b: &mut Builder| -> Vec<Wire> {
        (0..n)
            .map(|_| {
                let w = b.private_input();
                b.signed_range(w, bits);
                w
            })
            .collect()
    };
    let w1 = private(dec.w1.len(), bd.param_bits[0], &mut b);
    let b1 = private(dec.b1.len(), bd.param_bits[1], &mut b);
    let w2 = private(dec.w2.len(), bd.param_bits[2], &mut b);
    let b2 = private(dec.b2.len(), bd.param_bits[3], &mut b);
    for xi in &x {
        b.signed_range(*xi, bd.input_bits);
    }
    let q1 = bd.product1_bits.saturating_sub(f) + 1;
    let hidden = affine(&mut b, &w1, &b1, &x, f, q1);
    let act: Vec<Wire> = hidden
        .into_iter()
        .map(|acc| {
            b.signed_range(acc, bd.hidden_bits);
            let sq = b.mul(acc, acc);
            let sq = b.truncate(sq, f, bd.square_bits.saturating_sub(f) + 1);
            b.add(sq, acc)
        })
        .collect();
    let q2 = bd.product2_bits.saturating_sub(f) + 1;
    let logits = affine(&mut b, &w2, &b2, &act, f, q2);
    let threshold = b.constant(Fe::from_i64(codec.encode(dec.threshold)));
    for acc in logits {
        let y = b.sub(acc, threshold);
        let bit = b.non_negative(y, bd.logit_bits + 1);
        b.output(bit);
    }
    Ok(b.finish())
}

/// θ in fixed point; the comparison uses ⌊θ_fp · n / 2^f⌋.
pub fn theta_fixed(theta: f64, codec: &FixedPointCodec) -> Result<i64, ZkError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(ZkError::InvalidTheta(theta));
    }
    Ok(codec.encode(theta))
}

/// zkBER: public θ (pinned to the compiled value), private M, ports M′.
/// dᵢ = mᵢ + m′ᵢ − 2mᵢm′ᵢ and the single output is [Σdᵢ ≤ ⌊θ·n⌋].
pub fn compile_ber(n_bits: usize, theta: f64, codec: &FixedPointCodec) -> Result<Circuit, ZkError> {
    let theta_fp = theta_fixed(theta, codec)?;
    let f = codec.frac_bits;
    let mut b = Builder::new();
    let th = b.public_input();
    let pinned = b.constant(Fe::from_i64(theta_fp));
    b.assert_eq(th, pinned);
    let m: Vec<Wire> = (0..n_bits).map(|_| b.private_input()).collect();
    let m2: Vec<Wire> = (0..n_bits).map(|_| b.port()).collect();
    let two = b.constant(Fe::new(2));
    let mut sum = b.constant(Fe::ZERO);
    for (mi, ni) in m.iter().zip(&m2) {
        b.boolean(*mi);
        b.boolean(*ni);
        let prod = b.mul(*mi, *ni);
        let twice = b.mul(prod, two);
        let s = b.add(*mi, *ni);
        let d = b.sub(s, twice);
        sum = b.add(sum, d);
    }
    let n = b.constant(Fe::new(n_bits as u64));
    let scaled = b.mul(th, n);
    let count_bits = bits_for(n_bits as u128) + 1;
    let k = b.truncate(scaled, f, count_bits);
    let slack = b.sub(k, sum);
    let valid = b.non_negative(slack, count_bits + 1);
    b.output(valid);
    Ok(b.finish())
}

/// Adds constraints forcing every output wire to `value`.
pub fn claim_outputs(c: &Circuit, value: Fe) -> Circuit {
    let mut out = c.clone();
    let k = out.n_wires;
    out.n_wires += 1;
    out.gates.push(Gate::Const { out: k, value });
    for w in &c.outputs {
        out.gates.push(Gate::AssertEq { a: *w, b: k });
    }
    out
}
