//! Browser demo: a transform explorer, a z-score / BER calculator and the
//! poly_relu vs ReLU view with BF16 rounding. Every export returns JSON.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use rosemark::extraction::{ber, z_score, DetectionConfig};
use rosemark::insertion::BitMessage;
use rosemark::syntax::{normalize, parse, render};
use rosemark::transform::{apply_plan, random_plan, Analysis, Vocabulary};
use rosemark::zk::bf16::quantize_bf16;
use rosemark::zk::poly_relu;

fn error(msg: impl ToString) -> Value {
    json!({ "error": msg.to_string() })
}

/// Sites of `source`, and one seeded random rewrite of it.
pub fn explore(source: &str, seed: u64, rename_prob: f64) -> Value {
    let tree = match parse(source) {
        Ok(t) => t,
        Err(e) => return error(e),
    };
    let analysis = Analysis::new(&tree);
    let sites: Vec<Value> = analysis
        .sites
        .iter()
        .map(|s| {
            json!({
                "id": s.id,
                "family": format!("{:?}", s.family),
                "line": s.span.start.line,
                "current": s.family.alternative_label(s.current_state),
                "alternatives": s.alternatives.iter().map(|a| s.family.alternative_label(*a)).collect::<Vec<_>>(),
                "variable": s.variable,
            })
        })
        .collect();
    let plan = random_plan(&analysis, &Vocabulary::builtin(), rename_prob.clamp(0.0, 1.0), &mut ChaCha8Rng::seed_from_u64(seed));
    match apply_plan(&tree, &plan) {
        Ok(out) => json!({
            "sites": sites,
            "plan": plan,
            "rewritten": render(&out),
            "equivalent": normalize(&out) == normalize(&tree),
        }),
        Err(e) => error(e),
    }
}

/// z-score and BER of an extracted message against the claimed one.
pub fn score(claimed: &str, extracted: &str, z_threshold: f64) -> Value {
    let parse_bits = |s: &str| s.trim().parse::<BitMessage>();
    let (m, m2) = match (parse_bits(claimed), parse_bits(extracted)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return error(e),
    };
    let cfg = DetectionConfig {
        z_threshold,
        ..DetectionConfig::default()
    };
    match (z_score(&m, &m2, &cfg), ber(&m, &m2)) {
        (Ok(z), Ok(b)) => json!({
            "bits": m.len(),
            "matches": m.bits().iter().zip(m2.bits()).filter(|(a, b)| a == b).count(),
            "z": z,
            "ber": b,
            "is_watermarked": z >= z_threshold,
        }),
        (Err(e), _) | (_, Err(e)) => error(e),
    }
}

/// ReLU, x² + x and its BF16-rounded input over [lo, hi].
pub fn activations(lo: f64, hi: f64, steps: usize) -> Value {
    let steps = steps.clamp(1, 2000);
    let rows: Vec<Value> = (0..=steps)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / steps as f64;
            let xq = quantize_bf16(x as f32).to_f32() as f64;
            json!({
                "x": x,
                "relu": x.max(0.0),
                "poly": poly_relu(x),
                "x_bf16": xq,
                "poly_bf16": poly_relu(xq),
            })
        })
        .collect();
    json!({ "rows": rows })
}

#[wasm_bindgen]
pub fn transform_explorer(source: &str, seed: u32, rename_prob: f64) -> String {
    explore(source, seed as u64, rename_prob).to_string()
}

#[wasm_bindgen]
pub fn z_ber(claimed: &str, extracted: &str, z_threshold: f64) -> String {
    score(claimed, extracted, z_threshold).to_string()
}

#[wasm_bindgen]
pub fn activation_table(lo: f64, hi: f64, steps: u32) -> String {
    activations(lo, hi, steps as usize).to_string()
}
