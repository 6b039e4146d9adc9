use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{apply_attack, AttackConfig};
use crate::extraction::{
    ber, decide, extract, roc_metrics, z_score, DetectionConfig, MetricsReport,
};
use crate::harness::dataset::{Corpus, ParsedRecord};
use crate::harness::runner::{pass_rate, ExecutionVerdict, FidelityRunner, RunRequest, RunnerError, Variant};
use crate::insertion::{insert, insert_prepared, BitMessage, Heads, ModelBundle, Prepared};
use crate::syntax::{render, SyntaxTree};
use crate::trainer::{train, TrainConfig, TrainError, TrainOutput};
use crate::transform::vocab::Vocabulary;

pub const TEST_FRACTION: f64 = 0.2;

/// Shuffled train/test index split; the test side gets ⌈n·fraction⌉.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((n as f64 * test_fraction).ceil() as usize).min(n);
    let test = idx[..k].to_vec();
    let mut train = idx[k..].to_vec();
    train.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    (train, test)
}

/// Held-out partition of a corpus; test programs keep their task ids.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<SyntaxTree>,
    pub test: Vec<(String, SyntaxTree)>,
}

pub fn split_corpus(corpus: &Corpus, test_fraction: f64, seed: u64) -> Split {
    let (tr, te) = split_indices(corpus.len(), test_fraction, seed);
    Split {
        train: tr.iter().map(|i| corpus.records[*i].tree.clone()).collect(),
        test: te
            .iter()
            .map(|i| {
                let r = &corpus.records[*i];
                (r.record.task_id.clone(), r.tree.clone())
            })
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub messages_per_program: usize,
    pub seed: u64,
    pub detection: DetectionConfig,
    pub attack: Option<AttackConfig>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            messages_per_program: 16,
            seed: 0,
            detection: DetectionConfig::default(),
            attack: None,
        }
    }
}

/// One JSONL metrics line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricLine {
    pub task_id: String,
    pub variant: String,
    pub z: f64,
    pub ber: f64,
    pub is_watermarked: bool,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub bit_accuracy: f64,
    pub wm_z: Vec<f64>,
    pub clean_z: Vec<f64>,
    pub report: MetricsReport,
    pub lines: Vec<MetricLine>,
    pub skipped: Vec<String>,
}

/// Watermarks every program with random messages, extracts (optionally
/// after an attack) and scores against the same messages on the clean code.
/// When `messages_per_program` covers all 2^n messages they are enumerated
/// instead, which makes the clean-code null exact.
pub fn evaluate(
    model: &ModelBundle,
    programs: &[(String, SyntaxTree)],
    opts: &EvalOptions,
    attack_vocab: &Vocabulary,
) -> Evaluation {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n_bits = model.config.n_bits;
    let mut wm_z = Vec::new();
    let mut clean_z = Vec::new();
    let mut lines = Vec::new();
    let mut skipped = Vec::new();
    let (mut agree, mut total) = (0usize, 0usize);
    for (pi, (task_id, tree)) in programs.iter().enumerate() {
        let prep = Prepared::new(tree, &model.config, &model.vocab);
        if prep.check_capacity(n_bits).is_err() {
            skipped.push(task_id.clone());
            continue;
        }
        let clean_bits = extract(tree, model).bits;
        let msgs: Vec<BitMessage> = if n_bits < 16 && 1usize << n_bits <= opts.messages_per_program {
            BitMessage::all(n_bits)
        } else {
            (0..opts.messages_per_program)
                .map(|_| BitMessage::random(n_bits, &mut rng))
                .collect()
        };
        for (k, msg) in msgs.into_iter().enumerate() {
            let ins = insert_prepared(&prep, &msg, model).expect("capacity checked");
            let wm = match &opts.attack {
                Some(a) => {
                    let cfg = AttackConfig {
                        seed: a.seed ^ ((pi as u64) << 16) ^ k as u64,
                        ..*a
                    };
                    apply_attack(&ins.tree, &cfg, attack_vocab)
                }
                None => ins.tree,
            };
            let got = extract(&wm, model).bits;
            let d = decide(&msg, &got, &opts.detection).expect("same length");
            agree += n_bits - (ber(&msg, &got).expect("same length") * n_bits as f64).round() as usize;
            total += n_bits;
            wm_z.push(d.z);
            lines.push(MetricLine {
                task_id: task_id.clone(),
                variant: "watermarked".into(),
                z: d.z,
                ber: ber(&msg, &got).expect("same length"),
                is_watermarked: d.is_watermarked,
            });
            let zc = z_score(&msg, &clean_bits, &opts.detection).expect("same length");
            clean_z.push(zc);
            lines.push(MetricLine {
                task_id: task_id.clone(),
                variant: "original".into(),
                z: zc,
                ber: ber(&msg, &clean_bits).expect("same length"),
                is_watermarked: zc >= opts.detection.z_threshold,
            });
        }
    }
    let report = roc_metrics(&wm_z, &clean_z, opts.detection.z_threshold).unwrap_or(MetricsReport {
        auroc: 0.5,
        tpr: 0.0,
        fpr: 0.0,
        pass_rate: None,
    });
    Evaluation {
        bit_accuracy: if total == 0 { 0.0 } else { agree as f64 / total as f64 },
        wm_z,
        clean_z,
        report,
        lines,
        skipped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

pub fn summarize(v: &[f64]) -> Summary {
    if v.is_empty() {
        return Summary {
            n: 0,
            mean: 0.0,
            std: 0.0,
            min: 0.0,
            median: 0.0,
            max: 0.0,
        };
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    };
    Summary {
        n: v.len(),
        mean,
        std: var.sqrt(),
        min: sorted[0],
        median,
        max: sorted[sorted.len() - 1],
    }
}

/// The `bench` output. `pass_rate` (watermarked) and `original_pass_rate`
/// are present only when a fidelity runner was used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    #[serde(flatten)]
    pub metrics: MetricsReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_pass_rate: Option<f64>,
    pub bit_accuracy: f64,
    pub programs: usize,
    pub skipped: Vec<String>,
    pub z_watermarked: Summary,
    pub z_original: Summary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackConfig>,
}

impl BenchReport {
    pub fn new(ev: &Evaluation, programs: usize, attack: Option<AttackConfig>) -> Self {
        BenchReport {
            metrics: ev.report.clone(),
            original_pass_rate: None,
            bit_accuracy: ev.bit_accuracy,
            programs,
            skipped: ev.skipped.clone(),
            z_watermarked: summarize(&ev.wm_z),
            z_original: summarize(&ev.clean_z),
            attack,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fidelity {
    pub original: Vec<ExecutionVerdict>,
    pub watermarked: Vec<ExecutionVerdict>,
}

impl Fidelity {
    /// (watermarked, original) pass rates.
    pub fn pass_rates(&self) -> Result<(f64, f64), RunnerError> {
        Ok((pass_rate(&self.watermarked)?, pass_rate(&self.original)?))
    }

    /// Tasks whose original passes but watermarked copy does not.
    pub fn regressions(&self) -> Vec<&str> {
        self.original
            .iter()
            .zip(&self.watermarked)
            .filter(|(o, w)| o.passed && !w.passed)
            .map(|(o, _)| o.task_id.as_str())
            .collect()
    }
}

/// Runs every record's tests on its original solution and on a copy
/// watermarked with a seeded random message. Records without enough
/// capacity are left out of both sides.
pub fn fidelity(
    model: &ModelBundle,
    records: &[ParsedRecord],
    runner: &FidelityRunner,
    timeout: f64,
    seed: u64,
) -> Result<Fidelity, RunnerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reqs = Vec::new();
    for r in records {
        let msg = BitMessage::random(model.config.n_bits, &mut rng);
        let Ok(ins) = insert(&r.tree, &msg, model) else {
            continue;
        };
        for (variant, code) in [
            (Variant::Original, r.record.canonical_solution.clone()),
            (Variant::Watermarked, render(&ins.tree)),
        ] {
            reqs.push(RunRequest {
                task_id: r.record.task_id.clone(),
                variant,
                code,
                tests: r.record.tests.clone(),
                timeout,
            });
        }
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let mut out = Fidelity {
        original: Vec::new(),
        watermarked: Vec::new(),
    };
    for v in runner.run_all(&reqs, workers) {
        let v = v?;
        match v.variant {
            Variant::Original => out.original.push(v),
            _ => out.watermarked.push(v),
        }
    }
    Ok(out)
}

pub fn train_and_evaluate(
    split: &Split,
    cfg: &TrainConfig,
    vocab: &Vocabulary,
    opts: &EvalOptions,
) -> Result<(TrainOutput, Evaluation), TrainError> {
    let out = train(&split.train, cfg, vocab, |_, _, _| Ok(()))?;
    let ev = evaluate(&out.model, &split.test, opts, vocab);
    Ok((out, ev))
}

/// Trains with only the given heads allowed to change the code and reports
/// held-out detection metrics.
pub fn decoder_ablation(
    split: &Split,
    cfg: &TrainConfig,
    mode: Heads,
    vocab: &Vocabulary,
) -> Result<MetricsReport, TrainError> {
    let mut cfg = cfg.clone();
    cfg.model.heads = mode;
    Ok(train_and_evaluate(split, &cfg, vocab, &EvalOptions::default())?.1.report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_seeded() {
        let (a, b) = split_indices(10, 0.2, 1);
        assert_eq!(b.len(), 2);
        assert_eq!(a.len(), 8);
        assert!(a.iter().all(|i| !b.contains(i)));
        assert_eq!(split_indices(10, 0.2, 1), (a, b));
    }

    #[test]
    fn summary_statistics() {
        let s = summarize(&[1.0, 3.0, 2.0, 4.0]);
        assert_eq!((s.n, s.min, s.max, s.median, s.mean), (4, 1.0, 4.0, 2.5, 2.5));
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-12);
        assert_eq!(summarize(&[]).n, 0);
    }

    #[test]
    fn report_omits_pass_rate_without_runner() {
        let ev = Evaluation {
            bit_accuracy: 1.0,
            wm_z: vec![2.0],
            clean_z: vec![0.0],
            report: MetricsReport {
                auroc: 1.0,
                tpr: 1.0,
                fpr: 0.0,
                pass_rate: None,
            },
            lines: vec![],
            skipped: vec![],
        };
        let v = serde_json::to_value(BenchReport::new(&ev, 1, None)).unwrap();
        for k in ["auroc", "tpr", "fpr", "z_watermarked", "z_original"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert!(v.get("pass_rate").is_none());
        assert!(v.get("original_pass_rate").is_none());
    }
}
