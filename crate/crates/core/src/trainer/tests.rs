use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gradcheck::micro_config;
use super::*;
use crate::harness::dataset::desk_corpus;

fn toy_trees(n: usize) -> Vec<SyntaxTree> {
    desk_corpus().records.iter().take(n).map(|r| r.tree.clone()).collect()
}

fn toy_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        model: micro_config(4),
        ..TrainConfig::default()
    }
}

#[test]
fn loss_helpers() {
    let m: BitMessage = "1010".parse().unwrap();
    assert!(detectability_loss(&m, &[1.0, 0.0, 1.0, 0.0]) < 1e-6);
    assert!((detectability_loss(&m, &[0.5; 4]) - std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(robustness_loss(&m, &[0.5; 4]), detectability_loss(&m, &[0.5; 4]));
    let f = [0.3, -1.0, 2.0];
    let hard: BitMessage = "10".parse().unwrap();
    let soft = [0.8, 0.4];
    assert_eq!(functionality_loss(&f, &f, &soft, &hard), bce(&soft, &[1.0, 0.0]));
    let off = functionality_loss(&[1.3, -1.0, 2.0], &f, &soft, &hard);
    assert!((off - bce(&soft, &[1.0, 0.0]) - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn total_is_weighted_sum_every_step() {
    let cfg = TrainConfig {
        w_f: 0.3,
        w_d: 1.7,
        w_r: 0.25,
        ..toy_config(2)
    };
    let out = train(&toy_trees(40), &cfg, &Vocabulary::builtin(), |_, _, _| Ok(())).unwrap();
    assert!(!out.log.is_empty());
    for l in &out.log {
        let want = 0.3 * l.l_f + 1.7 * l.l_d + 0.25 * l.l_r;
        assert!((l.total - want).abs() < 1e-6, "{l:?}");
    }
}

#[test]
fn fixed_seed_is_bit_identical() {
    let trees = toy_trees(30);
    let vocab = Vocabulary::builtin();
    let a = train(&trees, &toy_config(2), &vocab, |_, _, _| Ok(())).unwrap();
    let b = train(&trees, &toy_config(2), &vocab, |_, _, _| Ok(())).unwrap();
    assert_eq!(a.model.to_bytes(), b.model.to_bytes());
    assert_eq!(a.log, b.log);
    let c = train(&trees, &TrainConfig { seed: 1, ..toy_config(2) }, &vocab, |_, _, _| Ok(())).unwrap();
    assert_ne!(a.model.to_bytes(), c.model.to_bytes());
}

#[test]
fn epoch_callback_sees_every_epoch() {
    let mut seen = Vec::new();
    train(&toy_trees(20), &toy_config(3), &Vocabulary::builtin(), |e, _, _| {
        seen.push(e);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![0, 1, 2]);
}

#[test]
fn empty_corpus_is_an_error() {
    let r = train(&[], &toy_config(1), &Vocabulary::builtin(), |_, _, _| Ok(()));
    assert!(matches!(r, Err(TrainError::EmptyCorpus)));
}

fn batch_fixture(n: usize, cfg: &ModelConfig) -> (ModelBundle<f64>, Vec<Prepared>, Vec<BitMessage>) {
    let vocab = Vocabulary::builtin();
    let model = ModelBundle::<f32>::new(cfg.clone(), &vocab, 3).cast::<f64>();
    let (preps, _) = capacity_filter(&toy_trees(n), &model.config, &model.vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let msgs = preps.iter().map(|_| BitMessage::random(cfg.n_bits, &mut rng)).collect();
    (model, preps, msgs)
}

#[test]
fn zero_sigma_makes_robustness_equal_detectability() {
    let cfg = ModelConfig {
        dropout: 0.0,
        ..micro_config(4)
    };
    let (model, preps, msgs) = batch_fixture(12, &cfg);
    let batch: Vec<_> = preps.iter().zip(&msgs).collect();
    for st in [false, true] {
        let w = LossWeights {
            sigma_p: 0.0,
            straight_through: st,
            ..TrainConfig::default().weights()
        };
        let r = loss_and_grads(&model, &batch, &w, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(r.loss.l_r, r.loss.l_d);
    }
}

#[test]
fn untrained_losses_are_finite() {
    let (model, preps, msgs) = batch_fixture(120, &ModelConfig::default());
    assert!(preps.len() >= 100);
    let w = TrainConfig::default().weights();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs: Vec<_> = preps.iter().zip(&msgs).take(100).collect();
    for chunk in pairs.chunks(10) {
        let r = loss_and_grads(&model, chunk, &w, &mut rng).unwrap();
        let l = r.loss;
        assert!(l.l_f.is_finite() && l.l_f > 0.0, "{l:?}");
        assert!(l.l_d.is_finite() && l.l_r.is_finite() && l.total.is_finite());
        assert!(r.grads.all_finite());
    }
}

#[test]
fn message_length_is_checked() {
    let (model, preps, _) = batch_fixture(4, &micro_config(4));
    let m: BitMessage = "10".parse().unwrap();
    let batch = vec![(&preps[0], &m), (&preps[1], &m)];
    let r = loss_and_grads(&model, &batch, &TrainConfig::default().weights(), &mut ChaCha8Rng::seed_from_u64(0));
    assert!(matches!(r, Err(InsertError::MessageLength { expected: 4, got: 2 })));
}

#[test]
fn sampled_gradient_check() {
    let (model, preps, msgs) = batch_fixture(14, &micro_config(4));
    let batch: Vec<_> = preps.iter().zip(&msgs).take(10).collect();
    let w = LossWeights {
        straight_through: false,
        ..TrainConfig::default().weights()
    };
    let gc = gradcheck::gradient_check(&model, &batch, &w, 2, gradcheck::DEFAULT_STEP, Some(6)).unwrap();
    let subs = gc.by_submodule();
    assert_eq!(subs.len(), 6, "{subs:?}");
    assert!(gc.max_rel_err() < 1e-4, "{:?}", gc.worst());
}

#[test]
fn log_is_jsonl() {
    let log = vec![
        StepLog { step: 0, l_f: 1.0, l_d: 0.5, l_r: 0.25, total: 1.5125 },
        StepLog { step: 1, l_f: 0.5, l_d: 0.5, l_r: 0.5, total: 1.025 },
    ];
    let mut buf = Vec::new();
    write_log(&log, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let back: StepLog = serde_json::from_str(lines[1]).unwrap();
    assert_eq!(back, log[1]);
    assert!(lines[0].starts_with("{\"step\":0,\"l_f\":1.0"));
}
