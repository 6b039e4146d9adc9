use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use rosemark::attacks::{apply_attack, AttackConfig, AttackKind};
use rosemark::extraction::{decide, extract};
use rosemark::harness::bench::{
    decoder_ablation, evaluate, fidelity, split_corpus, train_and_evaluate, BenchReport, EvalOptions, TEST_FRACTION,
};
use rosemark::harness::config::{Config, SEED_ENV};
use rosemark::harness::dataset::{desk_corpus, ingest, Corpus};
use rosemark::harness::runner::FidelityRunner;
use rosemark::insertion::{insert, BitMessage, Heads, ModelBundle};
use rosemark::syntax::{parse, render, SyntaxTree};
use rosemark::trainer::{train, write_log, TrainConfig};
use rosemark::transform::vocab::Vocabulary;
use rosemark::zk::{public_embedding, ProofBackend, ReferenceBackend, VerifierKey, WatermarkCircuit, ZkError};
use rosemark::Error;

#[derive(Parser)]
#[command(name = "rosemark", version, about = "Watermark source code and prove ownership")]
struct Cli {
    /// TOML config; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides ROSEMARK_SEED and the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the insertion/extraction model.
    Train(TrainArgs),
    /// Watermark one file with a message.
    Insert {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        msg: BitMessage,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the bits the decoder reads from a file.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// z-test a file against a message.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        msg: BitMessage,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        z_threshold: Option<f64>,
    },
    /// Apply a removal attack to a file.
    Attack {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 0.25)]
        fraction: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Register a watermark and prove a file carries it.
    Prove(ProveArgs),
    /// Check a proof against a verifier key; exit 2 if it does not hold.
    Verify {
        #[arg(long)]
        proof: PathBuf,
        #[arg(long)]
        vk: PathBuf,
    },
    /// Detection metrics over a dataset, with Pass% when a runner is set.
    Bench(BenchArgs),
    /// Train and evaluate ablation variants on a held-out split.
    Ablate(AblateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Rename,
    Style,
}

impl From<Kind> for AttackKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Rename => AttackKind::VariableRename,
            Kind::Style => AttackKind::StyleNormalize,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Desk,
    Reference,
}

#[derive(Args)]
struct Hyper {
    /// Base configuration the config file and flags refine.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    n_bits: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    w_f: Option<f64>,
    #[arg(long)]
    w_d: Option<f64>,
    #[arg(long)]
    w_r: Option<f64>,
    #[arg(long)]
    sigma_p: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// JSONL records; the bundled desk corpus when absent.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-step losses as JSONL, appended after every epoch.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Keep one checkpoint per epoch here instead of overwriting `<out>.ckpt`.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args)]
struct ProveArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    msg: BitMessage,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    proof: PathBuf,
    #[arg(long)]
    vk: PathBuf,
    #[arg(long)]
    theta: Option<f64>,
    /// 64 hex digits; derived from the seed when absent.
    #[arg(long)]
    salt: Option<String>,
    /// Reuse an existing verifier key instead of writing a new one.
    #[arg(long)]
    existing_vk: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-sample metric lines as JSONL.
    #[arg(long)]
    lines: Option<PathBuf>,
    #[arg(long, value_enum)]
    attack: Option<Kind>,
    #[arg(long, default_value_t = 0.25)]
    fraction: f64,
    #[arg(long)]
    messages: Option<usize>,
    /// Fidelity runner command line, e.g. "python3 runner.py".
    #[arg(long)]
    runner: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    Weights,
    Decoder,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long, value_enum)]
    what: Ablation,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("{0}")]
    Usage(String),
    /// Verification did not hold; exit 2.
    #[error("{0}")]
    Rejected(String),
}

type CliResult<T = ()> = Result<T, CliError>;

fn io(p: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| Error::io(p, e).into()
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn read_tree(p: &Path) -> CliResult<SyntaxTree> {
    let src = std::fs::read_to_string(p).map_err(io(p))?;
    Ok(parse(&src.replace("\r\n", "\n")).map_err(Error::from)?)
}

fn write_text(p: &Path, text: &str) -> CliResult {
    std::fs::write(p, text).map_err(io(p))
}

fn load_corpus(p: Option<&Path>) -> CliResult<Corpus> {
    let corpus = match p {
        Some(p) => ingest(p)?,
        None => desk_corpus(),
    };
    for s in &corpus.skipped {
        eprintln!("skipped {}: {}", s.task_id, s.reason);
    }
    if corpus.is_empty() {
        return Err(usage("no usable records in the dataset"));
    }
    Ok(corpus)
}

fn print_json(v: &impl serde::Serialize, out: Option<&Path>) -> CliResult {
    let text = serde_json::to_string_pretty(v).expect("serializable");
    match out {
        Some(p) => write_text(p, &(text + "\n")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

struct Ctx {
    cfg: Config,
    seed: u64,
}

impl Ctx {
    fn new(cli: &Cli, preset: Option<Preset>) -> CliResult<Self> {
        let base = Config {
            train: match preset {
                None | Some(Preset::Default) => TrainConfig::default(),
                Some(Preset::Desk) => TrainConfig::desk(),
                Some(Preset::Reference) => TrainConfig::large_scale(),
            },
            ..Config::default()
        };
        let cfg = Config::load_over(base, cli.config.as_deref())?;
        let env = std::env::var(SEED_ENV).ok();
        let seed = match cli.seed {
            Some(s) => s,
            None => cfg.resolved_seed(env.as_deref())?,
        };
        Ok(Ctx { cfg, seed })
    }

    fn train_config(&self, h: &Hyper) -> TrainConfig {
        let mut t = self.cfg.train.clone();
        t.seed = self.seed;
        t.epochs = h.epochs.unwrap_or(t.epochs);
        t.lr = h.lr.unwrap_or(t.lr);
        t.n_bits = h.n_bits.unwrap_or(t.n_bits);
        t.batch_size = h.batch_size.unwrap_or(t.batch_size);
        t.w_f = h.w_f.unwrap_or(t.w_f);
        t.w_d = h.w_d.unwrap_or(t.w_d);
        t.w_r = h.w_r.unwrap_or(t.w_r);
        t.sigma_p = h.sigma_p.unwrap_or(t.sigma_p);
        t
    }

    /// The owner keeps this secret; deriving it from the seed keeps runs
    /// reproducible when none is given.
    fn salt(&self, hex: Option<&str>) -> CliResult<[u8; 32]> {
        match hex {
            Some(h) => parse_hex32(h).ok_or_else(|| usage("--salt must be 64 hex digits")),
            None => {
                let mut s = [0u8; 32];
                ChaCha8Rng::seed_from_u64(self.seed ^ 0x5a17_5a17).fill_bytes(&mut s);
                Ok(s)
            }
        }
    }
}

fn parse_hex32(h: &str) -> Option<[u8; 32]> {
    let h = h.trim();
    if h.len() != 64 || !h.is_ascii() {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, b) in out.iter_mut().enumerate() {
        *b = u8::from_str_radix(&h[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(out)
}

fn check_bits(model: &ModelBundle, m: &BitMessage) -> CliResult {
    if m.len() != model.config.n_bits {
        return Err(usage(format!(
            "message has {} bits, the model expects {}",
            m.len(),
            model.config.n_bits
        )));
    }
    Ok(())
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> CliResult {
    let cfg = ctx.train_config(&a.hyper);
    let corpus = load_corpus(a.dataset.as_deref())?;
    let mut log = match &a.log {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(io(p))?)),
        None => None,
    };
    if let Some(d) = &a.checkpoint_dir {
        std::fs::create_dir_all(d).map_err(io(d))?;
    }
    let ckpt = a.out.with_extension("ckpt");
    let mut failure: Option<CliError> = None;
    let started = Instant::now();
    let out = train(&corpus.trees(), &cfg, &Vocabulary::builtin(), |epoch, model, steps| {
        let r = (|| -> CliResult {
            if let Some(w) = log.as_mut() {
                write_log(steps, w).and_then(|_| w.flush()).map_err(io(a.log.as_deref().unwrap()))?;
            }
            let path = match &a.checkpoint_dir {
                Some(d) => d.join(format!("epoch-{epoch:04}.rmk")),
                None => ckpt.clone(),
            };
            model.save(&path).map_err(io(&path))
        })();
        if let Err(e) = r {
            failure = Some(e);
        }
        Ok(())
    })
    .map_err(Error::from)?;
    if let Some(e) = failure {
        return Err(e);
    }
    out.model.save(&a.out).map_err(io(&a.out))?;
    if a.checkpoint_dir.is_none() {
        let _ = std::fs::remove_file(&ckpt);
    }
    let last = out.log.last();
    print_json(
        &json!({
            "model": a.out,
            "programs": corpus.len() - out.skipped.len(),
            "skipped_capacity": out.skipped.len(),
            "steps": out.log.len(),
            "final_loss": last.map(|l| l.total),
            "seconds": started.elapsed().as_secs_f64(),
            "config": cfg,
        }),
        None,
    )
}

fn cmd_prove(ctx: &Ctx, a: &ProveArgs) -> CliResult {
    let model = ModelBundle::<f32>::load(&a.model)?;
    check_bits(&model, &a.msg)?;
    let tree = read_tree(&a.input)?;
    let theta = a.theta.unwrap_or(ctx.cfg.zk.theta);
    let wc = WatermarkCircuit::new(&model, theta, ctx.cfg.zk.codec()).map_err(Error::from)?;
    let salt = ctx.salt(a.salt.as_deref())?;
    let vk = if a.existing_vk {
        let bytes = std::fs::read(&a.vk).map_err(io(&a.vk))?;
        VerifierKey::from_bytes(&bytes).map_err(Error::from)?
    } else {
        wc.setup(&a.msg, &salt).map_err(Error::from)?
    };
    let embedding = public_embedding(&tree, &model);
    let started = Instant::now();
    let proof = match wc.prove(&ReferenceBackend, &vk, &embedding, &a.msg, &salt) {
        Ok(p) => p,
        Err(e @ (ZkError::UnsatisfiableWitness { .. } | ZkError::OutOfRange { .. })) => {
            return Err(CliError::Rejected(format!("no proof: the watermark does not hold ({e})")));
        }
        Err(e) => return Err(Error::from(e).into()),
    };
    let prove_ms = started.elapsed().as_secs_f64() * 1e3;
    let (pb, vb) = (proof.to_bytes(), vk.to_bytes());
    std::fs::write(&a.proof, &pb).map_err(io(&a.proof))?;
    if !a.existing_vk {
        std::fs::write(&a.vk, &vb).map_err(io(&a.vk))?;
    }
    print_json(
        &json!({
            "backend": ReferenceBackend.name(),
            "theta": theta,
            "gates": wc.circuit.gates.len(),
            "wires": wc.circuit.n_wires,
            "prove_ms": prove_ms,
            "proof_bytes": pb.len(),
            "vk_bytes": vb.len(),
        }),
        None,
    )
}

fn cmd_bench(ctx: &Ctx, a: &BenchArgs) -> CliResult {
    let model = ModelBundle::<f32>::load(&a.model)?;
    let corpus = load_corpus(a.dataset.as_deref())?;
    let attack = a.attack.map(|k| AttackConfig {
        kind: k.into(),
        fraction: a.fraction,
        seed: ctx.seed,
    });
    let opts = EvalOptions {
        messages_per_program: a.messages.unwrap_or(EvalOptions::default().messages_per_program),
        seed: ctx.seed,
        detection: ctx.cfg.detection,
        attack,
    };
    let programs: Vec<(String, SyntaxTree)> =
        corpus.records.iter().map(|r| (r.record.task_id.clone(), r.tree.clone())).collect();
    let ev = evaluate(&model, &programs, &opts, &Vocabulary::builtin());
    if let Some(p) = &a.lines {
        let mut w = BufWriter::new(File::create(p).map_err(io(p))?);
        for l in &ev.lines {
            serde_json::to_writer(&mut w, l).expect("serializable");
            w.write_all(b"\n").map_err(io(p))?;
        }
        w.flush().map_err(io(p))?;
    }
    let mut report = BenchReport::new(&ev, programs.len(), attack);
    let command = match &a.runner {
        Some(c) => c.split_whitespace().map(String::from).collect(),
        None => ctx.cfg.runner.command.clone(),
    };
    if !command.is_empty() {
        let runner = FidelityRunner::new(command).map_err(Error::from)?;
        let fid = fidelity(&model, &corpus.records, &runner, ctx.cfg.runner.timeout, ctx.seed).map_err(Error::from)?;
        let (wm, orig) = fid.pass_rates().map_err(Error::from)?;
        report.metrics.pass_rate = Some(wm);
        report.original_pass_rate = Some(orig);
        for t in fid.regressions() {
            eprintln!("fidelity regression: {t}");
        }
    }
    print_json(&report, a.out.as_deref())
}

fn cmd_ablate(ctx: &Ctx, a: &AblateArgs) -> CliResult {
    let base = ctx.train_config(&a.hyper);
    let corpus = load_corpus(a.dataset.as_deref())?;
    let split = split_corpus(&corpus, TEST_FRACTION, ctx.seed);
    let vocab = Vocabulary::builtin();
    let mut rows = Vec::new();
    match a.what {
        Ablation::Weights => {
            for (w_f, w_d, w_r) in [(base.w_f, base.w_d, base.w_r), (0.1, 0.8, 0.1), (0.8, 0.1, 0.1)] {
                let cfg = TrainConfig { w_f, w_d, w_r, ..base.clone() };
                let (_, ev) = train_and_evaluate(&split, &cfg, &vocab, &EvalOptions::default()).map_err(Error::from)?;
                eprintln!("weights ({w_f}, {w_d}, {w_r}): auroc {:.3}", ev.report.auroc);
                rows.push(json!({
                    "w_f": w_f, "w_d": w_d, "w_r": w_r,
                    "auroc": ev.report.auroc, "tpr": ev.report.tpr, "fpr": ev.report.fpr,
                    "bit_accuracy": ev.bit_accuracy,
                }));
            }
        }
        Ablation::Decoder => {
            for (name, heads) in [("both", Heads::Both), ("syntax_only", Heads::SynOnly), ("variable_only", Heads::VarOnly)] {
                let r = decoder_ablation(&split, &base, heads, &vocab).map_err(Error::from)?;
                eprintln!("{name}: auroc {:.3}", r.auroc);
                rows.push(json!({ "heads": name, "auroc": r.auroc, "tpr": r.tpr, "fpr": r.fpr }));
            }
        }
    }
    print_json(&rows, a.out.as_deref())
}

fn run(cli: &Cli) -> CliResult {
    let preset = match &cli.cmd {
        Cmd::Train(a) => a.hyper.preset,
        Cmd::Ablate(a) => a.hyper.preset,
        _ => None,
    };
    let ctx = Ctx::new(cli, preset)?;
    match &cli.cmd {
        Cmd::Train(a) => cmd_train(&ctx, a),
        Cmd::Insert { model, msg, input, out } => {
            let model = ModelBundle::<f32>::load(model)?;
            check_bits(&model, msg)?;
            let tree = read_tree(input)?;
            let ins = insert(&tree, msg, &model).map_err(Error::from)?;
            write_text(out, &render(&ins.tree))?;
            print_json(&json!({ "msg": msg.to_string(), "plan": ins.plan }), None)
        }
        Cmd::Extract { model, input } => {
            let model = ModelBundle::<f32>::load(model)?;
            let r = extract(&read_tree(input)?, &model);
            print_json(&json!({ "bits": r.bits.to_string(), "soft": r.soft }), None)
        }
        Cmd::Detect { model, msg, input, z_threshold } => {
            let model = ModelBundle::<f32>::load(model)?;
            check_bits(&model, msg)?;
            let mut det = ctx.cfg.detection;
            det.z_threshold = z_threshold.unwrap_or(det.z_threshold);
            let bits = extract(&read_tree(input)?, &model).bits;
            let d = decide(msg, &bits, &det).map_err(Error::from)?;
            print_json(
                &json!({ "bits": bits.to_string(), "z": d.z, "is_watermarked": d.is_watermarked }),
                None,
            )
        }
        Cmd::Attack { kind, fraction, input, out } => {
            let cfg = AttackConfig {
                kind: (*kind).into(),
                fraction: *fraction,
                seed: ctx.seed,
            };
            let t = apply_attack(&read_tree(input)?, &cfg, &Vocabulary::builtin());
            write_text(out, &render(&t))
        }
        Cmd::Prove(a) => cmd_prove(&ctx, a),
        Cmd::Verify { proof, vk } => {
            let p = std::fs::read(proof).map_err(io(proof))?;
            let k = std::fs::read(vk).map_err(io(vk))?;
            let ok = ReferenceBackend.verify_bytes(&p, &k);
            println!("{}", json!({ "valid": ok }));
            if ok {
                Ok(())
            } else {
                Err(CliError::Rejected("proof does not verify".into()))
            }
        }
        Cmd::Bench(a) => cmd_bench(&ctx, a),
        Cmd::Ablate(a) => cmd_ablate(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Rejected(m)) => {
            eprintln!("{m}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
