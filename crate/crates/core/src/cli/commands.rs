use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{overlay, FileConfig};
use super::manifest::{RunManifest, MANIFEST_FILE};
use super::*;
use crate::analysis::{correlate_scores, export_attention, group_stats, real_fake_experiment, RealFakeReport};
use crate::corpus::{
    load_corpus, make_turn_pairs, synth_corpus, write_corpus, Conversation, MetadataSidecar, TranscriptOptions,
};
use crate::entrainment::{both_directions, write_jsonl, BaselineScorer, CedResult, CedScorer, PairScorer};
use crate::model::{load_checkpoint, CedModel, ModelConfig};
use crate::training::{train_with_observer, BEST_CHECKPOINT};

pub const HISTORY_FILE: &str = "history.jsonl";

pub struct Context {
    pub global: GlobalArgs,
    pub file: FileConfig,
}

impl Context {
    /// `--seed`, else the file's top-level `seed`.
    fn seed(&self) -> Option<u64> {
        self.global.seed.or(self.file.seed)
    }
}

fn require_input(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CedError::Config(format!("{what} {} does not exist", path.display())))
    }
}

fn check_output(path: &Path, force: bool) -> Result<()> {
    let occupied = if path.is_dir() {
        std::fs::read_dir(path).map(|mut d| d.next().is_some()).unwrap_or(true)
    } else {
        path.exists()
    };
    if occupied && !force {
        return Err(CedError::Config(format!("{} already exists; pass --force to replace it", path.display())));
    }
    Ok(())
}

fn sidecar_manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serialises")
}

fn load(ctx: &Context, corpus: &Path) -> Result<Vec<Conversation>> {
    require_input(corpus, "corpus")?;
    let analysis = ctx.file.analysis()?;
    analysis.validate()?;
    let sessions = load_corpus(corpus, &TranscriptOptions { pause_threshold: analysis.pause_threshold })?;
    info!("loaded {} session(s) from {}", sessions.len(), corpus.display());
    Ok(sessions)
}

fn corpus_dim(sessions: &[Conversation]) -> Result<usize> {
    sessions
        .iter()
        .flat_map(|c| &c.turns)
        .find_map(|t| t.features.as_ref().map(|f| f.dim()))
        .ok_or_else(|| CedError::EmptyCorpus("no turn has features".into()))
}

/// Model config: defaults (or the toy preset), then the file's `[model]`,
/// then flags. The input dimension follows the corpus unless pinned.
fn model_config(ctx: &Context, args: &ModelArgs, dim: usize) -> Result<ModelConfig> {
    let base = if args.toy { ModelConfig::toy(dim) } else { ModelConfig::default() };
    let mut value = to_json(&base);
    if let serde_json::Value::Object(map) = &mut value {
        let file = serde_json::to_value(&ctx.file.model).map_err(|e| CedError::Config(format!("[model]: {e}")))?;
        if let serde_json::Value::Object(over) = file {
            map.extend(over);
        }
    }
    // validates key names and types
    ctx.file.model()?;
    let mut cfg: ModelConfig = serde_json::from_value(value).map_err(|e| CedError::Config(format!("[model]: {e}")))?;
    if !ctx.file.model_sets_input_dim() {
        cfg.input_dim = dim;
    }
    overlay(&mut cfg.dropout, args.dropout);
    overlay(&mut cfg.max_frames, args.max_frames);
    overlay(&mut cfg.init_seed, ctx.seed());
    cfg.validate()?;
    if cfg.input_dim != dim {
        return Err(CedError::Dimension(format!("corpus features have dim {dim}, model config expects {}", cfg.input_dim)));
    }
    Ok(cfg)
}

fn model_from(ctx: &Context, source: &ModelSource, dim: usize) -> Result<(CedModel, serde_json::Value)> {
    match &source.checkpoint {
        Some(path) => {
            require_input(path, "checkpoint")?;
            let model = load_checkpoint(path)?;
            if model.config().input_dim != dim {
                return Err(CedError::Dimension(format!(
                    "corpus features have dim {dim}, checkpoint expects {}",
                    model.config().input_dim
                )));
            }
            let desc = serde_json::json!({ "checkpoint": path, "model": to_json(model.config()) });
            Ok((model, desc))
        }
        None => {
            let cfg = model_config(ctx, &source.model, dim)?;
            let desc = serde_json::json!({ "random_init": true, "model": to_json(&cfg) });
            Ok((CedModel::new(cfg)?, desc))
        }
    }
}

fn beta(ctx: &Context, flag: Option<f64>) -> Result<f64> {
    let mut a = ctx.file.analysis()?;
    overlay(&mut a.beta, flag);
    a.validate()?;
    Ok(a.beta)
}

pub fn synth(ctx: &Context, args: SynthArgs) -> Result<()> {
    let mut cfg = ctx.file.synth()?;
    overlay(&mut cfg.n_sessions, args.sessions);
    overlay(&mut cfg.turns_per_session, args.turns);
    overlay(&mut cfg.dim, args.dim);
    overlay(&mut cfg.entrainment_strength, args.alpha);
    overlay(&mut cfg.noise_scale, args.noise);
    overlay(&mut cfg.seed, ctx.seed());
    cfg.validate()?;
    check_output(&args.out, ctx.global.force)?;

    let sessions = synth_corpus(&cfg)?;
    let mut staging = args.out.as_os_str().to_owned();
    staging.push(".partial");
    let staging = PathBuf::from(staging);
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| CedError::io(format!("clearing {}", staging.display()), e))?;
    }
    let files = write_corpus(&staging, &sessions)?;
    let mut manifest = RunManifest::new("synth", serde_json::json!({ "synth": to_json(&cfg) }), [("synth".to_string(), cfg.seed)].into());
    manifest.output_paths = files.iter().map(|f| f.strip_prefix(&staging).unwrap_or(f).to_path_buf()).collect();
    manifest.write(&staging.join(MANIFEST_FILE))?;
    if args.out.exists() {
        std::fs::remove_dir_all(&args.out).map_err(|e| CedError::io(format!("replacing {}", args.out.display()), e))?;
    }
    std::fs::rename(&staging, &args.out).map_err(|e| CedError::io(format!("finalising {}", args.out.display()), e))?;
    println!("wrote {} sessions ({} files) to {}", sessions.len(), files.len(), args.out.display());
    Ok(())
}

pub fn train(ctx: &Context, args: TrainArgs) -> Result<()> {
    let mut tcfg = ctx.file.train()?;
    overlay(&mut tcfg.learning_rate, args.learning_rate);
    overlay(&mut tcfg.batch_size, args.batch_size);
    overlay(&mut tcfg.max_epochs, args.max_epochs);
    overlay(&mut tcfg.patience, args.patience);
    overlay(&mut tcfg.val_fraction, args.val_fraction);
    overlay(&mut tcfg.seed, ctx.seed());
    if args.fixed_shuffles {
        tcfg.fresh_shuffles = false;
    }
    tcfg.checkpoint_dir = Some(args.out.clone());
    tcfg.validate()?;
    let sessions = load(ctx, &args.corpus)?;
    let mcfg = model_config(ctx, &args.model, corpus_dim(&sessions)?)?;
    check_output(&args.out, ctx.global.force)?;

    let effective = serde_json::json!({ "model": to_json(&mcfg), "train": to_json(&tcfg) });
    let mut manifest = RunManifest::new(
        "train",
        effective,
        [("train".to_string(), tcfg.seed), ("init".to_string(), mcfg.init_seed)].into(),
    );
    manifest.input_paths = vec![args.corpus.clone()];
    manifest.output_paths = vec![PathBuf::from(BEST_CHECKPOINT), PathBuf::from(HISTORY_FILE)];
    std::fs::create_dir_all(&args.out).map_err(|e| CedError::io(format!("creating {}", args.out.display()), e))?;
    manifest.write(&args.out.join(MANIFEST_FILE))?;

    let model = CedModel::new(mcfg)?;
    println!("training {} parameters on {} sessions", model.param_count(), sessions.len());
    let outcome = train_with_observer(model, &sessions, &tcfg, |r| {
        println!(
            "epoch {:>3}  train {:.5}  val {:.5}  acc {:.4}  {:.1}s",
            r.epoch, r.train_loss, r.val_loss, r.val_accuracy, r.wall_time
        );
    })?;
    let mut history = Vec::new();
    for r in &outcome.history {
        writeln!(history, "{}", serde_json::to_string(r).expect("record serialises"))
            .map_err(|e| CedError::io("buffering history", e))?;
    }
    write_atomic(&args.out.join(HISTORY_FILE), &history)?;
    println!("best epoch {}; checkpoint {}", outcome.best_epoch, args.out.join(BEST_CHECKPOINT).display());
    Ok(())
}

/// Manifest first, then the report itself via rename.
fn finish_report(
    command: &str,
    out: &Path,
    bytes: &[u8],
    effective: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
) -> Result<()> {
    let mut manifest = RunManifest::new(command, effective, seeds);
    manifest.input_paths = inputs;
    manifest.output_paths = vec![out.to_path_buf()];
    manifest.write(&sidecar_manifest_path(out))?;
    write_atomic(out, bytes)
}

pub fn validate(ctx: &Context, args: ValidateArgs) -> Result<()> {
    let mut analysis = ctx.file.analysis()?;
    overlay(&mut analysis.repeats, args.repeats);
    analysis.validate()?;
    check_output(&args.out, ctx.global.force)?;
    let sessions = load(ctx, &args.corpus)?;
    let (model, model_desc) = model_from(ctx, &args.source, corpus_dim(&sessions)?)?;
    let seed = ctx.seed().unwrap_or(0);
    let scorer: Box<dyn PairScorer + '_> = match args.scorer {
        ScorerKind::Ced => Box::new(CedScorer { model: &model, beta: analysis.beta }),
        ScorerKind::Baseline1 => Box::new(BaselineScorer { beta: analysis.beta }),
    };
    let corpus_id = args.corpus.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let report = real_fake_experiment(scorer.as_ref(), &corpus_id, &sessions, analysis.repeats, seed)?;
    print_real_fake(&report);
    let effective = serde_json::json!({
        "analysis": to_json(&analysis),
        "scorer": scorer.name(),
        "source": model_desc,
    });
    let bytes = serde_json::to_vec_pretty(&report).expect("report serialises");
    let mut inputs = vec![args.corpus.clone()];
    inputs.extend(args.source.checkpoint.clone());
    finish_report("validate", &args.out, &bytes, effective, [("validate".into(), seed)].into(), inputs)
}

fn print_real_fake(r: &RealFakeReport) {
    println!("corpus     {}", r.corpus_id);
    println!("scorer     {}", r.scorer);
    println!("sessions   {} ({} skipped)", r.sessions, r.skipped);
    println!("repeats    {}", r.repeats);
    println!("accuracy   {:.4} ± {:.4}", r.mean_accuracy, r.stddev);
}

/// CED records for the requested directions; sessions lacking a direction
/// are skipped with a warning.
fn ced_records(model: &CedModel, sessions: &[Conversation], which: DirectionArg, beta: f64) -> Result<Vec<CedResult>> {
    let scorer = CedScorer { model, beta };
    let per_session: Vec<Vec<CedResult>> = sessions
        .par_iter()
        .map(|conv| {
            let [ab, ba] = both_directions(conv);
            let wanted = match which {
                DirectionArg::Ab => vec![ab],
                DirectionArg::Ba => vec![ba],
                DirectionArg::Both => vec![ab, ba],
            };
            let mut out = Vec::new();
            for d in wanted {
                match crate::entrainment::score_session(&scorer, conv, &d) {
                    Ok(r) => out.push(r),
                    Err(CedError::NoPairs(m)) => warn!("skipping: no pairs in direction {m}"),
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let records: Vec<CedResult> = per_session.into_iter().flatten().collect();
    if records.is_empty() {
        return Err(CedError::NoPairs("any requested direction".into()));
    }
    Ok(records)
}

pub fn ced(ctx: &Context, args: CedArgs) -> Result<()> {
    let beta = beta(ctx, args.beta)?;
    check_output(&args.out, ctx.global.force)?;
    let sessions = load(ctx, &args.corpus)?;
    let (model, model_desc) = model_from(ctx, &args.source, corpus_dim(&sessions)?)?;
    let records = ced_records(&model, &sessions, args.direction, beta)?;
    let mut buf = Vec::new();
    write_jsonl(&records, &mut buf)?;
    println!("{} session record(s)", records.len());
    let effective = serde_json::json!({
        "beta": beta,
        "direction": format!("{:?}", args.direction).to_lowercase(),
        "source": model_desc,
    });
    let mut inputs = vec![args.corpus.clone()];
    inputs.extend(args.source.checkpoint.clone());
    finish_report("ced", &args.out, &buf, effective, BTreeMap::new(), inputs)
}

fn metadata_for(sessions: &[Conversation], path: Option<&Path>) -> Result<MetadataSidecar> {
    match path {
        Some(p) => {
            require_input(p, "metadata file")?;
            MetadataSidecar::load(p)
        }
        None => Ok(MetadataSidecar {
            sessions: sessions.iter().map(|c| (c.session_id.clone(), c.metadata.clone())).collect(),
        }),
    }
}

#[derive(Serialize)]
struct CorrelationLine<'a> {
    score_name: &'a str,
    direction: &'a str,
    skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    significant: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn correlate(ctx: &Context, args: CorrelateArgs) -> Result<()> {
    let beta = beta(ctx, args.beta)?;
    check_output(&args.out, ctx.global.force)?;
    let sessions = load(ctx, &args.corpus)?;
    let meta = metadata_for(&sessions, args.metadata.as_deref())?;
    let missing: Vec<&str> = args
        .scores
        .iter()
        .filter(|s| !meta.sessions.values().any(|m| m.scores.contains_key(*s)))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(CedError::MissingMetadata(format!("no session has score(s): {}", missing.join(", "))));
    }
    let (model, model_desc) = model_from(ctx, &args.source, corpus_dim(&sessions)?)?;
    let records = ced_records(&model, &sessions, DirectionArg::Both, beta)?;
    let outcomes = correlate_scores(&records, &meta, &args.scores);

    let mut buf = Vec::new();
    println!("{:<20} {:<12} {:>5} {:>9} {:>10}", "score", "direction", "n", "rho", "p");
    for o in &outcomes {
        let line = match &o.result {
            Ok(r) => {
                let mark = if r.significant { "*" } else { "" };
                println!("{:<20} {:<12} {:>5} {:>9.4} {:>10.3e}{mark}", r.score_name, r.direction, r.n, r.rho, r.p_value);
                CorrelationLine {
                    score_name: &o.score_name,
                    direction: &o.direction,
                    skipped: o.skipped,
                    n: Some(r.n),
                    rho: Some(r.rho),
                    p_value: Some(r.p_value),
                    significant: Some(r.significant),
                    error: None,
                }
            }
            Err(e) => {
                println!("{:<20} {:<12} {e}", o.score_name, o.direction);
                CorrelationLine {
                    score_name: &o.score_name,
                    direction: &o.direction,
                    skipped: o.skipped,
                    n: None,
                    rho: None,
                    p_value: None,
                    significant: None,
                    error: Some(e.to_string()),
                }
            }
        };
        writeln!(buf, "{}", serde_json::to_string(&line).expect("serialisable")).map_err(|e| CedError::io("buffering", e))?;
    }
    let effective = serde_json::json!({ "beta": beta, "scores": args.scores, "source": model_desc });
    let mut inputs = vec![args.corpus.clone()];
    inputs.extend(args.source.checkpoint.clone());
    inputs.extend(args.metadata.clone());
    finish_report("correlate", &args.out, &buf, effective, BTreeMap::new(), inputs)
}

pub fn groups(ctx: &Context, args: GroupsArgs) -> Result<()> {
    let beta = beta(ctx, args.beta)?;
    check_output(&args.out, ctx.global.force)?;
    let sessions = load(ctx, &args.corpus)?;
    let meta = metadata_for(&sessions, args.metadata.as_deref())?;
    let (model, model_desc) = model_from(ctx, &args.source, corpus_dim(&sessions)?)?;
    let records = ced_records(&model, &sessions, DirectionArg::Both, beta)?;
    let report = group_stats(&records, &meta);
    if report.stats.is_empty() {
        return Err(CedError::MissingMetadata("no session has both gender and age".into()));
    }
    let mut buf = Vec::new();
    println!("{:<8} {:<8} {:<12} {:>5} {:>12}", "gender", "band", "direction", "n", "mean |CED|");
    for s in &report.stats {
        println!("{:<8} {:<8} {:<12} {:>5} {:>12.6}", s.gender, format!("{:?}", s.age_band), s.direction, s.n, s.mean_abs_ced);
        writeln!(buf, "{}", serde_json::to_string(s).expect("serialisable")).map_err(|e| CedError::io("buffering", e))?;
    }
    if report.excluded > 0 {
        println!("{} record(s) excluded for missing gender or age", report.excluded);
    }
    let effective = serde_json::json!({ "beta": beta, "source": model_desc });
    let mut inputs = vec![args.corpus.clone()];
    inputs.extend(args.source.checkpoint.clone());
    inputs.extend(args.metadata.clone());
    finish_report("groups", &args.out, &buf, effective, BTreeMap::new(), inputs)
}

pub fn attention(ctx: &Context, args: AttentionArgs) -> Result<()> {
    check_output(&args.out, ctx.global.force)?;
    let sessions = load(ctx, &args.corpus)?;
    let conv = sessions
        .iter()
        .find(|c| c.session_id == args.session)
        .ok_or_else(|| CedError::EmptyInput(format!("session {} not in corpus", args.session)))?;
    let pairs = make_turn_pairs(conv)?;
    let pair = pairs
        .get(args.pair)
        .ok_or_else(|| CedError::NoPairs(format!("pair {} of session {} ({} pairs)", args.pair, args.session, pairs.len())))?;
    let (model, model_desc) = model_from(ctx, &args.source, corpus_dim(&sessions)?)?;
    let (records, files) = export_attention(&model, pair, &args.out)?;
    for r in &records {
        let (h, q, k) = r.weights.dim();
        println!("{} depth {}: {h} heads × {q} × {k}", r.layer, r.depth);
    }
    let effective = serde_json::json!({ "session": args.session, "pair": args.pair, "source": model_desc });
    let mut manifest = RunManifest::new("attention", effective, BTreeMap::new());
    manifest.input_paths = vec![args.corpus.clone()];
    manifest.input_paths.extend(args.source.checkpoint.clone());
    manifest.output_paths = files;
    manifest.write(&args.out.join(MANIFEST_FILE))
}
