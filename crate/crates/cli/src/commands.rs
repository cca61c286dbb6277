use std::path::{Path, PathBuf};

use rumorsage::config::RunConfig;
use rumorsage::corpus::{
    attach_evidence, load_events, load_evidence, load_pairs, load_wiki_corpus, save_events, save_evidence, Event,
    EventSchema, PairRecord, Relation, WikiCorpus,
};
use rumorsage::diagnostics::{grad_check_suite, SUITE_TOLERANCE};
use rumorsage::erm::{
    encode_pairs, pair_vocab, run_erm, verifier_checkpoint, verifier_from_checkpoint, TfIdfIndex, Verifier,
    VerifierBundle, VerifierTraining,
};
use rumorsage::exec::Executor;
use rumorsage::experiment::{
    self as experiment, curve_csv, early_detection_curve, evidence_count_sweep, evidence_distribution, metric_records,
    metrics_table, model_from_checkpoint, prepare_all, refutes_probability, split_dataset, split_events, train_options,
    train_run, vocab_from_events, write_jsonl, write_text, MetricRecord, Split, CHECKPOINT_FILE, CONFIG_FILE,
    EARLY_COUNTS, SPLIT_FILE, VOCAB_FILE,
};
use rumorsage::graph::{conversation_topology, evidence_topology};
use rumorsage::model::RdmModel;
use rumorsage::numerics::{Checkpoint, ModelParams};
use rumorsage::synthetic::negation_pairs;
use rumorsage::text::{load_embeddings, EmbeddingTable, Vocab};

use crate::failure::{Failure, Outcome};
use crate::{ConfigArgs, EventArgs, RunArgs, WorkerArgs, DATA_DIR_ENV};

pub const VERIFIER_CHECKPOINT: &str = "verifier.bin";

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Train,
    Val,
    Test,
    All,
}

impl Part {
    fn name(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Val => "val",
            Part::Test => "test",
            Part::All => "all",
        }
    }
}

fn input(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            return Path::new(&dir).join(path);
        }
    }
    path.to_path_buf()
}

fn out_dir(out: &Path) -> Outcome {
    std::fs::create_dir_all(out).map_err(|e| Failure::data(format!("cannot create {}: {e}", out.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::data(e.to_string()))?;
    Ok(write_text(path, &(text + "\n"))?)
}

fn resolve_config(args: &ConfigArgs, fallback: Option<&Path>) -> Outcome<RunConfig> {
    let file = args.config.as_deref().map(input).or_else(|| fallback.map(Path::to_path_buf));
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    Ok(RunConfig::resolve(file.as_deref(), &overrides)?)
}

fn executor(args: &WorkerArgs) -> Outcome<Executor> {
    Ok(Executor::new(args.workers)?)
}

fn load_data(args: &EventArgs, corpus: Option<&WikiCorpus>) -> Outcome<Vec<Event>> {
    let mut events = load_events(&input(&args.events), EventSchema::PhemeLike)?.events;
    if let Some(path) = &args.evidence {
        attach_evidence(&mut events, &load_evidence(&input(path), corpus)?);
    }
    Ok(events)
}

fn train_vocab(events: &[Event], config: &RunConfig) -> Outcome<(Split, Vocab)> {
    let ids: Vec<String> = events.iter().map(|e| e.event_id.clone()).collect();
    let split = split_dataset(&ids, config.seed)?;
    let vocab = vocab_from_events(&split_events(events, &split.train)?, config.vocab_size)?;
    Ok((split, vocab))
}

fn split_json(split: &Split) -> Outcome<String> {
    serde_json::to_string_pretty(split).map_err(|e| Failure::data(e.to_string()))
}

pub fn ingest(data: &EventArgs, wiki: Option<&Path>, out: &Path) -> Outcome {
    let corpus = wiki.map(|p| load_wiki_corpus(&input(p))).transpose()?;
    let loaded = load_events(&input(&data.events), EventSchema::PhemeLike)?;
    let mut events = loaded.events;
    if let Some(path) = &data.evidence {
        attach_evidence(&mut events, &load_evidence(&input(path), corpus.as_ref())?);
    }
    for e in &events {
        if !conversation_topology(&e.source, &e.sorted_replies())?.is_tree() {
            return Err(Failure::data(format!("event {}: conversation graph is not a tree", e.event_id)));
        }
        let k = e.evidence.as_ref().map_or(0, |r| r.sentences.len());
        if !evidence_topology(k).is_star() {
            return Err(Failure::data(format!("event {}: evidence graph is not a star", e.event_id)));
        }
    }
    out_dir(out)?;
    save_events(&events, &out.join("events.jsonl"))?;
    let with_evidence = events.iter().filter(|e| e.evidence.is_some()).count();
    if with_evidence > 0 {
        save_evidence(&events, &out.join("evidence.jsonl"))?;
    }
    let summary = serde_json::json!({
        "events": loaded.stats.events,
        "posts": loaded.stats.posts,
        "orphans": loaded.stats.orphans,
        "with_evidence": with_evidence,
        "documents": corpus.as_ref().map_or(0, WikiCorpus::len),
    });
    write_json(&out.join("ingest.json"), &summary)?;
    println!("{summary}");
    Ok(())
}

pub fn build_vocab(data: &EventArgs, config: &ConfigArgs, out: &Path) -> Outcome {
    let config = resolve_config(config, None)?;
    let events = load_data(data, None)?;
    let (split, vocab) = train_vocab(&events, &config)?;
    out_dir(out)?;
    vocab.save(&out.join(VOCAB_FILE))?;
    write_text(&out.join(SPLIT_FILE), &split_json(&split)?)?;
    config.save(&out.join(CONFIG_FILE))?;
    println!("vocabulary {} tokens from {} training events", vocab.len(), split.train.len());
    Ok(())
}

pub fn index(wiki: &Path, out: &Path) -> Outcome {
    let corpus = load_wiki_corpus(&input(wiki))?;
    let index = TfIdfIndex::build(&corpus);
    out_dir(out)?;
    let summary = serde_json::json!({ "documents": index.n_docs(), "terms": index.n_terms() });
    write_json(&out.join("index.json"), &summary)?;
    println!("{summary}");
    Ok(())
}

struct LoadedVerifier {
    verifier: Verifier,
    params: ModelParams,
    vocab: Vocab,
    max_len: usize,
}

fn load_verifier(dir: &Path) -> Outcome<LoadedVerifier> {
    let ckpt = Checkpoint::load(&dir.join(VERIFIER_CHECKPOINT))?;
    let (config, verifier, params) = verifier_from_checkpoint(&ckpt)?;
    let vocab = Vocab::load(&dir.join(VOCAB_FILE), config.vocab_size)?;
    Ok(LoadedVerifier {
        verifier,
        params,
        vocab,
        max_len: config.max_len,
    })
}

pub fn retrieve(
    events: &Path,
    wiki: &Path,
    verifier: Option<&Path>,
    config: &ConfigArgs,
    workers: &WorkerArgs,
    out: &Path,
) -> Outcome {
    let config = resolve_config(config, None)?;
    let exec = executor(workers)?;
    let corpus = load_wiki_corpus(&input(wiki))?;
    let mut events = load_events(&input(events), EventSchema::PhemeLike)?.events;
    let loaded = verifier.map(|d| load_verifier(&input(d))).transpose()?;
    let bundle = loaded.as_ref().map(|v| VerifierBundle {
        verifier: &v.verifier,
        params: &v.params,
        vocab: &v.vocab,
        max_len: v.max_len,
    });
    let index = TfIdfIndex::build(&corpus);
    let records = run_erm(&events, &index, &config.erm_options(), bundle, &exec)?;
    let mut counts = [0usize; 3];
    for (e, r) in events.iter_mut().zip(records) {
        counts[r.relation.class_index()] += 1;
        e.evidence = Some(r);
    }
    out_dir(out)?;
    save_evidence(&events, &out.join("evidence.jsonl"))?;
    config.save(&out.join(CONFIG_FILE))?;
    let summary = serde_json::json!({
        "events": events.len(),
        "supported": counts[Relation::Supported.class_index()],
        "refuted": counts[Relation::Refuted.class_index()],
        "nei": counts[Relation::Nei.class_index()],
        "verified": loaded.is_some(),
    });
    write_json(&out.join("retrieve.json"), &summary)?;
    println!("{summary}");
    Ok(())
}

fn embeddings_for(path: Option<&Path>, vocab: &Vocab, config: &RunConfig) -> Outcome<EmbeddingTable> {
    Ok(match path {
        Some(p) => load_embeddings(&input(p), vocab, config.embed_dim, config.seed)?,
        None => EmbeddingTable::random(vocab, config.embed_dim, config.seed),
    })
}

pub fn train_verifier(
    pairs: Option<&Path>,
    synthetic: Option<usize>,
    epochs: usize,
    embeddings: Option<&Path>,
    config: &ConfigArgs,
    out: &Path,
) -> Outcome {
    let config = resolve_config(config, None)?;
    let all: Vec<PairRecord> = match (pairs, synthetic) {
        (Some(p), _) => load_pairs(&input(p))?,
        (None, Some(n)) => negation_pairs(n, config.seed)
            .into_iter()
            .map(|(claim, sentence, relation)| PairRecord {
                claim,
                sentence,
                relation,
            })
            .collect(),
        (None, None) => return Err(Failure::usage("one of --pairs or --synthetic is required")),
    };
    // Every tenth pair is held out.
    let (heldout, train): (Vec<_>, Vec<_>) = all.into_iter().enumerate().partition(|(i, _)| i % 10 == 9);
    let train: Vec<PairRecord> = train.into_iter().map(|(_, p)| p).collect();
    let heldout: Vec<PairRecord> = heldout.into_iter().map(|(_, p)| p).collect();
    if train.is_empty() {
        return Err(Failure::data("no verifier training pairs"));
    }

    let vocab = pair_vocab(&train, config.vocab_size)?;
    let verifier = Verifier::new(config.verifier_config(), embeddings_for(embeddings, &vocab, &config)?)?;
    let mut params = verifier.init_params(config.seed);
    let train_pairs = encode_pairs(&train, &vocab, config.max_len);
    let opts = VerifierTraining {
        epochs,
        batch_size: config.batch_size,
        seed: config.seed,
        adam: config.adam_config(),
    };
    let (losses, adam) = verifier.train(&mut params, &train_pairs, &opts)?;
    let train_acc = verifier.pair_accuracy(&params, &train_pairs)?;
    let heldout_acc = if heldout.is_empty() {
        None
    } else {
        Some(verifier.pair_accuracy(&params, &encode_pairs(&heldout, &vocab, config.max_len))?)
    };

    out_dir(out)?;
    verifier_checkpoint(&config, &verifier, &params, adam).save(&out.join(VERIFIER_CHECKPOINT))?;
    vocab.save(&out.join(VOCAB_FILE))?;
    config.save(&out.join(CONFIG_FILE))?;
    let summary = serde_json::json!({
        "train_pairs": train.len(),
        "heldout_pairs": heldout.len(),
        "train_accuracy": train_acc,
        "heldout_accuracy": heldout_acc,
        "epoch_losses": losses,
    });
    write_json(&out.join("verifier.json"), &summary)?;
    println!("train accuracy {train_acc:.4}, held-out accuracy {}", heldout_acc.map_or("n/a".into(), |a| format!("{a:.4}")));
    Ok(())
}

pub fn train(
    data: &EventArgs,
    embeddings: Option<&Path>,
    vocab: Option<&Path>,
    config: &ConfigArgs,
    workers: &WorkerArgs,
    out: &Path,
) -> Outcome {
    let config = resolve_config(config, None)?;
    let exec = executor(workers)?;
    let events = load_data(data, None)?;
    let vocab = match vocab {
        Some(p) => Vocab::load(&input(p), config.vocab_size)?,
        None => train_vocab(&events, &config)?.1,
    };
    let table = embeddings_for(embeddings, &vocab, &config)?;
    let run = train_run(&events, &config, Some(vocab), Some(table), &exec)?;
    run.write(out)?;
    print!("{}", metrics_table("test", &run.test_metrics));
    println!("best epoch {} of {}", run.outcome.best_epoch, run.outcome.log.len());
    Ok(())
}

/// A trained run reloaded for scoring.
struct LoadedRun {
    config: RunConfig,
    model: RdmModel,
    params: ModelParams,
    vocab: Vocab,
    events: Vec<Event>,
    ids: Vec<String>,
}

fn load_run(args: &RunArgs) -> Outcome<LoadedRun> {
    let dir = input(&args.run);
    let config = resolve_config(&args.config, Some(&dir.join(CONFIG_FILE)))?;
    let ckpt = Checkpoint::load(&dir.join(CHECKPOINT_FILE))?;
    let (model, params) = model_from_checkpoint(&ckpt, &config)?;
    let vocab = Vocab::load(&dir.join(VOCAB_FILE), config.vocab_size)?;
    let split_path = dir.join(SPLIT_FILE);
    let text = std::fs::read_to_string(&split_path).map_err(|e| Failure::usage(format!("{}: {e}", split_path.display())))?;
    let split: Split =
        serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", split_path.display())))?;
    let events = load_data(&args.data, None)?;
    let ids = match args.part {
        Part::Train => split.train,
        Part::Val => split.val,
        Part::Test => split.test,
        Part::All => events.iter().map(|e| e.event_id.clone()).collect(),
    };
    Ok(LoadedRun {
        config,
        model,
        params,
        vocab,
        events,
        ids,
    })
}

pub fn evaluate(args: &RunArgs) -> Outcome {
    let exec = executor(&args.workers)?;
    let run = load_run(args)?;
    let events = split_events(&run.events, &run.ids)?;
    let prepared = prepare_all(&events, &run.vocab, &run.config.prepare_options(), &exec)?;
    let metrics = experiment::evaluate(&run.model, &run.params, &prepared, &exec)?;
    let part = args.part.name();
    out_dir(&args.out)?;
    let fp = run.config.fingerprint();
    write_jsonl(&args.out.join("metrics.jsonl"), &metric_records(&metrics, &fp, None, Some(part)))?;
    let table = metrics_table(part, &metrics);
    write_text(&args.out.join("metrics.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn early_detect(args: &RunArgs, counts: &[usize]) -> Outcome {
    let counts = if counts.is_empty() { &EARLY_COUNTS[..] } else { counts };
    let exec = executor(&args.workers)?;
    let run = load_run(args)?;
    let events = split_events(&run.events, &run.ids)?;
    let curve = early_detection_curve(
        &run.model,
        &run.params,
        &events,
        &run.vocab,
        &run.config.prepare_options(),
        counts,
        &exec,
    )?;
    out_dir(&args.out)?;
    let csv = curve_csv("replies", &curve);
    write_text(&args.out.join("early_detection.csv"), &csv)?;
    let fp = run.config.fingerprint();
    let records: Vec<MetricRecord> = curve
        .iter()
        .flat_map(|(n, m)| metric_records(m, &fp, Some(*n as f64), Some(args.part.name())))
        .collect();
    write_jsonl(&args.out.join("early_detection.jsonl"), &records)?;
    print!("{csv}");
    Ok(())
}

pub fn analyze_evidence(
    data: &EventArgs,
    sweep: bool,
    max_evidence: usize,
    config: &ConfigArgs,
    workers: &WorkerArgs,
    out: &Path,
) -> Outcome {
    let events = load_data(data, None)?;
    let dist = evidence_distribution(&events)?;
    let refutes = refutes_probability(&events)?;
    let sweep_rows = if sweep {
        let config = resolve_config(config, None)?;
        let exec = executor(workers)?;
        let (split, vocab) = train_vocab(&events, &config)?;
        let mut table = EmbeddingTable::random(&vocab, config.embed_dim, config.seed);
        table.frozen = config.freeze_embeddings;
        let model = RdmModel::new(config.rdm_config(), table)?;
        let init = model.init_params(config.seed);
        let counts: Vec<usize> = (0..=max_evidence).collect();
        Some(evidence_count_sweep(
            &model,
            &init,
            &split_events(&events, &split.train)?,
            &split_events(&events, &split.val)?,
            &split_events(&events, &split.test)?,
            &vocab,
            &config.prepare_options(),
            &counts,
            &train_options(&config),
            &exec,
        )?)
    } else {
        None
    };

    out_dir(out)?;
    let summary = serde_json::json!({ "distribution": dist, "refutes": refutes });
    write_json(&out.join("evidence_analysis.json"), &summary)?;
    let text = format!(
        "evidence records {}\nsupported {:.4}  refuted {:.4}  nei {:.4}\nP(rumor) {:.4}  P(rumor | REFUTED) {}  increment {}\n",
        dist.total,
        dist.fractions[0],
        dist.fractions[1],
        dist.fractions[2],
        refutes.p_rumor,
        refutes.p_rumor_given_refuted.map_or("undefined".into(), |p| format!("{p:.4}")),
        refutes.increment.map_or("undefined".into(), |p| format!("{p:+.4}")),
    );
    write_text(&out.join("evidence_analysis.txt"), &text)?;
    print!("{text}");
    if let Some(rows) = sweep_rows {
        let mut csv = String::from("n_evidence,screened,accuracy,best_epoch\n");
        for r in &rows {
            csv += &format!("{},{},{},{}\n", r.n_evidence, r.screened, r.accuracy, r.best_epoch);
        }
        write_text(&out.join("evidence_sweep.csv"), &csv)?;
        print!("{csv}");
    }
    Ok(())
}

pub fn grad_check(seed: u64, out: &Path) -> Outcome {
    let entries = grad_check_suite(seed)?;
    out_dir(out)?;
    let records: Vec<serde_json::Value> = entries
        .iter()
        .map(|e| {
            serde_json::json!({
                "case": e.name,
                "max_rel_error": e.report.max_rel_error,
                "coords_checked": e.report.coords_checked,
                "worst": e.report.worst,
            })
        })
        .collect();
    write_jsonl(&out.join("grad_check.jsonl"), &records)?;
    let mut worst = 0.0f64;
    for e in &entries {
        println!("{:<16} {:.3e} ({} coords)", e.name, e.report.max_rel_error, e.report.coords_checked);
        worst = worst.max(e.report.max_rel_error);
    }
    println!("max_rel_error {worst:.3e}");
    if worst >= SUITE_TOLERANCE {
        return Err(Failure::numeric(format!("max relative error {worst:.3e} >= {SUITE_TOLERANCE:e}")));
    }
    Ok(())
}
