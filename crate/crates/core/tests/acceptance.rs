//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Seeds are fixed here and never tuned per outcome.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rumorsage::config::RunConfig;
use rumorsage::corpus::{load_events, Event, EventSchema, PairRecord, WikiCorpus};
use rumorsage::diagnostics::{grad_check_suite, SUITE_TOLERANCE};
use rumorsage::erm::{encode_pairs, pair_vocab, Query, TfIdfIndex, Verifier, VerifierTraining};
use rumorsage::exec::Executor;
use rumorsage::experiment::{
    curve_csv, early_detection_curve, event_texts, evidence_distribution, refutes_probability, split_sizes,
    train_run, EARLY_COUNTS, LOG_FILE, CHECKPOINT_FILE,
};
use rumorsage::graph::{conversation_topology, evidence_topology};
use rumorsage::model::{prepare_event, PrepareOptions, RdmModel};
use rumorsage::synthetic::{negation_pairs, planted_dataset, random_event, retrieval_fixture, PlantedConfig};
use rumorsage::text::{build_vocab, clean_tokens, EmbeddingTable};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn resolve(overrides: &[&str], seed: u64) -> RunConfig {
    let mut ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ov.push(format!("seed={seed}"));
    RunConfig::resolve(None, &ov).expect("valid acceptance config")
}

fn gradients() -> Outcome {
    let mut worst = (0.0f64, "");
    for e in grad_check_suite(1).map_err(|e| e.to_string())? {
        if e.report.max_rel_error >= worst.0 {
            worst = (e.report.max_rel_error, e.name);
        }
    }
    ensure(worst.0 < SUITE_TOLERANCE, || format!("max rel error {:.3e} in {}", worst.0, worst.1))?;
    Ok(format!("max rel error {:.3e} ({})", worst.0, worst.1))
}

fn permutation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let events: Vec<Event> = (0..100).map(|i| random_event(&mut rng, &format!("p{i}"), 12, 5)).collect();
    let texts: Vec<&str> = events.iter().flat_map(event_texts).collect();
    let vocab = build_vocab(texts.iter().map(|t| clean_tokens(t)), 500).map_err(|e| e.to_string())?;
    let cfg = resolve(&["embed_dim=8", "hidden=8", "layers=2", "sage_dims=[8, 8]"], 2);
    let model = RdmModel::new(cfg.rdm_config(), EmbeddingTable::random(&vocab, 8, 2)).map_err(|e| e.to_string())?;
    let params = model.init_params(2);
    for e in &events {
        let p = prepare_event(e, &vocab, &PrepareOptions::default()).map_err(|e| e.to_string())?;
        let q = common::relabel(&p, &mut rng);
        let a = model.predict(&params, &p).map_err(|e| e.to_string())?;
        let b = model.predict(&params, &q).map_err(|e| e.to_string())?;
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure(bits(&a) == bits(&b), || format!("{}: {a:?} vs {b:?}", e.event_id))?;
    }
    Ok("100 relabeled graphs bit-identical".into())
}

fn graphs() -> Outcome {
    let fixture = load_events(&common::fixture("pheme_events.jsonl"), EventSchema::PhemeLike).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let generated: Vec<Event> = (0..1000).map(|i| random_event(&mut rng, &format!("g{i}"), 15, 6)).collect();
    let all: Vec<&Event> = fixture.events.iter().chain(&generated).collect();
    for e in &all {
        let conv = conversation_topology(&e.source, &e.sorted_replies()).map_err(|e| e.to_string())?;
        ensure(conv.is_tree(), || format!("{} is not a tree", e.event_id))?;
        let k = e.evidence.as_ref().map_or(0, |r| r.sentences.len());
        ensure(evidence_topology(k).is_star(), || format!("{} evidence is not a star", e.event_id))?;
    }
    Ok(format!("{} fixture + {} generated events", fixture.events.len(), generated.len()))
}

fn retrieval() -> Outcome {
    let (docs, claims) = retrieval_fixture(1000, 100, 4);
    let index = TfIdfIndex::build(&WikiCorpus::new(docs.clone()).map_err(|e| e.to_string())?);
    let oracle = common::BruteForce::new(&docs);
    for (claim, _) in &claims {
        let q = Query::new(claim);
        let got = index.retrieve_documents(&q, 5);
        let want = oracle.documents(claim, 5);
        let got_docs: Vec<(String, f64)> = got.iter().map(|d| (d.title.clone(), d.score)).collect();
        ensure(got_docs == want, || format!("documents differ for {claim:?}"))?;
        let titles: Vec<String> = want.into_iter().map(|d| d.0).collect();
        let got: Vec<(String, usize, f64)> =
            index.select_sentences(&q, &got, 5).into_iter().map(|s| (s.title, s.index, s.score)).collect();
        ensure(got == oracle.sentences(claim, &titles, 5), || format!("sentences differ for {claim:?}"))?;
    }
    Ok("1000 docs, 100 claims exact".into())
}

/// Detector settings for the planted dataset; see the README.
pub const PLANTED_OVERRIDES: &[&str] = &[
    "embed_dim=16",
    "hidden=16",
    "layers=1",
    "sage_dims=[32, 32]",
    "max_len=12",
    "vocab_size=400",
    "k_evidence=3",
    "freeze_embeddings=false",
    "batch_size=8",
    "lr=0.005",
    "max_epochs=100",
    "patience=20",
];
const PLANTED_SEEDS: [u64; 2] = [1, 2];

fn separability() -> Outcome {
    let mut accs = Vec::new();
    for seed in PLANTED_SEEDS {
        let events = planted_dataset(&PlantedConfig::default(), seed);
        let run = train_run(&events, &resolve(PLANTED_OVERRIDES, seed), None, None, &Executor::new(1).unwrap())
            .map_err(|e| e.to_string())?;
        accs.push(run.test_metrics.accuracy);
    }
    let text = accs.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(", ");
    ensure(accs.iter().all(|&a| a >= 0.95), || format!("test accuracy {text}"))?;
    Ok(format!("test accuracy {text}"))
}

fn split() -> Outcome {
    for n in [40usize, 100, 5802] {
        let (tr, va, te) = split_sizes(n);
        let rest = (n - va) as f64;
        ensure((va as f64 - (0.1 * n as f64).round()).abs() <= 1.0, || format!("val {va} for {n}"))?;
        ensure((tr as f64 - 0.75 * rest).abs() <= 1.0 && (te as f64 - 0.25 * rest).abs() <= 1.0, || {
            format!("train/test {tr}/{te} for {n}")
        })?;
    }
    Ok(format!("{:?} {:?} {:?}", split_sizes(40), split_sizes(100), split_sizes(5802)))
}

fn early_detection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let events: Vec<Event> = (0..200).map(|i| random_event(&mut rng, &format!("t{i}"), 60, 2)).collect();
    for e in &events {
        for n in 0..=e.replies.len() + 1 {
            let kept: Vec<String> = e.earliest_replies(n).iter().map(|p| p.id.clone()).collect();
            ensure(kept == common::earliest_ids(e, n), || format!("{} at n={n}", e.event_id))?;
        }
    }
    let texts: Vec<&str> = events.iter().flat_map(event_texts).collect();
    let vocab = build_vocab(texts.iter().map(|t| clean_tokens(t)), 500).map_err(|e| e.to_string())?;
    let cfg = resolve(&["embed_dim=8", "hidden=8", "layers=1", "sage_dims=[8, 8]"], 7);
    let model = RdmModel::new(cfg.rdm_config(), EmbeddingTable::random(&vocab, 8, 7)).map_err(|e| e.to_string())?;
    let refs: Vec<&Event> = events.iter().collect();
    let curve = early_detection_curve(
        &model,
        &model.init_params(7),
        &refs[..20],
        &vocab,
        &PrepareOptions::default(),
        &EARLY_COUNTS,
        &Executor::sequential(),
    )
    .map_err(|e| e.to_string())?;
    let csv = curve_csv("replies", &curve);
    let xs: Vec<usize> = csv.lines().skip(1).filter_map(|l| l.split(',').next()?.parse().ok()).collect();
    ensure(xs == (1..=9).map(|i| 5 * i).collect::<Vec<_>>(), || format!("csv counts {xs:?}"))?;
    Ok("200 events exhaustive; csv counts 5..45".into())
}

fn evidence_analyses() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for d in 0..50 {
        let n = 1 + d * 4;
        let events: Vec<Event> = (0..n).map(|i| random_event(&mut rng, &format!("a{i}"), 2, 3)).collect();
        let (total, rumors, refuted, refuted_rumors) = common::count_refutes(&events);
        let r = refutes_probability(&events).map_err(|e| e.to_string())?;
        ensure((r.n_events, r.n_rumor, r.n_refuted, r.n_refuted_rumor) == (total, rumors, refuted, refuted_rumors), || {
            format!("dataset {d}: counts")
        })?;
        let cond = (refuted > 0).then(|| refuted_rumors as f64 / refuted as f64);
        ensure(r.p_rumor == rumors as f64 / total as f64 && r.p_rumor_given_refuted == cond, || {
            format!("dataset {d}: probabilities")
        })?;
        let counts = common::count_relations(&events);
        let with_record: usize = counts.iter().sum();
        match evidence_distribution(&events) {
            Ok(dist) => ensure(dist.counts == counts && dist.total == with_record, || format!("dataset {d}: distribution"))?,
            Err(_) => ensure(with_record == 0, || format!("dataset {d}: distribution failed"))?,
        }
    }
    let planted = planted_dataset(&PlantedConfig::default(), PLANTED_SEEDS[0]);
    let r = refutes_probability(&planted).map_err(|e| e.to_string())?;
    let (total, rumors, refuted, refuted_rumors) = common::count_refutes(&planted);
    let exact = refuted_rumors as f64 / refuted as f64 - rumors as f64 / total as f64;
    ensure(r.increment == Some(exact) && exact > 0.0, || format!("increment {:?} vs {exact}", r.increment))?;
    Ok(format!("50 datasets exact; planted increment {exact}"))
}

fn reproducibility() -> Outcome {
    let events = planted_dataset(&PlantedConfig { n_events: 120, ..PlantedConfig::default() }, 9);
    let cfg = resolve(
        &["embed_dim=8", "hidden=8", "layers=2", "sage_dims=[8, 8]", "max_len=10", "batch_size=16", "max_epochs=5", "freeze_embeddings=false"],
        9,
    );
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        train_run(&events, &cfg, None, None, &Executor::new(0).unwrap())
            .and_then(|run| run.write(dir.path()))
            .map_err(|e| e.to_string())?;
    }
    for f in [CHECKPOINT_FILE, LOG_FILE] {
        let a = std::fs::read(dirs[0].path().join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(f)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{f} differs"))?;
    }
    Ok("checkpoint and log byte-identical".into())
}

/// Verifier settings for the negation-cue pairs; see the README.
pub const VERIFIER_OVERRIDES: &[&str] = &["embed_dim=16", "hidden=16", "layers=1", "max_len=10", "batch_size=16", "lr=0.005"];
const VERIFIER_EPOCHS: usize = 30;

fn verifier() -> Outcome {
    let cfg = resolve(VERIFIER_OVERRIDES, 10);
    let pairs: Vec<PairRecord> = negation_pairs(300, 10)
        .into_iter()
        .map(|(claim, sentence, relation)| PairRecord { claim, sentence, relation })
        .collect();
    let (heldout, train): (Vec<_>, Vec<_>) = pairs.into_iter().enumerate().partition(|(i, _)| i % 10 == 9);
    let train: Vec<PairRecord> = train.into_iter().map(|(_, p)| p).collect();
    let heldout: Vec<PairRecord> = heldout.into_iter().map(|(_, p)| p).collect();
    let vocab = pair_vocab(&train, cfg.vocab_size).map_err(|e| e.to_string())?;
    let v = Verifier::new(cfg.verifier_config(), EmbeddingTable::random(&vocab, cfg.embed_dim, cfg.seed))
        .map_err(|e| e.to_string())?;
    let mut params = v.init_params(cfg.seed);
    let opts = VerifierTraining {
        epochs: VERIFIER_EPOCHS,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        adam: cfg.adam_config(),
    };
    v.train(&mut params, &encode_pairs(&train, &vocab, cfg.max_len), &opts).map_err(|e| e.to_string())?;
    let acc = v.pair_accuracy(&params, &encode_pairs(&heldout, &vocab, cfg.max_len)).map_err(|e| e.to_string())?;
    ensure(acc >= 0.9, || format!("held-out pair accuracy {acc:.3}"))?;
    Ok(format!("held-out pair accuracy {acc:.3}"))
}

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let minutes = |m: u64| Some(Duration::from_secs(60 * m));
    let criteria = [
        Criterion { id: 1, name: "gradient correctness", limit: minutes(2), run: gradients },
        Criterion { id: 2, name: "permutation invariance", limit: minutes(1), run: permutation },
        Criterion { id: 3, name: "graph invariants", limit: None, run: graphs },
        Criterion { id: 4, name: "retrieval oracle", limit: minutes(1), run: retrieval },
        Criterion { id: 5, name: "synthetic separability", limit: minutes(5), run: separability },
        Criterion { id: 6, name: "split protocol", limit: None, run: split },
        Criterion { id: 7, name: "early-detection harness", limit: None, run: early_detection },
        Criterion { id: 8, name: "evidence analyses", limit: None, run: evidence_analyses },
        Criterion { id: 9, name: "reproducibility", limit: None, run: reproducibility },
        Criterion { id: 10, name: "verifier sanity", limit: minutes(2), run: verifier },
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match (result, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("over the {}s limit", limit.as_secs())),
            (r, _) => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += result.is_err() as usize;
        println!("{tag} {:>2} {:<24} {:>7.1}s  {detail}", c.id, c.name, elapsed.as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
