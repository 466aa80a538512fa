//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. An optional argument filters
//! criteria by name.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use score_core::evaluator::{
    compute_metrics, run_evaluation, EpisodeEvaluation, EpisodeRef, FacetScores, GoldQuestion, Metric, MetricsInput,
    QAResult, RunOptions,
};
use score_core::fuzz::{generate_corpus, score_detection, FuzzSpec};
use score_core::gateway::{LlmGateway, SentimentScore};
use score_core::index::{cosine, Embedding, EntryKind, FlatIndex, IndexBuilder, IndexEntry};
use score_core::pipeline::{Prepared, ScoreConfig};
use score_core::retrieval::{select_context, ContextSource, DocumentStore, Focus, RetrievalConfig, Scope};
use score_core::story::{parse_story, serialize_story, Corpus, ItemState};
use score_core::tracker::{
    detect_continuity_errors, record_observation, track_story, ItemObservation, ItemTimeline, StoryTracking,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn desk_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/desk")
}

fn desk_questions() -> Vec<GoldQuestion> {
    let raw = std::fs::read(desk_dir().join("questions.json")).expect("desk questions");
    serde_json::from_slice(&raw).expect("questions parse")
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn continuity_detection() -> Outcome {
    let start = Instant::now();
    let gateway = LlmGateway::mock();
    let mut planted = 0;
    for seed in 1..=10 {
        let mut spec = FuzzSpec::new(seed, 100, 0.3);
        spec.explained_rate = 0.2;
        let (corpus, truth) = generate_corpus(&spec).map_err(|e| e.to_string())?;
        let tracking: Vec<StoryTracking> = corpus
            .stories
            .par_iter()
            .map(|s| track_story(s, &gateway))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let d = score_detection(&tracking, &truth);
        ensure(d.precision == 1.0 && d.recall == 1.0, || {
            format!("seed {seed}: precision {} recall {} ({d:?})", d.precision, d.recall)
        })?;
        planted += d.true_positives;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "10 seeds x 100 stories, {planted} planted errors found, P = R = 1.0, {secs:.2}s"
    ))
}

fn predicate_equivalence() -> Outcome {
    const S: [ItemState; 3] = [ItemState::Active, ItemState::Lost, ItemState::Destroyed];
    let mut checked = 0;
    let mut mismatches = 0;
    for len in 0..=6u32 {
        for mut code in 0..3usize.pow(len) {
            let seq: Vec<ItemState> = (0..len)
                .map(|_| {
                    let s = S[code % 3];
                    code /= 3;
                    s
                })
                .collect();
            let mut tl = ItemTimeline::new("x");
            for (t, &s) in seq.iter().enumerate() {
                tl = record_observation(&tl, ItemObservation::new("x", t, s)).map_err(|e| e.to_string())?;
            }
            let got: Vec<usize> = detect_continuity_errors(&tl)
                .iter()
                .map(|e| e.reappearance_episode)
                .collect();
            let want: Vec<usize> = (1..seq.len())
                .filter(|&t| seq[t - 1] != ItemState::Active && seq[t] == ItemState::Active)
                .collect();
            mismatches += usize::from(got != want);
            checked += 1;
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches"))?;
    Ok(format!("{checked} sequences of length <= 6, 0 mismatches"))
}

fn search_oracle() -> Outcome {
    let dim = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let vectors: Vec<Vec<f64>> = (0..1000).map(|_| unit(&mut rng, dim)).collect();
    let mut b = IndexBuilder::new(dim);
    for (i, v) in vectors.iter().enumerate() {
        b.add(IndexEntry {
            entry_id: format!("v{i:04}"),
            kind: EntryKind::Summary,
            story_id: "s".into(),
            episode_index: i,
            embedding: Embedding::new(v.clone()).map_err(|e| e.to_string())?,
        })
        .map_err(|e| e.to_string())?;
    }
    let index = b.freeze();
    for qn in 0..100 {
        let q = unit(&mut rng, dim);
        let mut all: Vec<(f64, String)> = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (dot(&q, v), format!("v{i:04}")))
            .collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let want: Vec<&str> = all.iter().take(10).map(|(_, id)| id.as_str()).collect();
        let hits = index
            .search_top_n(&Embedding::new(q.clone()).unwrap(), 10, None)
            .map_err(|e| e.to_string())?;
        let got: Vec<&str> = hits.iter().map(|h| h.entry_id.as_str()).collect();
        ensure(got == want, || format!("query {qn}: {got:?} != {want:?}"))?;
        let alpha = rng.gen_range(0.01..100.0);
        let scaled: Vec<f64> = q.iter().map(|x| x * alpha).collect();
        let hits = index
            .search_top_n(&Embedding::new(scaled).unwrap(), 10, None)
            .map_err(|e| e.to_string())?;
        let got_scaled: Vec<&str> = hits.iter().map(|h| h.entry_id.as_str()).collect();
        ensure(got_scaled == want, || {
            format!("query {qn}: ranking changed under scale {alpha}")
        })?;
    }
    let mut worst_sym: f64 = 0.0;
    for pair in 0..10_000 {
        let len = rng.gen_range(1..=48);
        let u: Vec<f64> = (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let v: Vec<f64> = (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let (Ok(eu), Ok(ev)) = (Embedding::new(u.clone()), Embedding::new(v)) else {
            continue;
        };
        let a = cosine(&eu, &ev).map_err(|e| e.to_string())?;
        let b = cosine(&ev, &eu).map_err(|e| e.to_string())?;
        worst_sym = worst_sym.max((a - b).abs());
        ensure((a - b).abs() <= 1e-12, || format!("pair {pair}: asymmetric {a} vs {b}"))?;
        ensure((-1.0 - 1e-9..=1.0 + 1e-9).contains(&a), || {
            format!("pair {pair}: out of bounds {a}")
        })?;
        let alpha = rng.gen_range(0.001..1000.0);
        let su = Embedding::new(u.iter().map(|x| x * alpha).collect()).unwrap();
        let c = cosine(&su, &ev).map_err(|e| e.to_string())?;
        ensure((a - c).abs() <= 1e-9, || {
            format!("pair {pair}: scale changed cosine {a} -> {c}")
        })?;
    }
    Ok(format!(
        "100 queries over 1000 vectors match the full scan; 10000 pairs, max asymmetry {worst_sym:.1e}"
    ))
}

struct RandomCorpus {
    index: FlatIndex,
    docs: DocumentStore,
    rows: Vec<(String, String, usize, Vec<f64>, f64)>,
}

fn random_corpus(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> RandomCorpus {
    let stories = rng.gen_range(1..=3);
    let mut b = IndexBuilder::new(dim);
    let mut docs = DocumentStore::default();
    let mut rows = Vec::new();
    for i in 0..n {
        let story = format!("s{}", i % stories);
        let ep = i / stories;
        let id = format!("{story}#{ep}");
        let v = unit(rng, dim);
        // Coarse sentiments make exact tolerance boundaries likely.
        let sigma = f64::from(rng.gen_range(0..=10u8)) / 10.0;
        b.add(IndexEntry {
            entry_id: id.clone(),
            kind: EntryKind::Summary,
            story_id: story.clone(),
            episode_index: ep,
            embedding: Embedding::new(v.clone()).unwrap(),
        })
        .unwrap();
        docs.insert(
            id.clone(),
            ContextSource {
                story_id: story.clone(),
                episode_index: ep,
                kind: EntryKind::Summary,
                text: format!("document {id}"),
                sentiment: SentimentScore::new(sigma).unwrap(),
            },
        );
        rows.push((id, story, ep, v, sigma));
    }
    RandomCorpus {
        index: b.freeze(),
        docs,
        rows,
    }
}

fn sentiment_filter() -> Outcome {
    let dim = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut calls = 0;
    let mut bypassed = 0;
    let mut max_n = 0;
    for _ in 0..20 {
        let n = rng.gen_range(1..=1000);
        max_n = max_n.max(n);
        let c = random_corpus(&mut rng, n, dim);
        for _ in 0..50 {
            let q = unit(&mut rng, dim);
            let sigma = f64::from(rng.gen_range(0..=10u8)) / 10.0;
            let top_n = rng.gen_range(1..=10);
            let config = RetrievalConfig {
                top_n,
                sentiment_tolerance: f64::from(rng.gen_range(0..=5u8)) / 10.0,
                candidate_pool: if rng.gen_bool(0.5) {
                    None
                } else {
                    Some(rng.gen_range(top_n..=40))
                },
                ..RetrievalConfig::default()
            };
            let row = &c.rows[rng.gen_range(0..c.rows.len())];
            let scope = Scope {
                story_id: rng.gen_bool(0.5).then(|| row.1.clone()),
                exclude_episode: rng.gen_bool(0.5).then(|| (row.1.clone(), row.2)),
                kind: None,
            };
            let bundle = select_context(
                Focus::Query { text: "q".into() },
                &Embedding::new(q.clone()).unwrap(),
                SentimentScore::new(sigma),
                &scope,
                &c.index,
                &c.docs,
                &config,
            )
            .map_err(|e| e.to_string())?;
            calls += 1;
            let tau = config.sentiment_tolerance;
            for e in &bundle.selected {
                let ok = (e.sentiment - sigma).abs() <= tau || bundle.sentiment_filter_bypassed;
                ensure(ok, || format!("call {calls}: {} has |d sigma| > {tau}", e.entry_id))?;
            }
            let mut in_scope: Vec<(f64, &str, f64)> = c
                .rows
                .iter()
                .filter(|(_, s, _, _, _)| scope.story_id.as_ref().is_none_or(|id| id == s))
                .filter(|(_, s, ep, _, _)| scope.exclude_episode.as_ref() != Some(&(s.clone(), *ep)))
                .map(|(id, _, _, v, sg)| (dot(&q, v), id.as_str(), *sg))
                .collect();
            in_scope.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
            let filtered: Vec<&str> = in_scope
                .iter()
                .filter(|(_, _, sg)| (sigma - sg).abs() <= tau)
                .take(config.top_n)
                .map(|(_, id, _)| *id)
                .collect();
            let want: Vec<&str> = if filtered.is_empty() && !in_scope.is_empty() {
                in_scope.iter().take(config.top_n).map(|(_, id, _)| *id).collect()
            } else {
                filtered.clone()
            };
            let got: Vec<&str> = bundle.selected.iter().map(|e| e.entry_id.as_str()).collect();
            ensure(got == want, || format!("call {calls}: {got:?} != oracle {want:?}"))?;
            ensure(
                bundle.sentiment_filter_bypassed == (filtered.is_empty() && !in_scope.is_empty()),
                || format!("call {calls}: bypass flag disagrees with oracle"),
            )?;
            bypassed += usize::from(bundle.sentiment_filter_bypassed);
        }
    }
    Ok(format!(
        "{calls} calls on corpora up to {max_n} episodes, all sound and equal to filter-then-top-N ({bypassed} bypassed)"
    ))
}

fn run_score(root: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_score"))
        .arg("--project")
        .arg(root)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`score {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn replay_reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let desk = desk_dir();
    let questions = desk.join("questions.json");
    let questions = questions.to_str().ok_or("non-utf8 path")?;
    run_score(root, &["ingest", desk.to_str().ok_or("non-utf8 path")?])?;
    for step in ["summarize", "track", "index"] {
        run_score(root, &["--cache-mode", "record", step])?;
    }
    run_score(root, &["--cache-mode", "record", "evaluate", "--questions", questions])?;
    let mut reports = Vec::new();
    for _ in 0..2 {
        let out = run_score(root, &["--cache-mode", "replay", "evaluate", "--questions", questions])?;
        let run_id = out.lines().next().ok_or("no run id printed")?.trim().to_string();
        let path = root.join("reports").join(format!("{run_id}.json"));
        let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        std::fs::remove_file(&path).map_err(|e| e.to_string())?;
        reports.push((run_id, bytes));
    }
    ensure(reports[0] == reports[1], || "replay reports differ".to_string())?;
    Ok(format!(
        "two replay runs wrote identical reports ({} bytes, run {})",
        reports[0].1.len(),
        reports[0].0
    ))
}

fn round_trips() -> Outcome {
    let (fuzz, _) = generate_corpus(&FuzzSpec::new(3, 25, 0.3)).map_err(|e| e.to_string())?;
    let desk = Corpus::load_dir(&desk_dir()).map_err(|e| e.to_string())?;
    let stories: Vec<_> = fuzz.stories.iter().chain(&desk.stories).collect();
    for s in &stories {
        let bytes = serialize_story(s);
        let back = parse_story(&bytes).map_err(|e| e.to_string())?;
        ensure(&back == *s, || format!("story {} changed on round trip", s.story_id))?;
        ensure(serialize_story(&back) == bytes, || {
            format!("story {} bytes unstable", s.story_id)
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c = random_corpus(&mut rng, 400, 24);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    c.index.save(tmp.path(), "summary").map_err(|e| e.to_string())?;
    let loaded = FlatIndex::load(tmp.path(), "summary").map_err(|e| e.to_string())?;
    ensure(loaded == c.index, || "loaded index differs".to_string())?;
    for _ in 0..50 {
        let q = Embedding::new(unit(&mut rng, 24)).unwrap();
        let a = c.index.search_top_n(&q, 10, None).map_err(|e| e.to_string())?;
        let b = loaded.search_top_n(&q, 10, None).map_err(|e| e.to_string())?;
        ensure(a == b, || "search results differ after reload".to_string())?;
    }
    Ok(format!(
        "{} stories and a {}-entry index round-trip losslessly",
        stories.len(),
        loaded.len()
    ))
}

fn ablation_direction() -> Outcome {
    let gateway = LlmGateway::mock();
    let (corpus, truth) = generate_corpus(&FuzzSpec::new(7, 20, 0.3)).map_err(|e| e.to_string())?;
    let config = ScoreConfig::default();
    let prepared = Prepared::build(corpus, &config, &gateway).map_err(|e| e.to_string())?;
    let gold = truth.gold_states();
    let run = |c: &ScoreConfig, p: &Prepared, q: &[GoldQuestion], g: Option<&[_]>| {
        run_evaluation(p, q, g, &RunOptions::new("acceptance", c.clone()), &gateway).map_err(|e| e.to_string())
    };
    let full = run(&config, &prepared, &[], Some(&gold))?;
    let mut no_tracking = config.clone();
    no_tracking.modules.tracking = false;
    let ablated = run(&no_tracking, &prepared, &[], Some(&gold))?;
    let (a, b) = (full.metrics.item_status, ablated.metrics.item_status);
    let (Some(fa), Some(fb)) = (a.value(), b.value()) else {
        return Err(format!("item_status not available: {a} / {b}"));
    };
    ensure(fb < fa, || format!("item_status did not drop: {fa} -> {fb}"))?;

    let desk = Corpus::load_dir(&desk_dir()).map_err(|e| e.to_string())?;
    let prepared = Prepared::build(desk, &config, &gateway).map_err(|e| e.to_string())?;
    let questions = desk_questions();
    ensure(questions.len() == 20, || format!("{} gold questions", questions.len()))?;
    let full = run(&config, &prepared, &questions, None)?;
    let mut no_retrieval = config.clone();
    no_retrieval.modules.retrieval = false;
    let ablated = run(&no_retrieval, &prepared, &questions, None)?;
    let (Some(qa), Some(qb)) = (full.metrics.complex_qa.value(), ablated.metrics.complex_qa.value()) else {
        return Err("complex_qa not available".to_string());
    };
    ensure(qb < qa, || format!("complex_qa did not drop: {qa} -> {qb}"))?;
    Ok(format!(
        "item_status {fa:.1} -> {fb:.1} without tracking (fuzz seed 7); complex_qa {qa:.1} -> {qb:.1} without retrieval (20 questions)"
    ))
}

fn metric_arithmetic() -> Outcome {
    let evals: Vec<EpisodeEvaluation> = [1.0, 3.0, 5.0]
        .iter()
        .enumerate()
        .map(|(t, &s)| EpisodeEvaluation {
            story_id: "s".into(),
            episode_index: t,
            facet_scores: FacetScores::uniform(s),
            rationale: String::new(),
            item_states: Vec::new(),
            continuity_errors_cited: Vec::new(),
            context_used: String::new(),
            context_episodes: Vec::new(),
        })
        .collect();
    let qa: Vec<QAResult> = [true, false, true, false]
        .iter()
        .map(|&ok| QAResult {
            question: "q".into(),
            story_id: Some("s".into()),
            answer: "a".into(),
            supporting_episodes: vec![EpisodeRef {
                story_id: "s".into(),
                episode: 0,
            }],
            item_states: Vec::new(),
            insufficient_context: false,
            correct: Some(ok),
            context_used: String::new(),
        })
        .collect();
    let m = compute_metrics(
        &MetricsInput {
            evaluations: &evals,
            qa: &qa,
            reference: &[],
            gold_states: None,
        },
        "acceptance",
    );
    ensure(m.coherence == Metric::Value(50.0), || {
        format!("coherence {}", m.coherence)
    })?;
    ensure(m.complex_qa == Metric::Value(50.0), || {
        format!("complex_qa {}", m.complex_qa)
    })?;
    Ok("coherence 50.0 from facets {1,3,5}; complex_qa 50.0 from 2 of 4".to_string())
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [Criterion; 8] = [
        ("continuity-detection", continuity_detection),
        ("predicate-equivalence", predicate_equivalence),
        ("vector-search-oracle", search_oracle),
        ("sentiment-filter-soundness", sentiment_filter),
        ("replay-reproducibility", replay_reproducibility),
        ("round-trips", round_trips),
        ("ablation-direction", ablation_direction),
        ("metric-arithmetic", metric_arithmetic),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        if filter.as_deref().is_some_and(|pat| !name.contains(pat)) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.2}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.2}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criterion/criteria failed");
        std::process::exit(1);
    }
}
