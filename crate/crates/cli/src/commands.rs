use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use score_core::canonical;
use score_core::evaluator::{
    self, render_comparison_markdown, render_markdown, run_comparison, run_evaluation, ComparisonReport,
    EvaluationReport, GoldItemState, GoldQuestion, MetricValues, ModuleToggles, QAResult, RunOptions, BASELINE_LABEL,
};
use score_core::fuzz::{generate_corpus, score_detection, DetectionScore, FuzzSpec, GroundTruth};
use score_core::gateway::{GatewayConfig, LlmGateway};
use score_core::index::{EntryKind, FlatIndex};
use score_core::pipeline::{build_index, story_digest, Prepared, ScoreConfig, Stamped};
use score_core::retrieval::DocumentStore;
use score_core::story::{parse_story, Corpus, Story};
use score_core::summarizer::{summarize_story, SummaryFile};
use score_core::tracker::{track_story, StoryTracking};

use crate::error::{CliError, Result};
use crate::project::{artifact_name, read_json, write_json, Project};

const KINDS: [EntryKind; 2] = [EntryKind::Summary, EntryKind::Chunk];

fn kind_name(kind: EntryKind) -> &'static str {
    match kind {
        EntryKind::Summary => "summary",
        EntryKind::Chunk => "chunk",
    }
}

pub fn ingest(project: &Project, inputs: &[PathBuf]) -> Result<()> {
    let mut stories: Vec<Story> = Vec::new();
    for path in inputs {
        if path.is_dir() {
            stories.extend(Corpus::load_dir(path)?.stories);
        } else {
            let raw = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
            let story = parse_story(&raw).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
            stories.push(story);
        }
    }
    // Fails on duplicate ids before anything is written.
    let corpus = Corpus::new(stories)?;
    for story in &corpus.stories {
        artifact_name(&story.story_id)?;
    }
    for story in &corpus.stories {
        let changed = project.write_story(story)?;
        println!("{} {}", if changed { "ingested" } else { "unchanged" }, story.story_id);
    }
    Ok(())
}

fn stale<T>(existing: &Option<Stamped<T>>, digest: &str) -> bool {
    existing.as_ref().is_none_or(|s| s.source_digest != digest)
}

pub fn summarize(project: &Project, config: &ScoreConfig, force: bool) -> Result<()> {
    let corpus = project.corpus()?;
    let gateway = project.gateway(config)?;
    let mut todo = Vec::new();
    for story in &corpus.stories {
        let path = project.artifact("summaries", &story.story_id)?;
        let digest = story_digest(story);
        if force || stale(&read_json::<Stamped<SummaryFile>>(&path)?, &digest) {
            todo.push((story, path, digest));
        }
    }
    let done: Vec<(PathBuf, Stamped<SummaryFile>)> = todo
        .into_par_iter()
        .map(|(story, path, digest)| {
            let data = summarize_story(story, &gateway)?;
            Ok((
                path,
                Stamped {
                    source_digest: digest,
                    data,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let mut written = 0;
    for (path, stamped) in &done {
        written += usize::from(write_json(path, stamped)?);
    }
    println!(
        "summaries: {} computed, {} written, {} up to date",
        done.len(),
        written,
        corpus.stories.len() - done.len()
    );
    Ok(())
}

pub fn track(project: &Project, config: &ScoreConfig, force: bool) -> Result<()> {
    let corpus = project.corpus()?;
    let gateway = project.gateway(config)?;
    let mut todo = Vec::new();
    for story in &corpus.stories {
        let path = project.artifact("states", &story.story_id)?;
        let digest = story_digest(story);
        if force || stale(&read_json::<Stamped<StoryTracking>>(&path)?, &digest) {
            todo.push((story, path, digest));
        }
    }
    let done: Vec<(PathBuf, Stamped<StoryTracking>)> = todo
        .into_par_iter()
        .map(|(story, path, digest)| {
            let data = track_story(story, &gateway)?;
            Ok((
                path,
                Stamped {
                    source_digest: digest,
                    data,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let mut written = 0;
    for (path, stamped) in &done {
        written += usize::from(write_json(path, stamped)?);
    }
    let tracking = load_tracking(project, &corpus)?;
    let errors: usize = tracking.iter().map(|t| t.errors.len()).sum();
    println!(
        "states: {} computed, {} written, {} up to date; {} continuity error(s)",
        done.len(),
        written,
        corpus.stories.len() - done.len(),
        errors
    );
    if let Some(truth) = read_json::<GroundTruth>(&project.file("ground_truth.json"))? {
        print_detection(&detection(&tracking, &truth));
    }
    Ok(())
}

fn detection(tracking: &[StoryTracking], truth: &GroundTruth) -> DetectionScore {
    let ids: std::collections::BTreeSet<&str> = truth.stories.iter().map(|s| s.story_id.as_str()).collect();
    let relevant: Vec<StoryTracking> = tracking
        .iter()
        .filter(|t| ids.contains(t.story_id.as_str()))
        .cloned()
        .collect();
    score_detection(&relevant, truth)
}

fn print_detection(d: &DetectionScore) {
    println!(
        "detection precision={:.4} recall={:.4} f1={:.4} tp={} fp={} fn={}{}",
        d.precision,
        d.recall,
        d.f1,
        d.true_positives,
        d.false_positives,
        d.false_negatives,
        if d.degenerate { " (degenerate)" } else { "" }
    );
}

fn load_stamped<T: for<'de> Deserialize<'de>>(project: &Project, sub: &str, story: &Story, step: &str) -> Result<T> {
    let path = project.artifact(sub, &story.story_id)?;
    match read_json::<Stamped<T>>(&path)? {
        None => Err(CliError::validation(format!(
            "{sub} missing for `{}`; run `score {step}`",
            story.story_id
        ))),
        Some(s) if s.source_digest != story_digest(story) => Err(CliError::validation(format!(
            "{sub} for `{}` are stale; run `score {step}`",
            story.story_id
        ))),
        Some(s) => Ok(s.data),
    }
}

fn load_summaries(project: &Project, corpus: &Corpus) -> Result<Vec<SummaryFile>> {
    corpus
        .stories
        .iter()
        .map(|s| load_stamped(project, "summaries", s, "summarize"))
        .collect()
}

fn load_tracking(project: &Project, corpus: &Corpus) -> Result<Vec<StoryTracking>> {
    corpus
        .stories
        .iter()
        .map(|s| load_stamped(project, "states", s, "track"))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexStamp {
    kind: EntryKind,
    entries: usize,
    dim: usize,
}

/// Digest of everything an index depends on: the document texts and the
/// embedding model.
fn index_digest(docs: &DocumentStore, kind: EntryKind, gateway: &GatewayConfig) -> String {
    let texts: Vec<(&String, &String)> = docs.of_kind(kind).into_iter().map(|(id, s)| (id, &s.text)).collect();
    let model = gateway.embed_model.as_deref().unwrap_or(&gateway.model_name);
    canonical::digest(&(kind, texts, gateway.backend, model, gateway.embed_dim))
}

fn stamp_path(project: &Project, kind: EntryKind) -> PathBuf {
    project.dir("index").join(format!("{}.stamp.json", kind_name(kind)))
}

pub fn index(project: &Project, config: &ScoreConfig, granularity: Option<EntryKind>, force: bool) -> Result<()> {
    let corpus = project.corpus()?;
    let summaries = load_summaries(project, &corpus)?;
    let docs = DocumentStore::build(&corpus.stories, &summaries, config.chunker);
    let gateway = project.gateway(config)?;
    let dir = project.dir("index");
    let kinds: Vec<EntryKind> = granularity.map_or(KINDS.to_vec(), |k| vec![k]);
    for kind in kinds {
        let name = kind_name(kind);
        let digest = index_digest(&docs, kind, &config.gateway);
        let current = read_json::<Stamped<IndexStamp>>(&stamp_path(project, kind))?;
        if !force && !stale(&current, &digest) && FlatIndex::exists(&dir, name) {
            println!("index {name}: up to date");
            continue;
        }
        let built = build_index(&docs, kind, &gateway)?;
        built.save(&dir, name)?;
        write_json(
            &stamp_path(project, kind),
            &Stamped {
                source_digest: digest,
                data: IndexStamp {
                    kind,
                    entries: built.len(),
                    dim: built.dim(),
                },
            },
        )?;
        println!("index {name}: {} entries, dim {}", built.len(), built.dim());
    }
    Ok(())
}

/// Loads indexes that exist and match the current documents.
fn attach_indexes(project: &Project, config: &ScoreConfig, prepared: &mut Prepared) -> Result<()> {
    let dir = project.dir("index");
    for kind in KINDS {
        let name = kind_name(kind);
        if !FlatIndex::exists(&dir, name) {
            continue;
        }
        let digest = index_digest(&prepared.docs, kind, &config.gateway);
        if stale(&read_json::<Stamped<IndexStamp>>(&stamp_path(project, kind))?, &digest) {
            warn!("{name} index is stale and will not be used; run `score index`");
            continue;
        }
        let loaded = FlatIndex::load(&dir, name)?;
        match kind {
            EntryKind::Summary => prepared.summary_index = Some(loaded),
            EntryKind::Chunk => prepared.chunk_index = Some(loaded),
        }
    }
    Ok(())
}

fn prepare(project: &Project, config: &ScoreConfig) -> Result<Prepared> {
    let corpus = project.corpus()?;
    let summaries = load_summaries(project, &corpus)?;
    let tracking = load_tracking(project, &corpus)?;
    let mut prepared = Prepared::from_parts(corpus, summaries, tracking, config.chunker);
    attach_indexes(project, config, &mut prepared)?;
    Ok(prepared)
}

fn load_questions(project: &Project, explicit: Option<&Path>) -> Result<Vec<GoldQuestion>> {
    match explicit {
        Some(p) => read_json(p)?.ok_or_else(|| CliError::validation(format!("{}: not found", p.display()))),
        None => Ok(read_json(&project.file("questions.json"))?.unwrap_or_default()),
    }
}

fn load_gold_states(project: &Project) -> Result<Option<Vec<GoldItemState>>> {
    if let Some(truth) = read_json::<GroundTruth>(&project.file("ground_truth.json"))? {
        return Ok(Some(truth.gold_states()));
    }
    read_json(&project.file("gold_states.json"))
}

fn parse_episode(spec: &str) -> Result<(String, usize)> {
    let (story, ep) = spec
        .rsplit_once('#')
        .ok_or_else(|| CliError::usage(format!("--episode expects STORY#EPISODE, got `{spec}`")))?;
    let ep: usize = ep
        .parse()
        .map_err(|_| CliError::usage(format!("episode index `{ep}` is not a number")))?;
    if story.is_empty() {
        return Err(CliError::usage("--episode needs a story id"));
    }
    Ok((story.to_string(), ep))
}

fn ablated(config: &ScoreConfig, modules: &[String]) -> Result<ScoreConfig> {
    let mut c = config.clone();
    for m in modules {
        c.modules.disable(m).map_err(CliError::usage)?;
    }
    Ok(c)
}

fn ablation_label(modules: &[String]) -> String {
    if modules.is_empty() {
        "score".to_string()
    } else {
        let mut m = modules.to_vec();
        m.sort();
        m.dedup();
        format!("without-{}", m.join("-"))
    }
}

fn print_metrics(name: &str, v: MetricValues) {
    println!(
        "{name}: consistency={} coherence={} item_status={} complex_qa={}",
        v.consistency, v.coherence, v.item_status, v.complex_qa
    );
}

pub struct EvaluateArgs<'a> {
    pub episode: Option<&'a str>,
    pub ablate: &'a [String],
    pub questions: Option<&'a Path>,
}

pub fn evaluate(project: &Project, config: &ScoreConfig, args: EvaluateArgs<'_>) -> Result<()> {
    let config = ablated(config, args.ablate)?;
    let episode = args.episode.map(parse_episode).transpose()?;
    let prepared = prepare(project, &config)?;
    let questions = load_questions(project, args.questions)?;
    let gold = load_gold_states(project)?;
    let gateway = project.gateway(&config)?;
    let mut options = RunOptions::new(ablation_label(args.ablate), config);
    options.episode = episode;
    let report = run_evaluation(&prepared, &questions, gold.as_deref(), &options, &gateway)?;
    let path = project.dir("reports").join(format!("{}.json", report.run_id));
    write_json(&path, &report)?;
    info!(path = %path.display(), "report written");
    println!("{}", report.run_id);
    print_metrics(&report.label, report.metrics.values());
    Ok(())
}

pub fn compare(
    project: &Project,
    config: &ScoreConfig,
    baseline: bool,
    ablate: &[String],
    questions: Option<&Path>,
) -> Result<()> {
    let (a, b) = match (baseline, ablate.is_empty()) {
        (true, _) => {
            let mut base = config.clone();
            base.modules = ModuleToggles::baseline();
            (
                RunOptions::new(ablation_label(ablate), ablated(config, ablate)?),
                RunOptions::new(BASELINE_LABEL, base),
            )
        }
        (false, false) => (
            RunOptions::new("score", config.clone()),
            RunOptions::new(ablation_label(ablate), ablated(config, ablate)?),
        ),
        (false, true) => return Err(CliError::usage("compare needs --baseline or --ablate MODULES")),
    };
    let prepared = prepare(project, config)?;
    let questions = load_questions(project, questions)?;
    let gold = load_gold_states(project)?;
    let gateway = project.gateway(config)?;
    let report = run_comparison(&prepared, &questions, gold.as_deref(), &a, &b, &gateway)?;
    let path = project.dir("reports").join(format!("{}.json", report.run_id));
    write_json(&path, &report)?;
    for w in &report.warnings {
        warn!("{w}");
    }
    println!("{}", report.run_id);
    print_metrics(&report.a.label, report.a.metrics.values());
    print_metrics(&report.b.label, report.b.metrics.values());
    Ok(())
}

pub fn ask(project: &Project, config: &ScoreConfig, question: &str, story: Option<&str>) -> Result<QAResult> {
    if config.modules.retrieval
        && KINDS
            .iter()
            .all(|k| !FlatIndex::exists(&project.dir("index"), kind_name(*k)))
    {
        return Err(CliError::validation("index not built; run `score index`"));
    }
    if question.trim().is_empty() {
        return Err(CliError::validation("question is empty"));
    }
    let prepared = prepare(project, config)?;
    if let Some(id) = story {
        if prepared.corpus.story(id).is_none() {
            return Err(CliError::validation(format!("unknown story `{id}`")));
        }
    }
    let gateway = project.gateway(config)?;
    let q = GoldQuestion {
        story_id: story.map(str::to_string),
        question: question.to_string(),
        expected: None,
    };
    Ok(evaluator::ask(&prepared, &q, config, &gateway)?)
}

pub struct FuzzArgs {
    pub seed: u64,
    pub stories: usize,
    pub rate: f64,
    pub explained_rate: f64,
}

pub fn fuzz(project: &Project, args: &FuzzArgs) -> Result<DetectionScore> {
    let mut spec = FuzzSpec::new(args.seed, args.stories, args.rate);
    spec.explained_rate = args.explained_rate;
    let (corpus, truth) = generate_corpus(&spec).map_err(|e| CliError::validation(e.to_string()))?;
    for story in &corpus.stories {
        project.write_story(story)?;
    }
    write_json(&project.file("ground_truth.json"), &truth)?;
    write_json(&project.file("questions.json"), &truth.questions())?;
    // Scored with the offline backend so the figure does not depend on a model.
    let gateway = LlmGateway::mock();
    let tracking: Vec<StoryTracking> = corpus
        .stories
        .par_iter()
        .map(|s| track_story(s, &gateway))
        .collect::<std::result::Result<_, _>>()?;
    let score = detection(&tracking, &truth);
    println!(
        "fuzz seed={} stories={} planted={}",
        args.seed,
        corpus.stories.len(),
        truth.planted().len()
    );
    print_detection(&score);
    Ok(score)
}

pub fn report(project: &Project, run_id: &str, markdown: bool) -> Result<String> {
    let path = project.dir("reports").join(artifact_name(run_id)?);
    let value: serde_json::Value =
        read_json(&path)?.ok_or_else(|| CliError::validation(format!("no report `{run_id}` in reports/")))?;
    let parse_err = |e: serde_json::Error| CliError::validation(format!("{}: {e}", path.display()));
    if value.get("deltas").is_some() {
        let r: ComparisonReport = serde_json::from_value(value).map_err(parse_err)?;
        Ok(if markdown {
            render_comparison_markdown(&r)
        } else {
            String::from_utf8(canonical::to_vec(&r)).expect("utf-8")
        })
    } else {
        let r: EvaluationReport = serde_json::from_value(value).map_err(parse_err)?;
        Ok(if markdown {
            render_markdown(&r)
        } else {
            String::from_utf8(canonical::to_vec(&r)).expect("utf-8")
        })
    }
}
