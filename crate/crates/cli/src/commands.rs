use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dualreport::checkpoint::Checkpoint;
use dualreport::config::RunConfig;
use dualreport::data::{load_corpus, save_corpus, sentence_frequency_table, synth_corpus, Corpus, Split, Vocabulary};
use dualreport::gradcheck::{check_model_gradients, probe_problem, FdOptions};
use dualreport::inference::{generate_corpus, write_generated, GeneratedLine};
use dualreport::metrics::MetricsReport;
use dualreport::model::Model;
use dualreport::pipeline::{load_labels, metrics_hook, save_labels, Dataset, Partition};
use dualreport::selection::{
    analysis_report, read_history, render_analysis, select_model, write_analysis, write_history, Selection,
    SelectionRule,
};
use dualreport::train::{train, TrainOutputs};

use crate::error::{CliError, Kind, Result};
use crate::{Cli, Command, GlobalArgs, SplitName, Switch};

pub const CONFIG_FILE: &str = "config.txt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const LABELS_FILE: &str = "labels.txt";
pub const SPLIT_FILE: &str = "split.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Synth { out } => synth(g, &out),
        Command::Train { corpus, out } => train_cmd(g, &corpus, &out),
        Command::Generate {
            run,
            checkpoint,
            corpus,
            split,
            out,
        } => generate(g, &run, &checkpoint, &corpus, split, out),
        Command::Evaluate {
            hypotheses,
            references,
            out,
            label,
        } => evaluate(&hypotheses, &references, &out, &label),
        Command::Analyze {
            history,
            out,
            min_distinct,
        } => analyze(g, &history, &out, min_distinct),
        Command::Select {
            history,
            out,
            min_distinct,
        } => select(g, &history, &out, min_distinct),
        Command::Gradcheck { coords, tolerance, out } => gradcheck(g, coords, tolerance, out),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::missing(path),
        _ => CliError::new(Kind::Other, format!("{}: {e}", path.display())),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::new(Kind::Other, format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::new(Kind::Other, format!("{}: {e}", path.display())))
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::missing(path))
    }
}

/// Applies the config file, `--set` overrides, `--seed` and `--dual` on top
/// of `base`, then checks the result.
fn resolve(g: &GlobalArgs, mut cfg: RunConfig) -> Result<RunConfig> {
    if let Some(path) = &g.config {
        cfg.apply_text(&read_text(path)?)?;
    }
    for (i, o) in g.overrides.iter().enumerate() {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::new(Kind::Usage, format!("--set expects KEY=VALUE, got `{o}`")))?;
        cfg.set(k.trim(), v.trim(), i + 1)
            .map_err(|e| CliError::new(Kind::Config, format!("--set {e}")))?;
    }
    if let Some(seed) = g.seed {
        cfg.synth.seed = seed;
        cfg.data.split_seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(d) = g.dual {
        cfg.model.dual_enabled = d == Switch::On;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth(g: &GlobalArgs, out: &Path) -> Result<()> {
    let cfg = resolve(g, RunConfig::toy())?;
    let synth = synth_corpus(&cfg.synth)?;
    save_corpus(out, &synth.corpus)?;
    write_text(&out.join(CONFIG_FILE), &cfg.to_text())?;
    let table = sentence_frequency_table(synth.corpus.sentences());
    write_text(&out.join("stats.txt"), &table.render(10, 5))?;
    let description = serde_json::to_string_pretty(&synth.description).expect("description serializes");
    write_text(&out.join("generator.json"), &description)?;
    println!(
        "wrote {} records to {}; {} distinct sentences, {:.3} of them with f < 3",
        synth.corpus.len(),
        out.display(),
        table.distinct(),
        table.rare_fraction()
    );
    Ok(())
}

fn train_cmd(g: &GlobalArgs, corpus_dir: &Path, out: &Path) -> Result<()> {
    let mut cfg = resolve(g, RunConfig::toy())?;
    require(corpus_dir)?;
    let corpus = load_corpus(corpus_dir)?;
    let ds = Dataset::prepare(&corpus, cfg.data.split, cfg.data.split_seed, cfg.data.min_frequency)?;
    if ds.train.is_empty() {
        return Err(CliError::new(Kind::Config, "data.split leaves no training records"));
    }
    if ds.val.is_empty() && cfg.train.evals_per_epoch > 0 {
        return Err(CliError::new(Kind::Config, "data.split leaves no validation records to evaluate on"));
    }
    cfg.model = ds.model_config(&cfg.model)?;
    fs::create_dir_all(out).map_err(|e| CliError::new(Kind::Other, format!("{}: {e}", out.display())))?;
    write_text(&out.join(CONFIG_FILE), &cfg.to_text())?;
    ds.vocab.save(&out.join(VOCAB_FILE))?;
    save_labels(&out.join(LABELS_FILE), &ds.labels)?;
    write_text(&out.join(SPLIT_FILE), &serde_json::to_string(&ds.split).expect("split serializes"))?;

    let mut model = Model::new(cfg.model.clone(), cfg.train.seed)?;
    let outputs = TrainOutputs {
        checkpoint_dir: Some(out.join(CHECKPOINT_DIR)),
        log_path: Some(out.join(TRAIN_LOG_FILE)),
    };
    let mut hook = metrics_hook(&ds.val, &ds.vocab, cfg.generate);
    let report = train(&mut model, &ds.train.records, &cfg.train, &outputs, Some(&mut hook))?;
    write_history(&out.join(HISTORY_FILE), &report.history)?;
    let last = report.trajectory.last();
    println!(
        "trained {} iterations on {} records; final loss {:.4} ({:.4} per word); {} evaluations in {}",
        report.iterations,
        ds.train.len(),
        last.map_or(f64::NAN, |s| s.total),
        last.map_or(f64::NAN, |s| s.per_word),
        report.history.len(),
        out.join(HISTORY_FILE).display()
    );
    Ok(())
}

fn generate(
    g: &GlobalArgs,
    run: &Path,
    checkpoint: &Path,
    corpus_dir: &Path,
    split_name: SplitName,
    out: Option<PathBuf>,
) -> Result<()> {
    let saved = RunConfig::from_text(&read_text(&run.join(CONFIG_FILE))?)?;
    let cfg = resolve(g, saved)?;
    let vocab = Vocabulary::load(&run.join(VOCAB_FILE))?;
    let labels = load_labels(&run.join(LABELS_FILE))?;
    let split: Split = serde_json::from_str(&read_text(&run.join(SPLIT_FILE))?)
        .map_err(|e| CliError::new(Kind::Data, format!("{}: {e}", run.join(SPLIT_FILE).display())))?;
    require(checkpoint)?;
    require(corpus_dir)?;
    let corpus = load_corpus(corpus_dir)?;
    let indices: Vec<usize> = match split_name {
        SplitName::Train => split.train.clone(),
        SplitName::Val => split.val.clone(),
        SplitName::Test => split.test.clone(),
        SplitName::All => (0..corpus.len()).collect(),
    };
    if let Some(&bad) = indices.iter().find(|&&i| i >= corpus.len()) {
        return Err(CliError::new(
            Kind::Data,
            format!("split refers to record {bad} but the corpus has {} records", corpus.len()),
        ));
    }
    let part = Partition::encode(&corpus.subset(&indices), &vocab, &labels)?;

    let mut model = Model::zeros(cfg.model.clone())?;
    Checkpoint::load(checkpoint)?.restore(&mut model)?;
    let generated = generate_corpus(
        &model,
        part.records.iter().map(|r| (r.id.as_str(), &r.features)),
        &cfg.generate,
    )?;
    let lines: Vec<GeneratedLine> = generated.iter().map(|r| GeneratedLine::new(r, &vocab)).collect();
    let name = format!("generated-{}.jsonl", format!("{split_name:?}").to_lowercase());
    let out = out.unwrap_or_else(|| run.join(name));
    write_generated(&out, &lines)?;
    println!("wrote {} paragraphs to {}", lines.len(), out.display());
    Ok(())
}

/// The fields of a paragraph file that scoring needs; generated-corpus
/// lines carry more and those extra fields are ignored.
#[derive(Debug, Deserialize)]
struct ParagraphLine {
    id: String,
    sentences: Vec<Vec<String>>,
}

fn read_paragraphs(path: &Path) -> Result<Vec<(String, Vec<Vec<String>>)>> {
    if path.is_dir() {
        let corpus: Corpus = load_corpus(path)?;
        return Ok(corpus.reports().map(|r| (r.id.clone(), r.sentences.clone())).collect());
    }
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let p: ParagraphLine = serde_json::from_str(l)
                .map_err(|e| CliError::new(Kind::Data, format!("{}:{}: {e}", path.display(), i + 1)))?;
            Ok((p.id, p.sentences))
        })
        .collect()
}

fn evaluate(hypotheses: &Path, references: &Path, out: &Path, label: &str) -> Result<()> {
    require(hypotheses)?;
    require(references)?;
    let hyps = read_paragraphs(hypotheses)?;
    let refs: HashMap<String, Vec<Vec<String>>> = read_paragraphs(references)?.into_iter().collect();
    let mut matched = Vec::with_capacity(hyps.len());
    for (id, _) in &hyps {
        let r = refs
            .get(id)
            .ok_or_else(|| CliError::new(Kind::Data, format!("no reference for hypothesis {id}")))?;
        matched.push(r.clone());
    }
    let paragraphs: Vec<Vec<Vec<String>>> = hyps.into_iter().map(|(_, p)| p).collect();
    let report = MetricsReport::compute(&paragraphs, &matched)?;
    let table = report.render_table(label);
    write_text(&out.join("metrics.json"), &serde_json::to_string(&report).expect("report serializes"))?;
    write_text(&out.join("metrics.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn rule(g: &GlobalArgs, min_distinct: Option<usize>) -> Result<SelectionRule> {
    let cfg = resolve(g, RunConfig::toy())?;
    let mut rule = cfg.select;
    if let Some(m) = min_distinct {
        if m == 0 {
            return Err(CliError::new(Kind::Config, "--min-distinct must be positive"));
        }
        rule.min_distinct = m;
    }
    Ok(rule)
}

fn analyze(g: &GlobalArgs, history: &Path, out: &Path, min_distinct: Option<usize>) -> Result<()> {
    let rule = rule(g, min_distinct)?;
    let history = read_history(history)?;
    let rows = analysis_report(&history, &rule)?;
    write_analysis(out, &rows)?;
    print!("{}", render_analysis(&rows));
    Ok(())
}

#[derive(Debug, Serialize)]
struct SelectionFile<'a> {
    min_distinct: usize,
    depth: usize,
    iteration: Option<u64>,
    checkpoint: Option<&'a Path>,
    bleu4: Option<f64>,
    distinct: Option<&'a [usize]>,
    max_first_distinct: usize,
}

fn select(g: &GlobalArgs, history: &Path, out: &Path, min_distinct: Option<usize>) -> Result<()> {
    let rule = rule(g, min_distinct)?;
    let history = read_history(history)?;
    let chosen = select_model(&history, &rule)?;
    let max_first_distinct = history.iter().map(|r| r.metrics.distinct_at(0)).max().unwrap_or(0);
    let rec = chosen.record();
    let file = SelectionFile {
        min_distinct: rule.min_distinct,
        depth: rule.depth,
        iteration: rec.map(|r| r.iteration),
        checkpoint: rec.and_then(|r| r.checkpoint.as_deref()),
        bleu4: rec.map(|r| r.metrics.bleu4),
        distinct: rec.map(|r| r.metrics.distinct.as_slice()),
        max_first_distinct,
    };
    write_text(out, &serde_json::to_string(&file).expect("selection serializes"))?;
    match chosen {
        Selection::Selected(r) => println!(
            "selected iteration {} (BLEU-4 {:.4}, distinct {:?}): {}",
            r.iteration,
            r.metrics.bleu4,
            r.metrics.distinct,
            r.checkpoint.as_deref().map_or("<no checkpoint>".into(), |p| p.display().to_string())
        ),
        Selection::NoneQualified { max_first_distinct } => println!(
            "no checkpoint has at least {} distinct first sentences (max observed {max_first_distinct})",
            rule.min_distinct
        ),
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct GradcheckFile {
    seed: u64,
    coords_per_param: Option<usize>,
    coords_checked: usize,
    max_rel_error: f64,
    tolerance: f64,
    passed: bool,
    per_param: Vec<(String, f64)>,
}

fn gradcheck(g: &GlobalArgs, coords: usize, tolerance: f64, out: Option<PathBuf>) -> Result<()> {
    let seed = g.seed.unwrap_or(12);
    let (model, batch) = probe_problem(seed)?;
    let opts = FdOptions {
        max_coords_per_param: (coords > 0).then_some(coords),
        seed,
        ..FdOptions::default()
    };
    let report = check_model_gradients(&model, &batch, &opts)?;
    let passed = report.max_rel_error <= tolerance;
    let file = GradcheckFile {
        seed,
        coords_per_param: opts.max_coords_per_param,
        coords_checked: report.coords_checked,
        max_rel_error: report.max_rel_error,
        tolerance,
        passed,
        per_param: model.params.names().iter().cloned().zip(report.per_param.iter().copied()).collect(),
    };
    for (name, err) in &file.per_param {
        println!("{name:<24} {err:.3e}");
    }
    println!(
        "max relative error {:.3e} over {} coordinates (tolerance {tolerance:e})",
        report.max_rel_error, report.coords_checked
    );
    if let Some(path) = out {
        write_text(&path, &serde_json::to_string_pretty(&file).expect("report serializes"))?;
    }
    if passed {
        Ok(())
    } else {
        Err(CliError::new(
            Kind::Gradcheck,
            format!("max relative error {:.3e} exceeds {tolerance:e}", report.max_rel_error),
        ))
    }
}
