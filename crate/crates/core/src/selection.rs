//! Post-hoc checkpoint selection gated on first-sentence distinctiveness,
//! the constant most-frequent-paragraph baseline, and the per-evaluation
//! BLEU-4 / distinct-count series.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricsReport;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("empty checkpoint history")]
    EmptyHistory,
    #[error("iteration {0} appears more than once in the history")]
    DuplicateIteration(u64),
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, SelectionError>;

/// One evaluation during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub iteration: u64,
    pub metrics: MetricsReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRule {
    /// Minimum distinct sentences required at the checked positions.
    pub min_distinct: usize,
    /// Number of leading sentence positions checked; 1 checks only the
    /// first sentence.
    pub depth: usize,
}

impl Default for SelectionRule {
    fn default() -> Self {
        SelectionRule {
            min_distinct: 4,
            depth: 1,
        }
    }
}

impl SelectionRule {
    pub fn qualifies(&self, record: &CheckpointRecord) -> bool {
        (0..self.depth.max(1)).all(|m| record.metrics.distinct_at(m) >= self.min_distinct)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Selection<'a> {
    Selected(&'a CheckpointRecord),
    /// No record passed the distinctiveness filter.
    NoneQualified { max_first_distinct: usize },
}

impl<'a> Selection<'a> {
    pub fn record(&self) -> Option<&'a CheckpointRecord> {
        match self {
            Selection::Selected(r) => Some(r),
            Selection::NoneQualified { .. } => None,
        }
    }
}

fn check_history(history: &[CheckpointRecord]) -> Result<()> {
    if history.is_empty() {
        return Err(SelectionError::EmptyHistory);
    }
    let mut seen = std::collections::HashSet::new();
    match history.iter().find(|r| !seen.insert(r.iteration)) {
        Some(r) => Err(SelectionError::DuplicateIteration(r.iteration)),
        None => Ok(()),
    }
}

/// Record with the highest BLEU-4; earliest iteration on ties.
fn best_bleu4<'a, I: Iterator<Item = &'a CheckpointRecord>>(records: I) -> Option<&'a CheckpointRecord> {
    records.fold(None, |best: Option<&CheckpointRecord>, r| match best {
        None => Some(r),
        Some(b) => {
            let better = r.metrics.bleu4 > b.metrics.bleu4
                || (r.metrics.bleu4 == b.metrics.bleu4 && r.iteration < b.iteration);
            Some(if better { r } else { b })
        }
    })
}

/// Drop records below the distinctiveness threshold, then take the highest
/// BLEU-4 among the rest.
pub fn select_model<'a>(history: &'a [CheckpointRecord], rule: &SelectionRule) -> Result<Selection<'a>> {
    check_history(history)?;
    match best_bleu4(history.iter().filter(|r| rule.qualifies(r))) {
        Some(r) => Ok(Selection::Selected(r)),
        None => {
            let max_first_distinct = history.iter().map(|r| r.metrics.distinct_at(0)).max().unwrap_or(0);
            log::warn!(
                "no checkpoint has at least {} distinct sentences; the most observed at the first position is {}",
                rule.min_distinct,
                max_first_distinct
            );
            Ok(Selection::NoneQualified { max_first_distinct })
        }
    }
}

/// A generator that emits the single most frequent training paragraph for
/// every input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeBaseline {
    pub paragraph: Vec<Vec<String>>,
    /// Occurrences of the paragraph in the training corpus.
    pub count: usize,
}

impl ModeBaseline {
    /// Most frequent paragraph; ties go to the lexicographically smallest
    /// token sequence.
    pub fn fit(paragraphs: &[Vec<Vec<String>>]) -> Result<Self> {
        let mut counts: HashMap<&Vec<Vec<String>>, usize> = HashMap::new();
        for p in paragraphs {
            *counts.entry(p).or_insert(0) += 1;
        }
        counts
            .into_iter()
            .max_by(|(a, ca), (b, cb)| ca.cmp(cb).then_with(|| b.concat().cmp(&a.concat())))
            .map(|(p, count)| ModeBaseline {
                paragraph: p.clone(),
                count,
            })
            .ok_or(SelectionError::EmptyCorpus)
    }

    pub fn generate(&self, n: usize) -> Vec<Vec<Vec<String>>> {
        vec![self.paragraph.clone(); n]
    }
}

/// One row of the BLEU-4 / distinctiveness series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub iteration: u64,
    pub bleu4: f64,
    pub d0: usize,
    pub d1: usize,
    /// Highest BLEU-4 of the whole history.
    #[serde(default)]
    pub max_bleu4: bool,
    /// Chosen by the selection rule.
    #[serde(default)]
    pub selected: bool,
}

/// Series ordered by iteration, with the max-BLEU-4 and selected rows marked.
pub fn analysis_report(history: &[CheckpointRecord], rule: &SelectionRule) -> Result<Vec<AnalysisRow>> {
    check_history(history)?;
    let max_iter = best_bleu4(history.iter()).map(|r| r.iteration);
    let sel_iter = select_model(history, rule)?.record().map(|r| r.iteration);
    let mut rows: Vec<AnalysisRow> = history
        .iter()
        .map(|r| AnalysisRow {
            iteration: r.iteration,
            bleu4: r.metrics.bleu4,
            d0: r.metrics.distinct_at(0),
            d1: r.metrics.distinct_at(1),
            max_bleu4: Some(r.iteration) == max_iter,
            selected: Some(r.iteration) == sel_iter,
        })
        .collect();
    rows.sort_by_key(|r| r.iteration);
    Ok(rows)
}

fn write_lines<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let io = |source| SelectionError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for r in rows {
        writeln!(out, "{}", serde_json::to_string(r).expect("rows serialize")).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|source| SelectionError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| SelectionError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_analysis(path: &Path, rows: &[AnalysisRow]) -> Result<()> {
    write_lines(path, rows)
}

pub fn read_analysis(path: &Path) -> Result<Vec<AnalysisRow>> {
    read_lines(path)
}

/// One [`CheckpointRecord`] per line.
pub fn write_history(path: &Path, history: &[CheckpointRecord]) -> Result<()> {
    write_lines(path, history)
}

pub fn read_history(path: &Path) -> Result<Vec<CheckpointRecord>> {
    read_lines(path)
}

/// Plain-text table; `*` marks the max-BLEU-4 row, `>` the selected row.
pub fn render_analysis(rows: &[AnalysisRow]) -> String {
    let mut out = format!("{:>2} {:>9} {:>8} {:>5} {:>5}\n", "", "iteration", "BLEU-4", "d0", "d1");
    for r in rows {
        let mark = match (r.max_bleu4, r.selected) {
            (true, true) => "*>",
            (true, false) => "* ",
            (false, true) => " >",
            (false, false) => "  ",
        };
        let _ = writeln!(
            out,
            "{mark} {:>9} {:>8.4} {:>5} {:>5}",
            r.iteration, r.bleu4, r.d0, r.d1
        );
    }
    out
}
