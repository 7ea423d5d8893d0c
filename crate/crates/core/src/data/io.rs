use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Corpus, CorpusEntry, DataError, FeatureMap, Report, Result};

/// Name of the JSON-lines report file inside a corpus directory.
pub const REPORTS_FILE: &str = "reports.jsonl";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write `corpus` under `dir`: `reports.jsonl` plus one feature file per
/// report at its relative `feature` path.
pub fn save_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let reports_path = dir.join(REPORTS_FILE);
    let mut out = std::io::BufWriter::new(fs::File::create(&reports_path).map_err(io_err(&reports_path))?);
    for entry in &corpus.entries {
        entry.report.validate()?;
        let line = serde_json::to_string(&entry.report).expect("reports always serialize");
        writeln!(out, "{line}").map_err(io_err(&reports_path))?;
        let fpath = dir.join(&entry.report.feature);
        if let Some(parent) = fpath.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        entry.features.save(&fpath)?;
    }
    out.flush().map_err(io_err(&reports_path))
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let reports_path = dir.join(REPORTS_FILE);
    let text = fs::read_to_string(&reports_path).map_err(io_err(&reports_path))?;
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| DataError::Parse {
            path: reports_path.clone(),
            line: n + 1,
            message,
        };
        let report: Report = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        report.validate().map_err(|e| parse_err(e.to_string()))?;
        let features = FeatureMap::load(&dir.join(&report.feature))?;
        entries.push(CorpusEntry { report, features });
    }
    Ok(Corpus { entries })
}
