use std::collections::HashMap;

use serde::Serialize;

use super::text::sentence_key;

/// Distinct sentences with their number of appearances, most frequent first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrequencyTable {
    pub entries: Vec<(String, usize)>,
    pub total_sentences: usize,
    /// Distinct sentences with `f < 3`.
    pub rare: usize,
}

impl FrequencyTable {
    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    /// Share of distinct sentences appearing fewer than three times.
    pub fn rare_fraction(&self) -> f64 {
        if self.entries.is_empty() {
            0.0
        } else {
            self.rare as f64 / self.entries.len() as f64
        }
    }

    pub fn frequency(&self, sentence: &str) -> usize {
        self.entries
            .iter()
            .find(|(s, _)| s == sentence)
            .map_or(0, |(_, f)| *f)
    }

    /// Rank / f / sentence listing, top rows then bottom rows.
    pub fn render(&self, head: usize, tail: usize) -> String {
        let mut out = format!("{:>6} {:>6}  sentence\n", "rank", "f");
        let n = self.entries.len();
        for (i, (s, f)) in self.entries.iter().enumerate() {
            if i < head || i + tail >= n {
                out.push_str(&format!("{:>6} {:>6}  {}\n", i + 1, f, s));
            } else if i == head {
                out.push_str(&format!("{:>6} {:>6}  ...\n", "...", "..."));
            }
        }
        out.push_str(&format!(
            "{} of {} distinct sentences have f < 3 ({} sentences total)\n",
            self.rare,
            n,
            self.total_sentences
        ));
        out
    }
}

pub fn sentence_frequency_table<'a, I>(sentences: I) -> FrequencyTable
where
    I: IntoIterator<Item = &'a Vec<String>>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut total = 0;
    for s in sentences {
        *counts.entry(sentence_key(s)).or_default() += 1;
        total += 1;
    }
    let mut entries: Vec<(String, usize)> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let rare = entries.iter().filter(|(_, f)| *f < 3).count();
    FrequencyTable {
        entries,
        total_sentences: total,
        rare,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str) -> Vec<String> {
        text.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn counts_repeated_sentence() {
        let c = vec![s("no pneumothorax ."), s("no pneumothorax ."), s("heart ."), s("no pneumothorax .")];
        let t = sentence_frequency_table(&c);
        assert_eq!(t.entries[0], ("no pneumothorax .".to_string(), 3));
        assert_eq!(t.total_sentences, 4);
        assert_eq!(t.rare, 1);
        assert_eq!(t.frequency("heart ."), 1);
    }

    #[test]
    fn ties_break_lexicographically() {
        let c = vec![s("b ."), s("a ."), s("c ."), s("c .")];
        let t = sentence_frequency_table(&c);
        let order: Vec<&str> = t.entries.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(order, vec!["c .", "a .", "b ."]);
        assert!(t.render(1, 1).contains("3 of 3 distinct"));
    }
}
