use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use super::{Field, LitError, LiteratureSource, QueryStrategy, TermGroup};
use crate::embed::tokenize;
use crate::model::LiteratureRecord;

/// Local record set answering strategies with the same field semantics as
/// PubMed: MESH matches a heading exactly, TIAB matches a contiguous token
/// phrase in title or abstract, ANY matches either.
#[derive(Debug, Clone, Default)]
pub struct InMemoryCorpus {
    records: Vec<LiteratureRecord>,
}

fn contains_phrase(haystack: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && haystack.windows(phrase.len()).any(|w| w == phrase)
}

impl InMemoryCorpus {
    pub fn new(records: Vec<LiteratureRecord>) -> Self {
        Self { records }
    }

    /// Reads one JSON-encoded record per line; blank lines are skipped.
    pub fn from_jsonl<R: Read>(reader: R) -> Result<Self, LitError> {
        let mut records = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LiteratureRecord = serde_json::from_str(&line)
                .map_err(|e| LitError::Protocol(format!("corpus line {}: {e}", i + 1)))?;
            if rec.pmid.trim().is_empty() {
                return Err(LitError::Protocol(format!("corpus line {}: empty pmid", i + 1)));
            }
            records.push(rec);
        }
        Ok(Self { records })
    }

    pub fn from_jsonl_path(path: impl AsRef<Path>) -> Result<Self, LitError> {
        Self::from_jsonl(File::open(path)?)
    }

    pub fn records(&self) -> &[LiteratureRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn group_matches(group: &TermGroup, rec: &LiteratureRecord) -> bool {
        let text: Vec<String> = tokenize(&format!("{} {}", rec.title, rec.abstract_text));
        group.terms.iter().any(|term| {
            let mesh = rec.mesh_terms.iter().any(|m| m.eq_ignore_ascii_case(term.trim()));
            let tiab = contains_phrase(&text, &tokenize(term));
            match group.field {
                Field::Mesh => mesh,
                Field::Tiab => tiab,
                Field::Any => mesh || tiab,
            }
        })
    }

    /// Whether `rec` satisfies every group and the date bounds.
    pub fn matches(strategy: &QueryStrategy, rec: &LiteratureRecord) -> bool {
        strategy.admits_date(rec.pub_date) && strategy.groups.iter().all(|g| Self::group_matches(g, rec))
    }
}

impl LiteratureSource for InMemoryCorpus {
    /// Matches ordered newest first, then by pmid, capped at `retmax`.
    fn search(&self, strategy: &QueryStrategy) -> Result<Vec<LiteratureRecord>, LitError> {
        let mut hits: Vec<&LiteratureRecord> =
            self.records.iter().filter(|r| Self::matches(strategy, r)).collect();
        hits.sort_by(|a, b| b.pub_date.cmp(&a.pub_date).then_with(|| a.pmid.cmp(&b.pmid)));
        Ok(hits.into_iter().take(strategy.retmax).cloned().collect())
    }
}
