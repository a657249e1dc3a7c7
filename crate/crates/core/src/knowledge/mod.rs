// SPDX-License-Identifier: Apache-2.0
//! Keyword-scored retrieval over the curated knowledge base and the
//! indexed reference library.
//!
//! An entry's score is
//!
//! ```text
//! 0.4 * overlap(title) + 0.2 * overlap(description)
//!   + 0.3 * overlap(keywords) + 0.1 * [template present and any overlap]
//! ```
//!
//! where `overlap(field)` is the fraction of the query's content words
//! (stop words removed, three letters or longer, lower-cased) that also
//! occur among the field's content words. Keyword overlap treats all of an
//! entry's keywords as one field.

mod library;

pub use library::{index_reference_library, load_index, save_index, Domain, IndexOptions, IndexOutcome, Rejection, ReferenceModule};

use crate::text::content_words;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;

pub const TITLE_WEIGHT: f64 = 0.4;
pub const DESCRIPTION_WEIGHT: f64 = 0.2;
pub const KEYWORD_WEIGHT: f64 = 0.3;
pub const TEMPLATE_WEIGHT: f64 = 0.1;
/// Multiplier applied to the favoured category under synthesis and
/// architecture focus.
pub const FOCUS_BOOST: f64 = 1.5;
pub const MIN_K: usize = 3;
pub const MAX_K: usize = 20;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("knowledge base has no entries")]
    EmptyKb,
    #[error("entry `{0}`: title and description must be non-empty")]
    InvalidEntry(String),
    #[error("duplicate entry id `{0}`")]
    DuplicateId(String),
    #[error("k = {0} outside [{MIN_K}, {MAX_K}]")]
    KOutOfRange(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryCategory {
    Pattern,
    Architecture,
    Optimization,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub id: String,
    pub title: String,
    pub description: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    pub category: EntryCategory,
}

impl KnowledgeEntry {
    /// Lower-cases and de-duplicates keywords (first occurrence wins) and
    /// checks the non-empty invariants.
    pub fn normalized(mut self) -> Result<Self, KnowledgeError> {
        if self.title.trim().is_empty() || self.description.trim().is_empty() {
            return Err(KnowledgeError::InvalidEntry(self.id));
        }
        let mut seen = BTreeSet::new();
        self.keywords = self
            .keywords
            .into_iter()
            .map(|k| k.trim().to_lowercase())
            .filter(|k| !k.is_empty() && seen.insert(k.clone()))
            .collect();
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FocusStrategy {
    Comprehensive,
    PatternFocused,
    ErrorFocused,
    SynthesisFocused,
    ArchitectureFocused,
}

impl FocusStrategy {
    /// Order used by the policy's focus head.
    pub const ALL: [FocusStrategy; 5] = [
        FocusStrategy::Comprehensive,
        FocusStrategy::PatternFocused,
        FocusStrategy::ErrorFocused,
        FocusStrategy::SynthesisFocused,
        FocusStrategy::ArchitectureFocused,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub spec_text: String,
    pub error_context: Option<String>,
    pub focus: FocusStrategy,
    k: usize,
}

impl RetrievalQuery {
    pub fn new(spec_text: impl Into<String>, focus: FocusStrategy, k: usize) -> Result<Self, KnowledgeError> {
        if !(MIN_K..=MAX_K).contains(&k) {
            return Err(KnowledgeError::KOutOfRange(k));
        }
        Ok(Self { spec_text: spec_text.into(), error_context: None, focus, k })
    }

    pub fn with_error_context(mut self, ctx: impl Into<String>) -> Self {
        self.error_context = Some(ctx.into());
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Content words the entries are scored against. Error context only
    /// counts under error focus.
    pub fn terms(&self) -> BTreeSet<String> {
        let mut t = content_words(&self.spec_text);
        if self.focus == FocusStrategy::ErrorFocused {
            if let Some(ctx) = &self.error_context {
                t.extend(content_words(ctx));
            }
        }
        t
    }
}

fn overlap(terms: &BTreeSet<String>, field: &BTreeSet<String>) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    (terms.intersection(field).count() as f64 / terms.len() as f64).clamp(0.0, 1.0)
}

/// Per-signal contributions of one scored entry.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub title: f64,
    pub description: f64,
    pub keywords: f64,
    pub template: f64,
}

impl ScoreBreakdown {
    pub fn total(&self) -> f64 {
        self.title + self.description + self.keywords + self.template
    }
}

fn score_fields(
    terms: &BTreeSet<String>,
    title: &str,
    description: &str,
    keywords: &[String],
    has_template: bool,
) -> ScoreBreakdown {
    let kw_words: BTreeSet<String> = keywords.iter().flat_map(|k| content_words(k)).collect();
    let t = overlap(terms, &content_words(title));
    let d = overlap(terms, &content_words(description));
    let k = overlap(terms, &kw_words);
    let any = t > 0.0 || d > 0.0 || k > 0.0;
    ScoreBreakdown {
        title: TITLE_WEIGHT * t,
        description: DESCRIPTION_WEIGHT * d,
        keywords: KEYWORD_WEIGHT * k,
        template: if has_template && any { TEMPLATE_WEIGHT } else { 0.0 },
    }
}

pub fn score_breakdown(entry: &KnowledgeEntry, query: &RetrievalQuery) -> ScoreBreakdown {
    score_fields(&query.terms(), &entry.title, &entry.description, &entry.keywords, entry.template.is_some())
}

/// Unboosted score in `[0, 1]`.
pub fn score_entry(entry: &KnowledgeEntry, query: &RetrievalQuery) -> f64 {
    score_breakdown(entry, query).total()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Curated,
    Reference,
}

/// One ranked retrieval result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub id: String,
    pub title: String,
    pub description: String,
    pub template: Option<String>,
    pub source: Source,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    entries: Vec<KnowledgeEntry>,
}

impl KnowledgeBase {
    pub fn new(entries: Vec<KnowledgeEntry>) -> Result<Self, KnowledgeError> {
        let mut ids = BTreeSet::new();
        let entries = entries
            .into_iter()
            .map(|e| {
                if !ids.insert(e.id.clone()) {
                    return Err(KnowledgeError::DuplicateId(e.id));
                }
                e.normalized()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { entries })
    }

    pub fn from_json(text: &str) -> Result<Self, KnowledgeError> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The seed corpus compiled into the crate.
    pub fn seed() -> Self {
        Self::from_json(include_str!("../../data/knowledge_base.json")).expect("seed knowledge base is valid")
    }

    pub fn entries(&self) -> &[KnowledgeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ranks candidates by (score desc, id asc) and returns at most `k`.
    /// Entries scoring zero are dropped.
    pub fn retrieve(
        &self,
        library: &[ReferenceModule],
        query: &RetrievalQuery,
    ) -> Result<Vec<Retrieved>, KnowledgeError> {
        if self.entries.is_empty() {
            return Err(KnowledgeError::EmptyKb);
        }
        let terms = query.terms();
        let mut out: Vec<Retrieved> = Vec::new();
        for e in &self.entries {
            if query.focus == FocusStrategy::PatternFocused && e.category != EntryCategory::Pattern {
                continue;
            }
            let mut score =
                score_fields(&terms, &e.title, &e.description, &e.keywords, e.template.is_some()).total();
            let boosted = match query.focus {
                FocusStrategy::SynthesisFocused => e.category == EntryCategory::Optimization,
                FocusStrategy::ArchitectureFocused => e.category == EntryCategory::Architecture,
                _ => false,
            };
            if boosted {
                score *= FOCUS_BOOST;
            }
            out.push(Retrieved {
                id: e.id.clone(),
                title: e.title.clone(),
                description: e.description.clone(),
                template: e.template.clone(),
                source: Source::Curated,
                score,
            });
        }
        if query.focus == FocusStrategy::Comprehensive {
            for m in library {
                let title = m.id.replace(['_', '-'], " ");
                let keywords = m.keywords();
                let score = score_fields(&terms, &title, &m.synopsis, &keywords, !m.body.is_empty()).total();
                out.push(Retrieved {
                    id: format!("ref:{}", m.id),
                    title: m.id.clone(),
                    description: format!("{} (source: {})", m.synopsis, m.source_attribution),
                    template: (!m.body.is_empty()).then(|| m.body.clone()),
                    source: Source::Reference,
                    score,
                });
            }
        }
        out.retain(|r| r.score > 0.0);
        out.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then_with(|| a.id.cmp(&b.id)));
        out.truncate(query.k);
        Ok(out)
    }
}

/// Renders retrieved entries as a prompt block, one section per entry in
/// rank order.
pub fn format_context(entries: &[Retrieved]) -> String {
    let mut out = String::new();
    for e in entries {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("### {}\n{}\n", e.title, e.description.trim()));
        if let Some(t) = &e.template {
            out.push_str(&format!("```verilog\n{}\n```\n", t.trim_end()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, title: &str, desc: &str, kws: &[&str], template: bool, cat: EntryCategory) -> KnowledgeEntry {
        KnowledgeEntry {
            id: id.into(),
            title: title.into(),
            description: desc.into(),
            keywords: kws.iter().map(|s| s.to_string()).collect(),
            template: template.then(|| "module t; endmodule".into()),
            category: cat,
        }
    }

    fn q(text: &str) -> RetrievalQuery {
        RetrievalQuery::new(text, FocusStrategy::Comprehensive, 5).unwrap()
    }

    #[test]
    fn weight_table() {
        let full = entry("a", "ring counter", "ring counter", &["ring", "counter"], true, EntryCategory::Pattern);
        assert!((score_entry(&full, &q("ring counter")) - 1.0).abs() < 1e-12);
        let none = entry("b", "uart", "serial", &["baud"], false, EntryCategory::Pattern);
        assert_eq!(score_entry(&none, &q("ring counter")), 0.0);
        let title_tpl = entry("c", "ring counter", "unrelated words", &[], true, EntryCategory::Pattern);
        assert!((score_entry(&title_tpl, &q("ring counter")) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn template_bonus_needs_overlap() {
        let e = entry("c", "uart", "serial", &[], true, EntryCategory::Pattern);
        assert_eq!(score_entry(&e, &q("ring counter")), 0.0);
    }

    #[test]
    fn keywords_are_normalized() {
        let e = entry("a", "t", "d", &["FIFO", "fifo", " Gray "], false, EntryCategory::Pattern).normalized().unwrap();
        assert_eq!(e.keywords, ["fifo", "gray"]);
        assert!(entry("z", " ", "d", &[], false, EntryCategory::Pattern).normalized().is_err());
    }

    #[test]
    fn k_bounds() {
        assert!(RetrievalQuery::new("x", FocusStrategy::Comprehensive, 2).is_err());
        assert!(RetrievalQuery::new("x", FocusStrategy::Comprehensive, 21).is_err());
    }

    #[test]
    fn pattern_focus_filters_and_ties_sort_by_id() {
        let kb = KnowledgeBase::new(vec![
            entry("b2", "shift register", "d", &[], false, EntryCategory::Pattern),
            entry("a1", "shift register", "d", &[], false, EntryCategory::Pattern),
            entry("c3", "shift register", "d", &[], false, EntryCategory::Architecture),
        ])
        .unwrap();
        let query = RetrievalQuery::new("shift register", FocusStrategy::PatternFocused, 3).unwrap();
        let ids: Vec<_> = kb.retrieve(&[], &query).unwrap().into_iter().map(|r| r.id).collect();
        assert_eq!(ids, ["a1", "b2"]);
    }

    #[test]
    fn synthesis_focus_boosts_optimization() {
        let kb = KnowledgeBase::new(vec![
            entry("a", "pipelined multiplier", "d", &[], false, EntryCategory::Pattern),
            entry("b", "pipelined multiplier", "d", &[], false, EntryCategory::Optimization),
        ])
        .unwrap();
        let query = RetrievalQuery::new("pipelined multiplier", FocusStrategy::SynthesisFocused, 3).unwrap();
        let r = kb.retrieve(&[], &query).unwrap();
        assert_eq!(r[0].id, "b");
        assert!((r[0].score - 0.6).abs() < 1e-12);
    }

    #[test]
    fn error_focus_uses_error_context() {
        let kb = KnowledgeBase::new(vec![entry("a", "latch avoidance", "d", &[], false, EntryCategory::Pattern)]).unwrap();
        let plain = RetrievalQuery::new("adder", FocusStrategy::ErrorFocused, 3).unwrap();
        assert!(kb.retrieve(&[], &plain).unwrap().is_empty());
        let with = plain.with_error_context("inferred latch");
        assert_eq!(kb.retrieve(&[], &with).unwrap().len(), 1);
    }

    #[test]
    fn empty_kb_is_an_error() {
        assert!(matches!(KnowledgeBase::default().retrieve(&[], &q("x")), Err(KnowledgeError::EmptyKb)));
    }

    #[test]
    fn context_rendering() {
        assert_eq!(format_context(&[]), "");
        let r = Retrieved {
            id: "a".into(),
            title: "T".into(),
            description: "D".into(),
            template: None,
            source: Source::Curated,
            score: 1.0,
        };
        assert_eq!(format_context(std::slice::from_ref(&r)), "### T\nD\n");
        let mut with = r.clone();
        with.template = Some("module m; endmodule".into());
        assert_eq!(format_context(&[r, with]), "### T\nD\n\n### T\nD\n```verilog\nmodule m; endmodule\n```\n");
    }

    #[test]
    fn seed_corpus_loads() {
        let kb = KnowledgeBase::seed();
        assert!(kb.len() >= 30);
        for cat in [EntryCategory::Pattern, EntryCategory::Architecture, EntryCategory::Optimization] {
            assert!(kb.entries().iter().any(|e| e.category == cat));
        }
    }
}
