//! Symptom-query pattern compilation and matching.
//!
//! The builtin set holds 63 patterns: 3 single-term phrases plus the cross
//! product of 3 main terms and 20 facet terms. Double-term patterns are
//! AND-combined and order-free: a pattern matches a query when every one of
//! its terms matches some token (or token n-gram, for multi-word phrases).
//! A trailing `%` on a term marks prefix matching.
//!
//! Pattern sets are immutable once constructed and safe to share across
//! threads; matching is pure.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

const SINGLE_PHRASES: [&str; 3] = [
    "likely to be corona",
    "likely to be corona-virus",
    "likely to be new type pneumonia",
];

/// Main terms of double patterns; the flag marks prefix (wildcard) matching.
const MAIN_TERMS: [(&str, bool); 3] =
    [("corona", true), ("new type", false), ("new type pneumonia", false)];

/// 18 symptom phrases plus the two service phrases.
const FACET_TERMS: [&str; 20] = [
    "cough",
    "diarrhea",
    "coughing up phlegm",
    "slight fever",
    "headache",
    "cold",
    "fevered",
    "no fever",
    "without fever",
    "high fever",
    "develop fever",
    "runny nose",
    "chills",
    "throat",
    "chest",
    "phlegm",
    "feel tired",
    "weariness",
    "designated hospitals",
    "advice",
];

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate pattern id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: wildcard '%' only allowed as the trailing character of a term, got {term:?}")]
    WildcardPosition { line: usize, term: String },
    #[error("pattern {id:?}: {msg}")]
    Invalid { id: String, msg: String },
    #[error("failed to read pattern file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    Single,
    Double,
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternKind::Single => "single",
            PatternKind::Double => "double",
        })
    }
}

/// One term of a pattern. `text` is already normalized; multi-word phrases
/// are kept as a single term and matched against token n-grams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternTerm {
    pub text: String,
    pub wildcard: bool,
}

impl PatternTerm {
    pub fn exact(text: &str) -> Self {
        PatternTerm { text: normalize_query(text), wildcard: false }
    }

    pub fn prefix(text: &str) -> Self {
        PatternTerm { text: normalize_query(text), wildcard: true }
    }

    /// Renders the term in pattern-file syntax (trailing `%` for prefixes).
    pub fn render(&self) -> String {
        if self.wildcard {
            format!("{}%", self.text)
        } else {
            self.text.clone()
        }
    }

    fn matches_tokens(&self, tokens: &[&str]) -> bool {
        let words: Vec<&str> = self.text.split(' ').collect();
        let n = words.len();
        if n == 1 {
            return tokens.iter().any(|t| self.word_matches(words[0], t));
        }
        tokens.windows(n).any(|win| {
            win[..n - 1] == words[..n - 1] && self.word_matches(words[n - 1], win[n - 1])
        })
    }

    fn word_matches(&self, word: &str, token: &str) -> bool {
        if self.wildcard {
            token.starts_with(word)
        } else {
            token == word
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPattern {
    pub id: String,
    pub kind: PatternKind,
    pub terms: Vec<PatternTerm>,
}

impl QueryPattern {
    pub fn single(id: impl Into<String>, term: PatternTerm) -> Self {
        QueryPattern { id: id.into(), kind: PatternKind::Single, terms: vec![term] }
    }

    pub fn double(id: impl Into<String>, main: PatternTerm, facet: PatternTerm) -> Self {
        QueryPattern { id: id.into(), kind: PatternKind::Double, terms: vec![main, facet] }
    }

    fn validate(&self) -> Result<(), PatternError> {
        let invalid = |msg: String| PatternError::Invalid { id: self.id.clone(), msg };
        let expected = match self.kind {
            PatternKind::Single => 1,
            PatternKind::Double => 2,
        };
        if self.terms.len() != expected {
            return Err(invalid(format!(
                "{} pattern must have exactly {expected} term(s), got {}",
                self.kind,
                self.terms.len()
            )));
        }
        if self.terms.iter().filter(|t| t.wildcard).count() > 1 {
            return Err(invalid("at most one term may carry a wildcard".to_string()));
        }
        for term in &self.terms {
            if term.text.is_empty() {
                return Err(invalid("empty term".to_string()));
            }
            if term.text.contains('%') {
                return Err(invalid(format!("'%' inside term {:?}", term.text)));
            }
        }
        Ok(())
    }
}

/// How terms are matched against queries. Token mode is the default;
/// substring mode serves delimiter-free scripts where queries cannot be
/// tokenized on whitespace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchMode {
    #[default]
    Token,
    Substring,
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Token => "token",
            MatchMode::Substring => "substring",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternSource {
    Builtin,
    File(PathBuf),
}

impl fmt::Display for PatternSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternSource::Builtin => f.write_str("builtin"),
            PatternSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PatternSet {
    patterns: Vec<QueryPattern>,
    source: PatternSource,
    mode: MatchMode,
}

/// Outcome of matching one query: the ids of every pattern that matched.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchResult {
    pub pattern_ids: Vec<String>,
}

impl MatchResult {
    pub fn matched(&self) -> bool {
        !self.pattern_ids.is_empty()
    }
}

impl PatternSet {
    pub fn new(
        patterns: Vec<QueryPattern>,
        source: PatternSource,
        mode: MatchMode,
    ) -> Result<Self, PatternError> {
        let mut seen = BTreeSet::new();
        for p in &patterns {
            p.validate()?;
            if !seen.insert(p.id.clone()) {
                return Err(PatternError::DuplicateId { line: 0, id: p.id.clone() });
            }
        }
        Ok(PatternSet { patterns, source, mode })
    }

    pub fn patterns(&self) -> &[QueryPattern] {
        &self.patterns
    }

    pub fn source(&self) -> &PatternSource {
        &self.source
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Matches a normalized query against every pattern in the set.
    pub fn match_query(&self, query: &str) -> MatchResult {
        let tokens: Vec<&str> = query.split_whitespace().collect();
        let mut pattern_ids = Vec::new();
        for p in &self.patterns {
            let all = match self.mode {
                MatchMode::Token => p.terms.iter().all(|t| t.matches_tokens(&tokens)),
                MatchMode::Substring => p.terms.iter().all(|t| query.contains(&t.text)),
            };
            if all {
                pattern_ids.push(p.id.clone());
            }
        }
        MatchResult { pattern_ids }
    }
}

/// Normalizes raw query text: Unicode compatibility normalization (NFKC),
/// lowercasing, and whitespace trimming/collapsing.
pub fn normalize_query(raw: &str) -> String {
    // Case mapping can denormalize exotic code points; iterate to a fixed
    // point so the function is idempotent.
    let mut cur = normalize_pass(raw);
    for _ in 0..3 {
        let next = normalize_pass(&cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

fn normalize_pass(raw: &str) -> String {
    let folded: String = raw.nfkc().collect::<String>().to_lowercase();
    let mut out = String::with_capacity(folded.len());
    for tok in folded.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

fn slugify(term: &str) -> String {
    term.chars().map(|c| if c.is_alphanumeric() { c } else { '_' }).collect()
}

/// Builds the builtin 63-pattern set: 3 single-term patterns plus
/// 3 main terms x 20 facet terms.
pub fn expand_default_patterns() -> PatternSet {
    let mut patterns = Vec::with_capacity(63);
    for phrase in SINGLE_PHRASES {
        patterns.push(QueryPattern::single(slugify(phrase), PatternTerm::exact(phrase)));
    }
    for (main, wildcard) in MAIN_TERMS {
        for facet in FACET_TERMS {
            let main_term = if wildcard { PatternTerm::prefix(main) } else { PatternTerm::exact(main) };
            let id = format!("{}+{}", slugify(main), slugify(facet));
            patterns.push(QueryPattern::double(id, main_term, PatternTerm::exact(facet)));
        }
    }
    PatternSet::new(patterns, PatternSource::Builtin, MatchMode::Token)
        .expect("builtin pattern set is valid")
}

/// Convenience entry point: match a normalized query against a set.
pub fn match_query(set: &PatternSet, query: &str) -> MatchResult {
    set.match_query(query)
}

/// Loads a pattern file. Format, one record per line:
///
/// ```text
/// # comment
/// mode token            (optional; token or substring, at most once)
/// <id>|single|<term>
/// <id>|double|<term>|<term>
/// ```
///
/// A trailing `%` on a term requests prefix matching; `%` anywhere else is
/// rejected. Terms are normalized on load.
pub fn load_pattern_file(path: &Path) -> Result<PatternSet, PatternError> {
    let text = fs::read_to_string(path)
        .map_err(|source| PatternError::Io { path: path.to_path_buf(), source })?;
    parse_pattern_text(&text, PatternSource::File(path.to_path_buf()))
}

/// Parses pattern-file text; `source` is recorded on the resulting set.
pub fn parse_pattern_text(text: &str, source: PatternSource) -> Result<PatternSet, PatternError> {
    let mut patterns: Vec<QueryPattern> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut mode: Option<MatchMode> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err =
            |msg: String| PatternError::Parse { line: line_no, msg };

        if let Some(rest) = line.strip_prefix("mode ") {
            if mode.is_some() {
                return Err(parse_err("repeated mode directive".to_string()));
            }
            if !patterns.is_empty() {
                return Err(parse_err("mode directive must precede patterns".to_string()));
            }
            mode = Some(match rest.trim() {
                "token" => MatchMode::Token,
                "substring" => MatchMode::Substring,
                other => return Err(parse_err(format!("unknown mode {other:?}"))),
            });
            continue;
        }

        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(parse_err(format!(
                "expected 'id|kind|term[|term]', got {} field(s)",
                fields.len()
            )));
        }
        let id = fields[0].to_string();
        if id.is_empty() {
            return Err(parse_err("empty pattern id".to_string()));
        }
        if !seen.insert(id.clone()) {
            return Err(PatternError::DuplicateId { line: line_no, id });
        }
        let kind = match fields[1] {
            "single" => PatternKind::Single,
            "double" => PatternKind::Double,
            other => return Err(parse_err(format!("unknown kind {other:?}"))),
        };
        let n_terms = match kind {
            PatternKind::Single => 1,
            PatternKind::Double => 2,
        };
        if fields.len() - 2 != n_terms {
            return Err(parse_err(format!(
                "{kind} pattern needs {n_terms} term(s), got {}",
                fields.len() - 2
            )));
        }

        let mut terms = Vec::with_capacity(n_terms);
        for raw_term in &fields[2..] {
            terms.push(parse_term(raw_term, line_no)?);
        }
        if terms.iter().filter(|t| t.wildcard).count() > 1 {
            return Err(parse_err("at most one term may carry a wildcard".to_string()));
        }
        patterns.push(QueryPattern { id, kind, terms });
    }

    PatternSet::new(patterns, source, mode.unwrap_or_default())
}

fn parse_term(raw: &str, line_no: usize) -> Result<PatternTerm, PatternError> {
    let (body, wildcard) = match raw.strip_suffix('%') {
        Some(body) => (body, true),
        None => (raw, false),
    };
    let text = normalize_query(body);
    if text.is_empty() {
        return Err(PatternError::Parse { line: line_no, msg: format!("empty term {raw:?}") });
    }
    if text.contains('%') {
        return Err(PatternError::WildcardPosition { line: line_no, term: raw.to_string() });
    }
    Ok(PatternTerm { text, wildcard })
}

/// Writes a set in pattern-file syntax, loadable by [`load_pattern_file`].
pub fn write_pattern_file<W: Write>(set: &PatternSet, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# symgrid patterns v1 ({} patterns)", set.len())?;
    writeln!(out, "mode {}", set.mode())?;
    for p in set.patterns() {
        let terms: Vec<String> = p.terms.iter().map(PatternTerm::render).collect();
        writeln!(out, "{}|{}|{}", p.id, p.kind, terms.join("|"))?;
    }
    Ok(())
}
