//! Entity lexicons and text normalization.
//!
//! A lexicon maps alias surface forms (synonyms, demonyms) to canonical
//! entities of one relation type. Normalization rewrites every alias
//! occurrence to a single canonical token, collapses mentions of the
//! person's own name into one token, and lowercases everything else.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::PersonDocument;
use crate::error::{Error, Result};
use crate::io_util::{read_lines, write_atomic};

/// Name parts shorter than this are never collapsed ("de", "Jr").
pub const MIN_NAME_PART_CHARS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationType {
    Profession,
    Nationality,
}

impl RelationType {
    pub const ALL: [RelationType; 2] = [RelationType::Profession, RelationType::Nationality];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationType::Profession => "profession",
            RelationType::Nationality => "nationality",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "profession" => Ok(RelationType::Profession),
            "nationality" => Ok(RelationType::Nationality),
            other => Err(Error::UnknownRelation(other.to_string())),
        }
    }
}

/// Normalized tokens; none contains whitespace.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenStream(Vec<String>);

impl TokenStream {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenStream(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn extend(&mut self, other: TokenStream) {
        self.0.extend(other.0);
    }

    /// Space-joined tokens; feeding this back through normalization is a no-op.
    pub fn joined(&self) -> String {
        self.0.join(" ")
    }
}

/// Strips every non-alphanumeric character, so "Bosnia and Herzegovina"
/// becomes "BosniaandHerzegovina" and "Jean-Luc Godard" becomes "JeanLucGodard".
pub fn token_form(surface: &str) -> String {
    surface.chars().filter(|c| c.is_alphanumeric()).collect()
}

fn word_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(s..text.len());
    }
    spans
}

fn lower_words(text: &str) -> Vec<String> {
    word_spans(text)
        .into_iter()
        .map(|r| text[r].to_lowercase())
        .collect()
}

/// Canonical entities of one relation type with their aliases.
#[derive(Debug, Clone)]
pub struct EntityLexicon {
    relation: RelationType,
    entries: BTreeMap<String, BTreeSet<String>>,
    canonicals: Vec<String>,
    token_forms: Vec<String>,
    by_token: HashMap<String, usize>,
    by_canonical: HashMap<String, usize>,
    patterns: HashMap<Vec<String>, usize>,
    max_pattern_words: usize,
}

impl PartialEq for EntityLexicon {
    fn eq(&self, other: &Self) -> bool {
        self.relation == other.relation && self.entries == other.entries
    }
}

impl EntityLexicon {
    /// Builds a lexicon from `(canonical, aliases)` pairs. The canonical
    /// surface form is always added as its own alias.
    pub fn new<I, A, S>(relation: RelationType, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, A)>,
        A: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut lex = EntityLexicon {
            relation,
            entries: BTreeMap::new(),
            canonicals: Vec::new(),
            token_forms: Vec::new(),
            by_token: HashMap::new(),
            by_canonical: HashMap::new(),
            patterns: HashMap::new(),
            max_pattern_words: 0,
        };
        for (canonical, aliases) in entries {
            let canonical = canonical.into();
            let aliases: Vec<String> = aliases.into_iter().map(Into::into).collect();
            lex.insert(canonical, aliases)?;
        }
        Ok(lex)
    }

    fn insert(&mut self, canonical: String, aliases: Vec<String>) -> Result<()> {
        let canonical = canonical.trim().to_string();
        let tok = token_form(&canonical);
        if tok.is_empty() {
            return Err(Error::Validation(format!(
                "canonical entity {canonical:?} has no alphanumeric characters"
            )));
        }
        if self.by_canonical.contains_key(&canonical) {
            return Err(Error::Validation(format!(
                "canonical entity {canonical:?} is listed twice"
            )));
        }
        if let Some(&other) = self.by_token.get(&tok) {
            return Err(Error::LexiconConflict {
                alias: tok,
                first: self.canonicals[other].clone(),
                second: canonical,
            });
        }
        let idx = self.canonicals.len();
        self.canonicals.push(canonical.clone());
        self.token_forms.push(tok.clone());
        self.by_token.insert(tok.clone(), idx);
        self.by_canonical.insert(canonical.clone(), idx);

        let mut surfaces: BTreeSet<String> = BTreeSet::new();
        surfaces.insert(canonical.clone());
        for a in aliases {
            let a = a.trim();
            if !a.is_empty() {
                surfaces.insert(a.to_string());
            }
        }
        // The token form is matched too, so normalized output re-normalizes to itself.
        let mut keys: Vec<(String, Vec<String>)> = surfaces
            .iter()
            .map(|s| (s.clone(), lower_words(s)))
            .collect();
        keys.push((tok.clone(), vec![tok.to_lowercase()]));
        for (surface, key) in keys {
            if key.is_empty() {
                return Err(Error::Validation(format!(
                    "alias {surface:?} of {canonical:?} has no alphanumeric characters"
                )));
            }
            match self.patterns.get(&key) {
                Some(&owner) if owner != idx => {
                    return Err(Error::LexiconConflict {
                        alias: surface,
                        first: self.canonicals[owner].clone(),
                        second: canonical,
                    })
                }
                Some(_) => {}
                None => {
                    self.max_pattern_words = self.max_pattern_words.max(key.len());
                    self.patterns.insert(key, idx);
                }
            }
        }
        self.entries.insert(canonical, surfaces);
        Ok(())
    }

    pub fn relation(&self) -> RelationType {
        self.relation
    }

    pub fn len(&self) -> usize {
        self.canonicals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.canonicals.is_empty()
    }

    /// Canonical entities in sorted order.
    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn aliases(&self, canonical: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(canonical)
    }

    pub fn contains(&self, canonical: &str) -> bool {
        self.by_canonical.contains_key(canonical)
    }

    /// Errors unless `canonical` is an entity of this lexicon.
    pub fn require(&self, canonical: &str) -> Result<()> {
        if self.contains(canonical) {
            Ok(())
        } else {
            Err(Error::UnknownEntity {
                relation: self.relation.to_string(),
                entity: canonical.to_string(),
            })
        }
    }

    /// Case-insensitive alias lookup.
    pub fn resolve(&self, alias: &str) -> Option<&str> {
        let key = lower_words(alias);
        self.patterns
            .get(&key)
            .map(|&i| self.canonicals[i].as_str())
    }

    pub fn token_of(&self, canonical: &str) -> Option<&str> {
        self.by_canonical
            .get(canonical)
            .map(|&i| self.token_forms[i].as_str())
    }

    pub fn entity_of_token(&self, token: &str) -> Option<&str> {
        self.by_token.get(token).map(|&i| self.canonicals[i].as_str())
    }

    pub fn is_entity_token(&self, token: &str) -> bool {
        self.by_token.contains_key(token)
    }

    pub fn load(path: &Path, relation: RelationType) -> Result<Self> {
        let mut lex = EntityLexicon::new(relation, Vec::<(String, Vec<String>)>::new())?;
        for (line_no, line) in read_lines(path)? {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let canonical = fields.next().unwrap_or_default().to_string();
            if canonical.trim().is_empty() {
                return Err(Error::parse(path, line_no, "empty canonical entity"));
            }
            let aliases = fields.map(str::to_string).collect();
            lex.insert(canonical, aliases).map_err(|e| match e {
                Error::Validation(m) => Error::parse(path, line_no, m),
                other => other,
            })?;
        }
        Ok(lex)
    }

    /// One `canonical TAB alias...` line per entity, sorted.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (canonical, aliases) in &self.entries {
            out.push_str(canonical);
            for a in aliases.iter().filter(|a| *a != canonical) {
                out.push('\t');
                out.push_str(a);
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_tsv().as_bytes())
    }
}

pub fn load_lexicon(path: &Path, relation: RelationType) -> Result<EntityLexicon> {
    EntityLexicon::load(path, relation)
}

/// Byte ranges of `text` that lie outside double-quoted spans.
///
/// A straight `"` closes at the next straight `"`; a curly `“` closes at the
/// next `”`. A quote with no partner, including a stray `”`, is dropped on
/// its own.
pub fn unquoted_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut keep_from = 0;
    let mut i = 0;
    while let Some(c) = text[i..].chars().next() {
        let len = c.len_utf8();
        let close = match c {
            '"' => Some('"'),
            '\u{201C}' => Some('\u{201D}'),
            '\u{201D}' => None,
            _ => {
                i += len;
                continue;
            }
        };
        if keep_from < i {
            spans.push(keep_from..i);
        }
        let after = i + len;
        match close.and_then(|q| text[after..].find(q).map(|off| after + off + q.len_utf8())) {
            Some(end) => {
                keep_from = end;
                i = end;
            }
            None => {
                keep_from = after;
                i = after;
            }
        }
    }
    if keep_from < text.len() {
        spans.push(keep_from..text.len());
    }
    spans
}

/// Removes every double-quoted phrase, quotes included.
pub fn strip_quoted(text: &str) -> String {
    unquoted_spans(text)
        .into_iter()
        .map(|r| &text[r])
        .collect()
}

enum Target {
    Entity(usize),
    Person,
}

/// Normalizes text for one person against one lexicon.
pub struct Normalizer<'a> {
    lexicon: &'a EntityLexicon,
    person_token: String,
    person_patterns: HashMap<Vec<String>, ()>,
    max_person_words: usize,
}

impl<'a> Normalizer<'a> {
    pub fn new(lexicon: &'a EntityLexicon, person_full_name: &str) -> Self {
        let person_token = token_form(person_full_name);
        let mut person_patterns = HashMap::new();
        if !person_token.is_empty() {
            let mut keys = vec![lower_words(person_full_name), vec![person_token.to_lowercase()]];
            keys.extend(
                person_full_name
                    .split_whitespace()
                    .filter(|p| p.chars().count() >= MIN_NAME_PART_CHARS)
                    .map(lower_words),
            );
            for k in keys.into_iter().filter(|k| !k.is_empty()) {
                person_patterns.insert(k, ());
            }
        }
        let max_person_words = person_patterns.keys().map(Vec::len).max().unwrap_or(0);
        Normalizer {
            lexicon,
            person_token,
            person_patterns,
            max_person_words,
        }
    }

    /// The collapsed full-name token; empty if the name has no alphanumerics.
    pub fn person_token(&self) -> &str {
        &self.person_token
    }

    pub fn normalize(&self, text: &str) -> TokenStream {
        let mut out = Vec::new();
        self.normalize_into(text, &mut out);
        TokenStream(out)
    }

    pub fn normalize_into(&self, text: &str, out: &mut Vec<String>) {
        self.normalize_chunk(text, out);
    }

    fn lookup(&self, key: &[String]) -> Option<Target> {
        if key.len() <= self.lexicon.max_pattern_words {
            if let Some(&i) = self.lexicon.patterns.get(key) {
                return Some(Target::Entity(i));
            }
        }
        if key.len() <= self.max_person_words && self.person_patterns.contains_key(key) {
            return Some(Target::Person);
        }
        None
    }

    fn normalize_chunk(&self, chunk: &str, out: &mut Vec<String>) {
        let mut tokens = self.match_once(lower_words(chunk));
        // A replacement can complete a longer alias ("the Dutch" becomes
        // "the Netherlands"), so repeat until stable. Every pass that changes
        // anything merges tokens, which bounds the loop by the token count.
        loop {
            let lowered: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
            let next = self.match_once(lowered);
            if next == tokens {
                break;
            }
            tokens = next;
        }
        out.extend(tokens);
    }

    fn match_once(&self, words: Vec<String>) -> Vec<String> {
        let longest = self.lexicon.max_pattern_words.max(self.max_person_words);
        let mut out = Vec::with_capacity(words.len());
        let mut i = 0;
        while i < words.len() {
            let upper = longest.min(words.len() - i);
            let hit = (1..=upper)
                .rev()
                .find_map(|n| self.lookup(&words[i..i + n]).map(|t| (n, t)));
            match hit {
                Some((n, Target::Entity(e))) => {
                    out.push(self.lexicon.token_forms[e].clone());
                    i += n;
                }
                Some((n, Target::Person)) => {
                    out.push(self.person_token.clone());
                    i += n;
                }
                None => {
                    out.push(words[i].clone());
                    i += 1;
                }
            }
        }
        out
    }
}

/// Normalizes `text`: aliases become canonical tokens (longest match first,
/// case-insensitive, whole words), parts of the person's name of at least
/// three characters become the collapsed full name, and every other word is
/// lowercased.
pub fn normalize_text(text: &str, lexicon: &EntityLexicon, person_full_name: &str) -> TokenStream {
    Normalizer::new(lexicon, person_full_name).normalize(text)
}

/// A person's document normalized sentence by sentence, so no alias or name
/// match crosses a sentence boundary and the first sentence is a prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedDocument {
    tokens: TokenStream,
    first_sentence_len: usize,
    person_token: String,
}

impl NormalizedDocument {
    pub fn new(doc: &PersonDocument, lexicon: &EntityLexicon) -> Self {
        let norm = Normalizer::new(lexicon, doc.full_name());
        let mut tokens = Vec::new();
        let mut first_sentence_len = 0;
        for (i, sentence) in doc.sentences().iter().enumerate() {
            norm.normalize_into(sentence, &mut tokens);
            if i == 0 {
                first_sentence_len = tokens.len();
            }
        }
        NormalizedDocument {
            tokens: TokenStream(tokens),
            first_sentence_len,
            person_token: norm.person_token,
        }
    }

    pub fn tokens(&self) -> &[String] {
        self.tokens.tokens()
    }

    pub fn first_sentence(&self) -> &[String] {
        &self.tokens.tokens()[..self.first_sentence_len]
    }

    pub fn person_token(&self) -> &str {
        &self.person_token
    }
}

/// Normalizes a document after removing quoted phrases. Quotes may span
/// sentences; what survives of each sentence is normalized on its own.
pub fn normalize_unquoted(doc: &PersonDocument, lexicon: &EntityLexicon) -> TokenStream {
    let norm = Normalizer::new(lexicon, doc.full_name());
    let text = doc.text();
    let kept = unquoted_spans(text);
    let mut tokens = Vec::new();
    let mut start = 0;
    for sentence in doc.sentences() {
        let end = start + sentence.len();
        let piece: String = kept
            .iter()
            .filter_map(|r| {
                let (a, b) = (r.start.max(start), r.end.min(end));
                (a < b).then(|| &text[a..b])
            })
            .collect();
        norm.normalize_into(&piece, &mut tokens);
        start = end + 1;
    }
    TokenStream(tokens)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mention<'a> {
    pub entity: &'a str,
    pub position: usize,
}

/// Every entity-token occurrence in order, repeats included.
pub fn mentions<'l>(tokens: &[String], lexicon: &'l EntityLexicon) -> Vec<Mention<'l>> {
    tokens
        .iter()
        .enumerate()
        .filter_map(|(position, t)| {
            lexicon
                .entity_of_token(t)
                .map(|entity| Mention { entity, position })
        })
        .collect()
}
