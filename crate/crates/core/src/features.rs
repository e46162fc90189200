//! Per-triple features: embedding similarity, TF-IDF profile overlap and
//! first-mention order.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::corpus::{CorpusIndex, PersonDocument};
use crate::distsup::{DistantLabel, LabeledTriple, MentionSummary, MAX_SCORE};
use crate::embeddings::{w2v_feature, EmbeddingTable};
use crate::error::{Error, Result};
use crate::io_util::{read_lines, write_atomic};
use crate::lexicon::{mentions, normalize_unquoted, token_form, EntityLexicon, NormalizedDocument};

pub const PROFILE_SIZE: usize = 20;

/// The highest-weighted TF-IDF words of one entity, heaviest first.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityProfile {
    entity: String,
    top_words: Vec<(String, f64)>,
}

impl EntityProfile {
    /// Sorts by weight (descending, ties by word), drops non-positive weights
    /// and keeps at most [`PROFILE_SIZE`] words.
    pub fn new(entity: impl Into<String>, mut words: Vec<(String, f64)>) -> Result<Self> {
        if words.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(Error::Validation("profile weights must be finite and >= 0".into()));
        }
        words.retain(|(_, w)| *w > 0.0);
        words.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        words.truncate(PROFILE_SIZE);
        Ok(EntityProfile {
            entity: entity.into(),
            top_words: words,
        })
    }

    pub fn empty(entity: impl Into<String>) -> Self {
        EntityProfile {
            entity: entity.into(),
            top_words: Vec::new(),
        }
    }

    pub fn entity(&self) -> &str {
        &self.entity
    }

    pub fn top_words(&self) -> &[(String, f64)] {
        &self.top_words
    }

    pub fn max_weight(&self) -> Option<f64> {
        self.top_words.first().map(|(_, w)| *w)
    }

    pub fn is_empty(&self) -> bool {
        self.top_words.is_empty()
    }
}

pub type Profiles = BTreeMap<String, EntityProfile>;

/// TF-IDF weights of every word in every pseudo-document.
///
/// `weight(t, d) = tf(t, d) / |d| * ln(N / df(t))` where `N` counts the
/// non-empty pseudo-documents. Words in `excluded` never enter a profile but
/// still count towards `|d|`.
pub fn profiles_from_pseudo_documents(
    pseudo_docs: &BTreeMap<String, Vec<String>>,
    excluded: &HashSet<String>,
) -> Profiles {
    let non_empty: Vec<(&String, &Vec<String>)> =
        pseudo_docs.iter().filter(|(_, d)| !d.is_empty()).collect();
    let n = non_empty.len() as f64;
    let mut df: HashMap<&str, usize> = HashMap::new();
    let mut tfs: Vec<HashMap<&str, usize>> = Vec::with_capacity(non_empty.len());
    for (_, doc) in &non_empty {
        let mut tf: HashMap<&str, usize> = HashMap::new();
        for t in doc.iter() {
            *tf.entry(t.as_str()).or_default() += 1;
        }
        for t in tf.keys() {
            *df.entry(t).or_default() += 1;
        }
        tfs.push(tf);
    }

    let mut out: Profiles = pseudo_docs
        .keys()
        .map(|e| (e.clone(), EntityProfile::empty(e.clone())))
        .collect();
    for ((entity, doc), tf) in non_empty.into_iter().zip(tfs) {
        let len = doc.len() as f64;
        let words = tf
            .into_iter()
            .filter(|(t, _)| !excluded.contains(*t))
            .map(|(t, c)| (t.to_string(), c as f64 / len * (n / df[t] as f64).ln()))
            .collect();
        let profile = EntityProfile::new(entity.clone(), words).expect("tf-idf weights are >= 0");
        out.insert(entity.clone(), profile);
    }
    out
}

/// Builds one profile per lexicon entity from the documents of the persons
/// labeled positive for it. Entity tokens and person-name tokens are left
/// out of every profile.
pub fn build_entity_profiles(
    index: &CorpusIndex,
    lexicon: &EntityLexicon,
    labels: &[LabeledTriple],
) -> Profiles {
    let mut positives: BTreeMap<&str, BTreeSet<&str>> =
        lexicon.entities().map(|e| (e, BTreeSet::new())).collect();
    for t in labels {
        if t.relation == lexicon.relation() && t.score == MAX_SCORE {
            if let Some(set) = positives.get_mut(t.entity.as_str()) {
                set.insert(t.person_id.as_str());
            }
        }
    }
    let mut excluded: HashSet<String> = lexicon
        .entities()
        .filter_map(|e| lexicon.token_of(e).map(str::to_string))
        .collect();
    excluded.extend(index.documents().map(|d| token_form(d.full_name())));

    let mut normalized: HashMap<&str, NormalizedDocument> = HashMap::new();
    let mut pseudo_docs: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (entity, persons) in positives {
        let mut tokens = Vec::new();
        for person in persons {
            let Some(doc) = index.get(person) else { continue };
            let nd = normalized
                .entry(person)
                .or_insert_with(|| NormalizedDocument::new(doc, lexicon));
            tokens.extend_from_slice(nd.tokens());
        }
        pseudo_docs.insert(entity.to_string(), tokens);
    }
    profiles_from_pseudo_documents(&pseudo_docs, &excluded)
}

/// Fraction of the profile present in the document: each present word adds
/// `weight / max_weight`, and the sum is divided by [`PROFILE_SIZE`].
pub fn tfidf_feature(doc_tokens: &[String], profile: &EntityProfile) -> f64 {
    let Some(max) = profile.max_weight() else {
        return 0.0;
    };
    let present: HashSet<&str> = doc_tokens.iter().map(String::as_str).collect();
    let sum: f64 = profile
        .top_words
        .iter()
        .filter(|(w, _)| present.contains(w.as_str()))
        .map(|(_, weight)| weight / max)
        .sum();
    sum / PROFILE_SIZE as f64
}

/// How "the next occurrence" is counted when ranking mentions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OccurrenceMode {
    /// The k-th distinct entity to appear scores `8 - k`.
    #[default]
    DistinctEntities,
    /// The k-th mention of any entity scores `8 - k`; an entity keeps the
    /// score of its first mention.
    RawMentions,
}

impl OccurrenceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OccurrenceMode::DistinctEntities => "distinct-entities",
            OccurrenceMode::RawMentions => "raw-mentions",
        }
    }
}

impl FromStr for OccurrenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distinct-entities" => Ok(OccurrenceMode::DistinctEntities),
            "raw-mentions" => Ok(OccurrenceMode::RawMentions),
            other => Err(Error::Config(format!(
                "occurrence mode {other:?} (expected distinct-entities or raw-mentions)"
            ))),
        }
    }
}

/// Occurrence scores of every entity mentioned in `tokens`.
pub fn occurrence_ranks(
    tokens: &[String],
    lexicon: &EntityLexicon,
    mode: OccurrenceMode,
) -> BTreeMap<String, u8> {
    let mut ranks = BTreeMap::new();
    let mut distinct = 0usize;
    for (k, m) in mentions(tokens, lexicon).into_iter().enumerate() {
        if ranks.contains_key(m.entity) {
            continue;
        }
        distinct += 1;
        let ordinal = match mode {
            OccurrenceMode::DistinctEntities => distinct,
            OccurrenceMode::RawMentions => k + 1,
        };
        let score = (usize::from(MAX_SCORE) + 1).saturating_sub(ordinal) as u8;
        ranks.insert(m.entity.to_string(), score);
    }
    ranks
}

/// Score of `entity` by the order of first mentions in the document with
/// quoted phrases removed; 0 when it is never mentioned.
pub fn occurrence_order_score(
    doc: &PersonDocument,
    entity: &str,
    lexicon: &EntityLexicon,
    mode: OccurrenceMode,
) -> Result<u8> {
    lexicon.require(entity)?;
    let tokens = normalize_unquoted(doc, lexicon);
    Ok(occurrence_ranks(tokens.tokens(), lexicon, mode)
        .get(entity)
        .copied()
        .unwrap_or(0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub w2v: f64,
    pub tfidf: f64,
    pub occ: u8,
}

impl FeatureVector {
    /// The inputs of the linear regression, in serialized order.
    pub fn regression_inputs(&self) -> [f64; 2] {
        [self.w2v, self.tfidf]
    }
}

/// The trained pieces feature extraction reads, for one relation.
#[derive(Debug, Clone, Copy)]
pub struct FeatureComponents<'a> {
    pub lexicon: &'a EntityLexicon,
    pub embeddings: &'a EmbeddingTable,
    pub profiles: &'a Profiles,
    pub occurrence: OccurrenceMode,
}

/// Everything derived from one document for one relation, computed once and
/// reused across that person's candidate entities.
#[derive(Debug, Clone)]
pub struct DocumentAnalysis {
    normalized: NormalizedDocument,
    summary: MentionSummary,
    occurrence: BTreeMap<String, u8>,
}

impl DocumentAnalysis {
    pub fn new(doc: &PersonDocument, lexicon: &EntityLexicon, mode: OccurrenceMode) -> Self {
        let normalized = NormalizedDocument::new(doc, lexicon);
        let summary = MentionSummary::new(&normalized, lexicon);
        let unquoted = normalize_unquoted(doc, lexicon);
        DocumentAnalysis {
            occurrence: occurrence_ranks(unquoted.tokens(), lexicon, mode),
            normalized,
            summary,
        }
    }

    pub fn label(&self, entity: &str) -> DistantLabel {
        self.summary.label(entity)
    }

    pub fn occurrence(&self, entity: &str) -> u8 {
        self.occurrence.get(entity).copied().unwrap_or(0)
    }

    pub fn normalized(&self) -> &NormalizedDocument {
        &self.normalized
    }

    pub fn features(&self, entity: &str, comps: &FeatureComponents<'_>) -> Result<FeatureVector> {
        let entity_token = comps.lexicon.token_of(entity).ok_or_else(|| Error::UnknownEntity {
            relation: comps.lexicon.relation().to_string(),
            entity: entity.to_string(),
        })?;
        let tfidf = comps
            .profiles
            .get(entity)
            .map_or(0.0, |p| tfidf_feature(self.normalized.tokens(), p));
        Ok(FeatureVector {
            w2v: w2v_feature(self.normalized.person_token(), entity_token, comps.embeddings),
            tfidf,
            occ: self.occurrence(entity),
        })
    }
}

pub fn assemble_features(
    index: &CorpusIndex,
    person_id: &str,
    entity: &str,
    comps: &FeatureComponents<'_>,
) -> Result<FeatureVector> {
    comps.lexicon.require(entity)?;
    let doc = index
        .get(person_id)
        .ok_or_else(|| Error::PersonNotFound(person_id.to_string()))?;
    DocumentAnalysis::new(doc, comps.lexicon, comps.occurrence).features(entity, comps)
}

/// `entity TAB word TAB weight`, entities sorted, words heaviest first.
pub fn profiles_to_tsv(profiles: &Profiles) -> String {
    let mut out = String::new();
    for p in profiles.values() {
        for (word, weight) in &p.top_words {
            let _ = writeln!(out, "{}\t{word}\t{weight:?}", p.entity);
        }
    }
    out
}

pub fn save_profiles(path: &Path, profiles: &Profiles) -> Result<()> {
    write_atomic(path, profiles_to_tsv(profiles).as_bytes())
}

pub fn load_profiles(path: &Path) -> Result<Profiles> {
    let mut words: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (line_no, line) in read_lines(path)? {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [entity, word, weight] = fields[..] else {
            return Err(Error::parse(path, line_no, "expected `entity TAB word TAB weight`"));
        };
        let weight: f64 = weight
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad weight {weight:?}")))?;
        words
            .entry(entity.to_string())
            .or_default()
            .push((word.to_string(), weight));
    }
    words
        .into_iter()
        .map(|(e, ws)| {
            let p = EntityProfile::new(e.clone(), ws).map_err(|err| Error::parse(path, 0, err.to_string()))?;
            Ok((e, p))
        })
        .collect()
}
