//! Training triples from distant supervision.
//!
//! A pair (person, entity) is a negative when the entity never occurs in the
//! person's normalized document, and a positive when it occurs in the first
//! sentence while no other entity of the same relation occurs anywhere.
//! Everything else is left unlabeled.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusIndex, PersonDocument};
use crate::error::{Error, Result};
use crate::io_util::{read_lines, write_atomic};
use crate::lexicon::{mentions, EntityLexicon, NormalizedDocument, RelationType};

pub const MAX_SCORE: u8 = 7;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabeledTriple {
    pub person_id: String,
    pub relation: RelationType,
    pub entity: String,
    pub score: u8,
}

impl LabeledTriple {
    pub fn new(
        person_id: impl Into<String>,
        relation: RelationType,
        entity: impl Into<String>,
        score: u8,
    ) -> Result<Self> {
        if score > MAX_SCORE {
            return Err(Error::Validation(format!("score {score} is outside 0..=7")));
        }
        Ok(LabeledTriple {
            person_id: person_id.into(),
            relation,
            entity: entity.into(),
            score,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistantLabel {
    Positive,
    Negative,
    Unknown,
}

/// Entity mentions of one normalized document, reduced to what labeling needs.
#[derive(Debug, Clone)]
pub struct MentionSummary {
    anywhere: BTreeSet<String>,
    first_sentence: BTreeSet<String>,
}

impl MentionSummary {
    pub fn new(doc: &NormalizedDocument, lexicon: &EntityLexicon) -> Self {
        let collect = |tokens: &[String]| -> BTreeSet<String> {
            mentions(tokens, lexicon)
                .into_iter()
                .map(|m| m.entity.to_string())
                .collect()
        };
        MentionSummary {
            anywhere: collect(doc.tokens()),
            first_sentence: collect(doc.first_sentence()),
        }
    }

    pub fn label(&self, entity: &str) -> DistantLabel {
        if !self.anywhere.contains(entity) {
            DistantLabel::Negative
        } else if self.first_sentence.contains(entity) && self.anywhere.len() == 1 {
            DistantLabel::Positive
        } else {
            DistantLabel::Unknown
        }
    }

    /// The single positive entity of this document, if it has one.
    pub fn positive(&self) -> Option<&str> {
        match (self.anywhere.len(), self.first_sentence.iter().next()) {
            (1, Some(e)) => Some(e.as_str()),
            _ => None,
        }
    }

    pub fn is_mentioned(&self, entity: &str) -> bool {
        self.anywhere.contains(entity)
    }
}

pub fn label(doc: &PersonDocument, entity: &str, lexicon: &EntityLexicon) -> Result<DistantLabel> {
    lexicon.require(entity)?;
    let nd = NormalizedDocument::new(doc, lexicon);
    Ok(MentionSummary::new(&nd, lexicon).label(entity))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_pos: usize,
    pub max_neg: usize,
    pub negatives_per_person: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_pos: 1_000_000,
            max_neg: 1_000_000,
            negatives_per_person: 3,
        }
    }
}

/// 64-bit FNV-1a, used to derive a stable per-person RNG stream.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn person_rng(seed: u64, person_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(person_id.as_bytes()))
}

/// Labels every document and emits positives (score 7) and sampled
/// negatives (score 0), sorted by person id and entity.
///
/// Negatives are drawn per person from the entities the document never
/// mentions. When a global cap is exceeded, a seeded shuffle decides which
/// triples survive.
pub fn generate_training_set(
    index: &CorpusIndex,
    lexicon: &EntityLexicon,
    limits: Limits,
    seed: u64,
) -> Vec<LabeledTriple> {
    let relation = lexicon.relation();
    let entities: Vec<&str> = lexicon.entities().collect();
    let docs: Vec<&PersonDocument> = index.documents().collect();

    let per_person: Vec<(Option<LabeledTriple>, Vec<LabeledTriple>)> = docs
        .par_iter()
        .map(|doc| {
            let nd = NormalizedDocument::new(doc, lexicon);
            let summary = MentionSummary::new(&nd, lexicon);
            let pos = summary.positive().map(|e| LabeledTriple {
                person_id: doc.person_id().to_string(),
                relation,
                entity: e.to_string(),
                score: MAX_SCORE,
            });
            let absent: Vec<&str> = entities
                .iter()
                .copied()
                .filter(|e| !summary.is_mentioned(e))
                .collect();
            let mut rng = person_rng(seed, doc.person_id());
            let neg = absent
                .choose_multiple(&mut rng, limits.negatives_per_person)
                .map(|e| LabeledTriple {
                    person_id: doc.person_id().to_string(),
                    relation,
                    entity: e.to_string(),
                    score: 0,
                })
                .collect();
            (pos, neg)
        })
        .collect();

    let mut positives: Vec<LabeledTriple> = Vec::new();
    let mut negatives: Vec<LabeledTriple> = Vec::new();
    for (p, n) in per_person {
        positives.extend(p);
        negatives.extend(n);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (set, cap) in [(&mut positives, limits.max_pos), (&mut negatives, limits.max_neg)] {
        if set.len() > cap {
            set.shuffle(&mut rng);
            set.truncate(cap);
        }
    }
    let mut out: Vec<LabeledTriple> = positives.into_iter().chain(negatives).collect();
    out.sort_by(|a, b| (&a.person_id, &a.entity).cmp(&(&b.person_id, &b.entity)));
    out
}

/// `person_id TAB relation TAB entity TAB score` lines after a `# seed=` header.
pub fn write_triples(path: &Path, triples: &[LabeledTriple], seed: u64) -> Result<()> {
    let mut out = format!("# seed={seed}\n");
    for t in triples {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", t.person_id, t.relation, t.entity, t.score);
    }
    write_atomic(path, out.as_bytes())
}

/// Reads scored triples; lines starting with `#` are comments.
pub fn read_triples(path: &Path) -> Result<Vec<LabeledTriple>> {
    let mut out = Vec::new();
    for (line_no, line) in read_lines(path)? {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [person, relation, entity, score] = fields[..] else {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        };
        let relation = relation
            .parse()
            .map_err(|e: Error| Error::parse(path, line_no, e.to_string()))?;
        let score: u8 = score
            .parse()
            .ok()
            .filter(|s| *s <= MAX_SCORE)
            .ok_or_else(|| Error::parse(path, line_no, format!("bad score {score:?}")))?;
        out.push(LabeledTriple::new(person, relation, entity, score)?);
    }
    Ok(out)
}
