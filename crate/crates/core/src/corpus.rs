//! Per-person documents assembled from a sentence file.
//!
//! The input is a pair of tab-separated files: a manifest of persons
//! (`person_id TAB full_name`) and a sentence file (`person_id TAB sentence`)
//! in which one person's lines may be interleaved with anybody else's. Each
//! person with at least one sentence ends up as one [`PersonDocument`].

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::{read_lines, write_atomic};

/// One person's concatenated text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DocumentRecord", into = "DocumentRecord")]
pub struct PersonDocument {
    person_id: String,
    full_name: String,
    sentences: Vec<String>,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct DocumentRecord {
    person_id: String,
    full_name: String,
    sentences: Vec<String>,
}

impl TryFrom<DocumentRecord> for PersonDocument {
    type Error = Error;

    fn try_from(r: DocumentRecord) -> Result<Self> {
        PersonDocument::new(r.person_id, r.full_name, r.sentences)
    }
}

impl From<PersonDocument> for DocumentRecord {
    fn from(d: PersonDocument) -> Self {
        DocumentRecord {
            person_id: d.person_id,
            full_name: d.full_name,
            sentences: d.sentences,
        }
    }
}

impl PersonDocument {
    pub fn new(
        person_id: impl Into<String>,
        full_name: impl Into<String>,
        sentences: Vec<String>,
    ) -> Result<Self> {
        let person_id = person_id.into();
        if sentences.is_empty() {
            return Err(Error::Validation(format!(
                "document for {person_id:?} has no sentences"
            )));
        }
        let text = sentences.join(" ");
        Ok(PersonDocument {
            person_id,
            full_name: full_name.into(),
            sentences,
            text,
        })
    }

    pub fn person_id(&self) -> &str {
        &self.person_id
    }

    pub fn full_name(&self) -> &str {
        &self.full_name
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }

    /// The sentences joined by single spaces.
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn first_sentence(&self) -> &str {
        &self.sentences[0]
    }
}

/// All documents of a corpus, keyed by person id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusIndex {
    documents: BTreeMap<String, PersonDocument>,
    persons_requested: usize,
    /// Sentence lines whose person id is not in the manifest.
    #[serde(default)]
    orphan_sentences: usize,
}

impl CorpusIndex {
    /// Builds an index directly from documents; every document counts as requested.
    pub fn from_documents(docs: impl IntoIterator<Item = PersonDocument>) -> Result<Self> {
        let mut documents = BTreeMap::new();
        for doc in docs {
            let id = doc.person_id.clone();
            if documents.insert(id.clone(), doc).is_some() {
                return Err(Error::Validation(format!("duplicate person id {id:?}")));
            }
        }
        Ok(CorpusIndex {
            persons_requested: documents.len(),
            documents,
            orphan_sentences: 0,
        })
    }

    pub fn get(&self, person_id: &str) -> Option<&PersonDocument> {
        self.documents.get(person_id)
    }

    /// Documents in person-id order.
    pub fn documents(&self) -> impl Iterator<Item = &PersonDocument> {
        self.documents.values()
    }

    pub fn persons_requested(&self) -> usize {
        self.persons_requested
    }

    pub fn persons_found(&self) -> usize {
        self.documents.len()
    }

    pub fn orphan_sentences(&self) -> usize {
        self.orphan_sentences
    }

    pub fn coverage_fraction(&self) -> Result<f64> {
        coverage_fraction(self.persons_found(), self.persons_requested)
    }

    pub fn to_json(&self) -> String {
        // BTreeMap keys keep the output byte-stable across runs.
        serde_json::to_string_pretty(self).expect("corpus index is always serializable") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let index: CorpusIndex =
            serde_json::from_str(&raw).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        if index.persons_found() > index.persons_requested {
            return Err(Error::Validation(format!(
                "{}: {} documents but only {} persons requested",
                path.display(),
                index.persons_found(),
                index.persons_requested
            )));
        }
        Ok(index)
    }
}

pub fn coverage_fraction(found: usize, requested: usize) -> Result<f64> {
    if requested == 0 {
        return Err(Error::UndefinedCoverage);
    }
    Ok(found as f64 / requested as f64)
}

fn split_record<'a>(path: &Path, line_no: usize, line: &'a str) -> Result<(&'a str, &'a str)> {
    let mut fields = line.split('\t');
    match (fields.next(), fields.next(), fields.next()) {
        (Some(id), Some(rest), None) if !id.is_empty() => Ok((id, rest)),
        (Some(""), Some(_), None) => Err(Error::parse(path, line_no, "empty person id")),
        _ => Err(Error::parse(
            path,
            line_no,
            format!("expected 2 tab-separated fields, found {}", line.split('\t').count()),
        )),
    }
}

/// Reads the person manifest and the sentence file into an index.
///
/// Sentences keep their file order per person. Blank lines are ignored in
/// both files; sentence lines for persons missing from the manifest are
/// counted in [`CorpusIndex::orphan_sentences`] and otherwise dropped.
pub fn ingest_sentences(sentences_path: &Path, persons_path: &Path) -> Result<CorpusIndex> {
    let mut names: BTreeMap<String, String> = BTreeMap::new();
    for (line_no, line) in read_lines(persons_path)? {
        if line.is_empty() {
            continue;
        }
        let (id, name) = split_record(persons_path, line_no, &line)?;
        match names.entry(id.to_string()) {
            Entry::Occupied(_) => {
                return Err(Error::Validation(format!(
                    "{}:{line_no}: duplicate person id {id:?}",
                    persons_path.display()
                )))
            }
            Entry::Vacant(v) => {
                v.insert(name.to_string());
            }
        }
    }

    let mut sentences: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut orphan_sentences = 0;
    for (line_no, line) in read_lines(sentences_path)? {
        if line.is_empty() {
            continue;
        }
        let (id, sentence) = split_record(sentences_path, line_no, &line)?;
        if !names.contains_key(id) {
            orphan_sentences += 1;
            continue;
        }
        sentences
            .entry(id.to_string())
            .or_default()
            .push(sentence.to_string());
    }

    let mut documents = BTreeMap::new();
    for (id, sents) in sentences {
        let name = names[&id].clone();
        documents.insert(id.clone(), PersonDocument::new(id, name, sents)?);
    }
    Ok(CorpusIndex {
        documents,
        persons_requested: names.len(),
        orphan_sentences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn empty_sentences_file() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.tsv", "");
        let p = write(dir.path(), "p.tsv", "p1\tA\np2\tB\np3\tC\n");
        let idx = ingest_sentences(&s, &p).unwrap();
        assert_eq!(idx.persons_requested(), 3);
        assert_eq!(idx.persons_found(), 0);
        assert_eq!(idx.coverage_fraction().unwrap(), 0.0);
    }

    #[test]
    fn sentences_concatenate_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.tsv", "p1\tA.\np2\tZ.\np1\tB.\n");
        let p = write(dir.path(), "p.tsv", "p1\tAnn Lee\np2\tBo Yu\n");
        let idx = ingest_sentences(&s, &p).unwrap();
        let d = idx.get("p1").unwrap();
        assert_eq!(d.sentences(), ["A.", "B."]);
        assert_eq!(d.text(), "A. B.");
        assert_eq!(d.first_sentence(), "A.");
        assert_eq!(d.full_name(), "Ann Lee");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.tsv", "p1\tok\np1 no tab\n");
        let p = write(dir.path(), "p.tsv", "p1\tA\n");
        match ingest_sentences(&s, &p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let s = write(dir.path(), "s2.tsv", "p1\ta\tb\n");
        assert!(matches!(ingest_sentences(&s, &p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicate_manifest_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.tsv", "");
        let p = write(dir.path(), "p.tsv", "p1\tA\np1\tB\n");
        assert!(matches!(ingest_sentences(&s, &p), Err(Error::Validation(_))));
    }

    #[test]
    fn orphan_sentences_are_counted() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.tsv", "px\thello\np1\tx\n");
        let p = write(dir.path(), "p.tsv", "p1\tA\n");
        let idx = ingest_sentences(&s, &p).unwrap();
        assert_eq!(idx.orphan_sentences(), 1);
        assert_eq!(idx.persons_found(), 1);
    }

    #[test]
    fn coverage_values() {
        let c = coverage_fraction(385_102, 385_426).unwrap();
        assert!((c - 0.9991).abs() <= 1e-4);
        assert_eq!(coverage_fraction(0, 5).unwrap(), 0.0);
        assert_eq!(coverage_fraction(7, 7).unwrap(), 1.0);
        assert!(matches!(coverage_fraction(0, 0), Err(Error::UndefinedCoverage)));
    }

    #[test]
    fn empty_document_is_rejected() {
        assert!(PersonDocument::new("p", "P", vec![]).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.tsv", "p2\tb one\np1\ta one\np2\tb two\n");
        let p = write(dir.path(), "p.tsv", "p1\tA\np2\tB\np3\tC\n");
        let idx = ingest_sentences(&s, &p).unwrap();
        let cache = dir.path().join("index.json");
        idx.save(&cache).unwrap();
        let back = CorpusIndex::load(&cache).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.get("p2").unwrap().text(), "b one b two");
        assert_eq!(back.to_json(), idx.to_json());
    }
}
