//! Regression, score combination and the triple-scoring workflow.
//!
//! A triple is scored in four steps:
//!
//! 1. no document for the person: the midpoint score 3;
//! 2. a distant-supervision verdict: 7 for a positive, 0 for a negative;
//! 3. otherwise `0.5 * occurrence + 0.5 * regression`;
//! 4. rounded half away from zero and clamped to `0..=7`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::CorpusIndex;
use crate::distsup::{DistantLabel, MAX_SCORE};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::features::{
    load_profiles, save_profiles, DocumentAnalysis, EntityProfile, FeatureComponents,
    FeatureVector, OccurrenceMode, Profiles,
};
use crate::io_util::{read_lines, write_atomic};
use crate::lexicon::{EntityLexicon, RelationType};

/// Regression inputs, in the order weights are stored.
pub const REGRESSION_FEATURES: [&str; 2] = ["w2v", "tfidf"];
pub const RIDGE: f64 = 1e-8;
pub const FALLBACK_SCORE: u8 = 3;
const BUNDLE_FORMAT: &str = "triple-score-bundle/1";

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    weights: Vec<f64>,
    bias: f64,
}

impl RegressionModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation("regression weights must be finite".into()));
        }
        Ok(RegressionModel { weights, bias })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// `bias + w . x`, unclamped.
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    /// The linear prediction for a feature vector, clamped to `0..=7`.
    pub fn predict(&self, f: &FeatureVector) -> f64 {
        self.predict_raw(&f.regression_inputs())
            .clamp(0.0, f64::from(MAX_SCORE))
    }
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < f64::MIN_POSITIVE {
            return Err(Error::Validation("normal equations are singular".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Ok(x)
}

/// Ordinary least squares with an intercept, via the normal equations
/// `(X'X + ridge I) beta = X'y` where `X` carries a leading column of ones.
pub fn fit_ols<R: AsRef<[f64]>>(x: &[R], y: &[f64]) -> Result<RegressionModel> {
    if x.len() != y.len() {
        return Err(Error::Validation(format!(
            "{} feature rows but {} targets",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "linear regression needs at least 2 rows, got {}",
            x.len()
        )));
    }
    let d = x[0].as_ref().len();
    if x.iter().any(|r| r.as_ref().len() != d) {
        return Err(Error::Validation("feature rows have different widths".into()));
    }
    if x.iter().flat_map(|r| r.as_ref()).chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("regression inputs must be finite".into()));
    }

    let n = d + 1;
    let mut xtx = vec![vec![0.0; n]; n];
    let mut xty = vec![0.0; n];
    for (row, &target) in x.iter().zip(y) {
        let aug: Vec<f64> = std::iter::once(1.0).chain(row.as_ref().iter().copied()).collect();
        for i in 0..n {
            xty[i] += aug[i] * target;
            for j in 0..n {
                xtx[i][j] += aug[i] * aug[j];
            }
        }
    }
    for (i, row) in xtx.iter_mut().enumerate() {
        row[i] += RIDGE;
    }
    let beta = solve_linear(xtx, xty)?;
    RegressionModel::new(beta[1..].to_vec(), beta[0])
}

pub fn combined_score(occ: u8, linreg: f64) -> f64 {
    0.5 * f64::from(occ) + 0.5 * linreg
}

/// Rounds half away from zero and clamps to `0..=7`.
pub fn round_score(x: f64) -> u8 {
    x.round().clamp(0.0, f64::from(MAX_SCORE)) as u8
}

/// The trained pieces for one relation.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationModel {
    pub lexicon: EntityLexicon,
    pub embeddings: EmbeddingTable,
    pub profiles: Profiles,
    pub regression: RegressionModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringModel {
    pub relations: BTreeMap<RelationType, RelationModel>,
    pub occurrence: OccurrenceMode,
    pub seed: u64,
}

impl ScoringModel {
    pub fn relation(&self, relation: RelationType) -> Result<&RelationModel> {
        self.relations
            .get(&relation)
            .ok_or_else(|| Error::RelationNotModelled(relation.to_string()))
    }

    pub fn components(&self, relation: RelationType) -> Result<FeatureComponents<'_>> {
        let m = self.relation(relation)?;
        Ok(FeatureComponents {
            lexicon: &m.lexicon,
            embeddings: &m.embeddings,
            profiles: &m.profiles,
            occurrence: self.occurrence,
        })
    }

    /// Writes the bundle directory: a manifest plus, per relation, the
    /// lexicon, embeddings, profiles and regression weights.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let relations: Vec<&str> = self.relations.keys().map(|r| r.as_str()).collect();
        let manifest = format!(
            "format\t{BUNDLE_FORMAT}\nseed\t{}\noccurrence\t{}\nfeatures\t{}\nrelations\t{}\n",
            self.seed,
            self.occurrence.as_str(),
            REGRESSION_FEATURES.join(","),
            relations.join(","),
        );
        write_atomic(&dir.join("manifest.tsv"), manifest.as_bytes())?;
        for (rel, m) in &self.relations {
            let sub = dir.join(rel.as_str());
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            m.lexicon.save(&sub.join("lexicon.tsv"))?;
            m.embeddings.save(&sub.join("embeddings.txt"))?;
            save_profiles(&sub.join("profiles.tsv"), &m.profiles)?;
            let mut weights = String::new();
            for (name, w) in REGRESSION_FEATURES.iter().zip(m.regression.weights()) {
                let _ = writeln!(weights, "{name}\t{w:?}");
            }
            let _ = writeln!(weights, "bias\t{:?}", m.regression.bias());
            write_atomic(&sub.join("weights.tsv"), weights.as_bytes())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.tsv");
        let mut manifest = HashMap::new();
        for (line_no, line) in read_lines(&manifest_path)? {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(&manifest_path, line_no, "expected `key TAB value`"))?;
            manifest.insert(k.to_string(), v.to_string());
        }
        let field = |k: &str| -> Result<&String> {
            manifest
                .get(k)
                .ok_or_else(|| Error::parse(&manifest_path, 0, format!("missing key {k:?}")))
        };
        if field("format")? != BUNDLE_FORMAT {
            return Err(Error::parse(&manifest_path, 1, "unsupported bundle format"));
        }
        if field("features")? != &REGRESSION_FEATURES.join(",") {
            return Err(Error::parse(&manifest_path, 0, "unexpected regression feature order"));
        }
        let seed = field("seed")?
            .parse()
            .map_err(|_| Error::parse(&manifest_path, 0, "bad seed"))?;
        let occurrence = field("occurrence")?.parse()?;
        let mut relations = BTreeMap::new();
        for name in field("relations")?.split(',').filter(|s| !s.is_empty()) {
            let rel: RelationType = name.parse()?;
            let sub = dir.join(rel.as_str());
            let lexicon = EntityLexicon::load(&sub.join("lexicon.tsv"), rel)?;
            let mut profiles = load_profiles(&sub.join("profiles.tsv"))?;
            // Empty profiles have no lines in the file.
            for e in lexicon.entities() {
                profiles
                    .entry(e.to_string())
                    .or_insert_with(|| EntityProfile::empty(e));
            }
            relations.insert(
                rel,
                RelationModel {
                    lexicon,
                    embeddings: EmbeddingTable::load(&sub.join("embeddings.txt"))?,
                    profiles,
                    regression: load_weights(&sub.join("weights.tsv"))?,
                },
            );
        }
        Ok(ScoringModel {
            relations,
            occurrence,
            seed,
        })
    }
}

fn load_weights(path: &Path) -> Result<RegressionModel> {
    let mut values = HashMap::new();
    for (line_no, line) in read_lines(path)? {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, line_no, "expected `feature TAB weight`"))?;
        let v: f64 = v
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad weight {v:?}")))?;
        values.insert(k.to_string(), v);
    }
    let get = |k: &str| {
        values
            .get(k)
            .copied()
            .ok_or_else(|| Error::parse(path, 0, format!("missing weight {k:?}")))
    };
    let weights = REGRESSION_FEATURES
        .iter()
        .map(|f| get(f))
        .collect::<Result<Vec<_>>>()?;
    RegressionModel::new(weights, get("bias")?)
}

/// Which workflow step produced a score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    NoDocument,
    Distant(DistantLabel),
    Combined {
        features: FeatureVector,
        linreg: f64,
        combined: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredTriple {
    pub score: u8,
    pub decision: Decision,
}

/// Runs the workflow on an already analyzed document (or none).
pub fn score_with_analysis(
    analysis: Option<&DocumentAnalysis>,
    entity: &str,
    relation: RelationType,
    model: &ScoringModel,
) -> Result<ScoredTriple> {
    let comps = model.components(relation)?;
    comps.lexicon.require(entity)?;
    let Some(analysis) = analysis else {
        return Ok(ScoredTriple {
            score: FALLBACK_SCORE,
            decision: Decision::NoDocument,
        });
    };
    let verdict = analysis.label(entity);
    match verdict {
        DistantLabel::Positive => {
            return Ok(ScoredTriple {
                score: MAX_SCORE,
                decision: Decision::Distant(verdict),
            })
        }
        DistantLabel::Negative => {
            return Ok(ScoredTriple {
                score: 0,
                decision: Decision::Distant(verdict),
            })
        }
        DistantLabel::Unknown => {}
    }
    let features = analysis.features(entity, &comps)?;
    let linreg = model.relation(relation)?.regression.predict(&features);
    let combined = combined_score(features.occ, linreg);
    Ok(ScoredTriple {
        score: round_score(combined),
        decision: Decision::Combined {
            features,
            linreg,
            combined,
        },
    })
}

pub fn score_triple_detailed(
    person_id: &str,
    relation: RelationType,
    entity: &str,
    model: &ScoringModel,
    index: &CorpusIndex,
) -> Result<ScoredTriple> {
    let rel = model.relation(relation)?;
    rel.lexicon.require(entity)?;
    let analysis = index
        .get(person_id)
        .map(|doc| DocumentAnalysis::new(doc, &rel.lexicon, model.occurrence));
    score_with_analysis(analysis.as_ref(), entity, relation, model)
}

pub fn score_triple(
    person_id: &str,
    relation: RelationType,
    entity: &str,
    model: &ScoringModel,
    index: &CorpusIndex,
) -> Result<u8> {
    score_triple_detailed(person_id, relation, entity, model, index).map(|s| s.score)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadLine {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ScoredLines {
    /// The scored file body, one line per good input line, in input order.
    pub output: String,
    pub scored: usize,
    pub bad: Vec<BadLine>,
}

/// Scores `person_id TAB relation TAB entity` lines, appending `TAB score`.
/// Lines that cannot be scored are collected in [`ScoredLines::bad`].
pub fn score_lines<'a>(
    lines: impl IntoIterator<Item = (usize, &'a str)>,
    model: &ScoringModel,
    index: &CorpusIndex,
) -> ScoredLines {
    let mut cache: HashMap<(String, RelationType), Option<DocumentAnalysis>> = HashMap::new();
    let mut out = ScoredLines::default();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        let result = (|| -> Result<u8> {
            let [person, relation, entity] = fields[..] else {
                return Err(Error::Validation(format!(
                    "expected 3 tab-separated fields, found {}",
                    fields.len()
                )));
            };
            let relation: RelationType = relation.parse()?;
            let rel = model.relation(relation)?;
            rel.lexicon.require(entity)?;
            let analysis = cache
                .entry((person.to_string(), relation))
                .or_insert_with(|| {
                    index
                        .get(person)
                        .map(|d| DocumentAnalysis::new(d, &rel.lexicon, model.occurrence))
                });
            score_with_analysis(analysis.as_ref(), entity, relation, model).map(|s| s.score)
        })();
        match result {
            Ok(score) => {
                let _ = writeln!(out.output, "{line}\t{score}");
                out.scored += 1;
            }
            Err(e) => out.bad.push(BadLine {
                line: line_no,
                message: e.to_string(),
            }),
        }
    }
    out
}

/// Scores a triples file into `output_path`. Unless `skip_bad` is set, any
/// bad line fails the whole call, every bad line is listed in the error and
/// nothing is written.
pub fn score_file(
    triples_path: &Path,
    model: &ScoringModel,
    index: &CorpusIndex,
    output_path: &Path,
    skip_bad: bool,
) -> Result<ScoredLines> {
    let lines = read_lines(triples_path)?;
    let scored = score_lines(
        lines.iter().filter(|(_, l)| !l.is_empty()).map(|(n, l)| (*n, l.as_str())),
        model,
        index,
    );
    if !skip_bad && !scored.bad.is_empty() {
        return Err(Error::BadLines {
            path: triples_path.to_path_buf(),
            lines: scored.bad.iter().map(|b| (b.line, b.message.clone())).collect(),
        });
    }
    write_atomic(output_path, scored.output.as_bytes())?;
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PersonDocument;
    use proptest::prelude::*;

    #[test]
    fn exact_linear_relation() {
        let x: Vec<[f64; 2]> = (0..10).map(|i| [i as f64 * 0.1, 0.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 7.0 * r[0]).collect();
        let m = fit_ols(&x, &y).unwrap();
        assert!((m.weights()[0] - 7.0).abs() < 1e-6);
        assert!(m.weights()[1].abs() < 1e-6);
        assert!(m.bias().abs() < 1e-6);
    }

    #[test]
    fn two_point_system() {
        let m = fit_ols(&[[0.0, 0.0], [1.0, 1.0]], &[0.0, 7.0]).unwrap();
        assert!(m.predict_raw(&[0.0, 0.0]).abs() < 1e-6);
        assert!((m.predict_raw(&[1.0, 1.0]) - 7.0).abs() < 1e-6);
    }

    #[test]
    fn duplicated_rows_stay_finite() {
        let x = vec![[0.3, 0.4]; 5];
        let m = fit_ols(&x, &[7.0; 5]).unwrap();
        assert!(m.weights().iter().all(|w| w.is_finite()));
        assert!((m.predict_raw(&[0.3, 0.4]) - 7.0).abs() < 1e-6);
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(fit_ols(&[[1.0, 2.0]], &[7.0]), Err(Error::InsufficientData(_))));
        assert!(fit_ols(&[[1.0, 2.0], [1.0, 0.0]], &[7.0]).is_err());
    }

    #[test]
    fn predict_clamps() {
        let f = FeatureVector { w2v: 1.0, tfidf: 1.0, occ: 0 };
        assert_eq!(RegressionModel::new(vec![0.0, 0.0], 3.2).unwrap().predict(&f), 3.2);
        assert_eq!(RegressionModel::new(vec![5.0, 4.1], 0.0).unwrap().predict(&f), 7.0);
        assert_eq!(RegressionModel::new(vec![-0.5, 0.0], 0.0).unwrap().predict(&f), 0.0);
    }

    #[test]
    fn combination_and_rounding() {
        assert_eq!(combined_score(7, 7.0), 7.0);
        assert_eq!(combined_score(0, 7.0), 3.5);
        assert_eq!(combined_score(6, 2.0), 4.0);
        assert_eq!(round_score(3.5), 4);
        assert_eq!(round_score(2.5), 3);
        assert_eq!(round_score(2.49), 2);
        assert_eq!(round_score(9.0), 7);
    }

    fn tiny_model(bias: f64) -> (ScoringModel, CorpusIndex) {
        let lexicon = EntityLexicon::new(
            RelationType::Profession,
            vec![("Actor", vec!["actress"]), ("Director", vec![]), ("Chemist", vec![])],
        )
        .unwrap();
        let mut profiles: Profiles =
            lexicon.entities().map(|e| (e.to_string(), EntityProfile::empty(e))).collect();
        profiles.insert(
            "Actor".into(),
            EntityProfile::new("Actor", vec![("film".into(), 0.25)]).unwrap(),
        );
        let rel = RelationModel {
            lexicon,
            embeddings: EmbeddingTable::new(2, vec![("film".into(), vec![1.0, 0.0])]).unwrap(),
            profiles,
            regression: RegressionModel::new(vec![0.0, 0.0], bias).unwrap(),
        };
        let model = ScoringModel {
            relations: [(RelationType::Profession, rel)].into_iter().collect(),
            occurrence: OccurrenceMode::DistinctEntities,
            seed: 0,
        };
        let index = CorpusIndex::from_documents([
            PersonDocument::new("pos", "Ann Ames", vec!["Ann is an actress.".into()]).unwrap(),
            PersonDocument::new(
                "mix",
                "Bob Burr",
                vec!["Bob is a director.".into(), "Also an actor.".into()],
            )
            .unwrap(),
        ])
        .unwrap();
        (model, index)
    }

    #[test]
    fn workflow_steps() {
        let (model, index) = tiny_model(7.0);
        let p = RelationType::Profession;
        assert_eq!(score_triple("ghost", p, "Actor", &model, &index).unwrap(), 3);
        assert_eq!(score_triple("pos", p, "Actor", &model, &index).unwrap(), 7);
        assert_eq!(score_triple("pos", p, "Chemist", &model, &index).unwrap(), 0);
        // Director is first (occ 7), Actor second (occ 6); linreg 7.
        assert_eq!(score_triple("mix", p, "Director", &model, &index).unwrap(), 7);
        let s = score_triple_detailed("mix", p, "Actor", &model, &index).unwrap();
        assert_eq!(s.score, 7); // round(6.5)
        assert!(matches!(s.decision, Decision::Combined { combined, .. } if combined == 6.5));
        assert!(matches!(
            score_triple("pos", p, "Astronaut", &model, &index),
            Err(Error::UnknownEntity { .. })
        ));
        assert!(matches!(
            score_triple("pos", RelationType::Nationality, "Italy", &model, &index),
            Err(Error::RelationNotModelled(_))
        ));
    }

    #[test]
    fn negative_verdict_overrides_regression() {
        let (model, index) = tiny_model(7.0);
        assert_eq!(
            score_triple("mix", RelationType::Profession, "Chemist", &model, &index).unwrap(),
            0
        );
    }

    #[test]
    fn score_lines_collects_bad_lines() {
        let (model, index) = tiny_model(0.0);
        let input = [
            (1, "pos\tprofession\tActor"),
            (2, "pos\tprofession"),
            (3, "pos\tprofession\tAstronaut"),
            (4, "ghost\tprofession\tChemist"),
        ];
        let out = score_lines(input, &model, &index);
        assert_eq!(out.output, "pos\tprofession\tActor\t7\nghost\tprofession\tChemist\t3\n");
        assert_eq!(out.bad.iter().map(|b| b.line).collect::<Vec<_>>(), [2, 3]);
    }

    #[test]
    fn score_file_contract() {
        let (model, index) = tiny_model(0.0);
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.tsv");
        let output = dir.path().join("out.tsv");
        fs::write(&input, "").unwrap();
        score_file(&input, &model, &index, &output, false).unwrap();
        assert_eq!(fs::read_to_string(&output).unwrap(), "");

        fs::write(&input, "pos\tprofession\tChemist\nbroken\npos\tprofession\tAstronaut\n").unwrap();
        match score_file(&input, &model, &index, &output, false) {
            Err(Error::BadLines { lines, .. }) => {
                assert_eq!(lines.iter().map(|l| l.0).collect::<Vec<_>>(), [2, 3]);
            }
            other => panic!("expected bad lines, got {other:?}"),
        }
        score_file(&input, &model, &index, &output, true).unwrap();
        let first = fs::read_to_string(&output).unwrap();
        assert_eq!(first, "pos\tprofession\tChemist\t0\n");
        score_file(&input, &model, &index, &output, true).unwrap();
        assert_eq!(fs::read_to_string(&output).unwrap(), first);
    }

    #[test]
    fn bundle_round_trip() {
        let (model, _) = tiny_model(1.0 / 3.0);
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        assert_eq!(ScoringModel::load(dir.path()).unwrap(), model);
    }

    proptest! {
        #[test]
        fn combined_is_monotone(a in 0u8..=7, b in 0u8..=7, x in 0.0f64..=7.0, y in 0.0f64..=7.0) {
            let (lo_o, hi_o) = (a.min(b), a.max(b));
            let (lo_l, hi_l) = (x.min(y), x.max(y));
            prop_assert!(combined_score(lo_o, lo_l) <= combined_score(hi_o, lo_l));
            prop_assert!(combined_score(lo_o, lo_l) <= combined_score(lo_o, hi_l));
        }

        #[test]
        fn predict_is_permutation_invariant(w in prop::collection::vec(-3.0f64..3.0, 2), x in prop::collection::vec(0.0f64..1.0, 2), b in -2.0f64..2.0) {
            let m = RegressionModel::new(w.clone(), b).unwrap();
            let swapped = RegressionModel::new(vec![w[1], w[0]], b).unwrap();
            prop_assert!((m.predict_raw(&x) - swapped.predict_raw(&[x[1], x[0]])).abs() < 1e-12);
        }

        #[test]
        fn rounded_scores_stay_in_range(x in -100.0f64..100.0) {
            prop_assert!(round_score(x) <= 7);
        }
    }
}
