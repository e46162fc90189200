//! Command-level operations over a working directory: ingest, generate
//! training data, train, score, evaluate and report.
//!
//! A working directory holds `index.json` (the corpus cache), `train.tsv`
//! (distant-supervision triples) and `model/` (the scoring bundle).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::{ingest_sentences, CorpusIndex};
use crate::distsup::{generate_training_set, read_triples, write_triples, LabeledTriple, Limits, MAX_SCORE};
use crate::embeddings::{train_skipgram_with_losses, EmbeddingConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, join_scored, per_feature_error, render_error_table, EvalReport, StandaloneScorer};
use crate::features::{build_entity_profiles, DocumentAnalysis, FeatureComponents, FeatureVector, OccurrenceMode};
use crate::io_util::read_lines;
use crate::lexicon::{EntityLexicon, NormalizedDocument, RelationType};
use crate::scorer::{fit_ols, score_file, RegressionModel, RelationModel, ScoredLines, ScoringModel};

pub const INDEX_FILE: &str = "index.json";
pub const TRAIN_FILE: &str = "train.tsv";
pub const MODEL_DIR: &str = "model";

const PATH_KEYS: [&str; 5] = [
    "sentences",
    "persons",
    "profession_lexicon",
    "nationality_lexicon",
    "workdir",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub sentences: Option<PathBuf>,
    pub persons: Option<PathBuf>,
    pub lexicons: BTreeMap<RelationType, PathBuf>,
    pub workdir: PathBuf,
    /// Drives negative sampling, caps and embedding initialisation.
    pub seed: u64,
    pub embedding: EmbeddingConfig,
    pub limits: Limits,
    pub occurrence: OccurrenceMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sentences: None,
            persons: None,
            lexicons: BTreeMap::new(),
            workdir: PathBuf::from("work"),
            seed: 1,
            embedding: EmbeddingConfig::default(),
            limits: Limits::default(),
            occurrence: OccurrenceMode::default(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

impl PipelineConfig {
    /// Sets one `key = value` pair. Keys match the config file and the
    /// long CLI flags with `-` replaced by `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "sentences" => self.sentences = Some(PathBuf::from(value)),
            "persons" => self.persons = Some(PathBuf::from(value)),
            "profession_lexicon" => {
                self.lexicons.insert(RelationType::Profession, PathBuf::from(value));
            }
            "nationality_lexicon" => {
                self.lexicons.insert(RelationType::Nationality, PathBuf::from(value));
            }
            "workdir" => self.workdir = PathBuf::from(value),
            "seed" => self.seed = parse_value(key, value)?,
            "dimension" => self.embedding.dimension = parse_value(key, value)?,
            "window" => self.embedding.window = parse_value(key, value)?,
            "negative_samples" => self.embedding.negative_samples = parse_value(key, value)?,
            "epochs" => self.embedding.epochs = parse_value(key, value)?,
            "min_count" => self.embedding.min_count = parse_value(key, value)?,
            "learning_rate" => self.embedding.learning_rate = parse_value(key, value)?,
            "max_pos" => self.limits.max_pos = parse_value(key, value)?,
            "max_neg" => self.limits.max_neg = parse_value(key, value)?,
            "negatives_per_person" => self.limits.negatives_per_person = parse_value(key, value)?,
            "occurrence" => {
                self.occurrence = value.parse().map_err(|_| {
                    Error::Config(format!(
                        "bad value {value:?} for occurrence (expected distinct-entities or raw-mentions)"
                    ))
                })?
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses flat `key = value` text. `#` starts a comment line. Relative
    /// paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let resolved;
            let value = if PATH_KEYS.contains(&key) && Path::new(value).is_relative() {
                resolved = base.join(value).to_string_lossy().into_owned();
                resolved.as_str()
            } else {
                value
            };
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        PipelineConfig::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn index_path(&self) -> PathBuf {
        self.workdir.join(INDEX_FILE)
    }

    pub fn train_path(&self) -> PathBuf {
        self.workdir.join(TRAIN_FILE)
    }

    pub fn model_dir(&self) -> PathBuf {
        self.workdir.join(MODEL_DIR)
    }

    fn embedding_config(&self) -> EmbeddingConfig {
        EmbeddingConfig {
            seed: self.seed,
            ..self.embedding
        }
    }

    fn input(&self, path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        let path = path
            .clone()
            .ok_or_else(|| Error::Config(format!("{key} is not set")))?;
        require_file(&path)?;
        Ok(path)
    }

    /// Loads every configured lexicon.
    pub fn load_lexicons(&self) -> Result<Vec<EntityLexicon>> {
        if self.lexicons.is_empty() {
            return Err(Error::Config(
                "no lexicon is set (profession_lexicon or nationality_lexicon)".into(),
            ));
        }
        self.lexicons
            .iter()
            .map(|(rel, path)| EntityLexicon::load(path, *rel))
            .collect()
    }
}

fn require_file(path: &Path) -> Result<()> {
    fs::metadata(path).map(|_| ()).map_err(|e| Error::io(path, e))
}

fn ensure_workdir(cfg: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(&cfg.workdir).map_err(|e| Error::io(&cfg.workdir, e))
}

/// Builds the corpus index and writes it to the working directory.
pub fn run_ingest(cfg: &PipelineConfig) -> Result<CorpusIndex> {
    let sentences = cfg.input(&cfg.sentences, "sentences")?;
    let persons = cfg.input(&cfg.persons, "persons")?;
    let index = ingest_sentences(&sentences, &persons)?;
    ensure_workdir(cfg)?;
    index.save(&cfg.index_path())?;
    Ok(index)
}

pub fn load_index(cfg: &PipelineConfig) -> Result<CorpusIndex> {
    CorpusIndex::load(&cfg.index_path())
}

/// Generates the training triples for every configured relation and writes
/// them to `train.tsv`.
pub fn run_gen_train(cfg: &PipelineConfig) -> Result<Vec<LabeledTriple>> {
    let index = load_index(cfg)?;
    let lexicons = cfg.load_lexicons()?;
    let triples = gen_train(&index, &lexicons, cfg);
    write_triples(&cfg.train_path(), &triples, cfg.seed)?;
    Ok(triples)
}

fn gen_train(index: &CorpusIndex, lexicons: &[EntityLexicon], cfg: &PipelineConfig) -> Vec<LabeledTriple> {
    lexicons
        .iter()
        .flat_map(|lex| generate_training_set(index, lex, cfg.limits, cfg.seed))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSummary {
    pub relation: RelationType,
    pub positives: usize,
    pub negatives: usize,
    pub vocabulary: usize,
    pub epoch_losses: Vec<f64>,
    pub regression: RegressionModel,
    pub errors: BTreeMap<StandaloneScorer, f64>,
}

fn count_labels(labels: &[LabeledTriple]) -> (usize, usize) {
    let pos = labels.iter().filter(|t| t.score == MAX_SCORE).count();
    let neg = labels.iter().filter(|t| t.score == 0).count();
    (pos, neg)
}

/// Feature vectors and labels for the training triples, one document
/// analysis per person.
pub fn training_rows(
    index: &CorpusIndex,
    labels: &[LabeledTriple],
    comps: &FeatureComponents<'_>,
) -> Result<Vec<(FeatureVector, u8)>> {
    let mut cache: HashMap<&str, DocumentAnalysis> = HashMap::new();
    let mut rows = Vec::with_capacity(labels.len());
    for t in labels {
        let analysis = match cache.get(t.person_id.as_str()) {
            Some(a) => a,
            None => {
                let doc = index
                    .get(&t.person_id)
                    .ok_or_else(|| Error::PersonNotFound(t.person_id.clone()))?;
                let a = DocumentAnalysis::new(doc, comps.lexicon, comps.occurrence);
                cache.entry(t.person_id.as_str()).or_insert(a)
            }
        };
        rows.push((analysis.features(&t.entity, comps)?, t.score));
    }
    Ok(rows)
}

/// Trains profiles, embeddings and the regression for one relation from its
/// distant-supervision triples.
pub fn train_relation(
    index: &CorpusIndex,
    lexicon: EntityLexicon,
    labels: &[LabeledTriple],
    embedding: &EmbeddingConfig,
    occurrence: OccurrenceMode,
) -> Result<(RelationModel, TrainingSummary)> {
    let relation = lexicon.relation();
    let labels: Vec<LabeledTriple> = labels.iter().filter(|t| t.relation == relation).cloned().collect();
    let (positives, negatives) = count_labels(&labels);
    if positives == 0 || negatives == 0 {
        return Err(Error::InsufficientData(format!(
            "{relation}: distant supervision produced {positives} positive and {negatives} negative triples; \
             at least one of each is needed"
        )));
    }
    let profiles = build_entity_profiles(index, &lexicon, &labels);
    let tokens: Vec<String> = index
        .documents()
        .flat_map(|d| NormalizedDocument::new(d, &lexicon).tokens().to_vec())
        .collect();
    let trained = train_skipgram_with_losses(&tokens, embedding)?;
    let comps = FeatureComponents {
        lexicon: &lexicon,
        embeddings: &trained.table,
        profiles: &profiles,
        occurrence,
    };
    let rows = training_rows(index, &labels, &comps)?;
    let x: Vec<[f64; 2]> = rows.iter().map(|(f, _)| f.regression_inputs()).collect();
    let y: Vec<f64> = rows.iter().map(|(_, l)| f64::from(*l)).collect();
    let regression = fit_ols(&x, &y)?;
    let errors = per_feature_error(&rows, &regression)?;
    let summary = TrainingSummary {
        relation,
        positives,
        negatives,
        vocabulary: trained.table.len(),
        epoch_losses: trained.epoch_losses,
        regression: regression.clone(),
        errors,
    };
    let model = RelationModel {
        lexicon,
        embeddings: trained.table,
        profiles,
        regression,
    };
    Ok((model, summary))
}

/// Regenerates the training triples, trains every configured relation and
/// writes the bundle to `model/`.
pub fn run_train(cfg: &PipelineConfig) -> Result<(ScoringModel, Vec<TrainingSummary>)> {
    let index = load_index(cfg)?;
    let lexicons = cfg.load_lexicons()?;
    let triples = gen_train(&index, &lexicons, cfg);
    write_triples(&cfg.train_path(), &triples, cfg.seed)?;
    let embedding = cfg.embedding_config();
    let mut relations = BTreeMap::new();
    let mut summaries = Vec::new();
    for lexicon in lexicons {
        let (model, summary) = train_relation(&index, lexicon, &triples, &embedding, cfg.occurrence)?;
        relations.insert(summary.relation, model);
        summaries.push(summary);
    }
    let model = ScoringModel {
        relations,
        occurrence: cfg.occurrence,
        seed: cfg.seed,
    };
    model.save(&cfg.model_dir())?;
    Ok((model, summaries))
}

/// Training counts, regression weights and the per-feature error table.
pub fn render_summary(summaries: &[TrainingSummary]) -> String {
    let mut out = format!(
        "{:<12} {:>9} {:>9} {:>10} {:>12} {:>12} {:>12} {:>12}\n",
        "relation", "positive", "negative", "vocabulary", "final loss", "w_w2v", "w_tfidf", "bias"
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<12} {:>9} {:>9} {:>10} {:>12.4} {:>12.4} {:>12.4} {:>12.4}",
            s.relation.as_str(),
            s.positives,
            s.negatives,
            s.vocabulary,
            s.epoch_losses.last().copied().unwrap_or(f64::NAN),
            s.regression.weights()[0],
            s.regression.weights()[1],
            s.regression.bias(),
        );
    }
    out.push('\n');
    let errors: BTreeMap<RelationType, BTreeMap<StandaloneScorer, f64>> =
        summaries.iter().map(|s| (s.relation, s.errors.clone())).collect();
    out.push_str(&render_error_table(&errors));
    out
}

/// Scores `input` into `output` with the bundle and index of the working
/// directory.
pub fn run_score(cfg: &PipelineConfig, input: &Path, output: &Path, skip_bad: bool) -> Result<ScoredLines> {
    require_file(input)?;
    let model = ScoringModel::load(&cfg.model_dir())?;
    let index = load_index(cfg)?;
    score_file(input, &model, &index, output, skip_bad)
}

/// Evaluates a scored file against a ground-truth file of the same format.
pub fn run_eval(predictions: &Path, truth: &Path) -> Result<EvalReport> {
    let pred = read_triples(predictions)?;
    let truth = read_triples(truth)?;
    evaluate(&join_scored(&pred, &truth)?)
}

/// Describes the working directory: corpus coverage, training counts and
/// the per-feature errors of the saved bundle on `train.tsv`.
pub fn run_report(cfg: &PipelineConfig) -> Result<String> {
    let index = load_index(cfg)?;
    let model = ScoringModel::load(&cfg.model_dir())?;
    let triples = read_triples(&cfg.train_path())?;
    let seed = read_lines(&cfg.train_path())?
        .into_iter()
        .find_map(|(_, l)| l.strip_prefix("# seed=").map(str::to_string))
        .unwrap_or_else(|| "unknown".into());

    let mut out = String::new();
    let coverage = index.coverage_fraction()?;
    let _ = writeln!(
        out,
        "coverage: {} of {} persons ({:.2}%), {} orphan sentence(s)",
        index.persons_found(),
        index.persons_requested(),
        coverage * 100.0,
        index.orphan_sentences()
    );
    let _ = writeln!(
        out,
        "model seed: {}, training seed: {seed}, occurrence: {}",
        model.seed,
        model.occurrence.as_str()
    );
    let mut errors = BTreeMap::new();
    for (rel, m) in &model.relations {
        let labels: Vec<LabeledTriple> = triples.iter().filter(|t| t.relation == *rel).cloned().collect();
        let (pos, neg) = count_labels(&labels);
        let _ = writeln!(
            out,
            "{rel}: {pos} positive, {neg} negative, weights w2v={:.4} tfidf={:.4} bias={:.4}",
            m.regression.weights()[0],
            m.regression.weights()[1],
            m.regression.bias()
        );
        let rows = training_rows(&index, &labels, &model.components(*rel)?)?;
        if !rows.is_empty() {
            errors.insert(*rel, per_feature_error(&rows, &m.regression)?);
        }
    }
    out.push('\n');
    out.push_str(&render_error_table(&errors));
    Ok(out)
}
