//! Skip-gram word embeddings trained with negative sampling.
//!
//! Training is single-threaded and fully determined by the seed. Every
//! position uses the full symmetric window, negatives are drawn from the
//! unigram distribution raised to the 3/4 power, and frequent words are not
//! subsampled.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io_util::{read_lines, write_atomic};

/// Floor of the linearly decaying learning rate, as a fraction of the start.
const MIN_LR_FRACTION: f32 = 1e-4;
const NOISE_POWER: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingConfig {
    pub dimension: usize,
    pub window: usize,
    pub negative_samples: usize,
    pub epochs: usize,
    pub min_count: usize,
    pub learning_rate: f32,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dimension: 100,
            window: 5,
            negative_samples: 5,
            epochs: 5,
            min_count: 2,
            learning_rate: 0.025,
            seed: 1,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("dimension", self.dimension),
            ("window", self.window),
            ("negative_samples", self.negative_samples),
            ("epochs", self.epochs),
            ("min_count", self.min_count),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Input-side word vectors keyed by token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    words: Vec<String>,
    vocab: HashMap<String, usize>,
    vectors: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize, entries: Vec<(String, Vec<f32>)>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Validation("embedding dimension must be positive".into()));
        }
        let mut words = Vec::with_capacity(entries.len());
        let mut vocab = HashMap::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len() * dimension);
        for (word, v) in entries {
            if v.len() != dimension {
                return Err(Error::Validation(format!(
                    "vector for {word:?} has {} components, expected {dimension}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("vector for {word:?} is not finite")));
            }
            if vocab.insert(word.clone(), words.len()).is_some() {
                return Err(Error::Validation(format!("duplicate token {word:?}")));
            }
            words.push(word);
            vectors.extend(v);
        }
        Ok(EmbeddingTable {
            dimension,
            words,
            vocab,
            vectors,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Tokens in vocabulary order (descending frequency, then lexicographic).
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vocab.contains_key(token)
    }

    pub fn vector(&self, token: &str) -> Option<&[f32]> {
        self.vocab.get(token).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dimension..(i + 1) * self.dimension]
    }

    /// The `k` vocabulary words most cosine-similar to `token`, excluding itself.
    pub fn most_similar(&self, token: &str, k: usize) -> Vec<(String, f64)> {
        let Some(query) = self.vector(token) else {
            return Vec::new();
        };
        let mut scored: Vec<(String, f64)> = self
            .words
            .iter()
            .enumerate()
            .filter(|(_, w)| w.as_str() != token)
            .filter_map(|(i, w)| cosine(query, self.row(i)).ok().map(|c| (w.clone(), c)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }

    /// First line `<vocab_size> <dimension>`, then `token v1 v2 ...` per word.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dimension);
        for (i, w) in self.words.iter().enumerate() {
            out.push_str(w);
            for x in self.row(i) {
                // `{}` on f32 prints the shortest string that parses back exactly.
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let lines = read_lines(path)?;
        let mut it = lines.into_iter();
        let (_, header) = it
            .next()
            .ok_or_else(|| Error::parse(path, 1, "missing header"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, 1, format!("bad header {header:?}")))?;
        let [size, dimension] = dims[..] else {
            return Err(Error::parse(path, 1, "header must be `<vocab_size> <dimension>`"));
        };
        let mut entries = Vec::with_capacity(size);
        for (line_no, line) in it {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(' ');
            let word = fields.next().unwrap_or_default().to_string();
            let v: Vec<f32> = fields
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(path, line_no, "bad vector component"))?;
            if v.len() != dimension {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected {dimension} components, found {}", v.len()),
                ));
            }
            entries.push((word, v));
        }
        if entries.len() != size {
            return Err(Error::parse(
                path,
                1,
                format!("header announces {size} words, file has {}", entries.len()),
            ));
        }
        EmbeddingTable::new(dimension, entries).map_err(|e| Error::parse(path, 1, e.to_string()))
    }
}

/// A trained table plus the SGNS objective after each epoch, as a mean per
/// positive pair.
#[derive(Debug, Clone)]
pub struct TrainedEmbeddings {
    pub table: EmbeddingTable,
    pub epoch_losses: Vec<f64>,
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// `-ln(sigmoid(x))`, computed without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mixed into the seed of the evaluation noise stream so it never coincides
/// with the training stream.
const EVAL_STREAM: u64 = 0x5eed_e7a1_0b1e_c71e;

struct Model<'a> {
    stream: &'a [usize],
    dim: usize,
    window: usize,
    negative_samples: usize,
    noise: &'a WeightedIndex<f64>,
}

impl Model<'_> {
    fn context_range(&self, pos: usize) -> std::ops::RangeInclusive<usize> {
        pos.saturating_sub(self.window)..=(pos + self.window).min(self.stream.len() - 1)
    }

    /// The SGNS objective over every (center, context) pair with negatives
    /// from a fixed-seed stream, so successive evaluations differ only
    /// through the parameters.
    fn objective(&self, input: &[f32], output: &[f32], seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ EVAL_STREAM);
        let dim = self.dim;
        let (mut loss, mut pairs) = (0.0f64, 0usize);
        for (pos, &center) in self.stream.iter().enumerate() {
            let v = &input[center * dim..(center + 1) * dim];
            for ctx_pos in self.context_range(pos) {
                if ctx_pos == pos {
                    continue;
                }
                let context = self.stream[ctx_pos];
                pairs += 1;
                loss += neg_log_sigmoid(f64::from(dot(v, &output[context * dim..(context + 1) * dim])));
                for _ in 0..self.negative_samples {
                    let t = self.noise.sample(&mut rng);
                    if t != context {
                        loss += neg_log_sigmoid(-f64::from(dot(v, &output[t * dim..(t + 1) * dim])));
                    }
                }
            }
        }
        if pairs == 0 {
            0.0
        } else {
            loss / pairs as f64
        }
    }
}

pub fn train_skipgram(tokens: &[String], config: &EmbeddingConfig) -> Result<EmbeddingTable> {
    train(tokens, config, false).map(|t| t.table)
}

/// Trains and evaluates the objective after every epoch.
pub fn train_skipgram_with_losses(
    tokens: &[String],
    config: &EmbeddingConfig,
) -> Result<TrainedEmbeddings> {
    train(tokens, config, true)
}

fn train(tokens: &[String], config: &EmbeddingConfig, track_losses: bool) -> Result<TrainedEmbeddings> {
    config.validate()?;
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut vocab: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= config.min_count)
        .collect();
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary(config.min_count));
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, (w, _))| (*w, i)).collect();
    let stream: Vec<usize> = tokens.iter().filter_map(|t| index.get(t.as_str()).copied()).collect();

    let dim = config.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let half = 0.5 / dim as f32;
    let init = Uniform::new(-half, half).expect("non-empty init range");
    let mut input: Vec<f32> = (0..vocab.len() * dim).map(|_| init.sample(&mut rng)).collect();
    let mut output = vec![0.0f32; vocab.len() * dim];
    let noise = WeightedIndex::new(vocab.iter().map(|(_, c)| (*c as f64).powf(NOISE_POWER)))
        .expect("vocabulary counts are positive");

    let model = Model {
        stream: &stream,
        dim,
        window: config.window,
        negative_samples: config.negative_samples,
        noise: &noise,
    };
    let total_steps = (config.epochs * stream.len()).max(1) as f32;
    let mut step = 0usize;
    let mut grad = vec![0.0f32; dim];
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        for pos in 0..stream.len() {
            let lr = config.learning_rate
                * (1.0 - step as f32 / total_steps).max(MIN_LR_FRACTION);
            step += 1;
            let center = stream[pos];
            for ctx_pos in model.context_range(pos) {
                if ctx_pos == pos {
                    continue;
                }
                let context = stream[ctx_pos];
                grad.iter_mut().for_each(|g| *g = 0.0);
                let v = &mut input[center * dim..(center + 1) * dim];
                for k in 0..=config.negative_samples {
                    let (target, label) = if k == 0 {
                        (context, 1.0f32)
                    } else {
                        let t = noise.sample(&mut rng);
                        if t == context {
                            continue;
                        }
                        (t, 0.0)
                    };
                    let u = &mut output[target * dim..(target + 1) * dim];
                    let g = (label - sigmoid(dot(v, u))) * lr;
                    for j in 0..dim {
                        grad[j] += g * u[j];
                        u[j] += g * v[j];
                    }
                }
                for j in 0..dim {
                    v[j] += grad[j];
                }
            }
        }
        if track_losses {
            epoch_losses.push(model.objective(&input, &output, config.seed));
        }
    }

    let entries = vocab
        .iter()
        .enumerate()
        .map(|(i, (w, _))| (w.to_string(), input[i * dim..(i + 1) * dim].to_vec()))
        .collect();
    Ok(TrainedEmbeddings {
        table: EmbeddingTable::new(dim, entries)?,
        epoch_losses,
    })
}

pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!(
            "cosine of vectors with {} and {} components",
            a.len(),
            b.len()
        )));
    }
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

/// Cosine between the person and entity tokens mapped to `[0, 1]`; 0.5 when
/// either token has no usable vector.
pub fn w2v_feature(person_token: &str, entity_token: &str, table: &EmbeddingTable) -> f64 {
    match (table.vector(person_token), table.vector(entity_token)) {
        (Some(p), Some(e)) => cosine(p, e).map_or(0.5, |c| ((c + 1.0) / 2.0).clamp(0.0, 1.0)),
        _ => 0.5,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(words: &[&str], repeats: usize) -> Vec<String> {
        (0..repeats).flat_map(|_| words.iter().map(|w| w.to_string())).collect()
    }

    #[test]
    fn cosine_examples() {
        let v = [0.3f32, -1.2, 2.0];
        let neg: Vec<f32> = v.iter().map(|x| -x).collect();
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::UndefinedSimilarity)));
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn alternating_corpus_converges() {
        // With a wider window, "a" is also a context of "a", and the positive
        // and negative targets coincide; the loss then sits on a noisy floor.
        let cfg = EmbeddingConfig { dimension: 8, window: 1, ..EmbeddingConfig::default() };
        let toks = corpus(&["a", "b"], 1000);
        let trained = train_skipgram_with_losses(&toks, &cfg).unwrap();
        assert_eq!(trained.table.len(), 2);
        assert_eq!(trained.table.most_similar("a", 1)[0].0, "b");
        for w in trained.epoch_losses.windows(2) {
            assert!(w[1] <= w[0], "losses {:?}", trained.epoch_losses);
        }
    }

    #[test]
    fn single_token_corpus() {
        let cfg = EmbeddingConfig { dimension: 4, ..EmbeddingConfig::default() };
        let table = train_skipgram(&corpus(&["z"], 50), &cfg).unwrap();
        assert_eq!(table.len(), 1);
        assert!(table.vector("z").unwrap().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let cfg = EmbeddingConfig { min_count: 3, ..EmbeddingConfig::default() };
        let toks = corpus(&["a", "b"], 2);
        assert!(matches!(train_skipgram(&toks, &cfg), Err(Error::EmptyVocabulary(3))));
        assert!(train_skipgram(&[], &EmbeddingConfig::default()).is_err());
    }

    #[test]
    fn zero_hyperparameter_is_rejected() {
        let cfg = EmbeddingConfig { window: 0, ..EmbeddingConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_vectors() {
        let cfg = EmbeddingConfig { dimension: 10, epochs: 2, ..EmbeddingConfig::default() };
        let toks = corpus(&["x", "y", "z", "x", "w"], 100);
        assert_eq!(train_skipgram(&toks, &cfg).unwrap(), train_skipgram(&toks, &cfg).unwrap());
        let other = EmbeddingConfig { seed: 2, ..cfg };
        assert_ne!(train_skipgram(&toks, &cfg).unwrap(), train_skipgram(&toks, &other).unwrap());
    }

    #[test]
    fn w2v_feature_rules() {
        let table = EmbeddingTable::new(
            2,
            vec![("p".into(), vec![1.0, 0.0]), ("e".into(), vec![0.0, 1.0]), ("f".into(), vec![-1.0, 0.0])],
        )
        .unwrap();
        assert_eq!(w2v_feature("p", "p", &table), 1.0);
        assert_eq!(w2v_feature("p", "e", &table), 0.5);
        assert_eq!(w2v_feature("p", "f", &table), 0.0);
        assert_eq!(w2v_feature("nobody", "e", &table), 0.5);
    }

    #[test]
    fn text_round_trip() {
        let cfg = EmbeddingConfig { dimension: 6, epochs: 1, ..EmbeddingConfig::default() };
        let table = train_skipgram(&corpus(&["q", "r", "s"], 40), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.txt");
        table.save(&p).unwrap();
        let back = EmbeddingTable::load(&p).unwrap();
        assert_eq!(back, table);
        assert!(table.to_text().starts_with("3 6\n"));
    }

    #[test]
    fn load_rejects_short_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.txt");
        std::fs::write(&p, "1 3\nq 1 2\n").unwrap();
        assert!(matches!(EmbeddingTable::load(&p), Err(Error::Parse { line: 2, .. })));
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in prop::collection::vec(-5.0f32..5.0, 4),
            b in prop::collection::vec(-5.0f32..5.0, 4),
            scale in 0.01f32..100.0,
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let ab = cosine(&a, &b).unwrap();
            prop_assert!((ab - cosine(&b, &a).unwrap()).abs() < 1e-12);
            let scaled: Vec<f32> = a.iter().map(|x| x * scale).collect();
            prop_assert!((ab - cosine(&scaled, &b).unwrap()).abs() < 1e-5);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn w2v_feature_in_unit_interval(
            a in prop::collection::vec(-5.0f32..5.0, 3),
            b in prop::collection::vec(-5.0f32..5.0, 3),
        ) {
            let t = EmbeddingTable::new(3, vec![("a".into(), a), ("b".into(), b)]).unwrap();
            let f = w2v_feature("a", "b", &t);
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}
