//! Accuracy, average score difference and grouped Kendall tau-b for scored
//! triples, plus standalone errors of the individual feature scorers.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fmt::Write as _;

use crate::distsup::{LabeledTriple, MAX_SCORE};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::lexicon::RelationType;
use crate::scorer::{combined_score, round_score, RegressionModel};

/// Largest absolute difference that still counts as accurate.
pub const ACCURACY_MARGIN: u8 = 2;

fn check_scores(pred: &[u8], truth: &[u8]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} ground-truth scores",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Validation("no scores to evaluate".into()));
    }
    if let Some(s) = pred.iter().chain(truth).find(|&&s| s > MAX_SCORE) {
        return Err(Error::Validation(format!("score {s} is outside 0..=7")));
    }
    Ok(())
}

/// Fraction of triples whose score is within 2 of the ground truth.
pub fn accuracy(pred: &[u8], truth: &[u8]) -> Result<f64> {
    check_scores(pred, truth)?;
    let hits = pred
        .iter()
        .zip(truth)
        .filter(|(p, t)| p.abs_diff(**t) <= ACCURACY_MARGIN)
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Mean absolute difference between predicted and ground-truth scores.
pub fn avg_score_diff(pred: &[u8], truth: &[u8]) -> Result<f64> {
    check_scores(pred, truth)?;
    let total: u64 = pred.iter().zip(truth).map(|(p, t)| u64::from(p.abs_diff(*t))).sum();
    Ok(total as f64 / pred.len() as f64)
}

fn tied_pairs<T: PartialEq>(sorted: impl Iterator<Item = T>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for x in sorted {
        if prev.as_ref() == Some(&x) {
            run += 1;
        } else {
            total += run * run.saturating_sub(1) / 2;
            run = 1;
        }
        prev = Some(x);
    }
    total + run * run.saturating_sub(1) / 2
}

/// Sorts `v` and returns the number of strictly inverted pairs.
fn merge_count<T: Ord + Copy>(v: &mut [T], buf: &mut Vec<T>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b, `(C - D) / sqrt((n0 - n1) (n0 - n2))`, where `n1` and `n2`
/// count the pairs tied in `a` and in `b`.
///
/// Runs in `O(n log n)`: pairs are sorted by `(a, b)` and the discordant
/// pairs are the inversions left in `b`, counted by merge sort.
pub fn kendall_tau_b<T: Ord + Copy>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!(
            "rankings of different lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as u64;
    if n < 2 {
        return Err(Error::UndefinedTau("fewer than two items"));
    }
    let mut pairs: Vec<(T, T)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_unstable();
    let n0 = n * (n - 1) / 2;
    let n1 = tied_pairs(pairs.iter().map(|p| p.0));
    let n3 = tied_pairs(pairs.iter().copied());
    let mut ys: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let discordant = merge_count(&mut ys, &mut buf);
    let n2 = tied_pairs(ys.iter().copied());
    if n1 == n0 || n2 == n0 {
        return Err(Error::UndefinedTau("all values are tied"));
    }
    let numerator = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * discordant as i64;
    let denominator = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok((numerator as f64 / denominator).clamp(-1.0, 1.0))
}

/// One evaluated triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRecord {
    pub subject: String,
    pub relation: RelationType,
    pub entity: String,
    pub pred: u8,
    pub truth: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupedTau {
    pub tau: f64,
    pub ranked_groups: usize,
    pub singleton_groups: usize,
    pub tied_groups: usize,
}

impl GroupedTau {
    pub fn skipped_groups(&self) -> usize {
        self.singleton_groups + self.tied_groups
    }
}

/// Unweighted mean of tau-b over `(subject, relation)` groups. Groups of one
/// triple and groups where tau is undefined are skipped and counted.
pub fn grouped_tau(records: &[EvalRecord]) -> Result<GroupedTau> {
    type Columns = (Vec<u8>, Vec<u8>);
    let mut groups: BTreeMap<(&str, RelationType), Columns> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.subject.as_str(), r.relation)).or_default();
        g.0.push(r.pred);
        g.1.push(r.truth);
    }
    let mut taus = Vec::new();
    let (mut singleton_groups, mut tied_groups) = (0, 0);
    for (pred, truth) in groups.values() {
        if pred.len() < 2 {
            singleton_groups += 1;
            continue;
        }
        match kendall_tau_b(pred, truth) {
            Ok(t) => taus.push(t),
            Err(Error::UndefinedTau(_)) => tied_groups += 1,
            Err(e) => return Err(e),
        }
    }
    if taus.is_empty() {
        return Err(Error::UndefinedMetric("no group has a defined tau"));
    }
    Ok(GroupedTau {
        tau: taus.iter().sum::<f64>() / taus.len() as f64,
        ranked_groups: taus.len(),
        singleton_groups,
        tied_groups,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub asd: f64,
    pub tau: f64,
    pub n_triples: usize,
    pub n_ranked_groups: usize,
    pub skipped_groups: usize,
}

impl EvalReport {
    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        format!(
            "accuracy={}\nasd={}\ntau={}\nn_triples={}\nranked_groups={}\nskipped_groups={}\n",
            self.accuracy, self.asd, self.tau, self.n_triples, self.n_ranked_groups, self.skipped_groups
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:>10}", "metric", "value")?;
        writeln!(f, "{:<16} {:>10.4}", "accuracy", self.accuracy)?;
        writeln!(f, "{:<16} {:>10.4}", "avg score diff", self.asd)?;
        writeln!(f, "{:<16} {:>10.4}", "kendall tau-b", self.tau)?;
        writeln!(f, "{:<16} {:>10}", "triples", self.n_triples)?;
        writeln!(f, "{:<16} {:>10}", "ranked groups", self.n_ranked_groups)?;
        writeln!(f, "{:<16} {:>10}", "skipped groups", self.skipped_groups)
    }
}

pub fn evaluate(records: &[EvalRecord]) -> Result<EvalReport> {
    let pred: Vec<u8> = records.iter().map(|r| r.pred).collect();
    let truth: Vec<u8> = records.iter().map(|r| r.truth).collect();
    let grouped = grouped_tau(records)?;
    Ok(EvalReport {
        accuracy: accuracy(&pred, &truth)?,
        asd: avg_score_diff(&pred, &truth)?,
        tau: grouped.tau,
        n_triples: records.len(),
        n_ranked_groups: grouped.ranked_groups,
        skipped_groups: grouped.skipped_groups(),
    })
}

/// Pairs every ground-truth triple with its prediction, in ground-truth order.
pub fn join_scored(pred: &[LabeledTriple], truth: &[LabeledTriple]) -> Result<Vec<EvalRecord>> {
    let mut by_key: HashMap<(&str, RelationType, &str), u8> = HashMap::new();
    for p in pred {
        if by_key
            .insert((p.person_id.as_str(), p.relation, p.entity.as_str()), p.score)
            .is_some()
        {
            return Err(Error::Validation(format!(
                "duplicate prediction for {} / {} / {}",
                p.person_id, p.relation, p.entity
            )));
        }
    }
    truth
        .iter()
        .map(|t| {
            let pred = by_key
                .get(&(t.person_id.as_str(), t.relation, t.entity.as_str()))
                .copied()
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "no prediction for {} / {} / {}",
                        t.person_id, t.relation, t.entity
                    ))
                })?;
            Ok(EvalRecord {
                subject: t.person_id.clone(),
                relation: t.relation,
                entity: t.entity.clone(),
                pred,
                truth: t.score,
            })
        })
        .collect()
}

/// Single-feature scorers whose training error is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StandaloneScorer {
    Word2Vec,
    TfIdf,
    Occurrence,
    LinearRegression,
    Combined,
}

impl StandaloneScorer {
    pub const ALL: [StandaloneScorer; 5] = [
        StandaloneScorer::Word2Vec,
        StandaloneScorer::TfIdf,
        StandaloneScorer::Occurrence,
        StandaloneScorer::LinearRegression,
        StandaloneScorer::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StandaloneScorer::Word2Vec => "Word2Vec",
            StandaloneScorer::TfIdf => "TF-IDF",
            StandaloneScorer::Occurrence => "Occurrence order",
            StandaloneScorer::LinearRegression => "Linear regression",
            StandaloneScorer::Combined => "Combined",
        }
    }

    /// The unrounded score on the 0..7 scale.
    pub fn raw(self, f: &FeatureVector, regression: &RegressionModel) -> f64 {
        let scale = f64::from(MAX_SCORE);
        match self {
            StandaloneScorer::Word2Vec => f.w2v * scale,
            StandaloneScorer::TfIdf => f.tfidf * scale,
            StandaloneScorer::Occurrence => f64::from(f.occ),
            StandaloneScorer::LinearRegression => regression.predict(f),
            StandaloneScorer::Combined => combined_score(f.occ, regression.predict(f)),
        }
    }
}

/// Mean `|round(score) - label|` of an arbitrary scorer.
pub fn standalone_error<F>(rows: &[(FeatureVector, u8)], scorer: F) -> Result<f64>
where
    F: Fn(&FeatureVector) -> f64,
{
    if rows.is_empty() {
        return Err(Error::Validation("empty training set".into()));
    }
    let total: u64 = rows
        .iter()
        .map(|(f, label)| u64::from(round_score(scorer(f)).abs_diff(*label)))
        .sum();
    Ok(total as f64 / rows.len() as f64)
}

/// Average training error of each standalone scorer.
pub fn per_feature_error(
    rows: &[(FeatureVector, u8)],
    regression: &RegressionModel,
) -> Result<BTreeMap<StandaloneScorer, f64>> {
    StandaloneScorer::ALL
        .iter()
        .map(|&s| Ok((s, standalone_error(rows, |f| s.raw(f, regression))?)))
        .collect()
}

/// Renders per-relation errors as a table with one column per relation.
pub fn render_error_table(errors: &BTreeMap<RelationType, BTreeMap<StandaloneScorer, f64>>) -> String {
    let mut out = format!("{:<20}", "Feature");
    for rel in errors.keys() {
        let _ = write!(out, " {:>16}", format!("{rel} err"));
    }
    out.push('\n');
    for s in StandaloneScorer::ALL {
        let _ = write!(out, "{:<20}", s.name());
        for per in errors.values() {
            let _ = write!(out, " {:>16.2}", per.get(&s).copied().unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(subject: &str, pred: u8, truth: u8) -> EvalRecord {
        EvalRecord {
            subject: subject.into(),
            relation: RelationType::Profession,
            entity: format!("{subject}-{pred}-{truth}"),
            pred,
            truth,
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[5], &[7]).unwrap(), 1.0);
        assert_eq!(accuracy(&[4], &[7]).unwrap(), 0.0);
        assert_eq!(accuracy(&[5, 0], &[7, 7]).unwrap(), 0.5);
        assert!(accuracy(&[1, 2], &[1]).is_err());
        assert!(accuracy(&[8], &[1]).is_err());
    }

    #[test]
    fn asd_examples() {
        assert_eq!(avg_score_diff(&[3, 4], &[3, 4]).unwrap(), 0.0);
        assert_eq!(avg_score_diff(&[0, 7], &[7, 0]).unwrap(), 7.0);
        assert_eq!(avg_score_diff(&[5, 3], &[7, 3]).unwrap(), 1.0);
    }

    #[test]
    fn tau_examples() {
        assert_eq!(kendall_tau_b(&[7, 5, 2], &[7, 5, 2]).unwrap(), 1.0);
        assert_eq!(kendall_tau_b(&[1, 2, 3], &[3, 2, 1]).unwrap(), -1.0);
        assert!((kendall_tau_b(&[7, 5, 2], &[5, 7, 2]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(kendall_tau_b(&[1, 2, 3], &[2, 1, 2]).unwrap(), 0.0);
        assert!(matches!(kendall_tau_b(&[3, 3, 3], &[1, 2, 3]), Err(Error::UndefinedTau(_))));
        assert!(matches!(kendall_tau_b(&[3], &[1]), Err(Error::UndefinedTau(_))));
        assert!(kendall_tau_b(&[1, 2], &[1]).is_err());
    }

    #[test]
    fn grouped_examples() {
        let one = [rec("a", 7, 7), rec("a", 2, 3)];
        assert_eq!(grouped_tau(&one).unwrap().tau, 1.0);

        let two = [rec("a", 1, 1), rec("a", 2, 2), rec("b", 1, 2), rec("b", 2, 1)];
        assert_eq!(grouped_tau(&two).unwrap().tau, 0.0);

        let mut three = vec![rec("a", 7, 7), rec("a", 5, 5), rec("a", 2, 2)];
        three.extend([rec("b", 7, 5), rec("b", 5, 7), rec("b", 2, 2)]);
        three.extend([rec("c", 1, 2), rec("c", 2, 1), rec("c", 3, 2)]);
        three.push(rec("d", 4, 4));
        three.extend([rec("e", 3, 1), rec("e", 3, 6)]);
        let g = grouped_tau(&three).unwrap();
        assert!((g.tau - 4.0 / 9.0).abs() < 1e-12);
        assert_eq!((g.ranked_groups, g.singleton_groups, g.tied_groups), (3, 1, 1));
        assert_eq!(g.skipped_groups(), 2);

        assert!(matches!(grouped_tau(&[rec("a", 1, 1)]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn constant_scorer_error_on_balanced_labels() {
        let f = FeatureVector { w2v: 0.5, tfidf: 0.0, occ: 0 };
        let rows = [(f, 0), (f, 7), (f, 0), (f, 7)];
        assert_eq!(standalone_error(&rows, |_| 3.0).unwrap(), 3.5);
        assert!(standalone_error(&[], |_| 3.0).is_err());
    }

    #[test]
    fn report_renders_key_values() {
        let records = [rec("a", 7, 7), rec("a", 2, 3)];
        let r = evaluate(&records).unwrap();
        let kv = r.to_key_values();
        assert!(kv.contains("accuracy=1\n"));
        assert!(kv.contains("asd=0.5\n"));
        assert!(kv.contains("tau=1\n"));
        assert!(kv.contains("skipped_groups=0\n"));
        assert!(r.to_string().contains("kendall tau-b"));
    }

    #[test]
    fn join_requires_every_truth_triple() {
        let t = |p: &str, e: &str, s| LabeledTriple::new(p, RelationType::Nationality, e, s).unwrap();
        let truth = [t("p", "Italy", 7), t("p", "Croatia", 1)];
        let pred = [t("p", "Croatia", 2), t("p", "Italy", 6), t("q", "Italy", 3)];
        let joined = join_scored(&pred, &truth).unwrap();
        assert_eq!(joined.iter().map(|r| (r.pred, r.truth)).collect::<Vec<_>>(), [(6, 7), (2, 1)]);
        assert!(join_scored(&pred[..1], &truth).is_err());
    }

    fn brute_tau(a: &[u8], b: &[u8]) -> Option<f64> {
        let (mut c, mut d, mut ta, mut tb, mut n0) = (0i64, 0i64, 0i64, 0i64, 0i64);
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                n0 += 1;
                let s = (a[i] as i64 - a[j] as i64).signum() * (b[i] as i64 - b[j] as i64).signum();
                match s {
                    1 => c += 1,
                    -1 => d += 1,
                    _ => {}
                }
                ta += (a[i] == a[j]) as i64;
                tb += (b[i] == b[j]) as i64;
            }
        }
        (n0 > ta && n0 > tb).then(|| (c - d) as f64 / (((n0 - ta) * (n0 - tb)) as f64).sqrt())
    }

    proptest! {
        #[test]
        fn tau_matches_brute_force(
            (a, b) in (2usize..12).prop_flat_map(|n| (
                prop::collection::vec(0u8..=7, n),
                prop::collection::vec(0u8..=7, n),
            ))
        ) {
            match (kendall_tau_b(&a, &b), brute_tau(&a, &b)) {
                (Ok(t), Some(o)) => prop_assert!((t - o).abs() < 1e-12),
                (Err(Error::UndefinedTau(_)), None) => {}
                (got, want) => prop_assert!(false, "{got:?} vs {want:?}"),
            }
        }

        #[test]
        fn tau_is_symmetric_and_reflexive(a in prop::collection::vec(0u8..=7, 2..10), b in prop::collection::vec(0u8..=7, 10)) {
            let b = &b[..a.len()];
            if let (Ok(x), Ok(y)) = (kendall_tau_b(&a, b), kendall_tau_b(b, &a)) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            if let Ok(t) = kendall_tau_b(&a, &a) {
                prop_assert_eq!(t, 1.0);
            }
        }

        #[test]
        fn metrics_are_permutation_invariant(
            pairs in prop::collection::vec((0u8..=7, 0u8..=7), 1..20),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let split = |v: &[(u8, u8)]| -> (Vec<u8>, Vec<u8>) { v.iter().copied().unzip() };
            let (p, t) = split(&pairs);
            let (ps, ts) = split(&shuffled);
            prop_assert_eq!(accuracy(&p, &t).unwrap(), accuracy(&ps, &ts).unwrap());
            prop_assert!((avg_score_diff(&p, &t).unwrap() - avg_score_diff(&ps, &ts).unwrap()).abs() < 1e-12);
            prop_assert_eq!(avg_score_diff(&p, &t).unwrap() == 0.0, p == t);
        }
    }
}
