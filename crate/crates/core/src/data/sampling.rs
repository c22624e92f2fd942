use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::corpus::Application;
use crate::error::{Error, Result};

pub const FEMALE: &str = "female";
pub const MALE: &str = "male";

/// Keeps every positive and `min(n⁺, n⁻)` uniformly chosen negatives per job
/// posting. Surviving records keep their original order.
pub fn undersample(corpus: &[Application], seed: u64) -> Vec<Application> {
    let mut negatives: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut positives: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, app) in corpus.iter().enumerate() {
        if app.label == 1 {
            *positives.entry(&app.job_id).or_default() += 1;
        } else {
            negatives.entry(&app.job_id).or_default().push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; corpus.len()];
    for (job, negs) in &negatives {
        let n = positives.get(job).copied().unwrap_or(0).min(negs.len());
        for j in index::sample(&mut rng, negs.len(), n) {
            keep[negs[j]] = true;
        }
    }
    corpus
        .iter()
        .zip(keep)
        .filter(|(a, k)| a.label == 1 || *k)
        .map(|(a, _)| a.clone())
        .collect()
}

/// Train / validation / test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        let s = Self {
            train,
            val,
            test,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    /// Parses `"0.8,0.1,0.1"`, `"0.8/0.1/0.1"` or percentages like `"80/10/10"`.
    pub fn parse(text: &str, seed: u64) -> Result<Self> {
        let parts: Vec<f64> = text
            .split(['/', ','])
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("split {text:?}: {e}")))?;
        let [a, b, c] = parts[..] else {
            return Err(Error::Config(format!("split {text:?} needs three parts")));
        };
        let scale = if a + b + c > 1.5 { 100.0 } else { 1.0 };
        Self::new(a / scale, b / scale, c / scale, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|f| !(*f > 0.0)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum to 1, got {}/{}/{}",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }
}

/// Shuffles under the seed and cuts `round(f·n)` records for train and
/// validation; the remainder is the test set.
pub fn split<T: Clone>(corpus: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    spec.validate()?;
    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = ((spec.train * n as f64).round() as usize).min(n);
    let n_val = ((spec.val * n as f64).round() as usize).min(n - n_train);
    let take = |r: &[usize]| r.iter().map(|&i| corpus[i].clone()).collect::<Vec<T>>();
    Ok((
        take(&order[..n_train]),
        take(&order[n_train..n_train + n_val]),
        take(&order[n_train + n_val..]),
    ))
}

/// One label change made by [`inject_bias`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flip {
    pub index: usize,
    pub job_id: String,
    pub resume_id: String,
    pub side: String,
    pub from: u8,
    pub to: u8,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlipManifest {
    pub rate: f64,
    pub seed: u64,
    pub flips: Vec<Flip>,
}

fn side_of(app: &Application, i: usize) -> Result<&str> {
    match app.side.as_deref() {
        Some(s @ (FEMALE | MALE)) => Ok(s),
        Some(other) => Err(Error::Validation(format!(
            "record {i} ({}/{}): side {other:?} is not {FEMALE:?} or {MALE:?}",
            app.job_id, app.resume_id
        ))),
        None => Err(Error::Validation(format!(
            "record {i} ({}/{}): missing side feature",
            app.job_id, app.resume_id
        ))),
    }
}

/// Relabels `⌊rate·n⌋` of the female positives as negative and `⌊rate·n⌋` of
/// the male negatives as positive, chosen uniformly under `seed`.
pub fn inject_bias(
    records: &[Application],
    rate: f64,
    seed: u64,
) -> Result<(Vec<Application>, FlipManifest)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("flip rate {rate} outside [0, 1]")));
    }
    let mut female_pos = Vec::new();
    let mut male_neg = Vec::new();
    for (i, app) in records.iter().enumerate() {
        match (side_of(app, i)?, app.label) {
            (FEMALE, 1) => female_pos.push(i),
            (MALE, 0) => male_neg.push(i),
            _ => {}
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = Vec::new();
    for group in [&female_pos, &male_neg] {
        let k = (rate * group.len() as f64).floor() as usize;
        chosen.extend(
            index::sample(&mut rng, group.len(), k)
                .into_iter()
                .map(|j| group[j]),
        );
    }
    chosen.sort_unstable();
    let mut out = records.to_vec();
    let flips = chosen
        .into_iter()
        .map(|i| {
            let app = &mut out[i];
            let from = app.label;
            app.label = 1 - from;
            Flip {
                index: i,
                job_id: app.job_id.clone(),
                resume_id: app.resume_id.clone(),
                side: app.side.clone().unwrap_or_default(),
                from,
                to: app.label,
            }
        })
        .collect();
    Ok((out, FlipManifest { rate, seed, flips }))
}

/// Downsamples so that all four (side, label) cells have the size of the
/// smallest one. Order is preserved.
pub fn balance_by_side(records: &[Application], seed: u64) -> Result<Vec<Application>> {
    let mut cells: BTreeMap<(&str, u8), Vec<usize>> = BTreeMap::new();
    for side in [FEMALE, MALE] {
        for label in [0, 1] {
            cells.insert((side, label), Vec::new());
        }
    }
    for (i, app) in records.iter().enumerate() {
        cells
            .get_mut(&(side_of(app, i)?, app.label))
            .expect("all cells present")
            .push(i);
    }
    let n = cells.values().map(Vec::len).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; records.len()];
    for members in cells.values() {
        for j in index::sample(&mut rng, members.len(), n) {
            keep[members[j]] = true;
        }
    }
    Ok(records
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(a, _)| a.clone())
        .collect())
}

/// Fraction of positive labels per side value.
pub fn success_rate(records: &[Application], side: &str) -> Option<f64> {
    let group: Vec<_> = records
        .iter()
        .filter(|a| a.side.as_deref() == Some(side))
        .collect();
    if group.is_empty() {
        return None;
    }
    Some(group.iter().filter(|a| a.label == 1).count() as f64 / group.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn app(job: &str, resume: usize, label: u8, side: Option<&str>) -> Application {
        Application {
            job_id: job.into(),
            resume_id: format!("r{resume}"),
            requirements: vec![vec!["x".into()]],
            experiences: vec![vec!["y".into()]],
            label,
            side: side.map(String::from),
        }
    }

    fn posting(job: &str, pos: usize, neg: usize) -> Vec<Application> {
        (0..pos + neg)
            .map(|i| app(job, i, u8::from(i < pos), None))
            .collect()
    }

    #[test]
    fn undersample_examples() {
        let mut corpus = posting("a", 3, 10);
        corpus.extend(posting("b", 2, 1));
        corpus.extend(posting("c", 0, 5));
        let out = undersample(&corpus, 11);
        let count = |job: &str, label: u8| {
            out.iter()
                .filter(|a| a.job_id == job && a.label == label)
                .count()
        };
        assert_eq!((count("a", 1), count("a", 0)), (3, 3));
        assert_eq!((count("b", 1), count("b", 0)), (2, 1));
        assert_eq!((count("c", 1), count("c", 0)), (0, 0));
        assert_eq!(undersample(&corpus, 11), out);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let data: Vec<u32> = (0..10).collect();
        let spec = SplitSpec::new(0.8, 0.1, 0.1, 3).unwrap();
        let (a, b, c) = split(&data, &spec).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        assert_eq!(split(&data, &spec).unwrap(), (a, b, c));

        let spec = SplitSpec::parse("40/10/50", 3).unwrap();
        let (a, b, c) = split(&(0..100).collect::<Vec<u32>>(), &spec).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (40, 10, 50));

        assert!(SplitSpec::new(0.8, 0.3, 0.1, 0).is_err());
        assert!(SplitSpec::new(0.9, 0.1, 0.0, 0).is_err());
        assert!(SplitSpec::parse("80/20", 0).is_err());
    }

    fn balanced(per_cell: usize) -> Vec<Application> {
        let mut out = Vec::new();
        for side in [FEMALE, MALE] {
            for label in [0, 1] {
                for i in 0..per_cell {
                    out.push(app("j", out.len() + i, label, Some(side)));
                }
            }
        }
        out
    }

    #[test]
    fn bias_injection_rates() {
        let corpus = balanced(100);
        let (out, manifest) = inject_bias(&corpus, 0.5, 5).unwrap();
        let count = |side: &str, from: u8| {
            manifest
                .flips
                .iter()
                .filter(|f| f.side == side && f.from == from)
                .count()
        };
        assert_eq!(count(FEMALE, 1), 50);
        assert_eq!(count(MALE, 0), 50);
        assert_eq!(manifest.flips.len(), 100);
        assert_eq!(success_rate(&out, MALE), Some(0.75));
        assert_eq!(success_rate(&out, FEMALE), Some(0.25));
        for (i, (a, b)) in corpus.iter().zip(&out).enumerate() {
            let flipped = manifest.flips.iter().any(|f| f.index == i);
            assert_eq!(a.label != b.label, flipped);
        }
    }

    #[test]
    fn bias_injection_edge_cases() {
        let corpus = balanced(3);
        let (out, manifest) = inject_bias(&corpus, 0.0, 1).unwrap();
        assert_eq!(out, corpus);
        assert!(manifest.flips.is_empty());
        let mut missing = corpus.clone();
        missing[2].side = None;
        assert!(matches!(
            inject_bias(&missing, 0.5, 1),
            Err(Error::Validation(_))
        ));
        assert!(inject_bias(&corpus, 1.5, 1).is_err());
    }

    #[test]
    fn balancing_equalizes_cells() {
        let mut corpus = balanced(4);
        corpus.push(app("j", 99, 1, Some(MALE)));
        let out = balance_by_side(&corpus, 2).unwrap();
        assert_eq!(out.len(), 16);
        assert_eq!(success_rate(&out, MALE), Some(0.5));
    }

    proptest! {
        #[test]
        fn undersample_only_drops(labels in prop::collection::vec((0u8..4, 0u8..2), 0..60), seed: u64) {
            let corpus: Vec<Application> = labels
                .iter()
                .enumerate()
                .map(|(i, &(j, l))| app(&format!("j{j}"), i, l, None))
                .collect();
            let out = undersample(&corpus, seed);
            let mut it = corpus.iter();
            for a in &out {
                prop_assert!(it.any(|b| b == a));
            }
            let pos = |v: &[Application]| v.iter().filter(|a| a.label == 1).count();
            prop_assert_eq!(pos(&out), pos(&corpus));
            prop_assert!(out.len() <= 2 * pos(&corpus));
        }

        #[test]
        fn split_partitions(n in 0usize..200, seed: u64) {
            let data: Vec<usize> = (0..n).collect();
            let (a, b, c) = split(&data, &SplitSpec::new(0.6, 0.2, 0.2, seed).unwrap()).unwrap();
            let mut all: Vec<usize> = a.into_iter().chain(b).chain(c).collect();
            all.sort_unstable();
            prop_assert_eq!(all, data);
        }
    }
}
