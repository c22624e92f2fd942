use serde::{Deserialize, Serialize};

use crate::data::vocab::{EncodedApplication, PAD};
use crate::error::{Error, Result};

/// Truncation limits for postings and resumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub requirements: usize,
    pub experiences: usize,
    pub requirement_words: usize,
    pub experience_words: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            requirements: 15,
            experiences: 15,
            requirement_words: 30,
            experience_words: 300,
        }
    }
}

impl Caps {
    pub fn validate(&self) -> Result<()> {
        if self.requirements == 0
            || self.experiences == 0
            || self.requirement_words == 0
            || self.experience_words == 0
        {
            return Err(Error::Config(format!("caps must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Keeps the leading items and words within the caps. Idempotent.
    pub fn truncate(&self, app: &EncodedApplication) -> EncodedApplication {
        let cut = |docs: &[Vec<u32>], n: usize, words: usize| -> Vec<Vec<u32>> {
            docs.iter()
                .take(n)
                .map(|d| d[..d.len().min(words)].to_vec())
                .collect()
        };
        EncodedApplication {
            requirements: cut(&app.requirements, self.requirements, self.requirement_words),
            experiences: cut(&app.experiences, self.experiences, self.experience_words),
            ..app.clone()
        }
    }
}

/// A list of token sequences padded to `slots × words`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedDoc {
    pub tokens: Vec<Vec<u32>>,
    /// `word_mask[k][t]` is true for real tokens.
    pub word_mask: Vec<Vec<bool>>,
    /// `slot_mask[k]` is true for real requirements / experiences.
    pub slot_mask: Vec<bool>,
}

impl PaddedDoc {
    pub fn pad(docs: &[Vec<u32>], slots: usize, words: usize) -> Self {
        assert!(
            docs.len() <= slots && docs.iter().all(|d| d.len() <= words),
            "pad target too small"
        );
        let mut tokens = Vec::with_capacity(slots);
        let mut word_mask = Vec::with_capacity(slots);
        for k in 0..slots {
            let doc = docs.get(k).map(Vec::as_slice).unwrap_or(&[]);
            let mut t = doc.to_vec();
            t.resize(words, PAD);
            tokens.push(t);
            word_mask.push((0..words).map(|i| i < doc.len()).collect());
        }
        let slot_mask = (0..slots).map(|k| k < docs.len()).collect();
        Self {
            tokens,
            word_mask,
            slot_mask,
        }
    }

    pub fn slots(&self) -> usize {
        self.slot_mask.len()
    }

    pub fn words(&self) -> usize {
        self.tokens.first().map_or(0, Vec::len)
    }

    pub fn real_slots(&self) -> usize {
        self.slot_mask.iter().filter(|&&m| m).count()
    }

    /// Real token ids of slot `k`.
    pub fn real_tokens(&self, k: usize) -> Vec<u32> {
        self.tokens[k]
            .iter()
            .zip(&self.word_mask[k])
            .filter(|(_, &m)| m)
            .map(|(&t, _)| t)
            .collect()
    }

    /// Drops the padding again.
    pub fn unpad(&self) -> Vec<Vec<u32>> {
        (0..self.slots())
            .filter(|&k| self.slot_mask[k])
            .map(|k| self.real_tokens(k))
            .collect()
    }
}

/// One model input after truncation and padding.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub job: PaddedDoc,
    pub resume: PaddedDoc,
    pub side: Option<String>,
    pub label: u8,
}

/// Truncates and pads a single application to its own extents.
pub fn truncate_pad(app: &EncodedApplication, caps: &Caps) -> Sample {
    Batch::new(std::slice::from_ref(app), caps)
        .samples
        .pop()
        .expect("one sample")
}

/// Samples padded to the largest extents within the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub samples: Vec<Sample>,
}

impl Batch {
    pub fn new(apps: &[EncodedApplication], caps: &Caps) -> Self {
        let cut: Vec<EncodedApplication> = apps.iter().map(|a| caps.truncate(a)).collect();
        let extent = |f: fn(&EncodedApplication) -> &Vec<Vec<u32>>| {
            let slots = cut.iter().map(|a| f(a).len()).max().unwrap_or(0);
            let words = cut
                .iter()
                .flat_map(|a| f(a).iter().map(Vec::len))
                .max()
                .unwrap_or(0);
            (slots, words)
        };
        let (rs, rw) = extent(|a| &a.requirements);
        let (es, ew) = extent(|a| &a.experiences);
        let samples = cut
            .iter()
            .map(|a| Sample {
                job: PaddedDoc::pad(&a.requirements, rs, rw),
                resume: PaddedDoc::pad(&a.experiences, es, ew),
                side: a.side.clone(),
                label: a.label,
            })
            .collect();
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn enc(reqs: Vec<Vec<u32>>, exps: Vec<Vec<u32>>) -> EncodedApplication {
        EncodedApplication {
            job_id: "j".into(),
            resume_id: "r".into(),
            requirements: reqs,
            experiences: exps,
            label: 1,
            side: None,
        }
    }

    #[test]
    fn long_requirement_is_cut_to_thirty_words() {
        let app = enc(vec![(2..42).collect()], vec![vec![2]]);
        let s = truncate_pad(&app, &Caps::default());
        assert_eq!(s.job.words(), 30);
        assert_eq!(s.job.word_mask[0].iter().filter(|&&m| m).count(), 30);
        assert_eq!(s.job.tokens[0], (2..32).collect::<Vec<u32>>());
    }

    #[test]
    fn boundary_experience_is_unchanged() {
        let exp: Vec<u32> = (0..300).map(|i| 2 + i % 7).collect();
        let app = enc(vec![vec![2]; 3], vec![exp.clone()]);
        let s = truncate_pad(&app, &Caps::default());
        assert_eq!(s.resume.unpad(), vec![exp]);
        assert_eq!(s.job.unpad(), vec![vec![2]; 3]);
        assert_eq!(Caps::default().truncate(&app), app);
    }

    #[test]
    fn batch_pads_to_largest_extent() {
        let a = enc(vec![vec![2, 3]], vec![vec![4]]);
        let b = enc(vec![vec![5], vec![6, 7, 8]], vec![vec![9, 10]]);
        let batch = Batch::new(&[a.clone(), b], &Caps::default());
        let s = &batch.samples[0];
        assert_eq!(s.job.slot_mask, vec![true, false]);
        assert_eq!(s.job.tokens, vec![vec![2, 3, PAD], vec![PAD; 3]]);
        assert_eq!(s.resume.word_mask, vec![vec![true, false]]);
        assert_eq!(s.job.unpad(), a.requirements);
    }

    #[test]
    fn zero_caps_rejected() {
        assert!(Caps {
            requirements: 0,
            ..Caps::default()
        }
        .validate()
        .is_err());
        assert!(Caps::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn truncate_is_idempotent(
            reqs in prop::collection::vec(prop::collection::vec(2u32..50, 1..12), 1..8),
            exps in prop::collection::vec(prop::collection::vec(2u32..50, 1..12), 1..8),
            r in 1usize..6, w in 1usize..8,
        ) {
            let caps = Caps { requirements: r, experiences: r, requirement_words: w, experience_words: w };
            let app = enc(reqs, exps);
            let once = caps.truncate(&app);
            prop_assert_eq!(caps.truncate(&once), once.clone());
            let s = truncate_pad(&app, &caps);
            prop_assert_eq!(s.job.unpad(), once.requirements);
            prop_assert_eq!(s.resume.unpad(), once.experiences);
        }
    }
}
