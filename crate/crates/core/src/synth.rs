//! Seeded synthetic postings and resumes with planted skills.
//!
//! Every requirement carries exactly one skill token inside filler words.
//! Each application is either "qualified" (covers each required skill with
//! probability `rho_hi`) or not (`rho_lo`). Resumes also mention a few
//! distractor skills the posting does not ask for. With `distractor_fill`
//! raised towards 1, uncovered requirements are replaced by distractors so
//! that the number of skill tokens stops predicting the label and only
//! matching does.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::corpus::{write_corpus, Application};
use crate::data::sampling::{FEMALE, MALE};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub postings: usize,
    pub applications_per_posting: usize,
    pub skill_universe: usize,
    pub min_requirements: usize,
    pub max_requirements: usize,
    /// Fraction of required skills a resume must cover for a positive label.
    pub tau: f64,
    /// Probability that an application is drawn as qualified.
    pub qualified_fraction: f64,
    pub rho_hi: f64,
    pub rho_lo: f64,
    /// Share of the uncovered requirements that are replaced by distractor
    /// skills. At 1 the number of skill tokens carries no label information.
    pub distractor_fill: f64,
    /// Extra distractor skills per resume, uniform in `0..=max_extra_distractors`.
    pub max_extra_distractors: usize,
    pub min_experiences: usize,
    pub max_experiences: usize,
    /// Words per requirement, skill token included.
    pub min_requirement_words: usize,
    pub max_requirement_words: usize,
    /// Filler words per experience, skill tokens excluded.
    pub min_experience_words: usize,
    pub max_experience_words: usize,
    pub filler_vocab: usize,
    /// Probability that a label is flipped after the rule is applied.
    pub noise: f64,
    pub female_prob: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            postings: 200,
            applications_per_posting: 40,
            skill_universe: 60,
            min_requirements: 4,
            max_requirements: 8,
            tau: 0.6,
            qualified_fraction: 0.5,
            rho_hi: 0.9,
            rho_lo: 0.25,
            distractor_fill: 0.0,
            max_extra_distractors: 2,
            min_experiences: 3,
            max_experiences: 5,
            min_requirement_words: 6,
            max_requirement_words: 12,
            min_experience_words: 10,
            max_experience_words: 24,
            filler_vocab: 400,
            noise: 0.05,
            female_prob: 0.5,
            seed: 7,
        }
    }
}

fn prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("postings", self.postings),
            ("applications_per_posting", self.applications_per_posting),
            ("skill_universe", self.skill_universe),
            ("min_requirements", self.min_requirements),
            ("min_experiences", self.min_experiences),
            ("min_requirement_words", self.min_requirement_words),
            ("min_experience_words", self.min_experience_words),
            ("filler_vocab", self.filler_vocab),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, c)| *c == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        let ranges = [
            ("requirements", self.min_requirements, self.max_requirements),
            ("experiences", self.min_experiences, self.max_experiences),
            (
                "requirement words",
                self.min_requirement_words,
                self.max_requirement_words,
            ),
            (
                "experience words",
                self.min_experience_words,
                self.max_experience_words,
            ),
        ];
        if let Some((name, lo, hi)) = ranges.iter().find(|(_, lo, hi)| lo > hi) {
            return Err(Error::Config(format!(
                "{name}: minimum {lo} exceeds maximum {hi}"
            )));
        }
        if self.max_requirements > self.skill_universe {
            return Err(Error::Config(format!(
                "{} skills per posting exceed the universe of {}",
                self.max_requirements, self.skill_universe
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau = {} outside (0, 1]", self.tau)));
        }
        prob("qualified_fraction", self.qualified_fraction)?;
        prob("rho_hi", self.rho_hi)?;
        prob("rho_lo", self.rho_lo)?;
        prob("noise", self.noise)?;
        prob("distractor_fill", self.distractor_fill)?;
        prob("female_prob", self.female_prob)
    }

    /// Covered skills needed for a positive label with `k` requirements.
    pub fn needed(&self, k: usize) -> usize {
        // guard against 0.6 * 5 = 3.0000000000000004
        ((self.tau * k as f64) - 1e-9).ceil().max(0.0) as usize
    }
}

pub fn skill_token(i: usize) -> String {
    format!("skill{i:02}")
}

pub fn filler_token(i: usize) -> String {
    format!("w{i:04}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostingTruth {
    pub job_id: String,
    /// Skill token of requirement `k`.
    pub requirement_skills: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApplicationTruth {
    pub job_id: String,
    pub resume_id: String,
    pub qualified: bool,
    /// Required skills mentioned in the resume.
    pub covered: Vec<String>,
    /// Skills mentioned in the resume that the posting does not require.
    pub distractors: Vec<String>,
    pub clean_label: u8,
    pub label: u8,
}

/// Ground truth written next to a generated corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: GeneratorConfig,
    pub skill_tokens: Vec<String>,
    pub postings: Vec<PostingTruth>,
    pub applications: Vec<ApplicationTruth>,
}

impl GroundTruth {
    pub fn posting(&self, job_id: &str) -> Option<&PostingTruth> {
        self.postings.iter().find(|p| p.job_id == job_id)
    }

    pub fn is_skill(&self, token: &str) -> bool {
        self.skill_tokens.iter().any(|s| s == token)
    }

    /// Label implied by the coverage rule, before noise.
    pub fn rule_label(&self, app: &ApplicationTruth) -> Option<u8> {
        let k = self.posting(&app.job_id)?.requirement_skills.len();
        Some(u8::from(app.covered.len() >= self.config.needed(k)))
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub applications: Vec<Application>,
    pub truth: GroundTruth,
}

fn words(rng: &mut ChaCha8Rng, n: usize, vocab: usize) -> Vec<String> {
    (0..n)
        .map(|_| filler_token(rng.gen_range(0..vocab)))
        .collect()
}

pub fn generate(cfg: &GeneratorConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let skills: Vec<String> = (0..cfg.skill_universe).map(skill_token).collect();
    let mut applications = Vec::with_capacity(cfg.postings * cfg.applications_per_posting);
    let mut postings = Vec::with_capacity(cfg.postings);
    let mut truths = Vec::with_capacity(applications.capacity());

    for p in 0..cfg.postings {
        let job_id = format!("j{p:04}");
        let k = rng.gen_range(cfg.min_requirements..=cfg.max_requirements);
        let required: Vec<usize> = index::sample(&mut rng, cfg.skill_universe, k).into_vec();
        let requirements: Vec<Vec<String>> = required
            .iter()
            .map(|&s| {
                let n = rng.gen_range(cfg.min_requirement_words..=cfg.max_requirement_words);
                let mut r = words(&mut rng, n - 1, cfg.filler_vocab);
                r.insert(rng.gen_range(0..n), skills[s].clone());
                r
            })
            .collect();
        let required_set: BTreeSet<usize> = required.iter().copied().collect();
        let others: Vec<usize> = (0..cfg.skill_universe)
            .filter(|s| !required_set.contains(s))
            .collect();

        for a in 0..cfg.applications_per_posting {
            let qualified = rng.gen_bool(cfg.qualified_fraction);
            let rho = if qualified { cfg.rho_hi } else { cfg.rho_lo };
            let covered: Vec<usize> = required
                .iter()
                .copied()
                .filter(|_| rng.gen_bool(rho))
                .collect();
            let extra = rng.gen_range(0..=cfg.max_extra_distractors);
            let fill = (cfg.distractor_fill * (k - covered.len()) as f64).round() as usize;
            let n_distract = (fill + extra).min(others.len());
            let distractors: Vec<usize> = index::sample(&mut rng, others.len(), n_distract)
                .into_iter()
                .map(|i| others[i])
                .collect();

            let q = rng.gen_range(cfg.min_experiences..=cfg.max_experiences);
            let mut experiences: Vec<Vec<String>> = (0..q)
                .map(|_| {
                    let n = rng.gen_range(cfg.min_experience_words..=cfg.max_experience_words);
                    words(&mut rng, n, cfg.filler_vocab)
                })
                .collect();
            for &s in covered.iter().chain(&distractors) {
                let e = &mut experiences[rng.gen_range(0..q)];
                let at = rng.gen_range(0..=e.len());
                e.insert(at, skills[s].clone());
            }

            let clean_label = u8::from(covered.len() >= cfg.needed(k));
            let label = if rng.gen_bool(cfg.noise) {
                1 - clean_label
            } else {
                clean_label
            };
            let side = if rng.gen_bool(cfg.female_prob) {
                FEMALE
            } else {
                MALE
            };
            let resume_id = format!("r{p:04}-{a:02}");
            truths.push(ApplicationTruth {
                job_id: job_id.clone(),
                resume_id: resume_id.clone(),
                qualified,
                covered: covered.iter().map(|&s| skills[s].clone()).collect(),
                distractors: distractors.iter().map(|&s| skills[s].clone()).collect(),
                clean_label,
                label,
            });
            applications.push(Application {
                job_id: job_id.clone(),
                resume_id,
                requirements: requirements.clone(),
                experiences,
                label,
                side: Some(side.to_owned()),
            });
        }
        postings.push(PostingTruth {
            job_id,
            requirement_skills: required.iter().map(|&s| skills[s].clone()).collect(),
        });
    }
    Ok(SynthCorpus {
        applications,
        truth: GroundTruth {
            config: cfg.clone(),
            skill_tokens: skills,
            postings,
            applications: truths,
        },
    })
}

/// Writes `corpus.jsonl` and `truth.json` into `dir`.
pub fn write_synth(dir: &Path, corpus: &SynthCorpus) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_corpus(&dir.join("corpus.jsonl"), &corpus.applications)?;
    let p = dir.join("truth.json");
    fs::write(&p, serde_json::to_string_pretty(&corpus.truth)?).map_err(|e| Error::io(p, e))
}

pub fn load_truth(path: &Path) -> Result<GroundTruth> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// `P(Binomial(k, rho) ≥ m)`.
fn binomial_tail(k: usize, rho: f64, m: usize) -> f64 {
    let mut total = 0.0;
    let mut choose = 1.0;
    for i in 0..=k {
        if i > 0 {
            choose *= (k - i + 1) as f64 / i as f64;
        }
        if i >= m {
            total += choose * rho.powi(i as i32) * (1.0 - rho).powi((k - i) as i32);
        }
    }
    total
}

/// Expected fraction of positive labels under the generator's own
/// distributions, noise included.
pub fn analytic_positive_rate(cfg: &GeneratorConfig) -> f64 {
    let ks = cfg.min_requirements..=cfg.max_requirements;
    let n = ks.clone().count() as f64;
    let clean: f64 = ks
        .map(|k| {
            let m = cfg.needed(k);
            cfg.qualified_fraction * binomial_tail(k, cfg.rho_hi, m)
                + (1.0 - cfg.qualified_fraction) * binomial_tail(k, cfg.rho_lo, m)
        })
        .sum::<f64>()
        / n;
    clean * (1.0 - cfg.noise) + (1.0 - clean) * cfg.noise
}
