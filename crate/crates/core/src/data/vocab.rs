use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::data::corpus::Application;
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ id map. Ids 0 and 1 are reserved for padding and unknown words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

/// An [`Application`] with every token replaced by its vocabulary id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedApplication {
    pub job_id: String,
    pub resume_id: String,
    pub requirements: Vec<Vec<u32>>,
    pub experiences: Vec<Vec<u32>>,
    pub label: u8,
    pub side: Option<String>,
}

impl Vocabulary {
    /// Keeps tokens seen at least `min_count` times across requirements and
    /// experiences. Ids follow (frequency desc, token asc).
    pub fn build(corpus: &[Application], min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for app in corpus {
            for tok in app.requirements.iter().chain(&app.experiences).flatten() {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count && t != PAD_TOKEN && t != UNK_TOKEN)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Ok(Self::from_tokens(
            kept.into_iter().map(|(t, _)| t.to_owned()),
        ))
    }

    /// Vocabulary from non-reserved tokens in id order (ids start at 2).
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut all = vec![PAD_TOKEN.to_owned(), UNK_TOKEN.to_owned()];
        all.extend(tokens);
        let index = all
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens: all, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, app: &Application) -> EncodedApplication {
        let enc = |docs: &[Vec<String>]| -> Vec<Vec<u32>> {
            docs.iter()
                .map(|d| d.iter().map(|t| self.id(t)).collect())
                .collect()
        };
        EncodedApplication {
            job_id: app.job_id.clone(),
            resume_id: app.resume_id.clone(),
            requirements: enc(&app.requirements),
            experiences: enc(&app.experiences),
            label: app.label,
            side: app.side.clone(),
        }
    }

    pub fn encode_all(&self, apps: &[Application]) -> Vec<EncodedApplication> {
        apps.iter().map(|a| self.encode(a)).collect()
    }

    /// One token per line, in id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<&str> = text.lines().collect();
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(Error::Config(format!(
                "{}: vocabulary must start with {PAD_TOKEN} and {UNK_TOKEN}",
                path.display()
            )));
        }
        Ok(Self::from_tokens(tokens[2..].iter().map(|t| t.to_string())))
    }
}
