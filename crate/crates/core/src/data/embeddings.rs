//! Pre-trained word vectors in word2vec text format:
//!
//! ```text
//! 3 4
//! python 0.1 0.2 0.3 0.4
//! ...
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use apjfnn_autograd::{Real, Tensor};
use rand::Rng;

use crate::data::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::training::init::glorot_bound;

/// Initial embedding matrix for a vocabulary.
#[derive(Clone, Debug)]
pub struct LoadedEmbeddings<T> {
    /// `[vocab × dim]`.
    pub table: Tensor<T>,
    /// Vocabulary rows copied from the file.
    pub matched: usize,
    /// Non-padding rows that were randomly initialized.
    pub random_rows: usize,
    pub warnings: Vec<String>,
}

/// Reads every vector in a word2vec text stream. Later duplicates replace
/// earlier ones and produce a warning.
pub fn read_vectors<R: BufRead>(
    reader: R,
    expected_dim: usize,
) -> Result<(HashMap<String, Vec<f64>>, Vec<String>)> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((i, line)) => {
                let line = line.map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                if !line.trim().is_empty() {
                    break (i + 1, line);
                }
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing \"count dim\" header".into(),
                })
            }
        }
    };
    let fields: Vec<&str> = header.1.split_whitespace().collect();
    let parsed: Option<(usize, usize)> = match fields.as_slice() {
        [c, d] => c.parse().ok().zip(d.parse().ok()),
        _ => None,
    };
    let Some((_, dim)) = parsed else {
        return Err(Error::Parse {
            line: header.0,
            message: format!("bad header {:?}", header.1),
        });
    };
    if dim != expected_dim {
        return Err(Error::Config(format!(
            "embedding file has dimension {dim}, model expects {expected_dim}"
        )));
    }

    let mut vectors = HashMap::new();
    let mut warnings = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-blank line");
        let values: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| Error::Parse {
            line: lineno,
            message: format!("{token}: {e}"),
        })?;
        if values.len() != dim {
            return Err(Error::Parse {
                line: lineno,
                message: format!("{token}: {} values, expected {dim}", values.len()),
            });
        }
        if vectors.insert(token.to_owned(), values).is_some() {
            let msg =
                format!("line {lineno}: duplicate vector for {token:?}, keeping the later one");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok((vectors, warnings))
}

/// Builds the initial `W_e`. Rows found in the file are copied, the padding
/// row is zero, and every other row is drawn from the Glorot uniform range.
pub fn load_embeddings<T: Real, R: Rng + ?Sized>(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<LoadedEmbeddings<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (vectors, warnings) = read_vectors(BufReader::new(file), dim)?;
    embeddings_from_vectors(&vectors, warnings, vocab, dim, rng)
}

pub fn embeddings_from_vectors<T: Real, R: Rng + ?Sized>(
    vectors: &HashMap<String, Vec<f64>>,
    warnings: Vec<String>,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<LoadedEmbeddings<T>> {
    let bound = glorot_bound(&[vocab.len(), dim])?;
    let mut data = Vec::with_capacity(vocab.len() * dim);
    let (mut matched, mut random_rows) = (0, 0);
    for (id, token) in vocab.tokens().iter().enumerate() {
        if id as u32 == PAD {
            data.extend(std::iter::repeat_n(T::zero(), dim));
        } else if let Some(v) = vectors.get(token) {
            matched += 1;
            data.extend(v.iter().map(|&x| T::c(x)));
        } else {
            random_rows += 1;
            data.extend((0..dim).map(|_| T::c(rng.gen_range(-bound..=bound))));
        }
    }
    Ok(LoadedEmbeddings {
        table: Tensor::new(vec![vocab.len(), dim], data)?,
        matched,
        random_rows,
        warnings,
    })
}
