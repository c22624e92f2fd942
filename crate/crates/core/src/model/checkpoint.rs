//! Checkpoint directory layout:
//!
//! ```text
//! manifest.txt   format line, model config, one line per parameter
//! params.bin     every parameter as little-endian f32, in manifest order
//! vocab.txt      the vocabulary, one token per line
//! ```
//!
//! Manifest parameter lines read `param <name> <dims joined by x> f32 <byte offset>`.

use std::fs;
use std::path::Path;

use apjfnn_autograd::Tensor;

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::params::ModelParams;

pub const FORMAT_LINE: &str = "format apjfnn-checkpoint 1";
pub const MANIFEST: &str = "manifest.txt";
pub const PARAMS: &str = "params.bin";
pub const VOCAB: &str = "vocab.txt";

pub fn save_checkpoint(dir: &Path, params: &ModelParams<f32>, vocab: &Vocabulary) -> Result<()> {
    if vocab.len() != params.config.vocab_size {
        return Err(Error::Config(format!(
            "vocabulary has {} entries, model expects {}",
            vocab.len(),
            params.config.vocab_size
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = format!(
        "{FORMAT_LINE}\nconfig {}\n",
        serde_json::to_string(&params.config)?
    );
    let mut blob = Vec::with_capacity(params.store.num_scalars() * 4);
    for (_, name, t) in params.store.iter() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        manifest.push_str(&format!(
            "param {name} {} f32 {}\n",
            dims.join("x"),
            blob.len()
        ));
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(p, e))
    };
    write(MANIFEST, manifest.as_bytes())?;
    write(PARAMS, &blob)?;
    vocab.save(&dir.join(VOCAB))
}

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: format!("{MANIFEST}: {}", message.into()),
    }
}

pub fn load_checkpoint(dir: &Path) -> Result<(ModelParams<f32>, Vocabulary)> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let ppath = dir.join(PARAMS);
    let blob = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, FORMAT_LINE)) => {}
        other => {
            return Err(bad(
                1,
                format!(
                    "expected {FORMAT_LINE:?}, found {:?}",
                    other.map(|(_, l)| l)
                ),
            ))
        }
    }
    let config: ModelConfig = match lines.next() {
        Some((_, l)) if l.starts_with("config ") => {
            serde_json::from_str(&l["config ".len()..]).map_err(|e| bad(2, e.to_string()))?
        }
        _ => return Err(bad(2, "missing config line")),
    };
    let mut values = Vec::new();
    let mut expected_offset = 0;
    for (i, line) in lines {
        let n = i + 1;
        let fields: Vec<&str> = line.split(' ').collect();
        let ["param", name, dims, "f32", offset] = fields[..] else {
            return Err(bad(n, format!("malformed parameter line {line:?}")));
        };
        let shape: Vec<usize> = dims
            .split('x')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(n, format!("{name}: shape {dims:?}: {e}")))?;
        let offset: usize = offset
            .parse()
            .map_err(|e| bad(n, format!("{name}: offset: {e}")))?;
        let count: usize = shape.iter().product();
        if offset != expected_offset || offset + 4 * count > blob.len() {
            return Err(bad(
                n,
                format!(
                    "{name}: offset {offset} inconsistent with {PARAMS} of {} bytes",
                    blob.len()
                ),
            ));
        }
        let data = blob[offset..offset + 4 * count]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        values.push((name.to_owned(), Tensor::new(shape, data)?));
        expected_offset = offset + 4 * count;
    }
    if expected_offset != blob.len() {
        return Err(Error::Config(format!(
            "{PARAMS} has {} bytes, manifest describes {expected_offset}",
            blob.len()
        )));
    }
    let params = ModelParams::from_values(config, values)?;
    let vocab = Vocabulary::load(&dir.join(VOCAB))?;
    if vocab.len() != params.config.vocab_size {
        return Err(Error::Config(format!(
            "checkpoint vocabulary has {} entries, model expects {}",
            vocab.len(),
            params.config.vocab_size
        )));
    }
    Ok((params, vocab))
}
