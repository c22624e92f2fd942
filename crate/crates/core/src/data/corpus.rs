//! Line-delimited JSON corpus: one application per line.
//!
//! ```text
//! {"job_id":"j1","resume_id":"r9","requirements":["python data mining", "..."],
//!  "experiences":["built ...", "..."],"label":1,"side":"female"}
//! ```
//!
//! Requirement and experience strings are pre-segmented; tokens are
//! separated by single spaces.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labeled (posting, resume) pair with whitespace tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Application {
    pub job_id: String,
    pub resume_id: String,
    pub requirements: Vec<Vec<String>>,
    pub experiences: Vec<Vec<String>>,
    /// 1 for a successful application.
    pub label: u8,
    pub side: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    job_id: String,
    resume_id: String,
    requirements: Vec<String>,
    experiences: Vec<String>,
    #[serde(default)]
    label: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    side: Option<String>,
}

/// Splits pre-segmented text on single spaces, dropping empty pieces.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

fn tokenize_all(field: &str, items: &[String]) -> std::result::Result<Vec<Vec<String>>, String> {
    if items.is_empty() {
        return Err(format!("{field} list is empty"));
    }
    items
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let toks = tokenize(s);
            if toks.is_empty() {
                Err(format!("{field} {i} is empty"))
            } else {
                Ok(toks)
            }
        })
        .collect()
}

fn from_record(rec: Record, require_label: bool) -> std::result::Result<Application, String> {
    let label = match rec.label {
        Some(l @ (0 | 1)) => l,
        Some(other) => return Err(format!("label must be 0 or 1, got {other}")),
        None if require_label => return Err("missing label".into()),
        None => 0,
    };
    Ok(Application {
        requirements: tokenize_all("requirement", &rec.requirements)?,
        experiences: tokenize_all("experience", &rec.experiences)?,
        job_id: rec.job_id,
        resume_id: rec.resume_id,
        label,
        side: rec.side,
    })
}

/// Parses one corpus line. Without `require_label` a missing label reads as 0.
pub fn parse_application(
    line: &str,
    require_label: bool,
) -> std::result::Result<Application, String> {
    let rec: Record = serde_json::from_str(line).map_err(|e| e.to_string())?;
    from_record(rec, require_label)
}

pub fn application_to_json(app: &Application) -> String {
    let rec = Record {
        job_id: app.job_id.clone(),
        resume_id: app.resume_id.clone(),
        requirements: app.requirements.iter().map(|r| r.join(" ")).collect(),
        experiences: app.experiences.iter().map(|r| r.join(" ")).collect(),
        label: Some(app.label),
        side: app.side.clone(),
    };
    serde_json::to_string(&rec).expect("record serializes")
}

/// Reads every application of a corpus file. Blank lines are skipped; the
/// first malformed record aborts with its 1-based line number.
pub fn load_corpus(path: &Path) -> Result<Vec<Application>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), path)
}

/// Like [`load_corpus`], but labels may be absent (they read as 0).
pub fn load_unlabeled(path: &Path) -> Result<Vec<Application>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(BufReader::new(file), path, false)
}

pub fn read_corpus<R: BufRead>(reader: R, path: &Path) -> Result<Vec<Application>> {
    read_records(reader, path, true)
}

fn read_records<R: BufRead>(
    reader: R,
    path: &Path,
    require_label: bool,
) -> Result<Vec<Application>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let app = parse_application(&line, require_label).map_err(|message| Error::Parse {
            line: i + 1,
            message,
        })?;
        out.push(app);
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, apps: &[Application]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for app in apps {
        writeln!(w, "{}", application_to_json(app)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn read(text: &str) -> Result<Vec<Application>> {
        read_corpus(Cursor::new(text), Path::new("mem"))
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        assert!(read("").unwrap().is_empty());
    }

    #[test]
    fn single_record_echoes_fields() {
        let line = r#"{"job_id":"j1","resume_id":"r1","requirements":["know  rust","sql"],"experiences":["wrote rust code"],"label":1,"side":"female"}"#;
        let apps = read(line).unwrap();
        assert_eq!(apps.len(), 1);
        let a = &apps[0];
        assert_eq!(a.job_id, "j1");
        assert_eq!(a.resume_id, "r1");
        assert_eq!(a.requirements, vec![vec!["know", "rust"], vec!["sql"]]);
        assert_eq!(a.experiences, vec![vec!["wrote", "rust", "code"]]);
        assert_eq!(a.label, 1);
        assert_eq!(a.side.as_deref(), Some("female"));
        assert_eq!(
            parse_application(&application_to_json(a), true).unwrap(),
            *a
        );
    }

    #[test]
    fn empty_requirement_cites_its_index() {
        let reqs: Vec<String> = (0..7)
            .map(|i| {
                if i == 4 {
                    " ".to_string()
                } else {
                    format!("skill{i}")
                }
            })
            .collect();
        let line = serde_json::json!({
            "job_id": "j", "resume_id": "r", "requirements": reqs,
            "experiences": ["x"], "label": 0
        });
        let text = format!("\n{line}\n");
        match read(&text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("requirement 4"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn validation_failures() {
        let no_label = r#"{"job_id":"j","resume_id":"r","requirements":["a"],"experiences":["b"]}"#;
        assert!(matches!(read(no_label), Err(Error::Parse { line: 1, .. })));
        assert_eq!(parse_application(no_label, false).unwrap().label, 0);
        let bad_label =
            r#"{"job_id":"j","resume_id":"r","requirements":["a"],"experiences":["b"],"label":2}"#;
        assert!(read(bad_label).is_err());
        let no_exp =
            r#"{"job_id":"j","resume_id":"r","requirements":["a"],"experiences":[],"label":1}"#;
        assert!(read(no_exp)
            .unwrap_err()
            .to_string()
            .contains("experience list is empty"));
        assert!(read("{not json").is_err());
    }
}
