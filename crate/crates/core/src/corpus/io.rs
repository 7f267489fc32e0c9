use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    Annotation, AnnotatorRegistry, CorpusError, CrowdCorpus, Entry, Sentence, Span, GOLD_ANNOTATOR,
};

/// Sidecar file listing annotator ids in dense-index order.
pub const REGISTRY_FILE: &str = "registry.json";

#[derive(Serialize, Deserialize)]
struct SentenceRecord {
    id: String,
    text: Vec<String>,
    #[serde(default)]
    annotations: Vec<AnnotationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold: Option<GoldRecord>,
}

#[derive(Serialize, Deserialize)]
struct AnnotationRecord {
    annotator: String,
    spans: Vec<Span>,
}

#[derive(Serialize, Deserialize)]
struct GoldRecord {
    spans: Vec<Span>,
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// `<dir>/<split>.jsonl`
pub fn split_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.jsonl"))
}

pub fn load_registry(path: &Path) -> Result<AnnotatorRegistry, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let ids: Vec<String> = serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })?;
    AnnotatorRegistry::new(ids)
}

pub fn save_registry(registry: &AnnotatorRegistry, path: &Path) -> Result<(), CorpusError> {
    let mut text = serde_json::to_string_pretty(registry.ids()).expect("string list serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads a JSONL corpus. Without an explicit registry, a `registry.json`
/// next to the file is used when present; otherwise annotators are
/// registered in order of first appearance.
pub fn load_corpus(path: &Path, registry: Option<&AnnotatorRegistry>) -> Result<CrowdCorpus, CorpusError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let sidecar = path.parent().map(|p| p.join(REGISTRY_FILE));
    let fixed = match registry {
        Some(r) => Some(r.clone()),
        None => match sidecar {
            Some(p) if p.exists() => Some(load_registry(&p)?),
            _ => None,
        },
    };
    let mut discovered = AnnotatorRegistry::default();
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SentenceRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let annotations = rec
            .annotations
            .into_iter()
            .map(|a| {
                discovered.register(&a.annotator);
                Annotation::new(a.annotator, a.spans)
            })
            .collect();
        entries.push(Entry {
            sentence: Sentence {
                id: rec.id,
                tokens: rec.text,
            },
            annotations,
            gold: rec.gold.map(|g| Annotation::new(GOLD_ANNOTATOR, g.spans)),
        });
    }
    CrowdCorpus::new(entries, fixed.unwrap_or(discovered))
}

/// Writes the canonical form of `corpus`, one sentence per line.
pub fn save_corpus(corpus: &CrowdCorpus, path: &Path) -> Result<(), CorpusError> {
    let mut canonical = corpus.clone();
    canonical.canonicalize();
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    for e in &canonical.entries {
        let rec = SentenceRecord {
            id: e.sentence.id.clone(),
            text: e.sentence.tokens.clone(),
            annotations: e
                .annotations
                .iter()
                .map(|a| AnnotationRecord {
                    annotator: a.annotator_id.clone(),
                    spans: a.spans.clone(),
                })
                .collect(),
            gold: e.gold.as_ref().map(|g| GoldRecord { spans: g.spans.clone() }),
        };
        serde_json::to_writer(&mut out, &rec).map_err(|e| io_err(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Polarity;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.jsonl", "");
        let c = load_corpus(&p, None).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn single_sentence_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let line = r#"{"id":"s1","text":["a","b","c"],"annotations":[{"annotator":"w1","spans":[{"start":1,"end":3,"polarity":"NEG"}]}],"gold":{"spans":[]}}"#;
        let p = write(dir.path(), "c.jsonl", &format!("{line}\n"));
        let c = load_corpus(&p, None).unwrap();
        assert_eq!(c.entries[0].annotations[0].spans, vec![Span::new(1, 3, Polarity::Neg)]);
        let out = dir.path().join("out.jsonl");
        save_corpus(&c, &out).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), format!("{line}\n"));
    }

    #[test]
    fn span_past_end_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.jsonl",
            r#"{"id":"s1","text":["a","b"],"annotations":[{"annotator":"w1","spans":[{"start":1,"end":3,"polarity":"POS"}]}]}"#,
        );
        assert!(matches!(load_corpus(&p, None), Err(CorpusError::Invalid { .. })));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.jsonl",
            "{\"id\":\"s1\",\"text\":[\"a\"],\"annotations\":[]}\n{not json\n",
        );
        match load_corpus(&p, None) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sidecar_registry_fixes_indices() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), REGISTRY_FILE, r#"["w2","w1"]"#);
        let p = write(
            dir.path(),
            "c.jsonl",
            r#"{"id":"s1","text":["a"],"annotations":[{"annotator":"w1","spans":[]},{"annotator":"w2","spans":[]}]}"#,
        );
        let c = load_corpus(&p, None).unwrap();
        assert_eq!(c.registry.index_of("w2"), Some(0));
        let out = dir.path().join("out.jsonl");
        save_corpus(&c, &out).unwrap();
        let text = fs::read_to_string(out).unwrap();
        assert!(text.find("w2").unwrap() < text.find("w1").unwrap());
    }
}
