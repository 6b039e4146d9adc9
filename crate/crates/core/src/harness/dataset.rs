//! JSONL benchmark records.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::syntax::{parse, ParseError, SyntaxTree};
use crate::Error;

const DESK_CORPUS: &str = include_str!("../../data/desk_corpus.jsonl");

/// HumanEval-style keys; raw MBPP lines (`text`, `code`, `test_list`,
/// numeric `task_id`) are read too.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    #[serde(deserialize_with = "task_id")]
    pub task_id: String,
    #[serde(default, alias = "text")]
    pub prompt: String,
    #[serde(alias = "code")]
    pub canonical_solution: String,
    #[serde(default, alias = "test_list")]
    pub tests: Vec<String>,
}

fn task_id<'de, D: serde::Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        N(u64),
    }
    Ok(match Id::deserialize(d)? {
        Id::S(s) => s,
        Id::N(n) => n.to_string(),
    })
}

/// A record whose solution parsed, with its tree.
#[derive(Debug, Clone)]
pub struct ParsedRecord {
    pub record: DatasetRecord,
    pub tree: SyntaxTree,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub task_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub records: Vec<ParsedRecord>,
    pub skipped: Vec<Skipped>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn trees(&self) -> Vec<SyntaxTree> {
        self.records.iter().map(|r| r.tree.clone()).collect()
    }
}

pub fn parse_records(text: &str) -> Result<Vec<DatasetRecord>, Error> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord =
            serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                reason: e.to_string(),
            })?;
        out.push(rec);
    }
    Ok(out)
}

/// Parse every solution, setting aside those outside the supported subset.
pub fn filter_parsed(records: Vec<DatasetRecord>) -> Corpus {
    let mut corpus = Corpus::default();
    for record in records {
        match parse(&record.canonical_solution.replace("\r\n", "\n")) {
            Ok(tree) if !tree.body.is_empty() => corpus.records.push(ParsedRecord { record, tree }),
            Ok(_) => corpus.skipped.push(Skipped {
                task_id: record.task_id,
                reason: "empty solution".into(),
            }),
            Err(e) => corpus.skipped.push(Skipped {
                task_id: record.task_id,
                reason: describe(&e),
            }),
        }
    }
    corpus
}

fn describe(e: &ParseError) -> String {
    e.to_string()
}

pub fn ingest(path: &Path) -> Result<Corpus, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(filter_parsed(parse_records(&text)?))
}

/// The bundled desk-scale corpus.
pub fn desk_corpus() -> Corpus {
    filter_parsed(parse_records(DESK_CORPUS).expect("bundled corpus is well-formed"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_records() {
        let text = r#"{"task_id": "a", "prompt": "p", "canonical_solution": "def f():\n    return 1\n", "tests": ["assert f() == 1"]}
{"task_id": "b", "prompt": "p", "canonical_solution": "def g(x):\n    return x\n", "tests": []}
{"task_id": "c", "prompt": "p", "canonical_solution": "x = 1\n", "tests": []}
"#;
        let c = filter_parsed(parse_records(text).unwrap());
        assert_eq!(c.len(), 3);
        assert!(c.skipped.is_empty());
    }

    #[test]
    fn unsupported_is_skipped() {
        let text = r#"{"task_id": "a", "canonical_solution": "def f(x):\n    return [i for i in x]\n"}"#;
        let c = filter_parsed(parse_records(text).unwrap());
        assert_eq!(c.len(), 0);
        assert_eq!(c.skipped[0].task_id, "a");
        assert!(c.skipped[0].reason.contains("comprehension"));
    }

    #[test]
    fn malformed_line_reported() {
        let err = parse_records("{\"task_id\": \"a\", \"canonical_solution\": \"x = 1\"}\nnot json\n").unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 2, .. }));
    }

    #[test]
    fn mbpp_fields_roundtrip() {
        let rec = DatasetRecord {
            task_id: "Mbpp/2".into(),
            prompt: "Write a function to find the shared elements.".into(),
            canonical_solution: "def similar_elements(a, b):\n    return tuple(set(a) & set(b))\n".into(),
            tests: vec!["assert set(similar_elements((3, 4), (4, 5))) == set((4,))".into()],
        };
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(parse_records(&line).unwrap(), vec![rec]);
    }

    #[test]
    fn desk_corpus_parses() {
        let c = desk_corpus();
        assert!(c.len() >= 200, "{} parsed, skipped {:?}", c.len(), c.skipped);
    }
}
