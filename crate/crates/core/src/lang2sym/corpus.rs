use std::fs;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::guidance::DirectionalSymbol;

use super::Lang2Sym;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("empty corpus")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub text: String,
    pub expected_symbols: Vec<DirectionalSymbol>,
    pub notes: Option<String>,
    /// 1-based line number in the source file.
    pub line: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    text: String,
    symbols: Vec<String>,
    #[serde(default)]
    notes: Option<String>,
}

/// Parses line-delimited JSON records `{"text", "symbols", "notes"?}`.
/// Blank lines are skipped.
pub fn parse_corpus(source: &str) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mut entries = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CorpusError::Malformed { line, message };
        let record: Record = serde_json::from_str(raw).map_err(|e| malformed(e.to_string()))?;
        let expected_symbols = record
            .symbols
            .iter()
            .map(|s| {
                let mut chars = s.chars();
                match (
                    chars.next().and_then(DirectionalSymbol::from_char),
                    chars.next(),
                ) {
                    (Some(sym), None) if s.chars().all(|c| c.is_ascii_uppercase()) => Ok(sym),
                    _ => Err(malformed(format!(
                        "bad symbol {s:?}, expected one of U, D, L, R"
                    ))),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        if expected_symbols.is_empty() {
            return Err(malformed("expected symbols must be non-empty".into()));
        }
        entries.push(CorpusEntry {
            text: record.text,
            expected_symbols,
            notes: record.notes,
            line,
        });
    }
    Ok(entries)
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    parse_corpus(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusDiff {
    pub line: usize,
    pub text: String,
    pub expected: Vec<DirectionalSymbol>,
    pub got: Vec<DirectionalSymbol>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusReport {
    pub total: usize,
    pub matched: usize,
    pub accuracy: f64,
    pub diffs: Vec<CorpusDiff>,
}

/// Exact-match accuracy of the full parse (repairs included) against the golden symbols.
pub fn evaluate_corpus(
    parser: &Lang2Sym,
    entries: &[CorpusEntry],
) -> Result<CorpusReport, CorpusError> {
    if entries.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut diffs = Vec::new();
    for entry in entries {
        let got = parser.parse(&entry.text).guidance.symbols().to_vec();
        if got != entry.expected_symbols {
            diffs.push(CorpusDiff {
                line: entry.line,
                text: entry.text.clone(),
                expected: entry.expected_symbols.clone(),
                got,
            });
        }
    }
    let matched = entries.len() - diffs.len();
    Ok(CorpusReport {
        total: entries.len(),
        matched,
        accuracy: matched as f64 / entries.len() as f64,
        diffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE_ROWS: &str = r#"{"text": "Go straight and take the second left", "symbols": ["U", "U", "L"]}
{"text": "Go forward till the end of the corridor and turn left", "symbols": ["U", "U", "L"], "notes": "corridor run of 2"}
{"text": "Turn left and go straight", "symbols": ["L", "U"]}
{"text": "Go straight and take a right towards the kitchen on your right", "symbols": ["U", "R"]}
"#;

    #[test]
    fn table_corpus_is_exact() {
        let entries = parse_corpus(TABLE_ROWS).unwrap();
        assert_eq!(entries.len(), 4);
        let report = evaluate_corpus(&Lang2Sym::default(), &entries).unwrap();
        assert_eq!(report.accuracy, 1.0, "{:?}", report.diffs);
    }

    #[test]
    fn empty_corpus_errors() {
        let entries = parse_corpus("\n\n").unwrap();
        let err = evaluate_corpus(&Lang2Sym::default(), &entries).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = "{\"text\": \"left\", \"symbols\": [\"L\"]}\n{\"text\": 3}\n";
        match parse_corpus(text).unwrap_err() {
            CorpusError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let bad_symbol = "{\"text\": \"left\", \"symbols\": [\"X\"]}\n";
        assert!(matches!(
            parse_corpus(bad_symbol),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
        let no_symbols = "{\"text\": \"left\", \"symbols\": []}\n";
        assert!(parse_corpus(no_symbols).is_err());
        let unknown = "{\"text\": \"left\", \"symbols\": [\"L\"], \"extra\": 1}\n";
        assert!(parse_corpus(unknown).is_err());
    }
}
