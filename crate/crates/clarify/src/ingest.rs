//! Corpus loading from CSV or JSON-lines, possibility filtering and
//! annotation joins.
//!
//! Row numbers in errors and reports are 1-based and count data rows only,
//! so the first row after a CSV header is row 1.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clarify_core::domain::StatementError;
use clarify_core::{
    binarize_verdict, MissingInfoCategory, PossibilityLabel, Statement, VerdictMap,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    #[default]
    Csv,
    #[serde(alias = "jsonl")]
    JsonLines,
}

impl CorpusFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::JsonLines => "json-lines",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub id: String,
    pub text: String,
    pub possibility: Option<String>,
    pub verdict: Option<String>,
    pub article: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            id: "id".into(),
            text: "statement".into(),
            possibility: Some("possibility".into()),
            verdict: Some("label".into()),
            article: Some("article".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OnRowError {
    /// Reject the row into the error report and keep loading.
    #[default]
    Collect,
    /// Abort on the first invalid row.
    FailFast,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    pub format: CorpusFormat,
    pub columns: ColumnMap,
    pub verdict_map: VerdictMap,
    /// Used when the possibility column is absent or blank. Without it such
    /// rows are rejected.
    pub default_possibility: Option<PossibilityLabel>,
    pub on_error: OnRowError,
}

impl SchemaConfig {
    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        let text = read(path)?;
        serde_json::from_str(&text)
            .map_err(|e| IngestError::Schema(format!("{}: {e}", path.display())))
    }

    /// Picks the format from the file extension, keeping everything else.
    pub fn for_path(mut self, path: &Path) -> Self {
        if let Some(ext) = path.extension().and_then(|e| e.to_str()) {
            match ext {
                "jsonl" | "ndjson" => self.format = CorpusFormat::JsonLines,
                "csv" => self.format = CorpusFormat::Csv,
                _ => {}
            }
        }
        self
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    FileUnreadable { path: PathBuf, source: std::io::Error },
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("row {row}: duplicate statement id {id:?}")]
    DuplicateId { row: usize, id: String },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("annotation row {row}: unknown statement id {id:?}")]
    UnknownStatementId { row: usize, id: String },
    #[error("annotation row {row}: invalid category letter {letter:?}")]
    InvalidCategoryLetter { row: usize, letter: String },
    #[error("annotation row {row}: {source}")]
    Annotation { row: usize, source: StatementError },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMeta {
    pub path: PathBuf,
    pub format: CorpusFormat,
    pub loaded_at: DateTime<Utc>,
    /// Data rows read, accepted or not.
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub statements: Vec<Statement>,
    pub source_meta: SourceMeta,
}

impl Corpus {
    pub fn from_statements(statements: Vec<Statement>) -> Self {
        let rows = statements.len();
        Self {
            statements,
            source_meta: SourceMeta {
                path: PathBuf::new(),
                format: CorpusFormat::Csv,
                loaded_at: Utc::now(),
                rows,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Statement> {
        self.statements.iter().find(|s| s.id == id)
    }

    /// SHA-256 over the statements' canonical JSON, independent of the
    /// source path and load time.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.statements).expect("statements serialize");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub corpus: Corpus,
    pub rejected: Vec<RejectedRow>,
}

impl LoadOutcome {
    /// The rejected rows as JSON lines, one `{row, reason}` object each.
    pub fn error_report(&self) -> String {
        let mut out = String::new();
        for r in &self.rejected {
            out.push_str(&serde_json::to_string(r).expect("row serializes"));
            out.push('\n');
        }
        out
    }
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path)
        .map_err(|source| IngestError::FileUnreadable { path: path.to_path_buf(), source })
}

type RawRow = HashMap<String, String>;

fn csv_rows(bytes: &[u8]) -> Result<Vec<Result<RawRow, String>>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(bytes);
    let headers = reader
        .byte_headers()
        .map_err(|e| IngestError::MalformedRow { row: 0, reason: format!("header: {e}") })?
        .clone();
    let names: Vec<String> = headers
        .iter()
        .map(|h| {
            std::str::from_utf8(h)
                .map(|s| s.trim_start_matches('\u{feff}').trim().to_string())
                .map_err(|_| IngestError::MalformedRow { row: 0, reason: "header is not UTF-8".into() })
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for record in reader.byte_records() {
        let row = record.map_err(|e| e.to_string()).and_then(|rec| {
            names
                .iter()
                .zip(rec.iter())
                .map(|(name, field)| {
                    std::str::from_utf8(field)
                        .map(|v| (name.clone(), v.to_string()))
                        .map_err(|_| format!("column {name:?} is not valid UTF-8"))
                })
                .collect()
        });
        rows.push(row);
    }
    Ok(rows)
}

fn jsonl_rows(bytes: &[u8]) -> Vec<Result<RawRow, String>> {
    bytes
        .split(|&b| b == b'\n')
        .filter(|line| !line.iter().all(u8::is_ascii_whitespace))
        .map(|line| {
            let text = std::str::from_utf8(line).map_err(|_| "line is not valid UTF-8".to_string())?;
            let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
            let obj = value.as_object().ok_or("line is not a JSON object")?;
            Ok(obj
                .iter()
                .filter_map(|(k, v)| {
                    let s = match v {
                        serde_json::Value::String(s) => s.clone(),
                        serde_json::Value::Null => return None,
                        other => other.to_string(),
                    };
                    Some((k.clone(), s))
                })
                .collect())
        })
        .collect()
}

fn field<'a>(row: &'a RawRow, column: Option<&String>) -> Option<&'a str> {
    column.and_then(|c| row.get(c)).map(|v| v.trim()).filter(|v| !v.is_empty())
}

fn build_statement(row: &RawRow, schema: &SchemaConfig) -> Result<Statement, String> {
    let cols = &schema.columns;
    let id = field(row, Some(&cols.id)).ok_or_else(|| format!("missing id column {:?}", cols.id))?;
    let text = row
        .get(&cols.text)
        .ok_or_else(|| format!("missing text column {:?}", cols.text))?;
    let possibility = match field(row, cols.possibility.as_ref()) {
        Some(raw) => {
            PossibilityLabel::parse(raw).ok_or_else(|| format!("unknown possibility label {raw:?}"))?
        }
        None => schema.default_possibility.ok_or("missing possibility label")?,
    };
    let mut st = Statement::new(id, text.as_str(), possibility).map_err(|e| e.to_string())?;
    if let Some(raw) = field(row, cols.verdict.as_ref()) {
        st = st.with_verdict(binarize_verdict(raw, &schema.verdict_map).map_err(|e| e.to_string())?);
    }
    if let Some(article) = cols.article.as_ref().and_then(|c| row.get(c)) {
        if !article.trim().is_empty() {
            st = st.with_article(article.as_str());
        }
    }
    Ok(st)
}

/// Loads a corpus. Invalid rows are rejected into the outcome's report, or
/// abort the load under [`OnRowError::FailFast`]. A repeated id always
/// aborts, since ids key everything downstream.
pub fn load_corpus(path: &Path, schema: &SchemaConfig) -> Result<LoadOutcome, IngestError> {
    let bytes = fs::read(path)
        .map_err(|source| IngestError::FileUnreadable { path: path.to_path_buf(), source })?;
    let rows = match schema.format {
        CorpusFormat::Csv => csv_rows(&bytes)?,
        CorpusFormat::JsonLines => jsonl_rows(&bytes),
    };
    let mut statements = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in rows.iter().enumerate() {
        let row = i + 1;
        match raw.as_ref().map_err(Clone::clone).and_then(|r| build_statement(r, schema)) {
            Ok(st) => {
                if !seen.insert(st.id.clone()) {
                    return Err(IngestError::DuplicateId { row, id: st.id });
                }
                statements.push(st);
            }
            Err(reason) => match schema.on_error {
                OnRowError::FailFast => return Err(IngestError::MalformedRow { row, reason }),
                OnRowError::Collect => rejected.push(RejectedRow { row, reason }),
            },
        }
    }
    Ok(LoadOutcome {
        corpus: Corpus {
            statements,
            source_meta: SourceMeta {
                path: path.to_path_buf(),
                format: schema.format,
                loaded_at: Utc::now(),
                rows: rows.len(),
            },
        },
        rejected,
    })
}

/// Writes `corpus` so that [`load_corpus`] with the same schema reads it
/// back equal. Verdicts are written as their raw labels.
pub fn write_corpus(corpus: &Corpus, path: &Path, schema: &SchemaConfig) -> Result<(), IngestError> {
    let werr = |source: std::io::Error| IngestError::Write { path: path.to_path_buf(), source };
    let cols = &schema.columns;
    let mut header = vec![cols.id.clone(), cols.text.clone()];
    header.extend(cols.possibility.iter().cloned());
    header.extend(cols.verdict.iter().cloned());
    header.extend(cols.article.iter().cloned());
    let row_of = |s: &Statement| -> Vec<String> {
        let mut row = vec![s.id.clone(), s.text().to_string()];
        if cols.possibility.is_some() {
            row.push(s.possibility.as_str().to_string());
        }
        if cols.verdict.is_some() {
            row.push(s.verdict.as_ref().map(|v| v.raw_label.clone()).unwrap_or_default());
        }
        if cols.article.is_some() {
            row.push(s.article.clone().unwrap_or_default());
        }
        row
    };
    let mut file = fs::File::create(path).map_err(werr)?;
    match schema.format {
        CorpusFormat::Csv => {
            let mut w = csv::Writer::from_writer(file);
            w.write_record(&header).map_err(|e| werr(e.into()))?;
            for s in &corpus.statements {
                w.write_record(row_of(s)).map_err(|e| werr(e.into()))?;
            }
            w.flush().map_err(werr)?;
        }
        CorpusFormat::JsonLines => {
            for s in &corpus.statements {
                let obj: serde_json::Map<String, serde_json::Value> = header
                    .iter()
                    .cloned()
                    .zip(row_of(s).into_iter().map(serde_json::Value::String))
                    .collect();
                writeln!(file, "{}", serde_json::Value::Object(obj)).map_err(werr)?;
            }
        }
    }
    Ok(())
}

/// A new corpus holding exactly the statements whose label is in `keep`.
pub fn filter_by_possibility(corpus: &Corpus, keep: &BTreeSet<PossibilityLabel>) -> Corpus {
    Corpus {
        statements: corpus
            .statements
            .iter()
            .filter(|s| keep.contains(&s.possibility))
            .cloned()
            .collect(),
        source_meta: corpus.source_meta.clone(),
    }
}

#[derive(Debug, Deserialize)]
struct AnnotationRow {
    statement_id: String,
    labeler_id: String,
    category_letter: String,
}

/// Joins a `statement_id,labeler_id,category_letter` CSV onto `corpus`.
/// Any invalid row fails the whole join.
pub fn attach_annotations(corpus: &Corpus, labels_path: &Path) -> Result<Corpus, IngestError> {
    let bytes = fs::read(labels_path)
        .map_err(|source| IngestError::FileUnreadable { path: labels_path.to_path_buf(), source })?;
    let mut out = corpus.clone();
    let index: HashMap<String, usize> =
        out.statements.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    for (i, rec) in reader.deserialize::<AnnotationRow>().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| IngestError::MalformedRow { row, reason: e.to_string() })?;
        let &pos = index
            .get(&rec.statement_id)
            .ok_or_else(|| IngestError::UnknownStatementId { row, id: rec.statement_id.clone() })?;
        let category = parse_letter(&rec.category_letter)
            .ok_or_else(|| IngestError::InvalidCategoryLetter { row, letter: rec.category_letter.clone() })?;
        out.statements[pos]
            .annotate(rec.labeler_id, category)
            .map_err(|source| IngestError::Annotation { row, source })?;
    }
    Ok(out)
}

fn parse_letter(raw: &str) -> Option<MissingInfoCategory> {
    let mut chars = raw.chars();
    let c = chars.next()?;
    if chars.next().is_some() {
        return None;
    }
    MissingInfoCategory::from_letter(c.to_ascii_uppercase()).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &[u8]) -> PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.csv",
            b"id,statement,possibility,label,article\n1,a,hard,false,x\n2,b,impossible,true,\n3,c,possible,pants-fire,y\n",
        );
        let out = load_corpus(&p, &SchemaConfig::default()).unwrap();
        assert_eq!(out.corpus.len(), 3);
        assert!(out.rejected.is_empty());
        assert!(out.corpus.statements[1].article.is_none());
        assert_eq!(out.corpus.source_meta.rows, 3);
    }

    #[test]
    fn duplicate_id_reports_second_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.csv",
            b"id,statement,possibility\na,t,hard\nX,t,hard\nb,t,hard\nc,t,hard\nX,t,hard\n",
        );
        match load_corpus(&p, &SchemaConfig::default()) {
            Err(IngestError::DuplicateId { row, id }) => {
                assert_eq!((row, id.as_str()), (5, "X"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_utf8_is_a_malformed_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.csv", b"id,statement,possibility\n1,ok,hard\n2,bad \xff,hard\n");
        let out = load_corpus(&p, &SchemaConfig::default()).unwrap();
        assert_eq!(out.corpus.len(), 1);
        assert_eq!(out.rejected[0].row, 2);
        let strict = SchemaConfig { on_error: OnRowError::FailFast, ..Default::default() };
        assert!(matches!(load_corpus(&p, &strict), Err(IngestError::MalformedRow { row: 2, .. })));
    }

    #[test]
    fn missing_file() {
        let err = load_corpus(Path::new("/nonexistent/c.csv"), &SchemaConfig::default()).unwrap_err();
        assert!(matches!(err, IngestError::FileUnreadable { .. }));
    }

    #[test]
    fn letter_parsing() {
        assert_eq!(parse_letter("e"), Some(MissingInfoCategory::E));
        assert_eq!(parse_letter("D"), None);
        assert_eq!(parse_letter("AB"), None);
        assert_eq!(parse_letter(""), None);
    }
}
