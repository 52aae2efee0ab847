//! Text file formats.
//!
//! All formats are UTF-8 with LF line endings and tab-separated fields.
//! Vector components are separated by single spaces and written with 17
//! significant digits, so `write(parse(s)) == s` for anything this module
//! wrote.
//!
//! | format | header | body line |
//! |--------|--------|-----------|
//! | FEAT   | `XMREID-FEAT 1` then `N D` | `id\tview\tv1 … vD` |
//! | CORPUS | `XMREID-CORPUS 1` | `id\tview\ttext` |
//! | EMB    | `V E` | `token v1 … vE` |
//! | ATTR   | `XMREID-ATTR 1 B` | `id\tb1…bB` |
//! | SPLIT  | `XMREID-SPLIT 1 S` | `split\tid\ttrain|test` |
//! | SYN    | none | `token\tsyn1,syn2,…` |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;
use xmreid_core::dataset::{Dataset, Role, Sample, SplitAssignment, View};
use xmreid_core::textprep::{tokenize, Description, EmbeddingTable, SynonymMap, TextError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: malformed header, expected {expected}")]
    MalformedHeader { line: usize, expected: &'static str },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: non-finite value {value:?}")]
    NonFiniteValue { line: usize, value: String },
    #[error("duplicate token {0:?}")]
    DuplicateToken(String),
    #[error("identity {0:?} listed more than once")]
    DuplicateIdentity(String),
    #[error("identity {0:?} is not present in the features")]
    UnknownIdentity(String),
    #[error("line {line}: attribute row has {found} bits, expected {expected}")]
    RaggedAttributes { line: usize, expected: usize, found: usize },
    #[error("header declares {declared} {what}, body has {found}")]
    CountMismatch { what: &'static str, declared: usize, found: usize },
    #[error("row {row}: vision and language files disagree on identity or view")]
    Misaligned { row: usize },
    #[error(transparent)]
    Dataset(#[from] xmreid_core::dataset::DatasetError),
    #[error(transparent)]
    Text(#[from] TextError),
}

pub fn read_text(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), DataError> {
    fs::write(path, text).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

/// 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_vector(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 24);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v:.16e}").expect("writing to a String");
    }
    s
}

fn parse_real(tok: &str, line: usize) -> Result<f64, DataError> {
    let v: f64 =
        tok.parse().map_err(|_| DataError::Malformed { line, msg: format!("cannot parse {tok:?} as a number") })?;
    if !v.is_finite() {
        return Err(DataError::NonFiniteValue { line, value: tok.into() });
    }
    Ok(v)
}

pub(crate) fn parse_vector(text: &str, expected: usize, line: usize) -> Result<Vec<f64>, DataError> {
    let values = if text.is_empty() { Vec::new() } else { text.split(' ').map(|t| parse_real(t, line)).collect::<Result<Vec<_>, _>>()? };
    if values.len() != expected {
        return Err(DataError::DimensionMismatch { line, expected, found: values.len() });
    }
    Ok(values)
}

fn parse_count(tok: &str, line: usize) -> Result<usize, DataError> {
    tok.parse().map_err(|_| DataError::Malformed { line, msg: format!("cannot parse {tok:?} as a count") })
}

fn parse_view(tok: &str, line: usize) -> Result<View, DataError> {
    let v: u32 = tok.parse().map_err(|_| DataError::Malformed { line, msg: format!("bad view {tok:?}") })?;
    View::from_index(v).map_err(|_| DataError::Malformed { line, msg: format!("view must be 1 or 2, got {v}") })
}

fn check_label(id: &str, line: usize) -> Result<(), DataError> {
    if id.is_empty() {
        return Err(DataError::Malformed { line, msg: "empty identity".into() });
    }
    Ok(())
}

/// Numbered non-header lines, 1-based.
fn body(text: &str, skip: usize) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().skip(skip).map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.is_empty())
}

/// One row of a FEAT file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatRecord {
    pub identity: String,
    pub view: View,
    pub values: Vec<f64>,
}

pub const FEAT_MAGIC: &str = "XMREID-FEAT 1";

pub fn parse_feat(text: &str) -> Result<Vec<FeatRecord>, DataError> {
    let mut lines = text.lines();
    if lines.next() != Some(FEAT_MAGIC) {
        return Err(DataError::MalformedHeader { line: 1, expected: FEAT_MAGIC });
    }
    let dims = lines.next().ok_or(DataError::MalformedHeader { line: 2, expected: "<N> <D>" })?;
    let (n, d) = match dims.split(' ').collect::<Vec<_>>()[..] {
        [n, d] => (parse_count(n, 2)?, parse_count(d, 2)?),
        _ => return Err(DataError::MalformedHeader { line: 2, expected: "<N> <D>" }),
    };
    let mut out = Vec::with_capacity(n);
    for (line, l) in body(text, 2) {
        let fields: Vec<&str> = l.split('\t').collect();
        let [id, view, values] = fields[..] else {
            return Err(DataError::Malformed { line, msg: "expected identity, view and values".into() });
        };
        check_label(id, line)?;
        out.push(FeatRecord { identity: id.into(), view: parse_view(view, line)?, values: parse_vector(values, d, line)? });
    }
    if out.len() != n {
        return Err(DataError::CountMismatch { what: "records", declared: n, found: out.len() });
    }
    Ok(out)
}

pub fn write_feat(records: &[FeatRecord]) -> String {
    let d = records.first().map_or(0, |r| r.values.len());
    let mut s = format!("{FEAT_MAGIC}\n{} {d}\n", records.len());
    for r in records {
        writeln!(s, "{}\t{}\t{}", r.identity, r.view.index(), fmt_vector(&r.values)).expect("writing to a String");
    }
    s
}

pub fn load_feat(path: &Path) -> Result<Vec<FeatRecord>, DataError> {
    parse_feat(&read_text(path)?)
}

/// One raw CORPUS row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub identity: String,
    pub view: View,
    pub text: String,
}

impl CorpusRecord {
    pub fn description(&self) -> Description {
        Description { identity: self.identity.clone(), view: self.view, tokens: tokenize(&self.text) }
    }
}

pub const CORPUS_MAGIC: &str = "XMREID-CORPUS 1";

pub fn parse_corpus(text: &str) -> Result<Vec<CorpusRecord>, DataError> {
    if text.lines().next() != Some(CORPUS_MAGIC) {
        return Err(DataError::MalformedHeader { line: 1, expected: CORPUS_MAGIC });
    }
    body(text, 1)
        .map(|(line, l)| {
            let mut parts = l.splitn(3, '\t');
            let (Some(id), Some(view), Some(txt)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(DataError::Malformed { line, msg: "expected identity, view and text".into() });
            };
            check_label(id, line)?;
            Ok(CorpusRecord { identity: id.into(), view: parse_view(view, line)?, text: txt.into() })
        })
        .collect()
}

pub fn write_corpus(records: &[CorpusRecord]) -> String {
    let mut s = format!("{CORPUS_MAGIC}\n");
    for r in records {
        writeln!(s, "{}\t{}\t{}", r.identity, r.view.index(), r.text).expect("writing to a String");
    }
    s
}

/// Descriptions written back with their tokens joined by single spaces.
pub fn descriptions_to_records(descriptions: &[Description]) -> Vec<CorpusRecord> {
    descriptions
        .iter()
        .map(|d| CorpusRecord { identity: d.identity.clone(), view: d.view, text: d.tokens.join(" ") })
        .collect()
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusRecord>, DataError> {
    parse_corpus(&read_text(path)?)
}

pub fn parse_embeddings(text: &str) -> Result<EmbeddingTable, DataError> {
    let header = text.lines().next().ok_or(DataError::MalformedHeader { line: 1, expected: "<V> <E>" })?;
    let (v, e) = match header.split(' ').collect::<Vec<_>>()[..] {
        [v, e] => (parse_count(v, 1)?, parse_count(e, 1)?),
        _ => return Err(DataError::MalformedHeader { line: 1, expected: "<V> <E>" }),
    };
    let mut table = EmbeddingTable::new(e);
    for (line, l) in body(text, 1) {
        let (token, rest) = l.split_once(' ').unwrap_or((l, ""));
        let values = parse_vector(rest, e, line)?;
        table.insert(token, values).map_err(|err| match err {
            TextError::DuplicateToken(t) => DataError::DuplicateToken(t),
            other => DataError::Text(other),
        })?;
    }
    if table.len() != v {
        return Err(DataError::CountMismatch { what: "tokens", declared: v, found: table.len() });
    }
    Ok(table)
}

pub fn write_embeddings(table: &EmbeddingTable) -> String {
    let mut s = format!("{} {}\n", table.len(), table.dim());
    for (tok, v) in table.iter() {
        writeln!(s, "{tok} {}", fmt_vector(v)).expect("writing to a String");
    }
    s
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, DataError> {
    parse_embeddings(&read_text(path)?)
}

/// Attribute bits per identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeTable {
    pub bits: usize,
    pub rows: BTreeMap<String, Vec<bool>>,
}

pub fn parse_attributes(text: &str) -> Result<AttributeTable, DataError> {
    const EXPECTED: &str = "XMREID-ATTR 1 <B>";
    let header = text.lines().next().unwrap_or("");
    let bits = match header.split(' ').collect::<Vec<_>>()[..] {
        ["XMREID-ATTR", "1", b] => parse_count(b, 1)?,
        _ => return Err(DataError::MalformedHeader { line: 1, expected: EXPECTED }),
    };
    let mut rows = BTreeMap::new();
    for (line, l) in body(text, 1) {
        let Some((id, code)) = l.split_once('\t') else {
            return Err(DataError::Malformed { line, msg: "expected identity and bits".into() });
        };
        check_label(id, line)?;
        if code.chars().count() != bits {
            return Err(DataError::RaggedAttributes { line, expected: bits, found: code.chars().count() });
        }
        let row = code
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(DataError::Malformed { line, msg: format!("attribute bit {other:?}") }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if rows.insert(id.to_string(), row).is_some() {
            return Err(DataError::DuplicateIdentity(id.into()));
        }
    }
    Ok(AttributeTable { bits, rows })
}

pub fn write_attributes(table: &AttributeTable) -> String {
    let mut s = format!("XMREID-ATTR 1 {}\n", table.bits);
    for (id, row) in &table.rows {
        let code: String = row.iter().map(|&b| if b { '1' } else { '0' }).collect();
        writeln!(s, "{id}\t{code}").expect("writing to a String");
    }
    s
}

pub fn load_attributes(path: &Path) -> Result<AttributeTable, DataError> {
    parse_attributes(&read_text(path)?)
}

pub fn parse_splits(text: &str) -> Result<Vec<SplitAssignment>, DataError> {
    const EXPECTED: &str = "XMREID-SPLIT 1 <num_splits>";
    let header = text.lines().next().unwrap_or("");
    let count = match header.split(' ').collect::<Vec<_>>()[..] {
        ["XMREID-SPLIT", "1", n] => parse_count(n, 1)?,
        _ => return Err(DataError::MalformedHeader { line: 1, expected: EXPECTED }),
    };
    let mut entries: Vec<Vec<(String, Role)>> = vec![Vec::new(); count];
    for (line, l) in body(text, 1) {
        let fields: Vec<&str> = l.split('\t').collect();
        let [idx, id, role] = fields[..] else {
            return Err(DataError::Malformed { line, msg: "expected split index, identity and role".into() });
        };
        let idx = parse_count(idx, line)?;
        if idx >= count {
            return Err(DataError::Malformed { line, msg: format!("split index {idx} outside 0..{count}") });
        }
        check_label(id, line)?;
        let role = match role {
            "train" => Role::Train,
            "test" => Role::Test,
            other => return Err(DataError::Malformed { line, msg: format!("role must be train or test, got {other:?}") }),
        };
        entries[idx].push((id.into(), role));
    }
    let present = entries.iter().filter(|e| !e.is_empty()).count();
    if present != count {
        return Err(DataError::CountMismatch { what: "splits", declared: count, found: present });
    }
    entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| SplitAssignment::new(i, e).map_err(DataError::from))
        .collect()
}

pub fn write_splits(splits: &[SplitAssignment]) -> String {
    let mut s = format!("XMREID-SPLIT 1 {}\n", splits.len());
    for sp in splits {
        for (id, role) in sp.entries() {
            let role = if role == Role::Train { "train" } else { "test" };
            writeln!(s, "{}\t{id}\t{role}", sp.index).expect("writing to a String");
        }
    }
    s
}

pub fn load_splits(path: &Path) -> Result<Vec<SplitAssignment>, DataError> {
    parse_splits(&read_text(path)?)
}

pub fn parse_synonyms(text: &str) -> Result<SynonymMap, DataError> {
    let mut map = SynonymMap::new();
    for (line, l) in body(text, 0) {
        let Some((tok, syns)) = l.split_once('\t') else {
            return Err(DataError::Malformed { line, msg: "expected token and synonym list".into() });
        };
        let ranked: Vec<String> = syns.split(',').filter(|s| !s.is_empty()).map(String::from).collect();
        map.insert(tok, ranked).map_err(|err| match err {
            TextError::DuplicateToken(t) => DataError::DuplicateToken(t),
            other => DataError::Text(other),
        })?;
    }
    Ok(map)
}

pub fn load_synonyms(path: &Path) -> Result<SynonymMap, DataError> {
    parse_synonyms(&read_text(path)?)
}

/// Joins row-aligned vision and language FEAT records and per-identity
/// attributes into one dataset.
pub fn assemble_dataset(
    vision: Option<&[FeatRecord]>,
    language: Option<&[FeatRecord]>,
    attributes: Option<&AttributeTable>,
) -> Result<Dataset, DataError> {
    let base = vision.or(language).unwrap_or(&[]);
    if let (Some(v), Some(l)) = (vision, language) {
        if v.len() != l.len() {
            return Err(DataError::CountMismatch { what: "language records", declared: v.len(), found: l.len() });
        }
        if let Some(row) = v.iter().zip(l).position(|(a, b)| a.identity != b.identity || a.view != b.view) {
            return Err(DataError::Misaligned { row: row + 1 });
        }
    }
    let known: BTreeSet<&str> = base.iter().map(|r| r.identity.as_str()).collect();
    if let Some(attrs) = attributes {
        if let Some(id) = attrs.rows.keys().find(|id| !known.contains(id.as_str())) {
            return Err(DataError::UnknownIdentity(id.clone()));
        }
    }
    let samples = base
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut s = Sample::new(r.identity.clone(), r.view);
            s.vision = vision.map(|v| v[i].values.clone());
            s.language = language.map(|l| l[i].values.clone());
            s.attributes = attributes.and_then(|a| a.rows.get(&r.identity).cloned());
            s
        })
        .collect();
    Ok(Dataset::new(samples)?)
}

/// Every split identity must appear in the dataset.
pub fn check_splits(dataset: &Dataset, splits: &[SplitAssignment]) -> Result<(), DataError> {
    let known: BTreeSet<String> = dataset.identities().into_iter().collect();
    for s in splits {
        if let Some((id, _)) = s.entries().find(|(id, _)| !known.contains(*id)) {
            return Err(DataError::UnknownIdentity(id.into()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feat_parse_and_errors() {
        let text = "XMREID-FEAT 1\n2 3\na\t1\t1 2 3\nb\t2\t4 5 6\n";
        let recs = parse_feat(text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].values, vec![4.0, 5.0, 6.0]);
        assert!(matches!(
            parse_feat("XMREID-FEAT 1\n1 3\na\t1\t1 2\n"),
            Err(DataError::DimensionMismatch { line: 3, expected: 3, found: 2 })
        ));
        assert!(matches!(parse_feat("XMREID-FEAT 1\n1 1\na\t1\tNaN\n"), Err(DataError::NonFiniteValue { .. })));
        assert!(matches!(parse_feat("FEAT\n1 1\n"), Err(DataError::MalformedHeader { line: 1, .. })));
        assert!(matches!(parse_feat("XMREID-FEAT 1\n2 1\na\t1\t1\n"), Err(DataError::CountMismatch { .. })));
        assert!(matches!(parse_feat("XMREID-FEAT 1\n1 1\na\t3\t1\n"), Err(DataError::Malformed { line: 3, .. })));
    }

    #[test]
    fn embeddings() {
        let t = parse_embeddings("3 4\nthe 1 2 3 4\nman 0 0 0 1\nhat 1 1 1 1\n").unwrap();
        assert_eq!((t.len(), t.dim()), (3, 4));
        assert!(matches!(parse_embeddings("2 1\na 1\na 2\n"), Err(DataError::DuplicateToken(t)) if t == "a"));
        assert!(matches!(parse_embeddings("1 2\na 1\n"), Err(DataError::DimensionMismatch { .. })));
    }

    #[test]
    fn attributes_and_splits() {
        let a = parse_attributes("XMREID-ATTR 1 15\nid1\t010101010101010\n").unwrap();
        assert_eq!(a.bits, 15);
        assert!(a.rows["id1"][1]);
        assert!(matches!(parse_attributes("XMREID-ATTR 1 3\nx\t01\n"), Err(DataError::RaggedAttributes { .. })));

        let s = parse_splits("XMREID-SPLIT 1 1\n0\ta\ttrain\n0\tb\ttest\n").unwrap();
        assert_eq!(s[0].train_ids(), vec!["a"]);
        assert!(parse_splits("XMREID-SPLIT 1 1\n0\ta\ttrain\n0\ta\ttest\n").is_err());
        assert!(matches!(parse_splits("XMREID-SPLIT 1 2\n0\ta\ttrain\n"), Err(DataError::CountMismatch { .. })));
    }

    #[test]
    fn corpus_keeps_raw_text() {
        let c = parse_corpus("XMREID-CORPUS 1\np1\t2\tA man in a red-hat.\n").unwrap();
        assert_eq!(c[0].text, "A man in a red-hat.");
        assert_eq!(c[0].description().tokens, vec!["a", "man", "in", "a", "red", "hat"]);
        assert_eq!(write_corpus(&c), "XMREID-CORPUS 1\np1\t2\tA man in a red-hat.\n");
    }

    #[test]
    fn synonyms() {
        let m = parse_synonyms("glasses\tspectacles,eyeglasses\n").unwrap();
        assert_eq!(m.get("glasses").unwrap(), ["spectacles", "eyeglasses"]);
    }

    #[test]
    fn misaligned_modalities() {
        let v = parse_feat("XMREID-FEAT 1\n1 1\na\t1\t1\n").unwrap();
        let l = parse_feat("XMREID-FEAT 1\n1 1\na\t2\t1\n").unwrap();
        assert!(matches!(assemble_dataset(Some(&v), Some(&l), None), Err(DataError::Misaligned { row: 1 })));
    }
}
