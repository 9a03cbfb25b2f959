//! Labeled comment ingestion, train/test splitting, k-fold planning, and
//! the synthetic fixture corpus.
//!
//! Input files are UTF-8 CSV with a header row. Two schemas are accepted:
//! `(text,label)` with a binary label, or `(text,threat,obscene,insult,racism)`
//! where the binary label is the OR of the four category flags.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::SeededRng;
use crate::text::{clean_text, preprocess, Stemmer};
use crate::vocab::{pad, PaddedSequence, Vocabulary};

/// Per-category flags from the four-column schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CategoryFlags {
    pub threat: bool,
    pub obscene: bool,
    pub insult: bool,
    pub racism: bool,
}

impl CategoryFlags {
    pub fn any(&self) -> bool {
        self.threat || self.obscene || self.insult || self.racism
    }
}

/// One comment with its binary toxicity label (toxic = 1).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledComment {
    pub text: String,
    pub flags: Option<CategoryFlags>,
    pub label: u8,
}

/// Accepted input file layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schema {
    /// Columns `text,label`.
    BinaryLabel,
    /// Columns `text,threat,obscene,insult,racism`; label = OR of flags.
    CategoryFlags,
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schema::BinaryLabel => write!(f, "binary-label"),
            Schema::CategoryFlags => write!(f, "category-flags"),
        }
    }
}

/// Summary of one load: row accounting and class counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoadReport {
    pub schema: Schema,
    pub rows: usize,
    pub kept: usize,
    pub dropped_empty: usize,
    pub toxic: usize,
    pub nontoxic: usize,
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "schema: {}", self.schema)?;
        writeln!(f, "rows: {}", self.rows)?;
        writeln!(f, "kept: {}", self.kept)?;
        writeln!(f, "dropped_empty: {}", self.dropped_empty)?;
        writeln!(f, "toxic: {}", self.toxic)?;
        write!(f, "nontoxic: {}", self.nontoxic)
    }
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
}

/// Determines the schema from a header row.
pub fn detect_schema(headers: &csv::StringRecord) -> Result<Schema> {
    if header_index(headers, "text").is_none() {
        return Err(Error::Schema(format!(
            "no `text` column; expected header (text,label) or \
             (text,threat,obscene,insult,racism), got {headers:?}"
        )));
    }
    let flags = ["threat", "obscene", "insult", "racism"];
    let flag_hits = flags
        .iter()
        .filter(|n| header_index(headers, n).is_some())
        .count();
    if flag_hits == 4 {
        return Ok(Schema::CategoryFlags);
    }
    if header_index(headers, "label").is_some() {
        return Ok(Schema::BinaryLabel);
    }
    Err(Error::Schema(format!(
        "header must provide either a `label` column or all of \
         threat/obscene/insult/racism, got {headers:?}"
    )))
}

fn parse_flag(field: &str, column: &str, line: u64) -> Result<bool> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Row {
            line,
            message: format!("column `{column}` must be 0 or 1, got {other:?}"),
        }),
    }
}

/// Loads a dataset file under an explicit schema. Rows whose text cleans to
/// the empty string are dropped and counted in the report; any malformed
/// row aborts the load with its line number.
pub fn load_dataset(path: &Path, schema: Schema) -> Result<(Vec<LabeledComment>, LoadReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Schema(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot parse header row: {e}")))?
        .clone();

    let detected = detect_schema(&headers)?;
    if detected != schema {
        return Err(Error::Schema(format!(
            "file header matches {detected}, but {schema} was requested"
        )));
    }

    let text_col = header_index(&headers, "text").expect("checked by detect_schema");
    let label_col = header_index(&headers, "label");
    let flag_cols: Vec<(usize, &str)> = ["threat", "obscene", "insult", "racism"]
        .iter()
        .filter_map(|n| header_index(&headers, n).map(|i| (i, *n)))
        .collect();

    let mut comments = Vec::new();
    let mut report = LoadReport {
        schema,
        rows: 0,
        kept: 0,
        dropped_empty: 0,
        toxic: 0,
        nontoxic: 0,
    };

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Row {
                line,
                message: format!("malformed CSV record: {e}"),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        report.rows += 1;

        let field = |col: usize| -> Result<&str> {
            record.get(col).ok_or_else(|| Error::Row {
                line,
                message: format!("missing column {col}"),
            })
        };

        let text = field(text_col)?.to_string();
        let (flags, label) = match schema {
            Schema::BinaryLabel => {
                let col = label_col.expect("checked by detect_schema");
                let label = parse_flag(field(col)?, "label", line)?;
                (None, u8::from(label))
            }
            Schema::CategoryFlags => {
                let mut values = [false; 4];
                for (slot, (col, name)) in values.iter_mut().zip(&flag_cols) {
                    *slot = parse_flag(field(*col)?, name, line)?;
                }
                let flags = CategoryFlags {
                    threat: values[0],
                    obscene: values[1],
                    insult: values[2],
                    racism: values[3],
                };
                (Some(flags), u8::from(flags.any()))
            }
        };

        if clean_text(&text).is_empty() {
            report.dropped_empty += 1;
            continue;
        }
        report.kept += 1;
        if label == 1 {
            report.toxic += 1;
        } else {
            report.nontoxic += 1;
        }
        comments.push(LabeledComment { text, flags, label });
    }

    Ok((comments, report))
}

/// Loads a dataset file, detecting the schema from its header.
pub fn load_dataset_auto(path: &Path) -> Result<(Vec<LabeledComment>, LoadReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Schema(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot parse header row: {e}")))?
        .clone();
    let schema = detect_schema(&headers)?;
    drop(reader);
    load_dataset(path, schema)
}

/// Writes comments as a `(text,label)` CSV; handy for materializing
/// synthetic fixtures.
pub fn write_dataset(path: &Path, comments: &[LabeledComment]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    writer.write_record(["text", "label"]).map_err(csv_err)?;
    for c in comments {
        writer
            .write_record([c.text.as_str(), if c.label == 1 { "1" } else { "0" }])
            .map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

/// Disjoint train/test index sets covering `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Shuffles `0..n` with the seeded stream and takes the first
/// `floor(ratio * n)` indices as the training set.
pub fn split(n: usize, ratio: f64, rng: &mut SeededRng) -> Result<DatasetSplit> {
    if n < 2 {
        return Err(Error::Argument(format!("split needs n >= 2, got {n}")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Argument(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    let train_len = (ratio * n as f64).floor() as usize;
    let test_indices = perm.split_off(train_len);
    Ok(DatasetSplit {
        train_indices: perm,
        test_indices,
    })
}

/// K disjoint index folds; the first `n mod k` folds carry one extra
/// element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Vec<usize>>,
}

/// Shuffles `0..n` and deals it into `k` folds of near-equal size.
pub fn kfold(n: usize, k: usize, rng: &mut SeededRng) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Argument(format!("kfold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::Argument(format!(
            "kfold needs n >= k, got n = {n}, k = {k}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    let base = n / k;
    let extras = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let len = base + usize::from(fold < extras);
        folds.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(FoldPlan { k, folds })
}

const TOXIC_POOL: &[&str] = &[
    "খারাপ",
    "বাজে",
    "ফালতু",
    "জঘন্য",
    "পচা",
    "বোকা",
    "বিরক্তিকর",
    "অসহ্য",
];

const NONTOXIC_POOL: &[&str] = &[
    "ভালো",
    "সুন্দর",
    "চমৎকার",
    "দারুণ",
    "মিষ্টি",
    "শান্ত",
    "অসাধারণ",
    "প্রিয়",
];

/// Word pools backing [`synth_corpus`]; exposed so tests can check the
/// disjointness that guarantees linear separability.
pub fn synth_pools() -> (&'static [&'static str], &'static [&'static str]) {
    (TOXIC_POOL, NONTOXIC_POOL)
}

/// Deterministic synthetic corpus: `n/2` toxic and `n/2` nontoxic comments
/// assembled from two disjoint Bangla word pools, alternating labels.
pub fn synth_corpus(n: usize, rng: &mut SeededRng) -> Result<Vec<LabeledComment>> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::Argument(format!(
            "synth_corpus needs an even n >= 2, got {n}"
        )));
    }
    let mut comments = Vec::with_capacity(n);
    for i in 0..n {
        let toxic = i % 2 == 0;
        let pool = if toxic { TOXIC_POOL } else { NONTOXIC_POOL };
        let words = 3 + rng.gen_index(6);
        let text = (0..words)
            .map(|_| pool[rng.gen_index(pool.len())])
            .collect::<Vec<_>>()
            .join(" ");
        comments.push(LabeledComment {
            text,
            flags: None,
            label: u8::from(toxic),
        });
    }
    Ok(comments)
}

/// A dataset after preprocessing: padded index rows plus labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedDataset {
    pub sequences: Vec<PaddedSequence>,
    pub labels: Vec<u8>,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Row subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset {
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Text serialization: header, then one line per row holding the
    /// label, the pre-padding length, and the `max_len` indices.
    pub fn save(&self, path: &Path, max_len: usize) -> Result<()> {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "toxdet-seq v1 {} {}", self.len(), max_len);
        for (seq, &label) in self.sequences.iter().zip(&self.labels) {
            let _ = write!(out, "{label} {}", seq.original_length());
            for idx in seq.indices() {
                let _ = write!(out, " {idx}");
            }
            let _ = writeln!(out);
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EncodedDataset> {
        let contents = std::fs::read_to_string(path)?;
        let mut lines = contents.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty sequence file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "toxdet-seq" || parts[1] != "v1" {
            return Err(Error::Format(format!("bad sequence file header {header:?}")));
        }
        let n: usize = parts[2]
            .parse()
            .map_err(|_| Error::Format(format!("bad row count in header {header:?}")))?;
        let max_len: usize = parts[3]
            .parse()
            .map_err(|_| Error::Format(format!("bad max_len in header {header:?}")))?;
        let mut sequences = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for (row, line) in lines.enumerate() {
            let mut fields = line.split_whitespace();
            let parse_err =
                || Error::Format(format!("bad sequence row {} (line {})", row, row + 2));
            let label: u8 = fields.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
            if label > 1 {
                return Err(parse_err());
            }
            let original: usize = fields.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
            let indices: Vec<u32> = fields
                .map(|f| f.parse().map_err(|_| parse_err()))
                .collect::<Result<_>>()?;
            if indices.len() != max_len {
                return Err(parse_err());
            }
            sequences.push(PaddedSequence::from_raw(indices, original));
            labels.push(label);
        }
        if sequences.len() != n {
            return Err(Error::Format(format!(
                "sequence file header claims {n} rows but holds {}",
                sequences.len()
            )));
        }
        Ok(EncodedDataset { sequences, labels })
    }
}

/// Cleans, tokenizes, stems, sequences, and pads every comment.
pub fn encode_dataset(
    comments: &[LabeledComment],
    vocab: &Vocabulary,
    stemmer: &Stemmer,
    max_len: usize,
) -> Result<EncodedDataset> {
    let mut sequences = Vec::with_capacity(comments.len());
    let mut labels = Vec::with_capacity(comments.len());
    for comment in comments {
        let tokens = preprocess(&comment.text, stemmer);
        sequences.push(pad(&vocab.sequence(&tokens), max_len)?);
        labels.push(comment.label);
    }
    Ok(EncodedDataset { sequences, labels })
}

/// Stemmed token sequences for a subset of comments; the usual input to
/// vocabulary construction.
pub fn tokenize_subset(
    comments: &[LabeledComment],
    indices: &[usize],
    stemmer: &Stemmer,
) -> Vec<Vec<crate::text::Token>> {
    indices
        .iter()
        .map(|&i| preprocess(&comments[i].text, stemmer))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Stemmer;
    use std::io::Write as _;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn flag_schema_or_reduces_to_label() {
        let file = write_temp(
            "text,threat,obscene,insult,racism\n\
             ভালো কথা,0,1,0,0\n\
             ভালো দিন,0,0,0,0\n",
        );
        let (comments, report) = load_dataset(file.path(), Schema::CategoryFlags).unwrap();
        assert_eq!(comments[0].label, 1);
        assert_eq!(comments[1].label, 0);
        assert_eq!(report.toxic, 1);
        assert_eq!(report.nontoxic, 1);
    }

    #[test]
    fn label_derivation_is_monotone_in_flags() {
        for bits in 0..16u8 {
            let flags = CategoryFlags {
                threat: bits & 1 != 0,
                obscene: bits & 2 != 0,
                insult: bits & 4 != 0,
                racism: bits & 8 != 0,
            };
            let label = u8::from(flags.any());
            let raised = CategoryFlags { threat: true, ..flags };
            assert!(u8::from(raised.any()) >= label);
        }
    }

    #[test]
    fn missing_text_column_is_schema_error() {
        let file = write_temp("body,label\nhello,1\n");
        let err = load_dataset_auto(file.path()).unwrap_err();
        assert_eq!(err.category(), "schema");
        assert!(err.to_string().contains("text"));
    }

    #[test]
    fn malformed_row_names_line_number() {
        let file = write_temp("text,label\nভালো,1\nবাজে,yes\n");
        let err = load_dataset_auto(file.path()).unwrap_err();
        assert_eq!(err.category(), "row");
        assert!(err.to_string().contains("line 3"), "got: {err}");
    }

    #[test]
    fn rows_cleaning_to_empty_are_dropped_and_counted() {
        let file = write_temp("text,label\n😀🙏,1\nভালো,0\n");
        let (comments, report) = load_dataset_auto(file.path()).unwrap();
        assert_eq!(comments.len(), 1);
        assert_eq!(report.dropped_empty, 1);
        assert_eq!(report.kept, 1);
        assert_eq!(report.rows, 2);
    }

    #[test]
    fn dataset_csv_round_trip() {
        let mut rng = SeededRng::new(5);
        let corpus = synth_corpus(10, &mut rng).unwrap();
        let file = tempfile::NamedTempFile::new().unwrap();
        write_dataset(file.path(), &corpus).unwrap();
        let (back, report) = load_dataset_auto(file.path()).unwrap();
        assert_eq!(report.schema, Schema::BinaryLabel);
        assert_eq!(back.len(), corpus.len());
        for (a, b) in corpus.iter().zip(&back) {
            assert_eq!(a.text, b.text);
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn split_matches_reference_sizes() {
        let mut rng = SeededRng::new(1);
        let s = split(12282, 0.8, &mut rng).unwrap();
        assert_eq!(s.train_indices.len(), 9825);
        assert_eq!(s.test_indices.len(), 2457);

        let mut rng = SeededRng::new(1);
        let s = split(10, 0.8, &mut rng).unwrap();
        assert_eq!(s.train_indices.len(), 8);
        assert_eq!(s.test_indices.len(), 2);
    }

    #[test]
    fn split_is_seed_deterministic_and_partitions() {
        let a = split(100, 0.8, &mut SeededRng::new(9)).unwrap();
        let b = split(100, 0.8, &mut SeededRng::new(9)).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a
            .train_indices
            .iter()
            .chain(&a.test_indices)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_tiny_or_degenerate_input() {
        assert!(split(1, 0.8, &mut SeededRng::new(0)).is_err());
        assert!(split(10, 0.0, &mut SeededRng::new(0)).is_err());
        assert!(split(10, 1.0, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn kfold_sizes_and_partition() {
        let plan = kfold(10, 5, &mut SeededRng::new(3)).unwrap();
        assert!(plan.folds.iter().all(|f| f.len() == 2));

        let plan = kfold(12282, 5, &mut SeededRng::new(3)).unwrap();
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2457, 2457, 2456, 2456, 2456]);
        let mut all: Vec<usize> = plan.folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all.len(), 12282);
        assert_eq!(all, (0..12282).collect::<Vec<_>>());
    }

    #[test]
    fn kfold_rejects_bad_arguments() {
        assert!(kfold(3, 5, &mut SeededRng::new(0)).is_err());
        assert!(kfold(10, 1, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn synth_corpus_is_balanced_and_deterministic() {
        let a = synth_corpus(32, &mut SeededRng::new(11)).unwrap();
        let b = synth_corpus(32, &mut SeededRng::new(11)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|c| c.label == 1).count(), 16);
        assert_eq!(a.iter().filter(|c| c.label == 0).count(), 16);
        assert!(synth_corpus(7, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn synth_pools_stay_disjoint_even_after_stemming() {
        let stemmer = Stemmer::default();
        let (toxic, nontoxic) = synth_pools();
        let stem_set = |pool: &[&str]| -> std::collections::HashSet<String> {
            pool.iter()
                .flat_map(|w| preprocess(w, &stemmer))
                .map(|t| t.into_string())
                .collect()
        };
        let toxic_stems = stem_set(toxic);
        let nontoxic_stems = stem_set(nontoxic);
        assert!(toxic_stems.is_disjoint(&nontoxic_stems));
    }

    #[test]
    fn encoded_dataset_file_round_trip() {
        let stemmer = Stemmer::default();
        let corpus = synth_corpus(8, &mut SeededRng::new(2)).unwrap();
        let token_lists = tokenize_subset(&corpus, &(0..8).collect::<Vec<_>>(), &stemmer);
        let vocab = Vocabulary::build(&token_lists);
        let encoded = encode_dataset(&corpus, &vocab, &stemmer, 16).unwrap();
        let file = tempfile::NamedTempFile::new().unwrap();
        encoded.save(file.path(), 16).unwrap();
        let back = EncodedDataset::load(file.path()).unwrap();
        assert_eq!(encoded, back);
    }
}
