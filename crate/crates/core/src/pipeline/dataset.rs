use std::collections::HashSet;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PipelineError;
use crate::chem::{parse_smiles_with, MolGraph, ParseOptions};

/// One text-molecule pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub smiles: String,
    pub description: String,
    pub graph: MolGraph,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRecord {
    pub line: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub skipped: Vec<SkippedRecord>,
}

impl Dataset {
    pub fn records_in(&self) -> usize {
        self.records.len() + self.skipped.len()
    }

    pub fn accounting(&self) -> String {
        format!(
            "records_in={} records_used={} records_skipped={}",
            self.records_in(),
            self.records.len(),
            self.skipped.len()
        )
    }
}

/// Parses `id<TAB>smiles<TAB>description` lines. A first line starting with
/// `#` is a header; blank lines are ignored. Records whose SMILES fail to
/// parse are skipped and counted; structural problems are errors.
pub fn parse_dataset(text: &str, opts: ParseOptions) -> Result<Dataset, PipelineError> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        if line.trim().is_empty() || (n == 0 && line.starts_with('#')) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(PipelineError::Input(format!(
                "line {}: expected 3 tab-separated fields, found {}",
                lineno,
                fields.len()
            )));
        }
        let (id, smiles, description) = (fields[0].trim(), fields[1].trim(), fields[2].trim());
        if id.is_empty() || description.is_empty() {
            return Err(PipelineError::Input(format!("line {}: empty id or description", lineno)));
        }
        if !seen.insert(id.to_string()) {
            return Err(PipelineError::Input(format!("line {}: duplicate id '{}'", lineno, id)));
        }
        match parse_smiles_with(smiles, opts) {
            Ok(graph) => records.push(Record {
                id: id.to_string(),
                smiles: smiles.to_string(),
                description: description.to_string(),
                graph,
            }),
            Err(e) => {
                warn!("line {}: skipping '{}': {}", lineno, id, e);
                skipped.push(SkippedRecord {
                    line: lineno,
                    id: id.to_string(),
                    reason: e.to_string(),
                });
            }
        }
    }
    if records.is_empty() {
        return Err(PipelineError::Input("dataset has no usable records".into()));
    }
    let ds = Dataset { records, skipped };
    info!("{}", ds.accounting());
    Ok(ds)
}

pub fn load_dataset(path: &Path, opts: ParseOptions) -> Result<Dataset, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Input(format!("cannot read dataset {}: {}", path.display(), e)))?;
    parse_dataset(&text, opts)
}

/// Writes records in the dataset format with a header line.
pub fn format_dataset(records: &[Record]) -> String {
    let mut s = String::from("# id\tsmiles\tdescription\n");
    for r in records {
        s.push_str(&format!("{}\t{}\t{}\n", r.id, r.smiles, r.description));
    }
    s
}

/// Index sets of an 8:1:1 split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn all(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.train.iter().chain(&self.valid).chain(&self.test).copied().collect();
        v.sort_unstable();
        v
    }
}

/// Seeded shuffle, then 80% train, 10% valid, remainder test.
pub fn split_indices(n: usize, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 8 / 10;
    let n_valid = n / 10;
    let mut split = Split {
        train: idx[..n_train].to_vec(),
        valid: idx[n_train..n_train + n_valid].to_vec(),
        test: idx[n_train + n_valid..].to_vec(),
    };
    split.train.sort_unstable();
    split.valid.sort_unstable();
    split.test.sort_unstable();
    split
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_lines() {
        let ds = parse_dataset("#id\tsmiles\ttext\na\tCCO\tethanol.\nb\tC\tmethane.\nc\tc1ccccc1\tbenzene.\n", ParseOptions::default()).unwrap();
        assert_eq!(ds.records.len(), 3);
        assert_eq!(ds.records[2].graph.n_atoms(), 6);
    }

    #[test]
    fn two_fields_reports_line() {
        let err = parse_dataset("a\tCCO\tethanol\nb\tC\n", ParseOptions::default()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{}", err);
    }

    #[test]
    fn invalid_smiles_skipped_and_counted() {
        let ds = parse_dataset("a\tCCO\tethanol\nb\tC1CC\tbroken ring\nc\tN\tammonia\n", ParseOptions::default()).unwrap();
        assert_eq!(ds.skipped.len(), 1);
        assert_eq!(ds.skipped[0].line, 2);
        assert_eq!(ds.records_in(), ds.records.len() + ds.skipped.len());
    }

    #[test]
    fn empty_and_duplicates() {
        assert!(parse_dataset("# header only\n", ParseOptions::default()).is_err());
        assert!(parse_dataset("a\tC\tx\na\tCC\ty\n", ParseOptions::default()).is_err());
        assert!(load_dataset(Path::new("/definitely/not/here.tsv"), ParseOptions::default()).is_err());
    }

    #[test]
    fn split_ratio_and_determinism() {
        let s = split_indices(100, 3);
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (80, 10, 10));
        assert_eq!(s, split_indices(100, 3));
        assert_eq!(s.all(), (0..100).collect::<Vec<_>>());
        let s = split_indices(8, 1);
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (6, 0, 2));
    }

    #[test]
    fn format_round_trip() {
        let ds = parse_dataset("a\tCCO\tethanol .\nb\tC\tmethane\n", ParseOptions::default()).unwrap();
        let back = parse_dataset(&format_dataset(&ds.records), ParseOptions::default()).unwrap();
        assert_eq!(back.records, ds.records);
    }
}
