//! JSONL parallel-corpus ingestion and the seeded three-way split.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::tokenization::basic_tokenize;

#[derive(Deserialize)]
struct RawRecord {
    src: String,
    tgt: String,
}

/// Reads one `{"src": …, "tgt": …}` object per line. Any malformed line,
/// missing field, or side that normalizes to nothing is an error naming the
/// line; an empty file is an error.
pub fn read_records(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let rec: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if basic_tokenize(&rec.src).is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "src is empty after normalization".to_string(),
            });
        }
        if basic_tokenize(&rec.tgt).is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "tgt is empty after normalization".to_string(),
            });
        }
        out.push((rec.src, rec.tgt));
    }
    if out.is_empty() {
        return Err(Error::Parse { line: 0, msg: "dataset holds no records".to_string() });
    }
    Ok(out)
}

pub struct SplitCorpus {
    pub train: Vec<(String, String)>,
    pub val: Vec<(String, String)>,
    pub test: Vec<(String, String)>,
}

/// Seeded shuffle, then train/val take their nearest-integer shares and the
/// test split takes the remainder. Same seed, same records, same split.
pub fn split_records(
    mut records: Vec<(String, String)>,
    seed: u64,
    train_frac: f32,
    val_frac: f32,
) -> Result<SplitCorpus> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::config(format!(
            "split fractions train={train_frac} val={val_frac} must be positive and sum below 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records.shuffle(&mut rng);
    let n = records.len();
    // Rounding (not floor) so the f32 fractions land on the intended share:
    // 0.7f32 widens to 0.699999988… and 40 records must still yield 28.
    let n_train = ((n as f64) * (train_frac as f64)).round() as usize;
    let n_val = ((n as f64) * (val_frac as f64)).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::config(format!(
            "{n} records cannot fill a {train_frac}/{val_frac} train/val split plus a test share"
        )));
    }
    let test = records.split_off(n_train + n_val);
    let val = records.split_off(n_train);
    Ok(SplitCorpus { train: records, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_jsonl(lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        std::fs::write(&path, lines.join("\n")).unwrap();
        (dir, path)
    }

    #[test]
    fn well_formed_lines_become_records() {
        let (_d, path) = write_jsonl(&[
            r#"{"src":"hello there","tgt":"bonjour"}"#,
            r#"{"src":"two","tgt":"deux","note":"extras are fine"}"#,
        ]);
        let recs = read_records(&path).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0], ("hello there".to_string(), "bonjour".to_string()));
    }

    #[test]
    fn malformed_lines_name_their_line_number() {
        let (_d, path) = write_jsonl(&[r#"{"src":"a","tgt":"b"}"#, "not json"]);
        let err = read_records(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "got: {err}");

        let (_d, path) = write_jsonl(&[r#"{"src":"a"}"#]);
        let err = read_records(&path).unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("tgt"), "got: {err}");

        let (_d, path) = write_jsonl(&[r#"{"src":"   ","tgt":"b"}"#]);
        let err = read_records(&path).unwrap_err().to_string();
        assert!(err.contains("empty after normalization"), "got: {err}");
    }

    #[test]
    fn empty_files_are_rejected() {
        let (_d, path) = write_jsonl(&[]);
        assert!(read_records(&path).is_err());
    }

    #[test]
    fn split_is_deterministic_per_seed_and_partitions_everything() {
        let records: Vec<(String, String)> =
            (0..40).map(|i| (format!("s{i}"), format!("t{i}"))).collect();
        let a = split_records(records.clone(), 9, 0.7, 0.15).unwrap();
        let b = split_records(records.clone(), 9, 0.7, 0.15).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.val, b.val);
        assert_eq!(a.test, b.test);
        assert_eq!(a.train.len(), 28);
        assert_eq!(a.val.len(), 6);
        assert_eq!(a.test.len(), 6);

        let mut all: Vec<_> = a.train.iter().chain(&a.val).chain(&a.test).cloned().collect();
        all.sort();
        let mut want = records.clone();
        want.sort();
        assert_eq!(all, want, "splits partition the corpus");

        let c = split_records(records, 10, 0.7, 0.15).unwrap();
        assert_ne!(a.train, c.train, "a different seed reorders the split");
    }

    #[test]
    fn undersized_corpora_and_bad_fractions_are_rejected() {
        let records: Vec<(String, String)> =
            (0..3).map(|i| (format!("s{i}"), format!("t{i}"))).collect();
        assert!(split_records(records.clone(), 0, 0.5, 0.4).is_err(), "no test share left");
        assert!(split_records(records.clone(), 0, 0.1, 0.1).is_err(), "train floor hits zero");
        assert!(split_records(records, 0, 0.0, 0.5).is_err());
    }
}
