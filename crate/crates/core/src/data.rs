//! Dataset representation, ingestion, splitting, and per-system grouping.
//!
//! A dataset is an ordered list of records, each carrying a precomputed
//! feature vector, a system identifier, and an optional MOS label. Records
//! without a label form the unlabeled partition used for pseudo-labeling.
//! Feature extraction happens upstream; this module is agnostic to where the
//! vectors came from.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

/// One audio sample: feature vector, system id, optional MOS label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub system_id: String,
    pub features: Vec<f64>,
    pub mos: Option<f64>,
}

impl DatasetRecord {
    pub fn is_labeled(&self) -> bool {
        self.mos.is_some()
    }
}

/// An ordered collection of records sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<DatasetRecord>,
}

/// On-disk formats understood by [`load_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Jsonl,
    Csv,
}

impl FileFormat {
    /// Infers the format from a file extension (`.jsonl`/`.json` or `.csv`).
    pub fn from_path(path: &Path) -> Result<FileFormat> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Ok(FileFormat::Jsonl),
            Some("csv") => Ok(FileFormat::Csv),
            other => Err(Error::InvalidConfig {
                field: "format".into(),
                msg: format!(
                    "cannot infer file format from extension {:?}; expected .jsonl or .csv",
                    other.unwrap_or("")
                ),
            }),
        }
    }
}

/// Fractions, seed, and grouping policy for a train/dev/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub group_by_system: bool,
}

impl SplitSpec {
    pub fn new(train: f64, dev: f64, test: f64, seed: u64) -> Self {
        SplitSpec {
            train_fraction: train,
            dev_fraction: dev,
            test_fraction: test,
            seed,
            group_by_system: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("split.train_fraction", self.train_fraction),
            ("split.dev_fraction", self.dev_fraction),
            ("split.test_fraction", self.test_fraction),
        ];
        for (field, f) in fractions {
            if !f.is_finite() || !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidConfig {
                    field: field.into(),
                    msg: format!("must lie in [0, 1], got {f}"),
                });
            }
        }
        let total = self.train_fraction + self.dev_fraction + self.test_fraction;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig {
                field: "split".into(),
                msg: format!("fractions must sum to 1, got {total}"),
            });
        }
        Ok(())
    }
}

impl Dataset {
    pub fn new(name: impl Into<String>, records: Vec<DatasetRecord>) -> Result<Dataset> {
        let ds = Dataset {
            name: name.into(),
            records,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Checks unique ids, a shared feature dimension >= 1, and finite values.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.records.len());
        let dim = self.feature_dim();
        for rec in &self.records {
            if !seen.insert(rec.id.as_str()) {
                return Err(Error::DuplicateId { id: rec.id.clone() });
            }
            if rec.features.is_empty() || rec.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    id: rec.id.clone(),
                    expected: dim,
                    got: rec.features.len(),
                });
            }
            if rec.features.iter().any(|f| !f.is_finite()) {
                return Err(Error::NonFinite {
                    what: format!("features of record '{}'", rec.id),
                });
            }
            if let Some(m) = rec.mos {
                if !m.is_finite() {
                    return Err(Error::NonFinite {
                        what: format!("mos of record '{}'", rec.id),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Shared feature dimension; 0 only for an empty dataset.
    pub fn feature_dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.features.len())
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.records[i].is_labeled()).collect()
    }

    pub fn unlabeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.records[i].is_labeled()).collect()
    }

    /// Sub-dataset containing only labeled records, preserving order.
    pub fn labeled_subset(&self) -> Dataset {
        Dataset {
            name: self.name.clone(),
            records: self
                .records
                .iter()
                .filter(|r| r.is_labeled())
                .cloned()
                .collect(),
        }
    }

    /// Labels of all records, in record order; errors if any record is unlabeled.
    pub fn labels(&self) -> Result<Vec<f64>> {
        self.records
            .iter()
            .map(|r| {
                r.mos.ok_or_else(|| Error::InvalidConfig {
                    field: "dataset".into(),
                    msg: format!("record '{}' has no mos label", r.id),
                })
            })
            .collect()
    }
}

/// Loads a dataset from a JSONL or CSV file.
///
/// JSONL: one object per line, `{"id","system_id","features":[...],"mos":number|null}`.
/// CSV: header `id,system_id,mos,f0,...,f{d-1}`; an empty mos cell means unlabeled.
pub fn load_dataset(path: &Path, format: FileFormat) -> Result<Dataset> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let records = match format {
        FileFormat::Jsonl => load_jsonl(path)?,
        FileFormat::Csv => load_csv(path)?,
    };
    let ds = Dataset { name, records };
    ds.validate()?;
    Ok(ds)
}

fn load_jsonl(path: &Path) -> Result<Vec<DatasetRecord>> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(&display, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&display, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: display.clone(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

fn load_csv(path: &Path) -> Result<Vec<DatasetRecord>> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: display.clone(),
            line: 1,
            msg: e.to_string(),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: display.clone(),
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    if headers.len() < 4 || &headers[0] != "id" || &headers[1] != "system_id" || &headers[2] != "mos"
    {
        return Err(Error::Parse {
            path: display,
            line: 1,
            msg: "header must start with id,system_id,mos,f0,...".into(),
        });
    }
    for (k, h) in headers.iter().skip(3).enumerate() {
        if h != format!("f{k}") {
            return Err(Error::Parse {
                path: display,
                line: 1,
                msg: format!("expected feature column 'f{k}', found '{h}'"),
            });
        }
    }

    let dim = headers.len() - 3;
    let mut records = Vec::new();
    for result in reader.records() {
        let row = result.map_err(|e| Error::Parse {
            path: display.clone(),
            line: 0,
            msg: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != dim + 3 {
            return Err(Error::Parse {
                path: display.clone(),
                line,
                msg: format!("expected {} columns, found {}", dim + 3, row.len()),
            });
        }
        let parse_f64 = |field: &str, what: &str| -> Result<f64> {
            field.trim().parse::<f64>().map_err(|_| Error::Parse {
                path: display.clone(),
                line,
                msg: format!("invalid {what}: '{field}'"),
            })
        };
        let mos = match row[2].trim() {
            "" => None,
            s => Some(parse_f64(s, "mos")?),
        };
        let mut features = Vec::with_capacity(dim);
        for k in 0..dim {
            features.push(parse_f64(&row[3 + k], &format!("f{k}"))?);
        }
        records.push(DatasetRecord {
            id: row[0].to_string(),
            system_id: row[1].to_string(),
            features,
            mos,
        });
    }
    Ok(records)
}

/// Writes a dataset as JSONL (UTF-8, LF line endings).
pub fn save_jsonl<W: Write>(ds: &Dataset, mut out: W) -> std::io::Result<()> {
    for rec in &ds.records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes a dataset as CSV with header `id,system_id,mos,f0,...`.
pub fn save_csv<W: Write>(ds: &Dataset, out: W) -> std::io::Result<()> {
    let dim = ds.feature_dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "system_id".to_string(), "mos".to_string()];
    header.extend((0..dim).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(dim + 3);
    for rec in &ds.records {
        row.clear();
        row.push(rec.id.clone());
        row.push(rec.system_id.clone());
        row.push(rec.mos.map_or(String::new(), |m| format!("{m}")));
        row.extend(rec.features.iter().map(|f| format!("{f}")));
        w.write_record(&row)?;
    }
    w.flush()
}

/// Splits a dataset into train/dev/test partitions.
///
/// Counts are floor(fraction * n) with the remainder handed to train, dev,
/// test in that order. With `group_by_system`, whole systems are assigned to
/// splits (greedy, largest record deficit first) so no system straddles two
/// splits. Each split keeps the original record order. Deterministic in
/// `spec.seed`.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = ds.len();
    let mut rng = substream(spec.seed, "split");

    let mut assignment = vec![0usize; n]; // 0 train, 1 dev, 2 test
    if spec.group_by_system {
        let groups = group_by_system(ds);
        let mut systems: Vec<&String> = groups.keys().collect();
        systems.shuffle(&mut rng);
        let targets = [
            spec.train_fraction * n as f64,
            spec.dev_fraction * n as f64,
            spec.test_fraction * n as f64,
        ];
        let mut assigned = [0usize; 3];
        for sys in systems {
            // Largest remaining record deficit wins; ties go train, dev, test.
            let mut best = 0;
            let mut best_deficit = f64::NEG_INFINITY;
            for s in 0..3 {
                let deficit = targets[s] - assigned[s] as f64;
                if deficit > best_deficit {
                    best_deficit = deficit;
                    best = s;
                }
            }
            for &idx in &groups[sys] {
                assignment[idx] = best;
            }
            assigned[best] += groups[sys].len();
        }
    } else {
        let mut counts = [
            (spec.train_fraction * n as f64).floor() as usize,
            (spec.dev_fraction * n as f64).floor() as usize,
            (spec.test_fraction * n as f64).floor() as usize,
        ];
        let mut rem = n - counts.iter().sum::<usize>();
        for c in counts.iter_mut() {
            if rem == 0 {
                break;
            }
            *c += 1;
            rem -= 1;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for (pos, &idx) in order.iter().enumerate() {
            assignment[idx] = if pos < counts[0] {
                0
            } else if pos < counts[0] + counts[1] {
                1
            } else {
                2
            };
        }
    }

    let mut parts: [Vec<DatasetRecord>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (idx, rec) in ds.records.iter().enumerate() {
        parts[assignment[idx]].push(rec.clone());
    }

    let fractions = [spec.train_fraction, spec.dev_fraction, spec.test_fraction];
    let names = ["train", "dev", "test"];
    for s in 0..3 {
        if fractions[s] > 0.0 && parts[s].is_empty() {
            return Err(Error::EmptySplit {
                split: names[s].into(),
            });
        }
    }

    let [train, dev, test] = parts;
    Ok((
        Dataset {
            name: format!("{}_train", ds.name),
            records: train,
        },
        Dataset {
            name: format!("{}_dev", ds.name),
            records: dev,
        },
        Dataset {
            name: format!("{}_test", ds.name),
            records: test,
        },
    ))
}

/// Maps each system id to the indices of its records. Sorted by system id.
pub fn group_by_system(ds: &Dataset) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (idx, rec) in ds.records.iter().enumerate() {
        groups.entry(rec.system_id.clone()).or_default().push(idx);
    }
    groups
}
