//! Cohort CSV codec.
//!
//! Layout: a header row, the clinical columns below in this order, then one
//! column per feature named `f000`, `f001`, ... Booleans are `0`/`1`; floats
//! use the shortest representation that parses back to the same value.

use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use csv::StringRecord;

use super::{Cohort, CohortError, SubjectRecord};

pub const CLINICAL_COLUMNS: [&str; 15] = [
    "subject_id",
    "center_id",
    "age",
    "sex",
    "htn",
    "dm",
    "af",
    "smk",
    "hcl",
    "nihss",
    "p2p",
    "ivt",
    "reca",
    "mrs_3m",
    "icv",
];

fn feature_column(j: usize) -> String {
    format!("f{j:03}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CohortError {
    CohortError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn csv_err(e: csv::Error) -> CohortError {
    CohortError::Csv(e.to_string())
}

pub fn write_cohort_csv(cohort: &Cohort, path: impl AsRef<Path>) -> Result<(), CohortError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let dim = cohort.feature_dim();
    let mut header: Vec<String> = CLINICAL_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..dim).map(feature_column));
    w.write_record(&header).map_err(csv_err)?;
    let b = |v: bool| if v { "1".to_string() } else { "0".to_string() };
    for s in &cohort.subjects {
        if s.features.len() != dim {
            return Err(CohortError::InvalidSpec(format!(
                "subject {} has {} features, expected {dim}",
                s.subject_id,
                s.features.len()
            )));
        }
        let mut rec = vec![
            s.subject_id.to_string(),
            s.center_id.to_string(),
            s.age.to_string(),
            b(s.sex),
            b(s.htn),
            b(s.dm),
            b(s.af),
            b(s.smk),
            b(s.hcl),
            s.nihss.to_string(),
            s.p2p.to_string(),
            b(s.ivt),
            b(s.reca),
            s.mrs_3m.to_string(),
            s.icv.to_string(),
        ];
        rec.extend(s.features.iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

struct Row<'a> {
    record: &'a StringRecord,
    row: usize,
}

impl Row<'_> {
    fn parse<T: FromStr>(&self, idx: usize, column: &str) -> Result<T, CohortError> {
        let raw = self.record.get(idx).unwrap_or("");
        raw.trim().parse().map_err(|_| CohortError::Parse {
            row: self.row,
            column: column.to_string(),
            value: raw.to_string(),
        })
    }

    fn flag(&self, idx: usize, column: &str) -> Result<bool, CohortError> {
        match self.parse::<u8>(idx, column)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(CohortError::Invariant {
                row: self.row,
                message: format!("{column} = {v}, expected 0 or 1"),
            }),
        }
    }
}

/// Reads a cohort written by [`write_cohort_csv`]. Row numbers in errors are
/// 1-based data rows (the header is row 0).
pub fn load_cohort_csv(
    path: impl AsRef<Path>,
    n_volume_features: usize,
) -> Result<Cohort, CohortError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(std::io::BufReader::new(file));
    let header = r.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CohortError::MissingColumn(name.to_string()))
    };
    let mut idx = [0usize; CLINICAL_COLUMNS.len()];
    for (slot, name) in idx.iter_mut().zip(CLINICAL_COLUMNS) {
        *slot = find(name)?;
    }
    let n_features = header
        .iter()
        .filter(|h| h.starts_with('f') && h[1..].parse::<usize>().is_ok())
        .count();
    let feat_idx: Vec<usize> = (0..n_features)
        .map(|j| find(&feature_column(j)))
        .collect::<Result<_, _>>()?;
    if n_volume_features > n_features {
        return Err(CohortError::InvalidSpec(format!(
            "{n_volume_features} volume features requested but the file has {n_features} feature columns"
        )));
    }

    let mut subjects = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let record = rec.map_err(csv_err)?;
        let row = Row {
            record: &record,
            row: i + 1,
        };
        let c = |k: usize| CLINICAL_COLUMNS[k];
        let s = SubjectRecord {
            subject_id: row.parse(idx[0], c(0))?,
            center_id: row.parse(idx[1], c(1))?,
            age: row.parse(idx[2], c(2))?,
            sex: row.flag(idx[3], c(3))?,
            htn: row.flag(idx[4], c(4))?,
            dm: row.flag(idx[5], c(5))?,
            af: row.flag(idx[6], c(6))?,
            smk: row.flag(idx[7], c(7))?,
            hcl: row.flag(idx[8], c(8))?,
            nihss: row.parse(idx[9], c(9))?,
            p2p: row.parse(idx[10], c(10))?,
            ivt: row.flag(idx[11], c(11))?,
            reca: row.flag(idx[12], c(12))?,
            mrs_3m: row.parse(idx[13], c(13))?,
            icv: row.parse(idx[14], c(14))?,
            features: feat_idx
                .iter()
                .enumerate()
                .map(|(j, &k)| row.parse(k, &feature_column(j)))
                .collect::<Result<_, _>>()?,
        };
        s.check().map_err(|message| CohortError::Invariant {
            row: row.row,
            message,
        })?;
        subjects.push(s);
    }
    Ok(Cohort {
        subjects,
        n_volume_features,
    })
}
