//! Longitudinal datasets in long format: ingestion, validation, summaries.
//!
//! A dataset is a collection of subjects, each carrying a time-ordered series
//! of observations and a set of time-invariant covariates. Input files are
//! long-format CSV with a header row; `NA` or empty cells are treated as
//! missing and the affected observation row is dropped (never the whole
//! subject), with a running warning count surfaced to the caller.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::stats::percentile;

/// One measurement of the outcome at a given time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub outcome: f64,
}

/// A subject: id, time-ordered observations, time-invariant covariates.
#[derive(Debug, Clone)]
pub struct SubjectRecord {
    pub id: String,
    /// Strictly increasing in time.
    pub observations: Vec<Observation>,
    pub covariates: BTreeMap<String, f64>,
}

impl SubjectRecord {
    pub fn n_obs(&self) -> usize {
        self.observations.len()
    }
}

/// A validated long-format longitudinal dataset.
#[derive(Debug, Clone)]
pub struct LongitudinalDataset {
    pub subjects: Vec<SubjectRecord>,
    pub id_name: String,
    pub time_name: String,
    pub outcome_name: String,
    pub covariate_names: Vec<String>,
    /// Observation rows dropped during ingestion because of missing values.
    pub dropped_rows: usize,
}

impl LongitudinalDataset {
    /// Build a dataset from in-memory subjects, enforcing the invariants.
    pub fn new(
        mut subjects: Vec<SubjectRecord>,
        id_name: &str,
        time_name: &str,
        outcome_name: &str,
        covariate_names: &[String],
    ) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::EmptyDataset);
        }
        sort_subjects(&mut subjects);
        for s in &subjects {
            if s.observations.is_empty() {
                return Err(Error::EmptyDataset);
            }
            for o in &s.observations {
                if !o.time.is_finite() {
                    return Err(Error::NonFiniteValue {
                        subject: s.id.clone(),
                        what: "time".into(),
                    });
                }
                if !o.outcome.is_finite() {
                    return Err(Error::NonFiniteValue {
                        subject: s.id.clone(),
                        what: "outcome".into(),
                    });
                }
            }
            for w in s.observations.windows(2) {
                if w[1].time <= w[0].time {
                    return Err(Error::DuplicateTimePoint {
                        subject: s.id.clone(),
                        time: w[1].time,
                    });
                }
            }
            for name in covariate_names {
                match s.covariates.get(name) {
                    Some(v) if v.is_finite() => {}
                    _ => {
                        return Err(Error::MissingCovariateValue {
                            subject: s.id.clone(),
                            name: name.clone(),
                        })
                    }
                }
            }
        }
        Ok(Self {
            subjects,
            id_name: id_name.to_string(),
            time_name: time_name.to_string(),
            outcome_name: outcome_name.to_string(),
            covariate_names: covariate_names.to_vec(),
            dropped_rows: 0,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_obs(&self) -> usize {
        self.subjects.iter().map(SubjectRecord::n_obs).sum()
    }

    /// All observation times pooled over subjects, ascending.
    pub fn pooled_times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self
            .subjects
            .iter()
            .flat_map(|s| s.observations.iter().map(|o| o.time))
            .collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts
    }

    /// Observed time range (min, max).
    pub fn time_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.subjects {
            for o in &s.observations {
                lo = lo.min(o.time);
                hi = hi.max(o.time);
            }
        }
        (lo, hi)
    }

    /// Outcome range (min, max).
    pub fn outcome_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.subjects {
            for o in &s.observations {
                lo = lo.min(o.outcome);
                hi = hi.max(o.outcome);
            }
        }
        (lo, hi)
    }
}

fn sort_subjects(subjects: &mut [SubjectRecord]) {
    // Numeric order when every id parses as a number, lexicographic otherwise.
    let all_numeric = subjects.iter().all(|s| s.id.parse::<f64>().is_ok());
    if all_numeric {
        subjects.sort_by(|a, b| {
            a.id.parse::<f64>()
                .unwrap()
                .partial_cmp(&b.id.parse::<f64>().unwrap())
                .unwrap()
                .then_with(|| a.id.cmp(&b.id))
        });
    } else {
        subjects.sort_by(|a, b| a.id.cmp(&b.id));
    }
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

/// Load a long-format CSV.
///
/// Rows with a missing outcome or time are dropped and counted. With
/// `strict` set, any non-missing cell that fails to parse as a number is an
/// error; otherwise such rows are dropped and counted like missing values.
/// Subjects come out sorted by id and observations by time; exact duplicate
/// (subject, time) pairs are rejected.
pub fn load_dataset(
    path: &Path,
    id_name: &str,
    outcome_name: &str,
    time_name: &str,
    covariate_names: &[String],
    strict: bool,
) -> Result<LongitudinalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = col(id_name)?;
    let time_col = col(time_name)?;
    let outcome_col = col(outcome_name)?;
    let cov_cols: Vec<usize> = covariate_names
        .iter()
        .map(|n| col(n))
        .collect::<Result<_>>()?;

    struct RawSubject {
        obs: Vec<Observation>,
        covs: BTreeMap<String, f64>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut raw: BTreeMap<String, RawSubject> = BTreeMap::new();
    let mut dropped = 0usize;

    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = line + 2; // 1-based, counting the header
        let id = record.get(id_col).unwrap_or("").trim().to_string();
        let time_cell = record.get(time_col).unwrap_or("");
        let outcome_cell = record.get(outcome_col).unwrap_or("");

        let parse = |cell: &str, column: &str| -> Result<Option<f64>> {
            if is_missing(cell) {
                return Ok(None);
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ if strict => Err(Error::NonNumericValue {
                    row,
                    column: column.to_string(),
                    value: cell.to_string(),
                }),
                _ => Ok(None),
            }
        };

        let time = parse(time_cell, time_name)?;
        let outcome = parse(outcome_cell, outcome_name)?;
        let (time, outcome) = match (time, outcome) {
            (Some(t), Some(y)) => (t, y),
            _ => {
                dropped += 1;
                continue;
            }
        };

        let entry = raw.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            RawSubject {
                obs: Vec::new(),
                covs: BTreeMap::new(),
            }
        });
        entry.obs.push(Observation { time, outcome });

        for (k, &c) in cov_cols.iter().enumerate() {
            let name = &covariate_names[k];
            let cell = record.get(c).unwrap_or("");
            if is_missing(cell) {
                continue;
            }
            let v = cell
                .parse::<f64>()
                .map_err(|_| Error::NonNumericValue {
                    row,
                    column: name.clone(),
                    value: cell.to_string(),
                })?;
            match entry.covs.get(name) {
                None => {
                    entry.covs.insert(name.clone(), v);
                }
                Some(&prev) if prev == v => {}
                Some(_) => {
                    return Err(Error::TimeVaryingCovariate {
                        subject: id.clone(),
                        name: name.clone(),
                    })
                }
            }
        }
    }

    let mut subjects = Vec::with_capacity(raw.len());
    for (id, mut s) in raw {
        s.obs
            .sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
        subjects.push(SubjectRecord {
            id,
            observations: s.obs,
            covariates: s.covs,
        });
    }

    let mut ds = LongitudinalDataset::new(
        subjects,
        id_name,
        time_name,
        outcome_name,
        covariate_names,
    )?;
    ds.dropped_rows = dropped;
    Ok(ds)
}

/// Write a dataset back to long-format CSV (id, time, outcome, covariates).
///
/// Floats are written with Rust's shortest round-trip formatting, so a
/// reload reproduces the numeric content exactly.
pub fn write_dataset(dataset: &LongitudinalDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        dataset.id_name.clone(),
        dataset.time_name.clone(),
        dataset.outcome_name.clone(),
    ];
    header.extend(dataset.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for s in &dataset.subjects {
        for o in &s.observations {
            let mut row = vec![s.id.clone(), o.time.to_string(), o.outcome.to_string()];
            for name in &dataset.covariate_names {
                row.push(s.covariates[name].to_string());
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Five-number summary of one integer-year bucket.
#[derive(Debug, Clone, Copy)]
pub struct YearlyStats {
    pub year: i64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub n: usize,
}

/// Deterministic data summary backing the inspection plots.
#[derive(Debug, Clone)]
pub struct InspectionSummary {
    /// (bin lower edge, bin upper edge, count); 20 equal-width outcome bins.
    pub histogram: Vec<(f64, f64, usize)>,
    /// min(70, N) subjects drawn uniformly without replacement, id-sorted.
    pub spaghetti: Vec<(String, Vec<Observation>)>,
    /// One entry per integer year bucket (floor of time) covering the
    /// observed range; empty buckets carry n = 0 and NaN stats.
    pub yearly: Vec<YearlyStats>,
}

/// Sample size for the spaghetti panel.
pub const SPAGHETTI_SAMPLE: usize = 70;
const HISTOGRAM_BINS: usize = 20;

/// Summarize a dataset for inspection plots. Deterministic given `rng_seed`.
pub fn inspect(dataset: &LongitudinalDataset, rng_seed: u64) -> InspectionSummary {
    // Histogram over outcomes.
    let (ylo, yhi) = dataset.outcome_range();
    let span = if yhi > ylo { yhi - ylo } else { 1.0 };
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for s in &dataset.subjects {
        for o in &s.observations {
            let mut b = ((o.outcome - ylo) / span * HISTOGRAM_BINS as f64) as usize;
            if b >= HISTOGRAM_BINS {
                b = HISTOGRAM_BINS - 1;
            }
            counts[b] += 1;
        }
    }
    let width = span / HISTOGRAM_BINS as f64;
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (ylo + i as f64 * width, ylo + (i + 1) as f64 * width, c))
        .collect();

    // Spaghetti sample: uniform without replacement, then id-sorted.
    let mut idx: Vec<usize> = (0..dataset.n_subjects()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    idx.shuffle(&mut rng);
    let take = SPAGHETTI_SAMPLE.min(idx.len());
    let mut chosen: Vec<usize> = idx[..take].to_vec();
    chosen.sort_unstable();
    let spaghetti = chosen
        .into_iter()
        .map(|i| {
            let s = &dataset.subjects[i];
            (s.id.clone(), s.observations.clone())
        })
        .collect();

    // Yearly buckets: floor(time) groups covering the observed range.
    let (tlo, thi) = dataset.time_range();
    let y0 = tlo.floor() as i64;
    let y1 = thi.floor() as i64;
    let mut buckets: BTreeMap<i64, Vec<f64>> = (y0..=y1).map(|y| (y, Vec::new())).collect();
    for s in &dataset.subjects {
        for o in &s.observations {
            buckets
                .get_mut(&(o.time.floor() as i64))
                .expect("bucket covers observed range")
                .push(o.outcome);
        }
    }
    let yearly = buckets
        .into_iter()
        .map(|(year, mut ys)| {
            ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if ys.is_empty() {
                YearlyStats {
                    year,
                    min: f64::NAN,
                    q1: f64::NAN,
                    median: f64::NAN,
                    q3: f64::NAN,
                    max: f64::NAN,
                    n: 0,
                }
            } else {
                YearlyStats {
                    year,
                    min: ys[0],
                    q1: percentile(&ys, 0.25),
                    median: percentile(&ys, 0.50),
                    q3: percentile(&ys, 0.75),
                    max: *ys.last().unwrap(),
                    n: ys.len(),
                }
            }
        })
        .collect();

    InspectionSummary {
        histogram,
        spaghetti,
        yearly,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    fn covs(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn loads_paper_style_row() {
        let f = write_tmp(
            "ID,time,cognition,ageDeath\n\
             1000,-10.00,0.45,91\n\
             1000,-9.08,0.27,91\n\
             1001,-5.0,0.1,88\n",
        );
        let ds = load_dataset(
            f.path(),
            "ID",
            "cognition",
            "time",
            &covs(&["ageDeath"]),
            false,
        )
        .unwrap();
        assert_eq!(ds.n_subjects(), 2);
        let s = &ds.subjects[0];
        assert_eq!(s.id, "1000");
        assert_eq!(s.observations[0], Observation { time: -10.0, outcome: 0.45 });
        assert_eq!(s.covariates["ageDeath"], 91.0);
    }

    #[test]
    fn empty_file_is_error() {
        let f = write_tmp("ID,time,y\n");
        let err = load_dataset(f.path(), "ID", "y", "time", &[], false).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset));
    }

    #[test]
    fn missing_column_is_error() {
        let f = write_tmp("ID,time,y\n1,0,1\n");
        let err = load_dataset(f.path(), "ID", "score", "time", &[], false).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "score"));
    }

    #[test]
    fn non_numeric_dropped_and_counted_when_lenient() {
        let f = write_tmp(
            "ID,time,y\n\
             1,0,1.0\n1,1,abc\n\
             2,0,2.0\n2,1,2.5\n\
             3,0,3.0\n",
        );
        let ds = load_dataset(f.path(), "ID", "y", "time", &[], false).unwrap();
        assert_eq!(ds.dropped_rows, 1);
        assert_eq!(ds.n_obs(), 4);
        assert_eq!(ds.n_subjects(), 3);
    }

    #[test]
    fn non_numeric_is_error_when_strict() {
        let f = write_tmp("ID,time,y\n1,0,1.0\n1,1,abc\n");
        let err = load_dataset(f.path(), "ID", "y", "time", &[], true).unwrap_err();
        assert!(matches!(err, Error::NonNumericValue { row: 3, .. }));
    }

    #[test]
    fn na_and_empty_cells_are_missing() {
        let f = write_tmp("ID,time,y\n1,0,1.0\n1,NA,2.0\n1,2,\n1,3,0.5\n");
        let ds = load_dataset(f.path(), "ID", "y", "time", &[], true).unwrap();
        assert_eq!(ds.dropped_rows, 2);
        assert_eq!(ds.subjects[0].n_obs(), 2);
    }

    #[test]
    fn duplicate_time_is_error() {
        let f = write_tmp("ID,time,y\n1,0,1.0\n1,0,2.0\n");
        let err = load_dataset(f.path(), "ID", "y", "time", &[], false).unwrap_err();
        assert!(matches!(err, Error::DuplicateTimePoint { .. }));
    }

    #[test]
    fn time_varying_covariate_rejected() {
        let f = write_tmp("ID,time,y,x\n1,0,1.0,5\n1,1,2.0,6\n");
        let err = load_dataset(f.path(), "ID", "y", "time", &covs(&["x"]), false).unwrap_err();
        assert!(matches!(err, Error::TimeVaryingCovariate { .. }));
    }

    #[test]
    fn missing_covariate_for_subject_rejected() {
        let f = write_tmp("ID,time,y,x\n1,0,1.0,5\n2,0,1.0,NA\n");
        let err = load_dataset(f.path(), "ID", "y", "time", &covs(&["x"]), false).unwrap_err();
        assert!(matches!(err, Error::MissingCovariateValue { .. }));
    }

    #[test]
    fn subjects_sorted_numerically() {
        let f = write_tmp("ID,time,y\n100,0,1\n20,0,1\n3,0,1\n");
        let ds = load_dataset(f.path(), "ID", "y", "time", &[], false).unwrap();
        let ids: Vec<&str> = ds.subjects.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["3", "20", "100"]);
    }

    #[test]
    fn roundtrip_preserves_numeric_content() {
        let f = write_tmp(
            "ID,time,y,x\n1,-10.25,0.4500001,91\n1,-9.083333333333334,0.27,91\n2,0,1e-7,88\n",
        );
        let ds = load_dataset(f.path(), "ID", "y", "time", &covs(&["x"]), false).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_dataset(&ds, out.path()).unwrap();
        let ds2 = load_dataset(out.path(), "ID", "y", "time", &covs(&["x"]), false).unwrap();
        assert_eq!(ds.n_obs(), ds2.n_obs());
        for (a, b) in ds.subjects.iter().zip(&ds2.subjects) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.observations, b.observations);
            assert_eq!(a.covariates, b.covariates);
        }
    }

    fn toy_dataset(n: usize) -> LongitudinalDataset {
        let subjects = (0..n)
            .map(|i| SubjectRecord {
                id: format!("{}", 1000 + i),
                observations: vec![
                    Observation { time: -2.4, outcome: i as f64 },
                    Observation { time: -1.0, outcome: i as f64 + 0.5 },
                ],
                covariates: BTreeMap::new(),
            })
            .collect();
        LongitudinalDataset::new(subjects, "ID", "time", "y", &[]).unwrap()
    }

    #[test]
    fn spaghetti_is_min_70_and_deterministic() {
        let big = toy_dataset(1200);
        let s1 = inspect(&big, 1);
        assert_eq!(s1.spaghetti.len(), 70);
        let s2 = inspect(&big, 1);
        let ids1: Vec<&String> = s1.spaghetti.iter().map(|(id, _)| id).collect();
        let ids2: Vec<&String> = s2.spaghetti.iter().map(|(id, _)| id).collect();
        assert_eq!(ids1, ids2);

        let small = toy_dataset(5);
        assert_eq!(inspect(&small, 1).spaghetti.len(), 5);
    }

    #[test]
    fn floor_bucketing_merges_negative_times() {
        let subjects = vec![SubjectRecord {
            id: "1".into(),
            observations: vec![
                Observation { time: -2.6, outcome: 1.0 },
                Observation { time: -2.4, outcome: 2.0 },
            ],
            covariates: BTreeMap::new(),
        }];
        let ds = LongitudinalDataset::new(subjects, "ID", "time", "y", &[]).unwrap();
        let summary = inspect(&ds, 0);
        let nonempty: Vec<&YearlyStats> = summary.yearly.iter().filter(|b| b.n > 0).collect();
        assert_eq!(nonempty.len(), 1);
        assert_eq!(nonempty[0].year, -3);
        assert_eq!(nonempty[0].n, 2);
    }

    #[test]
    fn bucket_counts_partition_observations() {
        let ds = toy_dataset(17);
        let summary = inspect(&ds, 3);
        let total: usize = summary.yearly.iter().map(|b| b.n).sum();
        assert_eq!(total, ds.n_obs());
        let hist_total: usize = summary.histogram.iter().map(|(_, _, c)| c).sum();
        assert_eq!(hist_total, ds.n_obs());
    }
}
