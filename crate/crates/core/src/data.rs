//! Dataset representation with an explicit observation mask, fold
//! assignment, and CSV input/output.
//!
//! Missing cells are identified only by the mask. Whatever value sits in a
//! masked cell is never read by any computation in this crate.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Default token marking a missing cell in CSV input.
pub const DEFAULT_NA_TOKEN: &str = "NA";

/// A sorted, duplicate-free set of 0-based feature indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct FeatureSet(Vec<usize>);

impl FeatureSet {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        FeatureSet(indices)
    }

    pub fn empty() -> Self {
        FeatureSet(Vec::new())
    }

    pub fn full(p: usize) -> Self {
        FeatureSet((0..p).collect())
    }

    /// Subset encoded by the low `p` bits of `mask`.
    pub fn from_mask(mask: u64, p: usize) -> Self {
        FeatureSet((0..p).filter(|&j| mask >> j & 1 == 1).collect())
    }

    pub fn to_mask(&self) -> u64 {
        self.0.iter().fold(0u64, |m, &j| m | 1 << j)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// Indices shifted to 1-based numbering for user-facing output.
    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|j| j + 1).collect()
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, j) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", j + 1)?;
        }
        write!(f, "}}")
    }
}

impl FromIterator<usize> for FeatureSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        FeatureSet::new(iter.into_iter().collect())
    }
}

/// Whether the outcome is a 0/1 label or a real-valued response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Binary,
    Continuous,
}

/// A rectangular numeric table: `p` feature columns, one outcome column and a
/// per-cell observation mask. Mask column 0 belongs to the outcome, mask
/// column `j + 1` to feature `j`.
#[derive(Debug, Clone)]
pub struct Dataset {
    outcome_name: String,
    feature_names: Vec<String>,
    outcome: Vec<f64>,
    columns: Vec<Vec<f64>>,
    mask: Vec<Vec<bool>>,
}

impl Dataset {
    /// Build a fully observed dataset from feature columns.
    pub fn complete(columns: Vec<Vec<f64>>, outcome: Vec<f64>) -> Result<Self> {
        let n = outcome.len();
        let mask = vec![vec![true; n]; columns.len() + 1];
        Self::with_mask(columns, outcome, mask)
    }

    /// Build a dataset with an explicit mask (`mask[0]` is the outcome's).
    pub fn with_mask(columns: Vec<Vec<f64>>, outcome: Vec<f64>, mask: Vec<Vec<bool>>) -> Result<Self> {
        let p = columns.len();
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Self::from_parts("y".to_string(), names, columns, outcome, mask)
    }

    pub fn from_parts(
        outcome_name: String,
        feature_names: Vec<String>,
        columns: Vec<Vec<f64>>,
        outcome: Vec<f64>,
        mask: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let n = outcome.len();
        let p = columns.len();
        if feature_names.len() != p {
            return Err(Error::invalid(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                p
            )));
        }
        if mask.len() != p + 1 {
            return Err(Error::invalid(format!(
                "mask has {} columns, expected {}",
                mask.len(),
                p + 1
            )));
        }
        if let Some(j) = columns.iter().position(|c| c.len() != n) {
            return Err(Error::invalid(format!(
                "feature column {} has {} rows, outcome has {}",
                j + 1,
                columns[j].len(),
                n
            )));
        }
        if mask.iter().any(|m| m.len() != n) {
            return Err(Error::invalid("mask row count does not match data"));
        }
        let ds = Dataset {
            outcome_name,
            feature_names,
            outcome,
            columns,
            mask,
        };
        for col in 0..=p {
            for i in 0..n {
                if ds.mask[col][i] && !ds.raw(i, col).is_finite() {
                    return Err(Error::invalid(format!(
                        "non-finite observed value at row {}, column {}",
                        i + 1,
                        ds.column_name(col)
                    )));
                }
            }
        }
        Ok(ds)
    }

    pub fn into_parts(self) -> (String, Vec<String>, Vec<Vec<f64>>, Vec<f64>, Vec<Vec<bool>>) {
        (
            self.outcome_name,
            self.feature_names,
            self.columns,
            self.outcome,
            self.mask,
        )
    }

    #[inline]
    fn raw(&self, row: usize, col: usize) -> f64 {
        if col == 0 {
            self.outcome[row]
        } else {
            self.columns[col - 1][row]
        }
    }

    fn column_name(&self, col: usize) -> &str {
        if col == 0 {
            &self.outcome_name
        } else {
            &self.feature_names[col - 1]
        }
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Raw feature column. Entries whose mask is 0 are meaningless; callers
    /// that may see incomplete data must consult [`Dataset::feature_observed`].
    pub fn feature(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    /// Mask column `col` (0 = outcome, `j + 1` = feature `j`).
    pub fn mask_column(&self, col: usize) -> &[bool] {
        &self.mask[col]
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.mask[col][row]
    }

    pub fn feature_observed(&self, row: usize, j: usize) -> bool {
        self.mask[j + 1][row]
    }

    pub fn outcome_observed(&self, row: usize) -> bool {
        self.mask[0][row]
    }

    /// Observed value of a cell, `None` when masked.
    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.mask[col][row].then(|| self.raw(row, col))
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|m| m.iter().all(|&o| o))
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().map(|m| m.iter().filter(|&&o| !o).count()).sum()
    }

    /// Observed values of mask column `col`.
    pub fn observed_values(&self, col: usize) -> Vec<f64> {
        (0..self.n()).filter_map(|i| self.value(i, col)).collect()
    }

    /// Binary when the observed outcome support is exactly {0, 1}.
    pub fn outcome_kind(&self) -> OutcomeKind {
        let (mut zero, mut one) = (false, false);
        for i in 0..self.n() {
            if !self.mask[0][i] {
                continue;
            }
            let y = self.outcome[i];
            if y == 0.0 {
                zero = true;
            } else if y == 1.0 {
                one = true;
            } else {
                return OutcomeKind::Continuous;
            }
        }
        if zero && one {
            OutcomeKind::Binary
        } else {
            OutcomeKind::Continuous
        }
    }

    pub(crate) fn require_complete(&self, what: &str) -> Result<()> {
        if self.is_complete() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what} requires a complete dataset ({} missing cells)",
                self.missing_count()
            )))
        }
    }

    /// Dataset restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            outcome_name: self.outcome_name.clone(),
            feature_names: self.feature_names.clone(),
            outcome: pick(&self.outcome),
            columns: self.columns.iter().map(|c| pick(c)).collect(),
            mask: self
                .mask
                .iter()
                .map(|m| rows.iter().map(|&i| m[i]).collect())
                .collect(),
        }
    }

    /// Copy with the mask replaced; values are kept as they are.
    pub fn with_new_mask(&self, mask: Vec<Vec<bool>>) -> Result<Dataset> {
        Dataset::from_parts(
            self.outcome_name.clone(),
            self.feature_names.clone(),
            self.columns.clone(),
            self.outcome.clone(),
            mask,
        )
    }

    /// True when both datasets have the same names, mask and observed values.
    pub fn same_observed(&self, other: &Dataset) -> bool {
        if self.outcome_name != other.outcome_name
            || self.feature_names != other.feature_names
            || self.mask != other.mask
        {
            return false;
        }
        (0..=self.p()).all(|col| {
            (0..self.n()).all(|i| !self.mask[col][i] || self.raw(i, col) == other.raw(i, col))
        })
    }
}

/// Read a CSV file with a header row.
pub fn load_csv(path: impl AsRef<Path>, outcome_column: &str, na_token: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, outcome_column, na_token)
}

pub fn read_csv<R: Read>(reader: R, outcome_column: &str, na_token: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyInput);
    }
    let outcome_pos = header
        .iter()
        .position(|h| h == outcome_column)
        .ok_or_else(|| Error::MissingOutcome(outcome_column.to_string()))?;

    let width = header.len();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); width];
    let mut obs: Vec<Vec<bool>> = vec![Vec::new(); width];
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != width {
            return Err(Error::Parse {
                row: r + 1,
                column: String::new(),
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            if field == na_token {
                cols[c].push(0.0);
                obs[c].push(false);
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row: r + 1,
                column: header[c].clone(),
                message: format!("'{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: r + 1,
                    column: header[c].clone(),
                    message: format!("'{field}' is not finite"),
                });
            }
            cols[c].push(v);
            obs[c].push(true);
        }
    }
    if cols[0].is_empty() {
        return Err(Error::EmptyInput);
    }

    let outcome = cols.remove(outcome_pos);
    let outcome_mask = obs.remove(outcome_pos);
    let mut names = header;
    let outcome_name = names.remove(outcome_pos);
    let mut mask = Vec::with_capacity(obs.len() + 1);
    mask.push(outcome_mask);
    mask.extend(obs);
    Dataset::from_parts(outcome_name, names, cols, outcome, mask)
}

/// Write a dataset as CSV, outcome column first. Masked cells become `na_token`.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>, na_token: &str) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(dataset, file, na_token)
}

pub fn write_csv_to<W: Write>(dataset: &Dataset, writer: W, na_token: &str) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![dataset.outcome_name().to_string()];
    header.extend(dataset.feature_names().iter().cloned());
    wtr.write_record(&header)?;
    let mut row = Vec::with_capacity(dataset.p() + 1);
    for i in 0..dataset.n() {
        row.clear();
        for col in 0..=dataset.p() {
            row.push(match dataset.value(i, col) {
                Some(v) => format!("{v}"),
                None => na_token.to_string(),
            });
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Assignment of rows to cross-fitting folds `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    folds: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    /// Balanced assignment of `n` rows, stratified by `labels` when given.
    ///
    /// Rows of each stratum are shuffled and dealt round-robin with a shared
    /// counter, so fold sizes differ by at most one overall and within each
    /// stratum.
    pub fn balanced(n: usize, labels: Option<&[bool]>, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("fold count must be at least 2, got {k}")));
        }
        if n < k {
            return Err(Error::invalid(format!("{n} rows cannot fill {k} folds")));
        }
        let mut rng = seed::rng(seed);
        let strata: Vec<Vec<usize>> = match labels {
            Some(lab) => {
                let neg: Vec<usize> = (0..n).filter(|&i| !lab[i]).collect();
                let pos: Vec<usize> = (0..n).filter(|&i| lab[i]).collect();
                for (name, s) in [("negative", &neg), ("positive", &pos)] {
                    if s.len() < k {
                        return Err(Error::invalid(format!(
                            "{} {name} cases cannot be stratified into {k} folds",
                            s.len()
                        )));
                    }
                }
                vec![neg, pos]
            }
            None => vec![(0..n).collect()],
        };
        let mut folds = vec![0usize; n];
        let mut counter = 0usize;
        for mut stratum in strata {
            stratum.shuffle(&mut rng);
            for i in stratum {
                folds[i] = counter % k;
                counter += 1;
            }
        }
        Ok(FoldAssignment { folds, k })
    }

    pub fn from_vec(folds: Vec<usize>, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("fold count must be at least 2"));
        }
        let mut seen = vec![false; k];
        for &f in &folds {
            if f >= k {
                return Err(Error::invalid(format!("fold label {f} out of range for k = {k}")));
            }
            seen[f] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("every fold must be nonempty"));
        }
        Ok(FoldAssignment { folds, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn fold_of(&self, row: usize) -> usize {
        self.folds[row]
    }

    pub fn labels(&self) -> &[usize] {
        &self.folds
    }

    /// Held-out rows of fold `v`, ascending.
    pub fn test_rows(&self, v: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == v).collect()
    }

    /// Training rows for fold `v` (its complement), ascending.
    pub fn train_rows(&self, v: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != v).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.folds {
            s[f] += 1;
        }
        s
    }
}

/// Cross-fitting folds for a dataset, stratified for binary outcomes.
pub fn make_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    let n = dataset.n();
    if k < 2 {
        return Err(Error::invalid(format!("fold count must be at least 2, got {k}")));
    }
    if n < 2 * k {
        return Err(Error::invalid(format!(
            "{n} rows are too few for {k} folds (need at least {})",
            2 * k
        )));
    }
    if (0..n).any(|i| !dataset.outcome_observed(i)) {
        return Err(Error::invalid("folds require a fully observed outcome"));
    }
    match dataset.outcome_kind() {
        OutcomeKind::Binary => {
            let labels: Vec<bool> = dataset.outcome().iter().map(|&y| y == 1.0).collect();
            FoldAssignment::balanced(n, Some(&labels), k, seed)
        }
        OutcomeKind::Continuous => FoldAssignment::balanced(n, None, k, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "y,a,b\n1,0.5,2\n0,NA,3\n1,1.5,-1\n";

    #[test]
    fn csv_with_one_missing_cell() {
        let d = read_csv(SMALL.as_bytes(), "y", "NA").unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.missing_count(), 1);
        assert!(!d.feature_observed(1, 0));
        assert_eq!(d.value(2, 2), Some(-1.0));
        assert_eq!(d.outcome_kind(), OutcomeKind::Binary);
    }

    #[test]
    fn csv_without_missing_is_complete() {
        let d = read_csv("a,y\n1,2\n3,4\n".as_bytes(), "y", "NA").unwrap();
        assert!(d.is_complete());
        assert_eq!(d.feature(0), &[1.0, 3.0]);
        assert_eq!(d.outcome_kind(), OutcomeKind::Continuous);
    }

    #[test]
    fn csv_outcome_absent_names_column() {
        let err = read_csv(SMALL.as_bytes(), "status", "NA").unwrap_err();
        assert!(err.to_string().contains("status"), "{err}");
    }

    #[test]
    fn csv_parse_failure_reports_position() {
        let err = read_csv("y,a\n1,2\n0,abc\n".as_bytes(), "y", "NA").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_empty_input() {
        assert!(matches!(read_csv("".as_bytes(), "y", "NA"), Err(Error::EmptyInput)));
        assert!(matches!(read_csv("y,a\n".as_bytes(), "y", "NA"), Err(Error::EmptyInput)));
    }

    #[test]
    fn custom_na_token() {
        let d = read_csv("y,a\n1,.\n0,2\n".as_bytes(), "y", ".").unwrap();
        assert_eq!(d.missing_count(), 1);
    }

    fn labelled(n: usize, positives: usize) -> Dataset {
        let y = (0..n).map(|i| if i < positives { 1.0 } else { 0.0 }).collect();
        Dataset::complete(vec![(0..n).map(|i| i as f64).collect()], y).unwrap()
    }

    #[test]
    fn folds_are_balanced() {
        let d = Dataset::complete(vec![vec![0.0; 10]], (0..10).map(|i| i as f64 * 0.3).collect()).unwrap();
        let f = make_folds(&d, 5, 3).unwrap();
        assert_eq!(f.sizes(), vec![2; 5]);
    }

    #[test]
    fn folds_are_stratified() {
        let d = labelled(10, 5);
        let f = make_folds(&d, 5, 11).unwrap();
        for v in 0..5 {
            let rows = f.test_rows(v);
            let pos = rows.iter().filter(|&&i| d.outcome()[i] == 1.0).count();
            assert_eq!((rows.len(), pos), (2, 1));
        }
    }

    #[test]
    fn folds_are_deterministic() {
        let d = labelled(40, 13);
        assert_eq!(make_folds(&d, 4, 99).unwrap(), make_folds(&d, 4, 99).unwrap());
        assert_ne!(make_folds(&d, 4, 99).unwrap(), make_folds(&d, 4, 100).unwrap());
    }

    #[test]
    fn folds_reject_small_classes() {
        let d = labelled(20, 3);
        assert!(make_folds(&d, 5, 1).is_err());
        assert!(make_folds(&labelled(9, 4), 5, 1).is_err());
        assert!(make_folds(&labelled(20, 10), 1, 1).is_err());
    }
}
