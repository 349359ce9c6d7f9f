//! Sparse datasets: LIBSVM reader/writer, dataset statistics and seeded
//! synthetic problems.
//!
//! Rows are stored in compressed sparse row form. Dense synthetic rows use the
//! same representation (exact zeros are dropped).

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, ParseError, Result};

/// Borrowed view of one sparse row.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub indices: &'a [u32],
    pub values: &'a [f64],
}

impl<'a> Row<'a> {
    #[inline]
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(self.values)
            .map(|(&j, &v)| v * dense[j as usize])
            .sum()
    }

    /// `out += alpha * x`
    #[inline]
    pub fn axpy(&self, alpha: f64, out: &mut [f64]) {
        for (&j, &v) in self.indices.iter().zip(self.values) {
            out[j as usize] += alpha * v;
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn to_dense(&self, d: usize) -> DVector<f64> {
        let mut out = DVector::zeros(d);
        self.axpy(1.0, out.as_mut_slice());
        out
    }
}

/// Immutable sparse design matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    labels: Vec<f64>,
    n_features: usize,
    sq_norms: Vec<f64>,
}

impl Dataset {
    /// Build from per-row `(index, value)` lists with 0-based indices.
    ///
    /// Explicit zeros are dropped; indices must be strictly increasing and
    /// below `n_features`.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, labels: Vec<f64>, n_features: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(ParseError::Empty.into());
        }
        if n_features == 0 {
            return Err(Error::InvalidArgument("dataset needs at least one feature".into()));
        }
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), got: labels.len() });
        }
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (r, row) in rows.iter().enumerate() {
            let mut last: Option<usize> = None;
            for &(j, v) in row {
                if j >= n_features {
                    return Err(ParseError::IndexOutOfRange { line: r + 1, index: j + 1, dim: n_features }.into());
                }
                if last.is_some_and(|l| j <= l) {
                    return Err(ParseError::NonIncreasingIndex { line: r + 1 }.into());
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite);
                }
                last = Some(j);
                if v != 0.0 {
                    indices.push(j as u32);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        let mut ds = Dataset { indptr, indices, values, labels, n_features, sq_norms: Vec::new() };
        ds.sq_norms = (0..ds.n_samples()).map(|i| ds.row(i).values.iter().map(|v| v * v).sum()).collect();
        Ok(ds)
    }

    pub fn from_dense(x: &DMatrix<f64>, labels: Vec<f64>) -> Result<Self> {
        let rows = (0..x.nrows())
            .map(|i| (0..x.ncols()).map(|j| (j, x[(i, j)])).collect())
            .collect();
        Self::from_rows(rows, labels, x.ncols())
    }

    #[inline]
    pub fn row(&self, i: usize) -> Row<'_> {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        Row { indices: &self.indices[a..b], values: &self.values[a..b] }
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn sq_norms(&self) -> &[f64] {
        &self.sq_norms
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.n_samples(), self.n_features);
        for i in 0..self.n_samples() {
            let row = self.row(i);
            for (&j, &v) in row.indices.iter().zip(row.values) {
                x[(i, j as usize)] = v;
            }
        }
        x
    }

    /// Map labels to {-1, +1}.
    ///
    /// A label set with exactly two distinct values maps the smaller one to
    /// -1 (this covers `{1, 2}` and `{0, 1}` encodings). Otherwise labels are
    /// mapped by sign and a zero label is rejected.
    pub fn to_binary_labels(&self) -> Result<Dataset> {
        let mut distinct: Vec<f64> = self.labels.clone();
        distinct.sort_by(|a, b| a.total_cmp(b));
        distinct.dedup();
        let labels = if distinct.len() == 2 {
            self.labels.iter().map(|&y| if y == distinct[0] { -1.0 } else { 1.0 }).collect()
        } else {
            self.labels
                .iter()
                .enumerate()
                .map(|(i, &y)| {
                    if y > 0.0 {
                        Ok(1.0)
                    } else if y < 0.0 {
                        Ok(-1.0)
                    } else {
                        Err(Error::BadLabel { index: i, label: y })
                    }
                })
                .collect::<Result<Vec<_>>>()?
        };
        Ok(Dataset { labels, ..self.clone() })
    }

    /// Seeded subsample of `n` distinct rows (kept in original order).
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 || n > self.n_samples() {
            return Err(Error::InvalidArgument(format!(
                "subsample size {n} must be in [1, {}]",
                self.n_samples()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, self.n_samples(), n).into_vec();
        picked.sort_unstable();
        let rows = picked
            .iter()
            .map(|&i| {
                let r = self.row(i);
                r.indices.iter().zip(r.values).map(|(&j, &v)| (j as usize, v)).collect()
            })
            .collect();
        let labels = picked.iter().map(|&i| self.labels[i]).collect();
        Dataset::from_rows(rows, labels, self.n_features)
    }

    /// SHA-256 of the canonical LIBSVM serialization plus the dimension.
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::new();
        write_libsvm(self, &mut buf).expect("writing to memory cannot fail");
        let mut h = Sha256::new();
        h.update(&buf);
        h.update(self.n_features.to_le_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse LIBSVM text: `label idx:val idx:val ...`, 1-based strictly
/// increasing indices, blank lines skipped, comments rejected.
///
/// The feature dimension is the largest index seen unless `n_features`
/// overrides it.
pub fn parse_libsvm<R: BufRead>(reader: R, n_features: Option<usize>) -> std::result::Result<Dataset, ParseError> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.map_err(|e| ParseError::Io { line: line_no, message: e.to_string() })?;
        if line.contains('#') {
            return Err(ParseError::Comment { line: line_no });
        }
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else { continue };
        let label: f64 = label_tok
            .parse()
            .ok()
            .filter(|y: &f64| y.is_finite())
            .ok_or_else(|| ParseError::BadLabel { line: line_no, token: label_tok.to_string() })?;
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let malformed = || ParseError::MalformedToken { line: line_no, token: tok.to_string() };
            let (idx, val) = tok.split_once(':').ok_or_else(malformed)?;
            let idx: usize = idx.parse().map_err(|_| malformed())?;
            let val: f64 = val.parse().map_err(|_| malformed())?;
            if !val.is_finite() {
                return Err(malformed());
            }
            if idx < 1 {
                return Err(ParseError::IndexTooSmall { line: line_no });
            }
            if idx <= last {
                return Err(ParseError::NonIncreasingIndex { line: line_no });
            }
            if let Some(d) = n_features {
                if idx > d {
                    return Err(ParseError::IndexOutOfRange { line: line_no, index: idx, dim: d });
                }
            }
            last = idx;
            max_index = max_index.max(idx);
            if val != 0.0 {
                row.push((idx - 1, val));
            }
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(ParseError::Empty);
    }
    let d = n_features.unwrap_or(max_index).max(1);
    Dataset::from_rows(rows, labels, d).map_err(|e| match e {
        Error::Parse(p) => p,
        other => ParseError::Io { line: 0, message: other.to_string() },
    })
}

pub fn parse_libsvm_str(text: &str, n_features: Option<usize>) -> std::result::Result<Dataset, ParseError> {
    parse_libsvm(text.as_bytes(), n_features)
}

pub fn read_libsvm_file(path: &Path, n_features: Option<usize>) -> Result<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| ParseError::Io { line: 0, message: format!("{}: {e}", path.display()) })?;
    Ok(parse_libsvm(std::io::BufReader::new(file), n_features)?)
}

/// Write LIBSVM text using shortest round-trip float formatting.
pub fn write_libsvm<W: Write>(ds: &Dataset, mut w: W) -> std::io::Result<()> {
    for i in 0..ds.n_samples() {
        write!(w, "{}", ds.labels[i])?;
        let row = ds.row(i);
        for (&j, &v) in row.indices.iter().zip(row.values) {
            write!(w, " {}:{}", j + 1, v)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n: usize,
    pub d: usize,
    /// max_i ||x_i||^2
    pub radius_sq: f64,
    /// radius_sq + lambda
    pub l_max: f64,
    /// radius_sq / (4 N)
    pub default_lambda: f64,
}

pub fn dataset_stats(ds: &Dataset, lambda: f64) -> DatasetStats {
    let radius_sq = ds.sq_norms.iter().copied().fold(0.0, f64::max);
    let n = ds.n_samples();
    DatasetStats {
        n,
        d: ds.n_features(),
        radius_sq,
        l_max: radius_sq + lambda,
        default_lambda: radius_sq / (4.0 * n as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Ridge,
    Logistic,
}

/// Seeded synthetic problem with a controlled covariance spectrum.
///
/// Rows are `sqrt(n) * U diag(sqrt(c)) V^T` with `U` (n x r) orthonormal
/// columns, `V` a random rotation and `c` geometric from 1 down to
/// `1/condition`, so that `(1/n) X^T X = V diag(c) V^T` exactly when `n >= d`.
pub fn synth_problem(kind: SynthKind, n: usize, d: usize, condition: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("synthetic problem needs n, d >= 1".into()));
    }
    if !(condition >= 1.0) || !condition.is_finite() {
        return Err(Error::InvalidArgument(format!("condition must be >= 1, got {condition}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = n.min(d);
    let u = orthonormal_columns(&mut rng, n, r);
    let v = orthonormal_columns(&mut rng, d, d);
    let spectrum: Vec<f64> = (0..d)
        .map(|j| if d == 1 { 1.0 } else { condition.powf(-(j as f64) / (d - 1) as f64) })
        .collect();
    let mut scaled = u;
    for j in 0..r {
        let s = (n as f64 * spectrum[j]).sqrt();
        scaled.column_mut(j).scale_mut(s);
    }
    let x = scaled * v.columns(0, r).transpose();

    let planted = gaussian_vector(&mut rng, d) * (2.0 / (d as f64).sqrt());
    let margins = &x * &planted;
    let labels = match kind {
        SynthKind::Ridge => margins
            .iter()
            .map(|&m| m + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect(),
        SynthKind::Logistic => margins
            .iter()
            .map(|&m| {
                let p = 1.0 / (1.0 + (-m).exp());
                if rng.random::<f64>() < p { 1.0 } else { -1.0 }
            })
            .collect(),
    };
    Dataset::from_dense(&x, labels)
}

/// Seeded sparse logistic problem with `nnz_per_row` nonzeros per row.
pub fn synth_sparse(n: usize, d: usize, nnz_per_row: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 || nnz_per_row == 0 || nnz_per_row > d {
        return Err(Error::InvalidArgument(format!(
            "sparse problem needs n, d >= 1 and 1 <= nnz ({nnz_per_row}) <= d ({d})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted = gaussian_vector(&mut rng, d);
    let scale = 1.0 / (nnz_per_row as f64).sqrt();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut idx = rand::seq::index::sample(&mut rng, d, nnz_per_row).into_vec();
        idx.sort_unstable();
        let row: Vec<(usize, f64)> = idx
            .into_iter()
            .map(|j| (j, scale * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let m: f64 = row.iter().map(|&(j, v)| v * planted[j]).sum();
        let p = 1.0 / (1.0 + (-m).exp());
        labels.push(if rng.random::<f64>() < p { 1.0 } else { -1.0 });
        rows.push(row);
    }
    Dataset::from_rows(rows, labels, d)
}

fn gaussian_vector(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

fn orthonormal_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
    g.qr().q()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry_line() {
        let ds = parse_libsvm_str("-1 3:4.5\n", None).unwrap();
        assert_eq!(ds.n_samples(), 1);
        assert_eq!(ds.n_features(), 3);
        assert_eq!(ds.row(0).indices, &[2]);
        assert_eq!(ds.row(0).values, &[4.5]);
        assert_eq!(ds.labels(), &[-1.0]);
        assert_eq!(ds.sq_norms(), &[20.25]);
    }

    #[test]
    fn two_lines_with_plus_label() {
        let ds = parse_libsvm_str("+1 1:1\n-1 2:2\n", None).unwrap();
        assert_eq!((ds.n_samples(), ds.n_features()), (2, 2));
        assert_eq!(ds.sq_norms(), &[1.0, 4.0]);
        assert_eq!(ds.labels(), &[1.0, -1.0]);
    }

    #[test]
    fn repeated_index_is_rejected() {
        let err = parse_libsvm_str("1 2:1 2:2\n", None).unwrap_err();
        assert_eq!(err, ParseError::NonIncreasingIndex { line: 1 });
        assert_eq!(err.to_string(), "non-increasing index at line 1");
    }

    #[test]
    fn parse_errors_name_the_line() {
        assert_eq!(parse_libsvm_str("", None).unwrap_err(), ParseError::Empty);
        assert_eq!(parse_libsvm_str("\n  \n", None).unwrap_err(), ParseError::Empty);
        assert_eq!(parse_libsvm_str("1 1:1\n1 0:2\n", None).unwrap_err(), ParseError::IndexTooSmall { line: 2 });
        assert!(matches!(
            parse_libsvm_str("1 1:1\n\n-1 3\n", None).unwrap_err(),
            ParseError::MalformedToken { line: 3, .. }
        ));
        assert!(matches!(parse_libsvm_str("1 a:1\n", None).unwrap_err(), ParseError::MalformedToken { line: 1, .. }));
        assert!(matches!(parse_libsvm_str("x 1:1\n", None).unwrap_err(), ParseError::BadLabel { line: 1, .. }));
        assert_eq!(parse_libsvm_str("1 1:1 # c\n", None).unwrap_err(), ParseError::Comment { line: 1 });
        assert!(matches!(
            parse_libsvm_str("1 4:1\n", Some(3)).unwrap_err(),
            ParseError::IndexOutOfRange { line: 1, index: 4, dim: 3 }
        ));
    }

    #[test]
    fn explicit_zero_is_dropped_and_dimension_override_applies() {
        let ds = parse_libsvm_str("1 1:0 2:3\n", Some(5)).unwrap();
        assert_eq!(ds.n_features(), 5);
        assert_eq!(ds.row(0).indices, &[1]);
        assert_eq!(ds.nnz(), 1);
    }

    #[test]
    fn stats_small_cases() {
        let ds = parse_libsvm_str("1 1:1\n-1 2:2\n", None).unwrap();
        let s = dataset_stats(&ds, 0.0);
        assert_eq!((s.radius_sq, s.l_max, s.default_lambda), (4.0, 4.0, 0.5));
        let s = dataset_stats(&ds, 0.25);
        assert_eq!(s.l_max, 4.25);

        let zero = Dataset::from_rows(vec![vec![(0, 0.0), (1, 0.0)]], vec![1.0], 2).unwrap();
        let s = dataset_stats(&zero, 0.0);
        assert_eq!((s.radius_sq, s.default_lambda), (0.0, 0.0));
    }

    #[test]
    fn binary_label_mapping() {
        let ds = parse_libsvm_str("2 1:1\n1 1:2\n2 1:3\n", None).unwrap();
        assert_eq!(ds.to_binary_labels().unwrap().labels(), &[1.0, -1.0, 1.0]);
        let ds = parse_libsvm_str("3 1:1\n-0.5 1:2\n7 1:3\n", None).unwrap();
        assert_eq!(ds.to_binary_labels().unwrap().labels(), &[1.0, -1.0, 1.0]);
        let ds = parse_libsvm_str("3 1:1\n0 1:2\n7 1:3\n", None).unwrap();
        assert!(matches!(ds.to_binary_labels(), Err(Error::BadLabel { index: 1, .. })));
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_problem(SynthKind::Ridge, 50, 5, 10.0, 1).unwrap();
        let b = synth_problem(SynthKind::Ridge, 50, 5, 10.0, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.content_hash(), b.content_hash());
        let c = synth_problem(SynthKind::Ridge, 50, 5, 10.0, 2).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn synth_logistic_labels_are_binary() {
        let ds = synth_problem(SynthKind::Logistic, 20, 3, 5.0, 3).unwrap();
        assert!(ds.labels().iter().all(|&y| y == 1.0 || y == -1.0));
        let sp = synth_sparse(30, 100, 7, 4).unwrap();
        assert!(sp.labels().iter().all(|&y| y == 1.0 || y == -1.0));
        assert!((0..30).all(|i| sp.row(i).nnz() == 7));
    }

    #[test]
    fn subsample_keeps_rows() {
        let ds = synth_problem(SynthKind::Logistic, 40, 3, 2.0, 9).unwrap();
        let sub = ds.subsample(10, 1).unwrap();
        assert_eq!(sub.n_samples(), 10);
        assert_eq!(sub, ds.subsample(10, 1).unwrap());
        assert!(ds.subsample(41, 1).is_err());
    }
}
