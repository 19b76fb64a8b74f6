use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Test,
}

/// Row-major feature matrix with integer class labels and a train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Vec<T>,
    labels: Vec<usize>,
    n_features: usize,
    n_classes: usize,
    train: Vec<usize>,
    test: Vec<usize>,
}

impl<T: Real> Dataset<T> {
    /// All rows start in the training partition. `n_classes` defaults to
    /// `max(label) + 1`.
    pub fn new(rows: Vec<Vec<T>>, labels: Vec<usize>, n_classes: Option<usize>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        let p = rows[0].len();
        if p == 0 {
            return Err(Error::InvalidArgument("dataset needs at least one feature".into()));
        }
        let mut features = Vec::with_capacity(rows.len() * p);
        for row in &rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { context: "dataset" });
            }
            features.extend_from_slice(row);
        }
        let max_label = labels.iter().copied().max().unwrap_or(0);
        let k = n_classes.unwrap_or(max_label + 1);
        if max_label >= k {
            return Err(Error::InvalidArgument(format!(
                "label {max_label} out of range for {k} classes"
            )));
        }
        let n = rows.len();
        Ok(Self {
            features,
            labels,
            n_features: p,
            n_classes: k,
            train: (0..n).collect(),
            test: Vec::new(),
        })
    }

    /// Reshuffles rows with `seed` and puts the first `⌊train_fraction · n⌋`
    /// (at least one) into the training partition.
    pub fn split(mut self, train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction must lie in (0, 1], got {train_fraction}"
            )));
        }
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((train_fraction * n as f64).floor() as usize).clamp(1, n);
        self.test = order.split_off(n_train);
        self.train = order;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn partition(&self, which: Partition) -> &[usize] {
        match which {
            Partition::Train => &self.train,
            Partition::Test => &self.test,
        }
    }

    pub(crate) fn check_rows(&self, rows: &[usize]) -> Result<()> {
        if rows.is_empty() {
            return Err(Error::EmptyPartition);
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::InvalidArgument(format!(
                "row index {bad} out of bounds for {} rows",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Two interleaved half-circles, `n / 2` points each, with isotropic
/// Gaussian jitter of standard deviation `noise_sd` and an 80/20 split.
///
/// Class 0 lies on `(cos t, sin t)`, class 1 on `(1 − cos t, ½ − sin t)`,
/// `t ∈ [0, π]` evenly spaced.
pub fn two_moons<T: Real>(n: usize, noise_sd: T, seed: u64) -> Result<Dataset<T>> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "two_moons needs an even n >= 2, got {n}"
        )));
    }
    if !(noise_sd >= T::zero() && noise_sd.is_finite()) {
        return Err(Error::InvalidArgument("noise_sd must be finite and >= 0".into()));
    }
    let half = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi = T::lit(std::f64::consts::PI);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for class in 0..2 {
        for i in 0..half {
            let t = if half == 1 {
                T::zero()
            } else {
                pi * T::lit(i as f64) / T::lit((half - 1) as f64)
            };
            let (x, y) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (T::one() - t.cos(), T::lit(0.5) - t.sin())
            };
            let jx = noise_sd * T::standard_normal(&mut rng);
            let jy = noise_sd * T::standard_normal(&mut rng);
            rows.push(vec![x + jx, y + jy]);
            labels.push(class);
        }
    }
    Dataset::new(rows, labels, Some(2))?.split(0.8, seed)
}

/// Reads a headered, comma-separated numeric file. Every row lands in the
/// training partition; call [`Dataset::split`] for a held-out set.
///
/// Row numbers in errors count data rows from 1 (the header is not counted).
pub fn load_csv_dataset<T: Real>(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset<T>> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::UnknownLabelColumn(label_column.to_string()))?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::MalformedRow {
                row: row_no,
                column: "<field count>".into(),
                value: format!("{} fields, header has {}", record.len(), headers.len()),
            });
        }
        let mut features = Vec::with_capacity(headers.len() - 1);
        for (j, field) in record.iter().enumerate() {
            let malformed = || Error::MalformedRow {
                row: row_no,
                column: headers[j].to_string(),
                value: field.to_string(),
            };
            let value: f64 = field.parse().map_err(|_| malformed())?;
            if !value.is_finite() {
                return Err(malformed());
            }
            if j == label_idx {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(malformed());
                }
                labels.push(value as usize);
            } else {
                features.push(T::lit(value));
            }
        }
        rows.push(features);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(rows, labels, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_moons_split_sizes_and_determinism() {
        let a = two_moons::<f64>(1000, 0.2, 7).unwrap();
        assert_eq!(a.partition(Partition::Train).len(), 800);
        assert_eq!(a.partition(Partition::Test).len(), 200);
        let b = two_moons::<f64>(1000, 0.2, 7).unwrap();
        assert_eq!(a, b);
        let c = two_moons::<f64>(1000, 0.2, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn two_moons_partitions_cover_disjointly() {
        let d = two_moons::<f64>(50, 0.1, 1).unwrap();
        let mut all: Vec<usize> = d
            .partition(Partition::Train)
            .iter()
            .chain(d.partition(Partition::Test))
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn two_moons_rejects_odd() {
        assert!(two_moons::<f64>(7, 0.1, 0).is_err());
        assert!(two_moons::<f64>(0, 0.1, 0).is_err());
    }

    #[test]
    fn two_moons_noiseless_points_on_arcs() {
        let d = two_moons::<f64>(20, 0.0, 3).unwrap();
        for i in 0..d.len() {
            let r = d.row(i);
            let (cx, cy) = if d.label(i) == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
            let radius = ((r[0] - cx).powi(2) + (r[1] - cy).powi(2)).sqrt();
            assert!((radius - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_well_formed() {
        let f = write_tmp("a,b,label\n1.0,2.0,0\n3,4,1\n-5,6e-1,1\n");
        let d = load_csv_dataset::<f64>(f.path(), "label").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.n_classes(), 2);
        assert_eq!(d.row(2), &[-5.0, 0.6]);
        assert_eq!(d.labels(), &[0, 1, 1]);
    }

    #[test]
    fn csv_label_column_anywhere() {
        let f = write_tmp("y,x\n2,0.5\n0,1.5\n");
        let d = load_csv_dataset::<f64>(f.path(), "y").unwrap();
        assert_eq!(d.n_classes(), 3);
        assert_eq!(d.row(1), &[1.5]);
    }

    #[test]
    fn csv_text_in_numeric_column_names_row() {
        let f = write_tmp("a,label\n1,0\nhello,1\n");
        match load_csv_dataset::<f64>(f.path(), "label").unwrap_err() {
            Error::MalformedRow { row, column, value } => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
                assert_eq!(value, "hello");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_error_kinds_are_distinct() {
        let f = write_tmp("a,label\n");
        let e = load_csv_dataset::<f64>(f.path(), "label").unwrap_err();
        assert!(matches!(e, Error::EmptyDataset));
        assert_eq!(e.to_string(), "empty dataset");

        let f = write_tmp("a,label\n1,0\n");
        assert!(matches!(
            load_csv_dataset::<f64>(f.path(), "class").unwrap_err(),
            Error::UnknownLabelColumn(_)
        ));
        assert!(matches!(
            load_csv_dataset::<f64>("/nonexistent/data.csv", "label").unwrap_err(),
            Error::MissingFile(_)
        ));

        let f = write_tmp("a,label\n1,0.5\n");
        assert!(matches!(
            load_csv_dataset::<f64>(f.path(), "label").unwrap_err(),
            Error::MalformedRow { row: 1, .. }
        ));
    }

    #[test]
    fn split_is_seeded() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let d = Dataset::new(rows, vec![0; 10], None).unwrap();
        let a = d.clone().split(0.7, 4).unwrap();
        let b = d.split(0.7, 4).unwrap();
        assert_eq!(a.partition(Partition::Train), b.partition(Partition::Train));
        assert_eq!(a.partition(Partition::Train).len(), 7);
    }
}
