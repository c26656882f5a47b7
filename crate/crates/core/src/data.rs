//! Tabular datasets: CSV ingestion, z-normalization, splitting, folds,
//! label flipping and domain-balanced batching.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::Rng;

/// Binary-labelled feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    features: Matrix,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Matrix, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::shape(format!(
                "{} labels for {} rows",
                labels.len(),
                features.rows()
            )));
        }
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::invalid("a dataset needs at least one row and one feature"));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::invalid(format!("label {bad} is not binary")));
        }
        if !features.is_finite() {
            return Err(Error::invalid("features must be finite"));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| f64::from(l)).collect()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn size(&self) -> usize {
        self.features.rows()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let p = self.positives();
        p > 0 && p < self.size()
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        if idx.is_empty() {
            return Err(Error::invalid("empty subset"));
        }
        Ok(Dataset {
            name: self.name.clone(),
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        })
    }
}

/// Reads a headered CSV. Every column other than `label_column` must hold
/// finite numbers; the label column must hold exactly two distinct values,
/// one of which is `positive_label` (mapped to 1).
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, positive_label: &str) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabelColumn {
            path: path.to_path_buf(),
            column: label_column.to_owned(),
        })?;

    let dim = header.len() - 1;
    let mut data = Vec::new();
    let mut raw_labels = Vec::new();
    let mut distinct: Vec<String> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != header.len() {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                row,
                found: rec.len(),
                expected: header.len(),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            if j == label_idx {
                if !distinct.iter().any(|d| d == cell) {
                    distinct.push(cell.to_owned());
                }
                raw_labels.push(cell == positive_label);
                continue;
            }
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::ParseCell {
                    path: path.to_path_buf(),
                    row,
                    column: header[j].clone(),
                    value: cell.to_owned(),
                }
            })?;
            data.push(v);
        }
    }
    if distinct.len() != 2 {
        return Err(Error::LabelCardinality {
            path: path.to_path_buf(),
            column: label_column.to_owned(),
            found: distinct,
        });
    }
    if !distinct.iter().any(|d| d == positive_label) {
        return Err(Error::MissingPositiveLabel {
            path: path.to_path_buf(),
            column: label_column.to_owned(),
            label: positive_label.to_owned(),
        });
    }
    let n = raw_labels.len();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(
        name,
        Matrix::from_vec(n, dim, data)?,
        raw_labels.into_iter().map(u8::from).collect(),
    )
}

/// Writes `ds` as a headered CSV with feature columns `x0..` and label column `label` (0/1).
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for r in 0..ds.size() {
        let mut rec: Vec<String> = ds.features().row(r).iter().map(|v| format!("{v:?}")).collect();
        rec.push(ds.labels()[r].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Number of training rows for a fractional split. The small slack keeps
/// products such as `690 × 0.7` from flooring one row short.
pub fn train_count(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction + 1e-9).floor() as usize
}

/// Random permutation, then a prefix of `floor(n · train_fraction)` rows for training.
pub fn split(ds: &Dataset, train_fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.size(), train_fraction, rng)?;
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

pub fn split_indices(n: usize, train_fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let k = train_count(n, train_fraction);
    if n < 2 || k == 0 || k >= n {
        return Err(Error::invalid(format!(
            "splitting {n} rows at {train_fraction} leaves an empty side"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let test = idx.split_off(k);
    Ok((idx, test))
}

/// Per-feature z-normalization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    #[serde(with = "crate::hexfloat::vec")]
    pub mean: Vec<f64>,
    #[serde(with = "crate::hexfloat::vec")]
    pub std: Vec<f64>,
}

impl NormStats {
    /// Population mean and std of each column. Constant columns get std 1
    /// and their exact value as mean, so they normalize to zero.
    pub fn fit(ds: &Dataset) -> Self {
        let x = ds.features();
        let n = x.rows() as f64;
        let mut mean = Vec::with_capacity(x.cols());
        let mut std = Vec::with_capacity(x.cols());
        for j in 0..x.cols() {
            let col = x.column(j);
            if col.iter().all(|&v| v == col[0]) {
                mean.push(col[0]);
                std.push(1.0);
                continue;
            }
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m);
            std.push(if s > 0.0 { s } else { 1.0 });
        }
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.dim() != self.dim() {
            return Err(Error::shape(format!(
                "normalization fitted on {} features applied to {}",
                self.dim(),
                ds.dim()
            )));
        }
        let mut x = ds.features().clone();
        for r in 0..x.rows() {
            for (j, v) in x.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        Dataset::new(ds.name(), x, ds.labels().to_vec())
    }
}

/// Fits statistics on `train` and applies them to `train` and every entry of `others`.
pub fn znormalize(train: &Dataset, others: &[Dataset]) -> Result<(Dataset, Vec<Dataset>, NormStats)> {
    let stats = NormStats::fit(train);
    let t = stats.apply(train)?;
    let o = others.iter().map(|d| stats.apply(d)).collect::<Result<Vec<_>>>()?;
    Ok((t, o, stats))
}

/// Assignment of each row to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }

    pub fn validation_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn training_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Shuffled round-robin fold assignment.
pub fn make_folds(ds: &Dataset, k: usize, rng: &mut Rng) -> Result<FoldPlan> {
    let n = ds.size();
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::invalid(format!("{k} folds over {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut assignments = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPlan { k, assignments })
}

pub fn flip_labels(ds: &Dataset) -> Dataset {
    Dataset {
        name: ds.name.clone(),
        features: ds.features.clone(),
        labels: ds.labels.iter().map(|&l| 1 - l).collect(),
    }
}

/// Mixed-domain mini-batch. Source rows (domain 0) come first, then target
/// rows (domain 1); the two blocks keep their own feature widths.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub source_features: Matrix,
    pub source_labels: Vec<f64>,
    pub target_features: Matrix,
    pub target_labels: Vec<f64>,
}

impl Batch {
    pub fn new(
        source_features: Matrix,
        source_labels: Vec<f64>,
        target_features: Matrix,
        target_labels: Vec<f64>,
    ) -> Result<Self> {
        if source_features.rows() != source_labels.len()
            || target_features.rows() != target_labels.len()
        {
            return Err(Error::shape("batch labels and features disagree in length"));
        }
        Ok(Self {
            source_features,
            source_labels,
            target_features,
            target_labels,
        })
    }

    pub fn from_datasets(source: Option<&Dataset>, target: Option<&Dataset>) -> Result<Self> {
        let (sf, sl) = source.map_or((Matrix::zeros(0, 0), vec![]), |d| {
            (d.features().clone(), d.labels_f64())
        });
        let (tf, tl) = target.map_or((Matrix::zeros(0, 0), vec![]), |d| {
            (d.features().clone(), d.labels_f64())
        });
        Self::new(sf, sl, tf, tl)
    }

    pub fn n_source(&self) -> usize {
        self.source_labels.len()
    }

    pub fn n_target(&self) -> usize {
        self.target_labels.len()
    }

    pub fn len(&self) -> usize {
        self.n_source() + self.n_target()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Class labels in row order (source block, then target block).
    pub fn labels(&self) -> Vec<f64> {
        let mut v = self.source_labels.clone();
        v.extend_from_slice(&self.target_labels);
        v
    }

    /// 0 for source rows, 1 for target rows.
    pub fn domain_labels(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n_source()];
        v.resize(self.len(), 1.0);
        v
    }

    /// Native feature width of each row.
    pub fn origin_dims(&self) -> Vec<usize> {
        let mut v = vec![self.source_features.cols(); self.n_source()];
        v.resize(self.len(), self.target_features.cols());
        v
    }
}

struct Pool {
    order: Vec<usize>,
    pos: usize,
}

impl Pool {
    fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn reshuffle(&mut self, rng: &mut Rng) {
        self.order.shuffle(rng);
        self.pos = 0;
    }

    fn take(&mut self, k: usize, rng: &mut Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.reshuffle(rng);
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Endless stream of domain-balanced batches. Each batch holds `per_domain`
/// source rows and `per_domain` target rows. An epoch spans
/// `ceil(max(n_s, n_t) / per_domain)` batches; both pools are reshuffled at
/// every epoch start and whichever pool runs out first cycles with a fresh
/// shuffle.
pub struct BalancedBatcher<'a> {
    source: &'a Dataset,
    target: &'a Dataset,
    per_domain: usize,
    rng: Rng,
    source_pool: Pool,
    target_pool: Pool,
    emitted_in_epoch: usize,
}

pub fn balanced_batches<'a>(
    source: &'a Dataset,
    target: &'a Dataset,
    per_domain: usize,
    rng: Rng,
) -> Result<BalancedBatcher<'a>> {
    BalancedBatcher::new(source, target, per_domain, rng)
}

impl<'a> BalancedBatcher<'a> {
    pub fn new(source: &'a Dataset, target: &'a Dataset, per_domain: usize, rng: Rng) -> Result<Self> {
        if per_domain == 0 {
            return Err(Error::invalid("per-domain batch size must be >= 1"));
        }
        Ok(Self {
            source,
            target,
            per_domain,
            rng,
            source_pool: Pool::new(source.size()),
            target_pool: Pool::new(target.size()),
            emitted_in_epoch: 0,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.source.size().max(self.target.size()).div_ceil(self.per_domain)
    }

    /// Batches of the next full epoch.
    pub fn next_epoch(&mut self) -> Result<Vec<Batch>> {
        self.emitted_in_epoch = 0;
        (0..self.batches_per_epoch()).map(|_| self.next_batch()).collect()
    }

    fn next_batch(&mut self) -> Result<Batch> {
        if self.emitted_in_epoch == 0 {
            self.source_pool.reshuffle(&mut self.rng);
            self.target_pool.reshuffle(&mut self.rng);
        }
        let si = self.source_pool.take(self.per_domain, &mut self.rng);
        let ti = self.target_pool.take(self.per_domain, &mut self.rng);
        self.emitted_in_epoch = (self.emitted_in_epoch + 1) % self.batches_per_epoch();
        Batch::from_datasets(Some(&self.source.subset(&si)?), Some(&self.target.subset(&ti)?))
    }
}

impl Iterator for BalancedBatcher<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_batch())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use std::io::Write;

    fn toy(n: usize, d: usize) -> Dataset {
        let data = (0..n * d).map(|v| v as f64).collect();
        let labels = (0..n).map(|i| (i % 2) as u8).collect();
        Dataset::new("toy", Matrix::from_vec(n, d, data).unwrap(), labels).unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_maps_positive_label() {
        let f = write_tmp("a,b,y\n1,2,yes\n3,4,no\n5,6,yes\n");
        let ds = load_csv(f.path(), "y", "yes").unwrap();
        assert_eq!(ds.labels(), &[1, 0, 1]);
        assert_eq!(ds.features().row(1), &[3.0, 4.0]);
        assert_eq!(ds.dim(), 2);
    }

    #[test]
    fn csv_label_column_anywhere() {
        let f = write_tmp("y,a\n0,1.5\n1,2.5\n");
        let ds = load_csv(f.path(), "y", "1").unwrap();
        assert_eq!(ds.labels(), &[0, 1]);
        assert_eq!(ds.features().as_slice(), &[1.5, 2.5]);
    }

    #[test]
    fn csv_errors() {
        let three = write_tmp("a,y\n1,x\n2,y\n3,z\n");
        assert!(matches!(load_csv(three.path(), "y", "x"), Err(Error::LabelCardinality { .. })));

        let nan = write_tmp("a,b,y\n1,2,p\n3,NaN,n\n");
        match load_csv(nan.path(), "y", "p") {
            Err(Error::ParseCell { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }

        let f = write_tmp("a,b\n1,2\n");
        assert!(matches!(load_csv(f.path(), "y", "1"), Err(Error::MissingLabelColumn { .. })));
        assert!(matches!(
            load_csv("/definitely/not/here.csv", "y", "1"),
            Err(Error::MissingFile(_))
        ));
        let f = write_tmp("a,y\n1,p\n2,n\n");
        assert!(matches!(load_csv(f.path(), "y", "q"), Err(Error::MissingPositiveLabel { .. })));
    }

    #[test]
    fn split_sizes_australian() {
        let ds = toy(690, 1);
        let (tr, te) = split(&ds, 0.7, &mut seeded(1)).unwrap();
        assert_eq!((tr.size(), te.size()), (483, 207));
    }

    #[test]
    fn split_is_seeded_partition() {
        let ds = toy(10, 1);
        let (a, b) = split_indices(10, 0.7, &mut seeded(4)).unwrap();
        let (c, d) = split_indices(10, 0.7, &mut seeded(4)).unwrap();
        assert_eq!((&a, &b), (&c, &d));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(split(&ds, 1.0, &mut seeded(1)).is_err());
        assert!(split(&toy(1, 1), 0.5, &mut seeded(1)).is_err());
    }

    #[test]
    fn znormalize_hand_values() {
        let train = Dataset::new("t", Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap(), vec![0, 1, 0]).unwrap();
        let (n, _, st) = znormalize(&train, &[]).unwrap();
        assert_eq!(st.mean, vec![2.0]);
        assert!((st.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let expect = [-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589];
        for (v, e) in n.features().as_slice().iter().zip(expect) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn znormalize_constant_column_and_test_uses_train_stats() {
        let train = Dataset::new("t", Matrix::from_rows(&[[0.1, 1.0], [0.1, 3.0]]).unwrap(), vec![0, 1]).unwrap();
        let test = Dataset::new("u", Matrix::from_rows(&[[0.1, 5.0]]).unwrap(), vec![1]).unwrap();
        let (n, others, _) = znormalize(&train, &[test]).unwrap();
        assert_eq!(n.features().column(0), vec![0.0, 0.0]);
        assert_eq!(others[0].features().as_slice(), &[0.0, 3.0]);
        let wrong = Dataset::new("w", Matrix::zeros(1, 3), vec![1]).unwrap();
        assert!(matches!(znormalize(&train, &[wrong]), Err(Error::Shape(_))));
    }

    #[test]
    fn folds_sizes() {
        let p = make_folds(&toy(9, 1), 3, &mut seeded(1)).unwrap();
        assert_eq!(p.fold_sizes(), vec![3, 3, 3]);
        let p = make_folds(&toy(10, 1), 3, &mut seeded(1)).unwrap();
        let mut s = p.fold_sizes();
        s.sort_unstable();
        assert_eq!(s, vec![3, 3, 4]);
        assert_eq!(p, make_folds(&toy(10, 1), 3, &mut seeded(1)).unwrap());
        assert!(make_folds(&toy(2, 1), 3, &mut seeded(1)).is_err());
    }

    #[test]
    fn flip_cases() {
        let ds = Dataset::new("f", Matrix::zeros(3, 1), vec![0, 1, 1]).unwrap();
        assert_eq!(flip_labels(&ds).labels(), &[1, 0, 0]);
        assert_eq!(flip_labels(&flip_labels(&ds)), ds);
        let one = Dataset::new("f", Matrix::zeros(1, 1), vec![1]).unwrap();
        assert_eq!(flip_labels(&one).labels(), &[0]);
    }

    #[test]
    fn balanced_epoch_shape() {
        let s = toy(100, 3);
        let t = toy(40, 2);
        let mut b = balanced_batches(&s, &t, 20, seeded(1)).unwrap();
        let epoch = b.next_epoch().unwrap();
        assert_eq!(epoch.len(), 5);
        let mut seen_source = std::collections::BTreeSet::new();
        for batch in &epoch {
            assert_eq!(batch.n_source(), 20);
            assert_eq!(batch.n_target(), 20);
            let d = batch.domain_labels();
            assert_eq!(d.iter().sum::<f64>(), 20.0);
            assert_eq!(batch.origin_dims()[0], 3);
            assert_eq!(batch.origin_dims()[39], 2);
            for r in 0..20 {
                seen_source.insert(batch.source_features.row(r)[0] as usize);
            }
        }
        // the larger pool is exhausted exactly once
        assert_eq!(seen_source.len(), 100);
        let again = balanced_batches(&s, &t, 20, seeded(1)).unwrap().next_epoch().unwrap();
        assert_eq!(epoch, again);
        assert!(balanced_batches(&s, &t, 0, seeded(1)).is_err());
    }

    proptest! {
        #[test]
        fn flip_preserves_features_bits(v in proptest::collection::vec(-1e6f64..1e6, 1..30), seed in any::<u64>()) {
            let n = v.len();
            let labels: Vec<u8> = (0..n).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
            let ds = Dataset::new("p", Matrix::from_vec(n, 1, v).unwrap(), labels).unwrap();
            let f = flip_labels(&ds);
            prop_assert_eq!(f.features(), ds.features());
            prop_assert_eq!(flip_labels(&f), ds);
        }

        #[test]
        fn fold_plan_covers_once(n in 3usize..60, k in 2usize..6, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let p = make_folds(&toy(n, 1), k, &mut seeded(seed)).unwrap();
            let sizes = p.fold_sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert!(sizes.iter().all(|&s| s > 0));
            let mut all: Vec<usize> = (0..k).flat_map(|f| p.validation_indices(f)).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn znormalized_train_moments(rows in proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, 3), 2..40)) {
            let n = rows.len();
            let ds = Dataset::new("z", Matrix::from_rows(&rows).unwrap(), vec![0; n]).unwrap();
            let (z, _, st) = znormalize(&ds, &[]).unwrap();
            for j in 0..3 {
                let col = z.features().column(j);
                let m = col.iter().sum::<f64>() / n as f64;
                prop_assert!(m.abs() < 1e-9);
                let raw = ds.features().column(j);
                if raw.iter().any(|&v| v != raw[0]) && st.std[j] > 1e-6 {
                    let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
                    prop_assert!((s - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn split_partitions(n in 2usize..200, f in 0.05f64..0.95, seed in any::<u64>()) {
            let k = train_count(n, f);
            prop_assume!(k > 0 && k < n);
            let (a, b) = split_indices(n, f, &mut seeded(seed)).unwrap();
            prop_assert_eq!(a.len(), k);
            let mut all: Vec<usize> = a.into_iter().chain(b).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
