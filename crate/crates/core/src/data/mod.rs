//! Datasets, category views and task splits.

mod idx;

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub use idx::{load_idx, read_idx_images, read_idx_labels};

/// Labelled inputs in `[0, 1]`, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Array2<f32>,
    labels: Vec<usize>,
    num_categories: usize,
    name: String,
}

impl Dataset {
    pub fn new(
        inputs: Array2<f32>,
        labels: Vec<usize>,
        num_categories: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::Data("a dataset needs at least one sample".into()));
        }
        if inputs.nrows() != labels.len() {
            return Err(Error::Data(format!(
                "{} input rows but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_categories) {
            return Err(Error::Data(format!(
                "label {bad} outside [0, {num_categories})"
            )));
        }
        if inputs.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data("inputs must be finite and lie in [0, 1]".into()));
        }
        Ok(Dataset {
            inputs,
            labels,
            num_categories,
            name: name.into(),
        })
    }

    pub fn inputs(&self) -> &Array2<f32> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// Rows `indices`, in that order. Fails on an empty selection.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::arg("empty subset"));
        }
        Ok(Dataset {
            inputs: self.inputs.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_categories: self.num_categories,
            name: self.name.clone(),
        })
    }

    /// Widens the declared category range (labels are unchanged).
    pub fn with_num_categories(mut self, n: usize) -> Result<Dataset> {
        if self.labels.iter().any(|&y| y >= n) {
            return Err(Error::arg("narrower than the largest label"));
        }
        self.num_categories = n;
        Ok(self)
    }

    /// Seeded subsample of at most `cap` rows per category, original order kept.
    pub fn sample_per_category(&self, cap: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = Vec::new();
        for view in split_by_category(self) {
            let mut idx = view.indices.clone();
            if idx.len() > cap {
                idx.shuffle(&mut rng);
                idx.truncate(cap);
            }
            keep.extend(idx);
        }
        keep.sort_unstable();
        self.subset(&keep).expect("dataset is non-empty")
    }

    /// Seeded subsample of `n` rows (all rows if `n >= len`).
    pub fn sample(&self, n: usize, seed: u64) -> Dataset {
        if n >= self.len() {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(n.max(1));
        idx.sort_unstable();
        self.subset(&idx).expect("non-empty")
    }

    /// Writes `label,f0,f1,...` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["label".to_string()];
        header.extend((0..self.dim()).map(|j| format!("f{j}")));
        w.write_record(&header)?;
        for (row, &y) in self.inputs.rows().into_iter().zip(&self.labels) {
            let mut rec = vec![y.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>, num_categories: Option<usize>) -> Result<Dataset> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.get(0) != Some("label") {
            return Err(Error::Data(format!(
                "{}: first column must be `label`",
                path.display()
            )));
        }
        let dim = header.len() - 1;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse_err = |f: &str| Error::Data(format!("{}: bad value `{f}`", path.display()));
            labels.push(rec[0].parse::<usize>().map_err(|_| parse_err(&rec[0]))?);
            for f in rec.iter().skip(1) {
                values.push(f.parse::<f32>().map_err(|_| parse_err(f))?);
            }
        }
        let inputs = Array2::from_shape_vec((labels.len(), dim), values)
            .map_err(|e| Error::Data(e.to_string()))?;
        let k = num_categories.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Dataset::new(inputs, labels, k, name)
    }
}

/// The indices of one category within a parent dataset.
#[derive(Debug, Clone)]
pub struct CategoryView<'a> {
    pub parent: &'a Dataset,
    pub category: usize,
    pub indices: Vec<usize>,
}

impl CategoryView<'_> {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The view's samples as a standalone dataset, `None` when empty.
    pub fn dataset(&self) -> Option<Dataset> {
        self.parent.subset(&self.indices).ok()
    }
}

/// One view per declared category, empty categories included.
pub fn split_by_category(data: &Dataset) -> Vec<CategoryView<'_>> {
    let mut views: Vec<CategoryView<'_>> = (0..data.num_categories)
        .map(|c| CategoryView {
            parent: data,
            category: c,
            indices: Vec::new(),
        })
        .collect();
    for (i, &y) in data.labels.iter().enumerate() {
        views[y].indices.push(i);
    }
    views
}

/// Gaussian blobs around one seeded center per category.
///
/// Centers are uniform in `[0, 1]^d` and redrawn (a bounded number of times)
/// while closer than `6·spread` to an earlier center.
pub fn synth_blobs(
    num_categories: usize,
    per_category: usize,
    dim: usize,
    spread: f32,
    seed: u64,
) -> Result<Dataset> {
    if num_categories == 0 || per_category == 0 || dim == 0 || !(spread >= 0.0) {
        return Err(Error::arg("blob parameters must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_sep = 6.0 * spread;
    let mut centers: Vec<Vec<f32>> = Vec::with_capacity(num_categories);
    for _ in 0..num_categories {
        let mut best = Vec::new();
        for _attempt in 0..1000 {
            let c: Vec<f32> = (0..dim).map(|_| rng.random::<f32>()).collect();
            let ok = centers.iter().all(|o| {
                o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f32>().sqrt() >= min_sep
            });
            best = c;
            if ok {
                break;
            }
        }
        centers.push(best);
    }
    let noise = Normal::new(0.0f32, spread.max(f32::MIN_POSITIVE)).expect("valid std");
    let n = num_categories * per_category;
    let mut inputs = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for k in 0..per_category {
            let row = c * per_category + k;
            for j in 0..dim {
                let jitter = if spread == 0.0 {
                    0.0
                } else {
                    noise.sample(&mut rng)
                };
                inputs[[row, j]] = (center[j] + jitter).clamp(0.0, 1.0);
            }
            labels.push(c);
        }
    }
    Dataset::new(inputs, labels, num_categories, format!("blobs-{seed}"))
}

/// Two relabelled halves of a dataset.
///
/// `a_ids[k]` is the original category of local label `k` in `a`, likewise
/// for `b`.
#[derive(Debug, Clone)]
pub struct TaskSplit {
    pub a: Dataset,
    pub b: Dataset,
    pub a_ids: Vec<usize>,
    pub b_ids: Vec<usize>,
}

impl TaskSplit {
    /// Joint label space: task-A units first, then task-B units.
    pub fn joint_categories(&self) -> usize {
        self.a_ids.len() + self.b_ids.len()
    }

    pub fn original_a(&self, local: usize) -> usize {
        self.a_ids[local]
    }

    pub fn original_b(&self, local: usize) -> usize {
        self.b_ids[local]
    }
}

pub fn split_tasks(data: &Dataset, task_a_categories: &[usize]) -> Result<TaskSplit> {
    let a_set: BTreeSet<usize> = task_a_categories.iter().copied().collect();
    if a_set.len() != task_a_categories.len() {
        return Err(Error::arg("task-A categories contain duplicates"));
    }
    if let Some(&bad) = a_set.iter().find(|&&c| c >= data.num_categories) {
        return Err(Error::arg(format!("category {bad} is not in the dataset")));
    }
    let a_ids: Vec<usize> = a_set.iter().copied().collect();
    let b_ids: Vec<usize> = (0..data.num_categories)
        .filter(|c| !a_set.contains(c))
        .collect();
    let a = relabel(data, &a_ids, "A")?;
    let b = relabel(data, &b_ids, "B")?;
    Ok(TaskSplit { a, b, a_ids, b_ids })
}

fn relabel(data: &Dataset, ids: &[usize], tag: &str) -> Result<Dataset> {
    let mut local = vec![usize::MAX; data.num_categories];
    for (k, &c) in ids.iter().enumerate() {
        local[c] = k;
    }
    let idx: Vec<usize> = (0..data.len())
        .filter(|&i| local[data.labels[i]] != usize::MAX)
        .collect();
    if idx.is_empty() {
        return Err(Error::arg(format!("task {tag} would be empty")));
    }
    Ok(Dataset {
        inputs: data.inputs.select(Axis(0), &idx),
        labels: idx.iter().map(|&i| local[data.labels[i]]).collect(),
        num_categories: ids.len(),
        name: format!("{}-task{tag}", data.name),
    })
}

/// All of task B plus a seeded, stratified sample of `⌊fraction·|A|⌋` task-A
/// rows, in the joint label space (A labels first, B labels shifted by the
/// number of A categories).
pub fn replay_mix(data_b: &Dataset, data_a: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::arg("replay fraction must lie in [0, 1]"));
    }
    if data_a.dim() != data_b.dim() {
        return Err(Error::shape("task A and task B inputs differ in width"));
    }
    let shift = data_a.num_categories;
    let total = (fraction * data_a.len() as f64 + 1e-9).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut pools: Vec<Vec<usize>> = split_by_category(data_a)
        .into_iter()
        .map(|v| v.indices)
        .collect();
    for p in &mut pools {
        p.shuffle(&mut rng);
    }
    // equal quota per category, remainder to the lowest ids, overflow moved on
    let cats = pools.len().max(1);
    let mut quota = vec![total / cats; pools.len()];
    for q in quota.iter_mut().take(total % cats) {
        *q += 1;
    }
    let mut spill = 0usize;
    for (q, p) in quota.iter_mut().zip(&pools) {
        if *q > p.len() {
            spill += *q - p.len();
            *q = p.len();
        }
    }
    while spill > 0 {
        let mut moved = false;
        for (q, p) in quota.iter_mut().zip(&pools) {
            if spill > 0 && *q < p.len() {
                *q += 1;
                spill -= 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    let picked: Vec<usize> = pools
        .iter()
        .zip(&quota)
        .flat_map(|(p, &q)| p[..q].iter().copied())
        .collect();

    let n = data_b.len() + picked.len();
    let mut inputs = Array2::zeros((n, data_b.dim()));
    inputs
        .slice_mut(ndarray::s![..data_b.len(), ..])
        .assign(&data_b.inputs);
    let mut labels: Vec<usize> = data_b.labels.iter().map(|&y| y + shift).collect();
    for (k, &i) in picked.iter().enumerate() {
        inputs.row_mut(data_b.len() + k).assign(&data_a.inputs.row(i));
        labels.push(data_a.labels[i]);
    }
    Ok(Dataset {
        inputs,
        labels,
        num_categories: shift + data_b.num_categories,
        name: format!("{}+replay", data_b.name),
    })
}

/// Task-B data moved into the joint label space without replay.
pub fn shift_labels(data: &Dataset, shift: usize) -> Dataset {
    Dataset {
        inputs: data.inputs.clone(),
        labels: data.labels.iter().map(|&y| y + shift).collect(),
        num_categories: data.num_categories + shift,
        name: data.name.clone(),
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    fn tiny(labels: Vec<usize>, k: usize) -> Dataset {
        let n = labels.len();
        let inputs = Array2::from_shape_fn((n, 2), |(i, j)| ((i + j) % 3) as f32 / 2.0);
        Dataset::new(inputs, labels, k, "tiny").unwrap()
    }

    #[test]
    fn construction_validates() {
        assert!(Dataset::new(Array2::zeros((0, 2)), vec![], 2, "e").is_err());
        assert!(Dataset::new(Array2::zeros((1, 2)), vec![2], 2, "l").is_err());
        assert!(Dataset::new(array![[1.5f32, 0.0]], vec![0], 2, "r").is_err());
        assert!(Dataset::new(array![[f32::NAN, 0.0]], vec![0], 2, "n").is_err());
    }

    #[test]
    fn views_partition_labels() {
        let d = tiny(vec![0, 1, 0], 2);
        let v = split_by_category(&d);
        assert_eq!(v[0].indices, vec![0, 2]);
        assert_eq!(v[1].indices, vec![1]);
    }

    #[test]
    fn single_category_gives_one_view() {
        let d = tiny(vec![0, 0, 0], 1);
        assert_eq!(split_by_category(&d).len(), 1);
    }

    #[test]
    fn empty_declared_category_is_kept() {
        let d = tiny(vec![0, 2, 0], 3);
        let v = split_by_category(&d);
        assert_eq!(v.len(), 3);
        assert!(v[1].is_empty());
        assert!(v[1].dataset().is_none());
    }

    #[test]
    fn blobs_are_deterministic_and_degenerate_at_zero_spread() {
        let a = synth_blobs(3, 10, 4, 0.0, 5).unwrap();
        let b = synth_blobs(3, 10, 4, 0.0, 5).unwrap();
        assert_eq!(a, b);
        for c in 0..3 {
            let first = a.inputs().row(c * 10).to_owned();
            for k in 0..10 {
                assert_eq!(a.inputs().row(c * 10 + k), first);
            }
        }
        let c = synth_blobs(3, 10, 4, 0.1, 5).unwrap();
        assert_eq!(c, synth_blobs(3, 10, 4, 0.1, 5).unwrap());
        assert_ne!(c, synth_blobs(3, 10, 4, 0.1, 6).unwrap());
    }

    #[test]
    fn two_blobs_are_nearest_center_separable() {
        let d = synth_blobs(2, 500, 2, 0.05, 3).unwrap();
        // oracle: class means, then nearest-mean classification
        let mut means = [[0.0f64; 2]; 2];
        let mut counts = [0usize; 2];
        for (row, &y) in d.inputs().rows().into_iter().zip(d.labels()) {
            means[y][0] += row[0] as f64;
            means[y][1] += row[1] as f64;
            counts[y] += 1;
        }
        for c in 0..2 {
            means[c][0] /= counts[c] as f64;
            means[c][1] /= counts[c] as f64;
        }
        let hits = d
            .inputs()
            .rows()
            .into_iter()
            .zip(d.labels())
            .filter(|(row, &y)| {
                let dist = |m: &[f64; 2]| (row[0] as f64 - m[0]).powi(2) + (row[1] as f64 - m[1]).powi(2);
                let pred = if dist(&means[0]) <= dist(&means[1]) { 0 } else { 1 };
                pred == y
            })
            .count();
        assert!(hits as f64 / d.len() as f64 >= 0.99);
    }

    #[test]
    fn split_tasks_five_and_five() {
        let labels: Vec<usize> = (0..50).map(|i| i % 10).collect();
        let d = tiny(labels, 10);
        let s = split_tasks(&d, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(s.a.num_categories(), 5);
        assert_eq!(s.b.num_categories(), 5);
        assert_eq!(s.a.len() + s.b.len(), 50);
        assert_eq!(s.b_ids, vec![5, 6, 7, 8, 9]);
        for (i, &y) in s.b.labels().iter().enumerate() {
            // rows keep their order: B row i is original row 10·(i/5) + 5 + i%5
            assert_eq!(s.original_b(y), 5 + i % 5);
        }
    }

    #[test]
    fn split_tasks_relabel_round_trips() {
        let d = tiny(vec![3, 1, 0, 2, 3, 1], 4);
        let s = split_tasks(&d, &[3, 1]).unwrap();
        assert_eq!(s.a_ids, vec![1, 3]);
        let orig_a: Vec<usize> = s.a.labels().iter().map(|&y| s.original_a(y)).collect();
        assert_eq!(orig_a, vec![3, 1, 3, 1]);
        let orig_b: Vec<usize> = s.b.labels().iter().map(|&y| s.original_b(y)).collect();
        assert_eq!(orig_b, vec![0, 2]);
    }

    #[test]
    fn split_tasks_edge_cases() {
        let d = tiny(vec![0, 1, 2, 0, 1, 2], 3);
        let s = split_tasks(&d, &[0, 1]).unwrap();
        assert_eq!(s.b.num_categories(), 1);
        assert!(split_tasks(&d, &[0, 1, 2]).is_err());
        assert!(split_tasks(&d, &[]).is_err());
        assert!(split_tasks(&d, &[0, 0]).is_err());
        assert!(split_tasks(&d, &[5]).is_err());
    }

    #[test]
    fn replay_counts() {
        let a = tiny((0..1000).map(|i| i % 5).collect(), 5);
        let b = tiny((0..300).map(|i| i % 5).collect(), 5);
        let none = replay_mix(&b, &a, 0.0, 1).unwrap();
        assert_eq!(none.len(), b.len());
        assert_eq!(none.inputs(), b.inputs());
        assert!(none.labels().iter().all(|&y| y >= 5));
        let all = replay_mix(&b, &a, 1.0, 1).unwrap();
        assert_eq!(all.len(), 1300);
        let tenth = replay_mix(&b, &a, 0.1, 1).unwrap();
        assert_eq!(tenth.len() - b.len(), 100);
        // stratified: 20 per A category
        let mut per = [0usize; 5];
        for &y in &tenth.labels()[b.len()..] {
            per[y] += 1;
        }
        assert_eq!(per, [20; 5]);
        assert_eq!(tenth, replay_mix(&b, &a, 0.1, 1).unwrap());
        assert_eq!(tenth.num_categories(), 10);
    }

    #[test]
    fn csv_round_trip() {
        let d = synth_blobs(2, 3, 3, 0.1, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("blobs.csv");
        d.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("label,f0,f1,f2\n"));
        let back = Dataset::read_csv(&p, Some(2)).unwrap();
        assert_eq!(back.inputs(), d.inputs());
        assert_eq!(back.labels(), d.labels());
    }

    #[test]
    fn per_category_cap() {
        let d = tiny((0..30).map(|i| i % 3).collect(), 3);
        let s = d.sample_per_category(4, 9);
        assert_eq!(s.len(), 12);
        assert_eq!(s, d.sample_per_category(4, 9));
    }
}
