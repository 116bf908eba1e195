//! Repeated stratified k-fold cross-validation and accuracy reporting.

use std::fmt::Write as _;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FOLDS: usize = 3;
pub const DEFAULT_REPEATS: usize = 10;

/// Splits item indices into `num_folds` folds with per-class counts as equal
/// as possible. Each class is shuffled, then cut into consecutive runs whose
/// sizes differ by at most one, larger runs first.
pub fn stratified_folds(
    labels: &[usize],
    num_classes: usize,
    num_folds: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    if num_folds < 2 {
        return Err(Error::config(format!("need at least 2 folds, got {num_folds}")));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::data(format!("label {bad} outside 0..{num_classes}")));
    }
    let mut folds = vec![Vec::new(); num_folds];
    let mut present = 0;
    for c in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        present += 1;
        if members.len() < num_folds {
            return Err(Error::data(format!(
                "class {c} has {} items; stratified {num_folds}-fold splitting needs at least {num_folds}",
                members.len()
            )));
        }
        members.shuffle(rng);
        let base = members.len() / num_folds;
        let extra = members.len() % num_folds;
        let mut start = 0;
        for (f, fold) in folds.iter_mut().enumerate() {
            let size = base + usize::from(f < extra);
            fold.extend_from_slice(&members[start..start + size]);
            start += size;
        }
    }
    if present < 2 {
        return Err(Error::data("cross-validation needs at least two classes"));
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// One train/test rotation handed to the evaluation closure.
#[derive(Debug, Clone)]
pub struct Split {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Seed reserved for randomness inside this run.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub repeat: usize,
    pub fold: usize,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub class_names: Vec<String>,
    pub runs: Vec<RunResult>,
    /// Mean fold accuracy within each repeat.
    pub repeat_means: Vec<f64>,
    /// Mean of `repeat_means`.
    pub mean: f64,
    /// Sample standard deviation of `repeat_means` (0 with one repeat).
    pub std: f64,
    /// `confusion[true][predicted]`, summed over all runs.
    pub confusion: Vec<Vec<usize>>,
}

fn run_seed(seed: u64, repeat: usize) -> u64 {
    seed.wrapping_add((repeat as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Repeats stratified `num_folds`-fold cross-validation over tracks.
///
/// `evaluate` receives each split and returns predicted labels for
/// `split.test`, in order.
pub fn cross_validate<F>(
    labels: &[usize],
    class_names: &[String],
    num_folds: usize,
    repeats: usize,
    seed: u64,
    mut evaluate: F,
) -> Result<AccuracyReport>
where
    F: FnMut(&Split) -> Result<Vec<usize>>,
{
    if repeats == 0 {
        return Err(Error::config("repeats must be at least 1"));
    }
    let k = class_names.len();
    let mut runs = Vec::with_capacity(repeats * num_folds);
    let mut repeat_means = Vec::with_capacity(repeats);
    let mut confusion = vec![vec![0usize; k]; k];
    for repeat in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed(seed, repeat));
        let folds = stratified_folds(labels, k, num_folds, &mut rng)?;
        let mut fold_acc = Vec::with_capacity(num_folds);
        for (fold, test) in folds.iter().enumerate() {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(f, _)| *f != fold)
                .flat_map(|(_, v)| v.iter().copied())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let split = Split {
                repeat,
                fold,
                train,
                test: test.clone(),
                seed: run_seed(seed, repeat * num_folds + fold + 1),
            };
            let pred = evaluate(&split)?;
            if pred.len() != test.len() {
                return Err(Error::dim(test.len(), pred.len(), "cross-validation predictions"));
            }
            let mut correct = 0;
            for (&i, &p) in test.iter().zip(&pred) {
                if p >= k {
                    return Err(Error::data(format!("predicted label {p} outside 0..{k}")));
                }
                confusion[labels[i]][p] += 1;
                correct += usize::from(labels[i] == p);
            }
            let accuracy = correct as f64 / test.len() as f64;
            log::info!("repeat {repeat} fold {fold}: accuracy {:.2}%", 100.0 * accuracy);
            fold_acc.push(accuracy);
            runs.push(RunResult {
                repeat,
                fold,
                correct,
                total: test.len(),
                accuracy,
            });
        }
        repeat_means.push(fold_acc.iter().sum::<f64>() / fold_acc.len() as f64);
    }
    let mean = repeat_means.iter().sum::<f64>() / repeats as f64;
    let std = if repeats > 1 {
        (repeat_means.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(AccuracyReport {
        class_names: class_names.to_vec(),
        runs,
        repeat_means,
        mean,
        std,
        confusion,
    })
}

impl AccuracyReport {
    /// Recall per true class from the pooled confusion matrix (NaN for empty classes).
    pub fn per_class_accuracy(&self) -> Vec<f64> {
        self.confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let total: usize = row.iter().sum();
                if total == 0 {
                    f64::NAN
                } else {
                    row[c] as f64 / total as f64
                }
            })
            .collect()
    }

    pub fn write_runs_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["repeat", "fold", "correct", "total", "accuracy"])?;
        for r in &self.runs {
            w.write_record([
                r.repeat.to_string(),
                r.fold.to_string(),
                r.correct.to_string(),
                r.total.to_string(),
                format!("{:.6}", r.accuracy),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_confusion_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.class_names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.class_names.iter().zip(&self.confusion) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-genre accuracy, one row per class (bar-chart data).
    pub fn write_per_class_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["class", "accuracy"])?;
        for (name, acc) in self.class_names.iter().zip(self.per_class_accuracy()) {
            w.write_record([name.clone(), format!("{acc:.6}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "mean accuracy {:.4}% (std {:.4}%) over {} runs\n",
            100.0 * self.mean,
            100.0 * self.std,
            self.runs.len()
        );
        for (name, acc) in self.class_names.iter().zip(self.per_class_accuracy()) {
            let _ = writeln!(s, "  {name:<12} {:>7.2}%", 100.0 * acc);
        }
        s
    }
}

/// Accuracy grid with one row per layer and one column per experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl ResultsTable {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn set(&mut self, row: &str, column: &str, value: f64) {
        let c = match self.columns.iter().position(|x| x == column) {
            Some(c) => c,
            None => {
                self.columns.push(column.to_string());
                self.rows.iter_mut().for_each(|(_, v)| v.push(None));
                self.columns.len() - 1
            }
        };
        let width = self.columns.len();
        let r = match self.rows.iter().position(|(name, _)| name == row) {
            Some(r) => r,
            None => {
                self.rows.push((row.to_string(), vec![None; width]));
                self.rows.len() - 1
            }
        };
        self.rows[r].1[c] = Some(value);
    }

    pub fn get(&self, row: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|(name, _)| name == row)?.1[c]
    }

    /// Plain-text table with accuracies in percent.
    pub fn render(&self) -> String {
        let width = self.columns.iter().map(String::len).max().unwrap_or(0).max(10);
        let mut s = format!("{:<10}", "");
        for c in &self.columns {
            let _ = write!(s, " {c:>width$}");
        }
        s.push('\n');
        for (name, vals) in &self.rows {
            let _ = write!(s, "{name:<10}");
            for v in vals {
                match v {
                    Some(v) => {
                        let _ = write!(s, " {:>width$}", format!("{:.4}%", 100.0 * v));
                    }
                    None => {
                        let _ = write!(s, " {:>width$}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["layer".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (name, vals) in &self.rows {
            let mut rec = vec![name.clone()];
            rec.extend(vals.iter().map(|v| v.map_or(String::new(), |v| format!("{v:.6}"))));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
