//! Pairwise accuracy-weighted soft voting and the gain/loss matrix.
//!
//! The better of two models gets weight 0.5 + δ and the other 0.5 − δ, where δ is the
//! accuracy gap clamped to 0.5 so the vote stays convex. Accuracies come from the same
//! predictions being combined, so gains are optimistic.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::table::{csv_bytes, fmt_real, parse_f64, read_csv};

const ROW_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub model_name: String,
    pub dataset: String,
    pub sample_ids: Vec<String>,
    pub labels: Vec<usize>,
    /// samples × classes
    pub probs: DMatrix<f64>,
}

impl PredictionSet {
    pub fn new(
        model_name: impl Into<String>,
        dataset: impl Into<String>,
        sample_ids: Vec<String>,
        labels: Vec<usize>,
        probs: DMatrix<f64>,
    ) -> Result<Self> {
        let set = PredictionSet {
            model_name: model_name.into(),
            dataset: dataset.into(),
            sample_ids,
            labels,
            probs,
        };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        let what = || format!("predictions of `{}` on `{}`", self.model_name, self.dataset);
        let (n, k) = self.probs.shape();
        if n == 0 || k == 0 {
            return Err(Error::malformed(what(), "no samples or no classes"));
        }
        if self.labels.len() != n || self.sample_ids.len() != n {
            return Err(Error::malformed(what(), "label/probability row counts differ"));
        }
        for i in 0..n {
            if self.labels[i] >= k {
                return Err(Error::malformed(
                    what(),
                    format!("sample {} has label {} with {k} classes", self.sample_ids[i], self.labels[i]),
                ));
            }
            let row = self.probs.row(i);
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::malformed(
                    what(),
                    format!("sample {} has a probability outside [0, 1]", self.sample_ids[i]),
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::malformed(
                    what(),
                    format!("sample {} probabilities sum to {sum}", self.sample_ids[i]),
                ));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.probs.ncols()
    }

    /// Parses `sample_id,label,p_0,...,p_{K-1}`.
    pub fn parse_csv(model_name: &str, dataset: &str, bytes: &[u8]) -> Result<Self> {
        let what = format!("prediction CSV for `{model_name}` on `{dataset}`");
        let (header, records) = read_csv(&what, bytes, &["sample_id", "label"], true)?;
        let k = header.len() - 2;
        for (c, h) in header[2..].iter().enumerate() {
            if *h != format!("p_{c}") {
                return Err(Error::malformed(&what, format!("column `{h}` should be `p_{c}`")));
            }
        }
        let mut ids = Vec::with_capacity(records.len());
        let mut labels = Vec::with_capacity(records.len());
        let mut values = Vec::with_capacity(records.len() * k);
        for rec in &records {
            if rec.len() != k + 2 {
                return Err(Error::malformed(&what, "ragged row"));
            }
            ids.push(rec[0].to_string());
            labels.push(
                rec[1]
                    .parse::<usize>()
                    .map_err(|_| Error::malformed(&what, format!("label `{}`", &rec[1])))?,
            );
            for field in rec.iter().skip(2) {
                values.push(parse_f64(&what, field)?);
            }
        }
        let probs = DMatrix::from_row_slice(records.len(), k, &values);
        PredictionSet::new(model_name, dataset, ids, labels, probs)
    }

    pub fn read(model_name: &str, dataset: &str, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::ReadInput {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_csv(model_name, dataset, &bytes)
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let header: Vec<String> = ["sample_id".to_string(), "label".to_string()]
            .into_iter()
            .chain((0..self.n_classes()).map(|c| format!("p_{c}")))
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = (0..self.n_samples()).map(|i| {
            [self.sample_ids[i].clone(), self.labels[i].to_string()]
                .into_iter()
                .chain(self.probs.row(i).iter().map(|p| format!("{p}")))
                .collect::<Vec<_>>()
        });
        csv_bytes(&header, rows)
    }
}

/// Index of the largest entry; the lowest index wins a tie.
pub fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in row.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn accuracy_of(probs: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let correct = (0..probs.nrows())
        .filter(|&i| argmax(probs.row(i).iter().copied()) == labels[i])
        .count();
    correct as f64 / probs.nrows() as f64
}

pub fn accuracy(preds: &PredictionSet) -> f64 {
    accuracy_of(&preds.probs, &preds.labels)
}

fn check_compatible(p1: &PredictionSet, p2: &PredictionSet) -> Result<()> {
    if p1.dataset != p2.dataset {
        return Err(Error::Mismatch(format!(
            "datasets `{}` and `{}` differ",
            p1.dataset, p2.dataset
        )));
    }
    if p1.sample_ids != p2.sample_ids || p1.labels != p2.labels {
        return Err(Error::Mismatch(format!(
            "`{}` and `{}` disagree on samples or labels of `{}`",
            p1.model_name, p2.model_name, p1.dataset
        )));
    }
    if p1.n_classes() != p2.n_classes() {
        return Err(Error::Mismatch(format!(
            "`{}` has {} classes, `{}` has {}",
            p1.model_name,
            p1.n_classes(),
            p2.model_name,
            p2.n_classes()
        )));
    }
    Ok(())
}

/// Weights for two members with accuracies `a1`, `a2`; equal accuracies favour the first.
pub fn vote_weights(a1: f64, a2: f64) -> (f64, f64) {
    let delta = (a1 - a2).abs().min(0.5);
    let (hi, lo) = (0.5 + delta, 0.5 - delta);
    if a1 >= a2 {
        (hi, lo)
    } else {
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftVote {
    pub probs: DMatrix<f64>,
    /// (weight of p1, weight of p2)
    pub weights: (f64, f64),
}

pub fn soft_vote_pair(p1: &PredictionSet, p2: &PredictionSet) -> Result<SoftVote> {
    check_compatible(p1, p2)?;
    let weights = vote_weights(accuracy(p1), accuracy(p2));
    let probs = &p1.probs * weights.0 + &p2.probs * weights.1;
    Ok(SoftVote { probs, weights })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleGainMatrix {
    pub dataset: String,
    pub model_names: Vec<String>,
    pub solo_accuracy: Vec<f64>,
    /// Symmetric; zero diagonal.
    pub gain: DMatrix<f64>,
}

pub fn gain_matrix(sets: &[PredictionSet]) -> Result<EnsembleGainMatrix> {
    if sets.len() < 2 {
        return Err(Error::out_of_range(
            "prediction set count",
            format!("need at least 2 models, got {}", sets.len()),
        ));
    }
    for s in &sets[1..] {
        check_compatible(&sets[0], s)?;
    }
    let n = sets.len();
    let solo: Vec<f64> = sets.iter().map(accuracy).collect();
    let mut gain = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let vote = soft_vote_pair(&sets[i], &sets[j])?;
            let g = accuracy_of(&vote.probs, &sets[i].labels) - solo[i].max(solo[j]);
            gain[(i, j)] = g;
            gain[(j, i)] = g;
        }
    }
    Ok(EnsembleGainMatrix {
        dataset: sets[0].dataset.clone(),
        model_names: sets.iter().map(|s| s.model_name.clone()).collect(),
        solo_accuracy: solo,
        gain,
    })
}

impl EnsembleGainMatrix {
    /// Diagonal holds solo accuracy, off-diagonal the gain.
    pub fn cell(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.solo_accuracy[i]
        } else {
            self.gain[(i, j)]
        }
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let header: Vec<&str> = std::iter::once("model")
            .chain(self.model_names.iter().map(String::as_str))
            .collect();
        let n = self.model_names.len();
        let rows = (0..n).map(|i| {
            std::iter::once(self.model_names[i].clone())
                .chain((0..n).map(|j| fmt_real(self.cell(i, j))))
                .collect::<Vec<_>>()
        });
        csv_bytes(&header, rows)
    }
}
