//! Learned-concepts embedding: covariance PCA over the normalized concept matrix.
//!
//! Columns are mean-centered but not rescaled; the category normalization applied
//! upstream already fixes the relative weight of each concept. Each loading row is
//! sign-fixed so that its largest-magnitude entry is positive (earliest index wins a
//! tie), which keeps plots and exports stable across runs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::matrix::ConceptMatrix;
use crate::profile::ConceptCategory;
use crate::table::{csv_bytes, fmt_real};

pub const DEFAULT_COMPONENTS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LceEmbedding {
    pub model_names: Vec<String>,
    pub concepts: Vec<(String, ConceptCategory)>,
    /// models × k
    pub scores: DMatrix<f64>,
    /// k × concepts, unit-norm orthogonal rows
    pub loadings: DMatrix<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// Eigenvalues of the covariance matrix for the kept components.
    pub explained_variance: Vec<f64>,
    pub column_means: DVector<f64>,
}

/// Largest number of components a fit of `matrix` can return.
pub fn max_components(n_models: usize, n_concepts: usize) -> usize {
    n_models.saturating_sub(1).min(n_concepts)
}

pub fn fit_pca(matrix: &ConceptMatrix, k: usize) -> Result<LceEmbedding> {
    fit_pca_data(
        matrix.model_names.clone(),
        matrix.superset.concepts().to_vec(),
        &matrix.normalized,
        k,
    )
}

/// Fits directly on a models × concepts matrix; `data` rows and columns must line up
/// with `model_names` and `concepts`.
pub fn fit_pca_data(
    model_names: Vec<String>,
    concepts: Vec<(String, ConceptCategory)>,
    data: &DMatrix<f64>,
    k: usize,
) -> Result<LceEmbedding> {
    if model_names.len() != data.nrows() {
        return Err(Error::DimensionMismatch {
            expected: data.nrows(),
            found: model_names.len(),
        });
    }
    if concepts.len() != data.ncols() {
        return Err(Error::DimensionMismatch {
            expected: data.ncols(),
            found: concepts.len(),
        });
    }
    let fit = pca(data, k)?;
    Ok(LceEmbedding {
        model_names,
        concepts,
        scores: fit.scores,
        loadings: fit.loadings,
        explained_variance_ratio: fit.ratios,
        explained_variance: fit.eigenvalues,
        column_means: fit.means,
    })
}

pub(crate) struct PcaFit {
    pub scores: DMatrix<f64>,
    pub loadings: DMatrix<f64>,
    pub ratios: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub means: DVector<f64>,
}

/// PCA on the rows of `data` (observations × features).
pub(crate) fn pca(data: &DMatrix<f64>, k: usize) -> Result<PcaFit> {
    let (n, d) = data.shape();
    if n < 2 {
        return Err(Error::out_of_range(
            "model count",
            format!("PCA needs at least 2 rows, got {n}"),
        ));
    }
    let max_k = max_components(n, d);
    if k == 0 || k > max_k {
        return Err(Error::out_of_range(
            "component count",
            format!("k={k} not in [1, {max_k}] for a {n}x{d} matrix"),
        ));
    }
    let first = data.row(0);
    if (1..n).all(|i| data.row(i) == first) {
        return Err(Error::ZeroVariance(
            "all rows of the matrix are identical".into(),
        ));
    }

    let means = DVector::from_fn(d, |j, _| data.column(j).sum() / n as f64);
    let mut centered = data.clone();
    for j in 0..d {
        let m = means[j];
        centered.column_mut(j).apply(|v| *v -= m);
    }
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eigen = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .total_cmp(&eigen.eigenvalues[a])
            .then(a.cmp(&b))
    });

    // Components past rank n-1 carry no variance; the ratio denominator sums only the
    // components that can be nonzero, so a rank-1 fit reports exactly 1.0.
    let denom: f64 = order[..max_k]
        .iter()
        .map(|&i| eigen.eigenvalues[i].max(0.0))
        .sum();

    let mut loadings = DMatrix::<f64>::zeros(k, d);
    let mut eigenvalues = Vec::with_capacity(k);
    for (row, &idx) in order[..k].iter().enumerate() {
        let mut v: Vec<f64> = eigen.eigenvectors.column(idx).iter().copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let pivot = v
            .iter()
            .enumerate()
            .fold(0usize, |best, (j, x)| if x.abs() > v[best].abs() { j } else { best });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        loadings.row_mut(row).copy_from_slice(&v);
        eigenvalues.push(eigen.eigenvalues[idx].max(0.0));
    }
    let ratios = eigenvalues.iter().map(|l| l / denom).collect();
    let scores = centered * loadings.transpose();
    Ok(PcaFit {
        scores,
        loadings,
        ratios,
        eigenvalues,
        means,
    })
}

impl LceEmbedding {
    pub fn k(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn n_models(&self) -> usize {
        self.model_names.len()
    }

    pub fn model_index(&self, name: &str) -> Option<usize> {
        self.model_names.iter().position(|m| m == name)
    }

    pub fn score_column(&self, component: usize) -> Vec<f64> {
        self.scores.column(component).iter().copied().collect()
    }

    /// Places a concept-matrix row (normalized values) in the embedding.
    pub fn project(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.column_means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.column_means.len(),
                found: row.len(),
            });
        }
        Ok((0..self.k())
            .map(|c| {
                row.iter()
                    .zip(self.column_means.iter())
                    .zip(self.loadings.row(c).iter())
                    .map(|((x, m), l)| (x - m) * l)
                    .sum()
            })
            .collect())
    }

    /// The `n` concepts with the largest absolute loading on `component`.
    pub fn top_loadings(&self, component: usize, n: usize) -> Result<Vec<(String, f64)>> {
        if component >= self.k() {
            return Err(Error::out_of_range(
                "component",
                format!("{component} >= {}", self.k()),
            ));
        }
        let row = self.loadings.row(component);
        let mut ranked: Vec<(&str, f64)> = self
            .concepts
            .iter()
            .zip(row.iter())
            .map(|((name, _), &c)| (name.as_str(), c))
            .collect();
        ranked.sort_by(|(na, a), (nb, b)| b.abs().total_cmp(&a.abs()).then_with(|| na.cmp(nb)));
        Ok(ranked
            .into_iter()
            .take(n)
            .map(|(name, c)| (name.to_string(), c))
            .collect())
    }

    pub fn cumulative_ratio(&self) -> f64 {
        self.explained_variance_ratio.iter().sum()
    }

    /// `model,pc1,...,pck`
    pub fn scores_csv(&self) -> Vec<u8> {
        let header: Vec<String> = std::iter::once("model".to_string())
            .chain((1..=self.k()).map(|c| format!("pc{c}")))
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = self.model_names.iter().enumerate().map(|(i, m)| {
            std::iter::once(m.clone())
                .chain(self.scores.row(i).iter().map(|v| fmt_real(*v)))
                .collect::<Vec<_>>()
        });
        csv_bytes(&header, rows)
    }

    /// `component,concept,category,coefficient`, components numbered from 1.
    pub fn loadings_csv(&self) -> Vec<u8> {
        let mut rows = Vec::with_capacity(self.k() * self.concepts.len());
        for c in 0..self.k() {
            for (j, (name, cat)) in self.concepts.iter().enumerate() {
                rows.push(vec![
                    (c + 1).to_string(),
                    name.clone(),
                    cat.to_string(),
                    fmt_real(self.loadings[(c, j)]),
                ]);
            }
        }
        csv_bytes(&["component", "concept", "category", "coefficient"], rows)
    }

    /// `component,ratio,cumulative`
    pub fn variance_csv(&self) -> Vec<u8> {
        let mut cumulative = 0.0;
        let rows: Vec<Vec<String>> = self
            .explained_variance_ratio
            .iter()
            .enumerate()
            .map(|(c, r)| {
                cumulative += r;
                vec![(c + 1).to_string(), fmt_real(*r), fmt_real(cumulative)]
            })
            .collect();
        csv_bytes(&["component", "ratio", "cumulative"], rows)
    }
}
