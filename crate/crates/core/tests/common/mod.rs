//! Reference computations for the integration tests. Nothing here calls into the
//! library's numerical code: matrices are plain nested vectors.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen::<f64>()).collect())
        .collect()
}

/// Cyclic Jacobi rotations on a symmetric matrix. Returns eigenvalues and the
/// eigenvectors as columns of the second value.
pub fn jacobi_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let mut a = a.clone();
    let mut v: Mat = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

pub struct OraclePca {
    pub means: Vec<f64>,
    /// k rows of length d
    pub components: Mat,
    pub eigenvalues: Vec<f64>,
    /// n rows of length k
    pub scores: Mat,
    pub total_variance: f64,
}

/// PCA by Jacobi eigendecomposition of the sample covariance (divisor n-1).
pub fn oracle_pca(x: &Mat, k: usize) -> OraclePca {
    let n = x.len();
    let d = x[0].len();
    let means: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let xc: Mat = x
        .iter()
        .map(|r| r.iter().zip(&means).map(|(a, m)| a - m).collect())
        .collect();
    let cov: Mat = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| xc.iter().map(|r| r[i] * r[j]).sum::<f64>() / (n as f64 - 1.0))
                .collect()
        })
        .collect();
    let total_variance = (0..d).map(|i| cov[i][i]).sum();
    let (vals, vecs) = jacobi_eigen(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    let components: Mat = order[..k]
        .iter()
        .map(|&c| (0..d).map(|j| vecs[j][c]).collect())
        .collect();
    let scores = project_all(&xc, &components);
    OraclePca {
        means,
        eigenvalues: order[..k].iter().map(|&c| vals[c]).collect(),
        components,
        scores,
        total_variance,
    }
}

pub fn project_all(xc: &Mat, components: &Mat) -> Mat {
    xc.iter()
        .map(|r| {
            components
                .iter()
                .map(|c| r.iter().zip(c).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect()
}

/// Minimum inertia over every partition of the points into exactly `k` nonempty groups.
pub fn exhaustive_min_inertia(points: &Mat, k: usize) -> f64 {
    let n = points.len();
    let d = points[0].len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        if counts.iter().all(|&c| c > 0) {
            let mut centroids = vec![vec![0.0; d]; k];
            for (p, &l) in points.iter().zip(&labels) {
                for j in 0..d {
                    centroids[l][j] += p[j];
                }
            }
            for (c, cnt) in centroids.iter_mut().zip(&counts) {
                c.iter_mut().for_each(|v| *v /= *cnt as f64);
            }
            let inertia: f64 = points
                .iter()
                .zip(&labels)
                .map(|(p, &l)| p.iter().zip(&centroids[l]).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .sum();
            best = best.min(inertia);
        }
        // odometer increment over k^n labelings
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

/// True when two labelings describe the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

/// `masses` well-separated point clouds in `dim` dimensions, `per_mass` points each.
/// Centres sit at least 10 apart, points within 0.5 of their centre.
pub fn planted_masses(rng: &mut ChaCha8Rng, masses: usize, per_mass: usize, dim: usize) -> (Mat, Vec<usize>) {
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for m in 0..masses {
        let centre: Vec<f64> = (0..dim)
            .map(|j| if j == m % dim { 20.0 * (1 + m / dim) as f64 } else { 0.0 })
            .collect();
        for _ in 0..per_mass {
            points.push(centre.iter().map(|c| c + rng.gen_range(-0.5..0.5)).collect());
            truth.push(m);
        }
    }
    (points, truth)
}

/// Accuracy with ties resolved to the lowest class index, by direct enumeration.
pub fn brute_accuracy(probs: &Mat, labels: &[usize]) -> f64 {
    let mut correct = 0;
    for (row, &label) in probs.iter().zip(labels) {
        let mut best = 0;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}

/// Gain of the weighted two-model vote over the better member, computed sample by sample.
pub fn brute_pair_gain(p1: &Mat, p2: &Mat, labels: &[usize]) -> f64 {
    let a1 = brute_accuracy(p1, labels);
    let a2 = brute_accuracy(p2, labels);
    let gap = if a1 > a2 { a1 - a2 } else { a2 - a1 };
    let gap = if gap > 0.5 { 0.5 } else { gap };
    let (w1, w2) = if a1 >= a2 { (0.5 + gap, 0.5 - gap) } else { (0.5 - gap, 0.5 + gap) };
    let mut mixed = Vec::new();
    for (r1, r2) in p1.iter().zip(p2) {
        let mut row = Vec::new();
        for c in 0..r1.len() {
            row.push(w1 * r1[c] + w2 * r2[c]);
        }
        mixed.push(row);
    }
    brute_accuracy(&mixed, labels) - if a1 > a2 { a1 } else { a2 }
}

pub fn to_dmatrix(x: &Mat) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(x.len(), x[0].len(), |i, j| x[i][j])
}

pub fn model_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("m{i:02}")).collect()
}

pub fn concept_names(d: usize) -> Vec<(String, lce::profile::ConceptCategory)> {
    use lce::profile::ConceptCategory;
    (0..d)
        .map(|j| (format!("c{j:02}"), ConceptCategory::ALL[j % 4]))
        .collect()
}

/// Largest entrywise gap between library and oracle PCA after flipping each oracle
/// component to agree in sign with the library's.
pub fn pca_oracle_gap(x: &Mat, k: usize) -> f64 {
    let emb = lce::embedding::fit_pca_data(model_names(x.len()), concept_names(x[0].len()), &to_dmatrix(x), k)
        .expect("fit");
    let oracle = oracle_pca(x, k);
    let mut worst: f64 = 0.0;
    for c in 0..k {
        let dot: f64 = (0..x[0].len()).map(|j| emb.loadings[(c, j)] * oracle.components[c][j]).sum();
        let s = if dot < 0.0 { -1.0 } else { 1.0 };
        for j in 0..x[0].len() {
            worst = worst.max((emb.loadings[(c, j)] - s * oracle.components[c][j]).abs());
        }
        for i in 0..x.len() {
            worst = worst.max((emb.scores[(i, c)] - s * oracle.scores[i][c]).abs());
        }
        worst = worst.max((emb.explained_variance[c] - oracle.eigenvalues[c]).abs());
    }
    worst
}

/// Embedding with the given score rows and identity-like loadings; for testing code that
/// only reads scores.
pub fn embedding_from_scores(scores: &Mat) -> lce::embedding::LceEmbedding {
    let (n, k) = (scores.len(), scores[0].len());
    lce::embedding::LceEmbedding {
        model_names: model_names(n),
        concepts: concept_names(k),
        scores: to_dmatrix(scores),
        loadings: nalgebra::DMatrix::identity(k, k),
        explained_variance_ratio: vec![1.0 / k as f64; k],
        explained_variance: vec![1.0; k],
        column_means: nalgebra::DVector::zeros(k),
    }
}

/// Profile whose units carry the listed concepts, all above any sensible threshold.
pub fn profile_with(name: &str, width: u32, concepts: &[(&str, lce::profile::ConceptCategory)]) -> lce::profile::DissectProfile {
    let units = concepts
        .iter()
        .enumerate()
        .map(|(u, (c, cat))| lce::profile::UnitAssignment {
            unit_id: u as u32,
            concept: Some(c.to_string()),
            category: Some(*cat),
            iou: 0.2,
        })
        .collect();
    lce::profile::DissectProfile::new(name, "layer4", width, units).unwrap()
}
