//! KMeans (greedy k-means++ seeding, Lloyd iterations, single-point transfer refinement,
//! best of several restarts), elbow
//! selection of the cluster count, and region labels for a three-cluster layout.

use std::fmt;
use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::LceEmbedding;
use crate::error::{Error, Result};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_K_RANGE: RangeInclusive<usize> = 1..=8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            restarts: 10,
            max_iter: 300,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    /// k × d
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration, then each refinement pass, of the winning restart.
    pub inertia_trace: Vec<f64>,
    pub restart: usize,
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    points
        .row(i)
        .iter()
        .zip(centroids.row(c).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn nearest(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, sq_dist(points, i, centroids, 0));
    for c in 1..centroids.nrows() {
        let d = sq_dist(points, i, centroids, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Sum of squared distances of each point to the centroid of its cluster.
pub fn inertia(points: &DMatrix<f64>, assignments: &[usize], centroids: &DMatrix<f64>) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(points, i, centroids, c))
        .sum()
}

fn sq_dist_rows(points: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    points
        .row(i)
        .iter()
        .zip(points.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Index drawn with probability proportional to `weights`; `None` when all are zero.
fn weighted_pick(weights: &[f64], rng: &mut ChaCha8Rng) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if *w > 0.0 && acc > target {
            return Some(i);
        }
    }
    // rounding can leave `target` just past the final partial sum
    weights.iter().rposition(|w| *w > 0.0)
}

/// Greedy k-means++: each new centre is the best of `2 + ln k` D²-weighted candidates,
/// judged by the potential it leaves behind.
fn kmeans_plus_plus(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (n, d) = points.shape();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.gen_range(0..n));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist_rows(points, i, chosen[0])).collect();
    while chosen.len() < k {
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for _ in 0..trials {
            let Some(cand) = weighted_pick(&dist, rng) else {
                break;
            };
            let next: Vec<f64> = (0..n)
                .map(|i| dist[i].min(sq_dist_rows(points, i, cand)))
                .collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.1) {
                best = Some((cand, potential, next));
            }
        }
        match best {
            Some((cand, _, next)) => {
                chosen.push(cand);
                dist = next;
            }
            None => {
                // every point coincides with a chosen centre; take an unused index
                let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
                chosen.push(free[rng.gen_range(0..free.len())]);
            }
        }
    }
    DMatrix::from_fn(k, d, |c, j| points[(chosen[c], j)])
}

fn update_centroids(points: &DMatrix<f64>, assignments: &[usize], k: usize) -> DMatrix<f64> {
    let d = points.ncols();
    let mut sums = DMatrix::<f64>::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        for j in 0..d {
            sums[(c, j)] += points[(i, j)];
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        sums.row_mut(c).iter_mut().for_each(|v| *v /= n as f64);
    }
    sums
}

/// Gives every empty cluster the point farthest from its current centroid, taken
/// from a cluster that keeps at least one other member.
fn repair_empty(points: &DMatrix<f64>, assignments: &mut [usize], centroids: &mut DMatrix<f64>) {
    let k = centroids.nrows();
    loop {
        let mut counts = vec![0usize; k];
        for &c in assignments.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far: Option<(usize, f64)> = None;
        for (i, &c) in assignments.iter().enumerate() {
            if counts[c] < 2 {
                continue;
            }
            let d = sq_dist(points, i, centroids, c);
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let (i, _) = far.expect("k <= n guarantees a cluster with two members");
        assignments[i] = empty;
        for j in 0..points.ncols() {
            centroids[(empty, j)] = points[(i, j)];
        }
    }
}

/// Single-point transfers that lower inertia once centroids are updated: moving point i
/// from a to b changes inertia by n_b/(n_b+1)·|x−c_b|² − n_a/(n_a−1)·|x−c_a|². Escapes
/// Lloyd fixed points that are not local optima under single moves.
fn hartigan_refine(
    points: &DMatrix<f64>,
    assignments: &mut [usize],
    centroids: &mut DMatrix<f64>,
    trace: &mut Vec<f64>,
    max_passes: usize,
) {
    let k = centroids.nrows();
    let mut counts = vec![0usize; k];
    for &c in assignments.iter() {
        counts[c] += 1;
    }
    for _ in 0..max_passes {
        let mut moved = false;
        for i in 0..points.nrows() {
            let a = assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let na = counts[a] as f64;
            let remove = na / (na - 1.0) * sq_dist(points, i, centroids, a);
            let mut best: Option<(usize, f64)> = None;
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let add = nb / (nb + 1.0) * sq_dist(points, i, centroids, b);
                if best.is_none_or(|(_, v)| add < v) {
                    best = Some((b, add));
                }
            }
            let Some((b, add)) = best else { continue };
            if add < remove * (1.0 - 1e-12) {
                assignments[i] = b;
                counts[a] -= 1;
                counts[b] += 1;
                *centroids = update_centroids(points, assignments, k);
                moved = true;
            }
        }
        if !moved {
            return;
        }
        trace.push(inertia(points, assignments, centroids));
    }
}

fn lloyd(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng, cfg: &KMeansConfig) -> KMeansFit {
    let n = points.nrows();
    let mut centroids = kmeans_plus_plus(points, k, rng);
    let mut assignments = vec![usize::MAX; n];
    let mut trace = Vec::new();
    for _ in 0..cfg.max_iter {
        let mut next: Vec<usize> = (0..n).map(|i| nearest(points, i, &centroids).0).collect();
        repair_empty(points, &mut next, &mut centroids);
        let unchanged = next == assignments;
        assignments = next;
        let updated = update_centroids(points, &assignments, k);
        let shift = (0..k)
            .map(|c| sq_dist(&updated, c, &centroids, c).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        trace.push(inertia(points, &assignments, &centroids));
        if unchanged || shift < cfg.tol {
            break;
        }
    }
    hartigan_refine(points, &mut assignments, &mut centroids, &mut trace, cfg.max_iter);
    KMeansFit {
        inertia: *trace.last().expect("at least one iteration"),
        assignments,
        centroids,
        inertia_trace: trace,
        restart: 0,
    }
}

fn check_points(points: &DMatrix<f64>, k: usize) -> Result<()> {
    let (n, d) = points.shape();
    if n == 0 || d == 0 {
        return Err(Error::Empty("kmeans needs at least one point and one feature".into()));
    }
    if k == 0 || k > n {
        return Err(Error::out_of_range(
            "cluster count",
            format!("k={k} not in [1, {n}]"),
        ));
    }
    Ok(())
}

/// Best of `cfg.restarts` seeded runs, compared by (inertia, restart index).
/// Restart `r` draws from ChaCha stream `r` of `seed`, so each restart is independent.
pub fn kmeans_fit_with(points: &DMatrix<f64>, k: usize, seed: u64, cfg: &KMeansConfig) -> Result<KMeansFit> {
    check_points(points, k)?;
    let mut best: Option<KMeansFit> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let mut fit = lloyd(points, k, &mut rng, cfg);
        fit.restart = restart;
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub fn kmeans_fit(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeansFit> {
    kmeans_fit_with(points, k, seed, &KMeansConfig::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionLabel {
    A,
    B,
    C,
    Other,
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionLabel::A => "A",
            RegionLabel::B => "B",
            RegionLabel::C => "C",
            RegionLabel::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub k: usize,
    /// Row labels of the clustered points; empty when clustering anonymous points.
    pub model_names: Vec<String>,
    pub assignments: Vec<usize>,
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
    pub inertia_curve: Vec<(usize, f64)>,
    pub region_labels: Vec<RegionLabel>,
}

impl ClusteringResult {
    pub fn with_model_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.assignments.len() {
            return Err(Error::DimensionMismatch {
                expected: self.assignments.len(),
                found: names.len(),
            });
        }
        self.model_names = names;
        Ok(self)
    }

    pub fn cluster_of(&self, model: &str) -> Option<usize> {
        self.model_names
            .iter()
            .position(|m| m == model)
            .map(|i| self.assignments[i])
    }

    pub fn label_of_cluster(&self, cluster: usize) -> RegionLabel {
        self.region_labels
            .get(cluster)
            .copied()
            .unwrap_or(RegionLabel::Other)
    }

    /// `model,cluster,region_label`
    pub fn clusters_csv(&self) -> Vec<u8> {
        let rows = self.model_names.iter().zip(&self.assignments).map(|(m, &c)| {
            vec![m.clone(), c.to_string(), self.label_of_cluster(c).to_string()]
        });
        crate::table::csv_bytes(&["model", "cluster", "region_label"], rows)
    }

    /// `k,inertia`
    pub fn inertia_csv(&self) -> Vec<u8> {
        let rows = self
            .inertia_curve
            .iter()
            .map(|(k, i)| vec![k.to_string(), crate::table::fmt_real(*i)]);
        crate::table::csv_bytes(&["k", "inertia"], rows)
    }
}

/// Index into `curve` of the elbow: the point farthest from the chord joining the
/// first and last points, measured on axes rescaled to [0, 1]. Only interior points
/// compete when there are three or more; ties go to the smaller k.
pub fn elbow_index(curve: &[(usize, f64)]) -> usize {
    let m = curve.len();
    if m < 3 {
        return 0;
    }
    let (k0, k1) = (curve[0].0 as f64, curve[m - 1].0 as f64);
    let lo = curve.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = curve.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let xs: Vec<f64> = curve.iter().map(|p| (p.0 as f64 - k0) / (k1 - k0)).collect();
    let ys: Vec<f64> = curve
        .iter()
        .map(|p| if hi > lo { (p.1 - lo) / (hi - lo) } else { 0.0 })
        .collect();
    let (dx, dy) = (xs[m - 1] - xs[0], ys[m - 1] - ys[0]);
    let chord = (dx * dx + dy * dy).sqrt();
    let distance = |i: usize| ((xs[i] - xs[0]) * dy - (ys[i] - ys[0]) * dx).abs() / chord;
    let mut best = 1;
    let mut best_d = distance(1);
    for i in 2..m - 1 {
        let d = distance(i);
        if d > best_d + 1e-12 {
            best = i;
            best_d = d;
        }
    }
    best
}

pub fn elbow_select(points: &DMatrix<f64>, k_range: RangeInclusive<usize>, seed: u64) -> Result<ClusteringResult> {
    elbow_select_with(points, k_range, seed, &KMeansConfig::default())
}

pub fn elbow_select_with(
    points: &DMatrix<f64>,
    k_range: RangeInclusive<usize>,
    seed: u64,
    cfg: &KMeansConfig,
) -> Result<ClusteringResult> {
    if k_range.is_empty() {
        return Err(Error::Empty("k range is empty".into()));
    }
    let n = points.nrows();
    if *k_range.start() == 0 || *k_range.end() > n {
        return Err(Error::out_of_range(
            "k range",
            format!("{}..={} not within [1, {n}]", k_range.start(), k_range.end()),
        ));
    }
    let fits = k_range
        .map(|k| kmeans_fit_with(points, k, seed, cfg).map(|f| (k, f)))
        .collect::<Result<Vec<_>>>()?;
    let curve: Vec<(usize, f64)> = fits.iter().map(|(k, f)| (*k, f.inertia)).collect();
    let (k, chosen) = fits
        .into_iter()
        .nth(elbow_index(&curve))
        .expect("index within curve");
    Ok(ClusteringResult {
        k,
        model_names: Vec::new(),
        assignments: chosen.assignments,
        centroids: chosen.centroids,
        inertia: chosen.inertia,
        inertia_curve: curve,
        region_labels: vec![RegionLabel::Other; k],
    })
}

/// Labels the three clusters by where their members sit on the first two components:
/// A has the lowest pc1+pc2; of the other two, B is higher on pc1 and lower on pc2,
/// C the reverse. Any other configuration, or k != 3, labels everything `Other`.
pub fn label_regions(clustering: &ClusteringResult, embedding: &LceEmbedding) -> Result<Vec<RegionLabel>> {
    let mut names = clustering.model_names.clone();
    let mut emb_names = embedding.model_names.clone();
    names.sort();
    emb_names.sort();
    if names != emb_names {
        return Err(Error::Mismatch(
            "clustering and embedding cover different models".into(),
        ));
    }
    let other = vec![RegionLabel::Other; clustering.k];
    if clustering.k != 3 || embedding.k() < 2 {
        return Ok(other);
    }
    let mut sums = [[0.0f64; 2]; 3];
    let mut counts = [0usize; 3];
    for (name, &c) in clustering.model_names.iter().zip(&clustering.assignments) {
        let i = embedding.model_index(name).expect("checked above");
        sums[c][0] += embedding.scores[(i, 0)];
        sums[c][1] += embedding.scores[(i, 1)];
        counts[c] += 1;
    }
    let centres: Vec<[f64; 2]> = (0..3)
        .map(|c| [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64])
        .collect();
    Ok(regions_from_centres(&centres).unwrap_or(other))
}

pub(crate) fn regions_from_centres(centres: &[[f64; 2]]) -> Option<Vec<RegionLabel>> {
    let total = |c: &[f64; 2]| c[0] + c[1];
    let a = (0..3).min_by(|&x, &y| total(&centres[x]).total_cmp(&total(&centres[y])))?;
    if (0..3).any(|x| x != a && total(&centres[x]) == total(&centres[a])) {
        return None;
    }
    let rest: Vec<usize> = (0..3).filter(|&x| x != a).collect();
    let (p, q) = (centres[rest[0]], centres[rest[1]]);
    let (b, c) = if p[0] > q[0] && p[1] < q[1] {
        (rest[0], rest[1])
    } else if q[0] > p[0] && q[1] < p[1] {
        (rest[1], rest[0])
    } else {
        return None;
    };
    let mut labels = vec![RegionLabel::Other; 3];
    labels[a] = RegionLabel::A;
    labels[b] = RegionLabel::B;
    labels[c] = RegionLabel::C;
    Some(labels)
}
