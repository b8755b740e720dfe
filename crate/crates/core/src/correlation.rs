//! Linking the embedding axes to abstracted profiles and to downstream performance,
//! plus KNN interpolation of performance over two embedding axes.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::embedding::LceEmbedding;
use crate::error::{Error, Result};
use crate::profile::{abstract_profile, AbstractionMode, ConceptCategory, DissectProfile};
use crate::table::{csv_bytes, fmt_real, parse_f64, read_csv};

pub const DEFAULT_KNN_K: usize = 5;
pub const DEFAULT_RESOLUTION: usize = 50;
/// Rows built from fewer shared models than this are not reported.
pub const MIN_POINTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMethod {
    #[default]
    Pearson,
    Spearman,
}

fn all_equal(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < MIN_POINTS {
        return Err(Error::out_of_range(
            "sample size",
            format!("correlation needs at least {MIN_POINTS} points, got {}", x.len()),
        ));
    }
    if all_equal(x) || all_equal(y) {
        return Err(Error::ZeroVariance("constant input to correlation".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance("constant input to correlation".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Average ranks, 1-based; tied values share the mean of their positions.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = rank;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    pearson(&ranks(x), &ranks(y))
}

pub fn correlate(method: CorrelationMethod, x: &[f64], y: &[f64]) -> Result<f64> {
    match method {
        CorrelationMethod::Pearson => pearson(x, y),
        CorrelationMethod::Spearman => spearman(x, y),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub feature: String,
    /// 0-based component index.
    pub component: usize,
    pub r: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
    /// Why rows were left out.
    pub warnings: Vec<String>,
}

impl CorrelationReport {
    pub fn get(&self, feature: &str, component: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.feature == feature && r.component == component)
            .map(|r| r.r)
    }

    /// `feature,component,r,n_points`, components numbered from 1.
    pub fn to_csv(&self) -> Vec<u8> {
        let rows = self.rows.iter().map(|r| {
            vec![
                r.feature.clone(),
                (r.component + 1).to_string(),
                fmt_real(r.r),
                r.n_points.to_string(),
            ]
        });
        csv_bytes(&["feature", "component", "r", "n_points"], rows)
    }
}

/// Correlates one named feature (one value per model, `None` when missing) with every
/// component, dropping missing models pairwise.
fn correlate_feature(
    report: &mut CorrelationReport,
    method: CorrelationMethod,
    embedding: &LceEmbedding,
    feature: &str,
    values: &[Option<f64>],
) {
    let present: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    if present.len() < MIN_POINTS {
        report.warnings.push(format!(
            "{feature}: only {} models shared with the embedding, need {MIN_POINTS}",
            present.len()
        ));
        return;
    }
    let y: Vec<f64> = present.iter().map(|p| p.1).collect();
    if all_equal(&y) {
        report
            .warnings
            .push(format!("{feature}: constant across models, omitted"));
        return;
    }
    for c in 0..embedding.k() {
        let x: Vec<f64> = present.iter().map(|&(i, _)| embedding.scores[(i, c)]).collect();
        match correlate(method, &y, &x) {
            Ok(r) => report.rows.push(CorrelationRow {
                feature: feature.to_string(),
                component: c,
                r,
                n_points: present.len(),
            }),
            Err(e) => report
                .warnings
                .push(format!("{feature} vs pc{}: {e}", c + 1)),
        }
    }
}

/// Feature name for a category count, e.g. `material_all`.
pub fn category_feature(category: ConceptCategory, mode: AbstractionMode) -> String {
    format!("{}_{}", category.as_str(), mode.as_str())
}

/// Correlation of each of the eight abstracted-profile features with each component.
pub fn axis_category_correlations(
    embedding: &LceEmbedding,
    profiles: &[DissectProfile],
    method: CorrelationMethod,
) -> Result<CorrelationReport> {
    let by_name: HashMap<&str, &DissectProfile> =
        profiles.iter().map(|p| (p.model_name.as_str(), p)).collect();
    if by_name.len() != embedding.n_models()
        || embedding
            .model_names
            .iter()
            .any(|m| !by_name.contains_key(m.as_str()))
    {
        return Err(Error::Mismatch(
            "profiles do not match the embedded models".into(),
        ));
    }
    let mut report = CorrelationReport::default();
    for category in ConceptCategory::ALL {
        for mode in [AbstractionMode::All, AbstractionMode::Unique] {
            let values: Vec<Option<f64>> = embedding
                .model_names
                .iter()
                .map(|m| Some(abstract_profile(by_name[m.as_str()], mode).get(category) as f64))
                .collect();
            correlate_feature(
                &mut report,
                method,
                embedding,
                &category_feature(category, mode),
                &values,
            );
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PerfGroup {
    pub task: String,
    pub dataset: String,
    pub metric: String,
}

impl PerfGroup {
    pub fn new(task: &str, dataset: &str, metric: &str) -> Self {
        PerfGroup {
            task: task.into(),
            dataset: dataset.into(),
            metric: metric.into(),
        }
    }

    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.task, self.dataset, self.metric)
    }

    /// Filesystem-safe `<task>_<dataset>_<metric>`.
    pub fn file_stem(&self) -> String {
        [&self.task, &self.dataset, &self.metric]
            .iter()
            .map(|s| {
                s.chars()
                    .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '-' })
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("_")
    }
}

/// (model, task, dataset, metric) → value in [0, 1].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerformanceTable {
    groups: BTreeMap<PerfGroup, BTreeMap<String, f64>>,
}

impl PerformanceTable {
    pub fn insert(&mut self, model: &str, group: PerfGroup, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::out_of_range(
                "performance value",
                format!(
                    "{model} {}: {value} not a fraction in [0, 1]",
                    group.label()
                ),
            ));
        }
        let entry = self.groups.entry(group.clone()).or_default();
        if entry.insert(model.to_string(), value).is_some() {
            return Err(Error::Invalid(format!(
                "duplicate performance record for {model} {}",
                group.label()
            )));
        }
        Ok(())
    }

    pub fn parse_csv(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "performance CSV";
        let (_, records) = read_csv(WHAT, bytes, &["model", "task", "dataset", "metric", "value"], false)?;
        let mut table = PerformanceTable::default();
        for rec in records {
            let value = parse_f64(WHAT, &rec[4])?;
            table.insert(&rec[0], PerfGroup::new(&rec[1], &rec[2], &rec[3]), value)?;
        }
        Ok(table)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::ReadInput {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_csv(&bytes)
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let rows = self.groups.iter().flat_map(|(g, models)| {
            models.iter().map(move |(m, v)| {
                vec![m.clone(), g.task.clone(), g.dataset.clone(), g.metric.clone(), format!("{v}")]
            })
        });
        csv_bytes(&["model", "task", "dataset", "metric", "value"], rows)
    }

    pub fn groups(&self) -> impl Iterator<Item = &PerfGroup> {
        self.groups.keys()
    }

    pub fn get(&self, model: &str, group: &PerfGroup) -> Option<f64> {
        self.groups.get(group)?.get(model).copied()
    }

    pub fn len(&self) -> usize {
        self.groups.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One row per (group, component) that passes the sample-size and variance gates.
pub fn axis_performance_correlations(
    embedding: &LceEmbedding,
    perf: &PerformanceTable,
    method: CorrelationMethod,
) -> CorrelationReport {
    let mut report = CorrelationReport::default();
    for group in perf.groups() {
        let values: Vec<Option<f64>> = embedding
            .model_names
            .iter()
            .map(|m| perf.get(m, group))
            .collect();
        correlate_feature(&mut report, method, embedding, &group.label(), &values);
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceField {
    pub group: PerfGroup,
    pub axes: (usize, usize),
    pub k_neighbors: usize,
    pub resolution: usize,
    /// Row-major, y outer, x inner.
    pub grid: Vec<GridPoint>,
}

impl PerformanceField {
    /// `x,y,value`
    pub fn to_csv(&self) -> Vec<u8> {
        let rows = self
            .grid
            .iter()
            .map(|p| vec![fmt_real(p.x), fmt_real(p.y), fmt_real(p.value)]);
        csv_bytes(&["x", "y", "value"], rows)
    }
}

/// Samples a uniform k-nearest-neighbour regressor on a square grid over two axes.
pub struct KnnRegressor<'a> {
    points: Vec<(f64, f64, f64, &'a str)>,
    k: usize,
    /// Squared distances are compared in multiples of this, so rounding noise cannot
    /// split a geometric tie.
    quantum: f64,
}

impl<'a> KnnRegressor<'a> {
    /// `points` are (x, y, value, name); equidistant neighbours are ordered by name.
    pub fn new(points: Vec<(f64, f64, f64, &'a str)>, k: usize) -> Result<Self> {
        if k == 0 || k > points.len() {
            return Err(Error::out_of_range(
                "knn k",
                format!("k={k} with {} models available", points.len()),
            ));
        }
        let extent = |sel: fn(&(f64, f64, f64, &str)) -> f64| {
            let lo = points.iter().map(sel).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        let span = extent(|p| p.0).max(extent(|p| p.1));
        let quantum = if span > 0.0 { span * span * 1e-10 } else { 1.0 };
        Ok(KnnRegressor { points, k, quantum })
    }

    pub fn predict(&self, x: f64, y: f64) -> f64 {
        let mut dist: Vec<(f64, &str, f64)> = self
            .points
            .iter()
            .map(|&(px, py, v, name)| {
                ((((px - x).powi(2) + (py - y).powi(2)) / self.quantum).round(), name, v)
            })
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        dist[..self.k].iter().map(|d| d.2).sum::<f64>() / self.k as f64
    }
}

pub fn knn_field(
    embedding: &LceEmbedding,
    perf: &PerformanceTable,
    group: &PerfGroup,
    axes: (usize, usize),
    k: usize,
    resolution: usize,
) -> Result<PerformanceField> {
    for a in [axes.0, axes.1] {
        if a >= embedding.k() {
            return Err(Error::out_of_range(
                "axis",
                format!("component {a} but the embedding has {}", embedding.k()),
            ));
        }
    }
    if resolution < 2 {
        return Err(Error::out_of_range("resolution", format!("{resolution} < 2")));
    }
    let points: Vec<(f64, f64, f64, &str)> = embedding
        .model_names
        .iter()
        .enumerate()
        .filter_map(|(i, m)| {
            perf.get(m, group).map(|v| {
                (
                    embedding.scores[(i, axes.0)],
                    embedding.scores[(i, axes.1)],
                    v,
                    m.as_str(),
                )
            })
        })
        .collect();
    let regressor = KnnRegressor::new(points, k)?;
    let span = |sel: fn(&(f64, f64, f64, &str)) -> f64| {
        let lo = regressor.points.iter().map(sel).fold(f64::INFINITY, f64::min);
        let hi = regressor.points.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
        (lo - pad, hi + pad)
    };
    let (x0, x1) = span(|p| p.0);
    let (y0, y1) = span(|p| p.1);
    let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (resolution - 1) as f64;
    let mut grid = Vec::with_capacity(resolution * resolution);
    for iy in 0..resolution {
        let y = step(y0, y1, iy);
        for ix in 0..resolution {
            let x = step(x0, x1, ix);
            grid.push(GridPoint {
                x,
                y,
                value: regressor.predict(x, y),
            });
        }
    }
    Ok(PerformanceField {
        group: group.clone(),
        axes,
        k_neighbors: k,
        resolution,
        grid,
    })
}
