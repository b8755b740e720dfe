//! End-to-end runs: ingest → matrix → embedding → clustering → correlations → ensembles.
//!
//! Every artifact is computed in memory first and written only once all stages have
//! succeeded, so a failing run leaves no partial artifact set behind.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::{elbow_select, label_regions, DEFAULT_K_RANGE, DEFAULT_SEED};
use crate::correlation::{
    axis_category_correlations, axis_performance_correlations, knn_field, CorrelationMethod,
    PerformanceTable, DEFAULT_KNN_K, DEFAULT_RESOLUTION,
};
use crate::embedding::{fit_pca, max_components, DEFAULT_COMPONENTS};
use crate::ensemble::{gain_matrix, PredictionSet};
use crate::error::{Error, Result};
use crate::matrix::{build_matrix, build_superset};
use crate::profile::{
    abstract_profile, filter_by_iou, parse_profile_from, AbstractionMode, ConceptCategory,
    DissectProfile, DEFAULT_IOU_THRESHOLD,
};
use crate::svg::{emit_heatmap, emit_scatter};
use crate::table::{csv_bytes, fmt_real};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const REPORT_NAME: &str = "report.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Profile files, or directories whose `*.json` files are all profiles.
    pub profile_paths: Vec<PathBuf>,
    pub performance_path: Option<PathBuf>,
    /// Holds `<dataset>/<model>.csv` prediction files.
    pub predictions_dir: Option<PathBuf>,
    pub iou_threshold: f64,
    pub pca_components: usize,
    /// Inclusive `[first, last]` cluster counts scanned by the elbow search.
    pub k_range: (usize, usize),
    pub seed: u64,
    pub knn_k: usize,
    pub grid_resolution: usize,
    pub correlation: CorrelationMethod,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            profile_paths: Vec::new(),
            performance_path: None,
            predictions_dir: None,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            pca_components: DEFAULT_COMPONENTS,
            k_range: (*DEFAULT_K_RANGE.start(), *DEFAULT_K_RANGE.end()),
            seed: DEFAULT_SEED,
            knn_k: DEFAULT_KNN_K,
            grid_resolution: DEFAULT_RESOLUTION,
            correlation: CorrelationMethod::Pearson,
            output_dir: PathBuf::from("lce-out"),
        }
    }
}

impl PipelineConfig {
    /// Reads a JSON config; relative paths in it are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::ReadInput {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: PipelineConfig =
            serde_json::from_slice(&bytes).map_err(|e| Error::malformed("config", e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        config.profile_paths.iter_mut().for_each(rebase);
        config.performance_path.iter_mut().for_each(rebase);
        config.predictions_dir.iter_mut().for_each(rebase);
        rebase(&mut config.output_dir);
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(Error::out_of_range(
                "iou threshold",
                format!("{} not in [0, 1]", self.iou_threshold),
            ));
        }
        if self.pca_components == 0 {
            return Err(Error::out_of_range("component count", "must be positive"));
        }
        if self.k_range.0 == 0 || self.k_range.0 > self.k_range.1 {
            return Err(Error::out_of_range(
                "k range",
                format!("{}..{} is empty or starts at 0", self.k_range.0, self.k_range.1),
            ));
        }
        if self.knn_k == 0 {
            return Err(Error::out_of_range("knn k", "must be positive"));
        }
        if self.grid_resolution < 2 {
            return Err(Error::out_of_range("resolution", "must be at least 2"));
        }
        Ok(())
    }
}

/// Which artifact groups a run emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outputs {
    pub ingest: bool,
    pub matrix: bool,
    pub embedding: bool,
    pub clusters: bool,
    pub link: bool,
    pub ensemble: bool,
    pub plots: bool,
}

impl Outputs {
    pub const ALL: Outputs = Outputs {
        ingest: true,
        matrix: true,
        embedding: true,
        clusters: true,
        link: true,
        ensemble: true,
        plots: true,
    };
    pub const NONE: Outputs = Outputs {
        ingest: false,
        matrix: false,
        embedding: false,
        clusters: false,
        link: false,
        ensemble: false,
        plots: false,
    };

    fn needs_profiles(&self) -> bool {
        self.ingest || self.matrix || self.embedding || self.clusters || self.link || self.plots
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub inputs: Vec<FileDigest>,
    /// Every file written to the output directory, including this manifest.
    pub artifacts: Vec<FileDigest>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Inputs {
    profiles: Vec<PathBuf>,
    performance: Option<PathBuf>,
    /// dataset → (model, path), both sorted
    predictions: BTreeMap<String, Vec<(String, PathBuf)>>,
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|source| Error::ReadInput {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = entries
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|source| Error::ReadInput {
            path: dir.to_path_buf(),
            source,
        })?;
    paths.sort();
    Ok(paths)
}

fn require_file(path: &Path) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path.to_path_buf())
    } else {
        Err(Error::ReadInput {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        })
    }
}

fn has_ext(p: &Path, ext: &str) -> bool {
    p.is_file() && p.extension().is_some_and(|e| e == ext)
}

fn resolve(config: &PipelineConfig, outputs: &Outputs) -> Result<Inputs> {
    let mut profiles = Vec::new();
    if outputs.needs_profiles() {
        for p in &config.profile_paths {
            if p.is_dir() {
                profiles.extend(read_dir_sorted(p)?.into_iter().filter(|f| has_ext(f, "json")));
            } else {
                profiles.push(require_file(p)?);
            }
        }
        if profiles.len() < 2 {
            return Err(Error::Invalid(format!(
                "at least 2 profile files are required, found {}",
                profiles.len()
            )));
        }
    }
    let performance = match &config.performance_path {
        Some(p) if outputs.link || outputs.plots => Some(require_file(p)?),
        _ => None,
    };
    let mut predictions = BTreeMap::new();
    if let Some(dir) = config.predictions_dir.as_ref().filter(|_| outputs.ensemble || outputs.plots) {
        if !dir.is_dir() {
            return Err(Error::ReadInput {
                path: dir.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such directory"),
            });
        }
        for sub in read_dir_sorted(dir)?.into_iter().filter(|p| p.is_dir()) {
            let dataset = sub.file_name().unwrap().to_string_lossy().into_owned();
            let files: Vec<(String, PathBuf)> = read_dir_sorted(&sub)?
                .into_iter()
                .filter(|f| has_ext(f, "csv"))
                .map(|f| (f.file_stem().unwrap().to_string_lossy().into_owned(), f))
                .collect();
            if !files.is_empty() {
                predictions.insert(dataset, files);
            }
        }
        if predictions.is_empty() {
            return Err(Error::Invalid(format!(
                "no `<dataset>/<model>.csv` prediction files under {}",
                dir.display()
            )));
        }
    }
    Ok(Inputs {
        profiles,
        performance,
        predictions,
    })
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::ReadInput {
        path: path.to_path_buf(),
        source,
    })
}

/// Artifacts computed by a run, before anything touches the output directory.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub artifacts: BTreeMap<String, Vec<u8>>,
    pub inputs: Vec<FileDigest>,
    pub notes: Vec<String>,
}

fn abstract_csv(profiles: &[DissectProfile]) -> Vec<u8> {
    let rows = profiles.iter().flat_map(|p| {
        [AbstractionMode::All, AbstractionMode::Unique].map(|mode| {
            let a = abstract_profile(p, mode);
            let mut row = vec![p.model_name.clone(), mode.as_str().to_string()];
            row.extend(ConceptCategory::ALL.iter().map(|&c| a.get(c).to_string()));
            row.push(p.layer_width.to_string());
            row
        })
    });
    csv_bytes(
        &["model", "mode", "object", "part", "material", "color", "layer_width"],
        rows,
    )
}

/// Runs the selected stages and returns the artifacts without writing them.
pub fn compute(config: &PipelineConfig, outputs: &Outputs) -> Result<RunOutput> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let inputs = resolve(config, outputs).map_err(|e| e.in_stage("resolve"))?;
    let mut out = RunOutput::default();
    let digest = |path: &Path, bytes: &[u8], out: &mut RunOutput| {
        out.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: Some(sha256_hex(bytes)),
        });
    };

    let mut embedding = None;
    let mut clustering = None;
    if outputs.needs_profiles() {
        let profiles = (|| {
            let mut profiles = Vec::with_capacity(inputs.profiles.len());
            let mut seen = std::collections::BTreeSet::new();
            for path in &inputs.profiles {
                let bytes = read_input(path)?;
                digest(path, &bytes, &mut out);
                let profile = parse_profile_from(&bytes, path)?;
                if !seen.insert(profile.model_name.clone()) {
                    return Err(Error::Invalid(format!(
                        "model `{}` has more than one profile",
                        profile.model_name
                    )));
                }
                profiles.push(filter_by_iou(&profile, config.iou_threshold)?);
            }
            Ok(profiles)
        })()
        .map_err(|e| e.in_stage("ingest"))?;
        if outputs.ingest {
            out.artifacts
                .insert("abstract_profiles.csv".into(), abstract_csv(&profiles));
        }

        let matrix = build_superset(&profiles)
            .and_then(|s| build_matrix(&profiles, &s))
            .map_err(|e| e.in_stage("matrix"))?;
        if outputs.matrix {
            out.artifacts
                .insert("matrix_normalized.csv".into(), matrix.normalized_csv());
            out.artifacts.insert("matrix_raw.csv".into(), matrix.raw_csv());
        }
        out.notes.push(format!(
            "{} models, {} concepts (object {}, part {}, material {}, color {})",
            matrix.n_models(),
            matrix.n_concepts(),
            matrix.superset.category_total(ConceptCategory::Object),
            matrix.superset.category_total(ConceptCategory::Part),
            matrix.superset.category_total(ConceptCategory::Material),
            matrix.superset.category_total(ConceptCategory::Color),
        ));

        let max_k = max_components(matrix.n_models(), matrix.n_concepts());
        let k = config.pca_components.min(max_k);
        if k < config.pca_components {
            out.notes.push(format!(
                "pca: {} components requested, {k} available",
                config.pca_components
            ));
        }
        let emb = fit_pca(&matrix, k).map_err(|e| e.in_stage("embed"))?;
        out.notes.push(format!(
            "pca: {k} components explain {:.1}% of variance",
            100.0 * emb.cumulative_ratio()
        ));
        if outputs.embedding {
            out.artifacts.insert("embedding.csv".into(), emb.scores_csv());
            out.artifacts.insert("loadings.csv".into(), emb.loadings_csv());
            out.artifacts.insert("variance.csv".into(), emb.variance_csv());
        }

        if outputs.clusters || outputs.plots {
            let n = matrix.n_models();
            let (lo, hi) = config.k_range;
            let hi_eff = hi.min(n);
            if lo > hi_eff {
                return Err(Error::out_of_range(
                    "k range",
                    format!("{lo}..{hi} has no value within [1, {n}]"),
                )
                .in_stage("cluster"));
            }
            if hi_eff < hi {
                out.notes.push(format!("cluster: k range {lo}..{hi} clipped to {lo}..{hi_eff}"));
            }
            let mut result = elbow_select(&matrix.normalized, lo..=hi_eff, config.seed)
                .and_then(|r| r.with_model_names(matrix.model_names.clone()))
                .map_err(|e| e.in_stage("cluster"))?;
            result.region_labels = label_regions(&result, &emb).map_err(|e| e.in_stage("cluster"))?;
            out.notes.push(format!("cluster: elbow selects k={}", result.k));
            for c in 0..result.k {
                let members: Vec<&str> = result
                    .model_names
                    .iter()
                    .zip(&result.assignments)
                    .filter(|(_, &a)| a == c)
                    .map(|(m, _)| m.as_str())
                    .collect();
                out.notes.push(format!(
                    "cluster {c} ({}): {}",
                    result.label_of_cluster(c),
                    members.join(", ")
                ));
            }
            if outputs.clusters {
                out.artifacts.insert("clusters.csv".into(), result.clusters_csv());
                out.artifacts.insert("inertia.csv".into(), result.inertia_csv());
            }
            clustering = Some(result);
        }

        if outputs.link {
            let cat = axis_category_correlations(&emb, &profiles, config.correlation)
                .map_err(|e| e.in_stage("link"))?;
            out.notes.extend(cat.warnings.iter().map(|w| format!("link: {w}")));
            out.artifacts.insert("axis_category_corr.csv".into(), cat.to_csv());
        }
        embedding = Some((emb, profiles));
    }

    if let (Some(path), Some((emb, _))) = (&inputs.performance, &embedding) {
        let perf = (|| {
            let bytes = read_input(path)?;
            digest(path, &bytes, &mut out);
            PerformanceTable::parse_csv(&bytes)
        })()
        .map_err(|e| e.in_stage("link"))?;
        if outputs.link {
            let report = axis_performance_correlations(emb, &perf, config.correlation);
            out.notes.extend(report.warnings.iter().map(|w| format!("link: {w}")));
            out.artifacts.insert("axis_perf_corr.csv".into(), report.to_csv());
            if emb.k() >= 2 {
                for group in perf.groups() {
                    let available = emb
                        .model_names
                        .iter()
                        .filter(|m| perf.get(m, group).is_some())
                        .count();
                    if available < config.knn_k {
                        out.notes.push(format!(
                            "link: no field for {}: {available} models, knn k={}",
                            group.label(),
                            config.knn_k
                        ));
                        continue;
                    }
                    let field = knn_field(emb, &perf, group, (0, 1), config.knn_k, config.grid_resolution)
                        .map_err(|e| e.in_stage("link"))?;
                    out.artifacts
                        .insert(format!("field_{}.csv", group.file_stem()), field.to_csv());
                }
            } else {
                out.notes.push("link: fields need two components, skipped".into());
            }
        }
    }

    if !inputs.predictions.is_empty() {
        let mut caveat = false;
        for (dataset, files) in &inputs.predictions {
            let matrix = (|| {
                let mut sets = Vec::with_capacity(files.len());
                for (model, path) in files {
                    let bytes = read_input(path)?;
                    digest(path, &bytes, &mut out);
                    sets.push(PredictionSet::parse_csv(model, dataset, &bytes)?);
                }
                gain_matrix(&sets)
            })()
            .map_err(|e| e.in_stage("ensemble"))?;
            if outputs.ensemble {
                out.artifacts
                    .insert(format!("ensemble_gain_{dataset}.csv"), matrix.to_csv());
                caveat = true;
            }
            if outputs.plots {
                out.artifacts
                    .insert(format!("heatmap_{dataset}.svg"), emit_heatmap(&matrix).into_bytes());
            }
        }
        if caveat {
            out.notes.push(
                "ensemble: vote weights use accuracies measured on the same predictions they combine; gains are optimistic"
                    .into(),
            );
        }
    }

    if outputs.plots {
        if let (Some((emb, _)), Some(clusters)) = (&embedding, &clustering) {
            if emb.k() >= 2 {
                let svg = emit_scatter(emb, clusters, (0, 1)).map_err(|e| e.in_stage("report"))?;
                out.artifacts.insert("scatter_pc1_pc2.svg".into(), svg.into_bytes());
            } else {
                out.notes.push("report: scatter needs two components, skipped".into());
            }
        }
    }

    let mut report = String::new();
    for note in &out.notes {
        let _ = writeln!(report, "{note}");
    }
    if let Some((emb, _)) = &embedding {
        for (c, r) in emb.explained_variance_ratio.iter().enumerate() {
            let _ = writeln!(report, "pc{}: ratio {}", c + 1, fmt_real(*r));
        }
    }
    out.artifacts.insert(REPORT_NAME.into(), report.into_bytes());
    Ok(out)
}

fn remove_previous(dir: &Path) {
    let Ok(bytes) = std::fs::read(dir.join(MANIFEST_NAME)) else {
        return;
    };
    if let Ok(previous) = serde_json::from_slice::<RunManifest>(&bytes) {
        for a in previous.artifacts {
            let p = dir.join(&a.path);
            if p.parent() == Some(dir) {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

/// Computes the selected outputs and writes them plus a manifest into `config.output_dir`.
pub fn run(config: &PipelineConfig, outputs: &Outputs) -> Result<RunManifest> {
    let result = compute(config, outputs)?;
    let dir = &config.output_dir;
    let created = !dir.exists();
    std::fs::create_dir_all(dir).map_err(|source| Error::WriteOutput {
        path: dir.clone(),
        source,
    })?;
    remove_previous(dir);

    let mut artifacts: Vec<FileDigest> = result
        .artifacts
        .iter()
        .map(|(name, bytes)| FileDigest {
            path: name.clone(),
            sha256: Some(sha256_hex(bytes)),
        })
        .collect();
    artifacts.push(FileDigest {
        path: MANIFEST_NAME.into(),
        sha256: None,
    });
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        inputs: result.inputs,
        artifacts,
    };
    let manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");

    let mut written = Vec::new();
    let files = result
        .artifacts
        .iter()
        .map(|(n, b)| (n.as_str(), b.as_slice()))
        .chain(std::iter::once((MANIFEST_NAME, manifest_bytes.as_slice())));
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Err(source) = std::fs::write(&path, bytes) {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            if created {
                let _ = std::fs::remove_dir_all(dir);
            }
            return Err(Error::WriteOutput { path, source });
        }
        written.push(path);
    }
    Ok(manifest)
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    run(config, &Outputs::ALL)
}
