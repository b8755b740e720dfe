//! Synthetic input bundles with planted structure.
//!
//! Each model gets a latent position (u, v) near the prototype of its cluster. Unit
//! counts grow linearly with u on part and material concepts and with v on object and
//! colour concepts, so the first principal component tracks u and the second tracks v.
//! Performance records are planted as increasing linear functions of u and v.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correlation::{PerfGroup, PerformanceTable};
use crate::ensemble::PredictionSet;
use crate::error::{Error, Result};
use crate::profile::{ConceptCategory, DissectProfile, UnitAssignment};

/// Latent prototypes; the first three form an isosceles triangle whose centred
/// coordinates are uncorrelated, keeping u and v on separate components.
const PROTOTYPES: [(f64, f64); 6] = [(0.0, 0.0), (2.0, 0.0), (1.0, 1.2), (3.0, 1.2), (-1.0, 1.2), (1.0, 2.4)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    pub n_models: usize,
    pub n_clusters: usize,
    /// Object, part, material, colour.
    pub concepts_per_category: [usize; 4],
    pub layer_width: u32,
    /// Half-width of the uniform latent jitter around each prototype.
    pub jitter: f64,
    pub datasets: Vec<String>,
    pub n_samples: usize,
    pub n_classes: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            n_models: 9,
            n_clusters: 3,
            concepts_per_category: [12, 10, 6, 4],
            layer_width: 2048,
            jitter: 0.05,
            datasets: vec!["synthetic".into()],
            n_samples: 60,
            n_classes: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedModel {
    pub name: String,
    pub cluster: usize,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureTruth {
    pub seed: u64,
    pub spec: FixtureSpec,
    pub models: Vec<PlantedModel>,
    /// Performance group increasing linearly in u (and so in pc1).
    pub pc1_group: String,
    /// Performance group increasing linearly in v (and so in pc2).
    pub pc2_group: String,
    /// Group with identical values for every model.
    pub constant_group: String,
}

impl FixtureTruth {
    pub fn partition(&self) -> Vec<usize> {
        self.models.iter().map(|m| m.cluster).collect()
    }
}

#[derive(Debug, Clone)]
pub struct FixtureBundle {
    pub profiles: Vec<DissectProfile>,
    pub performance: PerformanceTable,
    pub predictions: Vec<PredictionSet>,
    pub truth: FixtureTruth,
}

pub fn pc1_group() -> PerfGroup {
    PerfGroup::new("linear", "planted-pc1", "accuracy")
}

pub fn pc2_group() -> PerfGroup {
    PerfGroup::new("linear", "planted-pc2", "accuracy")
}

pub fn constant_group() -> PerfGroup {
    PerfGroup::new("detection", "constant", "ap")
}

fn check(spec: &FixtureSpec) -> Result<()> {
    let infeasible = |m: String| Err(Error::Invalid(format!("infeasible fixture: {m}")));
    if spec.n_models < 2 {
        return infeasible(format!("{} models, need at least 2", spec.n_models));
    }
    if spec.n_clusters == 0 || spec.n_clusters > spec.n_models {
        return infeasible(format!("{} clusters for {} models", spec.n_clusters, spec.n_models));
    }
    if spec.n_clusters > PROTOTYPES.len() {
        return infeasible(format!("at most {} clusters supported", PROTOTYPES.len()));
    }
    if spec.concepts_per_category.iter().sum::<usize>() == 0 {
        return infeasible("no concepts".into());
    }
    if spec.concepts_per_category[1] + spec.concepts_per_category[2] == 0
        || spec.concepts_per_category[0] + spec.concepts_per_category[3] == 0
    {
        return infeasible("both concept groups (object/colour and part/material) need concepts".into());
    }
    if !(0.0..0.5).contains(&spec.jitter) {
        return infeasible(format!("jitter {} not in [0, 0.5)", spec.jitter));
    }
    if spec.n_classes < 2 || spec.n_samples == 0 {
        return infeasible("predictions need at least 2 classes and 1 sample".into());
    }
    Ok(())
}

fn concept_names(spec: &FixtureSpec) -> Vec<(String, ConceptCategory)> {
    let prefix = ["obj", "part", "mat", "col"];
    ConceptCategory::ALL
        .iter()
        .flat_map(|&cat| {
            (0..spec.concepts_per_category[cat.index()])
                .map(move |i| (format!("{}-{i:02}", prefix[cat.index()]), cat))
        })
        .collect()
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

pub fn gen_fixture(spec: &FixtureSpec, seed: u64) -> Result<FixtureBundle> {
    check(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let concepts = concept_names(spec);

    // u drives part/material concepts, v drives object/colour concepts; the first
    // concept of each group carries the largest weight.
    let mut first_u = true;
    let mut first_v = true;
    let weights: Vec<(f64, f64)> = concepts
        .iter()
        .map(|(_, cat)| {
            let w = rng.gen_range(0.5..1.5);
            match cat {
                ConceptCategory::Part | ConceptCategory::Material => {
                    let w = if std::mem::take(&mut first_u) { 3.0 } else { w };
                    (w, 0.0)
                }
                _ => {
                    let w = if std::mem::take(&mut first_v) { 3.0 } else { w };
                    (0.0, w)
                }
            }
        })
        .collect();

    let models: Vec<PlantedModel> = (0..spec.n_models)
        .map(|i| {
            let cluster = i % spec.n_clusters;
            let (pu, pv) = PROTOTYPES[cluster];
            PlantedModel {
                name: format!("model-{i:02}"),
                cluster,
                u: pu + rng.gen_range(-1.0..=1.0) * spec.jitter,
                v: pv + rng.gen_range(-1.0..=1.0) * spec.jitter,
            }
        })
        .collect();

    let mut profiles = Vec::with_capacity(models.len());
    for m in &models {
        let mut units = Vec::new();
        let mut push = |concept: Option<&(String, ConceptCategory)>, iou: f64| {
            units.push(UnitAssignment {
                unit_id: units.len() as u32,
                concept: concept.map(|c| c.0.clone()),
                category: concept.map(|c| c.1),
                iou,
            });
        };
        for (concept, (wu, wv)) in concepts.iter().zip(&weights) {
            let count = (2.0 + 10.0 * (m.u * wu + m.v * wv)).round().max(0.0) as usize;
            for _ in 0..count {
                push(Some(concept), round4(rng.gen_range(0.05..0.35)));
            }
        }
        // units that only clear a lower threshold, plus units with nothing matched
        for _ in 0..20 {
            let c = &concepts[rng.gen_range(0..concepts.len())];
            push(Some(c), round4(rng.gen_range(0.005..0.035)));
        }
        for _ in 0..30 {
            push(None, 0.0);
        }
        if units.len() > spec.layer_width as usize {
            return Err(Error::Invalid(format!(
                "infeasible fixture: {} units exceed layer width {}",
                units.len(),
                spec.layer_width
            )));
        }
        profiles.push(DissectProfile::new(m.name.clone(), "layer4", spec.layer_width, units)?);
    }

    let span = |f: fn(&PlantedModel) -> f64| {
        let lo = models.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = models.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi - lo } else { 1.0 })
    };
    let (u0, du) = span(|m| m.u);
    let (v0, dv) = span(|m| m.v);
    let mut performance = PerformanceTable::default();
    for (i, m) in models.iter().enumerate() {
        performance.insert(&m.name, pc1_group(), round4(0.2 + 0.6 * (m.u - u0) / du))?;
        // the last model has no pc2 record, exercising pairwise dropping
        if i + 1 < models.len() {
            performance.insert(&m.name, pc2_group(), round4(0.3 + 0.5 * (m.v - v0) / dv))?;
        }
        performance.insert(&m.name, constant_group(), 0.5)?;
    }

    let mut predictions = Vec::new();
    for dataset in &spec.datasets {
        let labels: Vec<usize> = (0..spec.n_samples)
            .map(|_| rng.gen_range(0..spec.n_classes))
            .collect();
        let ids: Vec<String> = (0..spec.n_samples).map(|s| format!("{dataset}-{s:04}")).collect();
        for m in &models {
            let skill = 0.35 + 0.5 * (m.u - u0) / du;
            let k = spec.n_classes;
            let mut probs = DMatrix::<f64>::zeros(spec.n_samples, k);
            for (s, &label) in labels.iter().enumerate() {
                let chosen = if rng.gen::<f64>() < skill {
                    label
                } else {
                    (label + rng.gen_range(1..k)) % k
                };
                let peak = rng.gen_range(0.4..0.9);
                let mut row: Vec<f64> = (0..k)
                    .map(|c| {
                        if c == chosen {
                            peak
                        } else {
                            (1.0 - peak) / (k - 1) as f64 * rng.gen_range(0.5..1.0)
                        }
                    })
                    .collect();
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= total);
                probs.row_mut(s).copy_from_slice(&row);
            }
            predictions.push(PredictionSet::new(
                m.name.clone(),
                dataset.clone(),
                ids.clone(),
                labels.clone(),
                probs,
            )?);
        }
    }

    Ok(FixtureBundle {
        profiles,
        performance,
        predictions,
        truth: FixtureTruth {
            seed,
            spec: spec.clone(),
            models,
            pc1_group: pc1_group().label(),
            pc2_group: pc2_group().label(),
            constant_group: constant_group().label(),
        },
    })
}

impl FixtureBundle {
    /// Serialized files of the bundle, keyed by path relative to the bundle root.
    pub fn files(&self) -> BTreeMap<PathBuf, Vec<u8>> {
        let mut files = BTreeMap::new();
        for p in &self.profiles {
            files.insert(
                Path::new("profiles").join(format!("{}.json", p.model_name)),
                (p.to_json() + "\n").into_bytes(),
            );
        }
        files.insert(PathBuf::from("performance.csv"), self.performance.to_csv());
        for s in &self.predictions {
            files.insert(
                Path::new("predictions")
                    .join(&s.dataset)
                    .join(format!("{}.csv", s.model_name)),
                s.to_csv(),
            );
        }
        let truth = serde_json::to_string_pretty(&self.truth).expect("truth serializes");
        files.insert(PathBuf::from("truth.json"), (truth + "\n").into_bytes());
        let config = serde_json::json!({
            "profile_paths": ["profiles"],
            "performance_path": "performance.csv",
            "predictions_dir": "predictions",
            "output_dir": "out",
        });
        files.insert(
            PathBuf::from("config.json"),
            (serde_json::to_string_pretty(&config).expect("config serializes") + "\n").into_bytes(),
        );
        files
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (rel, bytes) in self.files() {
            let path = dir.join(&rel);
            let parent = path.parent().expect("joined path has a parent");
            std::fs::create_dir_all(parent).map_err(|source| Error::WriteOutput {
                path: parent.to_path_buf(),
                source,
            })?;
            std::fs::write(&path, bytes).map_err(|source| Error::WriteOutput {
                path: path.clone(),
                source,
            })?;
            written.push(path);
        }
        Ok(written)
    }
}
