//! Concept superset and the normalized model-by-concept count matrix.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::profile::{ConceptCategory, DissectProfile};
use crate::table::{csv_bytes, fmt_real};

/// Union of every concept assigned in any model, ordered by (category, name).
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSuperset {
    concepts: Vec<(String, ConceptCategory)>,
    category_totals: [usize; 4],
}

impl ConceptSuperset {
    pub fn from_concepts(
        concepts: impl IntoIterator<Item = (String, ConceptCategory)>,
    ) -> Result<Self> {
        let mut by_name: BTreeMap<String, ConceptCategory> = BTreeMap::new();
        for (name, cat) in concepts {
            match by_name.get(&name) {
                Some(&existing) if existing != cat => {
                    return Err(Error::Invalid(format!(
                        "concept `{name}` appears as both {existing} and {cat}"
                    )));
                }
                Some(_) => {}
                None => {
                    by_name.insert(name, cat);
                }
            }
        }
        if by_name.is_empty() {
            return Err(Error::Empty(
                "no assigned concepts in any profile; the superset would be empty".into(),
            ));
        }
        let mut concepts: Vec<(String, ConceptCategory)> = by_name.into_iter().collect();
        concepts.sort_by(|(a, ca), (b, cb)| ca.cmp(cb).then_with(|| a.cmp(b)));
        let mut category_totals = [0usize; 4];
        for (_, cat) in &concepts {
            category_totals[cat.index()] += 1;
        }
        Ok(ConceptSuperset {
            concepts,
            category_totals,
        })
    }

    pub fn concepts(&self) -> &[(String, ConceptCategory)] {
        &self.concepts
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn category_total(&self, category: ConceptCategory) -> usize {
        self.category_totals[category.index()]
    }

    pub fn category_totals(&self) -> [usize; 4] {
        self.category_totals
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        // ordering is by category first, so a linear scan is simplest
        self.concepts.iter().position(|(n, _)| n == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.concepts.iter().map(|(n, _)| n.as_str())
    }
}

pub fn build_superset(profiles: &[DissectProfile]) -> Result<ConceptSuperset> {
    if profiles.is_empty() {
        return Err(Error::Empty("at least one profile is required".into()));
    }
    ConceptSuperset::from_concepts(
        profiles
            .iter()
            .flat_map(|p| p.assigned_units().map(|(c, cat)| (c.to_string(), cat))),
    )
}

/// Rows are models in input order; columns follow the superset order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptMatrix {
    pub model_names: Vec<String>,
    pub superset: ConceptSuperset,
    pub layer_widths: Vec<u32>,
    pub raw_counts: DMatrix<u32>,
    pub normalized: DMatrix<f64>,
}

pub fn build_matrix(profiles: &[DissectProfile], superset: &ConceptSuperset) -> Result<ConceptMatrix> {
    let column: BTreeMap<&str, (usize, ConceptCategory)> = superset
        .concepts
        .iter()
        .enumerate()
        .map(|(j, (n, cat))| (n.as_str(), (j, *cat)))
        .collect();
    let mut raw = DMatrix::<u32>::zeros(profiles.len(), superset.len());
    for (i, profile) in profiles.iter().enumerate() {
        for (concept, cat) in profile.assigned_units() {
            match column.get(concept) {
                Some(&(j, expected)) if expected == cat => raw[(i, j)] += 1,
                Some(&(_, expected)) => {
                    return Err(Error::Invalid(format!(
                        "model `{}` assigns `{concept}` as {cat}, superset has {expected}",
                        profile.model_name
                    )))
                }
                None => {
                    return Err(Error::Invalid(format!(
                        "concept `{concept}` of model `{}` is missing from the superset",
                        profile.model_name
                    )))
                }
            }
        }
    }
    let normalized = DMatrix::from_fn(profiles.len(), superset.len(), |i, j| {
        let total = superset.category_total(superset.concepts[j].1);
        raw[(i, j)] as f64 / total as f64
    });
    Ok(ConceptMatrix {
        model_names: profiles.iter().map(|p| p.model_name.clone()).collect(),
        superset: superset.clone(),
        layer_widths: profiles.iter().map(|p| p.layer_width).collect(),
        raw_counts: raw,
        normalized,
    })
}

impl ConceptMatrix {
    pub fn n_models(&self) -> usize {
        self.model_names.len()
    }

    pub fn n_concepts(&self) -> usize {
        self.superset.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.normalized.row(i).iter().copied().collect()
    }

    fn header(&self) -> Vec<&str> {
        std::iter::once("model").chain(self.superset.names()).collect()
    }

    /// Normalized values, 9 decimals.
    pub fn normalized_csv(&self) -> Vec<u8> {
        let rows = self.model_names.iter().enumerate().map(|(i, name)| {
            std::iter::once(name.clone())
                .chain(self.normalized.row(i).iter().map(|v| fmt_real(*v)))
                .collect::<Vec<_>>()
        });
        csv_bytes(&self.header(), rows)
    }

    pub fn raw_csv(&self) -> Vec<u8> {
        let rows = self.model_names.iter().enumerate().map(|(i, name)| {
            std::iter::once(name.clone())
                .chain(self.raw_counts.row(i).iter().map(|v| v.to_string()))
                .collect::<Vec<_>>()
        });
        csv_bytes(&self.header(), rows)
    }
}
