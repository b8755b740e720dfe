//! Per-unit concept profiles: parsing, IoU thresholding and per-category abstraction.
//!
//! A profile lists, for one layer of one model, the concept (if any) matched to each
//! unit together with the IoU score of that match. Units whose score falls under the
//! threshold are kept but cleared, so the layer width stays meaningful after filtering.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default IoU threshold below which a unit counts as unassigned.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptCategory {
    Object,
    Part,
    Material,
    Color,
}

impl ConceptCategory {
    pub const ALL: [ConceptCategory; 4] = [
        ConceptCategory::Object,
        ConceptCategory::Part,
        ConceptCategory::Material,
        ConceptCategory::Color,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConceptCategory::Object => "object",
            ConceptCategory::Part => "part",
            ConceptCategory::Material => "material",
            ConceptCategory::Color => "color",
        }
    }
}

impl fmt::Display for ConceptCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One unit of the dissected layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitAssignment {
    #[serde(rename = "unit")]
    pub unit_id: u32,
    pub concept: Option<String>,
    pub category: Option<ConceptCategory>,
    pub iou: f64,
}

impl UnitAssignment {
    /// The assigned concept and its category, if the unit carries one.
    pub fn assigned(&self) -> Option<(&str, ConceptCategory)> {
        match (&self.concept, self.category) {
            (Some(c), Some(cat)) => Some((c.as_str(), cat)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissectProfile {
    #[serde(rename = "model")]
    pub model_name: String,
    #[serde(rename = "layer")]
    pub layer_name: String,
    pub layer_width: u32,
    pub units: Vec<UnitAssignment>,
}

impl DissectProfile {
    /// Validates a profile built in memory. Concept names are trimmed.
    pub fn new(
        model_name: impl Into<String>,
        layer_name: impl Into<String>,
        layer_width: u32,
        units: Vec<UnitAssignment>,
    ) -> Result<Self> {
        let mut profile = DissectProfile {
            model_name: model_name.into(),
            layer_name: layer_name.into(),
            layer_width,
            units,
        };
        profile.normalize_and_validate()?;
        Ok(profile)
    }

    fn normalize_and_validate(&mut self) -> Result<()> {
        let what = || format!("profile `{}`", self.model_name);
        if self.model_name.trim().is_empty() {
            return Err(Error::malformed("profile", "empty model name"));
        }
        if self.layer_width == 0 {
            return Err(Error::malformed(what(), "layer_width must be positive"));
        }
        let mut seen = HashSet::with_capacity(self.units.len());
        for unit in &mut self.units {
            if !seen.insert(unit.unit_id) {
                return Err(Error::malformed(
                    what(),
                    format!("duplicate unit id {}", unit.unit_id),
                ));
            }
            if unit.unit_id >= self.layer_width {
                return Err(Error::malformed(
                    what(),
                    format!(
                        "unit id {} not below layer_width {}",
                        unit.unit_id, self.layer_width
                    ),
                ));
            }
            if !(0.0..=1.0).contains(&unit.iou) {
                return Err(Error::malformed(
                    what(),
                    format!("unit {} has iou {} outside [0, 1]", unit.unit_id, unit.iou),
                ));
            }
            if let Some(name) = unit.concept.as_mut() {
                let trimmed = name.trim();
                if trimmed.is_empty() {
                    return Err(Error::malformed(
                        what(),
                        format!("unit {} has an empty concept name", unit.unit_id),
                    ));
                }
                if trimmed.len() != name.len() {
                    *name = trimmed.to_string();
                }
            }
            if unit.concept.is_some() != unit.category.is_some() {
                return Err(Error::malformed(
                    what(),
                    format!(
                        "unit {} must carry both a concept and a category, or neither",
                        unit.unit_id
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Units that carry a concept.
    pub fn assigned_units(&self) -> impl Iterator<Item = (&str, ConceptCategory)> {
        self.units.iter().filter_map(UnitAssignment::assigned)
    }

    pub fn assigned_count(&self) -> usize {
        self.assigned_units().count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serialization cannot fail")
    }
}

/// Parses and validates one profile document.
pub fn parse_profile(document: &[u8]) -> Result<DissectProfile> {
    let mut profile: DissectProfile =
        serde_json::from_slice(document).map_err(|e| Error::malformed("profile", e))?;
    profile.normalize_and_validate()?;
    Ok(profile)
}

pub fn read_profile(path: &Path) -> Result<DissectProfile> {
    let bytes = std::fs::read(path).map_err(|source| Error::ReadInput {
        path: path.to_path_buf(),
        source,
    })?;
    parse_profile_from(&bytes, path)
}

/// Like [`parse_profile`], naming `origin` in error messages.
pub fn parse_profile_from(document: &[u8], origin: &Path) -> Result<DissectProfile> {
    parse_profile(document).map_err(|e| match e {
        Error::Malformed { what, message } => Error::Malformed {
            what: format!("{what} ({})", origin.display()),
            message,
        },
        e => e,
    })
}

/// Clears the concept of every unit whose IoU is under `threshold`.
pub fn filter_by_iou(profile: &DissectProfile, threshold: f64) -> Result<DissectProfile> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::out_of_range(
            "iou threshold",
            format!("{threshold} not in [0, 1]"),
        ));
    }
    let units = profile
        .units
        .iter()
        .map(|u| {
            if u.iou < threshold {
                UnitAssignment {
                    concept: None,
                    category: None,
                    ..u.clone()
                }
            } else {
                u.clone()
            }
        })
        .collect();
    Ok(DissectProfile {
        units,
        ..profile.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbstractionMode {
    /// Every assigned unit counts.
    All,
    /// Each distinct concept counts once.
    Unique,
}

impl AbstractionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AbstractionMode::All => "all",
            AbstractionMode::Unique => "unique",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AbstractedProfile {
    pub mode: AbstractionMode,
    counts: [usize; 4],
}

impl AbstractedProfile {
    pub fn get(&self, category: ConceptCategory) -> usize {
        self.counts[category.index()]
    }

    pub fn counts(&self) -> [usize; 4] {
        self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn abstract_profile(profile: &DissectProfile, mode: AbstractionMode) -> AbstractedProfile {
    let mut counts = [0usize; 4];
    match mode {
        AbstractionMode::All => {
            for (_, cat) in profile.assigned_units() {
                counts[cat.index()] += 1;
            }
        }
        AbstractionMode::Unique => {
            let distinct: BTreeSet<(ConceptCategory, &str)> =
                profile.assigned_units().map(|(c, cat)| (cat, c)).collect();
            for (cat, _) in distinct {
                counts[cat.index()] += 1;
            }
        }
    }
    AbstractedProfile { mode, counts }
}
