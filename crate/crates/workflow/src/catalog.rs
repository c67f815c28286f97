//! Instrument capabilities used to sanity-check measurement recommendations.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WorkflowError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: String,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.value, self.unit)
    }
}

/// Metres per unit for the length units the catalog accepts.
pub fn length_scale(unit: &str) -> Option<f64> {
    Some(match unit.trim() {
        "pm" => 1e-12,
        "Å" | "A" | "angstrom" => 1e-10,
        "nm" => 1e-9,
        "um" | "µm" | "μm" => 1e-6,
        "mm" => 1e-3,
        _ => return None,
    })
}

/// `value` in `from` expressed in `to`, if both are length units.
pub fn convert(value: f64, from: &str, to: &str) -> Option<f64> {
    Some(value * length_scale(from)? / length_scale(to)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    pub name: String,
    pub technique: String,
    /// Smallest usable step (spatial resolution limit).
    pub min_step: Quantity,
    /// Largest scan edge length.
    pub max_field_of_view: Quantity,
    #[serde(default)]
    pub modes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InstrumentCatalog {
    pub instruments: Vec<Instrument>,
}

impl InstrumentCatalog {
    /// Parse and check that every numeric limit carries a length unit.
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| WorkflowError::Catalog(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        for i in &self.instruments {
            for q in [&i.min_step, &i.max_field_of_view] {
                if length_scale(&q.unit).is_none() {
                    return Err(WorkflowError::Catalog(format!("{}: unit {:?} is not a length unit", i.name, q.unit)));
                }
                if !(q.value.is_finite() && q.value > 0.0) {
                    return Err(WorkflowError::Catalog(format!("{}: limit {} must be positive", i.name, q)));
                }
            }
        }
        Ok(())
    }

    fn matching(&self, technique: &str) -> Vec<&Instrument> {
        let t = technique.trim().to_lowercase();
        self.instruments
            .iter()
            .filter(|i| {
                let it = i.technique.to_lowercase();
                !t.is_empty() && (it == t || t.contains(&it) || it.contains(&t) || i.modes.iter().any(|m| m.to_lowercase() == t))
            })
            .collect()
    }

    /// Constraint violations for a measurement with the given step and scan
    /// extent; empty when at least one instrument can perform it.
    pub fn violations(&self, technique: &str, step: Option<(f64, &str)>, extent: Option<(f64, &str)>) -> Vec<String> {
        let candidates = self.matching(technique);
        if candidates.is_empty() {
            return vec![format!("no catalogued instrument offers {technique:?}")];
        }
        let mut best: Option<Vec<String>> = None;
        for i in candidates {
            let mut v = Vec::new();
            if let Some((s, unit)) = step {
                match convert(s, unit, &i.min_step.unit) {
                    Some(x) if x + 1e-12 < i.min_step.value => {
                        v.push(format!("step {s} {unit} is below the minimum step of {} ({})", i.name, i.min_step))
                    }
                    None => v.push(format!("step unit {unit:?} is not a length unit")),
                    _ => {}
                }
            }
            if let Some((e, unit)) = extent {
                match convert(e, unit, &i.max_field_of_view.unit) {
                    Some(x) if x > i.max_field_of_view.value + 1e-12 => {
                        v.push(format!("scan extent {e} {unit} exceeds the field of view of {} ({})", i.name, i.max_field_of_view))
                    }
                    None => v.push(format!("region unit {unit:?} is not a length unit")),
                    _ => {}
                }
            }
            if v.is_empty() {
                return v;
            }
            if best.as_ref().is_none_or(|b| v.len() < b.len()) {
                best = Some(v);
            }
        }
        best.unwrap_or_default()
    }
}
