use std::sync::OnceLock;

use serde::Deserialize;

use crate::error::{Result, StructError};
use crate::structure::{frac_to_cart, AtomicStructure, Mat3};

static PRESET_FILE: &str = include_str!("../data/presets.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Hexagonal,
    Fcc,
    Bcc,
    Diamond,
    Rocksalt,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BasisSite {
    pub species: String,
    pub frac: [f64; 2],
    pub z: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Preset {
    pub name: String,
    pub cell: CellKind,
    pub a: f64,
    /// Default vacuum thickness; present only for 2D presets.
    #[serde(default)]
    pub vacuum: Option<f64>,
    #[serde(default)]
    pub basis: Vec<BasisSite>,
    #[serde(default)]
    pub species: Vec<String>,
}

#[derive(Deserialize)]
struct PresetFile {
    presets: Vec<Preset>,
}

pub fn presets() -> &'static [Preset] {
    static ALL: OnceLock<Vec<Preset>> = OnceLock::new();
    ALL.get_or_init(|| serde_json::from_str::<PresetFile>(PRESET_FILE).expect("preset file").presets)
}

pub fn preset(name: &str) -> Result<&'static Preset> {
    presets().iter().find(|p| p.name == name).ok_or_else(|| StructError::UnknownPreset(name.into()))
}

const FCC: [[f64; 3]; 4] = [[0.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];

impl Preset {
    pub fn is_2d(&self) -> bool {
        self.cell == CellKind::Hexagonal
    }

    /// One-line description used in planning prompts.
    pub fn describe(&self) -> String {
        match self.cell {
            CellKind::Hexagonal => {
                let per_cell: Vec<&str> = self.basis.iter().map(|b| b.species.as_str()).collect();
                format!(
                    "{} (2D hexagonal, a = {} Å, atoms per cell: {}, default vacuum {} Å along c)",
                    self.name,
                    self.a,
                    per_cell.join(" "),
                    self.vacuum.unwrap_or(0.0)
                )
            }
            kind => {
                let label = match kind {
                    CellKind::Fcc => "fcc",
                    CellKind::Bcc => "bcc",
                    CellKind::Diamond => "diamond",
                    _ => "rocksalt",
                };
                format!("{} (bulk {label}, conventional cubic cell, a = {} Å)", self.name, self.a)
            }
        }
    }

    /// Build the unit cell. Returns the structure and each atom's basis-site id.
    pub fn build(&self, lattice_constant: Option<f64>, vacuum: Option<f64>) -> Result<(AtomicStructure, Vec<usize>)> {
        let a = lattice_constant.unwrap_or(self.a);
        if !(a.is_finite() && a > 0.0) {
            return Err(StructError::InvalidPlan(format!("lattice constant {a} must be positive")));
        }
        let mut species = Vec::new();
        let mut frac = Vec::new();
        let mut sites = Vec::new();
        let (lattice, pbc): (Mat3, [bool; 3]) = match self.cell {
            CellKind::Hexagonal => {
                let vac = vacuum.unwrap_or(self.vacuum.unwrap_or(15.0));
                if !(vac.is_finite() && vac >= 0.0) {
                    return Err(StructError::InvalidPlan(format!("vacuum {vac} must be non-negative")));
                }
                let zmin = self.basis.iter().map(|b| b.z).fold(f64::INFINITY, f64::min);
                let zmax = self.basis.iter().map(|b| b.z).fold(f64::NEG_INFINITY, f64::max);
                let c = (zmax - zmin) + vac;
                let mid = (zmax + zmin) / 2.0;
                for (id, b) in self.basis.iter().enumerate() {
                    species.push(b.species.clone());
                    frac.push([b.frac[0], b.frac[1], 0.5 + (b.z - mid) / c]);
                    sites.push(id);
                }
                ([[a, 0.0, 0.0], [-a / 2.0, a * 3f64.sqrt() / 2.0, 0.0], [0.0, 0.0, c]], [true, true, false])
            }
            kind => {
                if vacuum.is_some() {
                    return Err(StructError::InvalidPlan(format!("preset {} is bulk; use set_vacuum to make a slab", self.name)));
                }
                let sub: Vec<(usize, [f64; 3])> = match kind {
                    CellKind::Fcc => FCC.iter().map(|&f| (0, f)).collect(),
                    CellKind::Bcc => vec![(0, [0.0; 3]), (0, [0.5; 3])],
                    CellKind::Diamond => FCC
                        .iter()
                        .map(|&f| (0, f))
                        .chain(FCC.iter().map(|f| (0, [f[0] + 0.25, f[1] + 0.25, f[2] + 0.25])))
                        .collect(),
                    CellKind::Rocksalt => FCC
                        .iter()
                        .map(|&f| (0, f))
                        .chain(FCC.iter().map(|f| (1, [(f[0] + 0.5) % 1.0, f[1], f[2]])))
                        .collect(),
                    CellKind::Hexagonal => unreachable!(),
                };
                for (role, f) in sub {
                    species.push(self.species[role].clone());
                    frac.push(f);
                    sites.push(role);
                }
                ([[a, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, a]], [true; 3])
            }
        };
        let positions = frac.iter().map(|&f| frac_to_cart(&lattice, f)).collect();
        Ok((AtomicStructure::new(species, positions, lattice, pbc)?, sites))
    }
}
