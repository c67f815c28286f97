use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::elements::is_element;
use crate::error::{Result, StructError};
use crate::presets::preset;
use crate::structure::{add, cross, dot, frac_to_cart, norm, scale, sub, AtomicStructure, Vec3};

/// Largest structure a plan may build.
pub const MAX_ATOMS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Instruction {
    MakeLattice {
        preset: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lattice_constant: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vacuum: Option<f64>,
    },
    MakeSupercell {
        na: usize,
        nb: usize,
        nc: usize,
    },
    RemoveAtoms {
        selector: Selector,
    },
    Substitute {
        selector: Selector,
        species: String,
    },
    /// Shift selected atoms by a Cartesian vector in Å.
    Displace {
        selector: Selector,
        vector: Vec3,
    },
    /// Make `axis` non-periodic with `thickness` Å of empty space.
    SetVacuum {
        axis: usize,
        thickness: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "by", rename_all = "snake_case", deny_unknown_fields)]
pub enum Selector {
    /// Indices into the canonical atom order at that point of the plan.
    Indices { indices: Vec<usize> },
    Species { species: String, count: usize, placement: Placement },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum Placement {
    Random { seed: u64 },
    /// Atoms closest to a line through the atom nearest the cell centre;
    /// `direction` is in lattice coordinates.
    NearestLine { direction: Vec3 },
    /// Atoms on basis site `site` of the preset, nearest the cell centre first.
    Site { site: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildPlan {
    #[serde(rename = "plan")]
    pub instructions: Vec<Instruction>,
}

impl BuildPlan {
    pub fn new(instructions: Vec<Instruction>) -> Self {
        Self { instructions }
    }

    /// Type-level invariants: MakeLattice first and unique, known preset and
    /// species, positive sizes, finite numbers.
    pub fn check(&self) -> Result<()> {
        let bad = |i: usize, m: String| Err(StructError::InvalidPlan(format!("instruction {i}: {m}")));
        match self.instructions.first() {
            Some(Instruction::MakeLattice { preset: name, .. }) => {
                preset(name)?;
            }
            Some(_) => return bad(0, "plan must start with make_lattice".into()),
            None => return Err(StructError::InvalidPlan("plan is empty".into())),
        }
        for (i, ins) in self.instructions.iter().enumerate() {
            match ins {
                Instruction::MakeLattice { lattice_constant, vacuum, .. } => {
                    if i > 0 {
                        return bad(i, "make_lattice may appear only once, first".into());
                    }
                    if lattice_constant.is_some_and(|a| !(a.is_finite() && a > 0.0)) {
                        return bad(i, "lattice_constant must be positive".into());
                    }
                    if vacuum.is_some_and(|v| !(v.is_finite() && v >= 0.0)) {
                        return bad(i, "vacuum must be non-negative".into());
                    }
                }
                Instruction::MakeSupercell { na, nb, nc } => {
                    if [na, nb, nc].iter().any(|&&n| n == 0) {
                        return bad(i, "supercell repeats must be at least 1".into());
                    }
                }
                Instruction::RemoveAtoms { selector } => check_selector(i, selector)?,
                Instruction::Substitute { selector, species } => {
                    check_selector(i, selector)?;
                    if !is_element(species) {
                        return Err(StructError::UnknownElement(species.clone()));
                    }
                }
                Instruction::Displace { selector, vector } => {
                    check_selector(i, selector)?;
                    if vector.iter().any(|v| !v.is_finite()) {
                        return bad(i, "displacement must be finite".into());
                    }
                }
                Instruction::SetVacuum { axis, thickness } => {
                    if *axis > 2 {
                        return bad(i, format!("axis {axis} out of range 0..=2"));
                    }
                    if !(thickness.is_finite() && *thickness > 0.0) {
                        return bad(i, "vacuum thickness must be positive".into());
                    }
                }
            }
        }
        Ok(())
    }

    pub fn explicit_lattice_constant(&self) -> bool {
        matches!(self.instructions.first(), Some(Instruction::MakeLattice { lattice_constant: Some(_), .. }))
    }
}

fn check_selector(i: usize, sel: &Selector) -> Result<()> {
    match sel {
        Selector::Indices { indices } if indices.is_empty() => Err(StructError::SelectorEmpty { index: i }),
        Selector::Indices { .. } => Ok(()),
        Selector::Species { species, count, placement } => {
            if !is_element(species) {
                return Err(StructError::UnknownElement(species.clone()));
            }
            if *count == 0 {
                return Err(StructError::InvalidPlan(format!("instruction {i}: selector count must be at least 1")));
            }
            if let Placement::NearestLine { direction } = placement {
                if direction.iter().any(|v| !v.is_finite()) || norm(*direction) == 0.0 {
                    return Err(StructError::InvalidPlan(format!("instruction {i}: line direction must be non-zero")));
                }
            }
            Ok(())
        }
    }
}

struct Work {
    s: AtomicStructure,
    sites: Vec<usize>,
}

impl Work {
    fn canonicalize(&mut self) {
        let mut sites = std::mem::take(&mut self.sites);
        self.s.canonicalize_with(&mut sites);
        self.sites = sites;
    }

    fn centre(&self) -> Vec3 {
        frac_to_cart(&self.s.lattice, [0.5; 3])
    }
}

/// Deterministic interpretation of a plan. Atoms come out in canonical order.
pub fn execute_plan(plan: &BuildPlan) -> Result<AtomicStructure> {
    plan.check()?;
    let Some(Instruction::MakeLattice { preset: name, lattice_constant, vacuum }) = plan.instructions.first() else {
        unreachable!("checked above");
    };
    let (s, sites) = preset(name)?.build(*lattice_constant, *vacuum)?;
    let mut w = Work { s, sites };
    w.canonicalize();
    for (i, ins) in plan.instructions.iter().enumerate().skip(1) {
        apply(&mut w, i, ins)?;
        w.canonicalize();
    }
    Ok(w.s)
}

fn apply(w: &mut Work, i: usize, ins: &Instruction) -> Result<()> {
    let conflict = |m: String| StructError::InstructionConflict { index: i, message: m };
    match ins {
        Instruction::MakeLattice { .. } => unreachable!("rejected by check"),
        Instruction::MakeSupercell { na, nb, nc } => {
            let reps = [*na, *nb, *nc];
            for k in 0..3 {
                if reps[k] > 1 && !w.s.pbc[k] {
                    return Err(conflict(format!("cannot repeat along non-periodic axis {k}")));
                }
            }
            let total = w.s.len().saturating_mul(na * nb * nc);
            if total > MAX_ATOMS {
                return Err(conflict(format!("supercell would hold {total} atoms (limit {MAX_ATOMS})")));
            }
            let l = w.s.lattice;
            let (mut species, mut positions, mut sites) = (Vec::new(), Vec::new(), Vec::new());
            for a in 0..*na {
                for b in 0..*nb {
                    for c in 0..*nc {
                        let shift = frac_to_cart(&l, [a as f64, b as f64, c as f64]);
                        for (j, p) in w.s.positions.iter().enumerate() {
                            species.push(w.s.species[j].clone());
                            positions.push(add(*p, shift));
                            sites.push(w.sites[j]);
                        }
                    }
                }
            }
            w.s.species = species;
            w.s.positions = positions;
            w.sites = sites;
            for k in 0..3 {
                w.s.lattice[k] = scale(l[k], reps[k] as f64);
            }
        }
        Instruction::RemoveAtoms { selector } => {
            let sel = select(w, i, selector)?;
            let keep: Vec<usize> = (0..w.s.len()).filter(|j| sel.binary_search(j).is_err()).collect();
            w.s.species = keep.iter().map(|&j| w.s.species[j].clone()).collect();
            w.s.positions = keep.iter().map(|&j| w.s.positions[j]).collect();
            w.sites = keep.iter().map(|&j| w.sites[j]).collect();
        }
        Instruction::Substitute { selector, species } => {
            for j in select(w, i, selector)? {
                w.s.species[j] = species.clone();
            }
        }
        Instruction::Displace { selector, vector } => {
            for j in select(w, i, selector)? {
                w.s.positions[j] = add(w.s.positions[j], *vector);
            }
        }
        Instruction::SetVacuum { axis, thickness } => set_vacuum(&mut w.s, *axis, *thickness).map_err(conflict)?,
    }
    Ok(())
}

/// Rescale cell vector `axis` so that the slab is followed by `thickness` Å of
/// empty space, recentre the slab and mark the axis non-periodic.
fn set_vacuum(s: &mut AtomicStructure, axis: usize, thickness: f64) -> std::result::Result<(), String> {
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    let mut n = cross(s.lattice[u], s.lattice[v]);
    let nn = norm(n);
    if nn == 0.0 {
        return Err("cell vectors are collinear".into());
    }
    n = scale(n, 1.0 / nn);
    let ak = s.lattice[axis];
    let mut along = dot(ak, n);
    if along.abs() < 1e-12 {
        return Err(format!("cell vector {axis} lies in the plane of the other two"));
    }
    if along < 0.0 {
        n = scale(n, -1.0);
        along = -along;
    }
    let proj: Vec<f64> = s.positions.iter().map(|&p| dot(p, n)).collect();
    let (lo, hi) = proj.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let (lo, hi) = if proj.is_empty() { (0.0, 0.0) } else { (lo, hi) };
    let height = (hi - lo) + thickness;
    let dir = scale(ak, 1.0 / along); // unit step along n
    s.lattice[axis] = scale(dir, height);
    let shift = height / 2.0 - (lo + hi) / 2.0;
    // keep the in-plane origin: only move along the new cell vector
    for p in &mut s.positions {
        *p = add(*p, scale(dir, shift));
    }
    s.pbc[axis] = false;
    Ok(())
}

fn select(w: &Work, i: usize, sel: &Selector) -> Result<Vec<usize>> {
    let conflict = |m: String| StructError::InstructionConflict { index: i, message: m };
    let mut out = match sel {
        Selector::Indices { indices } => {
            if let Some(&bad) = indices.iter().find(|&&j| j >= w.s.len()) {
                return Err(conflict(format!("index {bad} out of range for {} atoms", w.s.len())));
            }
            let mut v = indices.clone();
            v.sort_unstable();
            v.dedup();
            v
        }
        Selector::Species { species, count, placement } => {
            let mut cand: Vec<usize> = (0..w.s.len()).filter(|&j| &w.s.species[j] == species).collect();
            if let Placement::Site { site } = placement {
                cand.retain(|&j| w.sites[j] == *site);
            }
            if cand.is_empty() {
                return Err(StructError::SelectorEmpty { index: i });
            }
            if *count > cand.len() {
                return Err(conflict(format!("asked for {count} {species} atoms, only {} available", cand.len())));
            }
            match placement {
                Placement::Random { seed } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                    rand::seq::index::sample(&mut rng, cand.len(), *count).into_iter().map(|k| cand[k]).collect()
                }
                Placement::NearestLine { direction } => {
                    let centre = w.centre();
                    let anchor = nearest(&w.s, &cand, centre);
                    let d = frac_to_cart(&w.s.lattice, *direction);
                    let d = scale(d, 1.0 / norm(d));
                    let origin = w.s.positions[anchor];
                    let q = |x: f64| (x * 1e6).round() as i64;
                    let mut ranked: Vec<(i64, i64, usize)> = cand
                        .iter()
                        .map(|&j| {
                            let r = sub(w.s.positions[j], origin);
                            let t = dot(r, d);
                            let perp = norm(sub(r, scale(d, t)));
                            (q(perp), q(t.abs()), j)
                        })
                        .collect();
                    ranked.sort_unstable();
                    ranked.into_iter().take(*count).map(|r| r.2).collect()
                }
                Placement::Site { .. } => {
                    let centre = w.centre();
                    let mut ranked: Vec<(i64, usize)> = cand
                        .iter()
                        .map(|&j| (((norm(sub(w.s.positions[j], centre))) * 1e6).round() as i64, j))
                        .collect();
                    ranked.sort_unstable();
                    ranked.into_iter().take(*count).map(|r| r.1).collect()
                }
            }
        }
    };
    out.sort_unstable();
    Ok(out)
}

fn nearest(s: &AtomicStructure, cand: &[usize], p: Vec3) -> usize {
    *cand
        .iter()
        .min_by_key(|&&j| (((norm(sub(s.positions[j], p))) * 1e6).round() as i64, j))
        .expect("non-empty candidates")
}
