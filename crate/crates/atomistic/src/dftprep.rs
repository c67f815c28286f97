use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::DftError;
use crate::structure::{cart_to_frac, frac_to_cart, inverse, AtomicStructure, Mat3};
use crate::validate::{largest_gap, MIN_VACUUM};

static DEFAULTS_FILE: &str = include_str!("../data/incar_defaults.txt");

/// Real-space length (Å) of the k-point density rule.
pub const K_LENGTH: f64 = 30.0;
pub const DEFAULT_TABLE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DftObjective {
    DefectRelaxation,
    ElectronicStructure,
    SinglePointEnergy,
}

impl DftObjective {
    pub const ALL: [DftObjective; 3] = [Self::DefectRelaxation, Self::ElectronicStructure, Self::SinglePointEnergy];

    fn section(self) -> &'static str {
        match self {
            Self::DefectRelaxation => "DefectRelaxation",
            Self::ElectronicStructure => "ElectronicStructure",
            Self::SinglePointEnergy => "SinglePointEnergy",
        }
    }
}

impl FromStr for DftObjective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|o| o.section().to_ascii_lowercase() == norm)
            .ok_or_else(|| format!("unknown objective `{s}` (defect_relaxation, electronic_structure, single_point_energy)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IncarValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
}

impl IncarValue {
    /// Interpret a VASP-style literal.
    pub fn parse(text: &str) -> Self {
        let t = text.trim();
        match t.to_ascii_uppercase().as_str() {
            ".TRUE." | ".T." | "T" | "TRUE" => return Self::Bool(true),
            ".FALSE." | ".F." | "F" | "FALSE" => return Self::Bool(false),
            _ => {}
        }
        if let Ok(i) = t.parse::<i64>() {
            return Self::Int(i);
        }
        match t.replace(['d', 'D'], "E").parse::<f64>() {
            Ok(r) if r.is_finite() => Self::Real(r),
            _ => Self::Text(t.to_string()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Int(i) => Some(*i as f64),
            Self::Real(r) => Some(*r),
            _ => None,
        }
    }
}

impl fmt::Display for IncarValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bool(true) => f.write_str(".TRUE."),
            Self::Bool(false) => f.write_str(".FALSE."),
            Self::Int(i) => write!(f, "{i}"),
            Self::Real(r) if *r != 0.0 && r.abs() < 1e-3 => write!(f, "{r:E}"),
            Self::Real(r) if r.fract() == 0.0 => write!(f, "{r:.1}"),
            Self::Real(r) => write!(f, "{r}"),
            Self::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum TagProvenance {
    DefaultTable,
    LiteratureOverride { citation: String },
    UserOverride,
}

impl fmt::Display for TagProvenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DefaultTable => write!(f, "default table v{DEFAULT_TABLE_VERSION}"),
            Self::LiteratureOverride { citation } => write!(f, "literature: {}", citation.replace(['\n', '\r'], " ")),
            Self::UserOverride => f.write_str("user override"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncarTag {
    pub key: String,
    pub value: IncarValue,
    pub provenance: TagProvenance,
}

/// Ordered INCAR tags; keys are unique and uppercase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IncarSpec {
    pub tags: Vec<IncarTag>,
}

impl IncarSpec {
    /// Insert or replace, keeping the original position of an existing key.
    pub fn set(&mut self, key: &str, value: IncarValue, provenance: TagProvenance) {
        let key = key.trim().to_ascii_uppercase();
        match self.tags.iter_mut().find(|t| t.key == key) {
            Some(t) => {
                t.value = value;
                t.provenance = provenance;
            }
            None => self.tags.push(IncarTag { key, value, provenance }),
        }
    }

    pub fn get(&self, key: &str) -> Option<&IncarValue> {
        let key = key.to_ascii_uppercase();
        self.tags.iter().find(|t| t.key == key).map(|t| &t.value)
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpointsSpec {
    /// Gamma-centred Monkhorst–Pack divisions.
    pub grid: [u32; 3],
    pub shift: [f64; 3],
}

fn default_tables() -> &'static Vec<(String, Vec<(String, String)>)> {
    static TABLES: OnceLock<Vec<(String, Vec<(String, String)>)>> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut out: Vec<(String, Vec<(String, String)>)> = Vec::new();
        for line in DEFAULTS_FILE.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                out.push((name.to_string(), Vec::new()));
            } else {
                let (k, v) = line.split_once('=').expect("KEY = VALUE line in default table");
                out.last_mut().expect("section header").1.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        out
    })
}

/// The shipped default table for `objective` (common section first).
pub fn default_incar(objective: DftObjective) -> IncarSpec {
    let mut spec = IncarSpec::default();
    for (section, entries) in default_tables() {
        if section == "common" || section == objective.section() {
            for (k, v) in entries {
                spec.set(k, IncarValue::parse(v), TagProvenance::DefaultTable);
            }
        }
    }
    spec
}

/// Axes that get a single k-point: non-periodic, or periodic with at least
/// the minimum vacuum span of empty space.
pub fn vacuum_axes(s: &AtomicStructure) -> [bool; 3] {
    let frac = s.fractional_positions();
    let heights = s.heights();
    let mut out = [false; 3];
    for k in 0..3 {
        out[k] = !s.pbc[k]
            || frac.as_ref().is_some_and(|f| !f.is_empty() && largest_gap(f.iter().map(|p| p[k])) * heights[k] >= MIN_VACUUM);
    }
    out
}

/// nᵢ = max(1, round(L / hᵢ)) with hᵢ the spacing of lattice planes along
/// axis i (i.e. L·|bᵢ| for reciprocal vectors without the 2π factor);
/// vacuum axes get 1.
pub fn kpoint_grid(s: &AtomicStructure, length: f64) -> [u32; 3] {
    let h = s.heights();
    let vac = vacuum_axes(s);
    let mut grid = [1u32; 3];
    for k in 0..3 {
        if !vac[k] && h[k].is_finite() && h[k] > 0.0 {
            grid[k] = ((length / h[k]).round() as u32).max(1);
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterAdvice {
    pub tag: String,
    pub value: String,
    pub citation: String,
}

/// A literature source that can suggest calculation parameters.
pub trait ParameterSource {
    fn recommend(&self, formula: &str, objective: DftObjective) -> Result<Vec<ParameterAdvice>, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DftSetup {
    pub objective: DftObjective,
    pub incar: IncarSpec,
    pub kpoints: KpointsSpec,
    pub k_length: f64,
    /// Literature suggestions that were applied.
    pub overrides: Vec<ParameterAdvice>,
    pub warnings: Vec<String>,
}

/// Tags a literature answer may change. `KDENSITY` is the k-point length (Å).
pub const LITERATURE_WHITELIST: [&str; 4] = ["ENCUT", "KDENSITY", "ISMEAR", "SIGMA"];

fn whitelisted(tag: &str) -> Option<&'static str> {
    let t: String = tag.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
    match t.as_str() {
        "ENCUT" => Some("ENCUT"),
        "KDENSITY" | "KPOINTDENSITY" | "KSPACINGLENGTH" | "KLENGTH" => Some("KDENSITY"),
        "ISMEAR" => Some("ISMEAR"),
        "SIGMA" => Some("SIGMA"),
        _ => None,
    }
}

fn admissible(tag: &str, v: &IncarValue) -> Option<IncarValue> {
    let x = v.as_f64()?;
    match tag {
        "ENCUT" if x > 0.0 && x <= 2000.0 => Some(if x.fract() == 0.0 { IncarValue::Int(x as i64) } else { IncarValue::Real(x) }),
        "KDENSITY" if x > 0.0 && x <= 200.0 => Some(IncarValue::Real(x)),
        "ISMEAR" if x.fract() == 0.0 && (-5.0..=10.0).contains(&x) => Some(IncarValue::Int(x as i64)),
        "SIGMA" if x > 0.0 && x <= 1.0 => Some(IncarValue::Real(x)),
        _ => None,
    }
}

/// Default table for the objective, length-rule k-grid, then whitelisted
/// literature overrides. An unavailable source only adds a warning.
pub fn select_parameters(s: &AtomicStructure, objective: DftObjective, source: Option<&dyn ParameterSource>) -> DftSetup {
    let mut incar = default_incar(objective);
    let mut k_length = K_LENGTH;
    let mut overrides = Vec::new();
    let mut warnings = Vec::new();
    if let Some(src) = source {
        match src.recommend(&s.formula(), objective) {
            Err(e) => warnings.push(format!("literature source unavailable, using defaults: {e}")),
            Ok(advice) => {
                for a in advice {
                    let Some(tag) = whitelisted(&a.tag) else {
                        warnings.push(format!("ignored literature suggestion for non-whitelisted tag {}", a.tag));
                        continue;
                    };
                    let Some(value) = admissible(tag, &IncarValue::parse(&a.value)) else {
                        warnings.push(format!("ignored literature value {:?} for {tag}", a.value));
                        continue;
                    };
                    if tag == "KDENSITY" {
                        k_length = value.as_f64().expect("numeric");
                    } else {
                        incar.set(tag, value, TagProvenance::LiteratureOverride { citation: a.citation.clone() });
                    }
                    overrides.push(ParameterAdvice { tag: tag.into(), ..a });
                }
            }
        }
    }
    let kpoints = KpointsSpec { grid: kpoint_grid(s, k_length), shift: [0.0; 3] };
    DftSetup { objective, incar, kpoints, k_length, overrides, warnings }
}

pub fn emit_incar(spec: &IncarSpec) -> Result<String, DftError> {
    if spec.is_empty() {
        return Err(DftError::EmptySpec);
    }
    Ok(spec.tags.iter().map(|t| format!("{} = {}  # {}\n", t.key, t.value, t.provenance)).collect())
}

pub fn emit_kpoints(spec: &KpointsSpec) -> String {
    let [a, b, c] = spec.grid;
    format!("Gamma-centred grid\n0\nGamma\n{a} {b} {c}\n")
}

fn clean(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// VASP 5 POSCAR with direct coordinates. Periodicity is kept in the comment
/// line as `pbc=TTF` so it survives a round trip.
pub fn emit_poscar(s: &AtomicStructure) -> Result<String, DftError> {
    if s.is_empty() {
        return Err(DftError::EmptyStructure);
    }
    s.check()?;
    let inv = inverse(&s.lattice).ok_or_else(|| DftError::Parse { line: 0, message: "lattice is singular".into() })?;
    let pbc: String = s.pbc.iter().map(|&p| if p { 'T' } else { 'F' }).collect();
    let mut out = format!("{} pbc={pbc}\n1.0\n", s.formula());
    for row in &s.lattice {
        out.push_str(&format!("{:>22.16}{:>22.16}{:>22.16}\n", clean(row[0]), clean(row[1]), clean(row[2])));
    }
    let mut groups: Vec<(&str, usize)> = Vec::new();
    for sp in &s.species {
        match groups.last_mut() {
            Some((last, n)) if *last == sp => *n += 1,
            _ => groups.push((sp, 1)),
        }
    }
    out.push_str(&groups.iter().map(|g| format!("{:>5}", g.0)).collect::<String>());
    out.push('\n');
    out.push_str(&groups.iter().map(|g| format!("{:>5}", g.1)).collect::<String>());
    out.push_str("\nDirect\n");
    for (p, sp) in s.positions.iter().zip(&s.species) {
        let f = cart_to_frac(&inv, *p);
        out.push_str(&format!("{:>22.16}{:>22.16}{:>22.16} {sp}\n", clean(f[0]), clean(f[1]), clean(f[2])));
    }
    Ok(out)
}

pub fn parse_poscar(text: &str) -> Result<AtomicStructure, DftError> {
    let lines: Vec<&str> = text.lines().collect();
    let err = |line: usize, message: String| DftError::Parse { line, message };
    let get = |i: usize| lines.get(i).copied().ok_or_else(|| err(i + 1, "unexpected end of file".into()));
    let floats = |i: usize, n: usize| -> Result<Vec<f64>, DftError> {
        let toks: Vec<&str> = get(i)?.split_whitespace().collect();
        if toks.len() < n {
            return Err(err(i + 1, format!("expected {n} numbers")));
        }
        toks[..n].iter().map(|t| t.parse::<f64>().map_err(|_| err(i + 1, format!("invalid number `{t}`")))).collect()
    };

    let comment = get(0)?;
    let mut pbc = [true; 3];
    if let Some(tok) = comment.split_whitespace().find_map(|t| t.strip_prefix("pbc=")) {
        let flags: Vec<bool> = tok.chars().map(|c| c == 'T').collect();
        if flags.len() != 3 || !tok.chars().all(|c| c == 'T' || c == 'F') {
            return Err(err(1, format!("malformed periodicity flag `{tok}`")));
        }
        pbc = [flags[0], flags[1], flags[2]];
    }
    let scale = floats(1, 1)?[0];
    let mut lattice: Mat3 = [[0.0; 3]; 3];
    for k in 0..3 {
        let r = floats(2 + k, 3)?;
        lattice[k] = [r[0], r[1], r[2]];
    }
    let factor = if scale < 0.0 {
        let v = crate::structure::det(&lattice).abs();
        if v == 0.0 {
            return Err(err(2, "negative scale with a singular lattice".into()));
        }
        (-scale / v).cbrt()
    } else if scale > 0.0 {
        scale
    } else {
        return Err(err(2, "scale factor must be non-zero".into()));
    };
    for row in &mut lattice {
        *row = row.map(|v| v * factor);
    }
    let names: Vec<String> = get(5)?.split_whitespace().map(String::from).collect();
    if names.is_empty() || names[0].parse::<f64>().is_ok() {
        return Err(err(6, "species line required (VASP 5 layout)".into()));
    }
    let counts: Vec<usize> = get(6)?
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| err(7, format!("invalid atom count `{t}`"))))
        .collect::<Result<_, _>>()?;
    if counts.len() != names.len() {
        return Err(err(7, format!("{} counts for {} species", counts.len(), names.len())));
    }
    let mut idx = 7;
    if get(idx)?.trim_start().starts_with(['S', 's']) {
        idx += 1;
    }
    let mode = get(idx)?.trim_start().chars().next().unwrap_or(' ');
    let cartesian = match mode {
        'D' | 'd' => false,
        'C' | 'c' | 'K' | 'k' => true,
        _ => return Err(err(idx + 1, "expected `Direct` or `Cartesian`".into())),
    };
    idx += 1;
    let mut species = Vec::new();
    let mut positions = Vec::new();
    for (name, &n) in names.iter().zip(&counts) {
        for _ in 0..n {
            let c = floats(idx, 3)?;
            let v = [c[0], c[1], c[2]];
            positions.push(if cartesian { v.map(|x| x * factor) } else { frac_to_cart(&lattice, v) });
            species.push(name.clone());
            idx += 1;
        }
    }
    if species.is_empty() {
        return Err(err(7, "structure has no atoms".into()));
    }
    Ok(AtomicStructure::new(species, positions, lattice, pbc)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_literals() {
        assert_eq!(IncarValue::parse(".TRUE.").to_string(), ".TRUE.");
        assert_eq!(IncarValue::parse("520").to_string(), "520");
        assert_eq!(IncarValue::parse("1E-6").to_string(), "1E-6");
        assert_eq!(IncarValue::parse("-0.02").to_string(), "-0.02");
        assert_eq!(IncarValue::Real(400.0).to_string(), "400.0");
        assert_eq!(IncarValue::parse("Accurate"), IncarValue::Text("Accurate".into()));
    }

    #[test]
    fn defaults_per_objective() {
        let relax = default_incar(DftObjective::DefectRelaxation);
        assert_eq!(relax.get("IBRION"), Some(&IncarValue::Int(2)));
        assert_eq!(relax.get("ISIF"), Some(&IncarValue::Int(2)));
        assert_eq!(relax.get("ISPIN"), Some(&IncarValue::Int(2)));
        let dos = default_incar(DftObjective::ElectronicStructure);
        assert_eq!(dos.get("LCHARG"), Some(&IncarValue::Bool(true)));
        assert_eq!(dos.tags.iter().filter(|t| t.key == "LCHARG").count(), 1);
        assert_eq!("single-point-energy".parse::<DftObjective>(), Ok(DftObjective::SinglePointEnergy));
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(matches!(emit_incar(&IncarSpec::default()), Err(DftError::EmptySpec)));
        let s = AtomicStructure::new(vec![], vec![], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [true; 3]).unwrap();
        assert!(matches!(emit_poscar(&s), Err(DftError::EmptyStructure)));
        assert_eq!(emit_kpoints(&KpointsSpec { grid: [3, 3, 1], shift: [0.0; 3] }).lines().last(), Some("3 3 1"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = "x\n1.0\n1 0 0\n0 1 0\n0 0 q\nC\n1\nDirect\n0 0 0\n";
        match parse_poscar(bad) {
            Err(DftError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }
}
