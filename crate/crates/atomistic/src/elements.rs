use std::collections::BTreeMap;
use std::sync::OnceLock;

static RADII_FILE: &str = include_str!("../data/covalent_radii.txt");

fn radii() -> &'static BTreeMap<&'static str, f64> {
    static TABLE: OnceLock<BTreeMap<&'static str, f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        RADII_FILE
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let (sym, r) = l.split_once(' ').expect("radius line");
                (sym, r.trim().parse().expect("radius value"))
            })
            .collect()
    })
}

/// Covalent radius in Å, or `None` for symbols outside the shipped table.
pub fn covalent_radius(symbol: &str) -> Option<f64> {
    radii().get(symbol).copied()
}

pub fn is_element(symbol: &str) -> bool {
    radii().contains_key(symbol)
}

/// Fixed display colour per species; unknown symbols get a stable fallback.
pub fn species_color(symbol: &str) -> [u8; 3] {
    match symbol {
        "H" => [235, 235, 235],
        "C" => [80, 80, 80],
        "N" => [48, 80, 248],
        "O" => [230, 30, 30],
        "S" => [230, 200, 40],
        "Mo" => [84, 181, 181],
        "W" => [33, 148, 214],
        "Se" => [255, 161, 0],
        "Si" => [240, 200, 160],
        "Cu" => [200, 128, 51],
        "Fe" => [224, 102, 51],
        "Ni" => [80, 208, 80],
        "Na" => [171, 92, 242],
        "Cl" => [31, 240, 31],
        "Mg" => [138, 255, 0],
        "Au" => [255, 209, 35],
        "Ag" => [160, 160, 200],
        "Pt" => [208, 208, 224],
        "Al" => [191, 166, 166],
        _ => {
            let h = symbol.bytes().fold(2166136261u32, |h, b| (h ^ b as u32).wrapping_mul(16777619));
            [64 + (h & 0x7f) as u8, 64 + ((h >> 8) & 0x7f) as u8, 64 + ((h >> 16) & 0x7f) as u8]
        }
    }
}
