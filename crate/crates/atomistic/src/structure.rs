use std::cmp::Ordering;
use std::collections::BTreeMap;

use labloop_core::digest_hex;
use serde::{Deserialize, Serialize};

use crate::elements::is_element;
use crate::error::{Result, StructError};

pub type Vec3 = [f64; 3];
/// Rows are the cell vectors a, b, c in Å.
pub type Mat3 = [[f64; 3]; 3];

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn det(m: &Mat3) -> f64 {
    dot(m[0], cross(m[1], m[2]))
}

/// Inverse of a row-vector cell matrix, `None` when (numerically) singular.
pub fn inverse(m: &Mat3) -> Option<Mat3> {
    let d = det(m);
    let scale_ref = norm(m[0]) * norm(m[1]) * norm(m[2]);
    if d == 0.0 || !d.is_finite() || d.abs() <= 1e-12 * scale_ref {
        return None;
    }
    let c0 = cross(m[1], m[2]);
    let c1 = cross(m[2], m[0]);
    let c2 = cross(m[0], m[1]);
    // columns of the inverse are the cofactor rows / det
    Some([
        [c0[0] / d, c1[0] / d, c2[0] / d],
        [c0[1] / d, c1[1] / d, c2[1] / d],
        [c0[2] / d, c1[2] / d, c2[2] / d],
    ])
}

/// `frac · cell`: Cartesian position of a fractional coordinate.
pub fn frac_to_cart(m: &Mat3, f: Vec3) -> Vec3 {
    let mut out = [0.0; 3];
    for (k, row) in m.iter().enumerate() {
        for d in 0..3 {
            out[d] += f[k] * row[d];
        }
    }
    out
}

pub fn cart_to_frac(inv: &Mat3, p: Vec3) -> Vec3 {
    frac_to_cart(inv, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicStructure {
    pub species: Vec<String>,
    pub positions: Vec<Vec3>,
    pub lattice: Mat3,
    pub pbc: [bool; 3],
}

/// Minimum-image displacement between two atoms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    pub vector: Vec3,
    pub distance: f64,
}

impl AtomicStructure {
    pub fn new(species: Vec<String>, positions: Vec<Vec3>, lattice: Mat3, pbc: [bool; 3]) -> Result<Self> {
        let s = Self { species, positions, lattice, pbc };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        if self.species.len() != self.positions.len() {
            return Err(StructError::InvalidStructure(format!(
                "{} species for {} positions",
                self.species.len(),
                self.positions.len()
            )));
        }
        if let Some(bad) = self.species.iter().find(|s| !is_element(s)) {
            return Err(StructError::UnknownElement(bad.clone()));
        }
        if self.positions.iter().flatten().chain(self.lattice.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(StructError::InvalidStructure("non-finite coordinate".into()));
        }
        if self.pbc.iter().any(|&p| p) && det(&self.lattice) <= 0.0 {
            return Err(StructError::InvalidStructure("periodic cell must have a positive determinant".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    pub fn volume(&self) -> f64 {
        det(&self.lattice)
    }

    pub fn cell_lengths(&self) -> Vec3 {
        [norm(self.lattice[0]), norm(self.lattice[1]), norm(self.lattice[2])]
    }

    /// Cell angles α (b,c), β (a,c), γ (a,b) in degrees.
    pub fn cell_angles(&self) -> Vec3 {
        let l = self.lattice;
        let ang = |u: Vec3, v: Vec3| (dot(u, v) / (norm(u) * norm(v))).clamp(-1.0, 1.0).acos().to_degrees();
        [ang(l[1], l[2]), ang(l[0], l[2]), ang(l[0], l[1])]
    }

    /// Distance between the lattice planes spanned by the other two vectors.
    pub fn heights(&self) -> Vec3 {
        let l = self.lattice;
        let v = det(&l).abs();
        [v / norm(cross(l[1], l[2])), v / norm(cross(l[2], l[0])), v / norm(cross(l[0], l[1]))]
    }

    pub fn fractional_positions(&self) -> Option<Vec<Vec3>> {
        let inv = inverse(&self.lattice)?;
        Some(self.positions.iter().map(|&p| cart_to_frac(&inv, p)).collect())
    }

    pub fn composition(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for s in &self.species {
            *out.entry(s.clone()).or_insert(0) += 1;
        }
        out
    }

    /// Alphabetical formula with explicit counts, e.g. `Mo25S50`.
    pub fn formula(&self) -> String {
        self.composition().iter().map(|(s, n)| format!("{s}{n}")).collect()
    }

    /// Copy with every atom shifted by `v`.
    pub fn translated(&self, v: Vec3) -> Self {
        let mut out = self.clone();
        for p in &mut out.positions {
            *p = add(*p, v);
        }
        out
    }

    /// Wrap periodic coordinates into the cell and sort atoms by species, then
    /// fractional coordinates.
    pub fn canonicalize(&mut self) {
        self.canonicalize_with::<()>(&mut Vec::new());
    }

    /// As [`canonicalize`](Self::canonicalize), permuting `tags` alongside
    /// the atoms when it has one entry per atom.
    pub(crate) fn canonicalize_with<T: Clone>(&mut self, tags: &mut Vec<T>) {
        let Some(inv) = inverse(&self.lattice) else {
            return;
        };
        let mut frac: Vec<Vec3> = Vec::with_capacity(self.len());
        for p in self.positions.iter_mut() {
            let mut f = cart_to_frac(&inv, *p);
            for k in 0..3 {
                if !self.pbc[k] {
                    continue;
                }
                let n = (f[k] + 1e-9).floor();
                if n != 0.0 {
                    *p = sub(*p, scale(self.lattice[k], n));
                    f[k] -= n;
                }
            }
            frac.push(f);
        }
        let key = |f: &Vec3| f.map(|x| (x * 1e6).round() as i64);
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.species[a]
                .cmp(&self.species[b])
                .then_with(|| key(&frac[a]).cmp(&key(&frac[b])))
                .then_with(|| {
                    (0..3).map(|k| frac[a][k].total_cmp(&frac[b][k])).find(|o| *o != Ordering::Equal).unwrap_or(Ordering::Equal)
                })
                .then(a.cmp(&b))
        });
        self.species = order.iter().map(|&i| self.species[i].clone()).collect();
        self.positions = order.iter().map(|&i| self.positions[i]).collect();
        if tags.len() == order.len() {
            *tags = order.iter().map(|&i| tags[i].clone()).collect();
        }
    }

    /// Stable content hash over exact float bits.
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::new();
        for row in &self.lattice {
            for v in row {
                buf.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        buf.extend(self.pbc.iter().map(|&b| b as u8));
        for (s, p) in self.species.iter().zip(&self.positions) {
            buf.extend_from_slice(s.as_bytes());
            buf.push(0);
            for v in p {
                buf.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        digest_hex(&buf)
    }
}

/// Pairwise minimum-image geometry. When the cell is degenerate (or `open`
/// is requested) every axis is treated as non-periodic.
pub(crate) struct Geometry<'a> {
    s: &'a AtomicStructure,
    frac: Option<Vec<Vec3>>,
    periodic: [bool; 3],
}

impl<'a> Geometry<'a> {
    pub fn new(s: &'a AtomicStructure, open: bool) -> Self {
        let frac = if open { None } else { s.fractional_positions() };
        let periodic = if frac.is_some() { s.pbc } else { [false; 3] };
        Self { s, frac, periodic }
    }

    fn images(&self) -> Vec<[f64; 3]> {
        let r = |k: usize| if self.periodic[k] { -1..=1 } else { 0..=0 };
        let mut out = Vec::new();
        for i in r(0) {
            for j in r(1) {
                for k in r(2) {
                    out.push([i as f64, j as f64, k as f64]);
                }
            }
        }
        out
    }

    /// Shortest vector from atom `i` to atom `j` (or to a periodic image of
    /// `i` itself when `i == j`; `None` then if nothing is periodic).
    pub fn separation(&self, i: usize, j: usize) -> Option<Separation> {
        let l = &self.s.lattice;
        let Some(frac) = &self.frac else {
            if i == j {
                return None;
            }
            let v = sub(self.s.positions[j], self.s.positions[i]);
            return Some(Separation { vector: v, distance: norm(v) });
        };
        let mut d = sub(frac[j], frac[i]);
        for k in 0..3 {
            if self.periodic[k] {
                d[k] -= d[k].round();
            }
        }
        let mut best: Option<Separation> = None;
        for img in self.images() {
            if i == j && img == [0.0; 3] {
                continue;
            }
            let v = frac_to_cart(l, add(d, img));
            let dist = norm(v);
            if best.is_none_or(|b| dist < b.distance) {
                best = Some(Separation { vector: v, distance: dist });
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hex_cell(a: f64, c: f64) -> Mat3 {
        [[a, 0.0, 0.0], [-a / 2.0, a * 3f64.sqrt() / 2.0, 0.0], [0.0, 0.0, c]]
    }

    #[test]
    fn inverse_roundtrips() {
        let m = hex_cell(2.46, 15.0);
        let inv = inverse(&m).unwrap();
        let p = [0.3, 1.7, 7.5];
        let back = frac_to_cart(&m, cart_to_frac(&inv, p));
        for k in 0..3 {
            assert!((back[k] - p[k]).abs() < 1e-12);
        }
        assert!(inverse(&[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).is_none());
    }

    #[test]
    fn heights_of_hexagonal_cell() {
        let s = AtomicStructure::new(vec![], vec![], hex_cell(2.0, 10.0), [true; 3]).unwrap();
        let h = s.heights();
        assert!((h[0] - 3f64.sqrt()).abs() < 1e-12);
        assert!((h[2] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn minimum_image_crosses_boundary() {
        let s = AtomicStructure::new(
            vec!["C".into(), "C".into()],
            vec![[0.1, 0.0, 0.0], [9.9, 0.0, 0.0]],
            [[10.0, 0.0, 0.0], [0.0, 10.0, 0.0], [0.0, 0.0, 10.0]],
            [true, true, false],
        )
        .unwrap();
        let g = Geometry::new(&s, false);
        assert!((g.separation(0, 1).unwrap().distance - 0.2).abs() < 1e-12);
        assert!((g.separation(0, 0).unwrap().distance - 10.0).abs() < 1e-12);
        assert!((Geometry::new(&s, true).separation(0, 1).unwrap().distance - 9.8).abs() < 1e-12);
    }

    #[test]
    fn canonical_order_and_wrap() {
        let mut s = AtomicStructure::new(
            vec!["S".into(), "Mo".into(), "C".into()],
            vec![[-0.5, 0.0, 0.0], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0]],
            [[4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 4.0]],
            [true; 3],
        )
        .unwrap();
        s.canonicalize();
        assert_eq!(s.species, ["C", "Mo", "S"]);
        assert_eq!(s.positions[2], [3.5, 0.0, 0.0]);
        assert_eq!(s.formula(), "C1Mo1S1");
    }

    #[test]
    fn rejects_bad_input() {
        let cell = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        assert!(AtomicStructure::new(vec!["C".into()], vec![[0.0; 3]], cell, [true; 3]).is_err());
        assert!(AtomicStructure::new(vec!["Qq".into()], vec![[0.0; 3]], cell, [false; 3]).is_err());
        assert!(AtomicStructure::new(vec!["C".into()], vec![[f64::NAN, 0.0, 0.0]], cell, [false; 3]).is_err());
    }
}
