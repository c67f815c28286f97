use std::collections::BTreeSet;

use labloop_analysis::plot::Canvas;
use serde::Serialize;

use crate::elements::{covalent_radius, species_color};
use crate::error::{Result, StructError};
use crate::structure::{dot, AtomicStructure, Vec3};

pub const MAX_RENDER_ATOMS: usize = 10_000;
pub const VIEW_SIZE: usize = 320;
const PAD: f64 = 24.0;
/// Smallest extent (Å) mapped onto the canvas, so single atoms are not huge.
const MIN_EXTENT: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Disc {
    pub atom: usize,
    pub species: String,
    /// Pixel centre; y grows downwards.
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderView {
    pub name: String,
    pub width: usize,
    pub height: usize,
    /// Discs in drawing order (far to near).
    pub discs: Vec<Disc>,
    /// Projected extent in Å (horizontal, vertical).
    pub extent: [f64; 2],
    #[serde(skip)]
    pub png: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderSet {
    pub views: Vec<RenderView>,
    pub legend: Vec<(String, [u8; 3])>,
}

/// (name, screen-right, screen-up, towards-viewer)
fn view_axes() -> [(&'static str, Vec3, Vec3, Vec3); 4] {
    let (az, el) = (30f64.to_radians(), 30f64.to_radians());
    let right = [az.cos(), az.sin(), 0.0];
    let toward = [-az.sin() * el.cos(), az.cos() * el.cos(), el.sin()];
    let up = [az.sin() * el.sin(), -az.cos() * el.sin(), el.cos()];
    [
        ("x", [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]),
        ("y", [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]),
        ("z", [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
        ("oblique", right, up, toward),
    ]
}

/// Orthographic projections along +x, +y, +z and one oblique direction.
pub fn render_views(s: &AtomicStructure) -> Result<RenderSet> {
    if s.len() > MAX_RENDER_ATOMS {
        return Err(StructError::TooManyAtoms(s.len()));
    }
    let legend: Vec<(String, [u8; 3])> = s.composition().keys().map(|sp| (sp.clone(), species_color(sp))).collect();
    let views = view_axes().iter().map(|&(name, r, u, t)| render_one(s, name, r, u, t, &legend)).collect();
    Ok(RenderSet { views, legend })
}

fn render_one(s: &AtomicStructure, name: &str, right: Vec3, up: Vec3, toward: Vec3, legend: &[(String, [u8; 3])]) -> RenderView {
    let proj: Vec<(f64, f64, f64)> = s.positions.iter().map(|&p| (dot(p, right), dot(p, up), dot(p, toward))).collect();
    let bounds = |f: fn(&(f64, f64, f64)) -> f64| {
        proj.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (u0, u1) = if proj.is_empty() { (0.0, 0.0) } else { bounds(|p| p.0) };
    let (v0, v1) = if proj.is_empty() { (0.0, 0.0) } else { bounds(|p| p.1) };
    let extent = [u1 - u0, v1 - v0];
    let scale = (VIEW_SIZE as f64 - 2.0 * PAD) / extent[0].max(extent[1]).max(MIN_EXTENT);
    let (cu, cv) = ((u0 + u1) / 2.0, (v0 + v1) / 2.0);
    let half = VIEW_SIZE as f64 / 2.0;

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| proj[a].2.total_cmp(&proj[b].2).then(a.cmp(&b)));
    let discs: Vec<Disc> = order
        .into_iter()
        .map(|i| Disc {
            atom: i,
            species: s.species[i].clone(),
            x: half + (proj[i].0 - cu) * scale,
            y: half - (proj[i].1 - cv) * scale,
            radius: (0.5 * covalent_radius(&s.species[i]).unwrap_or(1.0) * scale).clamp(1.5, 40.0),
        })
        .collect();

    let mut canvas = Canvas::new(VIEW_SIZE, VIEW_SIZE, [255, 255, 255]);
    for d in &discs {
        canvas.disc(d.x, d.y, d.radius, species_color(&d.species));
    }
    for (k, (_, c)) in legend.iter().enumerate() {
        let y = 4 + 12 * k as i64;
        canvas.fill_rect(4, y, 13, y + 9, *c);
    }
    RenderView { name: name.into(), width: VIEW_SIZE, height: VIEW_SIZE, discs, extent, png: canvas.to_png() }
}

impl RenderSet {
    /// Structured text stand-in for the images, for text-only backends.
    pub fn digest(&self, s: &AtomicStructure) -> String {
        let [a, b, c] = s.cell_lengths();
        let [al, be, ga] = s.cell_angles();
        let pbc: String = s.pbc.iter().map(|&p| if p { 'T' } else { 'F' }).collect();
        let mut out = format!(
            "composition {} ({} atoms); cell a={a:.3} b={b:.3} c={c:.3} Å, angles {al:.1} {be:.1} {ga:.1}°; periodic {pbc}\n",
            s.formula(),
            s.len()
        );
        out.push_str(&format!(
            "legend: {}\n",
            self.legend.iter().map(|(sp, c)| format!("{sp}=#{:02x}{:02x}{:02x}", c[0], c[1], c[2])).collect::<Vec<_>>().join(" ")
        ));
        for v in &self.views {
            let columns: BTreeSet<(i64, i64)> =
                v.discs.iter().map(|d| ((d.x * 2.0).round() as i64, (d.y * 2.0).round() as i64)).collect();
            out.push_str(&format!(
                "view {}: {} discs in {} distinct columns, extent {:.2} × {:.2} Å\n",
                v.name,
                v.discs.len(),
                columns.len(),
                v.extent[0],
                v.extent[1]
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_atom_is_centred_in_every_view() {
        let s = AtomicStructure::new(vec!["C".into()], vec![[0.0; 3]], [[5.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 5.0]], [false; 3])
            .unwrap();
        let r = render_views(&s).unwrap();
        assert_eq!(r.views.len(), 4);
        for v in &r.views {
            assert_eq!(v.discs.len(), 1);
            assert_eq!((v.discs[0].x, v.discs[0].y), (VIEW_SIZE as f64 / 2.0, VIEW_SIZE as f64 / 2.0));
            assert_eq!(&v.png[1..4], b"PNG");
        }
    }
}
