//! Synthetic data with known ground truth.
//!
//! These generators back the unit tests, the acceptance scenarios and the
//! CLI demo fixtures. Every generator is seeded and bit-reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::filters::gaussian_blur;
use crate::ingest::{HyperCube, ImageGrid, SpectralUnit};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sum of isotropic Gaussian blobs `(x, y, amplitude)` rendered on a grid.
pub fn render_blobs(width: usize, height: usize, blobs: &[(f64, f64, f64)], sigma: f64) -> Vec<f64> {
    let mut img = vec![0.0; width * height];
    let reach = (4.0 * sigma).ceil() as isize;
    let inv = 1.0 / (2.0 * sigma * sigma);
    for &(bx, by, amp) in blobs {
        let (cx, cy) = (bx.round() as isize, by.round() as isize);
        for y in (cy - reach).max(0)..=(cy + reach).min(height as isize - 1) {
            for x in (cx - reach).max(0)..=(cx + reach).min(width as isize - 1) {
                let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                img[y as usize * width + x as usize] += amp * (-d2 * inv).exp();
            }
        }
    }
    img
}

/// Add white Gaussian noise so that mean(signal²) / noise variance = 10^(snr_db/10).
/// Returns the noise standard deviation used.
pub fn add_noise_snr(values: &mut [f64], snr_db: f64, rng: &mut impl Rng) -> f64 {
    let power = values.iter().map(|v| v * v).sum::<f64>() / values.len().max(1) as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        for v in values.iter_mut() {
            *v += normal.sample(rng);
        }
    }
    sigma
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSite {
    pub pos: [f64; 2],
    /// 0 = A sublattice, 1 = B sublattice
    pub sublattice: usize,
    /// lattice indices (i, j) of the containing cell
    pub cell: (i64, i64),
}

/// Honeycomb sites with bond length `bond` (pixels) filling a `width`×`height`
/// frame, keeping only sites at least `margin` pixels inside.
///
/// Lattice vectors are `a1 = (a, 0)` and `a2 = (a/2, a·√3/2)` with
/// `a = bond·√3`; the B site sits at `(a/2, bond/2)` from the A site.
pub fn honeycomb_sites(width: f64, height: f64, bond: f64, origin: [f64; 2], margin: f64) -> Vec<LatticeSite> {
    let a = bond * 3f64.sqrt();
    let a2y = a * 3f64.sqrt() / 2.0;
    let offsets = [[0.0, 0.0], [a / 2.0, bond / 2.0]];
    let jmax = (height / a2y).ceil() as i64 + 2;
    let imax = (width / a).ceil() as i64 + 2;
    let mut sites = Vec::new();
    for j in -2..=jmax {
        for i in (-jmax - 2)..=imax {
            for (s, off) in offsets.iter().enumerate() {
                let x = origin[0] + i as f64 * a + j as f64 * a / 2.0 + off[0];
                let y = origin[1] + j as f64 * a2y + off[1];
                if x >= margin && y >= margin && x <= width - margin && y <= height - margin {
                    sites.push(LatticeSite { pos: [x, y], sublattice: s, cell: (i, j) });
                }
            }
        }
    }
    sites
}

/// Synthetic two-species honeycomb image with an implanted vacancy line.
#[derive(Debug, Clone)]
pub struct HoneycombScene {
    pub image: ImageGrid,
    /// Present sites with their class (0 = dim, 1 = bright).
    pub atoms: Vec<[f64; 2]>,
    pub classes: Vec<usize>,
    /// Removed sites.
    pub vacancies: Vec<[f64; 2]>,
    pub bond: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct HoneycombSceneSpec {
    pub size: usize,
    pub bond: f64,
    pub blob_sigma: f64,
    pub bright: f64,
    pub dim: f64,
    pub vacancy_line: usize,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for HoneycombSceneSpec {
    fn default() -> Self {
        Self { size: 1024, bond: 12.0, blob_sigma: 2.2, bright: 1.0, dim: 0.55, vacancy_line: 6, snr_db: 15.0, seed: 7 }
    }
}

/// MoS₂-like scene: bright sublattice A (metal), dim sublattice B (chalcogen),
/// with `vacancy_line` consecutive dim sites removed along `a1` near the centre.
pub fn honeycomb_scene(spec: &HoneycombSceneSpec) -> HoneycombScene {
    let mut r = rng(spec.seed);
    let size = spec.size as f64;
    let origin = [r.random_range(0.0..spec.bond), r.random_range(0.0..spec.bond)];
    let sites = honeycomb_sites(size, size, spec.bond, origin, 3.0 * spec.blob_sigma);

    let mut removed = vec![false; sites.len()];
    if spec.vacancy_line > 0 {
        let centre = [size / 2.0, size / 2.0];
        let start = sites
            .iter()
            .enumerate()
            .filter(|(_, s)| s.sublattice == 1)
            .min_by(|(_, a), (_, b)| dist2(a.pos, centre).total_cmp(&dist2(b.pos, centre)))
            .map(|(i, _)| i)
            .expect("scene contains dim sites");
        let (i0, j0) = sites[start].cell;
        for (k, s) in sites.iter().enumerate() {
            if s.sublattice == 1 && s.cell.1 == j0 && s.cell.0 >= i0 && s.cell.0 < i0 + spec.vacancy_line as i64 {
                removed[k] = true;
            }
        }
    }

    let mut atoms = Vec::new();
    let mut classes = Vec::new();
    let mut vacancies = Vec::new();
    let mut blobs = Vec::new();
    for (s, gone) in sites.iter().zip(&removed) {
        if *gone {
            vacancies.push(s.pos);
            continue;
        }
        let class = if s.sublattice == 0 { 1 } else { 0 };
        let amp = if class == 1 { spec.bright } else { spec.dim };
        atoms.push(s.pos);
        classes.push(class);
        blobs.push((s.pos[0], s.pos[1], amp));
    }
    let mut values = render_blobs(spec.size, spec.size, &blobs, spec.blob_sigma);
    add_noise_snr(&mut values, spec.snr_db, &mut r);
    let image = ImageGrid::from_raw(spec.size, spec.size, values, None).expect("finite synthetic image");
    HoneycombScene { image, atoms, classes, vacancies, bond: spec.bond }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Image whose left half holds vertical stripes of period `left_period` and
/// right half of period `right_period`.
pub fn stripes_image(width: usize, height: usize, left_period: f64, right_period: f64) -> ImageGrid {
    let mut v = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let p = if x < width / 2 { left_period } else { right_period };
            v[y * width + x] = 0.5 + 0.5 * (2.0 * std::f64::consts::PI * x as f64 / p).cos();
        }
    }
    ImageGrid::from_raw(width, height, v, None).expect("finite")
}

/// Crystalline lattice on the left half, white noise on the right half.
pub fn lattice_and_noise_image(size: usize, bond: f64, seed: u64) -> ImageGrid {
    let mut r = rng(seed);
    let sites = honeycomb_sites(size as f64, size as f64, bond, [3.0, 3.0], 0.0);
    let blobs: Vec<_> = sites.iter().map(|s| (s.pos[0], s.pos[1], 1.0)).collect();
    let mut v = render_blobs(size, size, &blobs, bond / 5.0);
    let normal = Normal::new(0.0, 0.05).unwrap();
    for y in 0..size {
        for x in 0..size {
            let i = y * size + x;
            if x >= size / 2 {
                v[i] = r.random_range(0.0..1.0);
            } else {
                v[i] += normal.sample(&mut r);
            }
        }
    }
    ImageGrid::from_raw(size, size, v, None).expect("finite")
}

/// Lattice-free film: correlated noise at two length scales with a few
/// irregular bright patches, as in maps of disordered carbon films.
pub fn disordered_scene(size: usize, seed: u64) -> ImageGrid {
    let mut r = rng(seed);
    let mut field = |sigma: f64| {
        let v: Vec<f64> = (0..size * size).map(|_| r.random_range(-1.0..1.0)).collect();
        let v = gaussian_blur(&v, size, size, sigma);
        let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-12);
        v.into_iter().map(|x| x / scale).collect::<Vec<_>>()
    };
    let fine = field(2.0);
    let coarse = field(size as f64 / 24.0);
    let blobs: Vec<(f64, f64, f64)> = (0..6)
        .map(|_| (r.random_range(0.0..size as f64), r.random_range(0.0..size as f64), r.random_range(0.5..1.0)))
        .collect();
    let patches = render_blobs(size, size, &blobs, size as f64 / 20.0);
    let v = (0..size * size).map(|i| 0.3 * fine[i] + 0.5 * coarse[i] + patches[i]).collect();
    ImageGrid::from_raw(size, size, v, None).expect("finite")
}

/// Uniform white noise image.
pub fn noise_image(width: usize, height: usize, seed: u64) -> ImageGrid {
    let mut r = rng(seed);
    let v = (0..width * height).map(|_| r.random_range(0.0..1.0)).collect();
    ImageGrid::from_raw(width, height, v, None).expect("finite")
}

/// Ground-truth factors of a synthetic hyperspectral cube.
#[derive(Debug, Clone)]
pub struct UnmixScene {
    pub cube: HyperCube,
    /// k × nbands, each row with unit maximum
    pub endmembers: Vec<Vec<f64>>,
    /// pixels × k, rows on the simplex
    pub abundances: Vec<Vec<f64>>,
}

/// `k` Gaussian-peak endmembers mixed by smooth abundance fields that are
/// nearly pure around `k` seeds, plus white noise at `snr_db`.
pub fn unmix_scene(nx: usize, ny: usize, nbands: usize, k: usize, snr_db: Option<f64>, seed: u64) -> UnmixScene {
    let mut r = rng(seed);
    let wavelengths: Vec<f64> = (0..nbands).map(|b| 500.0 + b as f64).collect();
    let endmembers: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let centre = (c as f64 + 1.0) / (k as f64 + 1.0) * nbands as f64;
            let width = nbands as f64 / (3.0 * k as f64 + 2.0);
            (0..nbands).map(|b| (-((b as f64 - centre) / width).powi(2) / 2.0).exp()).collect()
        })
        .collect();
    let seeds: Vec<[f64; 2]> = (0..k)
        .map(|_| [r.random_range(0.15..0.85) * nx as f64, r.random_range(0.15..0.85) * ny as f64])
        .collect();
    let spread = (nx.max(ny) as f64) / 5.0;
    let mut abundances = Vec::with_capacity(nx * ny);
    for y in 0..ny {
        for x in 0..nx {
            let mut w: Vec<f64> = seeds
                .iter()
                .map(|s| (-dist2([x as f64, y as f64], *s) / (2.0 * spread * spread)).exp().powi(3) + 1e-6)
                .collect();
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= sum);
            abundances.push(w);
        }
    }
    let mut values = Vec::with_capacity(nx * ny * nbands);
    for a in &abundances {
        for b in 0..nbands {
            values.push((0..k).map(|c| a[c] * endmembers[c][b]).sum::<f64>());
        }
    }
    if let Some(snr) = snr_db {
        add_noise_snr(&mut values, snr, &mut r);
        values.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    let cube = HyperCube::new(nx, ny, wavelengths, SpectralUnit::Nanometer, values).expect("valid synthetic cube");
    UnmixScene { cube, endmembers, abundances }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn honeycomb_bonds_have_the_requested_length() {
        let sites = honeycomb_sites(100.0, 100.0, 10.0, [5.0, 5.0], 0.0);
        let a = sites.iter().find(|s| s.sublattice == 0).unwrap();
        let nearest = sites
            .iter()
            .filter(|s| s.pos != a.pos)
            .map(|s| dist2(s.pos, a.pos).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!((nearest - 10.0).abs() < 1e-9);
    }

    #[test]
    fn scene_removes_the_requested_vacancies() {
        let spec = HoneycombSceneSpec { size: 256, vacancy_line: 6, ..Default::default() };
        let scene = honeycomb_scene(&spec);
        assert_eq!(scene.vacancies.len(), 6);
        assert_eq!(scene.atoms.len(), scene.classes.len());
        // consecutive vacancies are one lattice constant apart along x
        let a = spec.bond * 3f64.sqrt();
        for w in scene.vacancies.windows(2) {
            assert!((dist2(w[0], w[1]).sqrt() - a).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_hits_the_requested_snr() {
        let mut v = vec![1.0; 100_000];
        let clean = v.clone();
        let sigma = add_noise_snr(&mut v, 20.0, &mut rng(1));
        assert!((sigma - 0.1).abs() < 1e-12);
        let var = v.iter().zip(&clean).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / v.len() as f64;
        assert!((var.sqrt() - 0.1).abs() < 0.002);
    }
}
