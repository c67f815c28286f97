//! Windowed frequency-domain segmentation for images without a clear lattice.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};
use crate::gmm::fit_gmm;
use crate::ingest::ImageGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqDecomposition {
    pub window: usize,
    pub stride: usize,
    /// Windows per row and per column.
    pub grid: (usize, usize),
    /// Top-left pixel of every window, row-major over the window grid.
    pub origins: Vec<(usize, usize)>,
    /// Radially averaged `ln(1 + power)` per window; radii `1..=window/2`.
    pub spectra: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub k: usize,
    /// Label image at window resolution, row-major `grid.1 × grid.0`.
    pub domain_map: Vec<usize>,
}

impl FreqDecomposition {
    pub fn label_at(&self, wx: usize, wy: usize) -> usize {
        self.domain_map[wy * self.grid.0 + wx]
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect()
}

/// Radially averaged log-power spectrum of one window (DC excluded).
pub fn radial_spectrum(image: &ImageGrid, x0: usize, y0: usize, window: usize) -> Vec<f64> {
    let taper = hann(window);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(window);

    let mut mean = 0.0;
    for y in 0..window {
        for x in 0..window {
            mean += image.at(x0 + x, y0 + y);
        }
    }
    mean /= (window * window) as f64;

    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(window * window);
    for y in 0..window {
        for x in 0..window {
            let v = (image.at(x0 + x, y0 + y) - mean) * taper[x] * taper[y];
            buf.push(Complex::new(v, 0.0));
        }
    }
    for row in buf.chunks_mut(window) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); window];
    for x in 0..window {
        for y in 0..window {
            col[y] = buf[y * window + x];
        }
        fft.process(&mut col);
        for y in 0..window {
            buf[y * window + x] = col[y];
        }
    }

    let half = window / 2;
    let mut sums = vec![0.0; half];
    let mut counts = vec![0usize; half];
    let norm = (window * window) as f64;
    for fy in 0..window {
        let ky = if fy <= half { fy as f64 } else { fy as f64 - window as f64 };
        for fx in 0..window {
            let kx = if fx <= half { fx as f64 } else { fx as f64 - window as f64 };
            let r = (kx * kx + ky * ky).sqrt().round() as usize;
            if r == 0 || r > half {
                continue;
            }
            sums[r - 1] += buf[fy * window + fx].norm_sqr() / norm;
            counts[r - 1] += 1;
        }
    }
    sums.iter().zip(&counts).map(|(s, &c)| (s / c.max(1) as f64).ln_1p()).collect()
}

/// Strength of a two-dimensional lattice in the Fourier transform of `image`.
///
/// The centred square crop (largest power of two, at most 512 px) is tapered
/// and transformed; power is summed over small blocks to suppress speckle and
/// each block is compared with the median block at the same radius. The
/// result is the ratio of the strongest peak whose direction differs by more
/// than 15° from the overall strongest one, so a single set of stripes or
/// wrinkles does not count as a lattice. Near 1–3 for noise-like images.
pub fn lattice_peak_ratio(image: &ImageGrid) -> Result<f64> {
    if image.values.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFiniteImage);
    }
    let side = image.width.min(image.height);
    if side < 16 {
        return Err(AnalysisError::WindowTooLarge { window: 16, width: image.width, height: image.height });
    }
    let n = (1usize << (usize::BITS - 1 - side.leading_zeros())).min(512);
    let (x0, y0) = ((image.width - n) / 2, (image.height - n) / 2);
    let taper = hann(n);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mean = (0..n).flat_map(|y| (0..n).map(move |x| (x, y))).map(|(x, y)| image.at(x0 + x, y0 + y)).sum::<f64>() / (n * n) as f64;
    let mut buf: Vec<Complex<f64>> = (0..n * n)
        .map(|i| Complex::new((image.at(x0 + i % n, y0 + i / n) - mean) * taper[i % n] * taper[i / n], 0.0))
        .collect();
    for row in buf.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for x in 0..n {
        for y in 0..n {
            col[y] = buf[y * n + x];
        }
        fft.process(&mut col);
        for y in 0..n {
            buf[y * n + x] = col[y];
        }
    }

    // whiten by the median power of each one-bin ring, then sum over blocks
    let half = n / 2;
    let bin_radius = |fx: usize, fy: usize| {
        let kx = if fx <= half { fx as f64 } else { fx as f64 - n as f64 };
        let ky = if fy <= half { fy as f64 } else { fy as f64 - n as f64 };
        kx.hypot(ky).round() as usize
    };
    let mut fine: Vec<Vec<f64>> = vec![Vec::new(); n];
    for fy in 0..n {
        for fx in 0..n {
            let r = bin_radius(fx, fy);
            if r < n {
                fine[r].push(buf[fy * n + fx].norm_sqr());
            }
        }
    }
    let total: f64 = buf.iter().map(|c| c.norm_sqr()).sum();
    // floor keeps noiseless synthetic images from dividing leakage by round-off
    let floor = 1e-6 * total / (n * n) as f64;
    let fine_median: Vec<f64> = fine
        .iter_mut()
        .map(|ring| {
            ring.sort_by(f64::total_cmp);
            ring.get(ring.len() / 2).copied().unwrap_or(0.0).max(floor)
        })
        .collect();
    let b = (n / 64).max(2);
    let g = n / b;
    let mut blocks = vec![0.0; g * g];
    for fy in 0..n {
        let sy = (fy + half) % n;
        for fx in 0..n {
            let sx = (fx + half) % n;
            let r = bin_radius(fx, fy);
            let w = if r < n { buf[fy * n + fx].norm_sqr() / fine_median[r] } else { 0.0 };
            blocks[(sy / b) * g + sx / b] += w;
        }
    }
    let centre = g as f64 / 2.0 - 0.5;
    let radius = |i: usize| ((i % g) as f64 - centre).hypot((i / g) as f64 - centre);
    let max_r = g / 2;
    let mut rings: Vec<Vec<f64>> = vec![Vec::new(); max_r + 1];
    for i in 0..g * g {
        let r = radius(i).round() as usize;
        if (2..=max_r).contains(&r) {
            rings[r].push(blocks[i]);
        }
    }
    let medians: Vec<f64> = rings
        .iter_mut()
        .map(|ring| {
            ring.sort_by(f64::total_cmp);
            // whitened noise sums to about b² per block; never divide by less than half that
            if ring.is_empty() { f64::NAN } else { ring[ring.len() / 2].max(0.5 * (b * b) as f64) }
        })
        .collect();
    let mut peaks: Vec<(f64, f64)> = (0..g * g)
        .filter_map(|i| {
            let r = radius(i).round() as usize;
            if !(2..=max_r).contains(&r) || !(medians[r] > 0.0) {
                return None;
            }
            let angle = ((i / g) as f64 - centre).atan2((i % g) as f64 - centre).rem_euclid(std::f64::consts::PI);
            Some((blocks[i] / medians[r], angle))
        })
        .collect();
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    let Some(&(_, first)) = peaks.first() else { return Ok(0.0) };
    let apart = |a: f64| {
        let d = (a - first).abs();
        d.min(std::f64::consts::PI - d) > 15f64.to_radians()
    };
    Ok(peaks.iter().find(|p| apart(p.1)).map_or(0.0, |p| p.0))
}

pub fn spatiofreq_decompose(image: &ImageGrid, window: usize, stride: usize, k: usize, seed: u64) -> Result<FreqDecomposition> {
    if window < 4 || !window.is_power_of_two() || stride == 0 {
        return Err(AnalysisError::InvalidWindow(format!("window {window} must be a power of two ≥ 4, stride {stride} > 0")));
    }
    if window > image.width.min(image.height) {
        return Err(AnalysisError::WindowTooLarge { window, width: image.width, height: image.height });
    }
    if image.values.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFiniteImage);
    }
    let gx = (image.width - window) / stride + 1;
    let gy = (image.height - window) / stride + 1;
    let mut origins = Vec::with_capacity(gx * gy);
    let mut spectra = Vec::with_capacity(gx * gy);
    for wy in 0..gy {
        for wx in 0..gx {
            let (x0, y0) = (wx * stride, wy * stride);
            origins.push((x0, y0));
            spectra.push(radial_spectrum(image, x0, y0, window));
        }
    }
    let dim = window / 2;
    let labels = if k == 1 {
        if spectra.len() < 5 {
            return Err(AnalysisError::TooFewSamples { needed: 5, got: spectra.len() });
        }
        vec![0; spectra.len()]
    } else {
        let flat: Vec<f64> = spectra.iter().flatten().cloned().collect();
        fit_gmm(&flat, dim, k, seed)?.labels
    };
    Ok(FreqDecomposition { window, stride, grid: (gx, gy), origins, spectra, domain_map: labels.clone(), labels, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{disordered_scene, honeycomb_scene, lattice_and_noise_image, noise_image, stripes_image, HoneycombSceneSpec};

    /// Fraction of windows whose label agrees with the half they mostly lie in,
    /// maximised over the two label assignments.
    fn half_accuracy(d: &FreqDecomposition, width: usize) -> f64 {
        let mut agree = 0usize;
        for (i, &(x0, _)) in d.origins.iter().enumerate() {
            let left = x0 + d.window / 2 < width / 2;
            if (d.labels[i] == 0) == left {
                agree += 1;
            }
        }
        let n = d.labels.len();
        agree.max(n - agree) as f64 / n as f64
    }

    #[test]
    fn stripe_periods_separate() {
        let img = stripes_image(256, 256, 8.0, 16.0);
        let d = spatiofreq_decompose(&img, 32, 16, 2, 1).unwrap();
        assert!(half_accuracy(&d, 256) >= 0.9);
        assert!(d.spectra.iter().flatten().all(|v| *v >= 0.0));
    }

    #[test]
    fn lattice_and_noise_separate() {
        let img = lattice_and_noise_image(256, 6.0, 4);
        let d = spatiofreq_decompose(&img, 32, 16, 2, 1).unwrap();
        assert!(half_accuracy(&d, 256) >= 0.9);
    }

    #[test]
    fn single_cluster_on_noise() {
        let img = noise_image(128, 128, 2);
        let d = spatiofreq_decompose(&img, 32, 16, 1, 0).unwrap();
        assert!(d.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn window_checks() {
        let img = noise_image(64, 64, 2);
        assert!(matches!(spatiofreq_decompose(&img, 128, 16, 2, 0), Err(AnalysisError::WindowTooLarge { .. })));
        assert!(matches!(spatiofreq_decompose(&img, 24, 8, 2, 0), Err(AnalysisError::InvalidWindow(_))));
    }

    #[test]
    fn lattice_ratio_separates_crystals_from_noise_and_stripes() {
        let spec = HoneycombSceneSpec { size: 256, ..Default::default() };
        let crystal = lattice_peak_ratio(&honeycomb_scene(&spec).image).unwrap();
        assert!(crystal > 5.0, "crystal ratio {crystal}");
        let noise = lattice_peak_ratio(&noise_image(256, 256, 3)).unwrap();
        assert!(noise < 5.0, "noise ratio {noise}");
        let stripes = lattice_peak_ratio(&stripes_image(256, 256, 8.0, 8.0)).unwrap();
        assert!(stripes < 5.0, "stripe ratio {stripes}");
        for seed in 0..4 {
            let film = lattice_peak_ratio(&disordered_scene(256, seed)).unwrap();
            assert!(film < 5.0, "film ratio {film} (seed {seed})");
        }
    }
}
