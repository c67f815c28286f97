use serde::{Deserialize, Serialize};

use crate::detect::DetectedAtoms;
use crate::error::{AnalysisError, Result};
use crate::spatial::PointIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Left edge of the first bin.
    pub start: f64,
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn center(&self, bin: usize) -> f64 {
        self.start + (bin as f64 + 0.5) * self.bin_width
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborStats {
    /// First-neighbour distance of every atom, in pixels.
    pub nn_distances: Vec<f64>,
    pub nn_distances_nm: Option<Vec<f64>>,
    pub nn_index: Vec<usize>,
    pub histogram: Histogram,
    /// Centre of the tallest histogram bin, in pixels.
    pub modal_distance: f64,
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Histogram with Freedman–Diaconis bin width `2·IQR·n^(-1/3)`. Data with
/// zero spread falls into a single bin.
pub fn freedman_diaconis(values: &[f64]) -> Histogram {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let width = 2.0 * iqr * (values.len() as f64).powf(-1.0 / 3.0);
    let span = max - min;
    if !(width > 0.0) || !(span > 0.0) {
        let w = if span > 0.0 { span } else { 1e-9_f64.max(min.abs() * 1e-9) };
        return Histogram { start: min - if span > 0.0 { 0.0 } else { w / 2.0 }, bin_width: w, counts: vec![values.len()] };
    }
    let nbins = ((span / width).ceil() as usize).clamp(1, 10_000);
    let width = span / nbins as f64;
    let mut counts = vec![0; nbins];
    for v in values {
        let b = (((v - min) / width).floor() as usize).min(nbins - 1);
        counts[b] += 1;
    }
    Histogram { start: min, bin_width: width, counts }
}

pub fn neighbor_stats(atoms: &DetectedAtoms, pixel_size: Option<f64>) -> Result<NeighborStats> {
    neighbor_stats_of(&atoms.positions, pixel_size.or(atoms.pixel_size))
}

/// Exact first-neighbour statistics of a point set (pixels).
pub fn neighbor_stats_of(points: &[[f64; 2]], pixel_size: Option<f64>) -> Result<NeighborStats> {
    if points.len() < 2 {
        return Err(AnalysisError::TooFewAtoms { needed: 2, got: points.len() });
    }
    let index = PointIndex::new(points);
    let mut nn_distances = Vec::with_capacity(points.len());
    let mut nn_index = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let (d, j) = index.nearest(*p, 1, Some(i))[0];
        nn_distances.push(d);
        nn_index.push(j);
    }
    let histogram = freedman_diaconis(&nn_distances);
    let tallest = histogram
        .counts
        .iter()
        .enumerate()
        .fold((0, 0), |best, (i, &c)| if c > best.1 { (i, c) } else { best })
        .0;
    let modal_distance = histogram.center(tallest);
    let nn_distances_nm = pixel_size.map(|s| nn_distances.iter().map(|d| d * s).collect());
    Ok(NeighborStats { nn_distances, nn_distances_nm, nn_index, histogram, modal_distance })
}
