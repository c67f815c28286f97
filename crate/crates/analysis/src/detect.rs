//! Atomic-column detection by difference-of-Gaussian filtering.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};
use crate::filters::gaussian_blur;
use crate::ingest::ImageGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Inner (signal) Gaussian width in pixels; roughly the blob sigma.
    pub sigma_min: f64,
    /// Outer (background) Gaussian width in pixels.
    pub sigma_max: f64,
    /// Minimum DoG response as a fraction of the strongest response.
    pub threshold: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self { sigma_min: 2.0, sigma_max: 4.0, threshold: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedAtoms {
    /// Subpixel `(x, y)` coordinates in pixels.
    pub positions: Vec<[f64; 2]>,
    /// Smoothed-image value at each detection.
    pub intensities: Vec<f64>,
    pub responses: Vec<f64>,
    pub detection_params: DetectionParams,
    pub width: usize,
    pub height: usize,
    pub pixel_size: Option<f64>,
}

impl DetectedAtoms {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Build from known coordinates (used for synthetic lattices and tests).
    pub fn from_positions(positions: Vec<[f64; 2]>, width: usize, height: usize) -> Self {
        let n = positions.len();
        Self {
            positions,
            intensities: vec![1.0; n],
            responses: vec![1.0; n],
            detection_params: DetectionParams::default(),
            width,
            height,
            pixel_size: None,
        }
    }
}

/// Parabolic peak offset from three samples, clamped to half a pixel.
#[inline]
fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

pub fn detect_atoms(image: &ImageGrid, params: &DetectionParams) -> Result<DetectedAtoms> {
    if image.values.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFiniteImage);
    }
    if !(params.sigma_min > 0.0 && params.sigma_max > params.sigma_min) {
        return Err(AnalysisError::InvalidArgument(format!(
            "need 0 < sigma_min < sigma_max, got {} and {}",
            params.sigma_min, params.sigma_max
        )));
    }
    let (w, h) = (image.width, image.height);
    let mut out = DetectedAtoms {
        positions: vec![],
        intensities: vec![],
        responses: vec![],
        detection_params: *params,
        width: w,
        height: h,
        pixel_size: image.pixel_size,
    };
    if w < 3 || h < 3 {
        return Ok(out);
    }
    let inner = gaussian_blur(&image.values, w, h, params.sigma_min);
    let outer = gaussian_blur(&image.values, w, h, params.sigma_max);
    let dog: Vec<f64> = inner.iter().zip(&outer).map(|(a, b)| a - b).collect();
    let peak = dog.iter().cloned().fold(0.0f64, f64::max);
    if !(peak > 1e-12) {
        return Ok(out);
    }
    let cut = params.threshold * peak;

    struct Candidate {
        pos: [f64; 2],
        intensity: f64,
        response: f64,
    }
    let mut candidates = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let v = dog[i];
            if v <= cut {
                continue;
            }
            // strict against earlier raster neighbours, non-strict against later ones,
            // so a flat plateau yields exactly one maximum
            let before = [i - w - 1, i - w, i - w + 1, i - 1];
            let after = [i + 1, i + w - 1, i + w, i + w + 1];
            if before.iter().any(|&j| dog[j] >= v) || after.iter().any(|&j| dog[j] > v) {
                continue;
            }
            let dx = parabolic_offset(dog[i - 1], v, dog[i + 1]);
            let dy = parabolic_offset(dog[i - w], v, dog[i + w]);
            candidates.push(Candidate { pos: [x as f64 + dx, y as f64 + dy], intensity: inner[i], response: v });
        }
    }

    // merge detections closer than one pixel, keeping the stronger response
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[b].response.total_cmp(&candidates[a].response).then(a.cmp(&b)));
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut kept = Vec::new();
    for idx in order {
        let c = &candidates[idx];
        let cell = (c.pos[0].floor() as i64, c.pos[1].floor() as i64);
        let clash = (-1..=1).any(|dy| {
            (-1..=1).any(|dx| {
                grid.get(&(cell.0 + dx, cell.1 + dy)).is_some_and(|v| {
                    v.iter().any(|&k: &usize| {
                        let o: &Candidate = &candidates[k];
                        let ddx = o.pos[0] - c.pos[0];
                        let ddy = o.pos[1] - c.pos[1];
                        ddx * ddx + ddy * ddy < 1.0
                    })
                })
            })
        });
        if !clash {
            grid.entry(cell).or_default().push(idx);
            kept.push(idx);
        }
    }
    // report in raster order for stable output
    kept.sort_by(|&a, &b| {
        let (pa, pb) = (candidates[a].pos, candidates[b].pos);
        (pa[1].floor(), pa[0]).partial_cmp(&(pb[1].floor(), pb[0])).unwrap().then(a.cmp(&b))
    });
    for idx in kept {
        let c = &candidates[idx];
        out.positions.push(c.pos);
        out.intensities.push(c.intensity);
        out.responses.push(c.response);
    }
    Ok(out)
}
