//! Non-negative matrix factorisation for hyperspectral unmixing.
//!
//! The cube is viewed as an `n × b` matrix `X` (pixels × bands) and factored
//! as `X ≈ W·H` with abundances `W` (`n × k`) and endmembers `H` (`k × b`).
//! Initialisation is the non-negative double SVD with zeros replaced by small
//! seeded random values; refinement uses multiplicative updates.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};
use crate::ingest::HyperCube;
use crate::synthetic::rng;

const MAX_ITER: usize = 2000;
const REL_TOL: f64 = 1e-6;
const EPS: f64 = 1e-16;
const MAX_INNER: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmixResult {
    pub k: usize,
    /// `k × nbands`, each row scaled to unit maximum.
    pub endmembers: Vec<Vec<f64>>,
    /// `pixels × k`, row-major over the image.
    pub abundances: Vec<Vec<f64>>,
    /// `‖X − WH‖_F / ‖X‖_F` after initialisation and after each iteration.
    pub reconstruction_error_trace: Vec<f64>,
    pub iterations: usize,
}

impl UnmixResult {
    pub fn final_error(&self) -> f64 {
        *self.reconstruction_error_trace.last().expect("trace has the initial error")
    }

    /// Abundance image of one component, row-major `ny × nx`.
    pub fn abundance_map(&self, component: usize) -> Vec<f64> {
        self.abundances.iter().map(|row| row[component]).collect()
    }
}

/// Dense row-major matrix helpers; kept local so the update order is fixed.
struct Mat {
    rows: usize,
    cols: usize,
    v: Vec<f64>,
}

impl Mat {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, v: vec![0.0; rows * cols] }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.v[r * self.cols + c]
    }
}

/// `Aᵀ·B` for `A: n×p`, `B: n×q`.
fn at_b(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.cols, b.cols);
    for r in 0..a.rows {
        let ar = &a.v[r * a.cols..(r + 1) * a.cols];
        let br = &b.v[r * b.cols..(r + 1) * b.cols];
        for (i, &x) in ar.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let o = &mut out.v[i * b.cols..(i + 1) * b.cols];
            for (oj, &y) in o.iter_mut().zip(br) {
                *oj += x * y;
            }
        }
    }
    out
}

/// `A·Bᵀ` for `A: n×p`, `B: q×p`.
fn a_bt(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.rows, b.rows);
    for r in 0..a.rows {
        let ar = &a.v[r * a.cols..(r + 1) * a.cols];
        for q in 0..b.rows {
            let br = &b.v[q * b.cols..(q + 1) * b.cols];
            out.v[r * b.rows + q] = ar.iter().zip(br).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `A·B` for small `A: n×k`, `B: k×q`.
fn a_b(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        let o = &mut out.v[r * b.cols..(r + 1) * b.cols];
        for i in 0..a.cols {
            let x = a.at(r, i);
            if x == 0.0 {
                continue;
            }
            for (oj, &y) in o.iter_mut().zip(&b.v[i * b.cols..(i + 1) * b.cols]) {
                *oj += x * y;
            }
        }
    }
    out
}

fn relative_error(x: &Mat, w: &Mat, h: &Mat, x_norm: f64) -> f64 {
    let k = w.cols;
    let b = h.cols;
    let mut sum = 0.0;
    let mut row = vec![0.0; b];
    for r in 0..x.rows {
        row.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..k {
            let wv = w.v[r * k + i];
            if wv == 0.0 {
                continue;
            }
            for (o, &hv) in row.iter_mut().zip(&h.v[i * b..(i + 1) * b]) {
                *o += wv * hv;
            }
        }
        for (o, &xv) in row.iter().zip(&x.v[r * b..(r + 1) * b]) {
            sum += (xv - o) * (xv - o);
        }
    }
    sum.sqrt() / x_norm
}

/// Up to `max_steps` multiplicative updates of `f` with a fixed numerator,
/// stopping once a step changes `f` by less than a tenth of the first step.
fn inner_updates(f: &mut Mat, numer: &Mat, denom_of: impl Fn(&Mat) -> Mat, max_steps: usize) {
    let mut first = None;
    for _ in 0..max_steps.max(1) {
        let denom = denom_of(f);
        let mut delta = 0.0;
        for ((v, num), den) in f.v.iter_mut().zip(&numer.v).zip(&denom.v) {
            let nv = *v * (num / (den + EPS));
            delta += (nv - *v) * (nv - *v);
            *v = nv;
        }
        match first {
            None => first = Some(delta),
            Some(d0) if delta <= 0.01 * d0 => break,
            _ => {}
        }
    }
}

fn nndsvdar(x: &Mat, k: usize, seed: u64) -> (Mat, Mat) {
    let (n, b) = (x.rows, x.cols);
    let xtx = at_b(x, x);
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(b, b, &xtx.v));
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));

    let mut w = Mat::zeros(n, k);
    let mut h = Mat::zeros(k, b);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    for (j, &e) in order.iter().take(k).enumerate() {
        let s = eig.eigenvalues[e].max(0.0).sqrt();
        if s <= 0.0 {
            continue;
        }
        let v: Vec<f64> = (0..b).map(|i| eig.eigenvectors[(i, e)]).collect();
        let u: Vec<f64> = (0..n)
            .map(|r| x.v[r * b..(r + 1) * b].iter().zip(&v).map(|(a, c)| a * c).sum::<f64>() / s)
            .collect();
        let (uu, vv, scale) = if j == 0 {
            let uu: Vec<f64> = u.iter().map(|a| a.abs()).collect();
            let vv: Vec<f64> = v.iter().map(|a| a.abs()).collect();
            (uu, vv, s)
        } else {
            let up: Vec<f64> = u.iter().map(|a| a.max(0.0)).collect();
            let un: Vec<f64> = u.iter().map(|a| (-a).max(0.0)).collect();
            let vp: Vec<f64> = v.iter().map(|a| a.max(0.0)).collect();
            let vn: Vec<f64> = v.iter().map(|a| (-a).max(0.0)).collect();
            let (nup, nvp, nun, nvn) = (norm(&up), norm(&vp), norm(&un), norm(&vn));
            let (mp, mn) = (nup * nvp, nun * nvn);
            if mp >= mn {
                (up.iter().map(|a| a / nup.max(EPS)).collect(), vp.iter().map(|a| a / nvp.max(EPS)).collect(), s * mp)
            } else {
                (un.iter().map(|a| a / nun.max(EPS)).collect(), vn.iter().map(|a| a / nvn.max(EPS)).collect(), s * mn)
            }
        };
        let f = scale.sqrt();
        let (nu, nv) = if j == 0 { (norm(&uu).max(EPS), norm(&vv).max(EPS)) } else { (1.0, 1.0) };
        for r in 0..n {
            w.v[r * k + j] = f * uu[r] / nu;
        }
        for i in 0..b {
            h.v[j * b + i] = f * vv[i] / nv;
        }
    }

    let mean = x.v.iter().sum::<f64>() / x.v.len() as f64;
    let mut r = rng(seed);
    for v in w.v.iter_mut().chain(h.v.iter_mut()) {
        if *v == 0.0 {
            *v = r.random_range(0.0..1.0) * mean / 100.0;
        }
    }
    (w, h)
}

pub fn unmix(cube: &HyperCube, k: usize, seed: u64) -> Result<UnmixResult> {
    unmix_observed(cube, k, seed, |_, _, _| {})
}

/// As [`unmix`], calling `observe(iteration, abundances, endmembers)` with the
/// raw row-major factors after initialisation (iteration 0) and every update.
pub fn unmix_observed(
    cube: &HyperCube,
    k: usize,
    seed: u64,
    mut observe: impl FnMut(usize, &[f64], &[f64]),
) -> Result<UnmixResult> {
    if k == 0 || k > cube.nbands {
        return Err(AnalysisError::InvalidArgument(format!("k = {k} must be in 1..={}", cube.nbands)));
    }
    if cube.pixels() < k {
        return Err(AnalysisError::TooFewSamples { needed: k, got: cube.pixels() });
    }
    let x = Mat { rows: cube.pixels(), cols: cube.nbands, v: cube.values.clone() };
    let x_norm = x.v.iter().map(|v| v * v).sum::<f64>().sqrt();
    if x_norm == 0.0 {
        return Err(AnalysisError::InvalidArgument("cube is identically zero".into()));
    }

    let (mut w, mut h) = nndsvdar(&x, k, seed);
    observe(0, &w.v, &h.v);
    let mut trace = vec![relative_error(&x, &w, &h, x_norm)];
    let mut iterations = 0;
    let (n, b) = (x.rows, x.cols);
    // inner repetitions bounded by the cost ratio of the shared products
    let inner_h = (1 + (n * b) / (b * k + n * k).max(1)).min(MAX_INNER);
    let inner_w = (1 + (n * b) / (n * k + b * k).max(1)).min(MAX_INNER);
    for it in 1..=MAX_ITER {
        // H ← H ∘ (WᵀX) / (WᵀW·H), repeated while cheap relative to forming WᵀX
        let wtx = at_b(&w, &x);
        let wtw = at_b(&w, &w);
        inner_updates(&mut h, &wtx, |h| a_b(&wtw, h), inner_h);
        // W ← W ∘ (XHᵀ) / (W·HHᵀ)
        let xht = a_bt(&x, &h);
        let hht = a_bt(&h, &h);
        inner_updates(&mut w, &xht, |w| a_b(w, &hht), inner_w);
        observe(it, &w.v, &h.v);
        let err = relative_error(&x, &w, &h, x_norm);
        let prev = *trace.last().unwrap();
        trace.push(err);
        iterations = it;
        if (prev - err).abs() <= REL_TOL * prev.max(f64::MIN_POSITIVE) {
            break;
        }
    }

    let b = cube.nbands;
    let mut endmembers = Vec::with_capacity(k);
    let mut scales = Vec::with_capacity(k);
    for j in 0..k {
        let row = &h.v[j * b..(j + 1) * b];
        let m = row.iter().cloned().fold(0.0, f64::max);
        let s = if m > 0.0 { m } else { 1.0 };
        scales.push(s);
        endmembers.push(row.iter().map(|v| v / s).collect());
    }
    let abundances = (0..w.rows).map(|r| (0..k).map(|j| w.at(r, j) * scales[j]).collect()).collect();
    Ok(UnmixResult { k, endmembers, abundances, reconstruction_error_trace: trace, iterations })
}

/// Smallest `k ≤ max_k` whose relative reconstruction error is below `target`
/// (default heuristic uses 0.05); falls back to `max_k`.
pub fn choose_k(cube: &HyperCube, max_k: usize, target: f64, seed: u64) -> Result<(usize, UnmixResult)> {
    let max_k = max_k.min(cube.nbands).max(1);
    let mut last = None;
    for k in 1..=max_k {
        let r = unmix(cube, k, seed)?;
        if r.final_error() < target {
            return Ok((k, r));
        }
        last = Some((k, r));
    }
    Ok(last.expect("max_k ≥ 1"))
}

/// Angle between two spectra in degrees.
pub fn spectral_angle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}
