//! Diagonal-covariance Gaussian mixture models fitted by EM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};

const MAX_ITER: usize = 500;
const TOL: f64 = 1e-8;
const MAX_RESTARTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub k: usize,
    pub dim: usize,
    /// Components are ordered by ascending mean (lexicographic over dimensions).
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub labels: Vec<usize>,
    /// Mean per-sample log-likelihood after each EM iteration.
    pub log_likelihood_trace: Vec<f64>,
    pub restarts: usize,
}

/// Row-major `n × dim` view over samples.
#[derive(Clone, Copy)]
struct Samples<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> Samples<'a> {
    fn n(&self) -> usize {
        self.data.len() / self.dim
    }

    fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Fit a 1-D mixture.
pub fn fit_gmm_1d(samples: &[f64], k: usize, seed: u64) -> Result<GmmFit> {
    fit_gmm(samples, 1, k, seed)
}

/// Fit a `k`-component mixture to `samples` (row-major, `dim` columns).
///
/// Initialization is greedy k-means++ driven by a ChaCha stream seeded from
/// `seed`; EM runs until the mean log-likelihood gain drops below 1e-8 or 500
/// iterations. A component whose weight falls below `1/(10n)` triggers a
/// reseeded restart, up to three times.
pub fn fit_gmm(samples: &[f64], dim: usize, k: usize, seed: u64) -> Result<GmmFit> {
    if dim == 0 || samples.len() % dim != 0 {
        return Err(AnalysisError::InvalidArgument(format!("{} values do not form rows of {dim}", samples.len())));
    }
    if k == 0 {
        return Err(AnalysisError::InvalidArgument("k must be at least 1".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFiniteData("mixture samples".into()));
    }
    let s = Samples { data: samples, dim };
    let n = s.n();
    if n < 5 * k {
        return Err(AnalysisError::TooFewSamples { needed: 5 * k, got: n });
    }
    let floor = variance_floor(s);
    for restart in 0..=MAX_RESTARTS {
        let attempt_seed = seed.wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed);
        if let Some(mut fit) = run_em(s, k, &floor, &mut rng) {
            fit.restarts = restart;
            return Ok(fit);
        }
    }
    Err(AnalysisError::DegenerateComponent { restarts: MAX_RESTARTS })
}

fn variance_floor(s: Samples) -> Vec<f64> {
    let n = s.n() as f64;
    (0..s.dim)
        .map(|d| {
            let mean = (0..s.n()).map(|i| s.row(i)[d]).sum::<f64>() / n;
            let var = (0..s.n()).map(|i| (s.row(i)[d] - mean).powi(2)).sum::<f64>() / n;
            (1e-6 * var).max(1e-12)
        })
        .collect()
}

fn kmeans_pp(s: Samples, k: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Vec<f64>>> {
    let n = s.n();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centers = vec![s.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(s.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let target = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, v) in d2.iter().enumerate() {
                acc += v;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            let cand = s.row(pick);
            let new_d2: Vec<f64> = (0..n).map(|i| d2[i].min(sq_dist(s.row(i), cand))).collect();
            let pot: f64 = new_d2.iter().sum();
            if best.as_ref().is_none_or(|b| pot < b.0) {
                best = Some((pot, pick, new_d2));
            }
        }
        let (_, pick, new_d2) = best.expect("at least one trial");
        if d2[pick] == 0.0 {
            return None;
        }
        centers.push(s.row(pick).to_vec());
        d2 = new_d2;
    }
    Some(centers)
}

struct Params {
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// Weighted M-step from an `n × k` responsibility matrix.
fn m_step(s: Samples, resp: &[f64], k: usize, floor: &[f64]) -> Params {
    let n = s.n();
    let dim = s.dim;
    let mut nk = vec![0.0; k];
    let mut means = vec![vec![0.0; dim]; k];
    for i in 0..n {
        let x = s.row(i);
        for c in 0..k {
            let r = resp[i * k + c];
            nk[c] += r;
            for d in 0..dim {
                means[c][d] += r * x[d];
            }
        }
    }
    for c in 0..k {
        if nk[c] > 0.0 {
            means[c].iter_mut().for_each(|m| *m /= nk[c]);
        }
    }
    let mut vars = vec![vec![0.0; dim]; k];
    for i in 0..n {
        let x = s.row(i);
        for c in 0..k {
            let r = resp[i * k + c];
            for d in 0..dim {
                vars[c][d] += r * (x[d] - means[c][d]).powi(2);
            }
        }
    }
    for c in 0..k {
        for d in 0..dim {
            let v = if nk[c] > 0.0 { vars[c][d] / nk[c] } else { 0.0 };
            vars[c][d] = v.max(floor[d]);
        }
    }
    let weights = nk.iter().map(|v| v / n as f64).collect();
    Params { means, vars, weights }
}

/// E-step: fills `resp` and returns the mean log-likelihood.
fn e_step(s: Samples, p: &Params, resp: &mut [f64]) -> f64 {
    let k = p.weights.len();
    let mut total = 0.0;
    let consts: Vec<f64> = (0..k)
        .map(|c| {
            p.weights[c].ln()
                - 0.5 * p.vars[c].iter().map(|v| (2.0 * std::f64::consts::PI * v).ln()).sum::<f64>()
        })
        .collect();
    let mut logp = vec![0.0; k];
    for i in 0..s.n() {
        let x = s.row(i);
        for c in 0..k {
            let q: f64 = x
                .iter()
                .zip(&p.means[c])
                .zip(&p.vars[c])
                .map(|((xv, m), v)| (xv - m) * (xv - m) / v)
                .sum();
            logp[c] = consts[c] - 0.5 * q;
        }
        let lse = log_sum_exp(&logp);
        total += lse;
        for c in 0..k {
            resp[i * k + c] = (logp[c] - lse).exp();
        }
    }
    total / s.n() as f64
}

fn run_em(s: Samples, k: usize, floor: &[f64], rng: &mut ChaCha8Rng) -> Option<GmmFit> {
    let n = s.n();
    let centers = kmeans_pp(s, k, rng)?;
    let mut resp = vec![0.0; n * k];
    for i in 0..n {
        let x = s.row(i);
        let best = (0..k)
            .min_by(|&a, &b| sq_dist(x, &centers[a]).total_cmp(&sq_dist(x, &centers[b])))
            .unwrap();
        resp[i * k + best] = 1.0;
    }
    let min_weight = 1.0 / (10.0 * n as f64);
    let mut params = m_step(s, &resp, k, floor);
    let mut trace = Vec::new();
    for _ in 0..MAX_ITER {
        if params.weights.iter().any(|w| *w < min_weight) {
            return None;
        }
        let ll = e_step(s, &params, &mut resp);
        let converged = trace.last().is_some_and(|prev: &f64| ll - prev < TOL);
        trace.push(ll);
        if converged {
            break;
        }
        params = m_step(s, &resp, k, floor);
    }
    if params.weights.iter().any(|w| *w < min_weight) {
        return None;
    }

    // canonical component order: ascending means
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        params.means[a]
            .iter()
            .zip(&params.means[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let means: Vec<Vec<f64>> = order.iter().map(|&c| params.means[c].clone()).collect();
    let variances: Vec<Vec<f64>> = order.iter().map(|&c| params.vars[c].clone()).collect();
    let weights: Vec<f64> = order.iter().map(|&c| params.weights[c]).collect();
    let mut fit = GmmFit {
        k,
        dim: s.dim,
        means,
        variances,
        weights,
        labels: Vec::new(),
        log_likelihood_trace: trace,
        restarts: 0,
    };
    fit.labels = fit.predict(s.data);
    Some(fit)
}

impl GmmFit {
    /// Posterior component probabilities, row-major `n × k`.
    pub fn responsibilities(&self, samples: &[f64]) -> Vec<f64> {
        let s = Samples { data: samples, dim: self.dim };
        let p = Params { means: self.means.clone(), vars: self.variances.clone(), weights: self.weights.clone() };
        let mut resp = vec![0.0; s.n() * self.k];
        e_step(s, &p, &mut resp);
        resp
    }

    /// Argmax-responsibility labels.
    pub fn predict(&self, samples: &[f64]) -> Vec<usize> {
        let resp = self.responsibilities(samples);
        resp.chunks_exact(self.k)
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (c, v)| if *v > best.1 { (c, *v) } else { best })
                    .0
            })
            .collect()
    }

    /// Population of each component under `labels`.
    pub fn populations(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn two_class_samples(seed: u64) -> (Vec<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hi = Normal::new(0.9, 0.02).unwrap();
        let lo = Normal::new(0.5, 0.02).unwrap();
        let mut x = Vec::new();
        let mut truth = Vec::new();
        for i in 0..1000 {
            if i % 2 == 0 {
                x.push(hi.sample(&mut rng));
                truth.push(1);
            } else {
                x.push(lo.sample(&mut rng));
                truth.push(0);
            }
        }
        (x, truth)
    }

    #[test]
    fn separates_two_well_resolved_classes() {
        let (x, truth) = two_class_samples(11);
        let fit = fit_gmm_1d(&x, 2, 3).unwrap();
        assert!((fit.means[0][0] - 0.5).abs() < 0.01);
        assert!((fit.means[1][0] - 0.9).abs() < 0.01);
        let correct = fit.labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
        assert!(correct as f64 >= 0.99 * 1000.0);
    }

    #[test]
    fn single_component_is_the_mle() {
        let (x, _) = two_class_samples(5);
        let fit = fit_gmm_1d(&x, 1, 0).unwrap();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((fit.means[0][0] - mean).abs() < 1e-12);
        assert!((fit.variances[0][0] - var).abs() < 1e-12 * var.max(1.0));
        assert_eq!(fit.weights, vec![1.0]);
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let x = vec![0.42; 200];
        assert!(matches!(fit_gmm_1d(&x, 2, 1), Err(AnalysisError::DegenerateComponent { restarts: 3 })));
    }

    #[test]
    fn requires_five_samples_per_component() {
        assert!(matches!(fit_gmm_1d(&[0.0, 1.0, 2.0], 1, 0), Err(AnalysisError::TooFewSamples { .. })));
    }

    #[test]
    fn seeded_fits_are_bit_reproducible() {
        let (x, _) = two_class_samples(2);
        assert_eq!(fit_gmm_1d(&x, 3, 9).unwrap(), fit_gmm_1d(&x, 3, 9).unwrap());
    }
}
