//! Least-squares fitting of 1-D curves to a small registry of physical models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};
use crate::ingest::Curve1D;

const MAX_ITER: usize = 200;
const REL_TOL: f64 = 1e-10;
const LAMBDA0: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveModel {
    GaussianPeak,
    LorentzianPeak,
    /// Lorentzian peak on a sloped background `b0 + b1·(x − center)`.
    LorentzianLinear,
    ExponentialDecay,
    PowerLaw,
    Linear,
    SumOfTwoPeaks,
}

/// Unit of a parameter, expressed in the curve's own units.
#[derive(Debug, Clone, Copy)]
enum Dim {
    X,
    Y,
    YPerX,
    One,
}

impl CurveModel {
    pub const ALL: [CurveModel; 7] = [
        CurveModel::GaussianPeak,
        CurveModel::LorentzianPeak,
        CurveModel::LorentzianLinear,
        CurveModel::ExponentialDecay,
        CurveModel::PowerLaw,
        CurveModel::Linear,
        CurveModel::SumOfTwoPeaks,
    ];

    pub fn id(self) -> &'static str {
        match self {
            CurveModel::GaussianPeak => "gaussian_peak",
            CurveModel::LorentzianPeak => "lorentzian_peak",
            CurveModel::LorentzianLinear => "lorentzian_linear",
            CurveModel::ExponentialDecay => "exponential_decay",
            CurveModel::PowerLaw => "power_law",
            CurveModel::Linear => "linear",
            CurveModel::SumOfTwoPeaks => "sum_of_two_peaks",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        let norm = id.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|m| m.id() == norm)
            .ok_or_else(|| AnalysisError::UnknownModel(id.to_string()))
    }

    fn params(self) -> &'static [(&'static str, Dim)] {
        use Dim::*;
        match self {
            CurveModel::GaussianPeak => &[("amplitude", Y), ("center", X), ("sigma", X)],
            CurveModel::LorentzianPeak => &[("amplitude", Y), ("center", X), ("hwhm", X)],
            CurveModel::LorentzianLinear => {
                &[("amplitude", Y), ("center", X), ("hwhm", X), ("background", Y), ("slope", YPerX)]
            }
            CurveModel::ExponentialDecay => &[("amplitude", Y), ("tau", X), ("offset", Y)],
            CurveModel::PowerLaw => &[("prefactor", Y), ("exponent", One)],
            CurveModel::Linear => &[("slope", YPerX), ("intercept", Y)],
            CurveModel::SumOfTwoPeaks => {
                &[("amplitude1", Y), ("center1", X), ("sigma1", X), ("amplitude2", Y), ("center2", X), ("sigma2", X)]
            }
        }
    }

    pub fn param_names(self) -> Vec<&'static str> {
        self.params().iter().map(|(n, _)| *n).collect()
    }

    pub fn n_params(self) -> usize {
        self.params().len()
    }

    pub fn eval(self, x: f64, p: &[f64]) -> f64 {
        match self {
            CurveModel::GaussianPeak => gauss(x, p[0], p[1], p[2]),
            CurveModel::LorentzianPeak => lorentz(x, p[0], p[1], p[2]),
            CurveModel::LorentzianLinear => lorentz(x, p[0], p[1], p[2]) + p[3] + p[4] * (x - p[1]),
            CurveModel::ExponentialDecay => p[0] * (-x / p[1]).exp() + p[2],
            CurveModel::PowerLaw => p[0] * x.powf(p[1]),
            CurveModel::Linear => p[0] * x + p[1],
            CurveModel::SumOfTwoPeaks => gauss(x, p[0], p[1], p[2]) + gauss(x, p[3], p[4], p[5]),
        }
    }

    /// Analytic partial derivatives with respect to each parameter.
    pub fn gradient(self, x: f64, p: &[f64], out: &mut [f64]) {
        match self {
            CurveModel::GaussianPeak => gauss_grad(x, p[0], p[1], p[2], out),
            CurveModel::LorentzianPeak => lorentz_grad(x, p[0], p[1], p[2], out),
            CurveModel::LorentzianLinear => {
                lorentz_grad(x, p[0], p[1], p[2], &mut out[..3]);
                out[1] -= p[4];
                out[3] = 1.0;
                out[4] = x - p[1];
            }
            CurveModel::ExponentialDecay => {
                let e = (-x / p[1]).exp();
                out[0] = e;
                out[1] = p[0] * e * x / (p[1] * p[1]);
                out[2] = 1.0;
            }
            CurveModel::PowerLaw => {
                let v = x.powf(p[1]);
                out[0] = v;
                out[1] = p[0] * v * x.ln();
            }
            CurveModel::Linear => {
                out[0] = x;
                out[1] = 1.0;
            }
            CurveModel::SumOfTwoPeaks => {
                let (a, b) = out.split_at_mut(3);
                gauss_grad(x, p[0], p[1], p[2], a);
                gauss_grad(x, p[3], p[4], p[5], b);
            }
        }
    }

    /// Starting point derived from the data.
    pub fn initial_guess(self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let span = (x[x.len() - 1] - x[0]).abs().max(f64::MIN_POSITIVE);
        match self {
            CurveModel::GaussianPeak => {
                let (a, c, hw) = peak_guess(x, y, span);
                vec![a, c, hw / (2.0 * std::f64::consts::LN_2).sqrt()]
            }
            CurveModel::LorentzianPeak => {
                let (a, c, hw) = peak_guess(x, y, span);
                vec![a, c, hw]
            }
            CurveModel::LorentzianLinear => {
                let edge = (x.len() / 10).max(2).min(x.len());
                let idx: Vec<usize> = (0..edge).chain(x.len() - edge..x.len()).collect();
                let (slope, intercept) = line_fit(idx.iter().map(|&i| (x[i], y[i])));
                let resid: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| yi - (slope * xi + intercept)).collect();
                let (a, c, hw) = peak_guess(x, &resid, span);
                vec![a, c, hw, slope * c + intercept, slope]
            }
            CurveModel::ExponentialDecay => {
                let offset = y[y.len() - 1];
                let a0 = y[0] - offset;
                let target = offset + a0 / std::f64::consts::E;
                let cross = x.iter().zip(y).find(|(_, yi)| if a0 >= 0.0 { **yi <= target } else { **yi >= target });
                let tau = cross.map_or(span / 3.0, |(xi, _)| (xi - x[0]).max(span / 100.0));
                vec![a0 / (-x[0] / tau).exp().max(f64::MIN_POSITIVE), tau, offset]
            }
            CurveModel::PowerLaw => {
                let pts: Vec<(f64, f64)> =
                    x.iter().zip(y).filter(|(xi, yi)| **xi > 0.0 && **yi > 0.0).map(|(xi, yi)| (xi.ln(), yi.ln())).collect();
                if pts.len() >= 2 {
                    let (slope, intercept) = line_fit(pts.into_iter());
                    vec![intercept.exp(), slope]
                } else {
                    vec![1.0, 1.0]
                }
            }
            CurveModel::Linear => {
                let (slope, intercept) = line_fit(x.iter().cloned().zip(y.iter().cloned()));
                vec![slope, intercept]
            }
            CurveModel::SumOfTwoPeaks => {
                let (a1, c1, hw1) = peak_guess(x, y, span);
                let s1 = hw1 / (2.0 * std::f64::consts::LN_2).sqrt();
                let resid: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| yi - gauss(*xi, a1, c1, s1)).collect();
                let (a2, c2, hw2) = peak_guess(x, &resid, span);
                let s2 = hw2 / (2.0 * std::f64::consts::LN_2).sqrt();
                if c1 <= c2 {
                    vec![a1, c1, s1, a2, c2, s2]
                } else {
                    vec![a2, c2, s2, a1, c1, s1]
                }
            }
        }
    }
}

fn gauss(x: f64, a: f64, c: f64, s: f64) -> f64 {
    a * (-(x - c).powi(2) / (2.0 * s * s)).exp()
}

fn gauss_grad(x: f64, a: f64, c: f64, s: f64, out: &mut [f64]) {
    let d = x - c;
    let e = (-d * d / (2.0 * s * s)).exp();
    out[0] = e;
    out[1] = a * e * d / (s * s);
    out[2] = a * e * d * d / (s * s * s);
}

fn lorentz(x: f64, a: f64, c: f64, g: f64) -> f64 {
    let u = (x - c) / g;
    a / (1.0 + u * u)
}

fn lorentz_grad(x: f64, a: f64, c: f64, g: f64, out: &mut [f64]) {
    let u = (x - c) / g;
    let q = 1.0 / (1.0 + u * u);
    out[0] = q;
    out[1] = 2.0 * a * q * q * u / g;
    out[2] = 2.0 * a * q * q * u * u / g;
}

/// Height, position and half width at half maximum of the tallest feature.
fn peak_guess(x: &[f64], y: &[f64], span: f64) -> (f64, f64, f64) {
    let imax = (0..y.len()).fold(0, |b, i| if y[i] > y[b] { i } else { b });
    let half = y[imax] / 2.0;
    let left = (0..imax).rev().find(|&i| y[i] <= half).map(|i| x[i]);
    let right = (imax + 1..y.len()).find(|&i| y[i] <= half).map(|i| x[i]);
    let hw = match (left, right) {
        (Some(l), Some(r)) => (r - l) / 2.0,
        (Some(l), None) => x[imax] - l,
        (None, Some(r)) => r - x[imax],
        (None, None) => span / 4.0,
    };
    (y[imax], x[imax], hw.max(span * 1e-4))
}

fn line_fit(pts: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = pts.collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    /// One-sigma uncertainty; `None` when the covariance is unavailable.
    pub stderr: Option<f64>,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model_id: String,
    pub parameters: Vec<FitParameter>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub reduced_chi_square: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The Jacobian at the optimum was rank deficient; values are the best
    /// point found and no covariance is reported.
    pub singular_jacobian: bool,
}

impl FitResult {
    pub fn values(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.value).collect()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.value)
    }
}

fn unit_of(dim: Dim, curve: &Curve1D) -> String {
    match dim {
        Dim::X => curve.x_unit.clone(),
        Dim::Y => curve.y_unit.clone(),
        Dim::YPerX => format!("{}/{}", curve.y_unit, curve.x_unit),
        Dim::One => "1".into(),
    }
}

struct Problem<'a> {
    model: CurveModel,
    x: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
}

impl Problem<'_> {
    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        self.x.iter().zip(self.y).zip(&self.w).map(|((x, y), w)| (y - self.model.eval(*x, p)) * w).collect()
    }

    fn cost(&self, p: &[f64]) -> f64 {
        let c: f64 = self.residuals(p).iter().map(|r| r * r).sum();
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let np = p.len();
        let mut j = DMatrix::zeros(self.x.len(), np);
        let mut g = vec![0.0; np];
        for (i, (x, w)) in self.x.iter().zip(&self.w).enumerate() {
            self.model.gradient(*x, p, &mut g);
            for k in 0..np {
                j[(i, k)] = g[k] * w;
            }
        }
        j
    }
}

/// Fit `curve` with the named model. `initial_guess` overrides the data-driven
/// starting point.
pub fn fit_curve(curve: &Curve1D, model_id: &str, initial_guess: Option<&[f64]>) -> Result<FitResult> {
    let model = CurveModel::from_id(model_id)?;
    let np = model.n_params();
    if curve.len() < np {
        return Err(AnalysisError::TooFewSamples { needed: np, got: curve.len() });
    }
    let mut p = match initial_guess {
        Some(g) if g.len() != np => {
            return Err(AnalysisError::InvalidArgument(format!("{} expects {np} parameters, got {}", model.id(), g.len())))
        }
        Some(g) => g.to_vec(),
        None => model.initial_guess(&curve.x, &curve.y),
    };
    if p.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::InvalidArgument("non-finite starting point".into()));
    }
    let w: Vec<f64> = match &curve.sigma {
        Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; curve.len()],
    };
    let prob = Problem { model, x: &curve.x, y: &curve.y, w };

    let mut cost = prob.cost(&p);
    let mut lambda = LAMBDA0;
    let mut iterations = 0;
    let mut converged = cost == 0.0;
    while !converged && iterations < MAX_ITER {
        iterations += 1;
        let j = prob.jacobian(&p);
        let r = DVector::from_vec(prob.residuals(&p));
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * r;
        let dmax = jtj.diagonal().max().max(f64::MIN_POSITIVE);
        let mut improved = false;
        while lambda <= LAMBDA_MAX {
            let mut a = jtj.clone();
            for k in 0..np {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12 * dmax);
            }
            let step = a.clone().cholesky().map(|c| c.solve(&jtr)).or_else(|| a.lu().solve(&jtr));
            if let Some(step) = step {
                let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let tc = prob.cost(&trial);
                if tc < cost {
                    let rel = (cost - tc) / cost;
                    p = trial;
                    cost = tc;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = true;
                    converged = rel < REL_TOL || cost == 0.0;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step at any damping: stationary point
            converged = true;
        }
    }

    let residuals: Vec<f64> = curve.x.iter().zip(&curve.y).map(|(x, y)| y - model.eval(*x, &p)).collect();
    let dof = curve.len().saturating_sub(np).max(1);
    let reduced_chi_square = cost / dof as f64;

    let j = prob.jacobian(&p);
    let jtj = j.transpose() * &j;
    let svd = jtj.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let singular = !(smax > 0.0) || smin <= smax * 1e-14;
    let covariance = if singular {
        None
    } else {
        let scale = if curve.sigma.is_some() { 1.0 } else { reduced_chi_square };
        jtj.try_inverse().map(|inv| {
            (0..np).map(|a| (0..np).map(|b| inv[(a, b)] * scale).collect()).collect::<Vec<Vec<f64>>>()
        })
    };
    let singular_jacobian = singular || covariance.is_none();
    let parameters = model
        .params()
        .iter()
        .enumerate()
        .map(|(i, (name, dim))| FitParameter {
            name: name.to_string(),
            value: p[i],
            stderr: covariance.as_ref().map(|c: &Vec<Vec<f64>>| c[i][i].max(0.0).sqrt()),
            unit: unit_of(*dim, curve),
        })
        .collect();
    Ok(FitResult {
        model_id: model.id().to_string(),
        parameters,
        covariance,
        reduced_chi_square,
        residuals,
        iterations,
        converged,
        singular_jacobian,
    })
}
