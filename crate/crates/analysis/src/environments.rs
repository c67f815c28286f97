//! Local-environment classification and defect localisation.
//!
//! Each atom is described by the sorted distances to its `m` nearest
//! neighbours followed by the count of those neighbours in every intensity
//! class. Descriptors are clustered with [`fit_gmm`]; atoms in sparsely
//! populated clusters are anomalous, and connected groups of anomalous atoms
//! are reported with their elongation so that line defects can be told apart
//! from point defects.
//!
//! Atoms closer to the sample boundary than the typical `m`-th neighbour
//! distance have truncated neighbour shells; they are marked as edge atoms
//! and excluded from clustering.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};
use crate::gmm::fit_gmm;
use crate::neighbors::quantile;
use crate::spatial::PointIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub m: usize,
    pub k_env: usize,
    pub anomaly_fraction: f64,
    pub elongation_threshold: f64,
    /// Edge margin and adjacency radius, in units of the median m-th neighbour distance.
    pub shell_factor: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { m: 6, k_env: 2, anomaly_fraction: 0.15, elongation_threshold: 3.0, shell_factor: 1.1, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DefectKind {
    Line,
    Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyComponent {
    pub atoms: Vec<usize>,
    pub size: usize,
    /// `[x_min, y_min, x_max, y_max]` in pixels
    pub bbox: [f64; 4],
    pub centroid: [f64; 2],
    /// Ratio of standard deviations along the principal axes (≥ 1).
    pub elongation: f64,
    pub kind: DefectKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvMap {
    pub descriptors: Vec<Vec<f64>>,
    /// Cluster id per atom; `None` for edge atoms.
    pub env_labels: Vec<Option<usize>>,
    pub populations: Vec<usize>,
    pub edge_flags: Vec<bool>,
    pub anomaly_flags: Vec<bool>,
    pub components: Vec<AnomalyComponent>,
    /// Number of clusters actually fitted (capped by the number of distinct descriptors).
    pub k_effective: usize,
    pub link_radius: f64,
}

impl EnvMap {
    pub fn descriptor_len(&self) -> usize {
        self.descriptors.first().map_or(0, Vec::len)
    }

    pub fn line_defects(&self) -> impl Iterator<Item = &AnomalyComponent> {
        self.components.iter().filter(|c| c.kind == DefectKind::Line)
    }
}

pub fn map_environments(points: &[[f64; 2]], intensity_labels: &[usize], cfg: &EnvConfig) -> Result<EnvMap> {
    let n = points.len();
    let needed = (cfg.m + 1).max(5 * cfg.k_env);
    if n < needed {
        return Err(AnalysisError::TooFewAtoms { needed, got: n });
    }
    if intensity_labels.len() != n {
        return Err(AnalysisError::DimensionMismatch(format!("{} labels for {n} atoms", intensity_labels.len())));
    }
    if cfg.m == 0 || cfg.k_env == 0 {
        return Err(AnalysisError::InvalidArgument("m and k_env must be positive".into()));
    }
    let classes = intensity_labels.iter().max().map_or(1, |m| m + 1);
    let index = PointIndex::new(points);

    let mut descriptors = Vec::with_capacity(n);
    let mut mth = Vec::with_capacity(n);
    for (i, p) in points.iter().enumerate() {
        let nb = index.nearest(*p, cfg.m, Some(i));
        let mut d: Vec<f64> = nb.iter().map(|(dist, _)| *dist).collect();
        mth.push(*d.last().expect("m >= 1 neighbours"));
        let mut counts = vec![0.0; classes];
        for (_, j) in &nb {
            counts[intensity_labels[*j]] += 1.0;
        }
        d.extend(counts);
        descriptors.push(d);
    }
    let mut sorted_mth = mth.clone();
    sorted_mth.sort_by(f64::total_cmp);
    let shell = quantile(&sorted_mth, 0.5) * cfg.shell_factor;

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let edge_flags: Vec<bool> = points
        .iter()
        .map(|p| {
            let gap = (p[0] - lo[0]).min(hi[0] - p[0]).min(p[1] - lo[1]).min(hi[1] - p[1]);
            gap < shell
        })
        .collect();
    let interior: Vec<usize> = (0..n).filter(|&i| !edge_flags[i]).collect();

    let mut distinct: Vec<&Vec<f64>> = interior.iter().map(|&i| &descriptors[i]).collect();
    distinct.sort_by(|a, b| {
        a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    distinct.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    let k_effective = cfg.k_env.min(distinct.len()).max(1);
    if interior.len() < 5 * k_effective {
        return Err(AnalysisError::TooFewAtoms { needed: 5 * k_effective, got: interior.len() });
    }

    let dim = cfg.m + classes;
    let mut env_labels = vec![None; n];
    let mut populations = vec![interior.len()];
    let mut anomaly_flags = vec![false; n];
    if k_effective > 1 {
        let flat: Vec<f64> = interior.iter().flat_map(|&i| descriptors[i].iter().cloned()).collect();
        let fit = fit_gmm(&flat, dim, k_effective, cfg.seed)?;
        populations = fit.populations();
        let cutoff = cfg.anomaly_fraction * interior.len() as f64;
        for (row, &atom) in interior.iter().enumerate() {
            let label = fit.labels[row];
            env_labels[atom] = Some(label);
            anomaly_flags[atom] = (populations[label] as f64) < cutoff;
        }
    } else {
        for &atom in &interior {
            env_labels[atom] = Some(0);
        }
    }

    let components = connected_components(points, &index, &anomaly_flags, shell, cfg.elongation_threshold);
    Ok(EnvMap {
        descriptors,
        env_labels,
        populations,
        edge_flags,
        anomaly_flags,
        components,
        k_effective,
        link_radius: shell,
    })
}

fn connected_components(
    points: &[[f64; 2]],
    index: &PointIndex,
    flags: &[bool],
    radius: f64,
    elongation_threshold: f64,
) -> Vec<AnomalyComponent> {
    let mut seen = vec![false; points.len()];
    let mut out = Vec::new();
    for start in 0..points.len() {
        if !flags[start] || seen[start] {
            continue;
        }
        let mut members = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let mut near = index.within(points[i], radius);
            near.sort_unstable();
            for j in near {
                if flags[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        members.sort_unstable();
        out.push(describe_component(points, members, elongation_threshold));
    }
    out
}

fn describe_component(points: &[[f64; 2]], atoms: Vec<usize>, elongation_threshold: f64) -> AnomalyComponent {
    let size = atoms.len();
    let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    let mut c = [0.0; 2];
    for &i in &atoms {
        let p = points[i];
        bbox[0] = bbox[0].min(p[0]);
        bbox[1] = bbox[1].min(p[1]);
        bbox[2] = bbox[2].max(p[0]);
        bbox[3] = bbox[3].max(p[1]);
        c[0] += p[0];
        c[1] += p[1];
    }
    c[0] /= size as f64;
    c[1] /= size as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &i in &atoms {
        let (dx, dy) = (points[i][0] - c[0], points[i][1] - c[1]);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let (sxx, syy, sxy) = (sxx / size as f64, syy / size as f64, sxy / size as f64);
    let tr = sxx + syy;
    let disc = ((sxx - syy).powi(2) / 4.0 + sxy * sxy).sqrt();
    let l1 = tr / 2.0 + disc;
    let l2 = (tr / 2.0 - disc).max(0.0);
    let elongation = if size < 2 || l1 <= 0.0 {
        1.0
    } else {
        (l1 / l2.max(1e-12 * l1)).sqrt().min(1e3)
    };
    let kind = if size >= 3 && elongation > elongation_threshold { DefectKind::Line } else { DefectKind::Point };
    AnomalyComponent { atoms, size, bbox, centroid: c, elongation, kind }
}
