//! Analysis-tool selection and execution: the quantitative half of the
//! pipeline, producing findings, artifacts and regions of interest.

use std::collections::BTreeMap;
use std::path::Path;

use labloop_analysis::plot::{atom_map_png, class_histogram_png, heatmap_png, histogram_png, label_map_png, line_plot_png};
use labloop_analysis::{
    choose_k, detect_atoms, fit_curve, fit_gmm_1d, lattice_peak_ratio, load_cube, load_curve, load_image, map_environments,
    neighbor_stats, spatiofreq_decompose, unmix, Curve1D, DetectionParams, EnvConfig, HyperCube, ImageGrid, SpectralUnit,
};
use labloop_core::{Finding, InputKind, KeyNumber, Region};
use labloop_llm::{complete_structured, template, Backend};
use serde::{Deserialize, Serialize};

use crate::claims::fmt_number;
use crate::error::{Result, WorkflowError};

/// Peak-to-background ratio above which an image is treated as atom-resolved.
pub const PEAK_RATIO_THRESHOLD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisTool {
    Atomistic,
    Spatiofreq,
    Unmix,
    CurveFit,
}

impl AnalysisTool {
    pub fn name(self) -> &'static str {
        match self {
            AnalysisTool::Atomistic => "atomistic",
            AnalysisTool::Spatiofreq => "spatiofreq",
            AnalysisTool::Unmix => "unmix",
            AnalysisTool::CurveFit => "curve_fit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolChoice {
    pub tool: AnalysisTool,
    /// What the peak-ratio rule alone would pick.
    pub heuristic: AnalysisTool,
    pub peak_ratio: Option<f64>,
    pub justification: String,
    pub overridden: bool,
}

/// Tunables for the analysis kernels; defaults suit the shipped fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisParams {
    pub detection: DetectionParams,
    pub environments: EnvConfig,
    pub window: usize,
    pub stride: usize,
    pub domains: usize,
    /// Fixed number of spectral components; chosen automatically when absent.
    pub components: Option<usize>,
    pub max_components: usize,
    pub unmix_target_error: f64,
    pub curve_model: String,
    pub seed: u64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            detection: DetectionParams::default(),
            environments: EnvConfig::default(),
            window: 32,
            stride: 16,
            domains: 3,
            components: None,
            max_components: 6,
            unmix_target_error: 0.05,
            curve_model: "lorentzian_linear".into(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub enum LoadedInput {
    Image(ImageGrid),
    Cube(HyperCube),
    Curve(Curve1D),
}

/// Load an artifact of the declared kind. Raw files need their JSON sidecar.
pub fn load_input(kind: InputKind, path: &Path) -> Result<LoadedInput> {
    Ok(match kind {
        InputKind::Image2D => LoadedInput::Image(load_image(path)?),
        InputKind::HyperCube => LoadedInput::Cube(load_cube(path)?),
        InputKind::Curve1D => LoadedInput::Curve(load_curve(path)?),
    })
}

/// An artifact produced by a tool, before it is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactData {
    pub name: String,
    pub media_type: String,
    pub bytes: Vec<u8>,
}

impl ArtifactData {
    fn png(name: &str, bytes: Vec<u8>) -> Self {
        Self { name: name.into(), media_type: "image/png".into(), bytes }
    }

    fn json<T: Serialize>(name: &str, value: &T) -> Self {
        Self { name: name.into(), media_type: "application/json".into(), bytes: serde_json::to_vec_pretty(value).expect("serializable") }
    }
}

/// A region of interest that measurement recommendations can target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub id: String,
    pub description: String,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOutput {
    pub findings: Vec<Finding>,
    pub artifacts: Vec<ArtifactData>,
    pub hotspots: Vec<Hotspot>,
}

#[derive(Debug, Deserialize)]
struct ToolBlock {
    tool: String,
    #[serde(default)]
    justification: String,
}

fn metadata_text(metadata: &BTreeMap<String, String>) -> String {
    if metadata.is_empty() {
        return "(none)".into();
    }
    metadata.iter().map(|(k, v)| format!("- {k}: {v}")).collect::<Vec<_>>().join("\n")
}

/// Pick the analysis path. Images use the Fourier peak rule, which the
/// backend may override with a logged justification; cubes and curves have
/// a single path and need no backend call.
pub fn select_tool(input: &LoadedInput, metadata: &BTreeMap<String, String>, backend: &dyn Backend) -> Result<ToolChoice> {
    let image = match input {
        LoadedInput::Cube(_) => return Ok(fixed(AnalysisTool::Unmix)),
        LoadedInput::Curve(_) => return Ok(fixed(AnalysisTool::CurveFit)),
        LoadedInput::Image(img) => img,
    };
    let ratio = lattice_peak_ratio(image)?;
    let heuristic = if ratio > PEAK_RATIO_THRESHOLD { AnalysisTool::Atomistic } else { AnalysisTool::Spatiofreq };
    let vars = BTreeMap::from([
        ("kind", InputKind::Image2D.to_string()),
        ("metadata", metadata_text(metadata)),
        ("peak_ratio", fmt_number(ratio)),
        ("heuristic", heuristic.name().to_string()),
    ]);
    let prompt = template("select_tool").render(&vars)?;
    let reply = complete_structured::<ToolBlock>(&prompt, backend)?.value;
    let tool = match reply.tool.trim().to_lowercase().as_str() {
        "atomistic" => AnalysisTool::Atomistic,
        "spatiofreq" | "spatio-frequency" | "spatiofrequency" => AnalysisTool::Spatiofreq,
        other => {
            tracing::warn!(tool = other, "backend proposed an unknown tool; keeping the heuristic choice");
            heuristic
        }
    };
    Ok(ToolChoice { tool, heuristic, peak_ratio: Some(ratio), justification: reply.justification, overridden: tool != heuristic })
}

fn fixed(tool: AnalysisTool) -> ToolChoice {
    ToolChoice { tool, heuristic: tool, peak_ratio: None, justification: "only tool for this input kind".into(), overridden: false }
}

fn meta_f64(metadata: &BTreeMap<String, String>, key: &str) -> Option<f64> {
    metadata.get(key).and_then(|v| v.trim().parse::<f64>().ok()).filter(|v| v.is_finite() && *v > 0.0)
}

pub fn run_tool(tool: AnalysisTool, input: &LoadedInput, metadata: &BTreeMap<String, String>, params: &AnalysisParams) -> Result<AnalysisOutput> {
    match (tool, input) {
        (AnalysisTool::Atomistic, LoadedInput::Image(img)) => atomistic(img, metadata, params),
        (AnalysisTool::Spatiofreq, LoadedInput::Image(img)) => spatiofreq(img, metadata, params),
        (AnalysisTool::Unmix, LoadedInput::Cube(cube)) => unmixing(cube, metadata, params),
        (AnalysisTool::CurveFit, LoadedInput::Curve(curve)) => curve_fit(curve, metadata, params),
        (tool, _) => Err(WorkflowError::InvalidInput(format!("tool {} does not apply to this input", tool.name()))),
    }
}

fn bbox_region(points: impl Iterator<Item = [f64; 2]>, scale: Option<f64>, pad: f64) -> Region {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    let (s, unit) = scale.map_or((1.0, "px"), |s| (s, "nm"));
    let q = |v: f64| labloop_core::canonical_f64(v * s);
    Region { x0: q(x0 - pad), y0: q(y0 - pad), x1: q(x1 + pad), y1: q(y1 + pad), unit: unit.into() }
}

#[derive(Serialize)]
struct AtomTable<'a> {
    positions: &'a [[f64; 2]],
    intensity_class: &'a [usize],
    environment: &'a [Option<usize>],
    anomalous: &'a [bool],
}

fn atomistic(img: &ImageGrid, metadata: &BTreeMap<String, String>, p: &AnalysisParams) -> Result<AnalysisOutput> {
    let pixel = img.pixel_size.or_else(|| meta_f64(metadata, "pixel_size_nm"));
    let atoms = detect_atoms(img, &p.detection)?;
    let gmm = fit_gmm_1d(&atoms.intensities, 2, p.seed)?;
    let nn = neighbor_stats(&atoms, pixel)?;
    let env = map_environments(&atoms.positions, &gmm.labels, &p.environments)?;

    let mut findings = Vec::new();
    findings.push(Finding {
        tool: "detect_atoms".into(),
        numbers: vec![KeyNumber::new("atom_count", atoms.len() as f64, "")],
        observations: vec![],
        artifacts: vec!["atoms.json".into()],
    });
    let pops = gmm.populations();
    findings.push(Finding {
        tool: "intensity_classes".into(),
        numbers: vec![
            KeyNumber::new("class_count", 2.0, ""),
            KeyNumber::new("dim_class_mean", gmm.means[0][0], "a.u."),
            KeyNumber::new("bright_class_mean", gmm.means[1][0], "a.u."),
            KeyNumber::new("dim_class_atoms", pops[0] as f64, ""),
            KeyNumber::new("bright_class_atoms", pops[1] as f64, ""),
        ],
        observations: vec![],
        artifacts: vec!["intensity_histogram.png".into()],
    });
    let mut nn_numbers = vec![KeyNumber::new("modal_nn_distance_px", nn.modal_distance, "px")];
    if let Some(s) = pixel {
        nn_numbers.push(KeyNumber::new("modal_nn_distance", nn.modal_distance * s, "nm"));
    }
    findings.push(Finding {
        tool: "nearest_neighbours".into(),
        numbers: nn_numbers,
        observations: vec![],
        artifacts: vec!["nn_distance_histogram.png".into()],
    });
    let anomalous = env.anomaly_flags.iter().filter(|f| **f).count();
    let lines = env.line_defects().count();
    let mut env_numbers = vec![
        KeyNumber::new("environment_clusters", env.k_effective as f64, ""),
        KeyNumber::new("anomalous_atoms", anomalous as f64, ""),
        KeyNumber::new("anomaly_components", env.components.len() as f64, ""),
        KeyNumber::new("line_defects", lines as f64, ""),
    ];
    if let Some(c) = env.components.iter().max_by(|a, b| a.elongation.total_cmp(&b.elongation)) {
        env_numbers.push(KeyNumber::new("max_elongation", c.elongation, ""));
        env_numbers.push(KeyNumber::new("largest_component_atoms", env.components.iter().map(|c| c.size).max().unwrap_or(0) as f64, ""));
    }
    let observations = env
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| format!("component D{}: {:?} defect, {} atoms, elongation {}", i + 1, c.kind, c.size, fmt_number(c.elongation)))
        .collect();
    findings.push(Finding {
        tool: "local_environments".into(),
        numbers: env_numbers,
        observations,
        artifacts: vec!["environment_map.png".into()],
    });

    let pad = nn.modal_distance;
    let hotspots = env
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| Hotspot {
            id: format!("D{}", i + 1),
            description: format!("{:?} defect of {} atoms", c.kind, c.size).to_lowercase(),
            region: bbox_region(c.atoms.iter().map(|&a| atoms.positions[a]), pixel, pad),
        })
        .collect();

    let artifacts = vec![
        ArtifactData::json(
            "atoms.json",
            &AtomTable { positions: &atoms.positions, intensity_class: &gmm.labels, environment: &env.env_labels, anomalous: &env.anomaly_flags },
        ),
        ArtifactData::png("intensity_histogram.png", class_histogram_png(&atoms.intensities, &gmm.labels, 40)),
        ArtifactData::png("nn_distance_histogram.png", histogram_png(&nn.histogram)),
        ArtifactData::png("environment_map.png", atom_map_png(img.width, img.height, &atoms.positions, &env.env_labels, &env.anomaly_flags)),
    ];
    Ok(AnalysisOutput { findings, artifacts, hotspots })
}

fn spatiofreq(img: &ImageGrid, metadata: &BTreeMap<String, String>, p: &AnalysisParams) -> Result<AnalysisOutput> {
    let pixel = img.pixel_size.or_else(|| meta_f64(metadata, "pixel_size_nm"));
    let window = p.window.min(img.width.min(img.height).next_power_of_two() / 2).max(4);
    let d = spatiofreq_decompose(img, window, p.stride.max(1), p.domains, p.seed)?;
    let n = d.labels.len() as f64;
    let mut numbers = vec![KeyNumber::new("domains", d.k as f64, ""), KeyNumber::new("window", window as f64, "px")];
    let mut series: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let radii: Vec<f64> = (1..=window / 2).map(|r| r as f64).collect();
    for k in 0..d.k {
        let members: Vec<&Vec<f64>> = d.spectra.iter().zip(&d.labels).filter(|(_, l)| **l == k).map(|(s, _)| s).collect();
        numbers.push(KeyNumber::new(format!("domain_{}_fraction", k + 1), members.len() as f64 / n, ""));
        if members.is_empty() {
            continue;
        }
        let mean: Vec<f64> = (0..window / 2).map(|b| members.iter().map(|s| s[b]).sum::<f64>() / members.len() as f64).collect();
        // power-weighted mean radius gives the characteristic length of the texture
        let total: f64 = mean.iter().sum();
        let centroid = if total > 0.0 { mean.iter().zip(&radii).map(|(p, r)| p * r).sum::<f64>() / total } else { 1.0 };
        let length = window as f64 / centroid;
        match pixel {
            Some(s) => numbers.push(KeyNumber::new(format!("domain_{}_length_scale", k + 1), length * s, "nm")),
            None => numbers.push(KeyNumber::new(format!("domain_{}_length_scale", k + 1), length, "px")),
        }
        series.push((radii.clone(), mean));
    }
    let refs: Vec<(&[f64], &[f64])> = series.iter().map(|(x, y)| (x.as_slice(), y.as_slice())).collect();
    let findings = vec![Finding {
        tool: "spatiofreq_domains".into(),
        numbers,
        observations: vec![],
        artifacts: vec!["domain_map.png".into(), "domain_spectra.png".into()],
    }];
    let artifacts = vec![
        ArtifactData::png("domain_map.png", label_map_png(d.grid.0, d.grid.1, &d.domain_map, 8)),
        ArtifactData::png("domain_spectra.png", line_plot_png(&refs)),
    ];
    Ok(AnalysisOutput { findings, artifacts, hotspots: vec![] })
}

#[derive(Serialize)]
struct UnmixTrace<'a> {
    k: usize,
    iterations: usize,
    reconstruction_error_trace: &'a [f64],
}

fn unmixing(cube: &HyperCube, metadata: &BTreeMap<String, String>, p: &AnalysisParams) -> Result<AnalysisOutput> {
    let fixed_k = p.components.or_else(|| metadata.get("components").and_then(|v| v.trim().parse().ok()));
    let r = match fixed_k {
        Some(k) => unmix(cube, k, p.seed)?,
        None => choose_k(cube, p.max_components, p.unmix_target_error, p.seed)?.1,
    };
    let unit = match cube.unit {
        SpectralUnit::Nanometer => "nm",
        SpectralUnit::ElectronVolt => "eV",
    };
    let step = cube.pixel_size.or_else(|| meta_f64(metadata, "step_size_nm"));
    let mut numbers = vec![
        KeyNumber::new("components", r.k as f64, ""),
        KeyNumber::new("reconstruction_error", r.final_error(), ""),
        KeyNumber::new("iterations", r.iterations as f64, ""),
    ];
    let mut artifacts = Vec::new();
    let mut hotspots = Vec::new();
    let mut names = Vec::new();
    for c in 0..r.k {
        let em = &r.endmembers[c];
        let peak = em.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(i, _)| i);
        numbers.push(KeyNumber::new(format!("component_{}_peak", c + 1), cube.wavelengths[peak], unit));
        let map = r.abundance_map(c);
        let mean = map.iter().sum::<f64>() / map.len().max(1) as f64;
        numbers.push(KeyNumber::new(format!("component_{}_mean_abundance", c + 1), mean, ""));
        let top = map.iter().cloned().fold(0.0, f64::max);
        if top > 0.0 {
            let pts = map.iter().enumerate().filter(|(_, v)| **v >= 0.8 * top).map(|(i, _)| [(i % cube.nx) as f64, (i / cube.nx) as f64]);
            hotspots.push(Hotspot {
                id: format!("A{}", c + 1),
                description: format!("pixels with at least 80% of the peak abundance of component {}", c + 1),
                region: bbox_region(pts, step, 0.0),
            });
        }
        let name = format!("abundance_{}.png", c + 1);
        artifacts.push(ArtifactData::png(&name, heatmap_png(cube.nx, cube.ny, &map)));
        names.push(name);
    }
    let series: Vec<(&[f64], &[f64])> = r.endmembers.iter().map(|e| (cube.wavelengths.as_slice(), e.as_slice())).collect();
    artifacts.insert(0, ArtifactData::png("endmembers.png", line_plot_png(&series)));
    artifacts.push(ArtifactData::json(
        "unmix_trace.json",
        &UnmixTrace { k: r.k, iterations: r.iterations, reconstruction_error_trace: &r.reconstruction_error_trace },
    ));
    let mut all = vec!["endmembers.png".to_string()];
    all.extend(names);
    all.push("unmix_trace.json".into());
    let findings = vec![Finding { tool: "unmix".into(), numbers, observations: vec![], artifacts: all }];
    Ok(AnalysisOutput { findings, artifacts, hotspots })
}

fn curve_fit(curve: &Curve1D, metadata: &BTreeMap<String, String>, p: &AnalysisParams) -> Result<AnalysisOutput> {
    let model = metadata.get("model").unwrap_or(&p.curve_model);
    let fit = fit_curve(curve, model, None)?;
    let mut numbers: Vec<KeyNumber> = fit.parameters.iter().map(|q| KeyNumber::new(q.name.clone(), q.value, q.unit.clone())).collect();
    numbers.push(KeyNumber::new("reduced_chi_square", fit.reduced_chi_square, ""));
    let model: Vec<f64> = curve.y.iter().zip(&fit.residuals).map(|(y, r)| y - r).collect();
    let artifacts = vec![
        ArtifactData::png("fit.png", line_plot_png(&[(&curve.x, &curve.y), (&curve.x, &model)])),
        ArtifactData::json("fit.json", &fit),
    ];
    let observations = if fit.converged { vec![] } else { vec!["fit did not converge".to_string()] };
    let findings = vec![Finding {
        tool: format!("fit_{}", fit.model_id),
        numbers,
        observations,
        artifacts: vec!["fit.png".into(), "fit.json".into()],
    }];
    Ok(AnalysisOutput { findings, artifacts, hotspots: vec![] })
}
