//! Numerical analysis of microscopy images, hyperspectral cubes and 1-D curves.

pub mod detect;
pub mod environments;
pub mod error;
pub mod filters;
pub mod fit;
pub mod gmm;
pub mod ingest;
pub mod neighbors;
pub mod nmf;
pub mod plot;
pub mod spatial;
pub mod spatiofreq;
pub mod synthetic;

pub use detect::{detect_atoms, DetectedAtoms, DetectionParams};
pub use environments::{map_environments, AnomalyComponent, DefectKind, EnvConfig, EnvMap};
pub use error::{AnalysisError, Result};
pub use fit::{fit_curve, CurveModel, FitParameter, FitResult};
pub use gmm::{fit_gmm, fit_gmm_1d, GmmFit};
pub use ingest::{load_cube, load_curve, load_image, Curve1D, HyperCube, ImageGrid, SpectralUnit};
pub use neighbors::{neighbor_stats, neighbor_stats_of, Histogram, NeighborStats};
pub use nmf::{choose_k, spectral_angle, unmix, unmix_observed, UnmixResult};
pub use spatiofreq::{lattice_peak_ratio, spatiofreq_decompose, FreqDecomposition};
