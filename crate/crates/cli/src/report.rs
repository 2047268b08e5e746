//! JSON report schemas. All frequencies in Hz, fields in T.

use odmr_core::fitting::{BranchFit, BranchSet, FitResult};
use odmr_core::sensitivity::{GammaFit, SensitivityCurve, SensitivityUnit};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct DipReport {
    pub center_hz: f64,
    pub center_error_hz: f64,
    pub hwhm_hz: f64,
    pub hwhm_error_hz: f64,
    pub depth: f64,
    pub depth_error: f64,
}

#[derive(Debug, Serialize)]
pub struct DipFitReport {
    pub baseline: f64,
    pub baseline_error: f64,
    pub dips: Vec<DipReport>,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub clamped: bool,
    pub message: Option<String>,
}

impl From<&FitResult> for DipFitReport {
    fn from(f: &FitResult) -> Self {
        Self {
            baseline: f.model.baseline,
            baseline_error: f.baseline_error,
            dips: f
                .model
                .dips
                .iter()
                .zip(&f.errors)
                .map(|(d, e)| DipReport {
                    center_hz: d.center,
                    center_error_hz: e.center,
                    hwhm_hz: d.hwhm,
                    hwhm_error_hz: e.hwhm,
                    depth: d.depth,
                    depth_error: e.depth,
                })
                .collect(),
            rss: f.rss,
            converged: f.converged,
            iterations: f.iterations,
            clamped: f.clamped,
            message: f.message.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SpectrumReport {
    pub points: usize,
    pub model_valid: bool,
    pub noise_sigma: f64,
    pub dips: Option<DipFitReport>,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub rows: usize,
    pub rows_on_branch: usize,
    pub fraction: f64,
    pub max_deviation_hz: f64,
    pub tolerance_hz: f64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct MapReport {
    pub rows: usize,
    pub cols: usize,
    pub model_valid: bool,
    pub noise_sigma: f64,
    pub verify: Option<VerifyReport>,
}

#[derive(Debug, Serialize)]
pub struct BranchFitReport {
    pub d_hz: f64,
    pub d_error_hz: f64,
    pub ex_hz: f64,
    pub ex_error_hz: f64,
    /// γ_e·B_AC^z
    pub rabi_hz: f64,
    pub rabi_error_hz: f64,
    pub rss_hz2: f64,
    pub points: usize,
    pub iterations: usize,
    pub assignment_counts: [usize; 4],
}

impl From<&BranchFit> for BranchFitReport {
    fn from(f: &BranchFit) -> Self {
        Self {
            d_hz: f.d,
            d_error_hz: f.d_error,
            ex_hz: f.ex,
            ex_error_hz: f.ex_error,
            rabi_hz: f.rabi,
            rabi_error_hz: f.rabi_error,
            rss_hz2: f.rss,
            points: f.points,
            iterations: f.iterations,
            assignment_counts: f.assignment_counts,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct BranchRowReport {
    pub omega_ac_hz: f64,
    pub centers_hz: Vec<f64>,
    pub center_errors_hz: Vec<f64>,
    pub gap: bool,
}

#[derive(Debug, Serialize)]
pub struct GammaReport {
    pub gamma_hz: f64,
    pub gamma_error_hz: f64,
    pub center_hz: f64,
    pub center_error_hz: f64,
    pub scale: f64,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl From<&GammaFit> for GammaReport {
    fn from(g: &GammaFit) -> Self {
        Self {
            gamma_hz: g.gamma,
            gamma_error_hz: g.gamma_error,
            center_hz: g.center,
            center_error_hz: g.center_error,
            scale: g.scale,
            rss: g.rss,
            converged: g.converged,
            iterations: g.iterations,
        }
    }
}

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitReport {
    Dips {
        input: String,
        noise_sigma: f64,
        #[serde(flatten)]
        fit: DipFitReport,
    },
    Branches {
        input: String,
        noise_sigma: f64,
        rows: Vec<BranchRowReport>,
        fit: Option<BranchFitReport>,
        error: Option<String>,
    },
    Gamma {
        input: String,
        j_work_hz: f64,
        fit: GammaReport,
    },
}

impl FitReport {
    pub fn branches(input: String, noise_sigma: f64, set: &BranchSet, error: Option<String>) -> Self {
        FitReport::Branches {
            input,
            noise_sigma,
            rows: set
                .rows
                .iter()
                .map(|r| BranchRowReport {
                    omega_ac_hz: r.omega_ac,
                    centers_hz: r.centers.iter().map(|c| c.center).collect(),
                    center_errors_hz: r.centers.iter().map(|c| c.center_error).collect(),
                    gap: r.gap,
                })
                .collect(),
            fit: set.fit.as_ref().map(BranchFitReport::from),
            error,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct GridReport {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub count: usize,
}

#[derive(Debug, Serialize)]
pub struct SensitivityReport {
    pub bandwidth_hz: f64,
    pub center_hz: f64,
    pub threshold: f64,
    pub min_delta_b: f64,
    pub unit: SensitivityUnit,
    pub unit_symbol: &'static str,
    pub b_ac_work_t: f64,
    pub j_work_hz: f64,
    pub grid: GridReport,
    pub gamma_fit: Option<GammaReport>,
    pub gamma_fit_error: Option<String>,
}

impl SensitivityReport {
    pub fn new(curve: &SensitivityCurve, bandwidth: f64, gamma: Result<GammaFit, String>) -> Self {
        let (gamma_fit, gamma_fit_error) = match gamma {
            Ok(g) => (Some(GammaReport::from(&g)), None),
            Err(e) => (None, Some(e)),
        };
        Self {
            bandwidth_hz: bandwidth,
            center_hz: curve.center,
            threshold: curve.threshold,
            min_delta_b: curve.delta_b[curve.min_index],
            unit: curve.unit,
            unit_symbol: curve.unit.symbol(),
            b_ac_work_t: curve.b_ac_work,
            j_work_hz: curve.j_work,
            grid: GridReport {
                start_hz: curve.ac_grid.start,
                stop_hz: curve.ac_grid.stop,
                count: curve.ac_grid.count,
            },
            gamma_fit,
            gamma_fit_error,
        }
    }
}
