//! 1D spectra and 2D anticrossing maps of p0, and the analytic dressed-state
//! resonance branches.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{DriveParams, DroppedComponents, FrequencyGrid, NVParams};
use crate::response::{model_splitting, response, ModelOptions};

/// A frequency axis: a uniform grid, a single fixed value, or arbitrary
/// (e.g. measured) points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Axis {
    Grid(FrequencyGrid),
    Fixed(f64),
    Points(Vec<f64>),
}

impl Axis {
    pub fn points(&self) -> Vec<f64> {
        match self {
            Axis::Grid(g) => g.points(),
            Axis::Fixed(v) => vec![*v],
            Axis::Points(p) => p.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Axis::Grid(g) => g.count,
            Axis::Fixed(_) => 1,
            Axis::Points(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Typical spacing; `None` for single-point axes.
    pub fn step(&self) -> Option<f64> {
        match self {
            Axis::Grid(g) => Some(g.step()),
            Axis::Fixed(_) => None,
            Axis::Points(p) if p.len() >= 2 => Some((p[p.len() - 1] - p[0]) / (p.len() - 1) as f64),
            Axis::Points(_) => None,
        }
    }
}

/// Parameters a simulated spectrum was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMeta {
    pub nv: NVParams,
    pub drive: DriveParams,
    pub options: ModelOptions,
    /// Drive components ignored by the rotating-wave model.
    pub dropped: DroppedComponents,
    /// False if any point exceeded the linear-response population limit.
    pub model_valid: bool,
}

/// p0 over (ω_AC, ω_mw); row index is ω_AC, column index is ω_mw.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub mw: Axis,
    pub ac: Axis,
    values: Vec<f64>,
    pub meta: Option<SimulationMeta>,
}

impl Spectrum {
    pub fn from_values(mw: Axis, ac: Axis, values: Vec<f64>) -> Result<Self> {
        if mw.is_empty() || ac.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if values.len() != mw.len() * ac.len() {
            return Err(Error::invalid(
                "values",
                format!(
                    "expected {} x {} = {} values, got {}",
                    ac.len(),
                    mw.len(),
                    mw.len() * ac.len(),
                    values.len()
                ),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { name: "values" });
        }
        Ok(Self {
            mw,
            ac,
            values,
            meta: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.ac.len()
    }

    pub fn cols(&self) -> usize {
        self.mw.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.cols();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_2d(&self) -> bool {
        !matches!(self.ac, Axis::Fixed(_))
    }
}

fn evaluate_row(nv: &NVParams, drive: &DriveParams, mw: &[f64], opts: &ModelOptions) -> Result<(Vec<f64>, bool)> {
    let evaluated: Result<Vec<_>> = mw
        .par_iter()
        .map(|&omega_mw| {
            let d = DriveParams { omega_mw, ..*drive };
            response(nv, &d, opts)
        })
        .collect();
    let evaluated = evaluated?;
    let valid = evaluated.iter().all(|r| r.model_valid);
    Ok((evaluated.into_iter().map(|r| r.p0).collect(), valid))
}

fn check_inputs(nv: &NVParams, drive: &DriveParams) -> Result<()> {
    nv.check()?;
    drive.check()
}

/// p0 at every microwave frequency with ω_AC fixed at `drive.omega_ac`.
pub fn spectrum_1d(nv: &NVParams, drive: &DriveParams, mw_grid: &FrequencyGrid, opts: &ModelOptions) -> Result<Spectrum> {
    check_inputs(nv, drive)?;
    mw_grid.check()?;
    let (values, model_valid) = evaluate_row(nv, drive, &mw_grid.points(), opts)?;
    let mut s = Spectrum::from_values(Axis::Grid(*mw_grid), Axis::Fixed(drive.omega_ac), values)?;
    s.meta = Some(SimulationMeta {
        nv: *nv,
        drive: *drive,
        options: *opts,
        dropped: drive.dropped_components(),
        model_valid,
    });
    Ok(s)
}

/// Full (ω_AC, ω_mw) map of p0.
pub fn spectrum_2d(
    nv: &NVParams,
    drive: &DriveParams,
    mw_grid: &FrequencyGrid,
    ac_grid: &FrequencyGrid,
    opts: &ModelOptions,
) -> Result<Spectrum> {
    check_inputs(nv, drive)?;
    mw_grid.check()?;
    ac_grid.check()?;
    let mw = mw_grid.points();
    let rows: Result<Vec<_>> = ac_grid
        .points()
        .into_par_iter()
        .map(|omega_ac| {
            let d = DriveParams { omega_ac, ..*drive };
            evaluate_row(nv, &d, &mw, opts)
        })
        .collect();
    let rows = rows?;
    let model_valid = rows.iter().all(|(_, v)| *v);
    let values = rows.into_iter().flat_map(|(r, _)| r).collect();
    let mut s = Spectrum::from_values(Axis::Grid(*mw_grid), Axis::Grid(*ac_grid), values)?;
    s.meta = Some(SimulationMeta {
        nv: *nv,
        drive: *drive,
        options: *opts,
        dropped: drive.dropped_components(),
        model_valid,
    });
    Ok(s)
}

/// The four dressed resonances at RF frequency `omega_rf`:
/// ω_mw = ½{2D ± ω_rf ± √[(2E_x − ω_rf)² + (γ_e B_AC)²]}.
///
/// Order: `[+ω_rf +√, +ω_rf −√, −ω_rf +√, −ω_rf −√]`.
pub fn branch_frequencies(d: f64, ex: f64, rabi: f64, omega_rf: f64) -> [f64; 4] {
    let root = (2.0 * ex - omega_rf).hypot(rabi);
    [
        0.5 * (2.0 * d + omega_rf + root),
        0.5 * (2.0 * d + omega_rf - root),
        0.5 * (2.0 * d - omega_rf + root),
        0.5 * (2.0 * d - omega_rf - root),
    ]
}

/// Branches for every RF frequency in `omega_rf`. `rabi` is γ_e·B_AC^z in Hz.
pub fn resonance_branches(nv: &NVParams, rabi: f64, omega_rf: &[f64], use_effective: bool) -> Result<Vec<[f64; 4]>> {
    let (d, ex) = model_splitting(nv, use_effective)?;
    Ok(omega_rf
        .iter()
        .map(|&r| branch_frequencies(d, ex, rabi, r))
        .collect())
}

/// Distance from `center` to the closest of the four branches.
pub fn distance_to_branches(branches: &[f64; 4], center: f64) -> f64 {
    branches
        .iter()
        .map(|b| (b - center).abs())
        .fold(f64::INFINITY, f64::min)
}
