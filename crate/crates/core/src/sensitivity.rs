//! Field sensitivity δB = δS / |dp0/dB_AC| under the fixed-frequency
//! protocol ω_mw = D + ω_AC/2, its dependence on the target frequency, and
//! the resulting sensor bandwidth.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{minimize, LeastSquares, LmSettings};
use crate::params::{DriveParams, FrequencyGrid, NVParams};
use crate::response::{model_splitting, response, ModelOptions};

/// Default normalized-sensitivity level that bounds the bandwidth.
pub const DEFAULT_THRESHOLD: f64 = 2.0;

/// Signal fluctuation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// δS = sigma0 regardless of integration time.
    Constant { sigma0: f64 },
    /// δS(T) = sigma0·√(t0/T).
    ShotLike { sigma0: f64, t0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityUnit {
    /// Constant noise: δB in T.
    Tesla,
    /// Shot-like noise: δB·√T in T/√Hz.
    TeslaPerRootHz,
}

impl SensitivityUnit {
    pub fn symbol(self) -> &'static str {
        match self {
            SensitivityUnit::Tesla => "T",
            SensitivityUnit::TeslaPerRootHz => "T/sqrt(Hz)",
        }
    }
}

impl NoiseModel {
    pub fn check(&self) -> Result<()> {
        let (sigma0, t0) = match *self {
            NoiseModel::Constant { sigma0 } => (sigma0, 1.0),
            NoiseModel::ShotLike { sigma0, t0 } => (sigma0, t0),
        };
        if !(sigma0 > 0.0) || !sigma0.is_finite() {
            return Err(Error::invalid("noise.sigma0", "must be finite and > 0"));
        }
        if !(t0 > 0.0) || !t0.is_finite() {
            return Err(Error::invalid("noise.t0", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Signal standard deviation after integrating for `t` seconds.
    pub fn delta_s(&self, t: f64) -> f64 {
        match *self {
            NoiseModel::Constant { sigma0 } => sigma0,
            NoiseModel::ShotLike { sigma0, t0 } => sigma0 * (t0 / t).sqrt(),
        }
    }

    pub fn unit(&self) -> SensitivityUnit {
        match self {
            NoiseModel::Constant { .. } => SensitivityUnit::Tesla,
            NoiseModel::ShotLike { .. } => SensitivityUnit::TeslaPerRootHz,
        }
    }

    /// Time-independent figure: δS for constant noise, δS·√T for shot-like.
    pub fn reference_figure(&self) -> f64 {
        match *self {
            NoiseModel::Constant { sigma0 } => sigma0,
            NoiseModel::ShotLike { sigma0, t0 } => sigma0 * t0.sqrt(),
        }
    }

    /// δB from a signal slope (per tesla), in [`Self::unit`].
    pub fn field_sensitivity(&self, slope: f64) -> Result<f64> {
        sensitivity(self.reference_figure(), slope)
    }
}

/// δB = δS / |slope|.
pub fn sensitivity(delta_s: f64, slope: f64) -> Result<f64> {
    if !delta_s.is_finite() || !slope.is_finite() {
        return Err(Error::NonFinite { name: "delta_s/slope" });
    }
    if slope == 0.0 {
        return Err(Error::InsensitiveOperatingPoint);
    }
    Ok(delta_s / slope.abs())
}

/// ω_mw = D + ω_AC/2 (D′ in effective mode).
pub fn protocol_mw_frequency(nv: &NVParams, omega_ac: f64, use_effective: bool) -> Result<f64> {
    let (d, _) = model_splitting(nv, use_effective)?;
    Ok(d + 0.5 * omega_ac)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    /// [p0(B+h) − p0(B−h)]/(2h), per tesla.
    pub central: f64,
    /// Same with step h/2.
    pub central_half: f64,
    /// (4·central_half − central)/3.
    pub richardson: f64,
    /// |richardson − central_half|
    pub error: f64,
    pub step: f64,
}

/// Default finite-difference step: max(0.05·B, field worth 1 kHz).
pub fn default_step(nv: &NVParams, b_ac_work: f64) -> f64 {
    (0.05 * b_ac_work).max(1e3 / nv.gamma_e)
}

/// dp0/dB_AC^z at `b_ac_work` by central differences with Richardson
/// extrapolation. The drive's own B_AC^z is replaced.
pub fn signal_slope(
    nv: &NVParams,
    drive: &DriveParams,
    b_ac_work: f64,
    step: f64,
    opts: &ModelOptions,
) -> Result<SlopeEstimate> {
    if !(b_ac_work > 0.0) {
        return Err(Error::invalid("b_ac_work", "must be > 0"));
    }
    if !(step > 0.0) {
        return Err(Error::invalid("step", "must be > 0"));
    }
    if !(b_ac_work - step > 0.0) {
        return Err(Error::invalid("step", "must be smaller than b_ac_work"));
    }
    let p0 = |b: f64| -> Result<f64> {
        let mut d = *drive;
        d.b_ac[2] = b;
        let r = response(nv, &d, opts)?;
        if !r.model_valid {
            return Err(Error::ModelInvalid {
                population: r.population,
                limit: crate::response::VALIDITY_LIMIT,
            });
        }
        Ok(r.p0)
    };
    let central = (p0(b_ac_work + step)? - p0(b_ac_work - step)?) / (2.0 * step);
    let half = 0.5 * step;
    let central_half = (p0(b_ac_work + half)? - p0(b_ac_work - half)?) / (2.0 * half);
    let richardson = (4.0 * central_half - central) / 3.0;
    Ok(SlopeEstimate {
        central,
        central_half,
        richardson,
        error: (richardson - central_half).abs(),
        step,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub ac_grid: FrequencyGrid,
    pub omega_ac: Vec<f64>,
    /// Signal slope per tesla at each point (Richardson value).
    pub slope: Vec<f64>,
    pub slope_error: Vec<f64>,
    /// δB per point, in `unit`.
    pub delta_b: Vec<f64>,
    pub unit: SensitivityUnit,
    /// δB divided by the curve minimum.
    pub normalized: Vec<f64>,
    /// Index of the smallest δB.
    pub min_index: usize,
    /// ω_AC of best sensitivity, refined by a parabola through the minimum.
    pub center: f64,
    pub threshold: f64,
    /// `None` when the threshold crossings fall outside the grid.
    pub bandwidth: Option<f64>,
    pub b_ac_work: f64,
    /// Working coupling J = γ_e·B_work/2 (Hz).
    pub j_work: f64,
    pub noise: NoiseModel,
}

/// Working amplitude with γ_e·B = 0.2·Γ, Γ the mean of Γ_b and Γ_d.
pub fn default_working_amplitude(nv: &NVParams) -> f64 {
    0.2 * 0.5 * (nv.gamma_b + nv.gamma_d) / nv.gamma_e
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub b_ac_work: f64,
    /// Finite-difference step; `None` uses [`default_step`].
    pub step: Option<f64>,
    pub threshold: f64,
}

/// δB over ω_AC with ω_mw locked to the protocol frequency.
pub fn sensitivity_sweep(
    nv: &NVParams,
    drive: &DriveParams,
    ac_grid: &FrequencyGrid,
    noise: &NoiseModel,
    settings: &SweepSettings,
    opts: &ModelOptions,
) -> Result<SensitivityCurve> {
    nv.check()?;
    ac_grid.check()?;
    noise.check()?;
    if !(settings.threshold > 1.0) {
        return Err(Error::invalid("threshold", "must be > 1"));
    }
    let step = settings.step.unwrap_or_else(|| default_step(nv, settings.b_ac_work));
    let omega_ac = ac_grid.points();

    let slopes: Result<Vec<SlopeEstimate>> = omega_ac
        .par_iter()
        .map(|&r| {
            let d = DriveParams {
                omega_ac: r,
                omega_mw: protocol_mw_frequency(nv, r, opts.use_effective)?,
                ..*drive
            };
            signal_slope(nv, &d, settings.b_ac_work, step, opts)
        })
        .collect();
    let slopes = slopes?;

    let delta_b: Vec<f64> = slopes
        .iter()
        .map(|s| noise.field_sensitivity(s.richardson))
        .collect::<Result<_>>()?;
    let min_index = (0..delta_b.len())
        .min_by(|&a, &b| delta_b[a].total_cmp(&delta_b[b]))
        .expect("grid has at least two points");
    let best = delta_b[min_index];
    let normalized: Vec<f64> = delta_b.iter().map(|v| v / best).collect();

    let center = refine_minimum(&omega_ac, &delta_b, min_index);
    let bw = bandwidth_of(&omega_ac, &normalized, settings.threshold).ok();

    Ok(SensitivityCurve {
        ac_grid: *ac_grid,
        omega_ac,
        slope: slopes.iter().map(|s| s.richardson).collect(),
        slope_error: slopes.iter().map(|s| s.error).collect(),
        delta_b,
        unit: noise.unit(),
        normalized,
        min_index,
        center,
        threshold: settings.threshold,
        bandwidth: bw,
        b_ac_work: settings.b_ac_work,
        j_work: 0.5 * nv.gamma_e * settings.b_ac_work,
        noise: *noise,
    })
}

fn refine_minimum(x: &[f64], y: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= x.len() {
        return x[i];
    }
    let (x0, x1, x2) = (x[i - 1], x[i], x[i + 1]);
    let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
    let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    if a <= 0.0 {
        return x1;
    }
    (-b / (2.0 * a)).clamp(x0, x2)
}

/// Full width of the contiguous interval around the minimum with
/// normalized ≤ threshold; crossings by linear interpolation.
pub fn bandwidth_of(omega_ac: &[f64], normalized: &[f64], threshold: f64) -> Result<f64> {
    if omega_ac.len() != normalized.len() || omega_ac.len() < 2 {
        return Err(Error::invalid("curve", "need matching axes with at least 2 points"));
    }
    if !(threshold > 1.0) {
        return Err(Error::invalid("threshold", "must be > 1"));
    }
    let i = (0..normalized.len())
        .min_by(|&a, &b| normalized[a].total_cmp(&normalized[b]))
        .unwrap();
    if normalized[i] > threshold {
        return Err(Error::invalid("curve", "minimum lies above the threshold"));
    }
    let crossing = |a: usize, b: usize| {
        let (ya, yb) = (normalized[a], normalized[b]);
        omega_ac[a] + (threshold - ya) * (omega_ac[b] - omega_ac[a]) / (yb - ya)
    };
    let left = (0..i)
        .rev()
        .find(|&k| normalized[k] > threshold)
        .map(|k| crossing(k + 1, k))
        .ok_or_else(|| Error::GridTooNarrow("low-frequency threshold crossing lies below the grid".into()))?;
    let right = (i + 1..normalized.len())
        .find(|&k| normalized[k] > threshold)
        .map(|k| crossing(k - 1, k))
        .ok_or_else(|| Error::GridTooNarrow("high-frequency threshold crossing lies above the grid".into()))?;
    Ok(right - left)
}

pub fn bandwidth(curve: &SensitivityCurve, threshold: f64) -> Result<f64> {
    bandwidth_of(&curve.omega_ac, &curve.normalized, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub gamma: f64,
    pub gamma_error: f64,
    /// Resonance (best-sensitivity) frequency.
    pub center: f64,
    pub center_error: f64,
    /// Normalization of the model at the resonance.
    pub scale: f64,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
}

const UNIT: f64 = 1e6;

/// scale·((δ²/4 + Γ² + J²)/(Γ² + J²))², δ = ω_AC − center, in MHz.
struct GammaProblem {
    x: Vec<f64>,
    y: Vec<f64>,
    j2: f64,
}

impl GammaProblem {
    fn model(&self, p: &[f64], x: f64) -> f64 {
        let g2 = p[0] * p[0];
        let dx = x - p[1];
        let ratio = (0.25 * dx * dx + g2 + self.j2) / (g2 + self.j2);
        p[2] * ratio * ratio
    }
}

impl LeastSquares for GammaProblem {
    fn n_params(&self) -> usize {
        3
    }
    fn n_residuals(&self) -> usize {
        self.x.len()
    }
    fn residuals(&self, p: &[f64], r: &mut [f64]) {
        for i in 0..self.x.len() {
            r[i] = self.model(p, self.x[i]) - self.y[i];
        }
    }
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let g = p[0];
        let g2 = g * g;
        let base = g2 + self.j2;
        for i in 0..self.x.len() {
            let dx = self.x[i] - p[1];
            let num = 0.25 * dx * dx + g2 + self.j2;
            let ratio = num / base;
            // d ratio/dΓ = 2Γ(base − num)/base²
            let d_ratio_dg = 2.0 * g * (base - num) / (base * base);
            let d_ratio_dc = -0.5 * dx / base;
            jac[(i, 0)] = p[2] * 2.0 * ratio * d_ratio_dg;
            jac[(i, 1)] = p[2] * 2.0 * ratio * d_ratio_dc;
            jac[(i, 2)] = ratio * ratio;
        }
    }
}

/// Fit a single decay rate Γ = Γ_b = Γ_d to a normalized sensitivity curve
/// taken with working coupling `j_work` (Hz).
pub fn fit_gamma(omega_ac: &[f64], normalized: &[f64], j_work: f64, lm: &LmSettings) -> Result<GammaFit> {
    if omega_ac.len() != normalized.len() {
        return Err(Error::invalid("curve", "axis and values differ in length"));
    }
    if omega_ac.len() < 6 {
        return Err(Error::InsufficientData {
            needed: 6,
            got: omega_ac.len(),
        });
    }
    if omega_ac.iter().chain(normalized).any(|v| !v.is_finite()) || !j_work.is_finite() {
        return Err(Error::NonFinite { name: "curve" });
    }
    let i_min = (0..normalized.len())
        .min_by(|&a, &b| normalized[a].total_cmp(&normalized[b]))
        .unwrap();
    if i_min == 0 || i_min + 1 == normalized.len() {
        return Err(Error::DegenerateData("curve minimum lies on the grid edge".into()));
    }

    let x: Vec<f64> = omega_ac.iter().map(|v| v / UNIT).collect();
    let scale0 = normalized[i_min];
    let rel: Vec<f64> = normalized.iter().map(|v| v / scale0).collect();
    let gamma0 = match bandwidth_of(&x, &rel, 2.0) {
        Ok(w) => w / (4.0 * (2f64.sqrt() - 1.0).sqrt()),
        Err(_) => 0.125 * (x[x.len() - 1] - x[0]).abs(),
    };
    let j = j_work / UNIT;
    let problem = GammaProblem {
        x,
        y: normalized.to_vec(),
        j2: j * j,
    };
    let mut best: Option<crate::lm::LmOutcome> = None;
    for factor in [1.0, 0.5, 2.0] {
        let out = minimize(&problem, &[gamma0 * factor, omega_ac[i_min] / UNIT, scale0], lm);
        if best.as_ref().map_or(true, |b| out.rss < b.rss) {
            best = Some(out);
        }
    }
    let out = best.expect("at least one start");
    Ok(GammaFit {
        gamma: UNIT * out.params[0].abs(),
        gamma_error: UNIT * out.stderr[0],
        center: UNIT * out.params[1],
        center_error: UNIT * out.stderr[1],
        scale: out.params[2],
        rss: out.rss,
        converged: out.converged,
        iterations: out.iterations,
    })
}

/// Convenience: fit Γ to a simulated curve.
pub fn fit_gamma_curve(curve: &SensitivityCurve) -> Result<GammaFit> {
    fit_gamma(&curve.omega_ac, &curve.normalized, curve.j_work, &LmSettings::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::default_constants;

    #[test]
    fn protocol_frequency() {
        let nv = default_constants();
        assert_eq!(protocol_mw_frequency(&nv, 9.9e6, false).unwrap(), 2.87495e9);
        assert_eq!(protocol_mw_frequency(&nv, 0.0, true).unwrap(), nv.d);
    }

    #[test]
    fn direct_ratio() {
        let db = sensitivity(1e-3, 2e-3 / 1e-6).unwrap();
        assert!((db - 0.5e-6).abs() < 1e-18);
        assert_eq!(sensitivity(2e-3, 2e-3 / 1e-6).unwrap(), 2.0 * db);
        assert_eq!(sensitivity(1e-3, 0.0), Err(Error::InsensitiveOperatingPoint));
    }

    #[test]
    fn shot_noise_scaling() {
        let noise = NoiseModel::ShotLike { sigma0: 2e-3, t0: 1.0 };
        assert!((noise.delta_s(4.0) - 1e-3).abs() < 1e-15);
        assert_eq!(noise.unit(), SensitivityUnit::TeslaPerRootHz);
        let constant = NoiseModel::Constant { sigma0: 2e-3 };
        assert_eq!(constant.delta_s(100.0), 2e-3);
    }

    #[test]
    fn slope_vanishes_without_probe() {
        let nv = default_constants();
        let drive = DriveParams::new(0.0, protocol_mw_frequency(&nv, 9.9e6, true).unwrap(), 0.0, 9.9e6);
        let b = default_working_amplitude(&nv);
        let s = signal_slope(&nv, &drive, b, default_step(&nv, b), &ModelOptions::default()).unwrap();
        assert_eq!(s.richardson, 0.0);
    }

    #[test]
    fn slope_preconditions() {
        let nv = default_constants();
        let drive = DriveParams::new(1e-6, 2.875e9, 0.0, 9.9e6);
        let opts = ModelOptions::default();
        assert!(signal_slope(&nv, &drive, 0.0, 1e-9, &opts).is_err());
        assert!(signal_slope(&nv, &drive, 1e-6, 0.0, &opts).is_err());
        assert!(signal_slope(&nv, &drive, 1e-6, 2e-6, &opts).is_err());
    }

    #[test]
    fn strong_probe_invalidates_slope() {
        let nv = default_constants();
        // λ_b = 1 MHz on resonance: |b|² = 0.25
        let b_mw = 2.0 * 1e6 / nv.gamma_e;
        let drive = DriveParams::new(b_mw, protocol_mw_frequency(&nv, 9.9e6, true).unwrap(), 0.0, 9.9e6);
        let b = default_working_amplitude(&nv);
        let err = signal_slope(&nv, &drive, b, default_step(&nv, b), &ModelOptions::default()).unwrap_err();
        assert!(matches!(err, Error::ModelInvalid { .. }));
    }

    #[test]
    fn bandwidth_edges() {
        let x: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + (v - 5.0) * (v - 5.0)).collect();
        // crossings at 5 ± 1
        assert!((bandwidth_of(&x, &y, 2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(bandwidth_of(&x, &y, 100.0), Err(Error::GridTooNarrow(_))));
        assert!(bandwidth_of(&x, &y, 1.0).is_err());
        assert!(bandwidth_of(&x, &y, 1.0 + 1e-9).unwrap() < 1e-8);
    }
}
