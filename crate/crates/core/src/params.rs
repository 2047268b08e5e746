//! Shared parameter types for the NV ground-state model.
//!
//! All frequencies are ordinary frequencies in Hz and every Hamiltonian is
//! written in frequency units (energies divided by h). Magnetic fields are in
//! tesla and converted to frequencies with [`GAMMA_E`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electron gyromagnetic ratio g·μ_B/h for g = 2.0028, in Hz/T.
pub const GAMMA_E: f64 = 2.8024e10;

/// Zero-field splitting of the NV ground state.
pub const ZERO_FIELD_SPLITTING: f64 = 2.87e9;

/// Transverse strain: half of the 9.9 MHz bright–dark splitting.
pub const STRAIN_EX: f64 = 4.95e6;

/// Common amplitude decay rate of |B⟩ and |D⟩.
pub const DECAY_RATE: f64 = 2.0e6;

/// Static parameters of an NV ensemble with one crystallographic axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NVParams {
    /// Zero-field splitting D (Hz).
    pub d: f64,
    /// Strain E_x (Hz).
    pub ex: f64,
    /// Strain E_y (Hz).
    pub ey: f64,
    /// Transverse DC field along the NV x axis (T).
    pub bx: f64,
    /// Gyromagnetic ratio (Hz/T).
    pub gamma_e: f64,
    /// Decay rate of the |B⟩ amplitude (Hz).
    pub gamma_b: f64,
    /// Decay rate of the |D⟩ amplitude (Hz).
    pub gamma_d: f64,
}

/// The template used throughout: D = 2.87 GHz, 2E_x = 9.9 MHz, Γ = 2 MHz,
/// no transverse field and no E_y strain.
pub fn default_constants() -> NVParams {
    NVParams {
        d: ZERO_FIELD_SPLITTING,
        ex: STRAIN_EX,
        ey: 0.0,
        bx: 0.0,
        gamma_e: GAMMA_E,
        gamma_b: DECAY_RATE,
        gamma_d: DECAY_RATE,
    }
}

impl Default for NVParams {
    fn default() -> Self {
        default_constants()
    }
}

impl NVParams {
    /// Zeeman frequency γ_e·B_x of the transverse field (Hz).
    pub fn zeeman(&self) -> f64 {
        self.gamma_e * self.bx
    }

    pub fn with_decay(mut self, gamma: f64) -> Self {
        self.gamma_b = gamma;
        self.gamma_d = gamma;
        self
    }

    /// Hard checks only: finiteness and signs. Regime checks live in
    /// [`validate`].
    pub fn check(&self) -> Result<()> {
        let fields = [
            ("d", self.d),
            ("ex", self.ex),
            ("ey", self.ey),
            ("bx", self.bx),
            ("gamma_e", self.gamma_e),
            ("gamma_b", self.gamma_b),
            ("gamma_d", self.gamma_d),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(Error::NonFinite { name });
            }
        }
        for (name, value) in [("ex", self.ex), ("ey", self.ey), ("bx", self.bx)] {
            if value < 0.0 {
                return Err(Error::invalid(name, format!("must be >= 0, got {value}")));
            }
        }
        for (name, value) in [
            ("d", self.d),
            ("gamma_e", self.gamma_e),
            ("gamma_b", self.gamma_b),
            ("gamma_d", self.gamma_d),
        ] {
            if value <= 0.0 {
                return Err(Error::invalid(name, format!("must be > 0, got {value}")));
            }
        }
        Ok(())
    }
}

/// Microwave probe and RF (target AC field) drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    /// Microwave amplitude components (x, y, z) in the NV frame (T).
    pub b_mw: [f64; 3],
    /// Microwave frequency (Hz).
    pub omega_mw: f64,
    /// RF amplitude components (x, y, z) in the NV frame (T).
    pub b_ac: [f64; 3],
    /// RF frequency (Hz).
    pub omega_ac: f64,
}

impl DriveParams {
    pub fn new(b_mw_x: f64, omega_mw: f64, b_ac_z: f64, omega_ac: f64) -> Self {
        Self {
            b_mw: [b_mw_x, 0.0, 0.0],
            omega_mw,
            b_ac: [0.0, 0.0, b_ac_z],
            omega_ac,
        }
    }

    pub fn check(&self) -> Result<()> {
        for (name, v) in [
            ("b_mw.x", self.b_mw[0]),
            ("b_mw.y", self.b_mw[1]),
            ("b_mw.z", self.b_mw[2]),
            ("b_ac.x", self.b_ac[0]),
            ("b_ac.y", self.b_ac[1]),
            ("b_ac.z", self.b_ac[2]),
            ("omega_mw", self.omega_mw),
            ("omega_ac", self.omega_ac),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite { name });
            }
            if v < 0.0 {
                return Err(Error::invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        if self.omega_mw <= 0.0 {
            return Err(Error::invalid("omega_mw", "must be > 0"));
        }
        Ok(())
    }

    /// Components that the rotating-wave two-mode model ignores: only B_mw^x
    /// and B_AC^z survive.
    pub fn dropped_components(&self) -> DroppedComponents {
        DroppedComponents {
            b_mw_y: self.b_mw[1],
            b_mw_z: self.b_mw[2],
            b_ac_x: self.b_ac[0],
            b_ac_y: self.b_ac[1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DroppedComponents {
    pub b_mw_y: f64,
    pub b_mw_z: f64,
    pub b_ac_x: f64,
    pub b_ac_y: f64,
}

impl DroppedComponents {
    pub fn any(&self) -> bool {
        [self.b_mw_y, self.b_mw_z, self.b_ac_x, self.b_ac_y]
            .iter()
            .any(|v| *v != 0.0)
    }
}

/// Uniform frequency grid. Point `i` is `start + i * (stop - start) / (count - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl FrequencyGrid {
    pub fn new(start: f64, stop: f64, count: usize) -> Result<Self> {
        let grid = Self { start, stop, count };
        grid.check()?;
        Ok(grid)
    }

    /// Grid centered on `center` spanning `±half_width`.
    pub fn centered(center: f64, half_width: f64, count: usize) -> Result<Self> {
        Self::new(center - half_width, center + half_width, count)
    }

    pub fn check(&self) -> Result<()> {
        if !self.start.is_finite() {
            return Err(Error::NonFinite { name: "grid.start" });
        }
        if !self.stop.is_finite() {
            return Err(Error::NonFinite { name: "grid.stop" });
        }
        if self.stop <= self.start {
            return Err(Error::invalid("grid", "stop must exceed start"));
        }
        if self.count < 2 {
            return Err(Error::invalid("grid.count", "need at least 2 points"));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.stop - self.start) / (self.count - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.start + i as f64 * (self.stop - self.start) / (self.count - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.point(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// Numeric criteria for the `D ≫ γ_e·B_x ≫ E_y` ordering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    /// Required D / (γ_e·B_x).
    pub splitting_over_zeeman: f64,
    /// Required (γ_e·B_x) / E_y.
    pub zeeman_over_strain: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            splitting_over_zeeman: 20.0,
            zeeman_over_strain: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeCondition {
    /// D ≥ k·γ_e·B_x
    SplittingDominatesZeeman,
    /// γ_e·B_x ≥ k·E_y
    ZeemanDominatesStrain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeViolation {
    pub condition: RegimeCondition,
    /// Ratio actually achieved (may be 0 or infinite).
    pub ratio: f64,
    pub required: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<RegimeViolation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn valid_perturbative(&self) -> bool {
        self.passed()
    }
}

pub fn validate(params: &NVParams) -> Result<ValidationReport> {
    validate_with(params, &RegimeThresholds::default())
}

pub fn validate_with(params: &NVParams, thresholds: &RegimeThresholds) -> Result<ValidationReport> {
    params.check()?;
    let zeeman = params.zeeman();
    let mut violations = Vec::new();

    if params.d < thresholds.splitting_over_zeeman * zeeman {
        violations.push(RegimeViolation {
            condition: RegimeCondition::SplittingDominatesZeeman,
            ratio: params.d / zeeman,
            required: thresholds.splitting_over_zeeman,
        });
    }
    if zeeman < thresholds.zeeman_over_strain * params.ey {
        violations.push(RegimeViolation {
            condition: RegimeCondition::ZeemanDominatesStrain,
            ratio: zeeman / params.ey,
            required: thresholds.zeeman_over_strain,
        });
    }
    Ok(ValidationReport { violations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reported_values() {
        let p = default_constants();
        assert_eq!(p.d, 2.87e9);
        assert_eq!(2.0 * p.ex, 9.9e6);
        assert_eq!(p.gamma_b, 2.0e6);
        assert_eq!(p.gamma_d, 2.0e6);
        assert_eq!(p.ey, 0.0);
        assert_eq!(p.bx, 0.0);
    }

    #[test]
    fn zero_field_passes() {
        let report = validate(&default_constants()).unwrap();
        assert!(report.passed());
    }

    #[test]
    fn two_millitesla_with_small_ey_passes() {
        let p = NVParams {
            bx: 2e-3,
            ey: 1e3,
            ..default_constants()
        };
        // 56 MHz * 20 = 1.12 GHz < 2.87 GHz, and 56 MHz > 5 kHz
        assert!((p.zeeman() - 56.048e6).abs() < 1.0);
        assert!(validate(&p).unwrap().passed());
    }

    #[test]
    fn strong_field_violates_first_condition() {
        let p = NVParams {
            bx: 0.2,
            ..default_constants()
        };
        let report = validate(&p).unwrap();
        assert_eq!(report.violations.len(), 1);
        let v = report.violations[0];
        assert_eq!(v.condition, RegimeCondition::SplittingDominatesZeeman);
        assert!((v.ratio - 2.87e9 / 5.6048e9).abs() < 1e-12);
    }

    #[test]
    fn strain_larger_than_zeeman_warns() {
        let p = NVParams {
            bx: 1e-4,
            ey: 1e6,
            ..default_constants()
        };
        let report = validate(&p).unwrap();
        assert_eq!(
            report.violations[0].condition,
            RegimeCondition::ZeemanDominatesStrain
        );
    }

    #[test]
    fn hard_errors_on_bad_inputs() {
        let nan = NVParams {
            d: f64::NAN,
            ..default_constants()
        };
        assert_eq!(validate(&nan), Err(Error::NonFinite { name: "d" }));
        let neg = NVParams {
            bx: -1e-3,
            ..default_constants()
        };
        assert!(matches!(
            validate(&neg),
            Err(Error::InvalidParameter { name: "bx", .. })
        ));
    }

    #[test]
    fn grid_points_follow_closed_form() {
        let g = FrequencyGrid::new(2.86e9, 2.88e9, 2001).unwrap();
        for i in [0, 1, 17, 1000, 2000] {
            assert_eq!(g.point(i), 2.86e9 + i as f64 * (2.88e9 - 2.86e9) / 2000.0);
        }
        assert_eq!(g.points().len(), 2001);
        assert_eq!(g.point(2000), 2.88e9);
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(FrequencyGrid::new(1.0, 1.0, 10).is_err());
        assert!(FrequencyGrid::new(1.0, 2.0, 1).is_err());
        assert!(FrequencyGrid::new(f64::NAN, 2.0, 3).is_err());
    }

    #[test]
    fn dropped_drive_components_reported() {
        let mut drive = DriveParams::new(1e-4, 2.87e9, 1e-5, 9.9e6);
        assert!(!drive.dropped_components().any());
        drive.b_mw[1] = 1e-6;
        assert!(drive.dropped_components().any());
    }
}
