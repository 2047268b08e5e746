//! Rotating-frame two-mode model of the RF-dressed |B⟩/|D⟩ pair and its
//! steady state under continuous microwave probing.
//!
//! In the frame rotating with the microwave on |0⟩ and with the RF on |D⟩,
//! the ensemble behaves as two coupled damped oscillators
//!
//! ```text
//! H' = ω_b b†b + ω_d d†d + J (b†d + b d†) + λ_b (b + b†)
//! db/dt = −i ω_b b − i J d − i λ_b − Γ_b b
//! dd/dt = −i ω_d d − i J b − Γ_d d
//! ```
//!
//! with ω_b = D + E_x − ω_mw, ω_d = D − E_x − ω_mw + ω_AC, J = γ_e B_AC^z / 2
//! and λ_b = γ_e B_mw^x / 2. The photoluminescence proxy is the population
//! left in |0⟩, p0 = 1 − |b|² − |d|².

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::effective_params;
use crate::params::{DriveParams, NVParams};

/// Excited population above which the linear (oscillator) picture is flagged.
pub const VALIDITY_LIMIT: f64 = 0.1;

const SINGULAR_DENOMINATOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModeModel {
    /// Detuning of the probed mode (Hz).
    pub omega_b: f64,
    /// Detuning of the RF-coupled partner mode (Hz).
    pub omega_d: f64,
    /// RF coupling (Hz).
    pub j: f64,
    /// Microwave probe strength on the probed mode (Hz).
    pub lambda_b: f64,
    pub gamma_b: f64,
    pub gamma_d: f64,
}

/// How the two-mode model is built from the NV and drive parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    /// Use (D′, E_x′) from the second-order elimination of B_x instead of the
    /// bare (D, E_x).
    pub use_effective: bool,
    /// Amplitude (T) of an additional, independent microwave probe of |D⟩.
    /// When set, a mirrored model (|D⟩ probed, |B⟩ RF-coupled) is evaluated
    /// and its deficit added, giving the |D⟩ dip and the second pair of
    /// dressed resonances.
    pub dark_probe: Option<f64>,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            use_effective: true,
            dark_probe: None,
        }
    }
}

/// (D, E_x) as used by the model, effective or bare.
pub fn model_splitting(nv: &NVParams, use_effective: bool) -> Result<(f64, f64)> {
    if use_effective {
        let eff = effective_params(nv)?;
        Ok((eff.d, eff.ex))
    } else {
        nv.check()?;
        Ok((nv.d, nv.ex))
    }
}

pub fn build_two_mode(nv: &NVParams, drive: &DriveParams, use_effective: bool) -> Result<TwoModeModel> {
    let (d, ex) = model_splitting(nv, use_effective)?;
    Ok(TwoModeModel {
        omega_b: d + ex - drive.omega_mw,
        omega_d: d - ex - drive.omega_mw + drive.omega_ac,
        j: nv.gamma_e * drive.b_ac[2] / 2.0,
        lambda_b: nv.gamma_e * drive.b_mw[0] / 2.0,
        gamma_b: nv.gamma_b,
        gamma_d: nv.gamma_d,
    })
}

/// Mirror of [`build_two_mode`] for a probe of |D⟩: the probed slot holds
/// |D⟩ (detuning D − E_x − ω_mw) and the partner slot holds |B⟩ shifted down
/// by one RF quantum.
pub fn build_dark_probe_mode(
    nv: &NVParams,
    drive: &DriveParams,
    dark_probe_b_mw: f64,
    use_effective: bool,
) -> Result<TwoModeModel> {
    let (d, ex) = model_splitting(nv, use_effective)?;
    Ok(TwoModeModel {
        omega_b: d - ex - drive.omega_mw,
        omega_d: d + ex - drive.omega_mw - drive.omega_ac,
        j: nv.gamma_e * drive.b_ac[2] / 2.0,
        lambda_b: nv.gamma_e * dark_probe_b_mw / 2.0,
        gamma_b: nv.gamma_d,
        gamma_d: nv.gamma_b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyAmplitudes {
    pub b: Complex64,
    pub d: Complex64,
    pub p0: f64,
    pub model_valid: bool,
}

impl SteadyAmplitudes {
    pub fn from_amplitudes(b: Complex64, d: Complex64) -> Self {
        let population = b.norm_sqr() + d.norm_sqr();
        Self {
            b,
            d,
            p0: 1.0 - population,
            model_valid: population <= VALIDITY_LIMIT,
        }
    }

    pub fn population(&self) -> f64 {
        self.b.norm_sqr() + self.d.norm_sqr()
    }
}

impl TwoModeModel {
    pub fn check(&self) -> Result<()> {
        for (name, v) in [
            ("omega_b", self.omega_b),
            ("omega_d", self.omega_d),
            ("j", self.j),
            ("lambda_b", self.lambda_b),
            ("gamma_b", self.gamma_b),
            ("gamma_d", self.gamma_d),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite { name });
            }
        }
        if self.gamma_b <= 0.0 {
            return Err(Error::invalid("gamma_b", "must be > 0"));
        }
        if self.gamma_d <= 0.0 {
            return Err(Error::invalid("gamma_d", "must be > 0"));
        }
        if self.j < 0.0 || self.lambda_b < 0.0 {
            return Err(Error::invalid("j/lambda_b", "must be >= 0"));
        }
        Ok(())
    }

    /// Right-hand side of the amplitude equations at (b, d).
    pub fn rhs(&self, b: Complex64, d: Complex64) -> (Complex64, Complex64) {
        let i = Complex64::i();
        let db = -i * self.omega_b * b - i * self.j * d - i * self.lambda_b - self.gamma_b * b;
        let dd = -i * self.omega_d * d - i * self.j * b - self.gamma_d * d;
        (db, dd)
    }
}

/// Closed-form steady state:
/// b = −λ_b(ω_d − iΓ_d)/Δ, d = λ_b J/Δ, Δ = (ω_b − iΓ_b)(ω_d − iΓ_d) − J².
pub fn steady_amplitudes(m: &TwoModeModel) -> Result<SteadyAmplitudes> {
    m.check()?;
    let zb = Complex64::new(m.omega_b, -m.gamma_b);
    let zd = Complex64::new(m.omega_d, -m.gamma_d);
    let denom = zb * zd - m.j * m.j;
    // Compare in units of the largest scale so the guard is dimensionless.
    let scale = [m.omega_b, m.omega_d, m.j, m.gamma_b, m.gamma_d]
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if denom.norm() < SINGULAR_DENOMINATOR * scale * scale || denom.norm() == 0.0 {
        return Err(Error::SingularSteadyState {
            magnitude: denom.norm(),
        });
    }
    let b = -m.lambda_b * zd / denom;
    let d = m.lambda_b * m.j / denom;
    let out = SteadyAmplitudes::from_amplitudes(b, d);
    if out.population() >= 1.0 {
        return Err(Error::ModelBreakdown {
            population: out.population(),
        });
    }
    Ok(out)
}

/// p0 for a full drive configuration, including the optional |D⟩ probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Response {
    pub p0: f64,
    pub population: f64,
    pub model_valid: bool,
}

pub fn response(nv: &NVParams, drive: &DriveParams, opts: &ModelOptions) -> Result<Response> {
    let main = steady_amplitudes(&build_two_mode(nv, drive, opts.use_effective)?)?;
    let mut population = main.population();
    if let Some(b_probe) = opts.dark_probe {
        let mirror = build_dark_probe_mode(nv, drive, b_probe, opts.use_effective)?;
        population += steady_amplitudes(&mirror)?.population();
    }
    if population >= 1.0 {
        return Err(Error::ModelBreakdown { population });
    }
    Ok(Response {
        p0: 1.0 - population,
        population,
        model_valid: population <= VALIDITY_LIMIT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::default_constants;

    fn model(omega_b: f64, omega_d: f64, j: f64, lambda_b: f64, gamma: f64) -> TwoModeModel {
        TwoModeModel {
            omega_b,
            omega_d,
            j,
            lambda_b,
            gamma_b: gamma,
            gamma_d: gamma,
        }
    }

    #[test]
    fn on_resonance_microwave_zeroes_bright_detuning() {
        let nv = default_constants();
        let drive = DriveParams::new(1e-5, nv.d + nv.ex, 0.0, 3.3e6);
        let m = build_two_mode(&nv, &drive, false).unwrap();
        assert_eq!(m.omega_b, 0.0);
    }

    #[test]
    fn coupling_is_half_the_rf_rabi_frequency() {
        let nv = default_constants();
        let b_ac = 1e6 / nv.gamma_e;
        let m = build_two_mode(&nv, &DriveParams::new(0.0, 2.87e9, b_ac, 9.9e6), false).unwrap();
        assert!((m.j - 0.5e6).abs() < 1e-9);
    }

    #[test]
    fn fixed_frequency_protocol_gives_opposite_detunings() {
        let nv = default_constants();
        let delta = 0.7e6;
        let omega_ac = 2.0 * nv.ex + delta;
        let drive = DriveParams::new(0.0, nv.d + 0.5 * omega_ac, 0.0, omega_ac);
        let m = build_two_mode(&nv, &drive, false).unwrap();
        assert!((m.omega_b + delta / 2.0).abs() < 1e-6);
        assert!((m.omega_d - delta / 2.0).abs() < 1e-6);
    }

    #[test]
    fn uncoupled_response_is_single_lorentzian() {
        let m = model(0.8e6, -3e6, 0.0, 0.1e6, 2e6);
        let s = steady_amplitudes(&m).unwrap();
        assert_eq!(s.d, Complex64::new(0.0, 0.0));
        let expected = 0.1e6_f64.powi(2) / (0.8e6_f64.powi(2) + 2e6_f64.powi(2));
        assert!((s.b.norm_sqr() - expected).abs() < 1e-15);
    }

    #[test]
    fn no_probe_means_full_fluorescence() {
        let s = steady_amplitudes(&model(0.3e6, 1e6, 1e6, 0.0, 2e6)).unwrap();
        assert_eq!(s.p0, 1.0);
        assert_eq!(s.population(), 0.0);
    }

    #[test]
    fn resonant_coupled_population() {
        let s = steady_amplitudes(&model(0.0, 0.0, 1e6, 0.2e6, 2e6)).unwrap();
        assert!((s.population() - 0.008).abs() < 1e-15);
        assert!((s.p0 - 0.992).abs() < 1e-15);
        let (db, dd) = m_rhs(&model(0.0, 0.0, 1e6, 0.2e6, 2e6), &s);
        assert!(db.norm() < 1e-12 * 0.2e6 && dd.norm() < 1e-12 * 0.2e6);
    }

    fn m_rhs(m: &TwoModeModel, s: &SteadyAmplitudes) -> (Complex64, Complex64) {
        m.rhs(s.b, s.d)
    }

    #[test]
    fn validity_flag_and_breakdown() {
        let s = steady_amplitudes(&model(0.0, 5e6, 0.0, 0.8e6, 2e6)).unwrap();
        assert!(!s.model_valid);
        assert!(matches!(
            steady_amplitudes(&model(0.0, 5e6, 0.0, 3e6, 2e6)),
            Err(Error::ModelBreakdown { .. })
        ));
    }

    #[test]
    fn rejects_nonpositive_decay() {
        let mut m = model(0.0, 0.0, 1e6, 1e5, 2e6);
        m.gamma_d = 0.0;
        assert!(steady_amplitudes(&m).is_err());
    }

    #[test]
    fn dark_probe_adds_dark_dip() {
        let nv = default_constants();
        let opts = ModelOptions {
            use_effective: true,
            dark_probe: Some(1e-5),
        };
        let at_dark = DriveParams::new(1e-5, nv.d - nv.ex, 0.0, 0.0);
        let with = response(&nv, &at_dark, &opts).unwrap();
        let without = response(&nv, &at_dark, &ModelOptions::default()).unwrap();
        assert!(with.population > 10.0 * without.population);
    }
}
