//! Run configuration: TOML with unit-suffixed quantities, normalized to SI
//! on load and written back as plain SI numbers.

use std::fmt;
use std::path::{Path, PathBuf};

use odmr_core::fitting::{DetectSettings, ExtractSettings, FitSettings};
use odmr_core::lm::LmSettings;
use odmr_core::params::{DriveParams, FrequencyGrid, NVParams, GAMMA_E, STRAIN_EX, ZERO_FIELD_SPLITTING};
use odmr_core::response::ModelOptions;
use odmr_core::sensitivity::{NoiseModel, DEFAULT_THRESHOLD};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Frequency,
    Field,
}

const FREQUENCY_UNITS: [(&str, f64); 4] = [("GHz", 1e9), ("MHz", 1e6), ("kHz", 1e3), ("Hz", 1.0)];
const FIELD_UNITS: [(&str, f64); 5] = [("mT", 1e-3), ("uT", 1e-6), ("µT", 1e-6), ("nT", 1e-9), ("T", 1.0)];

/// Parse "9.9 MHz", "2.87GHz", "35 nT" or a bare SI number.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let t = text.trim();
    let table: &[(&str, f64)] = match dim {
        Dimension::Frequency => &FREQUENCY_UNITS,
        Dimension::Field => &FIELD_UNITS,
    };
    let (number, factor) = table
        .iter()
        .find_map(|(suffix, f)| t.strip_suffix(suffix).map(|n| (n.trim_end(), *f)))
        .unwrap_or((t, 1.0));
    let value: f64 = number
        .parse()
        .map_err(|_| format!("cannot read {text:?} as a {}", dim.describe()))?;
    if !value.is_finite() {
        return Err(format!("{text:?} is not finite"));
    }
    // exact for unit-free input; one rounding otherwise
    Ok(if factor == 1.0 { value } else { value * factor })
}

impl Dimension {
    fn describe(self) -> &'static str {
        match self {
            Dimension::Frequency => "frequency (Hz, kHz, MHz, GHz)",
            Dimension::Field => "field (T, mT, uT, nT)",
        }
    }
}

macro_rules! quantity {
    ($name:ident, $dim:expr) => {
        #[derive(Debug, Clone, Copy, PartialEq, Default)]
        pub struct $name(pub f64);

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_f64(self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                struct V;
                impl<'de> Visitor<'de> for V {
                    type Value = $name;
                    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                        write!(f, "a number or a string with a unit suffix")
                    }
                    fn visit_f64<E: de::Error>(self, v: f64) -> Result<$name, E> {
                        Ok($name(v))
                    }
                    fn visit_i64<E: de::Error>(self, v: i64) -> Result<$name, E> {
                        Ok($name(v as f64))
                    }
                    fn visit_u64<E: de::Error>(self, v: u64) -> Result<$name, E> {
                        Ok($name(v as f64))
                    }
                    fn visit_str<E: de::Error>(self, v: &str) -> Result<$name, E> {
                        parse_quantity(v, $dim).map($name).map_err(E::custom)
                    }
                }
                d.deserialize_any(V)
            }
        }
    };
}

quantity!(Hertz, Dimension::Frequency);
quantity!(Tesla, Dimension::Field);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub start: Hertz,
    pub stop: Hertz,
    pub count: usize,
}

impl GridConfig {
    fn new(start: f64, stop: f64, count: usize) -> Self {
        Self {
            start: Hertz(start),
            stop: Hertz(stop),
            count,
        }
    }

    pub fn grid(&self) -> odmr_core::Result<FrequencyGrid> {
        FrequencyGrid::new(self.start.0, self.stop.0, self.count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NvSection {
    pub d: Hertz,
    pub ex: Hertz,
    pub ey: Hertz,
    pub bx: Tesla,
    /// Hz/T
    pub gamma_e: f64,
    pub gamma_b: Hertz,
    pub gamma_d: Hertz,
}

impl Default for NvSection {
    fn default() -> Self {
        Self {
            d: Hertz(ZERO_FIELD_SPLITTING),
            ex: Hertz(STRAIN_EX),
            ey: Hertz(0.0),
            bx: Tesla(0.0),
            gamma_e: GAMMA_E,
            gamma_b: Hertz(2e6),
            gamma_d: Hertz(2e6),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveSection {
    /// Microwave amplitude along x.
    pub b_mw: Tesla,
    pub omega_mw: Hertz,
    /// RF amplitude along z.
    pub b_ac: Tesla,
    pub omega_ac: Hertz,
}

impl Default for DriveSection {
    fn default() -> Self {
        Self {
            // λ_b = 0.2 MHz
            b_mw: Tesla(0.4e6 / GAMMA_E),
            omega_mw: Hertz(ZERO_FIELD_SPLITTING),
            b_ac: Tesla(0.0),
            omega_ac: Hertz(2.0 * STRAIN_EX),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridsSection {
    pub mw: GridConfig,
    pub ac: GridConfig,
    pub sensitivity: GridConfig,
}

impl Default for GridsSection {
    fn default() -> Self {
        Self {
            mw: GridConfig::new(ZERO_FIELD_SPLITTING - 15e6, ZERO_FIELD_SPLITTING + 15e6, 1201),
            ac: GridConfig::new(2e6, 18e6, 161),
            sensitivity: GridConfig::new(2.0 * STRAIN_EX - 9e6, 2.0 * STRAIN_EX + 9e6, 181),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub use_effective: bool,
    /// Also probe |D⟩ (spectrum and map only).
    pub dark_probe: bool,
    /// Amplitude of the |D⟩ probe; defaults to `drive.b_mw`.
    pub dark_probe_b_mw: Option<Tesla>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            use_effective: true,
            dark_probe: true,
            dark_probe_b_mw: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// σ of seeded Gaussian noise added to simulated p0.
    pub add_noise: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { add_noise: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Detection noise level; `None` takes it from the input file header.
    pub noise_sigma: Option<f64>,
    pub threshold_sigma: f64,
    pub max_dips: usize,
    pub max_iterations: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub shared_width: bool,
    pub max_rounds: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        let lm = LmSettings::default();
        Self {
            noise_sigma: None,
            threshold_sigma: 3.0,
            max_dips: 4,
            max_iterations: lm.max_iterations,
            ftol: lm.ftol,
            xtol: lm.xtol,
            shared_width: false,
            max_rounds: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySection {
    /// Working RF amplitude; defaults to γ_e·B = 0.2·Γ.
    pub b_ac_work: Option<Tesla>,
    pub step: Option<Tesla>,
    pub threshold: f64,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        Self {
            b_ac_work: None,
            step: None,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub nv: NvSection,
    pub drive: DriveSection,
    pub grids: GridsSection,
    pub model: ModelSection,
    pub simulate: SimulateSection,
    pub fit: FitSection,
    pub sensitivity: SensitivitySection,
    pub noise: NoiseModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            nv: NvSection::default(),
            drive: DriveSection::default(),
            grids: GridsSection::default(),
            model: ModelSection::default(),
            simulate: SimulateSection::default(),
            fit: FitSection::default(),
            sensitivity: SensitivitySection::default(),
            noise: NoiseModel::ShotLike { sigma0: 1e-3, t0: 1.0 },
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn nv_params(&self) -> NVParams {
        NVParams {
            d: self.nv.d.0,
            ex: self.nv.ex.0,
            ey: self.nv.ey.0,
            bx: self.nv.bx.0,
            gamma_e: self.nv.gamma_e,
            gamma_b: self.nv.gamma_b.0,
            gamma_d: self.nv.gamma_d.0,
        }
    }

    pub fn drive_params(&self) -> DriveParams {
        DriveParams::new(
            self.drive.b_mw.0,
            self.drive.omega_mw.0,
            self.drive.b_ac.0,
            self.drive.omega_ac.0,
        )
    }

    /// Options for spectra and maps.
    pub fn model_options(&self) -> ModelOptions {
        ModelOptions {
            use_effective: self.model.use_effective,
            dark_probe: self
                .model
                .dark_probe
                .then(|| self.model.dark_probe_b_mw.unwrap_or(self.drive.b_mw).0),
        }
    }

    pub fn extract_settings(&self, noise_sigma: f64) -> ExtractSettings {
        ExtractSettings {
            noise_sigma,
            detect: DetectSettings {
                threshold_sigma: self.fit.threshold_sigma,
                max_dips: self.fit.max_dips,
            },
            fit: FitSettings {
                max_iterations: self.fit.max_iterations,
                ftol: self.fit.ftol,
                xtol: self.fit.xtol,
                shared_width: self.fit.shared_width,
            },
        }
    }

    pub fn lm_settings(&self) -> LmSettings {
        LmSettings {
            max_iterations: self.fit.max_iterations,
            ftol: self.fit.ftol,
            xtol: self.fit.xtol,
        }
    }

    /// Checks that do not need a simulation.
    pub fn check(&self) -> Result<(), CliError> {
        self.nv_params().check()?;
        self.drive_params().check()?;
        self.noise.check()?;
        if !(self.simulate.add_noise >= 0.0) || !self.simulate.add_noise.is_finite() {
            return Err(CliError::Config("simulate.add_noise must be finite and >= 0".into()));
        }
        if let Some(s) = self.fit.noise_sigma {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(CliError::Config("fit.noise_sigma must be finite and >= 0".into()));
            }
        }
        if self.fit.max_dips == 0 || self.fit.max_dips > odmr_core::fitting::MAX_DIPS {
            return Err(CliError::Config(format!(
                "fit.max_dips must lie in 1..={}",
                odmr_core::fitting::MAX_DIPS
            )));
        }
        if !(self.sensitivity.threshold > 1.0) {
            return Err(CliError::Config("sensitivity.threshold must be > 1".into()));
        }
        Ok(())
    }
}
