//! Simulation and analysis of continuous-wave double-resonance ODMR with
//! NV-center ensembles: a microwave probes the |0⟩ → |B⟩ transition while an
//! RF field (the AC target) dresses the |B⟩/|D⟩ pair.
//!
//! * [`params`]: NV and drive parameters, grids, regime checks
//! * [`hamiltonian`]: spin-1 Hamiltonian, eigenbasis, effective parameters
//! * [`response`]: two-mode rotating-frame model and its steady state
//! * [`oracle`]: ODE integration of the same model to steady state
//! * [`spectrum`]: spectra, anticrossing maps, analytic resonance branches
//! * [`fitting`]: Lorentzian fits and the branch-model fit
//! * [`sensitivity`]: slope, δB, frequency sweep, bandwidth, Γ fit

pub mod error;
pub mod fitting;
pub mod hamiltonian;
pub mod lm;
pub mod oracle;
pub mod params;
pub mod response;
pub mod sensitivity;
pub mod spectrum;

pub use error::{Error, Result};
pub use params::{default_constants, validate, DriveParams, FrequencyGrid, NVParams};
pub use response::{build_two_mode, steady_amplitudes, ModelOptions, SteadyAmplitudes, TwoModeModel};
pub use spectrum::{resonance_branches, spectrum_1d, spectrum_2d, Axis, Spectrum};
