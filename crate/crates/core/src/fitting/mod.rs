//! Resonance extraction: multi-Lorentzian fits of single rows and the
//! four-branch anticrossing model across a map.

mod branches;
mod lorentzian;

pub use branches::{
    extract_branches, fit_branch_model, fitted_branches, BranchFit, BranchFitSettings, BranchPoint, BranchRow,
    BranchSet, ExtractSettings,
};
pub use lorentzian::{
    detect_and_fit, detect_dips, fit_lorentzians, median, DetectSettings, Dip, DipErrors, DipGuess, FitResult,
    FitSettings, LorentzianModel, MAX_DIPS,
};
