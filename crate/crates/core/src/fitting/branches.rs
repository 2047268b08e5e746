//! Tracing dressed-state resonances across a 2D map and fitting the
//! four-branch anticrossing model to them.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lorentzian::{detect_and_fit, median, DetectSettings, FitSettings};
use crate::error::{Error, Result};
use crate::lm::{minimize, LeastSquares, LmSettings};
use crate::spectrum::{branch_frequencies, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub center: f64,
    pub center_error: f64,
    pub depth: f64,
    pub hwhm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub omega_ac: f64,
    /// Ascending; at most four.
    pub centers: Vec<BranchPoint>,
    /// The row had dips but the fit failed.
    pub gap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFit {
    pub d: f64,
    pub ex: f64,
    /// γ_e·B_AC^z (Hz).
    pub rabi: f64,
    pub d_error: f64,
    pub ex_error: f64,
    pub rabi_error: f64,
    pub rss: f64,
    pub points: usize,
    pub iterations: usize,
    /// Number of points assigned to each branch, in
    /// [`branch_frequencies`] order.
    pub assignment_counts: [usize; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSet {
    pub rows: Vec<BranchRow>,
    pub fit: Option<BranchFit>,
}

impl BranchSet {
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.rows
            .iter()
            .flat_map(|r| r.centers.iter().map(move |c| (r.omega_ac, c.center)))
    }

    pub fn point_count(&self) -> usize {
        self.rows.iter().map(|r| r.centers.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractSettings {
    pub noise_sigma: f64,
    pub detect: DetectSettings,
    pub fit: FitSettings,
}

impl Default for ExtractSettings {
    fn default() -> Self {
        Self {
            noise_sigma: 0.0,
            detect: DetectSettings::default(),
            fit: FitSettings::default(),
        }
    }
}

/// Per-row detection and Lorentzian fit. Fitted dips shallower than the
/// detection threshold are dropped; failed fits leave a gap.
pub fn extract_branches(map: &Spectrum, settings: &ExtractSettings) -> Result<BranchSet> {
    let mw = map.mw.points();
    let ac = map.ac.points();
    let min_depth = settings.detect.threshold_sigma * settings.noise_sigma;

    let rows: Result<Vec<BranchRow>> = (0..map.rows())
        .into_par_iter()
        .map(|i| {
            let y = map.row(i);
            let fitted = detect_and_fit(&mw, y, settings.noise_sigma, &settings.detect, &settings.fit)?;
            let row = match fitted {
                None => BranchRow {
                    omega_ac: ac[i],
                    centers: Vec::new(),
                    gap: false,
                },
                Some(fit) if !fit.converged => BranchRow {
                    omega_ac: ac[i],
                    centers: Vec::new(),
                    gap: true,
                },
                Some(fit) => {
                    let centers = fit
                        .model
                        .dips
                        .iter()
                        .zip(&fit.errors)
                        .filter(|(d, _)| d.depth > 0.0 && d.depth >= min_depth)
                        .map(|(d, e)| BranchPoint {
                            center: d.center,
                            center_error: e.center,
                            depth: d.depth,
                            hwhm: d.hwhm,
                        })
                        .collect();
                    BranchRow {
                        omega_ac: ac[i],
                        centers,
                        gap: false,
                    }
                }
            };
            Ok(row)
        })
        .collect();

    Ok(BranchSet { rows: rows?, fit: None })
}

const UNIT: f64 = 1e6;

/// Branch model in scaled coordinates: frequencies in MHz relative to
/// `origin`; parameters [D − origin, E_x, γB].
struct BranchProblem {
    rf: Vec<f64>,
    centers: Vec<f64>,
    branch: Vec<usize>,
}

fn branch_value(p: &[f64], rf: f64, k: usize) -> f64 {
    let root = (2.0 * p[1] - rf).hypot(p[2]);
    let s_rf = if k < 2 { 1.0 } else { -1.0 };
    let s_root = if k % 2 == 0 { 1.0 } else { -1.0 };
    p[0] + 0.5 * s_rf * rf + 0.5 * s_root * root
}

impl LeastSquares for BranchProblem {
    fn n_params(&self) -> usize {
        3
    }
    fn n_residuals(&self) -> usize {
        self.rf.len()
    }
    fn residuals(&self, p: &[f64], r: &mut [f64]) {
        for i in 0..self.rf.len() {
            r[i] = branch_value(p, self.rf[i], self.branch[i]) - self.centers[i];
        }
    }
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        for i in 0..self.rf.len() {
            let k = self.branch[i];
            let s_root = if k % 2 == 0 { 1.0 } else { -1.0 };
            let a = 2.0 * p[1] - self.rf[i];
            let root = a.hypot(p[2]);
            let (d_e, d_g) = if root > 0.0 {
                (2.0 * a / root, p[2] / root)
            } else {
                (0.0, 0.0)
            };
            jac[(i, 0)] = 1.0;
            jac[(i, 1)] = 0.5 * s_root * d_e;
            jac[(i, 2)] = 0.5 * s_root * d_g;
        }
    }
}

/// Nearest branch; exact ties go to the lower-frequency branch.
fn assign(p: &[f64], rf: f64, center: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    let mut best_value = f64::INFINITY;
    for k in 0..4 {
        let v = branch_value(p, rf, k);
        let dist = (v - center).abs();
        if dist < best_dist || (dist == best_dist && v < best_value) {
            best = k;
            best_dist = dist;
            best_value = v;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFitSettings {
    pub lm: LmSettings,
    /// Maximum assignment/refit alternations.
    pub max_rounds: usize,
    /// Optional starting point (D, E_x, γB) in Hz.
    pub initial: Option<[f64; 3]>,
}

impl Default for BranchFitSettings {
    fn default() -> Self {
        Self {
            lm: LmSettings::default(),
            max_rounds: 50,
            initial: None,
        }
    }
}

struct Candidate {
    params: Vec<f64>,
    rss: f64,
    stderr: Vec<f64>,
    iterations: usize,
    branch: Vec<usize>,
}

fn fit_from(rf: &[f64], centers: &[f64], init: [f64; 3], settings: &BranchFitSettings) -> Option<Candidate> {
    let mut p = init.to_vec();
    let mut branch: Vec<usize> = rf.iter().zip(centers).map(|(&r, &c)| assign(&p, r, c)).collect();
    let mut iterations = 0;
    let lm = settings.lm;
    for _ in 0..settings.max_rounds.max(1) {
        let problem = BranchProblem {
            rf: rf.to_vec(),
            centers: centers.to_vec(),
            branch: branch.clone(),
        };
        let out = minimize(&problem, &p, &lm);
        iterations += out.iterations;
        if !out.params.iter().all(|v| v.is_finite()) {
            return None;
        }
        p = out.params.clone();
        let next: Vec<usize> = rf.iter().zip(centers).map(|(&r, &c)| assign(&p, r, c)).collect();
        if next == branch {
            return Some(Candidate {
                params: p,
                rss: out.rss,
                stderr: out.stderr,
                iterations,
                branch,
            });
        }
        branch = next;
    }
    None
}

/// Linear regression of (s² − r²) on r: s² = (2E − r)² + g² gives slope −4E
/// and intercept 4E² + g².
fn splitting_regression(samples: &[(f64, f64)]) -> Option<(f64, f64)> {
    if samples.len() < 2 {
        return None;
    }
    let n = samples.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(r, s) in samples {
        let y = s * s - r * r;
        sx += r;
        sy += y;
        sxx += r * r;
        sxy += r * y;
    }
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-12 * n * sxx.max(1.0) {
        return None;
    }
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;
    let ex = -slope / 4.0;
    let g2 = intercept - 4.0 * ex * ex;
    let g = if g2 > 0.0 { g2.sqrt() } else { 0.1 * ex.abs() };
    Some((ex, g))
}

/// Starting points in scaled units from the structure of the rows: rows with
/// four centers are symmetric about D; two-center rows are read either as a
/// single dressed pair (centered on D + ω_rf/2) or as the |B⟩/|D⟩ pair.
fn initial_guesses(set: &BranchSet, origin: f64) -> Vec<[f64; 3]> {
    let rows: Vec<(f64, Vec<f64>)> = set
        .rows
        .iter()
        .filter(|r| !r.centers.is_empty())
        .map(|r| {
            (
                r.omega_ac / UNIT,
                r.centers.iter().map(|c| (c.center - origin) / UNIT).collect(),
            )
        })
        .collect();
    let mut out = Vec::new();

    let quads: Vec<&(f64, Vec<f64>)> = rows.iter().filter(|(_, c)| c.len() == 4).collect();
    if !quads.is_empty() {
        let ds: Vec<f64> = quads.iter().map(|(_, c)| c.iter().sum::<f64>() / 4.0).collect();
        let d = median(&ds);
        let samples: Vec<(f64, f64)> = quads
            .iter()
            .map(|(r, c)| {
                let reach = c.iter().map(|v| (v - d).abs()).fold(0.0, f64::max);
                (*r, 2.0 * reach - r)
            })
            .collect();
        if let Some((ex, g)) = splitting_regression(&samples) {
            out.push([d, ex, g]);
        }
    }

    let pairs: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|(_, c)| c.len() == 2)
        .map(|(r, c)| (*r, 0.5 * (c[0] + c[1]), c[1] - c[0]))
        .collect();
    if !pairs.is_empty() {
        let d_dressed = median(&pairs.iter().map(|(r, m, _)| m - 0.5 * r).collect::<Vec<_>>());
        let samples: Vec<(f64, f64)> = pairs.iter().map(|(r, _, s)| (*r, *s)).collect();
        if let Some((ex, g)) = splitting_regression(&samples) {
            out.push([d_dressed, ex, g]);
        }
        let d_bd = median(&pairs.iter().map(|(_, m, _)| *m).collect::<Vec<_>>());
        let ex = 0.5 * median(&pairs.iter().map(|(_, _, s)| *s).collect::<Vec<_>>());
        out.push([d_bd, ex, 0.1 * ex]);
    }

    if out.is_empty() {
        let all: Vec<f64> = rows.iter().flat_map(|(_, c)| c.iter().copied()).collect();
        let d = median(&all);
        let spread = all.iter().map(|v| (v - d).abs()).fold(0.0, f64::max);
        out.push([d, spread.max(1e-3), 0.1 * spread.max(1e-3)]);
    }

    // widen each guess over a few coupling strengths
    let mut widened = Vec::new();
    for g in out {
        for factor in [1.0, 3.0, 1.0 / 3.0] {
            widened.push([g[0], g[1], g[2] * factor]);
        }
    }
    widened
}

/// Least-squares fit of the four-branch model to extracted centers, with
/// alternating nearest-branch assignment. Returns (D, E_x, γ_e·B_AC) and
/// their standard errors.
pub fn fit_branch_model(set: &BranchSet, settings: &BranchFitSettings) -> Result<BranchFit> {
    let (rf, centers): (Vec<f64>, Vec<f64>) = set.points().unzip();
    if rf.len() < 6 {
        return Err(Error::InsufficientData {
            needed: 6,
            got: rf.len(),
        });
    }
    if rf.iter().chain(&centers).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { name: "branch points" });
    }

    if set.rows.iter().all(|row| row.centers.len() < 2) {
        return Err(Error::DegenerateData("no row resolves more than one branch".into()));
    }

    let origin = median(&centers);
    let rf_s: Vec<f64> = rf.iter().map(|r| r / UNIT).collect();
    let c_s: Vec<f64> = centers.iter().map(|c| (c - origin) / UNIT).collect();

    let starts: Vec<[f64; 3]> = match settings.initial {
        Some([d, ex, g]) => vec![[(d - origin) / UNIT, ex / UNIT, g / UNIT]],
        None => initial_guesses(set, origin),
    };

    let best = starts
        .iter()
        .filter_map(|s| fit_from(&rf_s, &c_s, *s, settings))
        .min_by(|a, b| a.rss.total_cmp(&b.rss))
        .ok_or_else(|| Error::FitFailed("branch assignment did not settle".into()))?;

    let mut counts = [0usize; 4];
    for &k in &best.branch {
        counts[k] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::DegenerateData("all points lie on a single branch".into()));
    }
    let resonance = 2.0 * best.params[1];
    let below = rf_s.iter().any(|&r| r < resonance);
    let above = rf_s.iter().any(|&r| r > resonance);
    if !(below && above) {
        return Err(Error::DegenerateData(
            "points do not span both sides of the anticrossing".into(),
        ));
    }

    Ok(BranchFit {
        d: origin + UNIT * best.params[0],
        ex: UNIT * best.params[1],
        rabi: UNIT * best.params[2].abs(),
        d_error: UNIT * best.stderr[0],
        ex_error: UNIT * best.stderr[1],
        rabi_error: UNIT * best.stderr[2],
        rss: UNIT * UNIT * best.rss,
        points: rf.len(),
        iterations: best.iterations,
        assignment_counts: counts,
    })
}

/// Branch value in Hz for a fitted model, for plotting and residual checks.
pub fn fitted_branches(fit: &BranchFit, omega_rf: f64) -> [f64; 4] {
    branch_frequencies(fit.d, fit.ex, fit.rabi, omega_rf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(d: f64, ex: f64, rabi: f64, which: &[usize]) -> BranchSet {
        let rows = (0..81)
            .map(|i| {
                let r = 2e6 + i as f64 * 0.2e6;
                let b = branch_frequencies(d, ex, rabi, r);
                let mut centers: Vec<BranchPoint> = which
                    .iter()
                    .map(|&k| BranchPoint {
                        center: b[k],
                        center_error: 0.0,
                        depth: 0.01,
                        hwhm: 1e5,
                    })
                    .collect();
                centers.sort_by(|a, b| a.center.total_cmp(&b.center));
                BranchRow {
                    omega_ac: r,
                    centers,
                    gap: false,
                }
            })
            .collect();
        BranchSet { rows, fit: None }
    }

    #[test]
    fn recovers_four_branch_data() {
        let set = synthetic(2.87e9, 4.95e6, 1e6, &[0, 1, 2, 3]);
        let fit = fit_branch_model(&set, &BranchFitSettings::default()).unwrap();
        assert!((fit.d - 2.87e9).abs() < 1e-6 * 2.87e9);
        assert!((fit.ex - 4.95e6).abs() < 1e-6 * 4.95e6);
        assert!((fit.rabi - 1e6).abs() < 1e-6 * 1e6);
    }

    #[test]
    fn recovers_single_dressed_pair() {
        let set = synthetic(2.87e9, 4.95e6, 1e6, &[0, 1]);
        let fit = fit_branch_model(&set, &BranchFitSettings::default()).unwrap();
        assert!((fit.ex - 4.95e6).abs() < 1e-6 * 4.95e6);
        assert!((fit.rabi - 1e6).abs() < 1e-6 * 1e6);
    }

    #[test]
    fn too_few_points() {
        let mut set = synthetic(2.87e9, 4.95e6, 1e6, &[0]);
        set.rows.truncate(3);
        assert!(matches!(
            fit_branch_model(&set, &BranchFitSettings::default()),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn single_branch_is_degenerate() {
        let set = synthetic(2.87e9, 4.95e6, 1e6, &[3]);
        assert!(fit_branch_model(&set, &BranchFitSettings::default()).is_err());
    }

    #[test]
    fn assignment_tie_prefers_lower_branch() {
        // E = 0, g = 0, rf = 0: all four branches coincide pairwise at D
        let p = [0.0, 0.0, 0.0];
        let k = assign(&p, 0.0, 0.0);
        assert!(branch_value(&p, 0.0, k) <= branch_value(&p, 0.0, 0));
    }
}
