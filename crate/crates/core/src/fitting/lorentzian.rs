//! Multi-Lorentzian dip detection and fitting.
//!
//! Model: `baseline − Σ_k depth_k · hwhm_k² / ((x − center_k)² + hwhm_k²)`.
//! Internally x is mapped to `(x − x_0)/span` and y to `y / max|y|`, so fits
//! are invariant under rescaling of either axis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{minimize, LeastSquares, LmSettings};

/// Upper bound on dips per row: two dressed pairs.
pub const MAX_DIPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dip {
    pub center: f64,
    pub hwhm: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianModel {
    pub baseline: f64,
    pub dips: Vec<Dip>,
}

impl LorentzianModel {
    pub fn eval(&self, x: f64) -> f64 {
        self.baseline
            - self
                .dips
                .iter()
                .map(|d| {
                    let w2 = d.hwhm * d.hwhm;
                    d.depth * w2 / ((x - d.center) * (x - d.center) + w2)
                })
                .sum::<f64>()
    }

    pub fn sort_by_center(&mut self) {
        self.dips.sort_by(|a, b| a.center.total_cmp(&b.center));
    }

    pub fn from_guesses(baseline: f64, guesses: &[DipGuess]) -> Self {
        Self {
            baseline,
            dips: guesses
                .iter()
                .map(|g| Dip {
                    center: g.center,
                    hwhm: g.hwhm,
                    depth: g.depth,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipErrors {
    pub center: f64,
    pub hwhm: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Fitted model, dips sorted by ascending center.
    pub model: LorentzianModel,
    pub baseline_error: f64,
    /// Standard errors, same order as `model.dips`.
    pub errors: Vec<DipErrors>,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
    /// A center was pulled back into the data window during the fit.
    pub clamped: bool,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub max_iterations: usize,
    pub ftol: f64,
    pub xtol: f64,
    /// Fit one common width for all dips instead of independent widths.
    pub shared_width: bool,
}

impl Default for FitSettings {
    fn default() -> Self {
        let lm = LmSettings::default();
        Self {
            max_iterations: lm.max_iterations,
            ftol: lm.ftol,
            xtol: lm.xtol,
            shared_width: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipGuess {
    pub index: usize,
    pub center: f64,
    pub depth: f64,
    pub hwhm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectSettings {
    /// Minimum depth below the median, in units of the noise sigma.
    pub threshold_sigma: f64,
    pub max_dips: usize,
}

impl Default for DetectSettings {
    fn default() -> Self {
        Self {
            threshold_sigma: 3.0,
            max_dips: MAX_DIPS,
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn interpolate_crossing(x0: f64, y0: f64, x1: f64, y1: f64, level: f64) -> f64 {
    if y1 == y0 {
        return 0.5 * (x0 + x1);
    }
    x0 + (level - y0) * (x1 - x0) / (y1 - y0)
}

/// Half-depth crossings around index `i`; `None` on a side that never
/// recovers above the half-depth level.
fn half_depth_crossings(x: &[f64], y: &[f64], i: usize, level: f64) -> (Option<f64>, Option<f64>) {
    let mut left = None;
    for k in (0..i).rev() {
        if y[k] >= level {
            left = Some(interpolate_crossing(x[k + 1], y[k + 1], x[k], y[k], level));
            break;
        }
    }
    let mut right = None;
    for k in i + 1..y.len() {
        if y[k] >= level {
            right = Some(interpolate_crossing(x[k - 1], y[k - 1], x[k], y[k], level));
            break;
        }
    }
    (left, right)
}

/// Local minima deeper than `threshold_sigma · noise_sigma` below the row
/// median, deepest first, at most `max_dips`. A shallower minimum is only kept
/// if it is separated from every deeper accepted dip by a ridge rising more
/// than the same threshold above it.
/// Centered moving average of odd width `w`, truncated at the edges.
fn boxcar(y: &[f64], w: usize) -> Vec<f64> {
    let half = w / 2;
    (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(y.len() - 1);
            y[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

pub fn detect_dips(x: &[f64], y: &[f64], noise_sigma: f64, settings: &DetectSettings) -> Vec<DipGuess> {
    let n = y.len();
    if n < 8 || x.len() != n {
        return Vec::new();
    }
    // with noise, minima are located on a boxcar-smoothed copy
    let y = if noise_sigma > 0.0 {
        boxcar(y, (n / 50) | 1)
    } else {
        y.to_vec()
    };
    let y = y.as_slice();
    let baseline = median(y);
    let threshold = (settings.threshold_sigma * noise_sigma).max(1e-12 * baseline.abs().max(f64::MIN_POSITIVE));

    let mut candidates: Vec<usize> = (1..n - 1)
        .filter(|&i| y[i] <= y[i - 1] && y[i] < y[i + 1] && baseline - y[i] > threshold)
        .collect();
    candidates.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));

    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.len() >= settings.max_dips {
            break;
        }
        let separated = accepted.iter().all(|&a| {
            let (lo, hi) = if a < c { (a, c) } else { (c, a) };
            let ridge = y[lo..=hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            ridge - y[c] > threshold
        });
        if separated {
            accepted.push(c);
        }
    }

    let span = x[n - 1] - x[0];
    accepted
        .into_iter()
        .map(|i| {
            let depth = baseline - y[i];
            let level = y[i] + 0.5 * depth;
            let hwhm = match half_depth_crossings(x, y, i, level) {
                (Some(l), Some(r)) => 0.5 * (r - l),
                (Some(l), None) => x[i] - l,
                (None, Some(r)) => r - x[i],
                (None, None) => 0.1 * span,
            };
            let step = (span / (n - 1) as f64).abs();
            DipGuess {
                index: i,
                center: x[i],
                depth,
                hwhm: hwhm.abs().max(0.5 * step),
            }
        })
        .collect()
}

struct Problem<'a> {
    x: Vec<f64>,
    y: &'a [f64],
    y_scale: f64,
    k: usize,
    shared: bool,
}

/// Parameter layout (normalized units):
/// independent widths: [base, (c, w, a) × k]
/// shared width:       [base, w, (c, a) × k]
impl Problem<'_> {
    fn unpack(&self, p: &[f64], j: usize) -> (f64, f64, f64) {
        if self.shared {
            (p[2 + 2 * j], p[1], p[3 + 2 * j])
        } else {
            (p[1 + 3 * j], p[2 + 3 * j], p[3 + 3 * j])
        }
    }

    fn center_index(&self, j: usize) -> usize {
        if self.shared {
            2 + 2 * j
        } else {
            1 + 3 * j
        }
    }

    fn width_index(&self, j: usize) -> usize {
        if self.shared {
            1
        } else {
            2 + 3 * j
        }
    }

    fn depth_index(&self, j: usize) -> usize {
        if self.shared {
            3 + 2 * j
        } else {
            3 + 3 * j
        }
    }
}

const MIN_WIDTH: f64 = 1e-9;
const MAX_WIDTH: f64 = 10.0;

impl LeastSquares for Problem<'_> {
    fn n_params(&self) -> usize {
        if self.shared {
            2 + 2 * self.k
        } else {
            1 + 3 * self.k
        }
    }

    fn n_residuals(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, p: &[f64], r: &mut [f64]) {
        for (i, &x) in self.x.iter().enumerate() {
            let mut model = p[0];
            for j in 0..self.k {
                let (c, w, a) = self.unpack(p, j);
                let w2 = w * w;
                model -= a * w2 / ((x - c) * (x - c) + w2);
            }
            r[i] = model - self.y[i] / self.y_scale;
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        jac.fill(0.0);
        for (i, &x) in self.x.iter().enumerate() {
            jac[(i, 0)] = 1.0;
            for j in 0..self.k {
                let (c, w, a) = self.unpack(p, j);
                let dx = x - c;
                let w2 = w * w;
                let q = dx * dx + w2;
                let q2 = q * q;
                jac[(i, self.center_index(j))] = -a * w2 * 2.0 * dx / q2;
                jac[(i, self.width_index(j))] += -a * 2.0 * w * dx * dx / q2;
                jac[(i, self.depth_index(j))] = -w2 / q;
            }
        }
    }

    fn project(&self, p: &mut [f64]) -> bool {
        let mut clamped_center = false;
        for j in 0..self.k {
            let ci = self.center_index(j);
            if p[ci] < 0.0 || p[ci] > 1.0 || !p[ci].is_finite() {
                p[ci] = if p[ci].is_finite() { p[ci].clamp(0.0, 1.0) } else { 0.5 };
                clamped_center = true;
            }
            let di = self.depth_index(j);
            if !(p[di] >= 0.0) {
                p[di] = 0.0;
            }
        }
        let widths: Vec<usize> = if self.shared {
            vec![1]
        } else {
            (0..self.k).map(|j| self.width_index(j)).collect()
        };
        for wi in widths {
            let w = p[wi].abs();
            p[wi] = if w.is_finite() { w.clamp(MIN_WIDTH, MAX_WIDTH) } else { MAX_WIDTH };
        }
        clamped_center
    }
}

/// Least-squares fit of `init.dips.len()` Lorentzian dips to the row
/// `(x, y)`. Numerical failure is reported through `converged = false`;
/// malformed inputs are errors.
pub fn fit_lorentzians(x: &[f64], y: &[f64], init: &LorentzianModel, settings: &FitSettings) -> Result<FitResult> {
    if init.dips.is_empty() {
        return Err(Error::invalid("init", "need at least one dip"));
    }
    if x.len() != y.len() {
        return Err(Error::invalid("row", "x and y lengths differ"));
    }
    let k = init.dips.len();
    let n_params = if settings.shared_width { 2 + 2 * k } else { 1 + 3 * k };
    if x.len() <= n_params {
        return Err(Error::InsufficientData {
            needed: n_params + 1,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { name: "row" });
    }

    let x0 = x[0];
    let span = x[x.len() - 1] - x0;
    if span == 0.0 {
        return Err(Error::invalid("row", "frequency axis has zero span"));
    }
    let y_scale = {
        let m = y.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        if m > 0.0 {
            m
        } else {
            1.0
        }
    };
    let problem = Problem {
        x: x.iter().map(|v| (v - x0) / span).collect(),
        y,
        y_scale,
        k,
        shared: settings.shared_width,
    };

    let mut p0 = vec![0.0; n_params];
    p0[0] = init.baseline / y_scale;
    for (j, d) in init.dips.iter().enumerate() {
        p0[problem.center_index(j)] = (d.center - x0) / span;
        p0[problem.depth_index(j)] = d.depth / y_scale;
        if !settings.shared_width {
            p0[problem.width_index(j)] = d.hwhm / span;
        }
    }
    if settings.shared_width {
        p0[1] = init.dips.iter().map(|d| d.hwhm).sum::<f64>() / k as f64 / span;
    }

    let lm = LmSettings {
        max_iterations: settings.max_iterations,
        ftol: settings.ftol,
        xtol: settings.xtol,
    };
    let out = minimize(&problem, &p0, &lm);

    let p = &out.params;
    let mut dips: Vec<(Dip, DipErrors)> = (0..k)
        .map(|j| {
            let (c, w, a) = problem.unpack(p, j);
            let dip = Dip {
                center: x0 + span * c,
                hwhm: (span * w).abs(),
                depth: y_scale * a,
            };
            let err = DipErrors {
                center: span.abs() * out.stderr[problem.center_index(j)],
                hwhm: span.abs() * out.stderr[problem.width_index(j)],
                depth: y_scale * out.stderr[problem.depth_index(j)],
            };
            (dip, err)
        })
        .collect();
    dips.sort_by(|a, b| a.0.center.total_cmp(&b.0.center));

    Ok(FitResult {
        model: LorentzianModel {
            baseline: y_scale * p[0],
            dips: dips.iter().map(|d| d.0).collect(),
        },
        baseline_error: y_scale * out.stderr[0],
        errors: dips.iter().map(|d| d.1).collect(),
        rss: out.rss * y_scale * y_scale,
        converged: out.converged,
        iterations: out.iterations,
        clamped: out.projected,
        message: out.message,
    })
}

/// Detect dips and fit them in one go. `None` if no dip was found.
pub fn detect_and_fit(
    x: &[f64],
    y: &[f64],
    noise_sigma: f64,
    detect: &DetectSettings,
    fit: &FitSettings,
) -> Result<Option<FitResult>> {
    let guesses = detect_dips(x, y, noise_sigma, detect);
    if guesses.is_empty() {
        return Ok(None);
    }
    let init = LorentzianModel::from_guesses(median(y), &guesses);
    fit_lorentzians(x, y, &init, fit).map(Some)
}
